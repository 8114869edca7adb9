#include "bistab/instrument.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace bistab {

void ScanConfig::validate() const {
  ramp.validate();
  if (!(mod_amplitude >= 0.0) || !std::isfinite(mod_amplitude)) {
    throw std::invalid_argument("ScanConfig: mod_amplitude must be >= 0");
  }
  if (!(mod_freq > 0.0) || !std::isfinite(mod_freq)) {
    throw std::invalid_argument("ScanConfig: mod_freq must be positive");
  }
  if (!(sample_rate >= 20.0 * mod_freq) || !std::isfinite(sample_rate)) {
    throw std::invalid_argument("ScanConfig: sample_rate must be at least 20 x mod_freq");
  }
  if (!(noise_rms >= 0.0) || !std::isfinite(noise_rms)) {
    throw std::invalid_argument("ScanConfig: noise_rms must be >= 0");
  }
  if (!std::isfinite(drift_rate)) throw std::invalid_argument("ScanConfig: drift_rate must be finite");
}

bool DemodRecord::has_branch(Branch b) const {
  return std::find(branch.begin(), branch.end(), b) != branch.end();
}

SignalPair steady_signals(const Physics& ph, const FieldVector& b, int sign) {
  const CoupledState s = settle_state(ph.system, {b, b}, sign, ph.mode);
  return signals_from_state(s.orientation, s.alignment, ph.mix);
}

ScanRecord synthesize_record(const ScanConfig& cfg, const Physics& ph) {
  cfg.validate();
  ph.system.validate();
  const SpinSystem& sys = ph.system;
  const double dt = 1.0 / cfg.sample_rate;
  const RampSchedule ramp(cfg.ramp, dt);
  const double w = 2.0 * kPi * cfg.mod_freq;

  const double extra = ph.mode == SimMode::ode
                           ? std::abs(sys.coupling.kappa) * std::max(1.0, std::abs(sys.orientation.m0))
                           : frozen_field(sys, {0.0, cfg.ramp.static_by, cfg.ramp.static_bz});
  const double drift_span = std::abs(cfg.drift_rate) * ramp.duration();
  const double perp = std::hypot(cfg.ramp.static_by, cfg.ramp.static_bz);

  auto drive = [&](double ramp_bx, double t) {
    const double slow = ramp_bx + cfg.drift_rate * t;
    const FieldVector s{slow, cfg.ramp.static_by, cfg.ramp.static_bz};
    FieldVector a = s;
    a.bx += cfg.mod_amplitude * std::sin(w * t);
    return DriveField{a, s};
  };

  ScanRecord rec;
  rec.config = cfg;
  rec.physics = ph;
  const std::size_t n = ramp.total_steps() + 1;
  rec.t.reserve(n);
  rec.bx_ramp.reserve(n);
  rec.st_raw.reserve(n);
  rec.sb_raw.reserve(n);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto record = [&](const CoupledState& s, double t, double bx) {
    SignalPair sig = signals_from_state(s.orientation, s.alignment, ph.mix);
    if (cfg.noise_rms > 0.0) {
      sig.st += cfg.noise_rms * gauss(rng);
      sig.sb += cfg.noise_rms * gauss(rng);
    }
    rec.t.push_back(t);
    rec.bx_ramp.push_back(bx);
    rec.st_raw.push_back(sig.st);
    rec.sb_raw.push_back(sig.sb);
  };

  const DriveField d0 = drive(ramp.bx_at_index(0), 0.0);
  int sign = -1;
  {
    const double my = orientation_steady_state(d0.slow, sys.orientation).my;
    if (my >= effective_threshold(sys, d0.slow) && my > 0.0) sign = 1;
  }
  CoupledState state = settle_state(sys, d0, sign, ph.mode);
  record(state, 0.0, d0.slow.bx);

  std::size_t k = 0;
  for (const auto& seg : ramp.segments()) {
    const double nseg = static_cast<double>(seg.samples);
    const int dir = seg.b1 > seg.b0 ? 1 : (seg.b1 < seg.b0 ? -1 : 0);
    for (std::size_t j = 0; j < seg.samples; ++j, ++k) {
      const double bx_a = seg.b0 + (seg.b1 - seg.b0) * (static_cast<double>(j) / nseg);
      const double bx_b = seg.b0 + (seg.b1 - seg.b0) * (static_cast<double>(j + 1) / nseg);
      const double local_x = std::max(std::abs(bx_a), std::abs(bx_b)) + drift_span + cfg.mod_amplitude;
      const std::size_t nsub = substeps_for(sys, dt, std::hypot(local_x, perp) + extra);
      const double h = dt / static_cast<double>(nsub);
      for (std::size_t i = 0; i < nsub; ++i) {
        auto at = [&](double sub) {
          const double u = static_cast<double>(i) + sub;
          const double tau = (static_cast<double>(j) + u / static_cast<double>(nsub)) / nseg;
          const double t = (static_cast<double>(k) + u / static_cast<double>(nsub)) * dt;
          return drive(seg.b0 + (seg.b1 - seg.b0) * tau, t);
        };
        const StageDrives d{at(0.0), at(0.5), at(1.0)};
        const StepOutcome o = advance_coupled(state, d, sys, ph.mode, h);
        if (o.flipped) {
          const double bx = d.start.slow.bx + o.flip_fraction * (d.end.slow.bx - d.start.slow.bx);
          rec.flips.push_back({state.t + o.flip_fraction * h, bx, o.state.latch.sign, dir});
        }
        state = o.state;
      }
      const double t = static_cast<double>(k + 1) * dt;
      state.t = t;
      record(state, t, seg.b0 + (seg.b1 - seg.b0) * (static_cast<double>(j + 1) / nseg));
    }
  }
  return rec;
}

std::vector<Branch> branch_labels(const std::vector<double>& bx) {
  std::vector<Branch> out(bx.size(), Branch::up);
  if (bx.size() < 2) return out;
  // Label sample k by the step leaving it; the last sample takes the final direction.
  Branch cur = Branch::up;
  for (std::size_t k = 0; k + 1 < bx.size(); ++k) {
    if (bx[k + 1] != bx[k]) {
      cur = bx[k + 1] > bx[k] ? Branch::up : Branch::down;
      break;
    }
  }
  for (std::size_t k = 0; k + 1 < bx.size(); ++k) {
    if (bx[k + 1] > bx[k]) cur = Branch::up;
    else if (bx[k + 1] < bx[k]) cur = Branch::down;
    out[k] = cur;
  }
  out.back() = cur;
  return out;
}

namespace {

void check_cutoff(double cutoff, double fs) {
  if (!(fs > 0.0) || !std::isfinite(fs)) throw std::invalid_argument("lowpass: sample rate must be positive");
  if (!(cutoff > 0.0) || !(cutoff < 0.5 * fs)) {
    throw std::invalid_argument("lowpass: cutoff must satisfy 0 < cutoff < sample_rate/2");
  }
}

// One-pole coefficient r such that four passes (two sections, forward and
// backward) put the overall magnitude at 1/sqrt(2) at the cutoff.
double pole_for(double cutoff, double fs) {
  const double g = std::pow(2.0, -0.25);  // per-section |H|^2 at cutoff
  const double c = std::cos(2.0 * kPi * cutoff / fs);
  const double a = 1.0 - g * c;
  const double b = 1.0 - g;
  return (a - std::sqrt(a * a - b * b)) / b;
}

void one_pole(std::vector<double>& y, double r) {
  const double alpha = 1.0 - r;
  double s = y.front();
  for (double& v : y) {
    s += alpha * (v - s);
    v = s;
  }
}

}  // namespace

double lowpass_gain(double f, double cutoff, double fs) {
  check_cutoff(cutoff, fs);
  const double r = pole_for(cutoff, fs);
  const double c = std::cos(2.0 * kPi * f / fs);
  const double h2 = (1.0 - r) * (1.0 - r) / (1.0 - 2.0 * r * c + r * r);
  return h2 * h2;
}

std::vector<double> lowpass_filter(const std::vector<double>& x, double cutoff, double fs) {
  check_cutoff(cutoff, fs);
  if (x.empty()) return {};
  const std::size_t n = x.size();
  const double r = pole_for(cutoff, fs);
  const std::size_t pad = static_cast<std::size_t>(std::ceil(12.0 / (1.0 - r)));

  // Odd reflection about each end keeps level and slope continuous.
  std::vector<double> y;
  y.reserve(n + 2 * pad);
  for (std::size_t j = pad; j >= 1; --j) y.push_back(2.0 * x.front() - x[std::min(j, n - 1)]);
  y.insert(y.end(), x.begin(), x.end());
  for (std::size_t j = 1; j <= pad; ++j) y.push_back(2.0 * x.back() - x[n - 1 - std::min(j, n - 1)]);

  one_pole(y, r);
  one_pole(y, r);
  std::reverse(y.begin(), y.end());
  one_pole(y, r);
  one_pole(y, r);
  std::reverse(y.begin(), y.end());
  return {y.begin() + static_cast<std::ptrdiff_t>(pad),
          y.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

namespace {

// Centred moving average over whole modulation periods (trapezoid ends), a
// comb notch at every harmonic. Returns the input unchanged when the period
// is not an integer number of samples.
std::vector<double> period_average(const std::vector<double>& x, double f, double fs) {
  const double spp = fs / f;
  std::size_t m = static_cast<std::size_t>(std::llround(spp));
  if (m < 2 || std::abs(spp - static_cast<double>(m)) > 1e-9 * spp || x.size() < 2 * m + 1) return x;
  if (m % 2 == 1) m *= 2;
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(m / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  auto at = [&](std::ptrdiff_t i) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return x[static_cast<std::size_t>(i)];
  };
  std::vector<double> out(x.size());
  const double norm = 1.0 / static_cast<double>(m);
  double run = 0.0;
  for (std::ptrdiff_t i = -half + 1; i <= half - 1; ++i) run += at(i);
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    out[static_cast<std::size_t>(k)] = norm * (run + 0.5 * (at(k - half) + at(k + half)));
    run += at(k + half) - at(k - half + 1);
  }
  return out;
}

void check_record(const ScanRecord& rec) {
  const std::size_t n = rec.t.size();
  if (n < 2 || rec.bx_ramp.size() != n || rec.st_raw.size() != n || rec.sb_raw.size() != n) {
    throw std::invalid_argument("lock-in: record columns are empty or of unequal length");
  }
}

std::size_t auto_decimation(double cutoff, double fs) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fs / (20.0 * cutoff))));
}

}  // namespace

DemodRecord lockin_demodulate(const ScanRecord& rec, double phase_deg, double lpf_cutoff,
                              const DemodOptions& opts) {
  check_record(rec);
  const double f = rec.config.mod_freq;
  const double fs = rec.config.sample_rate;
  if (!(lpf_cutoff < 0.5 * f)) {
    throw std::invalid_argument("lock-in: low-pass cutoff must be below mod_freq/2");
  }
  check_cutoff(lpf_cutoff, fs);

  const double phi = phase_deg * kPi / 180.0;
  const double w = 2.0 * kPi * f;
  std::vector<double> prod(rec.size());
  for (std::size_t k = 0; k < rec.size(); ++k) prod[k] = rec.sb_raw[k] * std::sin(w * rec.t[k] + phi);
  if (opts.period_average) prod = period_average(prod, f, fs);
  const std::vector<double> sb = lowpass_filter(prod, lpf_cutoff, fs);
  const std::vector<double> st = lowpass_filter(rec.st_raw, lpf_cutoff, fs);
  const std::vector<Branch> labels = branch_labels(rec.bx_ramp);

  const std::size_t step = opts.decimate ? opts.decimate : auto_decimation(lpf_cutoff, fs);
  const double trim = opts.trim_seconds >= 0.0 ? opts.trim_seconds : 2.0 / lpf_cutoff;
  const double t_lo = rec.t.front() + trim;
  const double t_hi = rec.t.back() - trim;
  if (!(t_hi > t_lo)) throw std::invalid_argument("lock-in: record shorter than the filter settling time");
  DemodRecord out;
  for (std::size_t k = 0; k < rec.size(); k += step) {
    if (rec.t[k] < t_lo || rec.t[k] > t_hi) continue;
    out.t.push_back(rec.t[k]);
    out.bx.push_back(rec.bx_ramp[k]);
    out.st.push_back(st[k]);
    out.sb.push_back(sb[k]);
    out.branch.push_back(labels[k]);
  }
  return out;
}

double calibrate_phase(const ScanRecord& rec, double lpf_cutoff) {
  check_record(rec);
  const double f = rec.config.mod_freq;
  const double fs = rec.config.sample_rate;
  if (!(lpf_cutoff < 0.5 * f)) {
    throw std::invalid_argument("calibrate_phase: low-pass cutoff must be below mod_freq/2");
  }
  const double w = 2.0 * kPi * f;
  std::vector<double> pi(rec.size()), pq(rec.size());
  for (std::size_t k = 0; k < rec.size(); ++k) {
    pi[k] = rec.sb_raw[k] * std::sin(w * rec.t[k]);
    pq[k] = rec.sb_raw[k] * std::cos(w * rec.t[k]);
  }
  const auto i = lowpass_filter(period_average(pi, f, fs), lpf_cutoff, fs);
  const auto q = lowpass_filter(period_average(pq, f, fs), lpf_cutoff, fs);
  double sii = 0.0, sqq = 0.0, siq = 0.0;
  for (std::size_t k = 0; k < i.size(); ++k) {
    sii += i[k] * i[k];
    sqq += q[k] * q[k];
    siq += i[k] * q[k];
  }
  // Output I cos(phi) + Q sin(phi); the energy maximum is the principal axis.
  double phi = 0.5 * std::atan2(2.0 * siq, sii - sqq);
  if (phi <= -0.5 * kPi) phi += kPi;
  if (phi > 0.5 * kPi) phi -= kPi;
  return phi * 180.0 / kPi;
}

}  // namespace bistab
