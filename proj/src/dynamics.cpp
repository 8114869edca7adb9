#include "bistab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace bistab {

void CouplingParams::validate() const {
  if (!std::isfinite(kappa)) throw std::invalid_argument("CouplingParams: kappa must be finite");
  if (!(my0 >= 0.0)) throw std::invalid_argument("CouplingParams: my0 must be >= 0");
  if (!std::isfinite(tau_flip) || tau_flip < 0.0) {
    throw std::invalid_argument("CouplingParams: tau_flip must be >= 0 (0 selects the default)");
  }
  if (!(back_action >= 0.0)) throw std::invalid_argument("CouplingParams: back_action must be >= 0");
  if (!std::isfinite(serf_field)) throw std::invalid_argument("CouplingParams: serf_field must be finite");
}

double collective_factor(const CouplingParams& c, double b_perp_nt) {
  if (c.serf_field <= 0.0) return 1.0;
  const double r = b_perp_nt / c.serf_field;
  return 1.0 / (1.0 + r * r);
}

double LatchState::effective_sign() const {
  if (!flipping) return static_cast<double>(sign);
  return -static_cast<double>(sign) * std::cos(kPi * flip_progress);
}

void SpinSystem::validate() const {
  orientation.validate();
  alignment.validate();
  coupling.validate();
  if ((alignment.pump_axis - Vec3::UnitX()).norm() > 1e-12) {
    throw std::invalid_argument("SpinSystem: alignment pump must be polarized along x");
  }
}

double max_stable_step(const SpinSystem& sys, double peak_field_nt) {
  double bound = std::min(0.1 / sys.orientation.relax_rate, 0.1 / sys.alignment.relax_rate);
  const double w = std::max(sys.orientation.gamma(), sys.alignment.gamma()) * std::abs(peak_field_nt);
  if (w > 0.0) bound = std::min(bound, 0.05 / w);
  return bound;
}

namespace {

double perp_field(const FieldVector& f) { return std::hypot(f.by, f.bz); }

}  // namespace

double effective_threshold(const SpinSystem& sys, const FieldVector& slow) {
  const double bp = perp_field(slow);
  const double bn = sys.orientation.gamma() * bp / sys.orientation.relax_rate;
  return sys.coupling.my0 * collective_factor(sys.coupling, bp) / (1.0 + bn * bn);
}

double frozen_field(const SpinSystem& sys, const FieldVector& slow) {
  if (sys.orientation.m0 == 0.0) return 0.0;
  return std::abs(sys.coupling.kappa) * sys.coupling.my0 *
         collective_factor(sys.coupling, perp_field(slow));
}

double raised_cosine_10_90_fraction() { return 1.0 - 2.0 * std::acos(0.8) / kPi; }

double flip_time_constant(const SpinSystem& sys, const FieldVector& slow) {
  if (sys.coupling.tau_flip > 0.0) return sys.coupling.tau_flip;
  const double bf = frozen_field(sys, slow);
  if (bf <= 0.0) return 0.0;
  return 2.0 / (sys.alignment.gamma() * bf * raised_cosine_10_90_fraction());
}

namespace {

// Packed state: orientation(3), alignment(5), detector(3).
using Packed = Eigen::Matrix<double, 11, 1>;

Packed pack(const CoupledState& s) {
  Packed y;
  y.segment<3>(0) = s.orientation.vec();
  y.segment<5>(3) = s.alignment.vec();
  y.segment<3>(8) = s.detector.vec();
  return y;
}

double progress_after(const LatchState& l, double elapsed, double tau) {
  if (!l.flipping) return 1.0;
  if (tau <= 0.0) return 1.0;
  return std::min(1.0, l.flip_progress + elapsed / (kPi * tau));
}

double sign_after(const LatchState& l, double elapsed, double tau) {
  if (!l.flipping) return static_cast<double>(l.sign);
  return -static_cast<double>(l.sign) * std::cos(kPi * progress_after(l, elapsed, tau));
}

// `frozen` is frozen_field(sys, d.slow); it only depends on the transverse slow field.
FieldVector field_on_alignment(const Vec3& orientation, double s_eff, double frozen,
                               const SpinSystem& sys, const DriveField& d, SimMode mode) {
  if (mode == SimMode::ode) {
    return FieldVector::from(d.applied.vec() + sys.coupling.kappa * orientation);
  }
  FieldVector f = d.applied;
  f.by += s_eff * frozen;
  return f;
}

Packed rate(const Packed& y, double s_eff, double frozen, const SpinSystem& sys,
            const DriveField& d, SimMode mode, const Spin2Generators& g) {
  Packed dy;
  const Vec3 m1 = y.segment<3>(0);
  const Vec5 m2 = y.segment<5>(3);
  const double scale =
      sys.coupling.back_action > 0.0 ? 1.0 / (1.0 + sys.coupling.back_action * m2.norm()) : 1.0;
  dy.segment<3>(0) = orientation_rate(m1, d.applied, sys.orientation, scale);
  dy.segment<5>(3) =
      alignment_rate(m2, field_on_alignment(m1, s_eff, frozen, sys, d, mode), sys.alignment, g);
  dy.segment<3>(8) = orientation_rate(y.segment<3>(8), d.slow, sys.orientation);
  return dy;
}

const Spin2Generators& generators() {
  static const Spin2Generators g = build_spin2_generators();
  return g;
}

}  // namespace

StepOutcome advance_coupled(const CoupledState& s, const StageDrives& d, const SpinSystem& sys,
                            SimMode mode, double dt) {
  const Spin2Generators& g = generators();
  const double tau = flip_time_constant(sys, d.start.slow);

  const double frozen = frozen_field(sys, d.start.slow);
  const double extra =
      mode == SimMode::ode ? std::abs(sys.coupling.kappa) * s.orientation.norm() : frozen;
  const double peak = std::max({d.start.applied.norm(), d.mid.applied.norm(),
                                d.end.applied.norm()}) + extra;
  const double bound = max_stable_step(sys, peak);
  if (dt > bound * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "step_coupled: dt = " << dt << " s exceeds the stability bound " << bound
        << " s (min(0.1/Gamma, 0.05/(gamma*|B|)) with |B| = " << peak << " nT)";
    throw StepSizeError(msg.str());
  }

  const Packed y0 = pack(s);
  const double s0 = sign_after(s.latch, 0.0, tau);
  const double sh = sign_after(s.latch, 0.5 * dt, tau);
  const double s1 = sign_after(s.latch, dt, tau);
  const Packed k1 = rate(y0, s0, frozen, sys, d.start, mode, g);
  const Packed k2 = rate(y0 + 0.5 * dt * k1, sh, frozen, sys, d.mid, mode, g);
  const Packed k3 = rate(y0 + 0.5 * dt * k2, sh, frozen, sys, d.mid, mode, g);
  const Packed k4 = rate(y0 + dt * k3, s1, frozen, sys, d.end, mode, g);
  const Packed y1 = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  StepOutcome out;
  CoupledState& n = out.state;
  n.t = s.t + dt;
  n.orientation = OrientationMoment::from(y1.segment<3>(0));
  n.alignment = AlignmentMultipole::from(y1.segment<5>(3));
  n.detector = OrientationMoment::from(y1.segment<3>(8));
  n.latch = s.latch;
  if (n.latch.flipping) {
    n.latch.flip_progress = progress_after(s.latch, dt, tau);
    if (n.latch.flip_progress >= 1.0) {
      n.latch.flip_progress = 1.0;
      n.latch.flipping = false;
    }
  }
  if (mode != SimMode::latch) return out;

  const double thr = effective_threshold(sys, d.end.slow);
  const double before = s.detector.my;
  const double after = n.detector.my;
  int target = 0;
  if (n.latch.sign < 0 && after >= thr && after > 0.0) target = +1;
  if (n.latch.sign > 0 && after <= -thr && after < 0.0) target = -1;
  if (target == 0) return out;

  const double level = target > 0 ? thr : -thr;
  double frac = 1.0;
  if (after != before) frac = std::clamp((level - before) / (after - before), 0.0, 1.0);
  out.flipped = true;
  out.flip_fraction = frac;

  LatchState& l = n.latch;
  const double start_progress = l.flipping ? 1.0 - l.flip_progress : 0.0;
  l.sign = target;
  const double elapsed = (1.0 - frac) * dt;
  if (tau <= 0.0) {
    l.flipping = false;
    l.flip_progress = 1.0;
  } else {
    l.flipping = true;
    l.flip_progress = std::min(1.0, start_progress + elapsed / (kPi * tau));
    if (l.flip_progress >= 1.0) l.flipping = false;
  }
  return out;
}

FieldVector alignment_field(const CoupledState& s, const SpinSystem& sys, const DriveField& d,
                            SimMode mode) {
  return field_on_alignment(s.orientation.vec(), s.latch.effective_sign(), frozen_field(sys, d.slow),
                            sys, d, mode);
}

CoupledState settle_state(const SpinSystem& sys, const DriveField& d, int sign, SimMode mode) {
  CoupledState s;
  s.orientation = orientation_steady_state(d.applied, sys.orientation);
  s.detector = orientation_steady_state(d.slow, sys.orientation);
  s.latch.sign = sign >= 0 ? 1 : -1;
  s.latch.flipping = false;
  s.latch.flip_progress = 1.0;
  s.alignment = alignment_steady_state(alignment_field(s, sys, d, mode), sys.alignment,
                                       generators());
  return s;
}

CoupledState step_coupled(const CoupledState& s, const DriveFunction& drive,
                          const SpinSystem& sys, SimMode mode, double dt) {
  const StageDrives d{drive(s.t), drive(s.t + 0.5 * dt), drive(s.t + dt)};
  return advance_coupled(s, d, sys, mode, dt).state;
}

CoupledState step_coupled(const CoupledState& s, const FieldVector& applied,
                          const SpinSystem& sys, SimMode mode, double dt) {
  const DriveField d{applied, applied};
  return advance_coupled(s, {d, d, d}, sys, mode, dt).state;
}

double predict_flip_field(const EnsembleParams& orientation, const CouplingParams& c) {
  if (!(orientation.m0 > 0.0)) {
    throw std::domain_error("predict_flip_field: unreachable threshold (no orientation, m0 = 0)");
  }
  if (c.my0 > orientation.m0) {
    throw std::domain_error("predict_flip_field: unreachable threshold (my0 > m0)");
  }
  return orientation.relax_rate * c.my0 / (orientation.gamma() * orientation.m0);
}

double predict_flip_field(const EnsembleParams& orientation, const CouplingParams& c,
                          double b_perp_nt) {
  return predict_flip_field(orientation, c) * collective_factor(c, b_perp_nt);
}

double effective_field_from_transient(double dt_transition, const EnsembleParams& p) {
  if (!(dt_transition > 0.0)) {
    throw std::invalid_argument("effective_field_from_transient: duration must be positive");
  }
  if (std::isinf(dt_transition)) return 0.0;
  return 1.0 / (dt_transition * p.gamma_over_2pi);
}

void SweepProtocol::validate() const {
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw std::invalid_argument("SweepProtocol: rate must be positive");
  }
  if (!(std::abs(ellipticity_deg) <= 45.0)) {
    throw std::invalid_argument("SweepProtocol: |ellipticity| must be <= 45 degrees");
  }
  if (!std::isfinite(bx_start) || !std::isfinite(bx_end) || bx_start == bx_end) {
    throw std::invalid_argument("SweepProtocol: start and end fields must be finite and distinct");
  }
  if (hold_on_zero && !(hold_dwell >= 0.0)) {
    throw std::invalid_argument("SweepProtocol: hold dwell must be >= 0");
  }
}

RampSchedule::RampSchedule(const SweepProtocol& proto, double sample_dt) : dt_(sample_dt) {
  proto.validate();
  if (!(sample_dt > 0.0)) throw std::invalid_argument("RampSchedule: sample step must be positive");

  std::vector<std::pair<double, double>> legs;
  switch (proto.pattern) {
    case SweepPattern::up:
      legs.emplace_back(proto.bx_start, proto.bx_end);
      break;
    case SweepPattern::down:
      legs.emplace_back(proto.bx_end, proto.bx_start);
      break;
    case SweepPattern::triangle:
      legs.emplace_back(proto.bx_start, proto.bx_end);
      legs.emplace_back(proto.bx_end, proto.bx_start);
      break;
  }

  auto steps_for = [&](double seconds) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(seconds / dt_)));
  };
  auto add = [&](double b0, double b1, std::size_t n) {
    segments_.push_back({static_cast<double>(total_steps_) * dt_, n, b0, b1});
    total_steps_ += n;
  };
  for (const auto& [b0, b1] : legs) {
    const bool crosses = (b0 < 0.0 && b1 > 0.0) || (b0 > 0.0 && b1 < 0.0);
    if (proto.hold_on_zero && crosses) {
      add(b0, 0.0, steps_for(std::abs(b0) / proto.rate));
      if (proto.hold_dwell > 0.0) add(0.0, 0.0, steps_for(proto.hold_dwell));
      add(0.0, b1, steps_for(std::abs(b1) / proto.rate));
    } else {
      add(b0, b1, steps_for(std::abs(b1 - b0) / proto.rate));
    }
  }
}

std::size_t RampSchedule::segment_of(std::size_t k) const {
  std::size_t first = 0;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (k < first + segments_[i].samples) return i;
    first += segments_[i].samples;
  }
  return segments_.size() - 1;
}

double RampSchedule::bx_at_index(std::size_t k) const {
  std::size_t first = 0;
  for (const auto& s : segments_) {
    if (k <= first + s.samples) {
      const double tau = static_cast<double>(k - first) / static_cast<double>(s.samples);
      return s.b0 + (s.b1 - s.b0) * tau;
    }
    first += s.samples;
  }
  return segments_.back().b1;
}

double RampSchedule::bx_at(double t) const {
  for (const auto& s : segments_) {
    const double len = static_cast<double>(s.samples) * dt_;
    if (t <= s.t0 + len) {
      const double tau = std::clamp((t - s.t0) / len, 0.0, 1.0);
      return s.b0 + (s.b1 - s.b0) * tau;
    }
  }
  return segments_.back().b1;
}

int RampSchedule::direction_at_index(std::size_t k) const {
  const auto& s = segments_[segment_of(k)];
  if (s.b1 > s.b0) return 1;
  if (s.b1 < s.b0) return -1;
  return 0;
}

double RampSchedule::peak_abs_bx() const {
  double peak = 0.0;
  for (const auto& s : segments_) peak = std::max({peak, std::abs(s.b0), std::abs(s.b1)});
  return peak;
}

std::size_t substeps_for(const SpinSystem& sys, double dt, double peak_field_nt) {
  const double n = std::ceil(dt / max_stable_step(sys, peak_field_nt) * (1.0 - 1e-12));
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

Trajectory run_sweep(const SweepProtocol& proto, const SpinSystem& sys, SimMode mode,
                     const SweepOptions& opts) {
  sys.validate();
  const RampSchedule ramp(proto, opts.sample_dt);
  const double peak_static = std::hypot(proto.static_by, proto.static_bz);
  const double extra = mode == SimMode::ode
                           ? std::abs(sys.coupling.kappa) * std::max(1.0, std::abs(sys.orientation.m0))
                           : frozen_field(sys, {0.0, proto.static_by, proto.static_bz});

  auto field = [&](double bx) {
    const FieldVector f{bx, proto.static_by, proto.static_bz};
    return DriveField{f, f};
  };

  CoupledState state;
  {
    const DriveField d0 = field(ramp.bx_at_index(0));
    int sign = opts.initial_sign;
    if (sign == 0) {
      const double my = orientation_steady_state(d0.slow, sys.orientation).my;
      const double thr = effective_threshold(sys, d0.slow);
      sign = (my >= thr && my > 0.0) ? 1 : -1;
    }
    state = settle_state(sys, d0, sign, mode);
  }

  Trajectory tr;
  tr.sample_dt = opts.sample_dt;
  auto store = [&](const DriveField& d) {
    if (!opts.store_samples) return;
    tr.samples.push_back({state.t, d.applied, alignment_field(state, sys, d, mode),
                          state.orientation, state.alignment, state.latch});
  };
  if (opts.store_samples) tr.samples.reserve(ramp.total_steps() + 1);
  store(field(ramp.bx_at_index(0)));

  const auto& segs = ramp.segments();
  std::size_t k = 0;
  for (const auto& seg : segs) {
    const double n = static_cast<double>(seg.samples);
    const int dir = seg.b1 > seg.b0 ? 1 : (seg.b1 < seg.b0 ? -1 : 0);
    for (std::size_t j = 0; j < seg.samples; ++j, ++k) {
      const double t_sample = static_cast<double>(k) * opts.sample_dt;
      const double bx_a = seg.b0 + (seg.b1 - seg.b0) * (static_cast<double>(j) / n);
      const double bx_b = seg.b0 + (seg.b1 - seg.b0) * (static_cast<double>(j + 1) / n);
      const double local = std::hypot(std::max(std::abs(bx_a), std::abs(bx_b)), peak_static) + extra;
      const std::size_t nsub = substeps_for(sys, opts.sample_dt, local);
      const double h = opts.sample_dt / static_cast<double>(nsub);
      for (std::size_t i = 0; i < nsub; ++i) {
        // Segment-local fractions keep mirrored legs exactly antisymmetric.
        auto at = [&](double sub) {
          const double tau = (static_cast<double>(j) +
                              (static_cast<double>(i) + sub) / static_cast<double>(nsub)) / n;
          return field(seg.b0 + (seg.b1 - seg.b0) * tau);
        };
        const StageDrives d{at(0.0), at(0.5), at(1.0)};
        const double bx_before = d.start.applied.bx;
        StepOutcome o = advance_coupled(state, d, sys, mode, h);
        if (o.flipped) {
          const double bx = bx_before + o.flip_fraction * (d.end.applied.bx - bx_before);
          tr.flips.push_back({state.t + o.flip_fraction * h, bx, o.state.latch.sign, dir});
        }
        state = o.state;
      }
      // Re-anchor time to the sample grid to keep the time base uniform.
      state.t = t_sample + opts.sample_dt;
      store(field(seg.b0 + (seg.b1 - seg.b0) * (static_cast<double>(j + 1) / n)));
    }
  }
  return tr;
}

FlipFields flip_fields(const Trajectory& tr) {
  FlipFields f;
  for (const auto& e : tr.flips) {
    if (e.direction > 0 && !f.up) f.up = e.bx;
    if (e.direction < 0 && !f.down) f.down = e.bx;
  }
  return f;
}

}  // namespace bistab
