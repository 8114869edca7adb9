#include "bistab/presets.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace bistab {

SpinSystem preset_system(double chi_deg, const PresetParams& pp) {
  if (!(std::abs(chi_deg) <= 45.0)) throw std::invalid_argument("preset_system: |chi| must be <= 45 deg");
  const double chi = chi_deg * kPi / 180.0;
  const double achi = std::abs(chi_deg);
  SpinSystem s;
  s.orientation.gamma_over_2pi = pp.gamma_over_2pi;
  s.orientation.relax_rate = 2.0 * kPi * pp.gamma_over_2pi * (pp.width_or0 + pp.width_or_slope * achi);
  s.orientation.m0 = std::sin(std::abs(2.0 * chi));
  s.orientation.pump_axis = Vec3(0.0, 0.0, chi_deg < 0.0 ? -1.0 : 1.0);
  s.alignment.gamma_over_2pi = pp.gamma_over_2pi;
  s.alignment.relax_rate = 2.0 * kPi * pp.gamma_over_2pi * (pp.width_al0 + pp.width_al_slope * achi);
  s.alignment.m0 = 0.0;
  s.alignment.a0 = std::cos(2.0 * chi);
  s.alignment.pump_axis = Vec3::UnitX();
  s.coupling.my0 = pp.my0;
  s.coupling.kappa = pp.my0 > 0.0 ? pp.b_eff / pp.my0 : 0.0;
  s.coupling.tau_flip = pp.tau_flip;
  s.coupling.serf_field = pp.serf_field;
  return s;
}

namespace {

// First-harmonic lock-in output (no x2) of s(bx + a sin wt), by quadrature.
double first_harmonic(const std::function<double(double)>& s, double bx, double a) {
  const int n = 64;
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    const double ph = 2.0 * kPi * k / n;
    acc += s(bx + a * std::sin(ph)) * std::sin(ph);
  }
  return acc / n;
}

double peak_abs(const std::function<double(double)>& f, double lo, double hi) {
  double m = 0.0;
  for (int i = 0; i <= 400; ++i) m = std::max(m, std::abs(f(lo + (hi - lo) * i / 400.0)));
  return m;
}

}  // namespace

SignalMix preset_mix(const PresetParams& pp, double mod_amplitude) {
  const SpinSystem s = preset_system(pp.balance_chi, pp);
  const Spin2Generators g = build_spin2_generators();
  const FieldVector frozen{0.0, pp.b_eff, 0.0};
  auto m2s = [&](double bx) {
    return alignment_steady_state(FieldVector{bx, 0.0, 0.0} + frozen, s.alignment, g).m2s;
  };
  auto mz = [&](double bx) { return orientation_steady_state({bx, 0.0, 0.0}, s.orientation).mz; };
  const double span = 4.0 * std::max(s.alignment.width_nt(), s.orientation.width_nt());

  SignalMix mix;
  mix.baseline_t = pp.photocurrent;
  mix.c_t = pp.transmission_coeff;
  mix.c_al = pp.alignment_amp / peak_abs(m2s, -span, span);
  if (mod_amplitude > 0.0) {
    auto h_al = [&](double bx) { return first_harmonic(m2s, bx, mod_amplitude); };
    auto h_or = [&](double bx) { return first_harmonic(mz, bx, mod_amplitude); };
    mix.c_or = mix.c_al * peak_abs(h_al, -span, span) / peak_abs(h_or, -span, span);
  } else {
    mix.c_or = mix.c_al * peak_abs(m2s, -span, span) / std::max(peak_abs(mz, -span, span), 1e-300);
  }
  return mix;
}

Physics preset_physics(double chi_deg, const PresetParams& pp) {
  Physics ph;
  ph.system = preset_system(chi_deg, pp);
  ph.mix = preset_mix(pp);
  ph.mode = SimMode::latch;
  return ph;
}

ScanConfig preset_scan(double chi_deg, double by, double bz) {
  ScanConfig c;
  c.mod_amplitude = 2.5;
  c.mod_freq = 5.0;
  c.sample_rate = 250.0;
  c.ramp.bx_start = -25.0;
  c.ramp.bx_end = 25.0;
  c.ramp.rate = 0.1;
  c.ramp.pattern = SweepPattern::triangle;
  c.ramp.static_by = by;
  c.ramp.static_bz = bz;
  c.ramp.ellipticity_deg = chi_deg;
  c.noise_rms = 0.0;
  c.seed = 1;
  return c;
}

}  // namespace bistab
