#pragma once

// Paper-scale parameter sets. Widths grow linearly with the ellipticity
// angle, the orientation scales as sin|2 chi| and the alignment as cos 2chi.

#include "bistab/instrument.hpp"

namespace bistab {

struct PresetParams {
  double gamma_over_2pi = kGammaWeakPump;  // Hz/nT
  // The alignment contour's negative wings leak into the fitted antisymmetric
  // contour, so the orientation is set wider than the alignment to keep the
  // two fitted widths separable. Fitted slopes land near 5 nT/deg for both.
  double width_or0 = 15.0;     // nT, orientation HWHM at chi = 0
  double width_or_slope = 8.0; // nT/deg
  double width_al0 = 7.0;      // nT, alignment HWHM at chi = 0
  double width_al_slope = 2.0; // nT/deg
  double my0 = 6.98e-4;        // threshold on M_y
  double b_eff = 1.1;          // nT, frozen effective field
  double serf_field = 28.0;    // nT
  double tau_flip = 0.0;       // s, 0 = default from b_eff
  double photocurrent = 6.0;   // uA, S_T baseline
  double alignment_amp = 0.3;  // uA, peak alignment part of S_B
  double transmission_coeff = 0.2;  // uA per unit m0c
  double balance_chi = 0.2;    // deg; orientation and alignment demod amplitudes equal here
};

/// Spin system at ellipticity chi (degrees).
SpinSystem preset_system(double chi_deg, const PresetParams& pp = {});

/// Mixing coefficients calibrated against the steady-state response.
SignalMix preset_mix(const PresetParams& pp = {}, double mod_amplitude = 2.5);

Physics preset_physics(double chi_deg, const PresetParams& pp = {});

/// Default scan: 2.5 nT / 5 Hz modulation, triangle sweep over +-25 nT at 0.1 nT/s.
ScanConfig preset_scan(double chi_deg, double by = 0.0, double bz = 0.0);

/// Lock-in cutoff used with the preset scans, Hz.
inline constexpr double kPresetCutoff = 2.0;

}  // namespace bistab
