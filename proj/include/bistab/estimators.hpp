#pragma once

// Back-of-envelope physics: pump power split, broadening budget, point-dipole
// field of a polarized sub-ensemble, its volume, and Cs vapor density.

#include <string>

namespace bistab {

inline constexpr double kBohrMagneton = 9.2740100783e-24;  // J/T
inline constexpr double kBoltzmann = 1.380649e-23;         // J/K
inline constexpr double kMu0Over4Pi = 1e-7;                // T m/A

struct BroadeningBudget {
  double p_in = 2.0;      // mW
  double chi_deg = 0.0;   // deg
  double k_lb = 30.0;     // nT/mW, light broadening
  double k_serf = 0.3;    // nT/nT
  double k_ls = 90.0;     // nT/mW, light shift
  void validate() const;
};

/// p_in sin|2 chi|, mW.
double circular_power(double p_in_mw, double chi_deg);

/// Small-chi slope of the width, nT per degree: (k_lb + k_serf k_ls) p_in 2 pi/180.
double broadening_rate(const BroadeningBudget& b);

/// Width added at b.chi_deg by the full (not linearized) budget, nT.
double broadening_at(const BroadeningBudget& b);

enum class DipoleGeometry { on_axis, equatorial };

struct DipoleConfig {
  double n_atoms = 5e11;
  double distance_mm = 1.0;
  double moment_per_atom = kBohrMagneton;  // J/T
  DipoleGeometry geometry = DipoleGeometry::on_axis;
  void validate() const;
};

/// Point-dipole field magnitude, nT.
double dipole_field(const DipoleConfig& d);

struct EnsembleVolume {
  double volume_mm3 = 0.0;
  double side_mm = 0.0;

  /// l / (L/2); the point-dipole picture needs this well above 1.
  double validity_ratio(double distance_mm) const;
};

/// "satisfied" (ratio >= 3), "marginal" (1..3) or "violated" (< 1).
std::string validity_label(double ratio);

EnsembleVolume ensemble_volume(double n_atoms, double density_cm3);

/// Saturated Cs vapor over the liquid, cm^-3, for 0..250 C.
double cs_number_density(double t_celsius);

/// Vapor pressure behind cs_number_density, Pa.
double cs_vapor_pressure_pa(double t_celsius);

}  // namespace bistab
