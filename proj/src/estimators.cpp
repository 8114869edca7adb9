#include "bistab/estimators.hpp"

#include <cmath>
#include <stdexcept>

namespace bistab {

namespace {
constexpr double kPiE = 3.14159265358979323846;
constexpr double kTorr = 101325.0 / 760.0;  // Pa

void check_chi(double chi_deg) {
  if (!(std::abs(chi_deg) <= 45.0)) throw std::invalid_argument("|chi| must be <= 45 deg");
}
}  // namespace

void BroadeningBudget::validate() const {
  if (!(p_in >= 0.0 && k_lb >= 0.0 && k_serf >= 0.0 && k_ls >= 0.0)) {
    throw std::invalid_argument("broadening budget: power and coefficients must be >= 0");
  }
  check_chi(chi_deg);
}

double circular_power(double p_in_mw, double chi_deg) {
  check_chi(chi_deg);
  return p_in_mw * std::sin(std::abs(2.0 * chi_deg * kPiE / 180.0));
}

double broadening_rate(const BroadeningBudget& b) {
  b.validate();
  return (b.k_lb + b.k_serf * b.k_ls) * b.p_in * 2.0 * kPiE / 180.0;
}

double broadening_at(const BroadeningBudget& b) {
  b.validate();
  const double pc = circular_power(b.p_in, b.chi_deg);
  return b.k_lb * pc + b.k_serf * b.k_ls * pc;
}

void DipoleConfig::validate() const {
  if (!(n_atoms > 0.0)) throw std::invalid_argument("dipole: n_atoms must be > 0");
  if (!(distance_mm > 0.0)) throw std::invalid_argument("dipole: distance must be > 0");
  if (!(moment_per_atom > 0.0)) throw std::invalid_argument("dipole: moment must be > 0");
}

double dipole_field(const DipoleConfig& d) {
  d.validate();
  const double m = d.n_atoms * d.moment_per_atom;
  const double l = d.distance_mm * 1e-3;
  const double factor = d.geometry == DipoleGeometry::on_axis ? 2.0 : 1.0;
  return kMu0Over4Pi * factor * m / (l * l * l) * 1e9;
}

double EnsembleVolume::validity_ratio(double distance_mm) const {
  return side_mm > 0.0 ? distance_mm / (0.5 * side_mm) : 0.0;
}

std::string validity_label(double ratio) {
  if (ratio >= 3.0) return "satisfied";
  if (ratio >= 1.0) return "marginal";
  return "violated";
}

EnsembleVolume ensemble_volume(double n_atoms, double density_cm3) {
  if (!(density_cm3 > 0.0)) throw std::invalid_argument("ensemble_volume: density must be > 0");
  if (!(n_atoms >= 0.0)) throw std::invalid_argument("ensemble_volume: n_atoms must be >= 0");
  EnsembleVolume v;
  v.volume_mm3 = n_atoms / density_cm3 * 1e3;
  v.side_mm = std::cbrt(v.volume_mm3);
  return v;
}

double cs_vapor_pressure_pa(double t_celsius) {
  if (!(t_celsius >= 0.0 && t_celsius <= 250.0)) {
    throw std::out_of_range("cs vapor: temperature must be within 0..250 C");
  }
  // Liquid Cs: log10 P[atm] = 4.165 - 3830/T; 2.881 = log10(760) converts to Torr.
  const double t = t_celsius + 273.15;
  const double log_torr = 2.881 + 4.165 - 3830.0 / t;
  return std::pow(10.0, log_torr) * kTorr;
}

double cs_number_density(double t_celsius) {
  const double t = t_celsius + 273.15;
  return cs_vapor_pressure_pa(t_celsius) / (kBoltzmann * t) * 1e-6;
}

}  // namespace bistab
