#pragma once

// Multipole algebra and steady-state solvers for the orientation (rank 1)
// and alignment (rank 2) moments of an optically pumped alkali ensemble.
//
// Field units are nT throughout. Rates are in s^-1, gyromagnetic ratios in
// Hz/nT (gamma = 2*pi*gamma_over_2pi rad s^-1 nT^-1).

#include <Eigen/Dense>

namespace bistab {

using Vec3 = Eigen::Vector3d;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat5 = Eigen::Matrix<double, 5, 5>;

inline constexpr double kPi = 3.14159265358979323846;

struct FieldVector {
  double bx = 0.0;
  double by = 0.0;
  double bz = 0.0;

  Vec3 vec() const { return {bx, by, bz}; }
  static FieldVector from(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
  double norm() const { return vec().norm(); }
  bool finite() const { return vec().allFinite(); }

  FieldVector operator+(const FieldVector& o) const {
    return {bx + o.bx, by + o.by, bz + o.bz};
  }
  bool operator==(const FieldVector&) const = default;
};

/// Relaxation and pumping parameters of one spin ensemble.
///
/// `relax_rate` is the half-width at half-maximum in angular units, so the
/// normalized field b = gamma*B/relax_rate has unit width. `m0` and `a0` are
/// the pumped equilibrium magnitudes of the orientation and alignment; which
/// one matters depends on the solver the parameters are handed to.
struct EnsembleParams {
  double gamma_over_2pi = 1.27;  // Hz/nT
  double relax_rate = 64.0;      // s^-1
  double m0 = 1.0;
  double a0 = 1.0;
  Vec3 pump_axis = Vec3::UnitZ();

  double gamma() const { return 2.0 * kPi * gamma_over_2pi; }
  /// Resonance half-width expressed as a field, nT.
  double width_nt() const { return relax_rate / gamma(); }

  /// Throws std::invalid_argument on non-positive rates or a non-unit pump axis.
  void validate() const;
};

/// Weak/strong pumping gyromagnetic ratios, Hz/nT.
inline constexpr double kGammaWeakPump = 1.27;
inline constexpr double kGammaStrongPump = 3.5;

struct NormalizedField {
  double bx = 0.0;
  double by = 0.0;
  double bz = 0.0;

  static NormalizedField from(const FieldVector& b, const EnsembleParams& p);
  FieldVector to_field(const EnsembleParams& p) const;
};

struct OrientationMoment {
  double mx = 0.0;
  double my = 0.0;
  double mz = 0.0;

  Vec3 vec() const { return {mx, my, mz}; }
  static OrientationMoment from(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
  double norm() const { return vec().norm(); }
};

/// Rank-2 moment in the real basis (m0c, m1c, m1s, m2c, m2s):
/// m0c = rho_0, m_qc = sqrt(2) Re rho_q, m_qs = -sqrt(2) Im rho_q (q = 1, 2),
/// quantization axis z. The map from {rho_q} is orthogonal.
struct AlignmentMultipole {
  double m0c = 0.0;
  double m1c = 0.0;
  double m1s = 0.0;
  double m2c = 0.0;
  double m2s = 0.0;

  Vec5 vec() const { return (Vec5() << m0c, m1c, m1s, m2c, m2s).finished(); }
  static AlignmentMultipole from(const Vec5& v) { return {v(0), v(1), v(2), v(3), v(4)}; }
  double norm() const { return vec().norm(); }
};

/// Real antisymmetric generators of spin-2 rotations in the AlignmentMultipole
/// basis, with [gx, gy] = gz (cyclic) and gx^2 + gy^2 + gz^2 = -6 I.
struct Spin2Generators {
  Mat5 gx;
  Mat5 gy;
  Mat5 gz;

  Mat5 along(const Vec3& n) const { return n.x() * gx + n.y() * gy + n.z() * gz; }
};

Spin2Generators build_spin2_generators();

/// (n.G) m without forming the matrix; equals build_spin2_generators().along(n) * m.
Vec5 spin2_rotate(const Vec3& n, const Vec5& m);

/// Same algebra for rank 1: (g_i v) = e_i x v.
struct Spin1Generators {
  Mat3 gx;
  Mat3 gy;
  Mat3 gz;
};
Spin1Generators build_spin1_generators();

/// Weak-field alignment rotation signal in its commonly quoted closed form
/// (note the 2 b_x^2 inside the b_x b_y term).
double alignment_signal_closed_form(const NormalizedField& b);

/// Closed form of -m2s / sqrt(3) for the isotropic rank-2 steady state with an
/// x-aligned pump. Differs from alignment_signal_closed_form only in the b_x b_y
/// term, which carries 4 b_x^2 here.
double rank2_signal_closed_form(const NormalizedField& b);

/// Pump tensor of light linearly polarized along x, unit norm:
/// (-1/2, 0, 0, sqrt(3)/2, 0).
AlignmentMultipole x_aligned_pump_tensor();

// Time derivatives. Both use the same rotation sense:
// dM/dt = gamma M x B - Gamma (M - m0 pump), dm/dt = -gamma (B.G) m - Gamma (m - a0 p).
Vec3 orientation_rate(const Vec3& m, const FieldVector& b, const EnsembleParams& p,
                      double precession_scale = 1.0);
Vec5 alignment_rate(const Vec5& m, const FieldVector& b, const EnsembleParams& p,
                    const Spin2Generators& g);

OrientationMoment orientation_steady_state(const FieldVector& b, const EnsembleParams& p);
AlignmentMultipole alignment_steady_state(const FieldVector& b, const EnsembleParams& p,
                                          const Spin2Generators& g);

/// Photodetector mixing coefficients. Units are those of the photocurrent
/// (the presets use microamperes).
struct SignalMix {
  double c_al = 1.0;   // alignment m2s -> S_B
  double c_or = 0.0;   // orientation mz -> S_B (circular birefringence)
  double c_t = 1.0;    // alignment m0c -> S_T
  double baseline_t = 0.0;
  double baseline_b = 0.0;
};

struct SignalPair {
  double st = 0.0;
  double sb = 0.0;
};

SignalPair signals_from_state(const OrientationMoment& m1, const AlignmentMultipole& m2,
                              const SignalMix& mix);

}  // namespace bistab
