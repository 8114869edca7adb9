#include "bistab/spin_core.hpp"

#include <cmath>
#include <stdexcept>

namespace bistab {

void EnsembleParams::validate() const {
  if (!(relax_rate > 0.0) || !std::isfinite(relax_rate)) {
    throw std::invalid_argument("EnsembleParams: relaxation rate must be positive");
  }
  if (!(gamma_over_2pi > 0.0) || !std::isfinite(gamma_over_2pi)) {
    throw std::invalid_argument("EnsembleParams: gyromagnetic ratio must be positive");
  }
  if (std::abs(pump_axis.norm() - 1.0) > 1e-12) {
    throw std::invalid_argument("EnsembleParams: pump axis must be a unit vector");
  }
  if (!std::isfinite(m0) || !std::isfinite(a0)) {
    throw std::invalid_argument("EnsembleParams: equilibrium magnitudes must be finite");
  }
}

NormalizedField NormalizedField::from(const FieldVector& b, const EnsembleParams& p) {
  const double k = p.gamma() / p.relax_rate;
  return {k * b.bx, k * b.by, k * b.bz};
}

FieldVector NormalizedField::to_field(const EnsembleParams& p) const {
  const double k = p.relax_rate / p.gamma();
  return {k * bx, k * by, k * bz};
}

Spin2Generators build_spin2_generators() {
  const double r3 = std::sqrt(3.0);
  Spin2Generators g;
  g.gx.setZero();
  g.gy.setZero();
  g.gz.setZero();

  // gz rotates each (m_qc, m_qs) plane at rate q.
  g.gz(2, 1) = 1.0;
  g.gz(1, 2) = -1.0;
  g.gz(4, 3) = 2.0;
  g.gz(3, 4) = -2.0;

  g.gx(2, 0) = r3;
  g.gx(0, 2) = -r3;
  g.gx(2, 3) = 1.0;
  g.gx(3, 2) = -1.0;
  g.gx(4, 1) = 1.0;
  g.gx(1, 4) = -1.0;

  g.gy(0, 1) = r3;
  g.gy(1, 0) = -r3;
  g.gy(1, 3) = 1.0;
  g.gy(3, 1) = -1.0;
  g.gy(2, 4) = 1.0;
  g.gy(4, 2) = -1.0;
  return g;
}

Spin1Generators build_spin1_generators() {
  Spin1Generators g;
  g.gx << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  g.gy << 0, 0, 1, 0, 0, 0, -1, 0, 0;
  g.gz << 0, -1, 0, 1, 0, 0, 0, 0, 0;
  return g;
}

namespace {

double closed_form(const NormalizedField& b, double cross_coeff) {
  const double bx2 = b.bx * b.bx;
  const double byz2 = b.by * b.by + b.bz * b.bz;
  const double num = b.bz * (1.0 + 4.0 * bx2 + byz2) -
                     b.bx * b.by * (1.0 + cross_coeff * bx2 - 2.0 * byz2);
  const double den = (4.0 * bx2 + 4.0 * byz2 + 1.0) * (bx2 + byz2 + 1.0);
  return num / den;
}

}  // namespace

double alignment_signal_closed_form(const NormalizedField& b) { return closed_form(b, 2.0); }

double rank2_signal_closed_form(const NormalizedField& b) { return closed_form(b, 4.0); }

AlignmentMultipole x_aligned_pump_tensor() {
  // d^2_{q0}(pi/2): -1/2 for q = 0, sqrt(3/8) for q = +-2; m2c = sqrt(2) * sqrt(3/8).
  return {-0.5, 0.0, 0.0, std::sqrt(3.0) / 2.0, 0.0};
}

Vec3 orientation_rate(const Vec3& m, const FieldVector& b, const EnsembleParams& p,
                      double precession_scale) {
  return precession_scale * p.gamma() * m.cross(b.vec()) -
         p.relax_rate * (m - p.m0 * p.pump_axis);
}

Vec5 spin2_rotate(const Vec3& n, const Vec5& m) {
  static const double r3 = std::sqrt(3.0);
  const double x = n.x(), y = n.y(), z = n.z();
  Vec5 r;
  r(0) = r3 * (y * m(1) - x * m(2));
  r(1) = -x * m(4) - r3 * y * m(0) + y * m(3) - z * m(2);
  r(2) = r3 * x * m(0) + x * m(3) + y * m(4) + z * m(1);
  r(3) = -x * m(2) - y * m(1) - 2.0 * z * m(4);
  r(4) = x * m(1) - y * m(2) + 2.0 * z * m(3);
  return r;
}

Vec5 alignment_rate(const Vec5& m, const FieldVector& b, const EnsembleParams& p,
                    const Spin2Generators&) {
  static const Vec5 pump = x_aligned_pump_tensor().vec();
  return -p.gamma() * spin2_rotate(b.vec(), m) - p.relax_rate * (m - p.a0 * pump);
}

OrientationMoment orientation_steady_state(const FieldVector& b, const EnsembleParams& p) {
  p.validate();
  // (Gamma + gamma [B]x) M = Gamma m0 pump
  const Vec3 w = p.gamma() * b.vec();
  Mat3 a;
  a << p.relax_rate, -w.z(), w.y(),
       w.z(), p.relax_rate, -w.x(),
       -w.y(), w.x(), p.relax_rate;
  const Vec3 rhs = p.relax_rate * p.m0 * p.pump_axis;
  return OrientationMoment::from(a.partialPivLu().solve(rhs));
}

AlignmentMultipole alignment_steady_state(const FieldVector& b, const EnsembleParams& p,
                                          const Spin2Generators& g) {
  p.validate();
  if ((p.pump_axis - Vec3::UnitX()).norm() > 1e-12) {
    throw std::invalid_argument("alignment_steady_state: pump polarization must be along x");
  }
  const Mat5 a = p.relax_rate * Mat5::Identity() + p.gamma() * g.along(b.vec());
  const Vec5 rhs = p.relax_rate * p.a0 * x_aligned_pump_tensor().vec();
  return AlignmentMultipole::from(a.partialPivLu().solve(rhs));
}

SignalPair signals_from_state(const OrientationMoment& m1, const AlignmentMultipole& m2,
                              const SignalMix& mix) {
  return {mix.baseline_t + mix.c_t * m2.m0c,
          mix.baseline_b + mix.c_al * m2.m2s + mix.c_or * m1.mz};
}

}  // namespace bistab
