#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "bistab/spin_core.hpp"

using namespace bistab;

namespace {

Mat5 comm(const Mat5& a, const Mat5& b) { return a * b - b * a; }

// Plain RK4 relaxation to steady state; independent of the LU solvers.
template <class V, class F>
V relax(V m, F rate, double dt, int steps) {
  for (int i = 0; i < steps; ++i) {
    const V k1 = rate(m);
    const V k2 = rate(m + 0.5 * dt * k1);
    const V k3 = rate(m + 0.5 * dt * k2);
    const V k4 = rate(m + dt * k3);
    m += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return m;
}

}  // namespace

TEST_CASE("spin-2 generators close the so(3) algebra") {
  const auto g = build_spin2_generators();
  CHECK((g.gx + g.gx.transpose()).norm() == doctest::Approx(0.0));
  CHECK((g.gy + g.gy.transpose()).norm() == doctest::Approx(0.0));
  CHECK((g.gz + g.gz.transpose()).norm() == doctest::Approx(0.0));
  CHECK((comm(g.gx, g.gy) - g.gz).norm() < 1e-12);
  CHECK((comm(g.gy, g.gz) - g.gx).norm() < 1e-12);
  CHECK((comm(g.gz, g.gx) - g.gy).norm() < 1e-12);
  const Mat5 casimir = g.gx * g.gx + g.gy * g.gy + g.gz * g.gz;
  CHECK((casimir + 6.0 * Mat5::Identity()).norm() < 1e-12);
}

TEST_CASE("gz eigenvalues are i q for q = -2..2") {
  const auto g = build_spin2_generators();
  Eigen::EigenSolver<Mat5> es(g.gz);
  std::vector<double> im;
  for (int i = 0; i < 5; ++i) {
    CHECK(std::abs(es.eigenvalues()(i).real()) < 1e-12);
    im.push_back(es.eigenvalues()(i).imag());
  }
  std::sort(im.begin(), im.end());
  for (int q = -2; q <= 2; ++q) CHECK(im[q + 2] == doctest::Approx(q));
}

TEST_CASE("spin2_rotate equals the matrix product") {
  const auto g = build_spin2_generators();
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 200; ++i) {
    const Vec3 n(u(rng), u(rng), u(rng));
    Vec5 m;
    for (int k = 0; k < 5; ++k) m(k) = u(rng);
    CHECK((spin2_rotate(n, m) - g.along(n) * m).norm() < 1e-12);
  }
}

TEST_CASE("spin-1 generators are cross products") {
  const auto g = build_spin1_generators();
  const Vec3 v(0.3, -1.2, 0.7);
  CHECK((g.gx * v - Vec3::UnitX().cross(v)).norm() < 1e-14);
  CHECK((g.gy * v - Vec3::UnitY().cross(v)).norm() < 1e-14);
  CHECK((g.gz * v - Vec3::UnitZ().cross(v)).norm() < 1e-14);
}

TEST_CASE("pump tensor is unit norm and invariant under rotations about x") {
  const auto p = x_aligned_pump_tensor().vec();
  CHECK(p.norm() == doctest::Approx(1.0));
  const auto g = build_spin2_generators();
  CHECK((g.gx * p).norm() < 1e-14);
  CHECK((g.gy * p).norm() > 0.1);
}

TEST_CASE("rotation preserves the multipole norm") {
  // d/dt |m|^2 = 0 for pure precession
  EnsembleParams p{1.27, 1e-9, 0.0, 0.0, Vec3::UnitX()};
  const auto g = build_spin2_generators();
  Vec5 m;
  m << 0.1, -0.4, 0.3, 0.8, -0.2;
  const FieldVector b{3.0, -1.0, 2.0};
  CHECK(m.dot(alignment_rate(m, b, p, g)) == doctest::Approx(0.0).epsilon(1e-9));
  const Vec3 v(0.2, 0.5, -0.1);
  CHECK(v.dot(orientation_rate(v, b, p)) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("steady states agree with time-domain relaxation") {
  EnsembleParams p{1.27, 64.0, 0.8, 1.3, Vec3::UnitX()};
  const auto g = build_spin2_generators();
  for (const FieldVector b : {FieldVector{5, -3, 2}, FieldVector{-20, 4, 0}, FieldVector{0, 0, 9}}) {
    const Vec5 ss = alignment_steady_state(b, p, g).vec();
    const Vec5 td = relax(Vec5(Vec5::Zero()), [&](const Vec5& m) { return alignment_rate(m, b, p, g); },
                          2e-5, 20000);
    CHECK((ss - td).norm() < 1e-8);
    CHECK(alignment_rate(ss, b, p, g).norm() < 1e-9);

    EnsembleParams po = p;
    po.pump_axis = Vec3::UnitZ();
    const Vec3 so = orientation_steady_state(b, po).vec();
    const Vec3 to = relax(Vec3(Vec3::Zero()), [&](const Vec3& m) { return orientation_rate(m, b, po); },
                          2e-5, 20000);
    CHECK((so - to).norm() < 1e-8);
  }
}

TEST_CASE("orientation matches the Bloch closed form for a transverse field") {
  // B along x, pump along z: My = m0 b/(1+b^2), Mz = m0/(1+b^2)
  EnsembleParams p{1.27, 64.0, 1.0, 0.0, Vec3::UnitZ()};
  for (double b : {-2.0, -0.3, 0.0, 0.7, 4.0}) {
    const auto m = orientation_steady_state(NormalizedField{b, 0, 0}.to_field(p), p);
    CHECK(m.mx == doctest::Approx(0.0));
    CHECK(std::abs(m.my) == doctest::Approx(std::abs(b) / (1 + b * b)));
    CHECK(m.mz == doctest::Approx(1.0 / (1 + b * b)));
  }
}

TEST_CASE("rank-2 closed form reproduces the solver on a random set") {
  EnsembleParams p{1.27, 64.0, 0.0, 1.0, Vec3::UnitX()};
  const auto g = build_spin2_generators();
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 500; ++i) {
    const NormalizedField b{u(rng), u(rng), u(rng)};
    const double m2s = alignment_steady_state(b.to_field(p), p, g).m2s;
    CHECK(-m2s / std::sqrt(3.0) == doctest::Approx(rank2_signal_closed_form(b)).epsilon(1e-10));
  }
}

TEST_CASE("reference closed form differs only in the bx by term") {
  const NormalizedField pure_bz{0, 0, 1.3}, cross{0.8, 0.5, 0};
  CHECK(alignment_signal_closed_form(pure_bz) == doctest::Approx(rank2_signal_closed_form(pure_bz)));
  CHECK(alignment_signal_closed_form(cross) != doctest::Approx(rank2_signal_closed_form(cross)));
}

TEST_CASE("alignment signal parity") {
  // Flipping bx and by together leaves S_B unchanged; a pure bz response is odd.
  EnsembleParams p{1.27, 64.0, 0.0, 1.0, Vec3::UnitX()};
  const auto g = build_spin2_generators();
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 100; ++i) {
    const FieldVector b{u(rng) * 10, u(rng) * 10, u(rng) * 10};
    const FieldVector f{-b.bx, -b.by, b.bz};
    CHECK(alignment_steady_state(b, p, g).m2s == doctest::Approx(alignment_steady_state(f, p, g).m2s));
    // bz alone gives an odd response; bx alone gives none
    const FieldVector z{0, 0, b.bz}, zn{0, 0, -b.bz}, x{b.bx, 0, 0};
    CHECK(alignment_steady_state(z, p, g).m2s ==
          doctest::Approx(-alignment_steady_state(zn, p, g).m2s));
    CHECK(std::abs(alignment_steady_state(x, p, g).m2s) < 1e-14);
  }
}

TEST_CASE("zero field returns the pumped tensor") {
  EnsembleParams p{1.27, 64.0, 0.0, 0.7, Vec3::UnitX()};
  const auto m = alignment_steady_state({}, p, build_spin2_generators());
  CHECK((m.vec() - 0.7 * x_aligned_pump_tensor().vec()).norm() < 1e-14);
}

TEST_CASE("signals mix the documented components") {
  SignalMix mix{2.0, 0.5, 3.0, 6.0, 0.1};
  const auto s = signals_from_state({0, 0, 0.4}, {0.2, 0, 0, 0, -0.3}, mix);
  CHECK(s.st == doctest::Approx(6.0 + 3.0 * 0.2));
  CHECK(s.sb == doctest::Approx(0.1 + 2.0 * -0.3 + 0.5 * 0.4));
}

TEST_CASE("invalid ensemble parameters throw") {
  EnsembleParams p;
  p.relax_rate = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.pump_axis = Vec3(1, 1, 0);
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  EnsembleParams pz{1.27, 64.0, 0.0, 1.0, Vec3::UnitZ()};
  CHECK_THROWS_AS(alignment_steady_state({}, pz, build_spin2_generators()), std::invalid_argument);
}
