#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "bistab/kernels.hpp"
#include "bistab/presets.hpp"

using namespace bistab;

TEST_CASE("residual assembly: serial and OpenMP agree exactly") {
  const std::size_t n = 2000;
  kernels::RowFn row = [](std::size_t i, const VecX& p, double* g) {
    const double x = -5.0 + 0.005 * static_cast<double>(i);
    const double e = std::exp(-x * x / p(1));
    if (g) {
      g[0] = e;
      g[1] = p(0) * e * x * x / (p(1) * p(1));
    }
    return p(0) * e;
  };
  const VecX p = (VecX(2) << 1.3, 2.0).finished();
  VecX fa, fb;
  MatX ja, jb;
  kernels::assemble_serial(row, n, p, fa, &ja);
  kernels::assemble_omp(row, n, p, fb, &jb);
  CHECK(fa == fb);
  CHECK(ja == jb);
  VecX fc;
  kernels::assemble_omp(row, n, p, fc, nullptr);
  CHECK(fc == fa);
}

TEST_CASE("alignment grid: serial and OpenMP agree and match the direct solver") {
  std::vector<FieldVector> fields;
  for (int i = -5; i <= 5; ++i)
    for (int j = -3; j <= 3; ++j) fields.push_back({2.0 * i, 1.5 * j, 0.5 * (i + j)});
  EnsembleParams p{1.27, 64.0, 0.0, 1.0, Vec3::UnitX()};
  const auto a = kernels::alignment_grid_serial(fields, p);
  const auto b = kernels::alignment_grid_omp(fields, p);
  REQUIRE(a.size() == fields.size());
  REQUIRE(b.size() == fields.size());
  const auto g = build_spin2_generators();
  for (std::size_t i = 0; i < fields.size(); ++i) {
    CHECK(a[i].vec() == b[i].vec());
    CHECK((a[i].vec() - alignment_steady_state(fields[i], p, g).vec()).norm() < 1e-14);
  }
}

TEST_CASE("batch sweeps: serial and OpenMP agree") {
  std::vector<SpinSystem> systems;
  for (double chi : {0.2, 0.35, 0.5, 0.8}) systems.push_back(preset_system(chi));
  SweepProtocol proto;
  proto.bx_start = -15;
  proto.bx_end = 15;
  proto.rate = 1.0;
  SweepOptions o;
  o.store_samples = false;
  const auto a = kernels::batch_sweeps_serial(proto, systems, o);
  const auto b = kernels::batch_sweeps_omp(proto, systems, o);
  REQUIRE(a.size() == systems.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].up);
    CHECK(*a[i].up == *b[i].up);
    CHECK(*a[i].down == *b[i].down);
  }
  // wider ellipticity, stronger orientation, smaller flip field
  CHECK(*a.front().up > *a.back().up);
}

TEST_CASE("Monte-Carlo fits: serial and OpenMP agree") {
  CompositeContourModel truth;
  truth.mode = CompositeMode::switching;
  truth.a_anti = 1.0;
  truth.w_anti = 15.0;
  truth.a_sym = 0.5;
  truth.w_sym = 8.0;
  truth.hysteresis_h = 2.0;
  truth.step_width = 0.3;
  std::vector<double> bx;
  for (int i = 0; i <= 400; ++i) bx.push_back(-40.0 + 0.2 * i);
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  const auto a = kernels::monte_carlo_fits_serial(truth, truth, bx, 0.005, seeds);
  const auto b = kernels::monte_carlo_fits_omp(truth, truth, bx, 0.005, seeds);
  for (std::size_t i = 0; i < seeds.size(); ++i) CHECK(a[i].fit.params == b[i].fit.params);
  CHECK(a[0].fit.params != a[1].fit.params);
}

TEST_CASE("composite record is seeded") {
  CompositeContourModel m;
  m.a_anti = 1.0;
  const std::vector<double> bx = {-1, 0, 1};
  const auto a = kernels::composite_record(m, bx, 0.1, 7);
  const auto b = kernels::composite_record(m, bx, 0.1, 7);
  const auto c = kernels::composite_record(m, bx, 0.1, 8);
  CHECK(a.sb == b.sb);
  CHECK(a.sb != c.sb);
  CHECK(a.size() == 6);
  CHECK(a.has_branch(Branch::up));
  CHECK(a.has_branch(Branch::down));
}

TEST_CASE("splitmix64 spreads consecutive seeds") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(kernels::splitmix64(i));
  CHECK(seen.size() == 1000);
  CHECK(kernels::splitmix64(1) == kernels::splitmix64(1));
}
