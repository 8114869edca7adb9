#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bistab/estimators.hpp"
#include "bistab/fitkit.hpp"
#include "bistab/kernels.hpp"
#include "bistab/presets.hpp"

using namespace bistab;
using Idx = CompositeContourModel::Index;

namespace {

CompositeContourModel sample_model(CompositeMode mode) {
  CompositeContourModel m;
  m.mode = mode;
  m.a_anti = 0.9;
  m.w_anti = 14.0;
  m.a_sym = 0.5;
  m.w_sym = 8.0;
  m.center = -0.4;
  m.hysteresis_h = 2.5;
  m.offset = 0.03;
  m.step_width = 0.3;
  return m;
}

std::vector<double> grid(double lo, double hi, int n) {
  std::vector<double> x;
  for (int i = 0; i < n; ++i) x.push_back(lo + (hi - lo) * i / (n - 1));
  return x;
}

}  // namespace

TEST_CASE("contour shapes") {
  CHECK(contour_sym(0.0) == 1.0);
  CHECK(contour_anti(0.0) == 0.0);
  // D peaks at u = 1/sqrt(3)
  const double u = 1.0 / std::sqrt(3.0);
  CHECK(contour_anti(u) == doctest::Approx(0.3248).epsilon(1e-4));
  CHECK(contour_anti(u * 1.01) < contour_anti(u));
  CHECK(contour_anti(u * 0.99) < contour_anti(u));
  for (double v : {0.3, 1.0, 2.5}) {
    CHECK(contour_sym(-v) == contour_sym(v));
    CHECK(contour_anti(-v) == -contour_anti(v));
  }
}

TEST_CASE("composite gradient matches central differences") {
  for (CompositeMode mode : {CompositeMode::fixed_sign, CompositeMode::switching}) {
    const auto m = sample_model(mode);
    const VecX p0 = m.params();
    for (double x : {-25.0, -3.0, -1.65, -0.4, 0.85, 1.0, 6.0}) {
      for (Branch b : {Branch::up, Branch::down}) {
        double g[Idx::count];
        const double f = composite_eval(m, x, b, g);
        CHECK(f == composite_eval(m, x, b));
        for (int i = 0; i < Idx::count; ++i) {
          const double h = 1e-6 * std::max(1.0, std::abs(p0(i)));
          VecX pp = p0, pm = p0;
          pp(i) += h;
          pm(i) -= h;
          auto mp = m, mm = m;
          mp.set_params(pp);
          mm.set_params(pm);
          const double fd = (composite_eval(mp, x, b) - composite_eval(mm, x, b)) / (2 * h);
          CHECK(std::abs(g[i] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
      }
    }
  }
}

TEST_CASE("swapping branch signs negates only the symmetric part") {
  for (CompositeMode mode : {CompositeMode::fixed_sign, CompositeMode::switching}) {
    auto m = sample_model(mode);
    auto flipped = m;
    flipped.branch_sign_up = -m.branch_sign_up;
    flipped.branch_sign_down = -m.branch_sign_down;
    auto anti_only = m;
    anti_only.a_sym = 0.0;
    for (double x : {-7.0, -1.0, 0.2, 1.3, 9.0})
      for (Branch b : {Branch::up, Branch::down}) {
        const double base = composite_eval(anti_only, x, b);
        CHECK(composite_eval(flipped, x, b) - base ==
              doctest::Approx(-(composite_eval(m, x, b) - base)).epsilon(1e-12));
      }
  }
}

TEST_CASE("params round trip") {
  auto m = sample_model(CompositeMode::switching);
  VecX p = m.params();
  p(Idx::h_i) = 4.0;
  m.set_params(p);
  CHECK(m.hysteresis_h == 4.0);
  CHECK(m.params() == p);
  CHECK(std::string(CompositeContourModel::param_name(Idx::w_sym_i)) == "w_sym");
  m.w_anti = -1.0;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}

TEST_CASE("LM solves an exponential decay exactly") {
  ParametricCurve c;
  c.nparams = 3;
  c.eval = [](double x, const VecX& p, double* g) {
    const double e = std::exp(-x / p(1));
    if (g) {
      g[0] = e;
      g[1] = p(0) * e * x / (p(1) * p(1));
      g[2] = 1.0;
    }
    return p(0) * e + p(2);
  };
  const auto x = grid(0, 10, 200);
  std::vector<double> y;
  for (double v : x) y.push_back(2.0 * std::exp(-v / 1.7) + 0.3);
  const auto r = levenberg_marquardt(c, x, y, (VecX(3) << 1.0, 1.0, 0.0).finished());
  CHECK(r.converged);
  CHECK(r.params(0) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(r.params(1) == doctest::Approx(1.7).epsilon(1e-8));
  CHECK(r.params(2) == doctest::Approx(0.3).epsilon(1e-8));
  for (std::size_t i = 1; i < r.cost_history.size(); ++i)
    CHECK(r.cost_history[i] <= r.cost_history[i - 1]);
}

TEST_CASE("LM honours fixed parameters") {
  ParametricCurve c;
  c.nparams = 2;
  c.eval = [](double x, const VecX& p, double* g) {
    if (g) {
      g[0] = 1.0;
      g[1] = x;
    }
    return p(0) + p(1) * x;
  };
  const auto x = grid(-1, 1, 21);
  std::vector<double> y;
  for (double v : x) y.push_back(1.0 + 2.0 * v);
  LMOptions o;
  o.fixed = {true, false};
  const auto r = levenberg_marquardt(c, x, y, (VecX(2) << 0.5, 0.0).finished(), o);
  CHECK(r.params(0) == 0.5);
  CHECK(r.params(1) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(r.sigma(0) == 0.0);
}

TEST_CASE("LM covariance matches the linear least squares result") {
  // For y = a + b x with noise s, var(b) = s^2 / sum (x - xbar)^2.
  ParametricCurve c;
  c.nparams = 2;
  c.eval = [](double x, const VecX& p, double* g) {
    if (g) {
      g[0] = 1.0;
      g[1] = x;
    }
    return p(0) + p(1) * x;
  };
  const auto x = grid(0, 10, 501);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.1);
  std::vector<double> y;
  for (double v : x) y.push_back(1.0 - 0.5 * v + n(rng));
  const auto r = levenberg_marquardt(c, x, y, VecX::Zero(2));
  double sxx = 0.0;
  for (double v : x) sxx += (v - 5.0) * (v - 5.0);
  CHECK(r.sigma(1) == doctest::Approx(r.residual_rms / std::sqrt(sxx)).epsilon(0.01));
}

TEST_CASE("LM flags a redundant parameter") {
  ParametricCurve c;
  c.nparams = 3;
  c.eval = [](double x, const VecX& p, double* g) {
    if (g) {
      g[0] = x;
      g[1] = x;
      g[2] = 1.0;
    }
    return (p(0) + p(1)) * x + p(2);
  };
  const auto x = grid(-1, 1, 11);
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * v);
  const auto r = levenberg_marquardt(c, x, y, (VecX(3) << 1.0, 1.0, 0.0).finished());
  CHECK(r.params(0) + r.params(1) == doctest::Approx(3.0));
  CHECK(!r.unidentifiable.empty());
}

TEST_CASE("LM rejects a model with no free influence") {
  ParametricCurve c;
  c.nparams = 1;
  c.eval = [](double, const VecX&, double* g) {
    if (g) g[0] = 0.0;
    return 1.0;
  };
  CHECK_THROWS_AS(levenberg_marquardt(c, {0, 1, 2}, {1, 1, 1}, VecX::Zero(1)), DegenerateFitError);
}

TEST_CASE("composite fit recovers the truth and is idempotent") {
  const auto truth = sample_model(CompositeMode::switching);
  const auto bx = grid(-40, 40, 801);
  const auto rec = kernels::composite_record(truth, bx, 0.0, 1);
  auto init = truth;
  init.w_anti *= 1.15;
  init.w_sym *= 0.85;
  init.hysteresis_h = 2.0;
  const auto f = fit_composite(rec, init);
  CHECK(f.fit.converged);
  const VecX tp = truth.params();
  for (int i = 0; i < Idx::count; ++i) CHECK(f.fit.params(i) == doctest::Approx(tp(i)).epsilon(1e-6));
  const auto again = fit_composite(rec, f.model);
  CHECK((again.fit.params - f.fit.params).norm() < 1e-8);
  CHECK(again.fit.iterations <= 2);
}

TEST_CASE("serial and parallel residual assembly agree in fits") {
  const auto truth = sample_model(CompositeMode::fixed_sign);
  const auto x = grid(-30, 30, 301);
  const auto rec = kernels::composite_record(truth, x, 0.01, 9);
  LMOptions a, b;
  b.parallel = true;
  const auto fa = fit_composite(rec, truth, a);
  const auto fb = fit_composite(rec, truth, b);
  CHECK((fa.fit.params - fb.fit.params).norm() < 1e-12);
}

TEST_CASE("transitions of a synthetic two-branch record") {
  const auto truth = sample_model(CompositeMode::switching);
  const auto bx = grid(-40, 40, 8001);
  const auto rec = kernels::composite_record(truth, bx, 0.0, 1);
  const auto tr = extract_transition(rec);
  REQUIRE(!tr.monostable);
  REQUIRE(tr.up);
  REQUIRE(tr.down);
  CHECK(tr.bx_up() == doctest::Approx(truth.center + truth.hysteresis_h / 2).epsilon(0.02));
  CHECK(tr.bx_down() == doctest::Approx(truth.center - truth.hysteresis_h / 2).epsilon(0.02));
  CHECK(tr.hysteresis() == doctest::Approx(truth.hysteresis_h).epsilon(0.02));
}

TEST_CASE("a record without a latch is monostable") {
  auto m = sample_model(CompositeMode::fixed_sign);
  m.hysteresis_h = 0.0;
  m.branch_sign_down = m.branch_sign_up;
  const auto rec = kernels::composite_record(m, grid(-40, 40, 2001), 0.0, 1);
  CHECK(extract_transition(rec).monostable);
  const auto f = fit_record(rec);
  CHECK(f.model.hysteresis_h == 0.0);
  CHECK(!f.fit.warnings.empty());
}

TEST_CASE("trend fits recover generating parameters") {
  const auto x = grid(0.1, 1.0, 10);
  struct Case {
    TrendKind kind;
    int degree;
    VecX p;
  };
  const std::vector<Case> cases = {
      {TrendKind::linear, 1, (VecX(2) << 3.0, 5.0).finished()},
      {TrendKind::hyperbola, 1, (VecX(2) << 0.4, 0.3).finished()},
      {TrendKind::arctan, 1, (VecX(3) << 2.0, 0.3, 0.1).finished()},
      {TrendKind::lorentzian, 1, (VecX(3) << 1.5, 0.4, 0.2).finished()},
      {TrendKind::polynomial, 3, (VecX(4) << 1.0, -2.0, 0.5, 0.25).finished()},
  };
  for (const auto& c : cases) {
    std::vector<double> y;
    for (double v : x) y.push_back(trend_eval(c.kind, c.p, v));
    const auto f = fit_trend(x, y, c.kind, c.degree);
    CAPTURE(trend_name(c.kind));
    CHECK(f.model.params.size() == c.p.size());
    for (Eigen::Index i = 0; i < c.p.size(); ++i)
      CHECK(f.model.params(i) == doctest::Approx(c.p(i)).epsilon(1e-6));
    CHECK(f.fit.residual_rms < 1e-8);
    CHECK(trend_kind_from_string(trend_name(c.kind)) == c.kind);
  }
  CHECK_THROWS_AS(trend_kind_from_string("cubic"), std::invalid_argument);
  CHECK_THROWS_AS(fit_trend({1.0}, {2.0}, TrendKind::linear), std::invalid_argument);
}

TEST_CASE("trend gradient matches central differences") {
  const VecX p = (VecX(3) << 1.2, 0.7, -0.3).finished();
  for (TrendKind k : {TrendKind::arctan, TrendKind::lorentzian}) {
    double g[3];
    trend_eval(k, p, 0.45, g);
    for (int i = 0; i < 3; ++i) {
      VecX a = p, b = p;
      a(i) += 1e-6;
      b(i) -= 1e-6;
      CHECK(g[i] == doctest::Approx((trend_eval(k, a, 0.45) - trend_eval(k, b, 0.45)) / 2e-6).epsilon(1e-6));
    }
  }
}

TEST_CASE("linear trend of the broadening budget gives its slope") {
  BroadeningBudget b;
  std::vector<double> chi, w;
  for (double c = 0.0; c <= 0.5; c += 0.05) {
    b.chi_deg = c;
    chi.push_back(c);
    w.push_back(broadening_at(b));
  }
  const auto f = fit_trend(chi, w, TrendKind::linear);
  CHECK(f.model.params(1) == doctest::Approx(broadening_rate(BroadeningBudget{})).epsilon(1e-3));
  CHECK(f.model.params(1) == doctest::Approx(4.0).epsilon(0.03));
}

TEST_CASE("fit_record recovers the hysteresis of a slow preset scan") {
  const double chi = 0.25;
  auto sc = preset_scan(chi);
  sc.ramp.rate = 0.02;
  const auto ph = preset_physics(chi);
  const auto d = lockin_demodulate(synthesize_record(sc, ph), 0.0, kPresetCutoff);
  const auto f = fit_record(d);
  const double h0 = 2 * predict_flip_field(ph.system.orientation, ph.system.coupling);
  CHECK(f.model.mode == CompositeMode::switching);
  CHECK(f.model.hysteresis_h == doctest::Approx(h0).epsilon(0.05));
  CHECK(f.model.a_anti != 0.0);
  CHECK(f.model.a_sym > 0.0);
}
