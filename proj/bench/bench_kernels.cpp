// Serial vs OpenMP timings for the data-parallel kernels, with the largest
// disagreement between the two results.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>

#include "bistab/kernels.hpp"
#include "bistab/presets.hpp"

using namespace bistab;
using Clock = std::chrono::steady_clock;

namespace {

template <class F>
double time_best(F&& f, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

void row(const char* name, double ts, double tp, double diff) {
  std::printf("%-22s %12.4f %12.4f %9.2fx %12.3g\n", name, ts * 1e3, tp * 1e3, tp > 0 ? ts / tp : 0.0, diff);
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
  const int reps = quick ? 1 : 3;
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-22s %12s %12s %10s %12s\n", "kernel", "serial ms", "omp ms", "speedup", "max |diff|");

  {  // steady-state field grid
    const int n = quick ? 20 : 60;
    std::vector<FieldVector> fields;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < 8; ++k) fields.push_back({-30.0 + 60.0 * i / (n - 1), -5.0 + 10.0 * j / (n - 1), k - 4.0});
    const EnsembleParams p = preset_system(0.25).alignment;
    std::vector<AlignmentMultipole> a, b;
    const double ts = time_best([&] { a = kernels::alignment_grid_serial(fields, p); }, reps);
    const double tp = time_best([&] { b = kernels::alignment_grid_omp(fields, p); }, reps);
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, (a[i].vec() - b[i].vec()).cwiseAbs().maxCoeff());
    row("alignment_grid", ts, tp, d);
  }

  {  // residual + Jacobian assembly
    CompositeContourModel m;
    m.a_anti = -0.3, m.w_anti = 18, m.a_sym = 0.07, m.w_sym = 9, m.hysteresis_h = 2.4, m.offset = 0.01;
    const std::size_t n = quick ? 20000 : 200000;
    std::vector<double> bx(n);
    for (std::size_t i = 0; i < n; ++i) bx[i] = -25.0 + 50.0 * double(i) / double(n - 1);
    const VecX p = m.params();
    kernels::RowFn fn = [&](std::size_t i, const VecX& q, double* g) {
      CompositeContourModel c = m;
      c.set_params(q);
      return composite_eval(c, bx[i], i % 2 ? Branch::up : Branch::down, g);
    };
    VecX fs, fp;
    MatX js, jp;
    const double ts = time_best([&] { kernels::assemble_serial(fn, n, p, fs, &js); }, reps);
    const double tp = time_best([&] { kernels::assemble_omp(fn, n, p, fp, &jp); }, reps);
    row("assemble_jacobian", ts, tp, std::max((fs - fp).cwiseAbs().maxCoeff(), (js - jp).cwiseAbs().maxCoeff()));
  }

  {  // latch sweeps over a chi grid
    SweepProtocol proto;
    proto.bx_start = -6.0, proto.bx_end = 6.0, proto.rate = quick ? 2.0 : 0.5;
    std::vector<SpinSystem> systems;
    for (double chi : {0.3, 0.45, 0.6, 0.8, 1.0, 1.2}) systems.push_back(preset_system(chi));
    SweepOptions opts;
    std::vector<FlipFields> a, b;
    const double ts = time_best([&] { a = kernels::batch_sweeps_serial(proto, systems, opts); }, 1);
    const double tp = time_best([&] { b = kernels::batch_sweeps_omp(proto, systems, opts); }, 1);
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].up && b[i].up) d = std::max(d, std::abs(*a[i].up - *b[i].up));
      if (a[i].down && b[i].down) d = std::max(d, std::abs(*a[i].down - *b[i].down));
      if (a[i].up.has_value() != b[i].up.has_value() || a[i].down.has_value() != b[i].down.has_value()) d = 1e300;
    }
    row("batch_sweeps", ts, tp, d);
  }

  {  // Monte-Carlo fits
    CompositeContourModel truth;
    truth.a_anti = -0.3, truth.w_anti = 18, truth.a_sym = 0.07, truth.w_sym = 9, truth.hysteresis_h = 2.4;
    CompositeContourModel init = truth;
    init.w_anti *= 1.1, init.w_sym *= 0.9, init.hysteresis_h *= 1.1;
    std::vector<double> bx;
    for (int i = 0; i < 801; ++i) bx.push_back(-25.0 + 50.0 * i / 800.0);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < (quick ? 4 : 16); ++i) seeds.push_back(kernels::splitmix64(i));
    std::vector<CompositeFit> a, b;
    const double ts = time_best([&] { a = kernels::monte_carlo_fits_serial(truth, init, bx, 0.003, seeds); }, 1);
    const double tp = time_best([&] { b = kernels::monte_carlo_fits_omp(truth, init, bx, 0.003, seeds); }, 1);
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, (a[i].fit.params - b[i].fit.params).cwiseAbs().maxCoeff());
    row("monte_carlo_fits", ts, tp, d);
  }
  return 0;
}
