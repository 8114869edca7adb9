#include "bistab/kernels.hpp"

#include <random>

namespace bistab::kernels {

void assemble_serial(const RowFn& row, std::size_t n, const VecX& p, VecX& f, MatX* jac) {
  const Eigen::Index m = p.size();
  f.resize(static_cast<Eigen::Index>(n));
  if (jac) jac->resize(static_cast<Eigen::Index>(n), m);
  std::vector<double> g(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    f(r) = row(i, p, jac ? g.data() : nullptr);
    if (jac) {
      for (Eigen::Index j = 0; j < m; ++j) (*jac)(r, j) = g[static_cast<std::size_t>(j)];
    }
  }
}

void assemble_omp(const RowFn& row, std::size_t n, const VecX& p, VecX& f, MatX* jac) {
  const Eigen::Index m = p.size();
  f.resize(static_cast<Eigen::Index>(n));
  if (jac) jac->resize(static_cast<Eigen::Index>(n), m);
  const auto nn = static_cast<std::int64_t>(n);
#pragma omp parallel
  {
    std::vector<double> g(static_cast<std::size_t>(m));
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < nn; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      f(r) = row(static_cast<std::size_t>(i), p, jac ? g.data() : nullptr);
      if (jac) {
        for (Eigen::Index j = 0; j < m; ++j) (*jac)(r, j) = g[static_cast<std::size_t>(j)];
      }
    }
  }
}

std::vector<AlignmentMultipole> alignment_grid_serial(const std::vector<FieldVector>& fields,
                                                      const EnsembleParams& p) {
  const Spin2Generators g = build_spin2_generators();
  std::vector<AlignmentMultipole> out(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i) out[i] = alignment_steady_state(fields[i], p, g);
  return out;
}

std::vector<AlignmentMultipole> alignment_grid_omp(const std::vector<FieldVector>& fields,
                                                   const EnsembleParams& p) {
  const Spin2Generators g = build_spin2_generators();
  std::vector<AlignmentMultipole> out(fields.size());
  const auto n = static_cast<std::int64_t>(fields.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = alignment_steady_state(fields[k], p, g);
  }
  return out;
}

std::vector<FlipFields> batch_sweeps_serial(const SweepProtocol& proto,
                                            const std::vector<SpinSystem>& systems,
                                            const SweepOptions& opts) {
  SweepOptions o = opts;
  o.store_samples = false;
  std::vector<FlipFields> out(systems.size());
  for (std::size_t i = 0; i < systems.size(); ++i) {
    out[i] = flip_fields(run_sweep(proto, systems[i], SimMode::latch, o));
  }
  return out;
}

std::vector<FlipFields> batch_sweeps_omp(const SweepProtocol& proto,
                                         const std::vector<SpinSystem>& systems,
                                         const SweepOptions& opts) {
  SweepOptions o = opts;
  o.store_samples = false;
  std::vector<FlipFields> out(systems.size());
  const auto n = static_cast<std::int64_t>(systems.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = flip_fields(run_sweep(proto, systems[k], SimMode::latch, o));
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

DemodRecord composite_record(const CompositeContourModel& truth, const std::vector<double>& bx,
                             double noise_rms, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  DemodRecord rec;
  const std::size_t n = bx.size();
  const double dt = 1.0;
  for (int pass = 0; pass < 2; ++pass) {
    const Branch b = pass == 0 ? Branch::up : Branch::down;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = pass == 0 ? bx[i] : bx[n - 1 - i];
      rec.t.push_back(static_cast<double>(rec.t.size()) * dt);
      rec.bx.push_back(x);
      rec.st.push_back(0.0);
      rec.sb.push_back(composite_eval(truth, x, b) + noise_rms * gauss(rng));
      rec.branch.push_back(b);
    }
  }
  return rec;
}

std::vector<CompositeFit> monte_carlo_fits_serial(const CompositeContourModel& truth,
                                                  const CompositeContourModel& init,
                                                  const std::vector<double>& bx, double noise_rms,
                                                  const std::vector<std::uint64_t>& seeds) {
  std::vector<CompositeFit> out(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    out[i] = fit_composite(composite_record(truth, bx, noise_rms, seeds[i]), init);
  }
  return out;
}

std::vector<CompositeFit> monte_carlo_fits_omp(const CompositeContourModel& truth,
                                               const CompositeContourModel& init,
                                               const std::vector<double>& bx, double noise_rms,
                                               const std::vector<std::uint64_t>& seeds) {
  std::vector<CompositeFit> out(seeds.size());
  const auto n = static_cast<std::int64_t>(seeds.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = fit_composite(composite_record(truth, bx, noise_rms, seeds[k]), init);
  }
  return out;
}

}  // namespace bistab::kernels
