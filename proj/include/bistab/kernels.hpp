#pragma once

// Data-parallel loops. Every OpenMP kernel has a serial twin used as the
// reference in tests and in bench_kernels.

#include <cstdint>
#include <functional>
#include <vector>

#include "bistab/dynamics.hpp"
#include "bistab/fitkit.hpp"

namespace bistab::kernels {

/// Row i of a least-squares problem: returns f_i(p) and fills grad (size p) if non-null.
using RowFn = std::function<double(std::size_t i, const VecX& p, double* grad)>;

void assemble_serial(const RowFn& row, std::size_t n, const VecX& p, VecX& f, MatX* jac);
void assemble_omp(const RowFn& row, std::size_t n, const VecX& p, VecX& f, MatX* jac);

/// Alignment steady states over a list of fields.
std::vector<AlignmentMultipole> alignment_grid_serial(const std::vector<FieldVector>& fields,
                                                      const EnsembleParams& p);
std::vector<AlignmentMultipole> alignment_grid_omp(const std::vector<FieldVector>& fields,
                                                   const EnsembleParams& p);

/// Latch flip fields for one protocol and many systems.
std::vector<FlipFields> batch_sweeps_serial(const SweepProtocol& proto,
                                            const std::vector<SpinSystem>& systems,
                                            const SweepOptions& opts);
std::vector<FlipFields> batch_sweeps_omp(const SweepProtocol& proto,
                                         const std::vector<SpinSystem>& systems,
                                         const SweepOptions& opts);

/// Synthetic two-branch composite record: both branches sampled on `bx`,
/// with white noise of `noise_rms` drawn from `seed`.
DemodRecord composite_record(const CompositeContourModel& truth, const std::vector<double>& bx,
                             double noise_rms, std::uint64_t seed);

/// Seeded Monte-Carlo fits of composite_record data started from `init`.
std::vector<CompositeFit> monte_carlo_fits_serial(const CompositeContourModel& truth,
                                                  const CompositeContourModel& init,
                                                  const std::vector<double>& bx, double noise_rms,
                                                  const std::vector<std::uint64_t>& seeds);
std::vector<CompositeFit> monte_carlo_fits_omp(const CompositeContourModel& truth,
                                               const CompositeContourModel& init,
                                               const std::vector<double>& bx, double noise_rms,
                                               const std::vector<std::uint64_t>& seeds);

/// splitmix64 step; derives independent per-point seeds from one study seed.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace bistab::kernels
