#pragma once

// Grid studies: one synthesized record per grid point, fitted, then trends
// over the grid. Results and plots go to an output directory that `report`
// can re-read without simulating again.

#include <filesystem>
#include <string>
#include <vector>

#include "bistab/fitkit.hpp"
#include "bistab/record_io.hpp"

namespace bistab {

enum class StudyKind { chi_grid, bz_grid, by_grid, single };

const char* study_kind_name(StudyKind k);
StudyKind study_kind_from_string(const std::string& s);

struct StudyConfig {
  StudyKind kind = StudyKind::chi_grid;
  std::vector<double> grid;
  /// Base setup keys (preset.chi, scan.*, ramp.*, ...); grid values override
  /// the ellipticity, static B_z or static B_y.
  ConfigMap base;
  std::filesystem::path out_dir;  // empty: nothing written
  std::uint64_t seed = 1;
  double cutoff = 2.0;     // Hz, lock-in low-pass
  double phase_deg = 0.0;
  bool save_records = true;  // demodulated record per point

  /// Non-empty grid with unique values; single takes at most one value.
  void validate() const;
};

/// Parses study.kind, study.grid (comma or space separated), study.seed,
/// study.cutoff, study.phase_deg, study.save_records; the rest becomes `base`.
StudyConfig study_from_config(const ConfigMap& cfg);
ConfigMap study_to_config(const StudyConfig& s);

/// Default grids for each study kind.
std::vector<double> default_grid(StudyKind k);

struct PointResult {
  std::size_t index = 0;
  double x = 0.0;
  bool ok = false;
  bool converged = false;
  bool monostable = true;
  std::string error;
  std::string warnings;  // ';'-joined
  double params[CompositeContourModel::count] = {};
  double sigma[CompositeContourModel::count] = {};
  double residual_rms = 0.0;
  double bx_up = 0.0;
  double bx_down = 0.0;
  double hysteresis_transition = 0.0;
  double dt = 0.0;
  double b_eff = 0.0;
  double velocity = 0.0;  // max |d sb / d bx|

  double param(CompositeContourModel::Index i) const { return params[i]; }
};

struct TrendResult {
  std::string quantity;
  TrendKind kind = TrendKind::linear;
  int degree = 1;
  bool ok = false;
  std::string error;
  std::vector<double> params;
  std::vector<double> sigma;
  double residual_rms = 0.0;
  double range = 0.0;
  std::size_t n_points = 0;
};

struct StudyReport {
  StudyConfig config;
  std::vector<PointResult> points;
  std::vector<TrendResult> trends;

  bool partial() const;
  const TrendResult* trend(const std::string& quantity) const;
};

/// Runs one grid point end to end (synthesize, demodulate, fit, transitions).
/// Failures are captured in the result.
PointResult run_point(const StudyConfig& cfg, std::size_t index, DemodRecord* keep = nullptr);

/// Grid points run in parallel; when out_dir is set, writes the tables,
/// plots and (optionally) per-point demodulated records.
StudyReport run_study(const StudyConfig& cfg);

/// Trend fits for the study kind; a failed fit is recorded, not thrown.
std::vector<TrendResult> compute_trends(StudyKind kind, const std::vector<PointResult>& points);

/// Grid value axis label and unit for plots.
std::string grid_axis_label(StudyKind k);

std::string points_table(const std::vector<PointResult>& points);
std::vector<PointResult> parse_points_table(std::string_view text);
std::string trends_table(const std::vector<TrendResult>& trends);

/// Tables, trend plots and per-point record plots into `dir`.
void write_report(const StudyReport& r, const std::filesystem::path& dir);

/// Re-reads study.cfg and points.csv from a finished study directory and
/// recomputes the trends.
StudyReport load_study(const std::filesystem::path& dir);

}  // namespace bistab
