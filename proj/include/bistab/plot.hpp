#pragma once

// Static SVG line plots with a CSV sidecar holding the plotted numbers.

#include <filesystem>
#include <string>
#include <vector>

#include "bistab/instrument.hpp"

namespace bistab {

enum class SeriesRole { plain, up, down, fit, points };

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  SeriesRole role = SeriesRole::plain;
};

struct PlotStyle {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 420;
};

/// Throws std::invalid_argument on an empty set, an empty series or x/y length mismatch.
void check_series(const std::vector<Series>& series);

std::string render_svg(const std::vector<Series>& series, const PlotStyle& style);

/// Long format: series,x,y.
std::string render_csv(const std::vector<Series>& series);

/// Writes `svg_path` and the sidecar next to it (same stem, .csv).
void emit_plot(const std::filesystem::path& svg_path, const std::vector<Series>& series,
               const PlotStyle& style);

/// Up and down branches of S_B as separate series.
std::vector<Series> branch_series(const DemodRecord& rec);

}  // namespace bistab
