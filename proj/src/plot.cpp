#include "bistab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "bistab/record_io.hpp"

namespace bistab {

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* role_class(SeriesRole r) {
  switch (r) {
    case SeriesRole::up: return "branch-up";
    case SeriesRole::down: return "branch-down";
    case SeriesRole::fit: return "fit";
    case SeriesRole::points: return "points";
    case SeriesRole::plain: break;
  }
  return "plain";
}

const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#7f7f7f", "#17becf"};
  return colors[i % 6];
}

const char* role_color(SeriesRole r, std::size_t i) {
  switch (r) {
    case SeriesRole::up: return "#d62728";
    case SeriesRole::down: return "#1f77b4";
    case SeriesRole::fit: return "#000000";
    default: return palette(i);
  }
}

// 1-2-5 tick spacing with about n intervals.
std::vector<double> ticks(double lo, double hi, int n) {
  const double span = hi - lo;
  if (!(span > 0.0)) return {lo};
  const double raw = span / n;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> out;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) {
    out.push_back(std::abs(v) < 1e-12 * span ? 0.0 : v);
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace

void check_series(const std::vector<Series>& series) {
  if (series.empty()) throw std::invalid_argument("plot: no series");
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) {
      throw std::invalid_argument("plot: series '" + s.name + "' has " + std::to_string(s.x.size()) +
                                  " x values and " + std::to_string(s.y.size()) + " y values");
    }
    if (s.x.empty()) throw std::invalid_argument("plot: series '" + s.name + "' is empty");
  }
}

std::string render_svg(const std::vector<Series>& series, const PlotStyle& style) {
  check_series(series);
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double w = style.width, h = style.height;
  const double ml = 70, mr = 20, mt = 36, mb = 52;
  const double pw = w - ml - mr, ph = h - mt - mb;
  auto sx = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return mt + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!style.title.empty()) {
    os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
       << escape(style.title) << "</text>\n";
  }
  os << "<g class=\"axes\" stroke=\"#444\" fill=\"none\">\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph << "\"/>\n";
  os << "</g>\n<g class=\"ticks\" fill=\"#222\">\n";
  for (double t : ticks(x0, x1, 8)) {
    os << "<line x1=\"" << sx(t) << "\" y1=\"" << mt + ph << "\" x2=\"" << sx(t) << "\" y2=\"" << mt + ph + 5
       << "\" stroke=\"#444\"/>";
    os << "<text x=\"" << sx(t) << "\" y=\"" << mt + ph + 18 << "\" text-anchor=\"middle\">" << num(t) << "</text>\n";
  }
  for (double t : ticks(y0, y1, 6)) {
    os << "<line x1=\"" << ml - 5 << "\" y1=\"" << sy(t) << "\" x2=\"" << ml << "\" y2=\"" << sy(t)
       << "\" stroke=\"#444\"/>";
    os << "<text x=\"" << ml - 8 << "\" y=\"" << sy(t) + 4 << "\" text-anchor=\"end\">" << num(t) << "</text>\n";
  }
  os << "</g>\n";
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">"
     << escape(style.x_label) << "</text>\n";
  os << "<text transform=\"translate(16," << mt + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(style.y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const char* color = role_color(s.role, k);
    os << "<g class=\"series " << role_class(s.role) << "\" data-name=\"" << escape(s.name) << "\">\n";
    if (s.role == SeriesRole::points) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        os << "<circle cx=\"" << sx(s.x[i]) << "\" cy=\"" << sy(s.y[i]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      }
    } else {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
         << (s.role == SeriesRole::fit ? " stroke-dasharray=\"6 3\"" : "") << " points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        os << sx(s.x[i]) << ',' << sy(s.y[i]) << ' ';
      }
      os << "\"/>\n";
    }
    os << "</g>\n";
  }
  // legend
  double ly = mt + 14;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    if (s.name.empty()) continue;
    os << "<line x1=\"" << ml + pw - 120 << "\" y1=\"" << ly - 4 << "\" x2=\"" << ml + pw - 100 << "\" y2=\"" << ly - 4
       << "\" stroke=\"" << role_color(s.role, k) << "\" stroke-width=\"2\"/>";
    os << "<text x=\"" << ml + pw - 95 << "\" y=\"" << ly << "\">" << escape(s.name) << "</text>\n";
    ly += 15;
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_csv(const std::vector<Series>& series) {
  check_series(series);
  std::string out = "series,x,y\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out += s.name + ',' + format_double(s.x[i]) + ',' + format_double(s.y[i]) + '\n';
    }
  }
  return out;
}

void emit_plot(const std::filesystem::path& svg_path, const std::vector<Series>& series,
               const PlotStyle& style) {
  const std::string svg = render_svg(series, style);
  const std::string csv = render_csv(series);
  write_text_file(svg_path, svg);
  auto side = svg_path;
  side.replace_extension(".csv");
  write_text_file(side, csv);
}

std::vector<Series> branch_series(const DemodRecord& rec) {
  Series up{"up", {}, {}, SeriesRole::up};
  Series down{"down", {}, {}, SeriesRole::down};
  for (std::size_t i = 0; i < rec.size(); ++i) {
    Series& s = rec.branch[i] == Branch::up ? up : down;
    s.x.push_back(rec.bx[i]);
    s.y.push_back(rec.sb[i]);
  }
  std::vector<Series> out;
  if (!up.x.empty()) out.push_back(std::move(up));
  if (!down.x.empty()) out.push_back(std::move(down));
  return out;
}

}  // namespace bistab
