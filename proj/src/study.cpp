#include "bistab/study.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "bistab/kernels.hpp"
#include "bistab/plot.hpp"
#include "bistab/presets.hpp"

namespace bistab {

namespace {

using Index = CompositeContourModel::Index;

std::string clean_cell(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::string tok;
  auto flush = [&] {
    if (!tok.empty()) out.push_back(parse_double(tok, "study.grid"));
    tok.clear();
  };
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '\t') flush();
    else tok += c;
  }
  flush();
  return out;
}

// Which quantity each trend uses, and how it is fitted.
struct TrendPlan {
  const char* quantity;
  std::function<double(const PointResult&)> value;
  bool needs_transition;
  TrendKind kind;
};

std::vector<TrendPlan> plan_for(StudyKind kind) {
  auto param = [](Index i) { return [i](const PointResult& p) { return p.params[i]; }; };
  auto h = [](const PointResult& p) { return p.params[Index::h_i]; };
  auto htr = [](const PointResult& p) { return p.hysteresis_transition; };
  auto beff = [](const PointResult& p) { return p.b_eff; };
  auto vel = [](const PointResult& p) { return p.velocity; };
  switch (kind) {
    case StudyKind::chi_grid:
      return {{"w_anti", param(Index::w_anti_i), false, TrendKind::linear},
              {"w_sym", param(Index::w_sym_i), false, TrendKind::linear},
              {"a_anti", param(Index::a_anti_i), false, TrendKind::linear},
              {"a_sym", param(Index::a_sym_i), false, TrendKind::lorentzian},
              {"hysteresis_h", h, true, TrendKind::hyperbola},
              {"velocity", vel, true, TrendKind::arctan},
              {"b_eff", beff, true, TrendKind::linear}};
    case StudyKind::bz_grid:
      // The contour model has no B_z background term, so H comes from the
      // transition points here.
      return {{"hysteresis_transition", htr, true, TrendKind::lorentzian},
              {"b_eff", beff, true, TrendKind::lorentzian}};
    case StudyKind::by_grid:
      return {{"a_anti", param(Index::a_anti_i), false, TrendKind::polynomial},
              {"a_sym", param(Index::a_sym_i), false, TrendKind::polynomial}};
    case StudyKind::single:
      break;
  }
  return {};
}

std::vector<std::string> point_columns() {
  std::vector<std::string> c = {"index", "x", "ok", "converged", "monostable"};
  for (std::size_t i = 0; i < CompositeContourModel::count; ++i) c.emplace_back(CompositeContourModel::param_name(i));
  for (std::size_t i = 0; i < CompositeContourModel::count; ++i) {
    c.push_back(std::string("sigma_") + CompositeContourModel::param_name(i));
  }
  for (const char* s : {"residual_rms", "bx_up", "bx_down", "hysteresis_transition", "dt", "b_eff", "velocity",
                        "error", "warnings"}) {
    c.emplace_back(s);
  }
  return c;
}

std::string record_name(std::size_t index) {
  std::ostringstream os;
  os << "point_" << (index < 10 ? "0" : "") << index;
  return os.str();
}

}  // namespace

const char* study_kind_name(StudyKind k) {
  switch (k) {
    case StudyKind::chi_grid: return "chi_grid";
    case StudyKind::bz_grid: return "bz_grid";
    case StudyKind::by_grid: return "by_grid";
    case StudyKind::single: return "single";
  }
  return "single";
}

StudyKind study_kind_from_string(const std::string& s) {
  if (s == "chi_grid") return StudyKind::chi_grid;
  if (s == "bz_grid") return StudyKind::bz_grid;
  if (s == "by_grid") return StudyKind::by_grid;
  if (s == "single") return StudyKind::single;
  throw DataError("unknown study kind '" + s + "' (chi_grid, bz_grid, by_grid, single)");
}

std::string grid_axis_label(StudyKind k) {
  switch (k) {
    case StudyKind::chi_grid: return "ellipticity chi, deg";
    case StudyKind::bz_grid: return "B_z, nT";
    case StudyKind::by_grid: return "B_y, nT";
    case StudyKind::single: return "point";
  }
  return "";
}

void StudyConfig::validate() const {
  if (grid.empty()) throw std::invalid_argument("study: empty grid");
  std::set<double> seen(grid.begin(), grid.end());
  if (seen.size() != grid.size()) throw std::invalid_argument("study: grid values must be unique");
  if (kind == StudyKind::single && grid.size() != 1) {
    throw std::invalid_argument("study: 'single' takes exactly one grid value");
  }
  for (double g : grid) {
    if (!std::isfinite(g)) throw std::invalid_argument("study: non-finite grid value");
    if (kind == StudyKind::chi_grid && !(std::abs(g) <= 45.0)) {
      throw std::invalid_argument("study: chi grid values must be within +-45 deg");
    }
  }
  if (!(cutoff > 0.0)) throw std::invalid_argument("study: cutoff must be > 0");
}

std::vector<double> default_grid(StudyKind k) {
  switch (k) {
    case StudyKind::chi_grid: return {0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    case StudyKind::bz_grid: return {-40, -30, -20, -12, -6, 0, 6, 12, 20, 30, 40};
    case StudyKind::by_grid: return {-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0};
    case StudyKind::single: return {0.25};
  }
  return {};
}

StudyConfig study_from_config(const ConfigMap& cfg) {
  StudyConfig s;
  bool have_grid = false;
  for (const auto& [k, v] : cfg) {
    if (k == "study.kind") s.kind = study_kind_from_string(v);
    else if (k == "study.grid") s.grid = parse_grid(v), have_grid = true;
    else if (k == "study.seed") s.seed = static_cast<std::uint64_t>(parse_double(v, k));
    else if (k == "study.cutoff") s.cutoff = parse_double(v, k);
    else if (k == "study.phase_deg") s.phase_deg = parse_double(v, k);
    else if (k == "study.save_records") s.save_records = v == "true" || v == "1";
    else if (k.rfind("study.", 0) == 0) throw DataError("unknown study key '" + k + "'");
    else s.base[k] = v;
  }
  if (!have_grid) s.grid = default_grid(s.kind);
  return s;
}

ConfigMap study_to_config(const StudyConfig& s) {
  ConfigMap out = s.base;
  out["config.version"] = std::to_string(kConfigVersion);
  out["study.kind"] = study_kind_name(s.kind);
  std::string g;
  for (std::size_t i = 0; i < s.grid.size(); ++i) g += (i ? ", " : "") + format_double(s.grid[i]);
  out["study.grid"] = g;
  out["study.seed"] = std::to_string(s.seed);
  out["study.cutoff"] = format_double(s.cutoff);
  out["study.phase_deg"] = format_double(s.phase_deg);
  out["study.save_records"] = s.save_records ? "true" : "false";
  return out;
}

bool StudyReport::partial() const {
  return std::any_of(points.begin(), points.end(), [](const PointResult& p) { return !p.ok; });
}

const TrendResult* StudyReport::trend(const std::string& quantity) const {
  for (const auto& t : trends) {
    if (t.quantity == quantity) return &t;
  }
  return nullptr;
}

PointResult run_point(const StudyConfig& cfg, std::size_t index, DemodRecord* keep) {
  PointResult p;
  p.index = index;
  p.x = cfg.grid.at(index);
  try {
    ConfigMap c = cfg.base;
    const std::string v = format_double(p.x);
    switch (cfg.kind) {
      case StudyKind::chi_grid:
        c["preset.chi"] = v;
        c.erase("ramp.ellipticity_deg");
        break;
      case StudyKind::bz_grid: c["ramp.static_bz"] = v; break;
      case StudyKind::by_grid: c["ramp.static_by"] = v; break;
      case StudyKind::single: break;
    }
    Setup s = setup_from_config(c);
    if (cfg.kind == StudyKind::chi_grid) s.scan.ramp.ellipticity_deg = p.x;
    s.scan.seed = kernels::splitmix64(cfg.seed + index);

    const ScanRecord rec = synthesize_record(s.scan, s.physics);
    DemodRecord d = lockin_demodulate(rec, cfg.phase_deg, cfg.cutoff);
    const TransitionResult tr = extract_transition(d);
    const CompositeFit f = fit_record(d);

    for (std::size_t i = 0; i < CompositeContourModel::count; ++i) {
      p.params[i] = f.fit.params(static_cast<Eigen::Index>(i));
      p.sigma[i] = f.fit.sigma(i);
    }
    p.converged = f.fit.converged;
    p.residual_rms = f.fit.residual_rms;
    for (std::size_t i = 0; i < f.fit.warnings.size(); ++i) {
      p.warnings += (i ? "; " : "") + f.fit.warnings[i];
    }
    p.monostable = !(tr.up && tr.down);
    if (tr.up) p.bx_up = tr.up->bx;
    if (tr.down) p.bx_down = tr.down->bx;
    if (!p.monostable) {
      p.hysteresis_transition = tr.hysteresis();
      p.dt = tr.dt();
      if (p.dt > 0.0) p.b_eff = effective_field_from_transient(p.dt, s.physics.system.alignment);
    }
    p.velocity = tr.max_slope();
    p.ok = true;
    if (keep) *keep = std::move(d);
  } catch (const std::exception& e) {
    p.ok = false;
    p.error = e.what();
  }
  return p;
}

std::vector<TrendResult> compute_trends(StudyKind kind, const std::vector<PointResult>& points) {
  std::vector<TrendResult> out;
  for (const TrendPlan& plan : plan_for(kind)) {
    TrendResult t;
    t.quantity = plan.quantity;
    t.kind = plan.kind;
    std::vector<double> xs, ys;
    for (const auto& p : points) {
      if (!p.ok || (plan.needs_transition && p.monostable)) continue;
      const double y = plan.value(p);
      if (!std::isfinite(y)) continue;
      xs.push_back(p.x);
      ys.push_back(y);
    }
    t.n_points = xs.size();
    if (plan.kind == TrendKind::polynomial) {
      t.degree = static_cast<int>(std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(xs.size()) - 2, 1, 3));
    }
    try {
      const TrendFit f = fit_trend(xs, ys, plan.kind, t.degree);
      t.params.assign(f.model.params.data(), f.model.params.data() + f.model.params.size());
      for (std::size_t i = 0; i < t.params.size(); ++i) t.sigma.push_back(f.fit.sigma(i));
      t.residual_rms = f.fit.residual_rms;
      t.range = f.range;
      t.ok = true;
    } catch (const std::exception& e) {
      t.error = e.what();
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::string points_table(const std::vector<PointResult>& points) {
  std::string out;
  const auto cols = point_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += '\n';
  for (const auto& p : points) {
    out += std::to_string(p.index) + ',' + format_double(p.x) + ',' + (p.ok ? "1" : "0") + ',' +
           (p.converged ? "1" : "0") + ',' + (p.monostable ? "1" : "0");
    for (double v : p.params) out += ',' + format_double(v);
    for (double v : p.sigma) out += ',' + format_double(v);
    for (double v : {p.residual_rms, p.bx_up, p.bx_down, p.hysteresis_transition, p.dt, p.b_eff, p.velocity}) {
      out += ',' + format_double(v);
    }
    out += ',' + clean_cell(p.error) + ',' + clean_cell(p.warnings) + '\n';
  }
  return out;
}

std::vector<PointResult> parse_points_table(std::string_view text) {
  std::vector<PointResult> out;
  std::istringstream is{std::string(text)};
  std::string line;
  if (!std::getline(is, line)) throw DataError("points table: empty");
  const auto cols = point_columns();
  std::string expect;
  for (std::size_t i = 0; i < cols.size(); ++i) expect += (i ? "," : "") + cols[i];
  if (line != expect) throw DataError("points table: unexpected header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    while (cells.size() < cols.size()) cells.emplace_back();
    if (cells.size() != cols.size()) throw DataError("points table: bad row '" + line + "'");
    PointResult p;
    std::size_t c = 0;
    p.index = static_cast<std::size_t>(parse_double(cells[c++], "index"));
    p.x = parse_double(cells[c++], "x");
    p.ok = cells[c++] == "1";
    p.converged = cells[c++] == "1";
    p.monostable = cells[c++] == "1";
    for (double& v : p.params) v = parse_double(cells[c++], "param");
    for (double& v : p.sigma) v = parse_double(cells[c++], "sigma");
    for (double* v : {&p.residual_rms, &p.bx_up, &p.bx_down, &p.hysteresis_transition, &p.dt, &p.b_eff, &p.velocity}) {
      *v = parse_double(cells[c++], "value");
    }
    p.error = cells[c++];
    p.warnings = cells[c++];
    out.push_back(std::move(p));
  }
  return out;
}

std::string trends_table(const std::vector<TrendResult>& trends) {
  std::string out = "quantity,kind,degree,ok,n_points,residual_rms,range,p0,p1,p2,p3,sigma0,sigma1,sigma2,sigma3,error\n";
  for (const auto& t : trends) {
    out += t.quantity + ',' + trend_name(t.kind) + ',' + std::to_string(t.degree) + ',' + (t.ok ? "1" : "0") + ',' +
           std::to_string(t.n_points) + ',' + format_double(t.residual_rms) + ',' + format_double(t.range);
    for (std::size_t i = 0; i < 4; ++i) out += ',' + (i < t.params.size() ? format_double(t.params[i]) : "");
    for (std::size_t i = 0; i < 4; ++i) out += ',' + (i < t.sigma.size() ? format_double(t.sigma[i]) : "");
    out += ',' + clean_cell(t.error) + '\n';
  }
  return out;
}

void write_report(const StudyReport& r, const std::filesystem::path& dir) {
  write_text_file(dir / "study.cfg", format_config(study_to_config(r.config)));
  write_text_file(dir / "points.csv", points_table(r.points));
  write_text_file(dir / "trends.csv", trends_table(r.trends));

  const auto plans = plan_for(r.config.kind);
  for (const auto& plan : plans) {
    Series pts{plan.quantity, {}, {}, SeriesRole::points};
    for (const auto& p : r.points) {
      if (!p.ok || (plan.needs_transition && p.monostable)) continue;
      pts.x.push_back(p.x);
      pts.y.push_back(plan.value(p));
    }
    if (pts.x.empty()) continue;
    std::vector<Series> set{pts};
    if (const TrendResult* t = r.trend(plan.quantity); t && t->ok) {
      Series line{std::string(trend_name(t->kind)) + " fit", {}, {}, SeriesRole::fit};
      const auto [lo, hi] = std::minmax_element(pts.x.begin(), pts.x.end());
      VecX par = Eigen::Map<const VecX>(t->params.data(), static_cast<Eigen::Index>(t->params.size()));
      for (int i = 0; i <= 200; ++i) {
        const double x = *lo + (*hi - *lo) * i / 200.0;
        if (t->kind == TrendKind::hyperbola && x == 0.0) continue;
        line.x.push_back(x);
        line.y.push_back(trend_eval(t->kind, par, x));
      }
      set.push_back(std::move(line));
    }
    PlotStyle st{std::string(plan.quantity) + " vs grid", grid_axis_label(r.config.kind), plan.quantity};
    emit_plot(dir / (std::string("trend_") + plan.quantity + ".svg"), set, st);
  }

  // Per-point records, thinned for plotting.
  for (const auto& p : r.points) {
    const auto path = dir / (record_name(p.index) + ".rec");
    if (!std::filesystem::exists(path)) continue;
    const DemodRecord d = demod_from_record_file(read_record_file(path));
    auto series = branch_series(d);
    for (auto& s : series) {
      const std::size_t step = std::max<std::size_t>(1, s.x.size() / 1500);
      Series thin{s.name, {}, {}, s.role};
      for (std::size_t i = 0; i < s.x.size(); i += step) {
        thin.x.push_back(s.x[i]);
        thin.y.push_back(s.y[i]);
      }
      s = std::move(thin);
    }
    if (series.empty()) continue;
    PlotStyle st{"S_B at " + grid_axis_label(r.config.kind) + " = " + format_double(p.x), "B_x, nT", "S_B (demod)"};
    emit_plot(dir / (record_name(p.index) + ".svg"), series, st);
  }
}

StudyReport run_study(const StudyConfig& cfg) {
  cfg.validate();
  StudyReport r;
  r.config = cfg;
  r.points.resize(cfg.grid.size());
  const bool write = !cfg.out_dir.empty();
  if (write) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw DataError(cfg.out_dir.string() + ": " + ec.message());
  }
  const auto n = static_cast<long>(cfg.grid.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    DemodRecord d;
    PointResult p = run_point(cfg, k, write && cfg.save_records ? &d : nullptr);
    if (p.ok && write && cfg.save_records) {
      ConfigMap meta;
      meta["study.kind"] = study_kind_name(cfg.kind);
      meta["study.x"] = format_double(p.x);
      meta["demod.cutoff"] = format_double(cfg.cutoff);
      meta["demod.phase_deg"] = format_double(cfg.phase_deg);
      try {
        write_record_file(cfg.out_dir / (record_name(k) + ".rec"), to_record_file(d, meta));
      } catch (const std::exception& e) {
        p.ok = false;
        p.error = e.what();
      }
    }
    r.points[k] = std::move(p);
  }
  r.trends = compute_trends(cfg.kind, r.points);
  if (write) write_report(r, cfg.out_dir);
  return r;
}

StudyReport load_study(const std::filesystem::path& dir) {
  StudyReport r;
  r.config = study_from_config(read_config_file(dir / "study.cfg"));
  r.config.out_dir = dir;
  try {
    r.points = parse_points_table(read_text_file(dir / "points.csv"));
  } catch (const DataError& e) {
    const std::string m = e.what();
    throw DataError(m.find("points.csv") == std::string::npos ? (dir / "points.csv").string() + ": " + m : m);
  }
  r.trends = compute_trends(r.config.kind, r.points);
  return r;
}

}  // namespace bistab
