// bistab command-line front end.
// Exit codes: 0 ok, 1 usage, 2 data error, 3 fit did not converge or a study point failed
// (output still written).

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "bistab/estimators.hpp"
#include "bistab/presets.hpp"
#include "bistab/record_io.hpp"
#include "bistab/study.hpp"

using namespace bistab;
using json = nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNoConverge = 3 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::string format = "csv";
};

std::filesystem::path out_dir(const Globals& g) {
  if (!g.out.empty()) return g.out;
  if (const char* env = std::getenv("BISTAB_OUT"); env && *env) return env;
  return ".";
}

ConfigMap load_config(const Globals& g) {
  return g.config.empty() ? ConfigMap{} : read_config_file(g.config);
}

// name,value,unit rows or a flat JSON object of {value, unit}.
void print_values(const Globals& g, const std::vector<std::tuple<std::string, double, std::string>>& rows) {
  if (g.format == "json") {
    json j = json::object();
    for (const auto& [k, v, u] : rows) j[k] = {{"value", v}, {"unit", u}};
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::cout << "quantity,value,unit\n";
  for (const auto& [k, v, u] : rows) std::cout << k << ',' << format_double(v) << ',' << u << '\n';
}

json fit_json(const CompositeFit& f) {
  json p = json::object();
  for (std::size_t i = 0; i < CompositeContourModel::count; ++i) {
    p[CompositeContourModel::param_name(i)] = {{"value", f.fit.params(static_cast<Eigen::Index>(i))},
                                               {"sigma", f.fit.sigma(i)}};
  }
  json u = json::array();
  for (auto i : f.fit.unidentifiable) u.push_back(CompositeContourModel::param_name(i));
  return {{"params", p},
          {"converged", f.fit.converged},
          {"iterations", f.fit.iterations},
          {"residual_rms", f.fit.residual_rms},
          {"unidentifiable", u},
          {"warnings", f.fit.warnings},
          {"single_branch", f.single_branch}};
}

std::string fit_csv(const CompositeFit& f) {
  std::string s = "param,value,sigma\n";
  for (std::size_t i = 0; i < CompositeContourModel::count; ++i) {
    s += std::string(CompositeContourModel::param_name(i)) + ',' +
         format_double(f.fit.params(static_cast<Eigen::Index>(i))) + ',' + format_double(f.fit.sigma(i)) + '\n';
  }
  s += "converged," + std::string(f.fit.converged ? "1" : "0") + ",\n";
  s += "residual_rms," + format_double(f.fit.residual_rms) + ",\n";
  return s;
}

json trends_json(const StudyReport& r) {
  json out = json::array();
  for (const auto& t : r.trends) {
    out.push_back({{"quantity", t.quantity},
                   {"kind", trend_name(t.kind)},
                   {"ok", t.ok},
                   {"params", t.params},
                   {"sigma", t.sigma},
                   {"residual_rms", t.residual_rms},
                   {"range", t.range},
                   {"n_points", t.n_points},
                   {"error", t.error}});
  }
  return out;
}

int print_study(const Globals& g, const StudyReport& r) {
  if (g.format == "json") {
    json pts = json::array();
    for (const auto& p : r.points) {
      json params = json::object();
      for (std::size_t i = 0; i < CompositeContourModel::count; ++i) {
        params[CompositeContourModel::param_name(i)] = p.params[i];
      }
      pts.push_back({{"x", p.x}, {"ok", p.ok}, {"converged", p.converged}, {"params", params},
                     {"b_eff", p.b_eff}, {"velocity", p.velocity}, {"error", p.error}});
    }
    std::cout << json{{"kind", study_kind_name(r.config.kind)}, {"points", pts}, {"trends", trends_json(r)},
                      {"partial", r.partial()}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << trends_table(r.trends);
  }
  // Contour fits are expected to struggle off the chi axis (B_z, B_y grids);
  // those points are flagged in the tables. Only failed points change the exit code.
  const auto unconverged = std::count_if(r.points.begin(), r.points.end(),
                                         [](const PointResult& p) { return p.ok && !p.converged; });
  if (unconverged > 0) std::cerr << "note: " << unconverged << " contour fit(s) did not converge (see points.csv)\n";
  if (r.partial()) std::cerr << "warning: some grid points failed (see points.csv)\n";
  return r.partial() ? kNoConverge : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bistability simulator and analysis toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "RNG seed for synthesized noise");
  app.add_option("--config", g.config, "Flat key = value config file");
  app.add_option("--out", g.out, "Output directory (else $BISTAB_OUT, else .)");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "json"}));

  // simulate
  auto* sim = app.add_subcommand("simulate", "Synthesize one raw record");
  std::optional<double> sim_chi;
  std::string sim_name = "record";
  sim->add_option("--chi", sim_chi, "Ellipticity, deg (preset)");
  sim->add_option("--name", sim_name, "Output file stem");

  // demod
  auto* dem = app.add_subcommand("demod", "Lock-in demodulate a raw record");
  std::string dem_in, dem_name = "demod";
  double dem_cutoff = kPresetCutoff, dem_phase = 0.0;
  dem->add_option("--in", dem_in, "Raw record file")->required();
  dem->add_option("--cutoff", dem_cutoff, "Low-pass cutoff, Hz");
  dem->add_option("--phase", dem_phase, "Reference phase, deg");
  dem->add_option("--name", dem_name, "Output file stem");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit the composite contour model to a demodulated record");
  std::string fit_in, fit_mode = "switching";
  fit->add_option("--in", fit_in, "Demodulated record file")->required();
  fit->add_option("--mode", fit_mode, "Symmetric-contour form")->check(CLI::IsMember({"switching", "fixed_sign"}));

  // study
  auto* stu = app.add_subcommand("study", "Run a grid study");
  std::string stu_kind, stu_grid;
  bool stu_no_records = false;
  stu->add_option("--kind", stu_kind, "chi_grid, bz_grid, by_grid or single");
  stu->add_option("--grid", stu_grid, "Comma separated grid values");
  stu->add_flag("--no-records", stu_no_records, "Skip per-point record files");

  // estimate
  auto* est = app.add_subcommand("estimate", "Physical estimates");
  est->require_subcommand(1);
  auto* e_den = est->add_subcommand("density", "Saturated Cs vapor density");
  double den_t = 145.0;
  e_den->add_option("--t", den_t, "Cell temperature, C");
  auto* e_dip = est->add_subcommand("dipole", "Point-dipole field");
  DipoleConfig dip;
  bool dip_eq = false;
  e_dip->add_option("--n", dip.n_atoms, "Number of oriented atoms");
  e_dip->add_option("--l-mm", dip.distance_mm, "Distance, mm");
  e_dip->add_option("--moment", dip.moment_per_atom, "Moment per atom, J/T");
  e_dip->add_flag("--equatorial", dip_eq, "Equatorial instead of on-axis");
  auto* e_bro = est->add_subcommand("broadening", "Width growth per degree of ellipticity");
  BroadeningBudget bb;
  e_bro->add_option("--p-in", bb.p_in, "Pump power, mW");
  e_bro->add_option("--k-lb", bb.k_lb, "Light broadening, nT/mW");
  e_bro->add_option("--k-serf", bb.k_serf, "SERF factor, nT/nT");
  e_bro->add_option("--k-ls", bb.k_ls, "Light shift, nT/mW");
  auto* e_vol = est->add_subcommand("volume", "Volume occupied by the oriented atoms");
  double vol_n = 5e11, vol_density = 2e14, vol_l = 1.0;
  e_vol->add_option("--n", vol_n, "Number of atoms");
  e_vol->add_option("--density", vol_density, "Number density, cm^-3");
  e_vol->add_option("--l-mm", vol_l, "Distance used for the point-dipole check, mm");

  // report
  auto* rep = app.add_subcommand("report", "Regenerate tables and plots from a study directory");
  std::string rep_dir;
  rep->add_option("--dir", rep_dir, "Study directory (default: output directory)");

  for (auto* s : {sim, dem, fit, stu, est, e_den, e_dip, e_bro, e_vol, rep}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsage;
  }

  try {
    if (*sim) {
      ConfigMap cfg = load_config(g);
      if (sim_chi) cfg["preset.chi"] = format_double(*sim_chi), cfg.erase("ramp.ellipticity_deg");
      Setup s = setup_from_config(cfg);
      if (sim_chi) s.scan.ramp.ellipticity_deg = *sim_chi;
      if (g.seed) s.scan.seed = *g.seed;
      const ScanRecord rec = synthesize_record(s.scan, s.physics);
      const auto path = out_dir(g) / (sim_name + ".rec");
      write_record_file(path, to_record_file(rec));
      print_values(g, {{"samples", static_cast<double>(rec.size()), ""},
                       {"flips", static_cast<double>(rec.flips.size()), ""},
                       {"duration", rec.t.empty() ? 0.0 : rec.t.back(), "s"}});
      std::cerr << "wrote " << path.string() << '\n';
      return kOk;
    }
    if (*dem) {
      const ScanRecord rec = scan_from_record_file(read_record_file(dem_in));
      const DemodRecord d = lockin_demodulate(rec, dem_phase, dem_cutoff);
      ConfigMap meta = to_config(rec.config, rec.physics);
      meta["demod.cutoff"] = format_double(dem_cutoff);
      meta["demod.phase_deg"] = format_double(dem_phase);
      const auto path = out_dir(g) / (dem_name + ".rec");
      write_record_file(path, to_record_file(d, meta));
      const TransitionResult tr = extract_transition(d);
      std::vector<std::tuple<std::string, double, std::string>> rows{
          {"samples", static_cast<double>(d.size()), ""}, {"monostable", tr.monostable ? 1.0 : 0.0, ""}};
      if (tr.up) rows.emplace_back("bx_up", tr.up->bx, "nT");
      if (tr.down) rows.emplace_back("bx_down", tr.down->bx, "nT");
      if (tr.up && tr.down) rows.emplace_back("hysteresis", tr.hysteresis(), "nT");
      print_values(g, rows);
      std::cerr << "wrote " << path.string() << '\n';
      return kOk;
    }
    if (*fit) {
      const DemodRecord d = demod_from_record_file(read_record_file(fit_in));
      FitRecordOptions opts;
      opts.mode = fit_mode == "fixed_sign" ? CompositeMode::fixed_sign : CompositeMode::switching;
      const CompositeFit f = fit_record(d, opts);
      const std::string text = g.format == "json" ? fit_json(f).dump(2) + "\n" : fit_csv(f);
      std::cout << text;
      write_text_file(out_dir(g) / (g.format == "json" ? "fit.json" : "fit.csv"), text);
      for (const auto& w : f.fit.warnings) std::cerr << "warning: " << w << '\n';
      return f.fit.converged ? kOk : kNoConverge;
    }
    if (*stu) {
      ConfigMap cfg = load_config(g);
      if (!stu_kind.empty()) cfg["study.kind"] = stu_kind;
      if (!stu_grid.empty()) cfg["study.grid"] = stu_grid;
      if (g.seed) cfg["study.seed"] = std::to_string(*g.seed);
      StudyConfig sc = study_from_config(cfg);
      if (stu_no_records) sc.save_records = false;
      sc.out_dir = out_dir(g);
      const StudyReport r = run_study(sc);
      return print_study(g, r);
    }
    if (*est) {
      if (*e_den) {
        print_values(g, {{"number_density", cs_number_density(den_t), "cm^-3"},
                         {"vapor_pressure", cs_vapor_pressure_pa(den_t), "Pa"}});
      } else if (*e_dip) {
        dip.geometry = dip_eq ? DipoleGeometry::equatorial : DipoleGeometry::on_axis;
        print_values(g, {{"dipole_field", dipole_field(dip), "nT"}});
      } else if (*e_bro) {
        print_values(g, {{"broadening_rate", broadening_rate(bb), "nT/deg"}});
      } else if (*e_vol) {
        const EnsembleVolume v = ensemble_volume(vol_n, vol_density);
        const double ratio = v.validity_ratio(vol_l);
        print_values(g, {{"volume", v.volume_mm3, "mm^3"}, {"cube_side", v.side_mm, "mm"},
                         {"point_dipole_ratio", ratio, ""}});
        std::cerr << "point-dipole condition: " << validity_label(ratio) << '\n';
      }
      return kOk;
    }
    if (*rep) {
      const std::filesystem::path dir = rep_dir.empty() ? out_dir(g) : std::filesystem::path(rep_dir);
      StudyReport r = load_study(dir);
      write_report(r, dir);
      return print_study(g, r);
    }
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
