#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "bistab/plot.hpp"
#include "bistab/presets.hpp"
#include "bistab/record_io.hpp"
#include "bistab/study.hpp"

using namespace bistab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("bistab_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ScanRecord short_scan() {
  auto sc = preset_scan(0.4);
  sc.ramp.bx_start = -8.0;
  sc.ramp.bx_end = 8.0;
  sc.ramp.rate = 2.0;
  sc.noise_rms = 0.001;
  return synthesize_record(sc, preset_physics(0.4));
}

}  // namespace

TEST_CASE("doubles round trip through text") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, (i % 40) - 20);
    CHECK(parse_double(format_double(v), "v") == v);
  }
  CHECK(parse_double(format_double(0.1), "v") == 0.1);
  CHECK_THROWS_AS(parse_double("1.5x", "v"), DataError);
  CHECK_THROWS_AS(parse_double("", "v"), DataError);
}

TEST_CASE("config parsing") {
  const auto c = parse_config(
      "# comment\n"
      "config.version = 1\n"
      "[scan]\n"
      "mod_freq = 7   ; trailing\n"
      "\n"
      "[ramp]\n"
      "rate=0.5\n");
  CHECK(c.at("scan.mod_freq") == "7");
  CHECK(c.at("ramp.rate") == "0.5");
  CHECK_THROWS_AS(parse_config("config.version = 2\n"), DataError);
  CHECK_THROWS_AS(parse_config("[scan\n"), DataError);
  CHECK_THROWS_AS(parse_config("no equals sign\n"), DataError);
  CHECK_THROWS_AS(parse_config(" = 3\n"), DataError);
}

TEST_CASE("config round trip reproduces the setup") {
  auto sc = preset_scan(0.3, 0.2, -5.0);
  sc.noise_rms = 0.004;
  sc.seed = 42;
  auto ph = preset_physics(0.3);
  ph.mode = SimMode::ode;
  const auto cfg = to_config(sc, ph);
  const auto again = parse_config(format_config(cfg));
  CHECK(again == cfg);
  ScanConfig sc2;
  Physics ph2;
  const auto unknown = apply_config(again, sc2, ph2);
  CHECK(unknown.empty());
  CHECK(to_config(sc2, ph2) == cfg);
  CHECK(sc2.seed == 42);
  CHECK(ph2.mode == SimMode::ode);
  CHECK(sc2.ramp.static_bz == -5.0);
}

TEST_CASE("apply_config reports unknown keys and rejects bad values") {
  ScanConfig sc;
  Physics ph;
  const auto unknown = apply_config({{"scan.mod_freq", "3"}, {"other.key", "1"}}, sc, ph);
  CHECK(sc.mod_freq == 3.0);
  REQUIRE(unknown.size() == 1);
  CHECK(unknown[0] == "other.key");
  CHECK_THROWS_AS(apply_config({{"scan.mod_freq", "fast"}}, sc, ph), DataError);
  CHECK_THROWS_AS(apply_config({{"ramp.pattern", "sideways"}}, sc, ph), DataError);
}

TEST_CASE("setup_from_config starts from the preset") {
  const auto s = setup_from_config({{"preset.chi", "0.5"}, {"ramp.rate", "0.3"}});
  const auto ref = preset_physics(0.5);
  CHECK(s.scan.ramp.rate == 0.3);
  CHECK(s.physics.system.orientation.m0 == ref.system.orientation.m0);
  CHECK(s.physics.system.alignment.relax_rate == ref.system.alignment.relax_rate);
}

TEST_CASE("raw record file round trip is byte identical") {
  const auto rec = short_scan();
  const auto f = to_record_file(rec);
  const auto text = format_record_file(f);
  CHECK(text.rfind("# bistab-record 1\n", 0) == 0);
  const auto parsed = parse_record_file(text);
  CHECK(format_record_file(parsed) == text);
  const auto back = scan_from_record_file(parsed);
  CHECK(back.t == rec.t);
  CHECK(back.sb_raw == rec.sb_raw);
  CHECK(back.st_raw == rec.st_raw);
  CHECK(back.bx_ramp == rec.bx_ramp);
  CHECK(to_config(back.config, back.physics) == to_config(rec.config, rec.physics));

  const auto dir = scratch("raw");
  write_record_file(dir / "sub" / "a.rec", f);
  CHECK(read_text_file(dir / "sub" / "a.rec") == text);
  CHECK(format_record_file(read_record_file(dir / "sub" / "a.rec")) == text);
}

TEST_CASE("demodulated record round trip") {
  const auto d = lockin_demodulate(short_scan(), 0.0, kPresetCutoff);
  const auto f = to_record_file(d, {{"demod.cutoff", "2"}});
  const auto parsed = parse_record_file(format_record_file(f));
  CHECK(parsed.kind == RecordFile::Kind::demod);
  CHECK(parsed.meta.at("demod.cutoff") == "2");
  const auto back = demod_from_record_file(parsed);
  CHECK(back.bx == d.bx);
  CHECK(back.sb == d.sb);
  CHECK(back.branch == d.branch);
  CHECK_THROWS_AS(scan_from_record_file(parsed), DataError);
}

TEST_CASE("record parser rejects bad input") {
  CHECK_THROWS_AS(parse_record_file(""), DataError);
  CHECK_THROWS_AS(parse_record_file("# bistab-record 2\n# kind = raw\nt\n1\n"), DataError);
  CHECK_THROWS_AS(parse_record_file("hello\n"), DataError);
  CHECK_THROWS_AS(parse_record_file("# bistab-record 1\nt,bx\n1,2\n"), DataError);
  CHECK_THROWS_AS(parse_record_file("# bistab-record 1\n# kind = raw\nt,bx\n1\n"), DataError);
  CHECK_THROWS_AS(parse_record_file("# bistab-record 1\n# kind = blob\nt\n1\n"), DataError);
  CHECK_THROWS_AS(read_record_file("/nonexistent/dir/x.rec"), DataError);
  RecordFile f;
  f.columns = {"t"};
  CHECK_THROWS_AS(f.column("bx"), DataError);
}

TEST_CASE("plot rendering") {
  std::vector<Series> s = {{"up", {0, 1, 2}, {0, 1, 0}, SeriesRole::up},
                           {"fit", {0, 1, 2}, {0.1, 0.9, 0.1}, SeriesRole::fit}};
  PlotStyle style{"title <&>", "B_x (nT)", "S_B", 640, 420};
  const auto svg = render_svg(s, style);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("branch-up") != std::string::npos);
  CHECK(svg.find("title &lt;&amp;&gt;") != std::string::npos);
  const auto csv = render_csv(s);
  CHECK(csv.rfind("series,x,y\n", 0) == 0);
  CHECK(csv.find("fit,2,0.1") != std::string::npos);

  const auto dir = scratch("plot");
  emit_plot(dir / "p.svg", s, style);
  CHECK(fs::exists(dir / "p.svg"));
  CHECK(read_text_file(dir / "p.csv") == csv);
}

TEST_CASE("plot input errors") {
  CHECK_THROWS_AS(check_series({}), std::invalid_argument);
  CHECK_THROWS_AS(check_series({{"a", {}, {}}}), std::invalid_argument);
  CHECK_THROWS_AS(check_series({{"a", {1, 2}, {1}}}), std::invalid_argument);
  CHECK_THROWS_AS(render_svg({{"a", {1, 2}, {1}}}, {}), std::invalid_argument);
  // a flat or single-point series still renders
  CHECK_NOTHROW(render_svg({{"a", {1}, {1}}}, {}));
}

TEST_CASE("branch series split") {
  DemodRecord d;
  d.t = {0, 1, 2, 3};
  d.bx = {0, 1, 1, 0};
  d.st = {0, 0, 0, 0};
  d.sb = {1, 2, 3, 4};
  d.branch = {Branch::up, Branch::up, Branch::down, Branch::down};
  const auto s = branch_series(d);
  REQUIRE(s.size() == 2);
  CHECK(s[0].y == std::vector<double>{1, 2});
  CHECK(s[1].y == std::vector<double>{3, 4});
}

TEST_CASE("study config parsing and validation") {
  const auto s = study_from_config(
      {{"study.kind", "bz_grid"}, {"study.grid", "-10, 0 10"}, {"study.seed", "5"}, {"ramp.rate", "0.2"}});
  CHECK(s.kind == StudyKind::bz_grid);
  CHECK(s.grid == std::vector<double>{-10, 0, 10});
  CHECK(s.seed == 5);
  CHECK(s.base.at("ramp.rate") == "0.2");
  CHECK(study_from_config(study_to_config(s)).grid == s.grid);
  CHECK_THROWS_AS(study_from_config({{"study.colour", "red"}}), DataError);
  CHECK_THROWS_AS(study_from_config({{"study.kind", "xyz"}}), DataError);

  StudyConfig c;
  c.grid = {};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.grid = {0.1, 0.1};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.grid = {50.0};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.kind = StudyKind::single;
  c.grid = {0.1, 0.2};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(!default_grid(StudyKind::chi_grid).empty());
}

TEST_CASE("points table round trip") {
  PointResult p;
  p.index = 3;
  p.x = 0.25;
  p.ok = true;
  p.converged = true;
  p.monostable = false;
  p.params[CompositeContourModel::h_i] = 2.857142857142857;
  p.sigma[CompositeContourModel::h_i] = 1e-5;
  p.dt = 0.7;
  p.warnings = "a;b";
  PointResult q;
  q.index = 4;
  q.error = "boom, with comma";
  const auto text = points_table({p, q});
  const auto back = parse_points_table(text);
  REQUIRE(back.size() == 2);
  CHECK(points_table(back) == text);
  CHECK(back[0].params[CompositeContourModel::h_i] == p.params[CompositeContourModel::h_i]);
  CHECK(!back[1].ok);
  CHECK_THROWS_AS(parse_points_table("wrong,header\n"), DataError);
}

TEST_CASE("single-point study writes a reloadable report") {
  StudyConfig c;
  c.kind = StudyKind::single;
  c.grid = {0.5};
  c.base = {{"ramp.rate", "0.5"}, {"ramp.bx_start", "-15"}, {"ramp.bx_end", "15"}};
  c.out_dir = scratch("study");
  const auto r = run_study(c);
  REQUIRE(r.points.size() == 1);
  CHECK(r.points[0].ok);
  CHECK(!r.points[0].monostable);
  CHECK(fs::exists(c.out_dir / "points.csv"));
  CHECK(fs::exists(c.out_dir / "study.cfg"));
  CHECK(fs::exists(c.out_dir / "point_00.rec"));
  CHECK(fs::exists(c.out_dir / "point_00.svg"));
  const auto again = load_study(c.out_dir);
  CHECK(points_table(again.points) == points_table(r.points));
  CHECK(again.config.kind == StudyKind::single);
  CHECK_THROWS_AS(load_study(c.out_dir / "missing"), DataError);
}
