#include "bistab/record_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "bistab/presets.hpp"

namespace bistab {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      if (pos < text.size()) out.push_back(text.substr(pos));
      break;
    }
    out.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto p = s.find(sep, pos);
    out.push_back(s.substr(pos, p == std::string_view::npos ? std::string_view::npos : p - pos));
    if (p == std::string_view::npos) break;
    pos = p + 1;
  }
  return out;
}

bool parse_bool(std::string_view s, std::string_view what) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw DataError("bad boolean for " + std::string(what) + ": '" + std::string(s) + "'");
}

std::uint64_t parse_u64(std::string_view s, std::string_view what) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw DataError("bad integer for " + std::string(what) + ": '" + std::string(s) + "'");
  }
  return v;
}

std::string vec3_text(const Vec3& v) {
  return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
}

Vec3 parse_vec3(std::string_view s, std::string_view what) {
  std::vector<double> xs;
  for (auto part : split(s, ' ')) {
    part = trim(part);
    if (!part.empty()) xs.push_back(parse_double(part, what));
  }
  if (xs.size() != 3) throw DataError(std::string(what) + ": expected three numbers");
  return {xs[0], xs[1], xs[2]};
}

const char* pattern_name(SweepPattern p) {
  switch (p) {
    case SweepPattern::up: return "up";
    case SweepPattern::down: return "down";
    case SweepPattern::triangle: return "triangle";
  }
  return "triangle";
}

SweepPattern parse_pattern(std::string_view s) {
  if (s == "up") return SweepPattern::up;
  if (s == "down") return SweepPattern::down;
  if (s == "triangle") return SweepPattern::triangle;
  throw DataError("unknown ramp.pattern '" + std::string(s) + "'");
}

// One table drives both directions of the config mapping.
struct Field {
  const char* key;
  std::function<std::string(const ScanConfig&, const Physics&)> get;
  std::function<void(std::string_view, ScanConfig&, Physics&)> set;
};

#define BISTAB_DOUBLE(KEY, EXPR)                                                              \
  Field {                                                                                     \
    KEY, [](const ScanConfig& sc, const Physics& ph) { (void)sc; (void)ph; return format_double(EXPR); }, \
        [](std::string_view v, ScanConfig& sc, Physics& ph) { (void)sc; (void)ph; EXPR = parse_double(v, KEY); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      BISTAB_DOUBLE("scan.mod_amplitude", sc.mod_amplitude),
      BISTAB_DOUBLE("scan.mod_freq", sc.mod_freq),
      BISTAB_DOUBLE("scan.sample_rate", sc.sample_rate),
      BISTAB_DOUBLE("scan.noise_rms", sc.noise_rms),
      BISTAB_DOUBLE("scan.drift_rate", sc.drift_rate),
      Field{"scan.seed", [](const ScanConfig& sc, const Physics&) { return std::to_string(sc.seed); },
            [](std::string_view v, ScanConfig& sc, Physics&) { sc.seed = parse_u64(v, "scan.seed"); }},
      BISTAB_DOUBLE("ramp.bx_start", sc.ramp.bx_start),
      BISTAB_DOUBLE("ramp.bx_end", sc.ramp.bx_end),
      BISTAB_DOUBLE("ramp.rate", sc.ramp.rate),
      Field{"ramp.pattern", [](const ScanConfig& sc, const Physics&) { return std::string(pattern_name(sc.ramp.pattern)); },
            [](std::string_view v, ScanConfig& sc, Physics&) { sc.ramp.pattern = parse_pattern(v); }},
      Field{"ramp.hold_on_zero", [](const ScanConfig& sc, const Physics&) { return std::string(sc.ramp.hold_on_zero ? "true" : "false"); },
            [](std::string_view v, ScanConfig& sc, Physics&) { sc.ramp.hold_on_zero = parse_bool(v, "ramp.hold_on_zero"); }},
      BISTAB_DOUBLE("ramp.hold_dwell", sc.ramp.hold_dwell),
      BISTAB_DOUBLE("ramp.static_by", sc.ramp.static_by),
      BISTAB_DOUBLE("ramp.static_bz", sc.ramp.static_bz),
      BISTAB_DOUBLE("ramp.ellipticity_deg", sc.ramp.ellipticity_deg),
      BISTAB_DOUBLE("orientation.gamma_over_2pi", ph.system.orientation.gamma_over_2pi),
      BISTAB_DOUBLE("orientation.relax_rate", ph.system.orientation.relax_rate),
      BISTAB_DOUBLE("orientation.m0", ph.system.orientation.m0),
      BISTAB_DOUBLE("orientation.a0", ph.system.orientation.a0),
      Field{"orientation.pump_axis", [](const ScanConfig&, const Physics& ph) { return vec3_text(ph.system.orientation.pump_axis); },
            [](std::string_view v, ScanConfig&, Physics& ph) { ph.system.orientation.pump_axis = parse_vec3(v, "orientation.pump_axis"); }},
      BISTAB_DOUBLE("alignment.gamma_over_2pi", ph.system.alignment.gamma_over_2pi),
      BISTAB_DOUBLE("alignment.relax_rate", ph.system.alignment.relax_rate),
      BISTAB_DOUBLE("alignment.m0", ph.system.alignment.m0),
      BISTAB_DOUBLE("alignment.a0", ph.system.alignment.a0),
      Field{"alignment.pump_axis", [](const ScanConfig&, const Physics& ph) { return vec3_text(ph.system.alignment.pump_axis); },
            [](std::string_view v, ScanConfig&, Physics& ph) { ph.system.alignment.pump_axis = parse_vec3(v, "alignment.pump_axis"); }},
      BISTAB_DOUBLE("coupling.kappa", ph.system.coupling.kappa),
      BISTAB_DOUBLE("coupling.my0", ph.system.coupling.my0),
      BISTAB_DOUBLE("coupling.tau_flip", ph.system.coupling.tau_flip),
      BISTAB_DOUBLE("coupling.back_action", ph.system.coupling.back_action),
      BISTAB_DOUBLE("coupling.serf_field", ph.system.coupling.serf_field),
      BISTAB_DOUBLE("mix.c_al", ph.mix.c_al),
      BISTAB_DOUBLE("mix.c_or", ph.mix.c_or),
      BISTAB_DOUBLE("mix.c_t", ph.mix.c_t),
      BISTAB_DOUBLE("mix.baseline_t", ph.mix.baseline_t),
      BISTAB_DOUBLE("mix.baseline_b", ph.mix.baseline_b),
      Field{"sim.mode", [](const ScanConfig&, const Physics& ph) { return std::string(ph.mode == SimMode::latch ? "latch" : "ode"); },
            [](std::string_view v, ScanConfig&, Physics& ph) {
              if (v == "latch") ph.mode = SimMode::latch;
              else if (v == "ode") ph.mode = SimMode::ode;
              else throw DataError("unknown sim.mode '" + std::string(v) + "'");
            }},
  };
  return f;
}

#undef BISTAB_DOUBLE

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view s, std::string_view what) {
  s = trim(s);
  double v = 0.0;
  const char* b = s.data();
  if (!s.empty() && s.front() == '+') ++b;
  const auto r = std::from_chars(b, s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw DataError("bad number for " + std::string(what) + ": '" + std::string(s) + "'");
  }
  return v;
}

ConfigMap parse_config(std::string_view text) {
  ConfigMap out;
  std::string section;
  int lineno = 0;
  for (auto raw : split_lines(text)) {
    ++lineno;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    // Trailing comment: '#' or ';' after whitespace.
    for (std::size_t i = 1; i < line.size(); ++i) {
      if ((line[i] == '#' || line[i] == ';') && (line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line = trim(line.substr(0, i));
        break;
      }
    }
    if (line.front() == '[') {
      if (line.back() != ']') throw DataError("config line " + std::to_string(lineno) + ": unterminated section");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw DataError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw DataError("config line " + std::to_string(lineno) + ": empty key");
    const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    out[full] = std::string(trim(line.substr(eq + 1)));
  }
  if (auto it = out.find("config.version"); it != out.end()) {
    if (it->second != std::to_string(kConfigVersion)) {
      throw DataError("unsupported config.version " + it->second);
    }
  }
  return out;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
  try {
    return parse_config(read_text_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_config(const ConfigMap& cfg) {
  std::ostringstream os;
  for (const auto& [k, v] : cfg) os << k << " = " << v << '\n';
  return os.str();
}

ConfigMap to_config(const ScanConfig& scan, const Physics& ph) {
  ConfigMap out;
  out["config.version"] = std::to_string(kConfigVersion);
  for (const auto& f : fields()) out[f.key] = f.get(scan, ph);
  return out;
}

std::vector<std::string> apply_config(const ConfigMap& cfg, ScanConfig& scan, Physics& ph) {
  std::map<std::string_view, const Field*> index;
  for (const auto& f : fields()) index[f.key] = &f;
  std::vector<std::string> rest;
  for (const auto& [k, v] : cfg) {
    const auto it = index.find(k);
    if (it == index.end()) {
      if (k != "config.version") rest.push_back(k);
      continue;
    }
    it->second->set(v, scan, ph);
  }
  return rest;
}

Setup setup_from_config(const ConfigMap& cfg) {
  double chi = 0.25;
  if (auto it = cfg.find("preset.chi"); it != cfg.end()) chi = parse_double(it->second, "preset.chi");
  else if (auto e = cfg.find("ramp.ellipticity_deg"); e != cfg.end()) chi = parse_double(e->second, "ramp.ellipticity_deg");
  Setup s{preset_scan(chi), preset_physics(chi)};
  apply_config(cfg, s.scan, s.physics);
  return s;
}

// ---------------------------------------------------------------------------

const std::vector<double>& RecordFile::column(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return data[i];
  }
  throw DataError("record has no column '" + std::string(name) + "'");
}

std::string format_record_file(const RecordFile& f) {
  if (f.columns.size() != f.data.size()) throw DataError("record: column count mismatch");
  for (const auto& c : f.data) {
    if (c.size() != f.rows()) throw DataError("record: ragged columns");
  }
  std::string out;
  out += "# bistab-record " + std::to_string(kRecordSchemaVersion) + "\n";
  out += std::string("# kind = ") + (f.kind == RecordFile::Kind::raw ? "raw" : "demod") + "\n";
  for (const auto& [k, v] : f.meta) out += "# " + k + " = " + v + "\n";
  for (std::size_t i = 0; i < f.columns.size(); ++i) {
    if (i) out += ',';
    out += f.columns[i];
  }
  out += '\n';
  for (std::size_t r = 0; r < f.rows(); ++r) {
    for (std::size_t c = 0; c < f.data.size(); ++c) {
      if (c) out += ',';
      out += format_double(f.data[c][r]);
    }
    out += '\n';
  }
  return out;
}

RecordFile parse_record_file(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw DataError("record: empty file");
  const std::string magic = "# bistab-record ";
  const auto first = trim(lines[0]);
  if (first.substr(0, magic.size()) != magic) throw DataError("record: missing 'bistab-record' header");
  const auto version = trim(first.substr(magic.size()));
  if (version != std::to_string(kRecordSchemaVersion)) {
    throw DataError("record: unsupported schema version '" + std::string(version) + "'");
  }
  RecordFile f;
  bool have_kind = false;
  std::size_t i = 1;
  for (; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty() || line.front() != '#') break;
    const auto body = trim(line.substr(1));
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) continue;
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    if (key == "kind") {
      if (value == "raw") f.kind = RecordFile::Kind::raw;
      else if (value == "demod") f.kind = RecordFile::Kind::demod;
      else throw DataError("record: unknown kind '" + value + "'");
      have_kind = true;
    } else {
      f.meta[key] = value;
    }
  }
  if (!have_kind) throw DataError("record: header lacks 'kind'");
  if (i >= lines.size()) throw DataError("record: missing column header");
  for (auto c : split(trim(lines[i]), ',')) f.columns.emplace_back(trim(c));
  f.data.assign(f.columns.size(), {});
  for (++i; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != f.columns.size()) {
      throw DataError("record: row " + std::to_string(i + 1) + " has " + std::to_string(cells.size()) +
                      " cells, expected " + std::to_string(f.columns.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) f.data[c].push_back(parse_double(cells[c], f.columns[c]));
  }
  return f;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw DataError(path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(path.string() + ": cannot open for writing");
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw DataError(path.string() + ": write failed");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_record_file(const std::filesystem::path& path, const RecordFile& f) {
  write_text_file(path, format_record_file(f));
}

RecordFile read_record_file(const std::filesystem::path& path) {
  try {
    return parse_record_file(read_text_file(path));
  } catch (const DataError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path.string(), 0) == 0) throw;
    throw DataError(path.string() + ": " + msg);
  }
}

RecordFile to_record_file(const ScanRecord& rec) {
  RecordFile f;
  f.kind = RecordFile::Kind::raw;
  f.meta = to_config(rec.config, rec.physics);
  f.columns = {"t", "bx_ramp", "st_raw", "sb_raw"};
  f.data = {rec.t, rec.bx_ramp, rec.st_raw, rec.sb_raw};
  return f;
}

ScanRecord scan_from_record_file(const RecordFile& f) {
  if (f.kind != RecordFile::Kind::raw) throw DataError("expected a raw record, got a demodulated one");
  ScanRecord rec;
  apply_config(f.meta, rec.config, rec.physics);
  rec.t = f.column("t");
  rec.bx_ramp = f.column("bx_ramp");
  rec.st_raw = f.column("st_raw");
  rec.sb_raw = f.column("sb_raw");
  return rec;
}

RecordFile to_record_file(const DemodRecord& rec, const ConfigMap& meta) {
  RecordFile f;
  f.kind = RecordFile::Kind::demod;
  f.meta = meta;
  f.columns = {"t", "bx", "st", "sb", "branch"};
  std::vector<double> br(rec.size());
  for (std::size_t i = 0; i < rec.size(); ++i) br[i] = static_cast<double>(static_cast<int>(rec.branch[i]));
  f.data = {rec.t, rec.bx, rec.st, rec.sb, br};
  return f;
}

DemodRecord demod_from_record_file(const RecordFile& f) {
  if (f.kind != RecordFile::Kind::demod) throw DataError("expected a demodulated record, got a raw one");
  DemodRecord d;
  d.t = f.column("t");
  d.bx = f.column("bx");
  d.st = f.column("st");
  d.sb = f.column("sb");
  const auto& br = f.column("branch");
  d.branch.reserve(br.size());
  for (double b : br) {
    if (b != 1.0 && b != -1.0) throw DataError("branch column must hold +1 or -1");
    d.branch.push_back(b > 0 ? Branch::up : Branch::down);
  }
  return d;
}

}  // namespace bistab
