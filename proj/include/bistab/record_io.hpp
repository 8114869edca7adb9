#pragma once

// Text formats. Configs are flat "section.key = value" lines; record files are
// a '#'-prefixed metadata header followed by comma-separated columns.

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bistab/instrument.hpp"

namespace bistab {

inline constexpr int kRecordSchemaVersion = 1;
inline constexpr int kConfigVersion = 1;

/// Malformed or unreadable input (bad syntax, unknown schema, I/O failure).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ConfigMap = std::map<std::string, std::string>;

/// Accepts "key = value", "# comment" (also trailing, after whitespace) and
/// "[section]" lines; a section prefixes the keys below it
/// ("[scan]" + "mod_freq" -> "scan.mod_freq").
ConfigMap parse_config(std::string_view text);
ConfigMap read_config_file(const std::filesystem::path& path);
std::string format_config(const ConfigMap& cfg);

/// Shortest text that parses back to exactly the same double.
std::string format_double(double v);
double parse_double(std::string_view s, std::string_view what);

ConfigMap to_config(const ScanConfig& scan, const Physics& ph);

/// Overwrites the fields named in `cfg`. Keys outside the scan/ramp/physics
/// sections are ignored and returned; a malformed value throws DataError.
std::vector<std::string> apply_config(const ConfigMap& cfg, ScanConfig& scan, Physics& ph);

struct Setup {
  ScanConfig scan;
  Physics physics;
};

/// Preset at preset.chi (default: ramp.ellipticity_deg, else 0.25 deg) with
/// every other key applied on top.
Setup setup_from_config(const ConfigMap& cfg);

struct RecordFile {
  enum class Kind { raw, demod };
  Kind kind = Kind::raw;
  ConfigMap meta;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> data;  // one vector per column

  std::size_t rows() const { return data.empty() ? 0 : data.front().size(); }
  const std::vector<double>& column(std::string_view name) const;
};

std::string format_record_file(const RecordFile& f);
RecordFile parse_record_file(std::string_view text);
void write_record_file(const std::filesystem::path& path, const RecordFile& f);
RecordFile read_record_file(const std::filesystem::path& path);

RecordFile to_record_file(const ScanRecord& rec);
ScanRecord scan_from_record_file(const RecordFile& f);

/// `meta` is stored verbatim (e.g. the source config plus demod settings).
RecordFile to_record_file(const DemodRecord& rec, const ConfigMap& meta = {});
DemodRecord demod_from_record_file(const RecordFile& f);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace bistab
