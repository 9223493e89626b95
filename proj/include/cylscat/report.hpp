#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cylscat::report {

inline constexpr const char* kSchemaVersion = "cylscat.report.v1";

// FNV-1a over the raw config bytes, printed as 16 hex digits
std::string hash_hex(const std::string& bytes);

// fixed %.12g rendering so reruns produce byte-identical files
std::string fmt(double x);

struct TaskOutcome {
  std::string name;
  std::string status = "ok";  // ok | finding | error
  std::string detail;
  std::string headline_label;
  double headline = 0;
  bool has_headline = false;
  std::vector<std::string> files;  // outputs, relative to the run directory
  double seconds = 0;
};

struct RunManifest {
  std::string schema = kSchemaVersion;
  std::string config_path;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string outdir;
  double total_seconds = 0;
  std::vector<TaskOutcome> tasks;
};

std::string csv_text(const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows);
std::string csv_text(const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
void write_text(const std::string& path, const std::string& text);

std::string manifest_json(const RunManifest& m);
void write_manifest(const std::string& path, const RunManifest& m);
RunManifest read_manifest(const std::string& path);

// one row per task; declared outputs that are missing on disk get flagged
std::string digest_table(const RunManifest& m, const std::string& base_dir);

// 0 all ok, 2 when any task reported a finding or failed
int exit_code_for(const RunManifest& m);

}  // namespace cylscat::report
