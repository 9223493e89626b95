#pragma once

#include "cylscat/geometry.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cylscat::config {

// raw key-value tree: section name (dotted) -> key -> value text, with source lines
// kept for diagnostics and a used flag for unknown-key rejection
struct RawValue {
  std::string text;
  int line = 0;
  mutable bool used = false;
};

struct RawConfig {
  std::map<std::string, std::map<std::string, RawValue>> sections;
  std::string path;

  bool has_section(const std::string& s) const { return sections.count(s) > 0; }
  const RawValue* find(const std::string& section, const std::string& key) const;
};

// INI-like text: [dotted.section] headers, key = value lines, # and ; comments.
// JSON files carry the same schema as nested objects; scalars and flat arrays only.
RawConfig parse_config_text(const std::string& text, const std::string& path);
RawConfig parse_config_json(const std::string& text, const std::string& path);
RawConfig parse_config_file(const std::string& path);

struct ExperimentConfig {
  std::string kind;
  std::string name;
  std::uint64_t seed = 42;
  std::string outdir = "out";

  bool has_geometry = false;
  geometry::ManifoldConfig geom;

  std::vector<double> hs;
  std::vector<double> thetas;
  std::vector<double> sigmas;  // per-h transverse values for the probe kinds

  std::map<std::string, double> params;
  std::map<std::string, std::string> sparams;
  std::map<std::string, double> tol;

  std::string source_path;
  std::string source_text;  // raw bytes, hashed into the manifest

  double param(const std::string& key, double fallback) const;
  double require_param(const std::string& key) const;
  std::string sparam(const std::string& key, const std::string& fallback) const;
};

extern const std::vector<std::string> kKinds;

// typed load with validation: unknown sections or keys, malformed numbers, and
// missing required fields all throw input_error naming the file and line
ExperimentConfig load_config(const RawConfig& raw);
ExperimentConfig load_config_file(const std::string& path);

}  // namespace cylscat::config
