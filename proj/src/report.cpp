#include "cylscat/report.hpp"

#include "cylscat/core.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cylscat::report {

using nlohmann::json;

std::string hash_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write '" + path + "'");
  out << text;
}

std::string csv_text(const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream os;
  for (size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << "\n";
  }
  return os.str();
}

std::string csv_text(const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows) {
  std::vector<std::vector<std::string>> cells;
  cells.reserve(rows.size());
  for (const auto& row : rows) {
    std::vector<std::string> r;
    r.reserve(row.size());
    for (double x : row) r.push_back(fmt(x));
    cells.push_back(std::move(r));
  }
  return csv_text(header, cells);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  write_text(path, csv_text(header, rows));
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  write_text(path, csv_text(header, rows));
}

std::string manifest_json(const RunManifest& m) {
  json j;
  j["schema"] = m.schema;
  j["config_path"] = m.config_path;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["outdir"] = m.outdir;
  j["total_seconds"] = m.total_seconds;
  json tasks = json::array();
  for (const auto& t : m.tasks) {
    json jt;
    jt["name"] = t.name;
    jt["status"] = t.status;
    jt["detail"] = t.detail;
    if (t.has_headline) {
      jt["headline_label"] = t.headline_label;
      jt["headline"] = t.headline;
    }
    jt["files"] = t.files;
    jt["seconds"] = t.seconds;
    tasks.push_back(std::move(jt));
  }
  j["tasks"] = std::move(tasks);
  return j.dump(2) + "\n";
}

void write_manifest(const std::string& path, const RunManifest& m) {
  write_text(path, manifest_json(m));
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open manifest '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw input_error(path + ": manifest parse error: " + e.what());
  }
  if (!j.is_object() || j.value("schema", "") != std::string(kSchemaVersion))
    throw input_error(path + ": not a " + std::string(kSchemaVersion) + " manifest");
  RunManifest m;
  m.config_path = j.value("config_path", "");
  m.config_hash = j.value("config_hash", "");
  m.seed = j.value("seed", (std::uint64_t)0);
  m.outdir = j.value("outdir", "");
  m.total_seconds = j.value("total_seconds", 0.0);
  for (const auto& jt : j.value("tasks", json::array())) {
    TaskOutcome t;
    t.name = jt.value("name", "");
    t.status = jt.value("status", "");
    t.detail = jt.value("detail", "");
    t.has_headline = jt.contains("headline");
    t.headline = jt.value("headline", 0.0);
    t.headline_label = jt.value("headline_label", "");
    for (const auto& f : jt.value("files", json::array())) t.files.push_back(f.get<std::string>());
    t.seconds = jt.value("seconds", 0.0);
    m.tasks.push_back(std::move(t));
  }
  return m;
}

std::string digest_table(const RunManifest& m, const std::string& base_dir) {
  std::ostringstream os;
  size_t wname = 4;
  for (const auto& t : m.tasks) wname = std::max(wname, t.name.size());
  os << std::string(wname, ' ').replace(0, 4, "task") << "  status   result\n";
  for (const auto& t : m.tasks) {
    std::string result;
    if (t.has_headline)
      result = t.headline_label + " = " + fmt(t.headline);
    else if (!t.detail.empty())
      result = t.detail;
    std::string missing;
    for (const auto& f : t.files)
      if (!std::filesystem::exists(std::filesystem::path(base_dir) / f))
        missing += (missing.empty() ? "" : ", ") + f;
    if (!missing.empty()) result += (result.empty() ? "" : "; ") + ("MISSING: " + missing);
    std::string name = t.name;
    name.resize(wname, ' ');
    std::string status = t.status;
    status.resize(7, ' ');
    os << name << "  " << status << "  " << result << "\n";
  }
  return os.str();
}

int exit_code_for(const RunManifest& m) {
  for (const auto& t : m.tasks)
    if (t.status != "ok") return 2;
  return 0;
}

}  // namespace cylscat::report
