#include "cylscat/config.hpp"

#include "cylscat/core.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace cylscat::config {

using nlohmann::json;

const std::vector<std::string> kKinds = {"validate",   "bounds",   "semiclassical", "scan",
                                         "modes",      "embedded", "agmon",         "microlocal",
                                         "resonances", "vodev",    "region"};

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace((unsigned char)s[a])) ++a;
  while (b > a && std::isspace((unsigned char)s[b - 1])) --b;
  return s.substr(a, b - a);
}

[[noreturn]] void fail(const std::string& path, int line, const std::string& msg) {
  std::ostringstream os;
  os << path;
  if (line > 0) os << ":" << line;
  os << ": " << msg;
  throw input_error(os.str());
}

double parse_double(const RawConfig& raw, const std::string& section, const RawValue& v) {
  try {
    size_t used = 0;
    const double x = std::stod(v.text, &used);
    if (trim(v.text.substr(used)).size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    fail(raw.path, v.line, "expected a number in [" + section + "], got '" + v.text + "'");
  }
}

std::vector<double> parse_list(const RawConfig& raw, const std::string& section,
                               const RawValue& v) {
  std::vector<double> xs;
  std::string item;
  std::stringstream ss(v.text);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      size_t used = 0;
      xs.push_back(std::stod(item, &used));
      if (trim(item.substr(used)).size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      fail(raw.path, v.line, "expected a number list in [" + section + "], got '" + v.text + "'");
    }
  }
  if (xs.empty()) fail(raw.path, v.line, "empty list in [" + section + "]");
  return xs;
}

// access wrapper that marks keys used as they are read
struct Section {
  const RawConfig* raw;
  std::string name;
  bool present;

  const RawValue* get(const std::string& key) const {
    const RawValue* v = raw->find(name, key);
    if (v) v->used = true;
    return v;
  }
  std::string str(const std::string& key, const std::string& fb) const {
    const RawValue* v = get(key);
    return v ? trim(v->text) : fb;
  }
  std::string require_str(const std::string& key) const {
    const RawValue* v = get(key);
    if (!v) fail(raw->path, 0, "missing required key '" + key + "' in [" + name + "]");
    return trim(v->text);
  }
  double num(const std::string& key, double fb) const {
    const RawValue* v = get(key);
    return v ? parse_double(*raw, name, *v) : fb;
  }
  std::vector<double> list(const std::string& key) const {
    const RawValue* v = get(key);
    return v ? parse_list(*raw, name, *v) : std::vector<double>{};
  }
};

Section section_of(const RawConfig& raw, const std::string& name) {
  return Section{&raw, name, raw.has_section(name)};
}

std::vector<double> load_column_pairs(const std::string& file, std::vector<double>& rs) {
  std::ifstream in(file);
  if (!in) throw input_error("cannot open tabulated data file '" + file + "'");
  std::vector<double> vals;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double r, v;
    if (!(ls >> r >> v)) throw input_error("bad row in tabulated data file '" + file + "'");
    rs.push_back(r);
    vals.push_back(v);
  }
  if (vals.size() < 4) throw input_error("tabulated data file '" + file + "' has fewer than 4 rows");
  return vals;
}

geometry::Profile load_profile(const RawConfig& raw) {
  Section s = section_of(raw, "geometry.profile");
  const std::string family = s.require_str("family");
  if (family == "power")
    return geometry::Profile::power(s.num("c", 0.5), s.num("m", 1), s.num("delta0", 0));
  if (family == "bump") return geometry::Profile::bump(s.num("c", 0.5), s.num("R", 4));
  if (family == "hourglass") return geometry::Profile::hourglass(s.num("c", 0.5), s.num("R", 4));
  if (family == "tabulated") {
    std::vector<double> rs;
    std::vector<double> vals = load_column_pairs(s.require_str("file"), rs);
    const double r0 = rs.front();
    const double dr = (rs.back() - rs.front()) / (double)(rs.size() - 1);
    for (size_t i = 1; i < rs.size(); ++i)
      if (std::abs(rs[i] - rs[i - 1] - dr) > 1e-9 * (1 + std::abs(dr)))
        throw input_error("tabulated profile grid is not uniform");
    return geometry::Profile::tabulated(r0, dr, vals, s.num("delta0", 0),
                                        s.num("full_line", 0) != 0);
  }
  fail(raw.path, 0, "unknown profile family '" + family + "'");
}

geometry::RepulsivePotential load_potential(const RawConfig& raw) {
  Section s = section_of(raw, "geometry.potential");
  if (!s.present) return geometry::RepulsivePotential::zero();
  const std::string family = s.require_str("family");
  if (family == "zero") return geometry::RepulsivePotential::zero();
  if (family == "power") return geometry::RepulsivePotential::power(s.num("A", 1), s.num("m", 1));
  if (family == "bump") return geometry::RepulsivePotential::bump(s.num("A", 1), s.num("R", 4));
  if (family == "tabulated") {
    std::vector<double> rs;
    std::vector<double> vals = load_column_pairs(s.require_str("file"), rs);
    const double dr = (rs.back() - rs.front()) / (double)(rs.size() - 1);
    return geometry::RepulsivePotential::tabulated(rs.front(), dr, vals, s.num("deltaV", 1));
  }
  fail(raw.path, 0, "unknown potential family '" + family + "'");
}

geometry::TransverseSpectrum load_spectrum(const RawConfig& raw) {
  Section s = section_of(raw, "geometry.spectrum");
  if (!s.present) return geometry::TransverseSpectrum::circle(2 * pi);
  const std::string kind = s.str("kind", "circle");
  if (kind == "circle") return geometry::TransverseSpectrum::circle(s.num("L", 2 * pi));
  if (kind == "sphere") return geometry::TransverseSpectrum::sphere((int)s.num("dim", 2));
  if (kind == "list") {
    std::vector<double> s2 = s.list("sigma2");
    std::vector<double> md = s.list("mult");
    std::vector<int> mult;
    if (md.empty()) mult.assign(s2.size(), 1);
    for (double m : md) mult.push_back((int)std::llround(m));
    if (mult.size() != s2.size())
      fail(raw.path, 0, "sigma2 and mult lengths differ in [geometry.spectrum]");
    return geometry::TransverseSpectrum::list(s2, mult);
  }
  fail(raw.path, 0, "unknown spectrum kind '" + kind + "'");
}

geometry::ManifoldConfig load_geometry(const RawConfig& raw) {
  Section s = section_of(raw, "geometry");
  geometry::ManifoldConfig g;
  const std::string domain = s.str("domain", "half_cylinder");
  if (domain == "half_cylinder")
    g.domain = geometry::ManifoldConfig::Domain::half_cylinder;
  else if (domain == "full_cylinder")
    g.domain = geometry::ManifoldConfig::Domain::full_cylinder;
  else
    fail(raw.path, 0, "unknown domain '" + domain + "'");
  g.d = (int)s.num("dim", 2);
  if (g.d < 2) fail(raw.path, 0, "dim must be >= 2");
  g.E0 = s.num("E0", 1);
  g.cJ = s.num("cJ", 0.5);
  if (raw.has_section("geometry.profile")) g.profile = load_profile(raw);
  g.spectrum = load_spectrum(raw);
  g.VL = load_potential(raw);
  Section sr = section_of(raw, "geometry.short_range");
  if (sr.present) {
    g.VS.amp = sr.num("amp", 0);
    g.VS.lo = sr.num("lo", 0.5);
    g.VS.hi = sr.num("hi", 4.5);
    g.VS.w = sr.num("w", 1);
  }
  for (const std::string wname : {"geometry.well", "geometry.well.2", "geometry.well.3"}) {
    Section w = section_of(raw, wname);
    if (!w.present) continue;
    geometry::Well well;
    well.depth = w.num("depth", 1);
    well.lo = w.num("lo", -4);
    well.hi = w.num("hi", 4);
    well.ramp = w.num("ramp", 2);
    g.wells.push_back(well);
  }
  return g;
}

// accepted [params] keys per experiment kind
const std::map<std::string, std::set<std::string>> kParamKeys = {
    {"validate", {"rmax", "n"}},
    {"bounds",
     {"z_count", "z_abs_min", "z_abs_max", "z_dist_min", "delta", "trunc_stride", "checks"}},
    {"semiclassical", {"zeta_re", "zeta_im", "zeta2_re", "zeta2_im", "tol_exp"}},
    {"scan", {"x_lo", "x_hi", "nx", "eps", "chi_lo", "chi_hi"}},
    {"modes", {"s1", "s2", "s", "eps", "tol_exp", "max_modes"}},
    {"embedded", {"mode", "J", "k", "R", "c", "rmax", "dr", "consistency"}},
    {"agmon", {"rsplit", "s", "eps"}},
    {"microlocal", {"eps", "min_out_slope", "floor_in_slope"}},
    {"resonances",
     {"level", "re_lo", "re_hi", "im_lo", "im_hi", "r_match", "steps_per_wave", "min_steps"}},
    {"vodev",
     {"z_re", "z_im", "z0_re", "z0_im", "chi_a", "chi_b", "chi1_a", "chi1_b", "rmax", "dr",
      "levels_cap"}},
    {"region", {"eps", "cprime_floor", "chi_a", "chi_b"}},
};

const std::set<std::string> kStringParams = {"mode", "checks"};

const std::set<std::string> kKnownSections = {
    "experiment",       "output",      "geometry",           "geometry.profile",
    "geometry.spectrum", "geometry.potential", "geometry.short_range", "geometry.well",
    "geometry.well.2",  "geometry.well.3", "sweep",          "tolerances",
    "params"};

}  // namespace

const RawValue* RawConfig::find(const std::string& section, const std::string& key) const {
  auto it = sections.find(section);
  if (it == sections.end()) return nullptr;
  auto jt = it->second.find(key);
  return jt == it->second.end() ? nullptr : &jt->second;
}

RawConfig parse_config_text(const std::string& text, const std::string& path) {
  RawConfig raw;
  raw.path = path;
  std::string cur;
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    const size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(path, ln, "unterminated section header");
      cur = trim(line.substr(1, line.size() - 2));
      if (cur.empty()) fail(path, ln, "empty section name");
      raw.sections[cur];
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) fail(path, ln, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) fail(path, ln, "empty key");
    if (cur.empty()) fail(path, ln, "key '" + key + "' appears before any [section]");
    if (raw.sections[cur].count(key)) fail(path, ln, "duplicate key '" + key + "'");
    raw.sections[cur][key] = RawValue{val, ln, false};
  }
  return raw;
}

namespace {
std::string scalar_text(const json& w, const std::string& where, const std::string& path) {
  if (w.is_string()) return w.get<std::string>();
  if (w.is_boolean()) return w.get<bool>() ? "1" : "0";
  if (w.is_number()) return w.dump();
  if (w.is_array()) {
    std::string text;
    for (size_t i = 0; i < w.size(); ++i) {
      if (!w[i].is_number())
        throw input_error(path + ": arrays may hold numbers only (" + where + ")");
      text += (i ? "," : "") + w[i].dump();
    }
    return text;
  }
  throw input_error(path + ": unsupported JSON value at " + where);
}

void flatten_json(const json& node, const std::string& prefix, RawConfig& raw) {
  if (!node.is_object()) throw input_error(raw.path + ": JSON sections must be objects");
  if (!prefix.empty()) raw.sections[prefix];
  for (auto it = node.begin(); it != node.end(); ++it) {
    const json& v = it.value();
    const std::string name = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (v.is_object()) {
      flatten_json(v, name, raw);
    } else {
      if (prefix.empty())
        throw input_error(raw.path + ": top-level JSON entries must be section objects");
      raw.sections[prefix][it.key()] = RawValue{scalar_text(v, name, raw.path), 0, false};
    }
  }
}
}  // namespace

RawConfig parse_config_json(const std::string& text, const std::string& path) {
  RawConfig raw;
  raw.path = path;
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw input_error(path + ": JSON parse error: " + e.what());
  }
  flatten_json(j, "", raw);
  return raw;
}

RawConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const size_t first = text.find_first_not_of(" \t\r\n");
  RawConfig raw = (first != std::string::npos && text[first] == '{')
                      ? parse_config_json(text, path)
                      : parse_config_text(text, path);
  for (auto& [sec, kv] : raw.sections) {
    (void)kv;
    if (!kKnownSections.count(sec)) throw input_error(path + ": unknown section [" + sec + "]");
  }
  return raw;
}

double ExperimentConfig::param(const std::string& key, double fallback) const {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

double ExperimentConfig::require_param(const std::string& key) const {
  auto it = params.find(key);
  if (it == params.end())
    throw input_error(source_path + ": experiment '" + kind + "' requires params." + key);
  return it->second;
}

std::string ExperimentConfig::sparam(const std::string& key, const std::string& fallback) const {
  auto it = sparams.find(key);
  return it == sparams.end() ? fallback : it->second;
}

ExperimentConfig load_config(const RawConfig& raw) {
  ExperimentConfig out;
  out.source_path = raw.path;

  Section ex = section_of(raw, "experiment");
  if (!ex.present) fail(raw.path, 0, "missing [experiment] section");
  out.kind = ex.require_str("kind");
  if (std::find(kKinds.begin(), kKinds.end(), out.kind) == kKinds.end())
    fail(raw.path, 0, "unknown experiment kind '" + out.kind + "'");
  out.name = ex.str("name", out.kind);
  const double seed = ex.num("seed", 42);
  if (seed < 0 || seed != std::floor(seed)) fail(raw.path, 0, "seed must be a whole number >= 0");
  out.seed = (std::uint64_t)seed;

  Section o = section_of(raw, "output");
  out.outdir = o.str("dir", "out");

  out.has_geometry = raw.has_section("geometry") || raw.has_section("geometry.profile");
  if (out.has_geometry) out.geom = load_geometry(raw);

  Section sw = section_of(raw, "sweep");
  if (sw.present) {
    out.hs = sw.list("h");
    if (out.hs.empty()) {
      const double hmin = sw.num("h_min", 0), hmax = sw.num("h_max", 0);
      const int hcount = (int)sw.num("h_count", 0);
      if (hcount > 0) {
        if (!(hmin > 0 && hmax > hmin)) fail(raw.path, 0, "h_min/h_max must satisfy 0 < min < max");
        for (int i = 0; i < hcount; ++i)
          out.hs.push_back(hcount == 1 ? hmin
                                       : hmin * std::pow(hmax / hmin, i / double(hcount - 1)));
      }
    }
    out.thetas = sw.list("theta");
    out.sigmas = sw.list("sigma");
  }
  for (double h : out.hs)
    if (!(h > 0)) fail(raw.path, 0, "sweep h values must be positive");

  Section tl = section_of(raw, "tolerances");
  if (tl.present)
    for (auto& [k, v] : raw.sections.at("tolerances")) {
      v.used = true;
      const double x = parse_double(raw, "tolerances", v);
      if (!(x > 0)) fail(raw.path, v.line, "tolerance '" + k + "' must be positive");
      out.tol[k] = x;
    }

  Section pr = section_of(raw, "params");
  if (pr.present) {
    const auto& allowed = kParamKeys.at(out.kind);
    for (auto& [k, v] : raw.sections.at("params")) {
      v.used = true;
      if (!allowed.count(k))
        fail(raw.path, v.line, "params." + k + " is not accepted by experiment '" + out.kind + "'");
      if (kStringParams.count(k))
        out.sparams[k] = trim(v.text);
      else
        out.params[k] = parse_double(raw, "params", v);
    }
  }

  // unknown-key rejection: anything not consumed above is an error
  for (const auto& [sec, kv] : raw.sections)
    for (const auto& [key, v] : kv)
      if (!v.used) fail(raw.path, v.line, "unknown key '" + key + "' in [" + sec + "]");

  return out;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  RawConfig raw = parse_config_file(path);
  ExperimentConfig cfg = load_config(raw);
  cfg.source_text = ss.str();
  return cfg;
}

}  // namespace cylscat::config
