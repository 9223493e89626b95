#include "cylscat/experiments.hpp"

#include "cylscat/continuation.hpp"
#include "cylscat/embedded.hpp"
#include "cylscat/geometry.hpp"
#include "cylscat/halfline.hpp"
#include "cylscat/modes.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

namespace cylscat::experiments {

using config::ExperimentConfig;
using report::fmt;
using report::TaskOutcome;

namespace {

std::vector<double> default_hs(int n, double lo, double hi) {
  std::vector<double> hs;
  for (int i = 0; i < n; ++i)
    hs.push_back(n == 1 ? lo : lo * std::pow(hi / lo, i / double(n - 1)));
  return hs;
}

std::vector<double> sweep_hs(const ExperimentConfig& cfg, std::vector<double> fallback) {
  return cfg.hs.empty() ? fallback : cfg.hs;
}

std::string bstr(bool b) { return b ? "1" : "0"; }

halfline::WeightFn ramp_down(double a, double b) {
  if (!(b > a)) throw input_error("cutoff needs hi > lo");
  return halfline::w_window(0, a, b - a);
}

// blocked-mode pairs for the tunneling probes: h^2 sigma^2 = E0 + 1 unless a sigma
// sweep pins them explicitly
std::vector<std::pair<double, double>> h_sigma_pairs(const ExperimentConfig& cfg,
                                                     const std::vector<double>& hs) {
  std::vector<std::pair<double, double>> ps;
  const auto& sg = cfg.sigmas;
  if (!sg.empty() && sg.size() != 1 && sg.size() != hs.size())
    throw input_error(cfg.source_path + ": sweep.sigma must have length 1 or match h");
  for (size_t i = 0; i < hs.size(); ++i) {
    const double sigma = sg.empty() ? std::sqrt(cfg.geom.E0 + 1) / hs[i]
                                    : (sg.size() == 1 ? sg[0] : sg[i]);
    ps.emplace_back(hs[i], sigma);
  }
  return ps;
}

// z samples off [0, infinity): log-uniform modulus, log-uniform argument decade
std::vector<cplx> sample_z_grid(std::uint64_t seed, int count, double abs_min, double abs_max,
                                double arg_min) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0, 1);
  std::vector<cplx> zs;
  zs.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double m = abs_min * std::pow(abs_max / abs_min, uni(rng));
    const double a = arg_min * std::pow(pi / arg_min, uni(rng));
    const double sgn = uni(rng) < 0.5 ? 1 : -1;
    zs.push_back(m * std::exp(cplx(0, sgn * a)));
  }
  return zs;
}

TaskResult validation_result(const geometry::ProfileReport& pf,
                             const geometry::PotentialReport& pv, bool with_profile) {
  TaskResult r;
  std::vector<std::vector<std::string>> rows;
  double min_margin = std::numeric_limits<double>::infinity();
  std::string failed;
  auto add = [&](const std::string& object, const geometry::CheckRecord& c) {
    rows.push_back({object, c.name, fmt(c.margin), bstr(c.pass)});
    min_margin = std::min(min_margin, c.margin);
    if (!c.pass) failed += (failed.empty() ? "" : ", ") + object + ":" + c.name;
  };
  if (with_profile)
    for (const auto& c : pf.checks) add("profile", c);
  for (const auto& c : pv.checks) add("potential", c);
  r.files.emplace_back("validate_checks.csv",
                       report::csv_text({"object", "check", "margin", "pass"}, rows));
  r.outcome.files.push_back("validate_checks.csv");
  const bool pass = (!with_profile || pf.pass) && pv.pass;
  r.outcome.status = pass ? "ok" : "finding";
  r.outcome.detail = pass ? "all geometry checks passed" : "geometry checks failed: " + failed;
  r.outcome.headline_label = "min_margin";
  r.outcome.headline = min_margin;
  r.outcome.has_headline = true;
  return r;
}

std::vector<Task> bounds_tasks(const ExperimentConfig& cfg) {
  const geometry::RepulsivePotential VD = cfg.geom.VL;
  const int count = (int)cfg.param("z_count", 240);
  if (count < 1) throw input_error(cfg.source_path + ": params.z_count must be positive");
  const double abs_min = cfg.param("z_abs_min", 1e-3);
  const double abs_max = cfg.param("z_abs_max", 1e3);
  const double arg_min = cfg.param("z_dist_min", 1e-6);
  const double delta = cfg.param("delta", 1.0);
  const double theta = cfg.param("theta", 0.5);
  const double tol = cfg.tol.count("bound") ? cfg.tol.at("bound") : 0.02;
  const std::string which = cfg.sparam("checks", "big,small,product");

  std::vector<Task> tasks;
  std::string item;
  std::stringstream ss(which);
  int salt = 0;
  while (std::getline(ss, item, ',')) {
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    while (!item.empty() && item.back() == ' ') item.pop_back();
    if (item.empty()) continue;
    if (item != "big" && item != "small" && item != "product")
      throw input_error(cfg.source_path + ": params.checks entries must be big|small|product");
    const std::uint64_t seed = cfg.seed + 1000 * salt++;
    tasks.push_back(
        {"bounds_" + item, [=]() {
           const std::vector<cplx> zs = sample_z_grid(seed, count, abs_min, abs_max, arg_min);
           halfline::BoundReport rep;
           if (item == "big")
             rep = halfline::check_uniform_big(VD, zs, delta, tol);
           else if (item == "small")
             rep = halfline::check_uniform_small(VD, zs, delta, theta, tol);
           else
             rep = halfline::check_uniform_product(VD, zs, delta, theta, tol);
           std::vector<std::vector<std::string>> rows;
           for (const auto& rec : rep.records)
             rows.push_back({fmt(rec.z.real()), fmt(rec.z.imag()), fmt(rec.value), fmt(rec.rhs),
                             fmt(rec.ratio), fmt(rec.trunc), bstr(rec.converged)});
           TaskResult r;
           const std::string file = "bounds_" + item + ".csv";
           r.files.emplace_back(
               file, report::csv_text(
                         {"z_re", "z_im", "value", "rhs", "ratio", "trunc", "converged"}, rows));
           r.outcome.files.push_back(file);
           r.outcome.status = rep.pass ? "ok" : "finding";
           std::ostringstream d;
           d << "worst ratio " << fmt(rep.worst_ratio) << " at z = (" << fmt(rep.worst_z.real())
             << ", " << fmt(rep.worst_z.imag()) << ") over " << rep.records.size() << " points";
           r.outcome.detail = d.str();
           r.outcome.headline_label = "worst_ratio";
           r.outcome.headline = rep.worst_ratio;
           r.outcome.has_headline = true;
           return r;
         }});
  }
  if (tasks.empty()) throw input_error(cfg.source_path + ": params.checks selects nothing");
  return tasks;
}

Task semiclassical_task(const ExperimentConfig& cfg) {
  const geometry::RepulsivePotential VD = cfg.geom.VL;
  const std::vector<double> hs = sweep_hs(cfg, default_hs(6, 0.02, 0.2));
  if (hs.size() < 2) throw input_error(cfg.source_path + ": semiclassical needs >= 2 h values");
  const cplx zf(cfg.param("zeta_re", 2), cfg.param("zeta_im", 1e-6));
  const cplx zs(cfg.param("zeta2_re", 2), cfg.param("zeta2_im", 2e-6));
  const double tol_exp = cfg.param("tol_exp", 0.15);
  return {"semiclassical", [=]() {
            const auto legs = halfline::default_semiclassical_legs(VD, zf, zs);
            const auto rep = halfline::check_semiclassical(legs, hs, tol_exp);
            std::vector<std::vector<std::string>> vrows, frows;
            double worst = 0;
            for (const auto& leg : rep.legs) {
              for (size_t i = 0; i < leg.hs.size(); ++i)
                vrows.push_back({leg.name, fmt(leg.hs[i]), fmt(leg.values[i]), fmt(leg.cs[i])});
              frows.push_back({leg.name, fmt(leg.fit.slope), fmt(leg.expected),
                               fmt(leg.c_spread), bstr(leg.pass)});
              worst = std::max(worst, std::abs(leg.fit.slope - leg.expected));
            }
            TaskResult r;
            r.files.emplace_back("semiclassical_values.csv",
                                 report::csv_text({"leg", "h", "value", "C"}, vrows));
            r.files.emplace_back(
                "semiclassical_fits.csv",
                report::csv_text({"leg", "slope", "expected", "c_spread", "pass"}, frows));
            r.outcome.files = {"semiclassical_values.csv", "semiclassical_fits.csv"};
            r.outcome.status = rep.pass ? "ok" : "finding";
            r.outcome.detail =
                rep.pass ? "every leg matches its model exponent" : "an exponent drifted";
            r.outcome.headline_label = "max_exponent_err";
            r.outcome.headline = worst;
            r.outcome.has_headline = true;
            return r;
          }};
}

Task scan_task(const ExperimentConfig& cfg) {
  const auto geom = cfg.geom;
  const double x_lo = cfg.param("x_lo", 0.25);
  const double x_hi = cfg.param("x_hi", 64);
  const int nx = (int)cfg.param("nx", 25);
  const double eps = cfg.param("eps", 1e-6);
  const double chi_lo = cfg.param("chi_lo", 5);
  const double chi_hi = cfg.param("chi_hi", 6);
  if (!(x_hi > x_lo && x_lo > 0) || nx < 4)
    throw input_error(cfg.source_path + ": scan needs 0 < x_lo < x_hi and nx >= 4");
  const halfline::WeightFn chi = ramp_down(chi_lo, chi_hi);
  return {"scan", [=]() {
            const auto rep = modes::scan_uniform_bound(geom, x_lo, x_hi, nx, eps, chi);
            std::vector<std::vector<std::string>> rows;
            for (const auto& rec : rep.records)
              rows.push_back({fmt(rec.x), fmt(rec.value), bstr(rec.pole)});
            TaskResult r;
            r.files.emplace_back("scan.csv", report::csv_text({"x", "value", "pole"}, rows));
            r.outcome.files = {"scan.csv"};
            r.outcome.status = rep.pass ? "ok" : "finding";
            std::ostringstream d;
            d << "log-log slope " << fmt(rep.loglog.slope) << ", median " << fmt(rep.median)
              << ", poles " << rep.poles;
            r.outcome.detail = d.str();
            r.outcome.headline_label = "median_norm";
            r.outcome.headline = rep.median;
            r.outcome.has_headline = true;
            return r;
          }};
}

Task modes_task(const ExperimentConfig& cfg) {
  const auto geom = cfg.geom;
  const std::vector<double> hs = sweep_hs(cfg, default_hs(5, 0.05, 0.2));
  if (hs.size() < 2) throw input_error(cfg.source_path + ": modes needs >= 2 h values");
  const double s1 = cfg.param("s1", 1.05), s2 = cfg.param("s2", 1.05), s = cfg.param("s", 1.05);
  const double eps = cfg.param("eps", 1e-6);
  const double tol_exp = cfg.param("tol_exp", 0.3);
  const int cap = (int)cfg.param("max_modes", 10);
  return {"modes", [=]() {
            const auto rep =
                halfline::check_mode_estimates(geom, hs, s1, s2, s, eps, tol_exp, cap);
            std::vector<std::vector<std::string>> vrows, frows;
            double worst = 0;
            for (const auto& leg : rep.legs) {
              for (size_t i = 0; i < leg.hs.size(); ++i)
                vrows.push_back({leg.name, fmt(leg.hs[i]), fmt(leg.values[i])});
              frows.push_back(
                  {leg.name, fmt(leg.fit.slope), fmt(leg.expected), bstr(leg.pass)});
              worst = std::max(worst, std::abs(leg.fit.slope - leg.expected));
            }
            TaskResult r;
            r.files.emplace_back("mode_scaling.csv",
                                 report::csv_text({"leg", "h", "value"}, vrows));
            r.files.emplace_back("mode_fits.csv",
                                 report::csv_text({"leg", "slope", "expected", "pass"}, frows));
            r.outcome.files = {"mode_scaling.csv", "mode_fits.csv"};
            r.outcome.status = rep.pass ? "ok" : "finding";
            r.outcome.detail = rep.pass ? "per-class exponents match"
                                        : "a mode-class exponent drifted";
            r.outcome.headline_label = "max_exponent_err";
            r.outcome.headline = worst;
            r.outcome.has_headline = true;
            return r;
          }};

}

Task embedded_task(const ExperimentConfig& cfg) {
  const std::string mode = cfg.sparam("mode", "recipe");
  if (mode != "recipe" && mode != "multiwell")
    throw input_error(cfg.source_path + ": params.mode must be recipe or multiwell");
  const geometry::TransverseSpectrum sp =
      cfg.has_geometry ? cfg.geom.spectrum : geometry::TransverseSpectrum::circle(2 * pi);
  const int d = cfg.has_geometry ? cfg.geom.d : 2;
  const int J = (int)cfg.param("J", 8);
  const int k = (int)cfg.param("k", 2);
  const double R = cfg.param("R", mode == "recipe" ? 4 : 6);
  const double c = cfg.param("c", 0);
  embedded::CertifyOptions co;
  co.rmax = cfg.param("rmax", 0);
  co.dr = cfg.param("dr", co.dr);
  co.consistency = cfg.param("consistency", 1) != 0;
  const embedded::HourglassSpec spec = mode == "recipe"
                                           ? embedded::recipe_spec(sp, J, R, d, c)
                                           : embedded::multiwell_spec(sp, J, k, R, d, c);
  return {"embedded_" + mode, [=]() {
            const auto rep = embedded::certify_embedded(spec, co);
            std::vector<std::vector<std::string>> rows;
            for (const auto& st : rep.states)
              rows.push_back({fmt(st.lambda), fmt(st.E), bstr(st.is_embedded), fmt(st.residual),
                              fmt(st.tail), fmt((double)st.nodes), fmt(st.doubling_shift),
                              bstr(st.stable4)});
            TaskResult r;
            r.files.emplace_back(
                "embedded_states.csv",
                report::csv_text({"lambda", "E", "embedded", "residual", "tail", "nodes",
                                  "doubling_shift", "stable"},
                                 rows));
            r.outcome.files = {"embedded_states.csv"};
            r.outcome.status = rep.pass ? "ok" : "finding";
            std::ostringstream d2;
            d2 << rep.embedded_count << " embedded eigenvalue(s), multiplicity "
               << rep.transverse_mult;
            if (rep.discrepancy) d2 << "; criterion passed but no state was found";
            if (rep.consist_ran)
              d2 << "; monotone counterpart top E " << fmt(rep.consist_top_E)
                 << (rep.consist_pass ? " consistent" : " INCONSISTENT");
            r.outcome.detail = d2.str();
            r.outcome.headline_label = "embedded_count";
            r.outcome.headline = rep.embedded_count;
            r.outcome.has_headline = true;
            return r;
          }};
}

Task agmon_task(const ExperimentConfig& cfg) {
  const auto geom = cfg.geom;
  const auto pairs = h_sigma_pairs(cfg, sweep_hs(cfg, default_hs(5, 0.05, 0.2)));
  const double rsplit = cfg.param("rsplit", 3);
  const double s = cfg.param("s", 1.05);
  const double eps = cfg.param("eps", 1e-6);
  return {"agmon", [=]() {
            const auto rep = halfline::agmon_probe(geom, pairs, rsplit, s, eps);
            std::vector<std::vector<double>> rows;
            for (size_t i = 0; i < rep.hs.size(); ++i)
              rows.push_back({rep.hs[i], rep.sigmas[i], rep.disjoint[i], rep.overlap[i]});
            TaskResult r;
            r.files.emplace_back(
                "agmon.csv",
                report::csv_text({"h", "sigma", "disjoint", "overlap"}, rows));
            r.outcome.files = {"agmon.csv"};
            r.outcome.status = rep.pass ? "ok" : "finding";
            std::ostringstream d;
            d << "disjoint-window decay slope " << fmt(rep.decay.slope) << " per 1/h, overlap spread "
              << fmt(rep.overlap_spread);
            r.outcome.detail = d.str();
            r.outcome.headline_label = "decay_slope";
            r.outcome.headline = rep.decay.slope;
            r.outcome.has_headline = true;
            return r;
          }};
}

Task microlocal_task(const ExperimentConfig& cfg) {
  const auto geom = cfg.geom;
  const auto pairs = h_sigma_pairs(cfg, sweep_hs(cfg, default_hs(5, 0.05, 0.2)));
  const bool retarget = cfg.sigmas.empty();
  const double eps = cfg.param("eps", 1e-6);
  const double min_out = cfg.param("min_out_slope", 4);
  const double floor_in = cfg.param("floor_in_slope", -1.5);
  return {"microlocal", [=]() {
            auto ps = pairs;
            // the probe needs running-class pairs; default to a level three quarters of
            // the way up the window, above e-star whenever c_J keeps the threshold at or
            // below 3/4 E_0 (e-star may not exist at all, hence computed here, not at
            // build time)
            if (retarget) {
              for (auto& [h, sigma] : ps) {
                double target = 0.75 * geom.E0;
                const double estar = geometry::estar_threshold(geom, h);
                if (!(target > estar)) target = 0.5 * (estar + geom.E0);
                sigma = std::sqrt(geom.E0 - target) / h;
              }
            }
            const auto rep = halfline::microlocal_probe(geom, ps, eps, min_out, floor_in);
            std::vector<std::vector<double>> rows;
            for (size_t i = 0; i < rep.hs.size(); ++i)
              rows.push_back({rep.hs[i], rep.outgoing[i], rep.incoming[i]});
            TaskResult r;
            r.files.emplace_back("microlocal.csv",
                                 report::csv_text({"h", "outgoing", "incoming"}, rows));
            r.outcome.files = {"microlocal.csv"};
            r.outcome.status = rep.pass ? "ok" : "finding";
            std::ostringstream d;
            d << "outgoing slope " << fmt(rep.fit_out.slope) << ", incoming slope "
              << fmt(rep.fit_in.slope);
            r.outcome.detail = d.str();
            r.outcome.headline_label = "outgoing_slope";
            r.outcome.headline = rep.fit_out.slope;
            r.outcome.has_headline = true;
            return r;
          }};
}

std::vector<Task> resonances_tasks(const ExperimentConfig& cfg) {
  const auto geom = cfg.geom;
  const int level = (int)cfg.param("level", 0);
  const cplx lo(cfg.require_param("re_lo"), cfg.require_param("im_lo"));
  const cplx hi(cfg.require_param("re_hi"), cfg.require_param("im_hi"));
  if (!(hi.real() > lo.real() && hi.imag() > lo.imag()))
    throw input_error(cfg.source_path + ": resonance rectangle is empty");
  continuation::ShootOptions so;
  so.r_match = cfg.param("r_match", so.r_match);
  so.steps_per_wave = cfg.param("steps_per_wave", so.steps_per_wave);
  so.min_steps = (int)cfg.param("min_steps", so.min_steps);
  std::vector<Task> tasks;
  for (double h : sweep_hs(cfg, {0.4})) {
    const std::string tag = "resonances_h" + fmt(h);
    tasks.push_back(
        {tag, [=]() {
           const auto rs = continuation::mode_resonances(geom, h, level, lo, hi, so);
           std::vector<std::vector<std::string>> rows;
           for (const auto& rec : rs.records)
             rows.push_back({fmt((double)rec.level), fmt(rec.rho.real()), fmt(rec.rho.imag()),
                             fmt(rec.z.real()), fmt(rec.z.imag()), fmt(rec.wval),
                             fmt(rec.residual), fmt(rec.dh_plus), fmt(rec.dh_minus),
                             bstr(rec.physical_side)});
           TaskResult r;
           const std::string file = tag + ".csv";
           r.files.emplace_back(
               file,
               report::csv_text({"level", "rho_re", "rho_im", "z_re", "z_im", "wval", "residual",
                                 "dh_plus", "dh_minus", "physical"},
                                rows));
           r.outcome.files = {file};
           r.outcome.status = rs.count_stable ? "ok" : "error";
           std::ostringstream d;
           d << rs.records.size() << " zero(s), winding " << rs.winding_total << " over "
             << rs.cells << " cell(s)";
           if (!rs.count_stable) d << "; winding count failed to stabilize";
           r.outcome.detail = d.str();
           r.outcome.headline_label = "zeros";
           r.outcome.headline = (double)rs.records.size();
           r.outcome.has_headline = true;
           return r;
         }});
  }
  return tasks;
}

std::vector<Task> vodev_tasks(const ExperimentConfig& cfg) {
  const auto geom = cfg.geom;
  const cplx z(cfg.require_param("z_re"), cfg.require_param("z_im"));
  const cplx z0(cfg.require_param("z0_re"), cfg.require_param("z0_im"));
  const halfline::WeightFn chi = ramp_down(cfg.param("chi_a", 10), cfg.param("chi_b", 12));
  const halfline::WeightFn chi1 = ramp_down(cfg.param("chi1_a", 6), cfg.param("chi1_b", 8));
  continuation::VodevOptions vo;
  vo.rmax = cfg.param("rmax", vo.rmax);
  vo.dr = cfg.param("dr", vo.dr);
  vo.levels_cap = (int)cfg.param("levels_cap", vo.levels_cap);
  if (cfg.tol.count("vodev_rel")) vo.tol = cfg.tol.at("vodev_rel");
  std::vector<Task> tasks;
  for (double h : sweep_hs(cfg, {0.5})) {
    const std::string tag = "vodev_h" + fmt(h);
    tasks.push_back(
        {tag, [=]() {
           const auto rep = continuation::verify_vodev_identity(geom, h, z, z0, chi, chi1, vo);
           std::vector<std::vector<double>> rows;
           for (const auto& m : rep.per_mode)
             rows.push_back({(double)m.level, m.lhs_norm, m.rel, m.rel_coarse});
           TaskResult r;
           const std::string file = tag + ".csv";
           r.files.emplace_back(
               file, report::csv_text({"level", "lhs_norm", "rel", "rel_coarse"}, rows));
           r.outcome.files = {file};
           r.outcome.status = rep.pass ? "ok" : "finding";
           std::ostringstream d;
           d << "worst rel " << fmt(rep.worst) << ", order ratio " << fmt(rep.order_ratio);
           r.outcome.detail = d.str();
           r.outcome.headline_label = "worst_rel";
           r.outcome.headline = rep.worst;
           r.outcome.has_headline = true;
           return r;
         }});
  }
  return tasks;
}

Task region_task(const ExperimentConfig& cfg) {
  const auto geom = cfg.geom;
  const std::vector<double> hs = sweep_hs(cfg, {0.05, 0.1, 0.2});
  const halfline::WeightFn chi = ramp_down(cfg.param("chi_a", 5), cfg.param("chi_b", 6));
  continuation::RegionOptions ro;
  ro.eps = cfg.param("eps", ro.eps);
  ro.Cprime_floor = cfg.param("cprime_floor", ro.Cprime_floor);
  return {"region", [=]() {
            const auto rep = continuation::resonance_free_region(geom, hs, chi, ro);
            std::vector<std::vector<double>> rows;
            for (const auto& rec : rep.records)
              rows.push_back({rec.h, rec.M, rec.mu, (double)rec.resonances, rec.nearest_dh,
                              rec.inregion_max, rec.inregion_max_Cmu, rec.inregion_fit_Cmu});
            TaskResult r;
            r.files.emplace_back(
                "region.csv",
                report::csv_text({"h", "M", "mu", "resonances", "nearest_dh", "inregion_max",
                                  "inregion_max_Cmu", "inregion_fit_Cmu"},
                                 rows));
            r.files.emplace_back(
                "region_summary.csv",
                report::csv_text({"C_fit", "Cprime", "Chat", "Chat_spread", "violation", "pass"},
                                 {{fmt(rep.C_fit), fmt(rep.Cprime), fmt(rep.Chat),
                                   fmt(rep.Chat_spread), bstr(rep.violation), bstr(rep.pass)}}));
            r.outcome.files = {"region.csv", "region_summary.csv"};
            r.outcome.status = rep.pass ? "ok" : "finding";
            std::ostringstream d;
            d << "Cprime " << fmt(rep.Cprime) << ", Chat " << fmt(rep.Chat) << " (spread "
              << fmt(rep.Chat_spread) << ")" << (rep.violation ? "; RESONANCE INSIDE REGION" : "");
            r.outcome.detail = d.str();
            r.outcome.headline_label = "Cprime";
            r.outcome.headline = rep.Cprime;
            r.outcome.has_headline = true;
            return r;
          }};
}

}  // namespace

std::vector<Task> build_tasks(const ExperimentConfig& cfg) {
  const std::string& kind = cfg.kind;
  const bool needs_profile = kind == "scan" || kind == "modes" || kind == "agmon" ||
                             kind == "microlocal" || kind == "resonances" || kind == "vodev" ||
                             kind == "region";
  const bool needs_potential_only = kind == "bounds" || kind == "semiclassical";

  if ((needs_profile || kind == "validate") && !cfg.has_geometry)
    throw input_error(cfg.source_path + ": experiment '" + kind + "' needs a [geometry] section");

  std::vector<Task> tasks;

  if (needs_profile || needs_potential_only || kind == "validate") {
    const auto pf = geometry::validate_profile(cfg.geom.profile);
    const auto pv = geometry::validate_potential(cfg.geom.VL);
    const bool with_profile = needs_profile || kind == "validate";
    const bool ok = (!with_profile || pf.pass) && pv.pass;
    // invalid geometry: report the finding alone instead of running on garbage
    if (kind == "validate" || !ok) {
      tasks.push_back({"validate_geometry", [pf, pv, with_profile]() {
                         return validation_result(pf, pv, with_profile);
                       }});
      return tasks;
    }
  }

  if (kind == "bounds") return bounds_tasks(cfg);
  if (kind == "semiclassical") return {semiclassical_task(cfg)};
  if (kind == "scan") return {scan_task(cfg)};
  if (kind == "modes") return {modes_task(cfg)};
  if (kind == "embedded") return {embedded_task(cfg)};
  if (kind == "agmon") return {agmon_task(cfg)};
  if (kind == "microlocal") return {microlocal_task(cfg)};
  if (kind == "resonances") return resonances_tasks(cfg);
  if (kind == "vodev") return vodev_tasks(cfg);
  if (kind == "region") return {region_task(cfg)};
  throw input_error(cfg.source_path + ": unknown experiment kind '" + kind + "'");
}

report::RunManifest run_experiment(const ExperimentConfig& cfg, int workers,
                                   const std::string& manifest_name) {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::steady_clock::now();
  auto secs = [](std::chrono::steady_clock::time_point a) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - a).count();
  };

  std::vector<Task> tasks = build_tasks(cfg);
  std::vector<TaskResult> results(tasks.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) break;
      const auto s0 = std::chrono::steady_clock::now();
      TaskResult r;
      try {
        r = tasks[i].run();
      } catch (const std::exception& e) {
        r = TaskResult{};
        r.outcome.status = "error";
        r.outcome.detail = e.what();
      }
      r.outcome.name = tasks[i].name;
      r.outcome.seconds = secs(s0);
      results[i] = std::move(r);
    }
  };
  const int nw = std::max(1, workers);
  if (nw == 1 || tasks.size() < 2) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < nw; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  fs::create_directories(cfg.outdir);
  report::RunManifest m;
  m.config_path = cfg.source_path;
  m.config_hash = report::hash_hex(cfg.source_text);
  m.seed = cfg.seed;
  m.outdir = cfg.outdir;
  for (auto& r : results) {
    for (const auto& [name, bytes] : r.files)
      report::write_text((fs::path(cfg.outdir) / name).string(), bytes);
    m.tasks.push_back(std::move(r.outcome));
  }
  m.total_seconds = secs(t0);
  report::write_manifest((fs::path(cfg.outdir) / manifest_name).string(), m);
  return m;
}

}  // namespace cylscat::experiments
