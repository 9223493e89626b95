#include "cylscat/embedded.hpp"

#include <algorithm>
#include <cmath>

namespace cylscat::embedded {

using geometry::Profile;
using geometry::TransverseSpectrum;
using geometry::Well;

double HourglassSpec::well(double r) const {
  double v = 0;
  for (const Well& w : wells) v += w.value(r);
  return v;
}

namespace {

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth, double& err) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6 * (fa + 4 * flm + fm);
  double right = (b - m) / 6 * (fm + 4 * frm + fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15 * tol) {
    err += std::abs(delta) / 15;
    return left + right + delta / 15;
  }
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1, err) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1, err);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol,
                 double& err) {
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = (b - a) / 6 * (fa + 4 * fm + fb);
  err = 0;
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48, err);
}

// depth for which the warp excess integral hits the target budget
double pick_neck_depth(double R, double alpha, const TransverseSpectrum&) {
  auto excess = [R, alpha](double c) {
    Profile f = Profile::hourglass(c, R);
    double err = 0;
    auto g = [&f, alpha](double r) { return std::pow(f.value(r), -alpha) - 1; };
    return integrate(g, -R, R, 1e-11, err);
  };
  double lo = 1e-6, hi = 0.5;
  if (excess(hi) < 0.24) return hi;
  for (int i = 0; i < 80; ++i) {
    double mid = 0.5 * (lo + hi);
    (excess(mid) < 0.24 ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace

HourglassSpec recipe_spec(const TransverseSpectrum& sp, int J, double R, int d, double c) {
  if (J < 1 || !(R > 0) || d < 2) throw input_error("recipe_spec: need J >= 1, R > 0, d >= 2");
  HourglassSpec spec;
  spec.R = R;
  spec.J = J;
  spec.d = d;
  spec.spectrum = sp;
  spec.sigma2 = sp.level_sigma2(J);
  spec.mult = sp.level_mult(J);
  if (!(spec.sigma2 > 0)) throw input_error("recipe_spec: level J must carry sigma^2 > 0");
  double alpha = 4.0 / (d - 1);
  if (c <= 0) c = pick_neck_depth(R, alpha, sp);
  spec.f = Profile::hourglass(c, R);
  Well w;
  w.depth = spec.sigma2 / 2;
  w.lo = -0.95 * R;
  w.hi = 0.95 * R;
  w.ramp = 0.4 * R;
  spec.wells = {w};
  return spec;
}

HourglassSpec multiwell_spec(const TransverseSpectrum& sp, int J, int k, double R, int d,
                             double c) {
  if (k < 2) throw input_error("multiwell_spec: need at least 2 wells");
  HourglassSpec spec = recipe_spec(sp, J, R, d, c);
  spec.wells.clear();
  double span = 1.7 * R;            // well centers occupy (-0.85 R, 0.85 R)
  double cell = span / k;
  for (int i = 0; i < k; ++i) {
    double center = -0.85 * R + (i + 0.5) * cell;
    Well w;
    w.depth = spec.sigma2 / 2;
    w.lo = center - 0.46 * cell;
    w.hi = center + 0.46 * cell;
    w.ramp = 0.30 * cell;
    spec.wells.push_back(w);
  }
  return spec;
}

SpecReport validate_spec(const HourglassSpec& spec) {
  SpecReport rep;
  auto push = [&rep](const char* name, double margin, bool pass) {
    rep.checks.push_back({name, margin, pass});
  };
  if (!spec.f.full_line()) {
    push("profile_full_line", -1, false);
    rep.pass = false;
    return rep;
  }
  push("profile_full_line", 0, true);
  double dev_out = 0, fmin = 1e300, wmin = 0, wmax = 0, w_out = 0;
  int n = 20000;
  for (int i = 0; i <= n; ++i) {
    double r = -2.0 * spec.R + 4.0 * spec.R * i / n;
    double fv = spec.f.value(r);
    fmin = std::min(fmin, fv);
    if (std::abs(r) >= spec.R) dev_out = std::max(dev_out, std::abs(fv - 1));
    double wv = spec.well(r);
    wmin = std::min(wmin, wv);
    wmax = std::max(wmax, wv);
    if (std::abs(r) >= spec.R) w_out = std::max(w_out, std::abs(wv));
  }
  push("profile_positive", fmin, fmin > 0);
  push("profile_one_outside_neck", 1e-12 - dev_out, dev_out <= 1e-12);
  geometry::ProfileReport pr = geometry::validate_profile(spec.f);
  push("profile_single_nondegenerate_min", pr.pass ? 1 : -1, pr.pass);
  push("well_support_in_neck", 1e-12 - w_out, w_out <= 1e-12);
  push("well_range_lower", wmin + spec.sigma2 / 2 + 1e-12, wmin >= -spec.sigma2 / 2 - 1e-12);
  push("well_range_upper", 1e-12 - wmax, wmax <= 1e-12);
  rep.pass = true;
  for (const auto& c : rep.checks) rep.pass = rep.pass && c.pass;
  return rep;
}

double VJ_value(const HourglassSpec& spec, double r) {
  double fv = spec.f.value(r);
  if (!(fv > 0)) throw input_error("profile must stay positive");
  return spec.f.deriv(r, 2) / fv + spec.sigma2 * (std::pow(fv, -spec.alpha()) - 1) + spec.well(r);
}

std::vector<double> build_VJ(const HourglassSpec& spec, const std::vector<double>& r) {
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = VJ_value(spec, r[i]);
  return out;
}

CriterionReport embedded_criterion(const HourglassSpec& spec) {
  CriterionReport rep;
  rep.sigma2 = spec.sigma2;
  auto f = [&spec](double r) { return VJ_value(spec, r); };
  rep.integral = integrate(f, -spec.R, spec.R, 1e-10, rep.quad_err);
  int n = 40000;
  int best = 0;
  double vmin = 1e300;
  std::vector<double> vals(n + 1);
  for (int i = 0; i <= n; ++i) {
    double r = -spec.R + 2.0 * spec.R * i / n;
    vals[i] = f(r);
    if (vals[i] < vmin) {
      vmin = vals[i];
      best = i;
    }
  }
  rep.min_VJ = vmin;
  rep.min_at = -spec.R + 2.0 * spec.R * best / n;
  if (best > 0 && best < n) {
    // parabolic refinement through the minimizing triple
    double dr = 2.0 * spec.R / n;
    double a = vals[best - 1], b = vals[best], c = vals[best + 1];
    double den = a - 2 * b + c;
    if (den > 0) {
      double t = 0.5 * (a - c) / den;
      rep.min_at += t * dr;
      rep.min_VJ = b - 0.25 * (a - c) * t;
    }
  }
  rep.pass_integral = rep.integral <= 0;
  rep.pass_floor = rep.min_VJ > -spec.sigma2;
  rep.pass = rep.pass_integral && rep.pass_floor;
  return rep;
}

BoundStateSet find_bound_states(const std::vector<double>& V, const std::vector<double>& r) {
  if (V.size() != r.size() || r.size() < 16)
    throw input_error("find_bound_states: need matching V and r arrays, at least 16 nodes");
  std::size_t n = r.size();
  double dr = r[1] - r[0];
  for (std::size_t i = 1; i < n; ++i)
    if (std::abs(r[i] - r[i - 1] - dr) > 1e-9 * dr)
      throw input_error("find_bound_states: grid must be uniform");
  std::vector<double> diag(n), off(n - 1, -1.0 / (dr * dr));
  double vmin = 1e300;
  for (std::size_t i = 0; i < n; ++i) {
    diag[i] = 2.0 / (dr * dr) + V[i];
    vmin = std::min(vmin, V[i]);
  }
  SymTridiagEigen eig = sym_tridiag_eigen_range(diag, off, vmin - 1, -1e-12);
  BoundStateSet out;
  out.grid = r;
  out.dr = dr;
  double scale = 2.0 / (dr * dr);
  for (double d : diag) scale = std::max(scale, std::abs(d));
  scale += 2.0 / (dr * dr);
  for (std::size_t k = 0; k < eig.values.size(); ++k) {
    BoundState st;
    st.lambda = eig.values[k];
    st.psi = eig.vectors[k];
    double nrm = 0, res = 0, amax = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double tv = diag[i] * st.psi[i] - st.lambda * st.psi[i];
      if (i > 0) tv += off[i - 1] * st.psi[i - 1];
      if (i + 1 < n) tv += off[i] * st.psi[i + 1];
      res += tv * tv;
      nrm += st.psi[i] * st.psi[i];
      amax = std::max(amax, std::abs(st.psi[i]));
    }
    nrm = std::sqrt(nrm);
    st.residual = std::sqrt(res) / (scale * nrm);
    for (std::size_t i = 0; i < n; ++i) st.psi[i] /= nrm;
    amax /= nrm;
    double tail = 0;
    for (std::size_t i = 0; i < 5 && i < n; ++i) {
      tail = std::max(tail, std::abs(st.psi[i]));
      tail = std::max(tail, std::abs(st.psi[n - 1 - i]));
    }
    st.tail = tail / amax;
    int nodes = 0;
    double prev = 0;
    double cut = 1e-9 * amax;
    for (std::size_t i = 0; i < n; ++i) {
      double v = st.psi[i];
      if (std::abs(v) <= cut) continue;
      if (prev != 0 && v * prev < 0) ++nodes;
      prev = v;
    }
    st.nodes = nodes;
    out.states.push_back(std::move(st));
  }
  std::sort(out.states.begin(), out.states.end(),
            [](const BoundState& a, const BoundState& b) { return a.lambda < b.lambda; });
  return out;
}

BoundStateSet bound_states_of(const HourglassSpec& spec, double rmax, double dr) {
  int n = (int)std::floor(2 * rmax / dr) - 1;
  std::vector<double> r(n);
  for (int i = 0; i < n; ++i) r[i] = -rmax + (i + 1) * dr;
  return find_bound_states(build_VJ(spec, r), r);
}

namespace {

double consistency_onset(const HourglassSpec& spec, double top_E) {
  geometry::ManifoldConfig cfg;
  cfg.domain = geometry::ManifoldConfig::Domain::half_cylinder;
  cfg.d = spec.d;
  cfg.E0 = 1;
  cfg.cJ = 0.5;
  double c = std::clamp(1 - spec.f.value(0), 1e-4, 1.0);
  cfg.profile = Profile::power(c, 2);
  cfg.spectrum = spec.spectrum;
  cfg.VL = geometry::RepulsivePotential::zero();
  cfg.wells = spec.wells;
  double x_hi = std::max(1.6 * spec.sigma2, 1.5 * top_E + 5);
  double x_lo = std::max(0.3, 0.02 * spec.sigma2);
  halfline::WeightFn chi = [](double r) { return ramp_down(r, 6, 8); };
  modes::ScanReport scan =
      modes::scan_uniform_bound(cfg, x_lo, x_hi, 140, 1e-6, chi);
  std::vector<double> vals;
  for (const auto& rec : scan.records)
    if (!rec.pole) vals.push_back(rec.value);
  std::sort(vals.begin(), vals.end());
  double med = vals[vals.size() / 2];
  double z0 = x_lo;
  for (const auto& rec : scan.records)
    if (rec.pole || rec.value >= 10 * med) z0 = std::max(z0, rec.x);
  return z0;
}

}  // namespace

EmbeddedReport certify_embedded(const HourglassSpec& spec, const CertifyOptions& opts) {
  EmbeddedReport rep;
  rep.spec_check = validate_spec(spec);
  if (!rep.spec_check.pass) return rep;
  rep.criterion = embedded_criterion(spec);
  rep.transverse_mult = spec.mult;
  double rmax = opts.rmax > 0 ? opts.rmax : spec.R + 30;
  double dr = opts.dr;
  BoundStateSet set = bound_states_of(spec, rmax, dr);
  while (set.states.empty() && rep.criterion.pass && rep.refinements < 3) {
    dr /= 2;
    ++rep.refinements;
    set = bound_states_of(spec, rmax, dr);
  }
  rep.discrepancy = rep.criterion.pass && set.states.empty();
  BoundStateSet fine = bound_states_of(spec, rmax, dr / 2);
  for (const BoundState& st : set.states) {
    EmbeddedState es;
    es.lambda = st.lambda;
    es.E = st.lambda + spec.sigma2;
    es.is_embedded = es.E > 0;
    es.residual = st.residual;
    es.tail = st.tail;
    es.nodes = st.nodes;
    double bestd = 1e300;
    for (const BoundState& f2 : fine.states) {
      double d = std::abs(f2.lambda - st.lambda);
      if (d < bestd) {
        bestd = d;
        es.E_doubled = f2.lambda + spec.sigma2;
      }
    }
    es.doubling_shift = std::abs(es.E_doubled - es.E) / std::max(std::abs(es.E), 1e-12);
    es.stable4 = es.doubling_shift <= opts.stable_tol;
    if (es.is_embedded) ++rep.embedded_count;
    rep.states.push_back(es);
  }
  double top_E = 0;
  for (const auto& es : rep.states)
    if (es.is_embedded) top_E = std::max(top_E, es.E);
  if (opts.consistency && rep.embedded_count > 0) {
    rep.consist_ran = true;
    rep.consist_top_E = top_E;
    rep.consist_z0 = consistency_onset(spec, top_E);
    rep.consist_pass = top_E <= rep.consist_z0;
  }
  rep.pass = rep.criterion.pass && rep.embedded_count >= 1 && !rep.discrepancy;
  for (const auto& es : rep.states) {
    if (!es.is_embedded) continue;
    rep.pass = rep.pass && es.residual <= opts.residual_tol && es.tail <= opts.tail_tol &&
               es.stable4;
  }
  if (rep.consist_ran) rep.pass = rep.pass && rep.consist_pass;
  return rep;
}

}  // namespace cylscat::embedded
