#include "cylscat/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cylscat::geometry {

Profile Profile::power(double c, double m, double delta0) {
  if (!(c > 0) || c > 1 || !(m > 0)) throw input_error("power profile needs c in (0,1], m > 0");
  Profile f;
  f.family = Family::power;
  f.c = c;
  f.m = m;
  f.delta0 = delta0;
  return f;
}

Profile Profile::bump(double c, double R, double delta0) {
  if (!(c > 0) || c > 1 || !(R > 0)) throw input_error("bump profile needs c in (0,1], R > 0");
  Profile f;
  f.family = Family::bump;
  f.c = c;
  f.R = R;
  f.delta0 = delta0;
  return f;
}

Profile Profile::hourglass(double c, double R) {
  if (!(c > 0) || !(c < 1) || !(R > 0))
    throw input_error("hourglass profile needs c in (0,1), R > 0");
  Profile f;
  f.family = Family::hourglass;
  f.c = c;
  f.R = R;
  return f;
}

Profile Profile::tabulated(double r0, double dr, std::vector<double> samples, double delta0,
                           bool full_line) {
  if (samples.size() < 8 || !(dr > 0)) throw input_error("tabulated profile needs >=8 samples");
  Profile f;
  f.family = Family::tabulated;
  f.tab_r0 = r0;
  f.tab_dr = dr;
  f.tab = std::move(samples);
  f.delta0 = delta0;
  f.tab_full_line = full_line;
  return f;
}

bool Profile::full_line() const {
  return family == Family::hourglass || (family == Family::tabulated && tab_full_line);
}

double Profile::decay_rate() const {
  if (delta0 > 0) return delta0;
  switch (family) {
    case Family::power: return m;
    case Family::bump: return 4.0 / R;
    case Family::hourglass: return 4.0 / R;
    case Family::tabulated: throw precondition_error("tabulated profile has no default delta0");
  }
  return 0;
}

namespace {

double tab_eval(const std::vector<double>& tab, double r0, double dr, double r, int k) {
  // linear interpolation of centered finite-difference derivative tables
  int n = (int)tab.size();
  double t = (r - r0) / dr;
  if (t <= 0) t = 0;
  if (t >= n - 1) t = n - 1;
  int i = (int)t;
  if (i > n - 2) i = n - 2;
  double frac = t - i;
  auto at = [&](int j) { return tab[std::clamp(j, 0, n - 1)]; };
  auto d = [&](int j) -> double {
    switch (k) {
      case 0: return at(j);
      case 1: return (at(j + 1) - at(j - 1)) / (2 * dr);
      case 2: return (at(j + 1) - 2 * at(j) + at(j - 1)) / (dr * dr);
      default:
        return (at(j + 2) - 2 * at(j + 1) + 2 * at(j - 1) - at(j - 2)) / (2 * dr * dr * dr);
    }
  };
  return (1 - frac) * d(i) + frac * d(i + 1);
}

}  // namespace

double Profile::value(double r) const {
  switch (family) {
    case Family::power: {
      if (r < 0) throw precondition_error("half-line profile queried at r < 0");
      return 1 - c * std::pow(1 + r, -m);
    }
    case Family::bump: {
      if (r < 0) throw precondition_error("half-line profile queried at r < 0");
      if (r >= R) return 1;
      double u = 1 - r / R;
      return 1 - c * u * u * u * u;
    }
    case Family::hourglass: {
      if (std::abs(r) >= R) return 1;
      double u = 1 - (r / R) * (r / R);
      return 1 - c * u * u * u * u;
    }
    case Family::tabulated: return tab_eval(tab, tab_r0, tab_dr, r, 0);
  }
  return 1;
}

double Profile::deriv(double r, int k) const {
  if (k < 1 || k > 3) throw precondition_error("profile derivative order must be 1..3");
  switch (family) {
    case Family::power: {
      if (r < 0) throw precondition_error("half-line profile queried at r < 0");
      double coef = m;
      for (int i = 1; i < k; ++i) coef *= m + i;
      return (k % 2 == 1 ? 1 : -1) * c * coef * std::pow(1 + r, -m - k);
    }
    case Family::bump: {
      if (r < 0) throw precondition_error("half-line profile queried at r < 0");
      if (r >= R) return 0;
      double u = 1 - r / R;
      if (k == 1) return 4 * c * u * u * u / R;
      if (k == 2) return -12 * c * u * u / (R * R);
      return 24 * c * u / (R * R * R);
    }
    case Family::hourglass: {
      if (std::abs(r) >= R) return 0;
      double R2 = R * R;
      double u = 1 - r * r / R2;
      if (k == 1) return 8 * c * r * u * u * u / R2;
      if (k == 2) return 8 * c * u * u * (u - 6 * r * r / R2) / R2;
      return -48 * c * r * u * (3 * u - 4 * r * r / R2) / (R2 * R2);
    }
    case Family::tabulated: return tab_eval(tab, tab_r0, tab_dr, r, k);
  }
  return 0;
}

RepulsivePotential RepulsivePotential::zero() { return RepulsivePotential{}; }

RepulsivePotential RepulsivePotential::power(double A, double m) {
  if (!(A >= 0) || !(m > 0)) throw input_error("power potential needs A >= 0, m > 0");
  RepulsivePotential v;
  v.family = Family::power;
  v.A = A;
  v.m = m;
  return v;
}

RepulsivePotential RepulsivePotential::bump(double A, double R) {
  if (!(A >= 0) || !(R > 0)) throw input_error("bump potential needs A >= 0, R > 0");
  RepulsivePotential v;
  v.family = Family::bump;
  v.A = A;
  v.R = R;
  return v;
}

RepulsivePotential RepulsivePotential::tabulated(double r0, double dr, std::vector<double> samples,
                                                 double deltaV) {
  if (samples.size() < 8 || !(dr > 0) || !(deltaV > 0))
    throw input_error("tabulated potential needs >=8 samples and deltaV > 0");
  RepulsivePotential v;
  v.family = Family::tabulated;
  v.tab_r0 = r0;
  v.tab_dr = dr;
  v.tab = std::move(samples);
  v.deltaV = deltaV;
  return v;
}

double RepulsivePotential::value(double r) const {
  if (r < 0) r = 0;
  switch (family) {
    case Family::zero: return 0;
    case Family::power: return A * std::pow(1 + r, -m);
    case Family::bump: {
      if (r >= R) return 0;
      double u = 1 - r / R;
      return A * u * u * u * u;
    }
    case Family::tabulated: return tab_eval(tab, tab_r0, tab_dr, r, 0);
  }
  return 0;
}

double RepulsivePotential::slope(double r) const {
  if (r < 0) r = 0;
  switch (family) {
    case Family::zero: return 0;
    case Family::power: return -A * m * std::pow(1 + r, -m - 1);
    case Family::bump: {
      if (r >= R) return 0;
      double u = 1 - r / R;
      return -4 * A * u * u * u / R;
    }
    case Family::tabulated: return tab_eval(tab, tab_r0, tab_dr, r, 1);
  }
  return 0;
}

double RepulsivePotential::decay_rate() const {
  if (deltaV > 0) return deltaV;
  switch (family) {
    case Family::zero: return std::numeric_limits<double>::infinity();
    case Family::power: return m;
    case Family::bump: return 4.0 / R;
    case Family::tabulated: return deltaV;
  }
  return 0;
}

double ShortRange::value(double r) const {
  if (amp == 0) return 0;
  return amp * plateau(r, lo, hi, w);
}

double Well::value(double r) const {
  if (depth == 0) return 0;
  return -depth * plateau(r, lo, hi, ramp);
}

TransverseSpectrum TransverseSpectrum::circle(double L) {
  if (!(L > 0)) throw input_error("circle spectrum needs L > 0");
  TransverseSpectrum s;
  s.kind = Kind::circle;
  s.L = L;
  return s;
}

TransverseSpectrum TransverseSpectrum::sphere(int dim) {
  if (dim < 1) throw input_error("sphere spectrum needs dim >= 1");
  TransverseSpectrum s;
  s.kind = Kind::sphere;
  s.dim = dim;
  return s;
}

TransverseSpectrum TransverseSpectrum::list(std::vector<double> sigma2, std::vector<int> mult) {
  if (sigma2.empty() || sigma2.size() != mult.size())
    throw input_error("list spectrum needs matching sigma2/mult");
  for (std::size_t i = 0; i < sigma2.size(); ++i) {
    if (sigma2[i] < 0 || mult[i] < 1) throw input_error("list spectrum entries invalid");
    if (i > 0 && sigma2[i] < sigma2[i - 1]) throw input_error("list spectrum must be ascending");
  }
  TransverseSpectrum s;
  s.kind = Kind::list;
  s.sigma2_list = std::move(sigma2);
  s.mult_list = std::move(mult);
  return s;
}

double TransverseSpectrum::level_sigma2(int k) const {
  switch (kind) {
    case Kind::circle: {
      double v = 2 * pi * k / L;
      return v * v;
    }
    case Kind::sphere: return (double)k * (k + dim - 1);
    case Kind::list:
      if (k >= (int)sigma2_list.size())
        throw precondition_error("list spectrum exhausted");
      return sigma2_list[k];
  }
  return 0;
}

int TransverseSpectrum::level_mult(int k) const {
  switch (kind) {
    case Kind::circle: return k == 0 ? 1 : 2;
    case Kind::sphere: {
      if (k == 0) return 1;
      // dim H_k(S^dim) = C(k+dim, dim) - C(k+dim-2, dim)
      auto binom = [](int a, int b) {
        double v = 1;
        for (int i = 1; i <= b; ++i) v = v * (a - b + i) / i;
        return v;
      };
      return (int)std::llround(binom(k + dim, dim) - binom(k + dim - 2, dim));
    }
    case Kind::list:
      if (k >= (int)mult_list.size()) throw precondition_error("list spectrum exhausted");
      return mult_list[k];
  }
  return 1;
}

std::vector<double> TransverseSpectrum::sigmas(int count) const {
  std::vector<double> out;
  out.reserve(count);
  for (int k = 0; (int)out.size() < count; ++k) {
    if (kind == Kind::list && k >= (int)sigma2_list.size()) break;
    double s = std::sqrt(level_sigma2(k));
    int mlt = level_mult(k);
    for (int i = 0; i < mlt && (int)out.size() < count; ++i) out.push_back(s);
  }
  return out;
}

std::vector<double> TransverseSpectrum::sigmas_up_to(double sigma2_max) const {
  std::vector<double> out;
  for (int k = 0;; ++k) {
    if (kind == Kind::list && k >= (int)sigma2_list.size()) break;
    double s2 = level_sigma2(k);
    if (s2 > sigma2_max) break;
    int mlt = level_mult(k);
    for (int i = 0; i < mlt; ++i) out.push_back(std::sqrt(s2));
  }
  return out;
}

double ManifoldConfig::well_value(double r) const {
  double v = 0;
  for (const Well& w : wells) v += w.value(r);
  return v;
}

double ManifoldConfig::potential(double r, double h) const {
  double v = VL.value(domain == Domain::half_cylinder ? r : std::abs(r));
  if (domain == Domain::half_cylinder) v += h * VS.value(r);
  v += h * h * well_value(r);
  return v;
}

namespace {

void push(std::vector<CheckRecord>& cs, const std::string& name, double margin, bool pass) {
  cs.push_back({name, margin, pass});
}

}  // namespace

ProfileReport validate_profile(const Profile& f, double rmax, int n, double tol) {
  ProfileReport rep;
  bool full = f.full_line();
  double lo = full ? -rmax : 0.0;
  double dr = (rmax - lo) / (n - 1);

  double delta0 = 0;
  if (f.family == Profile::Family::tabulated && f.delta0 <= 0) {
    // line search: largest rate for which the decay inequality holds on the grid
    double best = 0;
    for (int k = 0; k < 80; ++k) {
      double cand = 4.0 * std::pow(0.87, k);
      bool ok = true;
      for (int i = 0; i < n; ++i) {
        double r = lo + i * dr;
        if (r < 0) continue;
        if (f.deriv(r, 1) * (1 + r) - cand * (1 - f.value(r)) < -tol * (1 + cand)) {
          ok = false;
          break;
        }
      }
      if (ok) {
        best = cand;
        break;
      }
    }
    if (best == 0) throw geometry_error("tabulated profile admits no positive decay rate");
    delta0 = best;
  } else {
    delta0 = f.decay_rate();
  }
  rep.delta0 = delta0;

  double fmin = 1e300, fmax = -1e300, slope_min = 1e300;
  double rate_margin = 1e300;       // min of f'(1+r) - delta0 (1-f)
  double inside_margin = 1e300;     // min of 1 - f on [0,6)
  for (int i = 0; i < n; ++i) {
    double r = lo + i * dr;
    double v = f.value(r);
    fmin = std::min(fmin, v);
    fmax = std::max(fmax, v);
    double d1 = f.deriv(r, 1);
    if (!full) {
      slope_min = std::min(slope_min, d1);
      rate_margin = std::min(rate_margin, d1 * (1 + r) - delta0 * (1 - v));
      for (int k = 0; k <= 3; ++k) {
        double g = k == 0 ? std::abs(v - 1) : std::abs(f.deriv(r, k));
        rep.fitted_C[k] = std::max(rep.fitted_C[k], g * std::pow(1 + r, k + delta0));
      }
      if (r < 6) inside_margin = std::min(inside_margin, 1 - v);
    }
  }

  push(rep.checks, "positive", fmin, fmin > -tol);
  push(rep.checks, "at_most_one", 1 - fmax, fmax <= 1 + tol);
  if (!full) {
    push(rep.checks, "nondecreasing", slope_min, slope_min >= -tol);
    push(rep.checks, "decay_rate", rate_margin, rate_margin >= -tol * (1 + delta0));
    // strictness degenerates toward r = 6 when the profile rejoins 1 exactly there,
  // so the margin is only required to stay positive, not above tol
  push(rep.checks, "strict_below_one_inside", inside_margin, inside_margin > 0);
  } else {
    // full-line: f = 1 outside (-R, R); unique nondegenerate interior minimum
    double edge = std::max(std::abs(f.value(-f.R - 1) - 1), std::abs(f.value(f.R + 1) - 1));
    push(rep.checks, "one_outside_support", -edge, edge <= tol);
    int sign_changes = 0;
    double prev = f.deriv(lo + dr, 1);
    for (int i = 2; i < n - 1; ++i) {
      double r = lo + i * dr;
      if (std::abs(r) >= f.R) continue;
      double cur = f.deriv(r, 1);
      if (prev < -tol && cur > tol) ++sign_changes;
      if (std::abs(cur) > tol) prev = cur;
    }
    push(rep.checks, "single_minimum", 1.0 - sign_changes, sign_changes == 1);
    double curv = f.deriv(0, 2);
    push(rep.checks, "nondegenerate_minimum", curv, curv > tol);
  }

  rep.pass = true;
  for (const auto& c : rep.checks) rep.pass = rep.pass && c.pass;
  return rep;
}

PotentialReport validate_potential(const RepulsivePotential& V, double rmax, int n, double tol) {
  PotentialReport rep;
  rep.deltaV = V.decay_rate();
  if (V.family == RepulsivePotential::Family::zero) {
    push(rep.checks, "nonnegative", 0, true);
    push(rep.checks, "repulsive", 0, true);
    rep.pass = true;
    return rep;
  }
  if (!(rep.deltaV > 0)) throw geometry_error("potential has no positive decay rate");
  double dr = rmax / (n - 1);
  double vmin = 1e300, rep_margin = 1e300, mono_margin = 1e300;
  double scale = std::max(1.0, V.value(0));
  for (int i = 0; i < n; ++i) {
    double r = i * dr;
    double v = V.value(r);
    vmin = std::min(vmin, v);
    rep_margin = std::min(rep_margin, -V.slope(r) * (1 + r) - rep.deltaV * v);
    if (i > 0) mono_margin = std::min(mono_margin, V.value((i - 1) * dr) - v);
  }
  push(rep.checks, "nonnegative", vmin, vmin >= -tol * scale);
  push(rep.checks, "nonincreasing", mono_margin, mono_margin >= -tol * scale);
  push(rep.checks, "repulsive", rep_margin, rep_margin >= -tol * scale * (1 + rep.deltaV));
  rep.pass = true;
  for (const auto& c : rep.checks) rep.pass = rep.pass && c.pass;
  return rep;
}

double effective_potential(const ManifoldConfig& cfg, double h, double sigma, double r) {
  double fv = cfg.profile.value(r);
  if (!(fv > 0)) throw geometry_error("profile is not positive at a requested radius");
  double a = cfg.alpha();
  double warp = std::pow(fv, -a) - 1;
  return cfg.potential(r, h) + h * h * cfg.profile.deriv(r, 2) / fv + h * h * sigma * sigma * warp;
}

std::vector<double> effective_potential(const ManifoldConfig& cfg, double h, double sigma,
                                        const std::vector<double>& r) {
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = effective_potential(cfg, h, sigma, r[i]);
  return out;
}

double estar_threshold(const ManifoldConfig& cfg, double h) {
  if (!(h > 0)) throw input_error("estar_threshold needs h > 0");
  double f5 = cfg.profile.value(5);
  if (f5 >= 1 - 1e-12) throw geometry_error("f(5) = 1: no admissible threshold exists");
  double gate = cfg.E0 * std::pow(f5, cfg.alpha());  // modes below this h^2 sigma^2 are blocked
  double worst = -1;
  auto sig = cfg.spectrum.sigmas_up_to(gate / (h * h) * (1 + 1e-14));
  for (double s : sig) {
    double hs2 = h * h * s * s;
    if (hs2 < gate) worst = std::max(worst, hs2);
  }
  // the admissibility condition is open from above, so back off by one ulp-scale step
  double estar = worst < 0 ? cfg.cJ : std::min(cfg.cJ, (cfg.E0 - worst) * (1 - 1e-12));
  if (!(estar > 0)) throw geometry_error("no positive threshold: spectrum too dense near E0");
  return estar;
}

}  // namespace cylscat::geometry
