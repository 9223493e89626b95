#include "cylscat/continuation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <memory>
#include <random>

namespace cylscat::continuation {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const cplx kI(0, 1);

// finite lists expose a fixed number of levels; -1 means unbounded
int level_count(const geometry::TransverseSpectrum& sp) {
  return sp.finite() ? (int)sp.sigma2_list.size() : -1;
}

}  // namespace

bool RiemannPoint::has_flip(int level) const {
  return std::binary_search(flipped.begin(), flipped.end(), level);
}

RiemannPoint physical(cplx z, double h) {
  if (!(h > 0)) throw input_error("surface point needs h > 0");
  return {z, {}, 0, h};
}

RiemannPoint boundary(double E, int side, double h) {
  if (side != 1 && side != -1) throw input_error("boundary side must be +1 or -1");
  if (!(h > 0)) throw input_error("surface point needs h > 0");
  return {cplx(E, 0), {}, side, h};
}

cplx rho(const RiemannPoint& p, const geometry::TransverseSpectrum& sp, int level) {
  const cplx w = p.z - p.h * p.h * sp.level_sigma2(level);
  cplx r;
  if (p.side != 0 && p.z.imag() == 0 && w.imag() == 0 && w.real() > 0)
    r = cplx(p.side * std::sqrt(w.real()), 0);
  else
    r = sqrt_upper(w);
  return p.has_flip(level) ? -r : r;
}

DhResult dh_metric(const RiemannPoint& p, const RiemannPoint& q,
                   const geometry::TransverseSpectrum& sp) {
  if (p.h != q.h) throw precondition_error("distance needs both points at the same h");
  const double dz = std::abs(p.z - q.z);
  const double h2 = p.h * p.h;
  const double zmax = std::max(std::abs(p.z), std::abs(q.z));
  int last_flip = -1;
  if (!p.flipped.empty()) last_flip = std::max(last_flip, p.flipped.back());
  if (!q.flipped.empty()) last_flip = std::max(last_flip, q.flipped.back());
  const int nmax = level_count(sp);
  DhResult out;
  for (int k = 0; nmax < 0 || k < nmax; ++k) {
    if (k > 2000000) throw resolution_error("level enumeration failed to terminate");
    const double d = std::abs(rho(p, sp, k) - rho(q, sp, k));
    if (d > out.value) {
      out.value = d;
      out.argmax_level = k;
    }
    out.levels_used = k + 1;
    if (k > last_flip) {
      // past this point both roots sit in the upper half plane with argument in
      // (pi/4, 3pi/4), so |rho_p + rho_q| >= sqrt(w) and every remaining level
      // contributes at most dz / sqrt(w)
      const double w = h2 * sp.level_sigma2(k) - zmax;
      if (w > 1 + 2 * dz) {
        out.tail_bound = dz / std::sqrt(w);
        if (out.tail_bound <= out.value || out.tail_bound < 1e-300) break;
      }
    }
  }
  return out;
}

int monodromy_branch(const geometry::TransverseSpectrum& sp, double h, int level,
                     const std::vector<cplx>& path) {
  if (!(h > 0)) throw input_error("monodromy needs h > 0");
  if (path.size() < 2) throw input_error("monodromy path needs at least two points");
  const double s2 = h * h * sp.level_sigma2(level);
  auto root = [&](cplx z) { return sqrt_upper(z - s2); };
  cplx cur = root(path.front());
  if (std::abs(cur) < 1e-14) throw input_error("path starts at the ramification point");
  for (size_t i = 1; i < path.size(); ++i) {
    int steps = 8;
    for (int attempt = 0;; ++attempt, steps *= 4) {
      if (attempt == 10) throw resolution_error("branch tracking failed to stabilize");
      cplx trial = cur;
      bool ok = true;
      for (int s = 1; s <= steps && ok; ++s) {
        const cplx zt = path[i - 1] + (path[i] - path[i - 1]) * (double(s) / steps);
        const cplx r = root(zt);
        if (std::abs(r) < 1e-14) throw input_error("path passes through a ramification point");
        const cplx pick = (std::abs(r - trial) <= std::abs(r + trial)) ? r : -r;
        if (std::abs(pick - trial) > 0.6 * std::abs(trial))
          ok = false;
        else
          trial = pick;
      }
      if (ok) {
        cur = trial;
        break;
      }
    }
  }
  const cplx principal = root(path.back());
  return (std::abs(cur - principal) <= std::abs(cur + principal)) ? +1 : -1;
}

ProjdiffReport projdiff_check(const geometry::TransverseSpectrum& sp, double E,
                              const std::vector<double>& hs, double delta, double deltap,
                              int samples, std::uint64_t seed) {
  if (!(E > 0)) throw input_error("projection check needs E > 0");
  if (hs.empty()) throw input_error("projection check needs at least one h");
  if (!(delta > 0) || !(deltap > 0) || deltap >= 1)
    throw input_error("projection check needs 0 < delta, 0 < delta' < 1");
  ProjdiffReport rep;
  rep.delta = delta;
  rep.deltap = deltap;
  for (double h : hs) {
    if (!(h > 0)) throw input_error("projection check needs h > 0");
    const double target = E / (h * h);
    const double win = std::pow(h, -1 - deltap);
    int j0 = -1;
    double best = kInf;
    const int nmax = level_count(sp);
    for (int k = 0; nmax < 0 || k < nmax; ++k) {
      const double s2 = sp.level_sigma2(k);
      if (s2 > target + win) break;
      if (std::abs(s2 - target) <= win && std::abs(s2 - target) < best) {
        best = std::abs(s2 - target);
        j0 = k;
      }
      if (k > 2000000) break;
    }
    const bool weyl = (j0 >= 0) && (h * h * best <= std::pow(h, 1 - deltap));
    rep.hs.push_back(h);
    rep.weyl_ok.push_back(weyl);
    rep.rho_j0_sq.push_back(j0 >= 0 ? h * h * best : kInf);
    if (!weyl) {
      rep.K.push_back(kInf);
      continue;
    }
    // identical draws at every h so the fitted constants differ only through h
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0, 1);
    const RiemannPoint bp = boundary(E, +1, h), bm = boundary(E, -1, h);
    const double hterm = std::pow(h, 0.5 - delta);
    double Kmax = 0;
    for (int s = 0; s < samples; ++s) {
      const double lo = std::log(1e-3 * h), hi = std::log(0.3);
      const double r = std::exp(lo + uni(rng) * (hi - lo));
      double th = uni(rng) * 2 * pi;
      if (std::abs(std::sin(th)) < 0.05) th += 0.1;
      RiemannPoint zp = physical(E + r * std::exp(kI * th), h);
      if (uni(rng) < 0.5) zp.flipped = {j0};
      const double lhs = std::abs(zp.z - cplx(E, 0));
      // pair the point with the boundary value it approaches
      const RiemannPoint& bref = zp.z.imag() >= 0 ? bp : bm;
      const double d = dh_metric(zp, bref, sp).value;
      if (d > 0) Kmax = std::max(Kmax, lhs / (d * d + d * hterm));
    }
    rep.K.push_back(Kmax);
  }
  rep.precondition_ok = true;
  double kmin = kInf, kmax = 0;
  for (size_t i = 0; i < rep.K.size(); ++i) {
    if (!rep.weyl_ok[i]) {
      rep.precondition_ok = false;
      continue;
    }
    kmin = std::min(kmin, rep.K[i]);
    kmax = std::max(kmax, rep.K[i]);
  }
  rep.spread = (kmax <= 1e-9) ? 1.0 : kmax / std::max(kmin, 1e-4);
  rep.pass = rep.precondition_ok && std::isfinite(rep.spread) && rep.spread <= 2;
  return rep;
}

cplx model_kernel(cplx xi, double r, double rp, double h, bool* threshold) {
  if (!(h > 0)) throw input_error("kernel needs h > 0");
  if (r < 0 || rp < 0) throw input_error("kernel arguments live on the half line");
  const double A = std::abs(r - rp), B = r + rp;
  if (std::abs(xi) * (A + B) < 2e-3 * h) {
    // removable singularity at xi = 0: expand both exponentials
    if (threshold) *threshold = true;
    cplx sum = 0;
    cplx ipow = kI * kI;  // i^{n+1} starting at n = 1
    cplx xpow = 1;        // xi^{n-1}
    double An = A, Bn = B, fact = 1, hp = h * h;
    for (int n = 1; n <= 8; ++n) {
      sum += ipow * xpow * (An - Bn) / (2.0 * hp * fact);
      ipow *= kI;
      xpow *= xi;
      An *= A;
      Bn *= B;
      hp *= h;
      fact *= n + 1;
    }
    return sum;
  }
  if (threshold) *threshold = false;
  return kI / (2 * h * xi) * (std::exp(kI * xi * A / h) - std::exp(kI * xi * B / h));
}

namespace {

// kernels of (hD)^{a1} applied left and (hD)^{a2} applied right of the model
// resolvent; the identity parts of the order-two cases cancel in differences and
// are omitted here
cplx kernel_with_orders(cplx xi, double r, double rp, double h, int a1, int a2) {
  if (a1 == 0 && a2 == 0) return model_kernel(xi, r, rp, h);
  if (a1 + a2 == 2 && a1 != 1) return xi * xi * model_kernel(xi, r, rp, h);
  const double A = std::abs(r - rp), B = r + rp;
  const double s = (r > rp) ? 1.0 : (r < rp ? -1.0 : 0.0);
  const cplx EA = std::exp(kI * xi * A / h), EB = std::exp(kI * xi * B / h);
  if (a1 == 1 && a2 == 0) return kI / (2 * h) * (s * EA - EB);
  if (a1 == 0 && a2 == 1) return kI / (2 * h) * (s * EA + EB);
  if (a1 == 1 && a2 == 1) return kI * xi / (2 * h) * (EA + EB);
  throw input_error("derivative orders are limited to a1 + a2 <= 2");
}

}  // namespace

double kernel_difference_norm(const halfline::WeightFn& chi, double support, cplx xi, cplx xip,
                              double h, int a1, int a2, int n_hint) {
  if (!(support > 0) || !(h > 0)) throw input_error("kernel difference needs support, h > 0");
  if (a1 < 0 || a2 < 0 || a1 + a2 > 2)
    throw input_error("derivative orders are limited to a1 + a2 <= 2");
  if (xi == xip) return 0;
  const double k = std::max(std::abs(xi), std::abs(xip)) / h;
  int n = n_hint > 0 ? n_hint : (int)std::ceil(support * k * 2.5) + 256;
  n = std::clamp(n, 200, 2400);
  const double dr = support / n;
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = chi((i + 0.5) * dr);
  Eigen::MatrixXcd M(n, n);
  for (int i = 0; i < n; ++i) {
    const double ri = (i + 0.5) * dr;
    for (int j = 0; j < n; ++j) {
      if (w[i] == 0 || w[j] == 0) {
        M(i, j) = 0;
        continue;
      }
      const double rj = (j + 0.5) * dr;
      M(i, j) = w[i] * dr * w[j] *
                (kernel_with_orders(xi, ri, rj, h, a1, a2) -
                 kernel_with_orders(xip, ri, rj, h, a1, a2));
    }
  }
  NormOptions no;
  no.tol = 1e-6;
  no.max_iter = 160;
  auto ap = [&](const cplx* x, cplx* y) {
    Eigen::Map<const Eigen::VectorXcd> xv(x, n);
    Eigen::Map<Eigen::VectorXcd> yv(y, n);
    yv = M * xv;
  };
  auto apT = [&](const cplx* x, cplx* y) {
    Eigen::Map<const Eigen::VectorXcd> xv(x, n);
    Eigen::Map<Eigen::VectorXcd> yv(y, n);
    yv = M.adjoint() * xv;
  };
  return operator_norm(n, n, ap, apT, no).value;
}

KernelBoundReport check_kernel_bounds(const halfline::WeightFn& chi, double support,
                                      const std::vector<double>& hs, int pairs_per_h, double N,
                                      std::uint64_t seed) {
  if (hs.empty()) throw input_error("kernel bound check needs at least one h");
  if (!(N > 0)) throw input_error("kernel bound check needs N > 0");
  KernelBoundReport rep;
  const std::array<std::array<int, 2>, 5> ord12 = {{{1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2}}};
  const std::array<std::array<int, 2>, 6> ordAll = {
      {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2}}};
  const double dsec = 0.3;
  struct Task {
    int cls;
    bool pinned;  // member of the scaled family the fitted constant is read from
    double h;
    cplx xi, xip;
    int a1, a2;
  };
  std::vector<Task> tasks;
  // the strip estimates are h-sharp near the branch point, where the kernel is a
  // function of xi r / h alone; pairs fixed in units of u = h / support therefore
  // give the same ratio at every h, and those are what the constant is fitted on.
  // randomized strip-wide pairs (whose sharp scaling is milder) only check that the
  // ratio stays bounded.
  const std::array<std::array<cplx, 2>, 8> pin0 = {{{cplx(0.15, 0.05), cplx(-0.1, 0.1)},
                                                    {cplx(0.05, 0.02), cplx(0.25, 0.15)},
                                                    {cplx(2, 0.5), cplx(2.4, 0.6)},
                                                    {cplx(6, 0.3), cplx(6.5, 0.4)},
                                                    {cplx(15, 1), cplx(15.8, 1.2)},
                                                    {cplx(-9, 2), cplx(-8.6, 2.2)},
                                                    {cplx(30, 3), cplx(30.7, 3.3)},
                                                    {cplx(3, -0.1), cplx(3.3, -0.12)}}};
  for (double h : hs) {
    if (!(h > 0)) throw input_error("kernel bound check needs h > 0");
    // identical draws at every h: ratios then vary only through h itself
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0, 1);
    auto strip_xi = [&]() {
      const double x = -1.5 + 3.0 * uni(rng);
      // depth below the axis in units of h, height above unscaled
      const double y = uni(rng) < 0.5 ? h * (-0.9 * N + uni(rng) * 0.9 * N) : 0.5 * uni(rng);
      return cplx(x, y);
    };
    auto nearby = [&](cplx xi, double ymin) {
      const double d = h * std::exp(std::log(0.02) + uni(rng) * std::log(25.0));
      double th = uni(rng) * 2 * pi;
      cplx xip = xi + d * std::exp(kI * th);
      for (int t = 0; t < 40 && xip.imag() <= ymin; ++t) {
        th += 0.37;
        xip = xi + d * std::exp(kI * th);
      }
      return xip;
    };
    const double u = h / support;
    for (const auto& pr : pin0) tasks.push_back({0, true, h, u * pr[0], u * pr[1], 0, 0});
    for (size_t oi = 0; oi < ord12.size(); ++oi) {
      for (double x : {0.7, -1.2}) {
        const cplx xi(x, 0.3 * u);
        tasks.push_back({1, true, h, xi, xi + h * cplx(0.25, 0.1), ord12[oi][0], ord12[oi][1]});
      }
      const cplx bz = u * cplx(0.4, 0.15);
      tasks.push_back({1, true, h, bz, bz + u * cplx(0.3, 0.1), ord12[oi][0], ord12[oi][1]});
    }
    for (int p = 0; p < pairs_per_h; ++p) {
      const cplx x0 = strip_xi();
      tasks.push_back({0, false, h, x0, nearby(x0, -0.9 * N * h), 0, 0});
      const cplx x1 = strip_xi();
      const auto& o1 = ord12[(size_t)(uni(rng) * ord12.size()) % ord12.size()];
      tasks.push_back({1, false, h, x1, nearby(x1, -0.9 * N * h), o1[0], o1[1]});
      const double m1 = 1 + 2 * uni(rng), p1 = dsec + (pi - 2 * dsec) * uni(rng);
      const double m2 = 1 + 2 * uni(rng), p2 = dsec + (pi - 2 * dsec) * uni(rng);
      const auto& o2 = ordAll[(size_t)(uni(rng) * ordAll.size()) % ordAll.size()];
      tasks.push_back({2, false, h, m1 * std::exp(kI * p1), m2 * std::exp(kI * p2), o2[0], o2[1]});
    }
  }
  std::vector<KernelPairRecord> recs(tasks.size());
  parallel_for(tasks.size(), [&](size_t i) {
    const Task& t = tasks[i];
    KernelPairRecord r;
    r.h = t.h;
    r.xi = t.xi;
    r.xip = t.xip;
    r.a1 = t.a1;
    r.a2 = t.a2;
    r.value = kernel_difference_norm(chi, support, t.xi, t.xip, t.h, t.a1, t.a2);
    const double dxi = std::abs(t.xi - t.xip);
    if (t.cls == 0)
      r.rhs_unit = dxi / (t.h * t.h * t.h);
    else if (t.cls == 1)
      r.rhs_unit = dxi / (t.h * t.h) *
                   std::pow(std::abs(t.xi) + std::abs(t.xip) + 1, t.a1 + t.a2 - 1);
    else
      r.rhs_unit = dxi / (t.h * t.h);
    r.C = r.value / r.rhs_unit;
    recs[i] = r;
  });
  std::map<double, double> fit0, fit12, maxsec;
  double bound_max = 0;
  for (size_t i = 0; i < tasks.size(); ++i) {
    auto& dst = tasks[i].cls == 0 ? rep.strip0 : (tasks[i].cls == 1 ? rep.strip12 : rep.sector);
    dst.push_back(recs[i]);
    bound_max = std::max(bound_max, recs[i].C);
    if (tasks[i].cls == 2) {
      double& slot = maxsec[tasks[i].h];
      slot = std::max(slot, recs[i].C);
    } else if (tasks[i].pinned) {
      auto& mx = tasks[i].cls == 0 ? fit0 : fit12;
      double& slot = mx[tasks[i].h];
      slot = std::max(slot, recs[i].C);
    }
  }
  auto spread = [](const std::map<double, double>& mx) {
    double lo = kInf, hi = 0;
    for (auto& [h, c] : mx) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    return hi <= 1e-14 ? 1.0 : hi / std::max(lo, 1e-300);
  };
  auto peak = [](const std::map<double, double>& mx) {
    double hi = 0;
    for (auto& [h, c] : mx) hi = std::max(hi, c);
    return hi;
  };
  rep.C_strip0 = peak(fit0);
  rep.C_strip12 = peak(fit12);
  rep.C_sector = peak(maxsec);
  rep.spread_strip0 = spread(fit0);
  rep.spread_strip12 = spread(fit12);
  rep.spread_sector = spread(maxsec);
  // the sector estimate is not saturated (the measured constant shrinks with h), so
  // stability there means non-growth toward small h rather than a two-sided band
  const double sec_big_h = maxsec.empty() ? 0 : maxsec.rbegin()->second;
  const double sec_small_h = maxsec.empty() ? 0 : maxsec.begin()->second;
  const bool sector_ok = std::isfinite(rep.C_sector) && sec_small_h <= 1.2 * sec_big_h + 1e-14;
  rep.pass = std::isfinite(bound_max) && rep.spread_strip0 <= 2 && rep.spread_strip12 <= 2 &&
             sector_ok;
  return rep;
}

namespace {

struct Shot {
  cplx F;        // matching value of the renormalized solution
  double scale;  // local magnitude max(|u'|, |rho u / h|)
  double logw;   // accumulated positive rescaling, log
};

// potential samples at the three stage abscissae of every step; the endpoint
// stages sit a hair inside the step so a jump on a node is read with the
// correct one-sided limit
std::vector<double> sample_stages(const std::function<double(double)>& V, double r_match,
                                  int steps) {
  const double dr = r_match / steps;
  const double eps = 1e-7 * dr;
  std::vector<double> s(3 * (size_t)steps);
  for (int i = 0; i < steps; ++i) {
    const double r = i * dr;
    s[3 * (size_t)i] = V(r + eps);
    s[3 * (size_t)i + 1] = V(r + 0.5 * dr);
    s[3 * (size_t)i + 2] = V(r + dr - eps);
  }
  return s;
}

// integrates u'' = ((V - rho^2)/h^2) u from u(0) = 0, u'(0) = 1 and forms the
// outgoing matching value u'(r_match) - (i rho / h) u(r_match)
Shot shoot_match(const double* vs, double h, cplx rho, double r_match, int steps) {
  cplx u = 0, v = 1;
  double L = 0;
  const double dr = r_match / steps;
  const cplx zeta = rho * rho;
  const double ih2 = 1.0 / (h * h);
  for (int i = 0; i < steps; ++i) {
    const double* s = vs + 3 * (size_t)i;
    const cplx k1u = v, k1v = (s[0] - zeta) * ih2 * u;
    const cplx k2u = v + 0.5 * dr * k1v, k2v = (s[1] - zeta) * ih2 * (u + 0.5 * dr * k1u);
    const cplx k3u = v + 0.5 * dr * k2v, k3v = (s[1] - zeta) * ih2 * (u + 0.5 * dr * k2u);
    const cplx k4u = v + dr * k3v, k4v = (s[2] - zeta) * ih2 * (u + dr * k3u);
    u += dr / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
    v += dr / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    const double mag = std::max(std::abs(u), std::abs(v));
    if (mag > 1e120) {
      u /= mag;
      v /= mag;
      L += std::log(mag);
    }
  }
  const cplx F = v - kI * rho / h * u;
  const double sc = std::max({std::abs(v), std::abs(rho / h * u), 1e-300});
  return {F, sc, L};
}

struct MatchFn {
  std::shared_ptr<const std::vector<double>> vsamp;
  double h = 1;
  double r_match = 6;
  int steps = 4000;
  MatchFn() = default;
  MatchFn(const std::function<double(double)>& V, double hh, double rm, int n)
      : vsamp(std::make_shared<std::vector<double>>(sample_stages(V, rm, n))),
        h(hh),
        r_match(rm),
        steps(n) {}
  Shot operator()(cplx rho) const { return shoot_match(vsamp->data(), h, rho, r_match, steps); }
};

// winding number of the matching value around the rectangle [lo, hi]; segments with
// a large phase step are bisected locally, which resolves zeros sitting close to an
// edge without refining the whole contour
int boundary_winding(const MatchFn& F, cplx lo, cplx hi, int base, int cap, double tol,
                     bool& ok, double& fmin) {
  const cplx c[4] = {lo, cplx(hi.real(), lo.imag()), hi, cplx(lo.real(), hi.imag())};
  auto point_at = [&](double t) {
    int e = (int)std::floor(t) % 4;
    return c[e] + (c[(e + 1) % 4] - c[e]) * (t - std::floor(t));
  };
  struct Node {
    double t;
    cplx val;
  };
  auto eval = [&](double t) {
    const Shot s = F(point_at(t));
    return Node{t, s.F / s.scale};
  };
  std::vector<Node> nodes;
  nodes.reserve(8 * base);
  for (int i = 0; i < 4 * base; ++i) nodes.push_back(eval(4.0 * i / (4 * base)));
  ok = false;
  for (int round = 0; round < 64; ++round) {
    fmin = kInf;
    for (const Node& nd : nodes) fmin = std::min(fmin, std::abs(nd.val));
    if (fmin < 2e-14) return 0;
    double total = 0;
    std::vector<double> splits;
    for (size_t i = 0; i < nodes.size(); ++i) {
      const Node &a = nodes[i], &b = nodes[(i + 1) % nodes.size()];
      const double d = std::arg(b.val / a.val);
      total += d;
      if (std::abs(d) > 0.9) {
        const double tb = (i + 1 == nodes.size()) ? 4.0 : b.t;
        splits.push_back((a.t + tb) / 2);
      }
    }
    if (splits.empty()) {
      const double wn = total / (2 * pi);
      if (std::abs(wn - std::llround(wn)) < tol) {
        ok = true;
        return (int)std::llround(wn);
      }
      return 0;
    }
    if ((int)(nodes.size() + splits.size()) > 4 * cap) return 0;
    for (double t : splits) nodes.push_back(eval(std::min(t, 4.0 - 1e-12)));
    std::sort(nodes.begin(), nodes.end(),
              [](const Node& a, const Node& b) { return a.t < b.t; });
  }
  return 0;
}

bool newton_polish(const MatchFn& F, cplx& x, double len, const ShootOptions& so, double& resid) {
  const Shot s0 = F(x);
  const double L0 = s0.logw;
  auto G = [&](cplx p) {
    const Shot s = F(p);
    return s.F * std::exp(s.logw - L0);
  };
  for (int it = 0; it < so.newton_iters; ++it) {
    const double d = 1e-6 * len;
    const cplx f = G(x);
    const cplx fp = (G(x + d) - G(x - d)) / (2 * d);
    if (!(std::abs(fp) > 1e-300)) return false;
    const cplx step = f / fp;
    x -= step;
    if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
    if (std::abs(step) < so.newton_tol * len) {
      resid = std::abs(step) / len;
      return true;
    }
  }
  return false;
}

struct CellSearch {
  const MatchFn* F;
  const ShootOptions* so;
  double len = 1;  // rho scale for tolerances
  std::vector<cplx> zeros;
  int cells = 0;

  void run(cplx lo, cplx hi, int depth) {
    if (++cells > 8 * so->max_subdivisions)
      throw resolution_error("resonance search exceeded its subdivision budget");
    bool ok = false;
    double fmin = 0;
    int w = boundary_winding(*F, lo, hi, 64, so->max_edge_samples, so->winding_tol, ok, fmin);
    if (!ok) throw resolution_error("boundary winding failed to stabilize");
    if (w < 0) throw resolution_error("negative winding: matching value not analytic here");
    if (w == 0) return;
    if (w == 1) {
      cplx x = (lo + hi) / 2.0;
      double resid = 0;
      if (newton_polish(*F, x, len, *so, resid) && x.real() > lo.real() - 1e-12 &&
          x.real() < hi.real() + 1e-12 && x.imag() > lo.imag() - 1e-12 &&
          x.imag() < hi.imag() + 1e-12) {
        zeros.push_back(x);
        return;
      }
    }
    if (depth >= so->max_subdivisions)
      throw resolution_error("resonance search exceeded its subdivision depth");
    const double dx = hi.real() - lo.real(), dy = hi.imag() - lo.imag();
    // split the longer edge, nudging the cut if the matching value is tiny on it
    for (double frac : {0.5, 0.53, 0.47}) {
      cplx mlo, mhi;
      if (dx >= dy) {
        const double xm = lo.real() + frac * dx;
        mlo = cplx(xm, lo.imag());
        mhi = cplx(xm, hi.imag());
      } else {
        const double ym = lo.imag() + frac * dy;
        mlo = cplx(lo.real(), ym);
        mhi = cplx(hi.real(), ym);
      }
      double emin = kInf;
      for (int k = 0; k <= 8; ++k) {
        const Shot s = (*F)(mlo + (mhi - mlo) * (k / 8.0));
        emin = std::min(emin, std::abs(s.F) / s.scale);
      }
      if (emin > 2e-14) {
        if (dx >= dy) {
          run(lo, cplx(mlo.real(), hi.imag()), depth + 1);
          run(cplx(mlo.real(), lo.imag()), hi, depth + 1);
        } else {
          run(lo, cplx(hi.real(), mlo.imag()), depth + 1);
          run(cplx(lo.real(), mlo.imag()), hi, depth + 1);
        }
        return;
      }
    }
    throw resolution_error("matching value vanishes on every candidate split line");
  }
};

void check_flat_past(const std::function<double(double)>& V, double r_from, double span) {
  for (int i = 0; i <= 400; ++i) {
    const double r = r_from + span * i / 400.0;
    if (std::abs(V(r)) > 1e-10)
      throw precondition_error("potential must vanish past the matching radius");
  }
}

}  // namespace

ResonanceSearch find_matching_zeros(const std::function<double(double)>& V, double h, cplx rho_lo,
                                    cplx rho_hi, const ShootOptions& so) {
  if (!(h > 0)) throw input_error("resonance search needs h > 0");
  if (!(rho_hi.real() > rho_lo.real()) || !(rho_hi.imag() > rho_lo.imag()))
    throw input_error("search rectangle is empty");
  if (!(so.r_match > 0)) throw input_error("matching radius must be positive");
  // the matching value loses 2 Im(rho) r_match / h digits of cancellation from the
  // dominant outgoing part; past e^30 the winding is noise in double precision
  if (rho_lo.imag() < 0 && -rho_lo.imag() * 2 * so.r_match / h > 30)
    throw resolution_error("rectangle extends deeper below the axis than the integrator resolves");
  check_flat_past(V, so.r_match, 10);
  double vmax = 0;
  for (int i = 0; i <= 2000; ++i)
    vmax = std::max(vmax, std::abs(V(so.r_match * i / 2000.0)));
  const double rho_cap = std::max(std::abs(rho_lo), std::abs(rho_hi));
  const int steps = std::max(
      so.min_steps, (int)std::ceil(so.r_match * (rho_cap + std::sqrt(vmax)) / h *
                                   so.steps_per_wave / (2 * pi)));
  MatchFn F(V, h, so.r_match, steps);
  CellSearch cs;
  cs.F = &F;
  cs.so = &so;
  cs.len = std::max(h, rho_cap);

  ResonanceSearch out;
  bool ok = false;
  double fmin = 0;
  out.winding_total =
      boundary_winding(F, rho_lo, rho_hi, 128, so.max_edge_samples, so.winding_tol, ok, fmin);
  if (!ok) throw resolution_error("boundary winding failed to stabilize");
  cs.run(rho_lo, rho_hi, 0);
  out.cells = cs.cells;
  std::sort(cs.zeros.begin(), cs.zeros.end(),
            [](cplx a, cplx b) { return a.real() < b.real(); });
  std::vector<cplx> uniq;
  for (const cplx& z : cs.zeros) {
    if (!uniq.empty() && std::abs(z - uniq.back()) < 1e-7 * cs.len) continue;
    uniq.push_back(z);
  }
  MatchFn F2(V, h, so.r_match, 2 * steps);
  for (const cplx& rz : uniq) {
    ResonanceRecord rec;
    rec.level = -1;
    rec.rho = rz;
    rec.z = rz * rz;
    rec.location = RiemannPoint{rec.z, {}, 0, h};
    const Shot s = F2(rz);
    rec.wval = std::abs(s.F) / s.scale;
    rec.residual = rec.wval;
    rec.physical_side = rz.imag() > 0;
    out.records.push_back(rec);
  }
  out.count_stable = ((int)out.records.size() == out.winding_total);
  return out;
}

namespace {

// distance from a pole of one level's continued resolvent to E0 +/- i0, minimized
// over the branch choices of the other levels (the pole lives on every sheet whose
// flip set contains the level)
double pole_distance(const geometry::TransverseSpectrum& sp, double h, int level, cplx rp,
                     double E0, int side) {
  const cplx zb = rp * rp + h * h * sp.level_sigma2(level);
  const RiemannPoint b = boundary(E0, side, h);
  const double dz = std::abs(zb - cplx(E0, 0));
  const double zmax = std::max(std::abs(zb), std::abs(E0));
  const int nmax = level_count(sp);
  double sup = 0;
  for (int k = 0; nmax < 0 || k < nmax; ++k) {
    if (k > 2000000) throw resolution_error("level enumeration failed to terminate");
    const cplx rb = rho(b, sp, k);
    double d;
    if (k == level) {
      d = std::abs(rp - rb);
    } else {
      const cplx rz = sqrt_upper(zb - h * h * sp.level_sigma2(k));
      d = std::min(std::abs(rz - rb), std::abs(-rz - rb));
    }
    sup = std::max(sup, d);
    if (k > level) {
      const double w = h * h * sp.level_sigma2(k) - zmax;
      if (w > 1 + 2 * dz && (dz / std::sqrt(w) <= sup || dz < 1e-300)) break;
    }
  }
  return sup;
}

void check_standing_assumption(const geometry::ManifoldConfig& cfg, double h) {
  if (cfg.domain != geometry::ManifoldConfig::Domain::half_cylinder)
    throw precondition_error("continuation requires the half-cylinder domain");
  for (int i = 0; i <= 400; ++i) {
    const double r = 6 + 40.0 * i / 400.0;
    if (std::abs(cfg.potential(r, h)) > 1e-10 || std::abs(cfg.profile.value(r) - 1) > 1e-10)
      throw precondition_error("geometry must be flat with no potential past r = 6");
  }
}

}  // namespace

ResonanceSearch mode_resonances(const geometry::ManifoldConfig& cfg, double h, int level,
                                cplx rho_lo, cplx rho_hi, const ShootOptions& so) {
  check_standing_assumption(cfg, h);
  const double s2 = cfg.spectrum.level_sigma2(level);
  const double sigma = std::sqrt(s2);
  auto V = [&cfg, h, sigma](double r) { return geometry::effective_potential(cfg, h, sigma, r); };
  ResonanceSearch out = find_matching_zeros(V, h, rho_lo, rho_hi, so);
  for (ResonanceRecord& rec : out.records) {
    rec.level = level;
    rec.z = rec.rho * rec.rho + h * h * s2;
    rec.location = RiemannPoint{
        rec.z, rec.rho.imag() < 0 ? std::vector<int>{level} : std::vector<int>{}, 0, h};
    rec.dh_plus = pole_distance(cfg.spectrum, h, level, rec.rho, cfg.E0, +1);
    rec.dh_minus = pole_distance(cfg.spectrum, h, level, rec.rho, cfg.E0, -1);
  }
  return out;
}

double jost_kernel_norm(const std::function<double(double)>& V, double h, cplx rho,
                        const halfline::WeightFn& chi, double support, int n_hint) {
  if (!(support > 0) || !(h > 0)) throw input_error("kernel norm needs support, h > 0");
  const double r_end = std::max(support, 6.0) + 1.0;
  if (rho.imag() < 0 && -rho.imag() * r_end / h > 600)
    throw resolution_error("branch point too deep below the axis for direct assembly");
  double vmax = 0;
  for (int i = 0; i <= 2000; ++i) vmax = std::max(vmax, std::abs(V(r_end * i / 2000.0)));
  const double k = (std::abs(rho) + std::sqrt(vmax) + 1) / h;
  int n = n_hint > 0 ? n_hint : (int)std::ceil(r_end * k * 10);
  n = std::clamp(n, 500, 60000);
  const double dr = r_end / (n + 1);
  const double t = h * h / (dr * dr);
  const cplx zeta = rho * rho;
  Tridiag T;
  T.n = n;
  T.diag.resize(n);
  T.lower.assign(n - 1, cplx(-t, 0));
  T.upper.assign(n - 1, cplx(-t, 0));
  for (int i = 0; i < n; ++i) T.diag[i] = 2 * t + V((i + 1) * dr) - zeta;
  // outgoing closure at the truncation with the requested branch of rho
  T.diag[n - 1] = 2 * t - 2.0 * kI * rho * h / dr + V(n * dr) - zeta;
  T.lower[n - 2] = -2 * t;
  TridiagSolver S(T, 0);
  if (S.singular()) return kInf;
  int m = 0;
  while (m < n && (m + 1) * dr <= support) ++m;
  std::vector<double> w(m);
  for (int i = 0; i < m; ++i) w[i] = chi((i + 1) * dr);
  // the weighted resolvent is applied through the factorization; the weights are
  // real, so the adjoint only conjugates the solve
  std::vector<cplx> b(n), x(n);
  auto applied = [&](const cplx* xx, cplx* yy, bool adj) {
    std::fill(b.begin(), b.end(), cplx(0, 0));
    for (int i = 0; i < m; ++i) b[i] = w[i] * xx[i];
    S.solve(b.data(), x.data(), adj);
    for (int i = 0; i < m; ++i) yy[i] = w[i] * x[i];
  };
  NormOptions no;
  no.tol = 1e-7;
  auto ap = [&](const cplx* xx, cplx* yy) { applied(xx, yy, false); };
  auto apT = [&](const cplx* xx, cplx* yy) { applied(xx, yy, true); };
  return operator_norm(m, m, ap, apT, no).value;
}

namespace {

struct VodevAssembly {
  double worst = 0;
  std::vector<VodevModeRecord> per_mode;
};

VodevAssembly vodev_assemble(const geometry::ManifoldConfig& cfg, double h, cplx z, cplx z0,
                             const std::vector<double>& chi, const std::vector<double>& chi1,
                             const std::vector<double>& sigmas, double rmax, int n, int m) {
  const double dr = rmax / (n + 1);
  // commutator data: 4th-order stencils on the sampled cutoff
  std::vector<double> c1p(n, 0), c1pp(n, 0);
  for (int i = 2; i + 2 < n; ++i) {
    c1p[i] = (-chi1[i + 2] + 8 * chi1[i + 1] - 8 * chi1[i - 1] + chi1[i - 2]) / (12 * dr);
    c1pp[i] = (-chi1[i + 2] + 16 * chi1[i + 1] - 30 * chi1[i] + 16 * chi1[i - 1] - chi1[i - 2]) /
              (12 * dr * dr);
  }
  std::vector<double> midc(n);
  for (int i = 0; i < n; ++i) midc[i] = chi[i] * chi[i] * chi1[i] * (2 - chi1[i]);
  auto commut = [&](const std::vector<cplx>& u, std::vector<cplx>& out) {
    out.assign(n, cplx(0, 0));
    for (int i = 1; i + 1 < n; ++i)
      out[i] = h * h * (c1pp[i] * u[i] + 2 * c1p[i] * (u[i + 1] - u[i - 1]) / (2 * dr));
  };

  VodevAssembly res;
  res.per_mode.resize(sigmas.size());
  parallel_for(sigmas.size(), [&](size_t li) {
    const double sigma = sigmas[li];
    const double hs2 = h * h * sigma * sigma;
    const double t = h * h / (dr * dr);
    Tridiag T;
    T.n = n;
    T.diag.resize(n);
    T.lower.assign(n - 1, cplx(-t, 0));
    T.upper.assign(n - 1, cplx(-t, 0));
    for (int i = 0; i < n; ++i)
      T.diag[i] = 2 * t + geometry::effective_potential(cfg, h, sigma, (i + 1) * dr) + hs2;
    const TridiagSolver Sz(T, z), Sz0(T, z0);
    if (Sz.singular() || Sz0.singular())
      throw resolution_error("truncated mode operator is singular at the requested z");
    const cplx rz = sqrt_upper(z - hs2), rz0 = sqrt_upper(z0 - hs2);

    Eigen::MatrixXcd Tm(m, m);
    for (int i = 0; i < m; ++i) {
      const double ri = (i + 1) * dr;
      for (int j = 0; j < m; ++j) {
        const double rj = (j + 1) * dr;
        Tm(i, j) = chi[i] * dr * chi[j] *
                   (model_kernel(rz, ri, rj, h) - model_kernel(rz0, ri, rj, h));
      }
    }

    Eigen::MatrixXcd L(m, m), R(m, m);
    std::vector<cplx> a(n), x(n), y(n), u(n), ku(n);
    for (int j = 0; j < m; ++j) {
      // left side: chi (R(z) - R(z0)) chi
      std::fill(a.begin(), a.end(), cplx(0, 0));
      a[j] = chi[j];
      Sz.solve(a.data(), x.data());
      Sz0.solve(a.data(), y.data());
      for (int i = 0; i < m; ++i) L(i, j) = chi[i] * (x[i] - y[i]);

      // first term: (z - z0) chi R(z) chi chi1(2-chi1) chi R(z0) chi
      for (int i = 0; i < n; ++i) a[i] = midc[i] * y[i];
      Sz.solve(a.data(), x.data());
      for (int i = 0; i < m; ++i) R(i, j) = (z - z0) * chi[i] * x[i];

      // second term: (1 - chi1 - chi R(z) chi K) T (1 - chi1 + K chi R(z0) chi)
      for (int i = 0; i < n; ++i) a[i] = chi[i] * y[i];
      commut(a, ku);
      ku[j] += 1 - chi1[j];
      Eigen::Map<const Eigen::VectorXcd> kv(ku.data(), m);
      Eigen::VectorXcd tw = Tm * kv;
      std::fill(u.begin(), u.end(), cplx(0, 0));
      for (int i = 0; i < m; ++i) u[i] = tw(i);
      commut(u, ku);
      for (int i = 0; i < n; ++i) a[i] = chi[i] * ku[i];
      Sz.solve(a.data(), x.data());
      for (int i = 0; i < m; ++i) R(i, j) += (1 - chi1[i]) * u[i] - chi[i] * x[i];
    }
    const double ln = L.norm();
    VodevModeRecord rec;
    rec.lhs_norm = ln;
    rec.rel = (L - R).norm() / std::max(ln, 1e-300);
    res.per_mode[li] = rec;
  });
  for (const auto& r : res.per_mode) res.worst = std::max(res.worst, r.rel);
  return res;
}

}  // namespace

VodevReport verify_vodev_identity(const geometry::ManifoldConfig& cfg, double h, cplx z, cplx z0,
                                  const halfline::WeightFn& chi, const halfline::WeightFn& chi1,
                                  const VodevOptions& opts) {
  check_standing_assumption(cfg, h);
  for (cplx zz : {z, z0})
    if (zz.imag() == 0 && zz.real() >= -1e-9)
      throw input_error("z and z0 must lie off the spectrum");
  // cutoff contracts: values in [0,1], chi chi1 = chi1, chi1 = 1 up to r = 6
  double b_chi = 0, b_chi1 = 0;
  for (int i = 0; i <= 12000; ++i) {
    const double r = opts.rmax * i / 12000.0;
    const double c = chi(r), c1 = chi1(r);
    if (c < -1e-12 || c > 1 + 1e-12 || c1 < -1e-12 || c1 > 1 + 1e-12)
      throw input_error("cutoffs must take values in [0, 1]");
    if (std::abs(c * c1 - c1) > 1e-10) throw input_error("chi must equal 1 on supp chi1");
    if (r <= 6 && std::abs(c1 - 1) > 1e-12)
      throw input_error("chi1 must equal 1 up to the matching radius");
    if (std::abs(c) > 1e-13) b_chi = r;
    if (std::abs(c1) > 1e-13) b_chi1 = r;
  }
  if (b_chi + 2 > opts.rmax / 2) throw input_error("cutoff support too close to the truncation");
  (void)b_chi1;
  // the truncated solve stands in for the outgoing problem; require real decay room
  // at the slowest mode so the Dirichlet truncation is invisible
  const double dmin = std::min(sqrt_upper(z).imag(), sqrt_upper(z0).imag());
  if (dmin * opts.rmax / h < 18)
    throw input_error("z too close to the spectrum for the truncated assembly");

  const modes::ModeFamily fam =
      modes::assemble_modes(cfg, h, std::max({z.real(), z0.real(), 0.0}) + 1);
  std::vector<double> sigmas;
  for (const auto& e : fam.entries) {
    if (!sigmas.empty() && std::abs(e.sigma * e.sigma - sigmas.back() * sigmas.back()) < 1e-12)
      continue;
    if ((int)sigmas.size() >= opts.levels_cap) break;
    sigmas.push_back(e.sigma);
  }

  VodevReport rep;
  const double dr_base = opts.dr > 0 ? opts.dr : std::min(0.01, h / 50);
  double worst[2] = {0, 0};
  for (int pass = 0; pass < 2; ++pass) {
    const double dr_eff = pass == 0 ? dr_base : 2 * dr_base;
    const int n = (int)std::llround(opts.rmax / dr_eff) - 1;
    if (n < 64) throw input_error("grid too coarse for the identity assembly");
    const double dr = opts.rmax / (n + 1);
    int m = 0;
    while (m < n && (m + 1) * dr <= b_chi + 2 * dr) ++m;
    std::vector<double> cs(n), c1s(n);
    for (int i = 0; i < n; ++i) {
      cs[i] = chi((i + 1) * dr);
      c1s[i] = chi1((i + 1) * dr);
    }
    const VodevAssembly as =
        vodev_assemble(cfg, h, z, z0, cs, c1s, sigmas, opts.rmax, n, m);
    worst[pass] = as.worst;
    if (pass == 0) {
      rep.per_mode = as.per_mode;
      for (size_t i = 0; i < sigmas.size(); ++i) rep.per_mode[i].level = (int)i;
    } else {
      for (size_t i = 0; i < sigmas.size() && i < rep.per_mode.size(); ++i)
        rep.per_mode[i].rel_coarse = as.per_mode[i].rel;
    }
  }
  rep.worst = worst[0];
  rep.worst_coarse = worst[1];
  rep.order_ratio = worst[1] / std::max(worst[0], 1e-300);
  rep.pass = rep.worst <= opts.tol && rep.order_ratio >= 2.0;
  return rep;
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n == 0 ? 0 : (n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
}

}  // namespace

RegionReport resonance_free_region(const geometry::ManifoldConfig& cfg,
                                   const std::vector<double>& hs, const halfline::WeightFn& chi,
                                   const RegionOptions& opts) {
  if (hs.empty()) throw input_error("region test needs at least one h");
  if (!(cfg.E0 > 0)) throw input_error("region test needs E0 > 0");
  double b_chi = 0;
  for (int i = 0; i <= 4000; ++i) {
    const double r = 30.0 * i / 4000.0;
    if (std::abs(chi(r)) > 1e-13) b_chi = r;
  }
  if (!(b_chi > 0)) throw input_error("cutoff is identically zero");
  const double E0 = cfg.E0;
  const auto& sp = cfg.spectrum;

  RegionReport rep;
  std::vector<modes::ModeFamily> fams;
  for (double h : hs) {
    check_standing_assumption(cfg, h);
    fams.push_back(modes::assemble_modes(cfg, h, E0 + 1));
    RegionRecord rec;
    rec.h = h;
    modes::WeightQuery q;
    q.wl = chi;
    q.wr = chi;
    q.grid = opts.grid;
    q.norm = opts.norm;
    q.z = cplx(E0, opts.eps);
    const double n1 = modes::full_weighted_norm(fams.back(), q).value;
    q.z = cplx(E0, 2 * opts.eps);
    const double n2 = modes::full_weighted_norm(fams.back(), q).value;
    rec.M = std::max(n1, 2 * n1 - n2);
    rep.records.push_back(rec);
  }
  std::vector<double> ch2;
  for (const auto& r : rep.records) ch2.push_back(r.M * r.h * r.h);
  rep.C_fit = median_of(ch2);
  for (auto& r : rep.records) r.mu = std::min(r.h * r.h, rep.C_fit / r.M);

  // locate poles of the nearly-open levels' continued resolvents; outside a
  // level's searched window the level's own term |rho - rho_0| already bounds
  // d_h from below, so a window of half-width = depth around the on-shell
  // momentum certifies everything it does not visit. windows stay in Re rho > 0:
  // zeros mirror as rho <-> -conj(rho) with the same distance to the boundary
  // pair, so one representative suffices. depth h keeps the matching value an
  // order e^{-12} above the integrator noise floor at the bottom edge.
  bool flat = true;
  for (int i = 0; i <= 600 && flat; ++i)
    if (std::abs(cfg.profile.value(6.0 * i / 600) - 1) > 1e-12) flat = false;
  ShootOptions sweep_shoot = opts.shoot;
  sweep_shoot.steps_per_wave = std::max(opts.shoot.steps_per_wave, 170.0);
  sweep_shoot.min_steps = std::max(opts.shoot.min_steps / 2, 2000);
  for (size_t ih = 0; ih < hs.size(); ++ih) {
    const double h = hs[ih];
    RegionRecord& rec = rep.records[ih];
    const double depth = h;
    rec.nearest_dh = 0.9 * depth;
    std::vector<int> lv;
    const int nmax = level_count(sp);
    for (int k = 0; nmax < 0 || k < nmax; ++k) {
      if (E0 - h * h * sp.level_sigma2(k) <= -4 * h * h) break;
      lv.push_back(k);
    }
    if (flat) {
      // level-independent effective potential: the matching value is shared, so
      // one sweep covers every level's window
      auto V = [&cfg, h](double r) { return geometry::effective_potential(cfg, h, 0, r); };
      ResonanceSearch s = find_matching_zeros(
          V, h, cplx(1e-6, -depth), cplx(std::sqrt(E0) + depth, -1e-13), sweep_shoot);
      rec.resonances = (int)s.records.size();
      for (const auto& rr : s.records)
        for (int k : lv)
          for (int side : {+1, -1})
            rec.nearest_dh =
                std::min(rec.nearest_dh, pole_distance(sp, h, k, rr.rho, E0, side));
    } else {
      for (int k : lv) {
        const double Ek = E0 - h * h * sp.level_sigma2(k);
        const double r0 = Ek > 0 ? std::sqrt(Ek) : 0;
        ResonanceSearch s = mode_resonances(cfg, h, k, cplx(std::max(r0 - depth, 1e-6), -depth),
                                            cplx(r0 + depth, -1e-13), sweep_shoot);
        rec.resonances += (int)s.records.size();
        for (const auto& rr : s.records)
          rec.nearest_dh = std::min(rec.nearest_dh, std::min(rr.dh_plus, rr.dh_minus));
      }
    }
  }
  rep.Cprime = 1e6;
  for (const auto& r : rep.records)
    rep.Cprime = std::min(rep.Cprime, r.nearest_dh / r.mu);
  rep.violation = rep.Cprime < opts.Cprime_floor;

  // sample the cutoff norm inside the region, on the physical sheet and past the
  // cut through the nearest-threshold level
  const double Ceff = std::min(rep.Cprime, 10.0);
  for (size_t ih = 0; ih < hs.size(); ++ih) {
    const double h = hs[ih];
    RegionRecord& rec = rep.records[ih];
    const modes::ModeFamily& fam = fams[ih];
    // nearest-threshold level and its flattened index
    int best_flat = -1;
    double best_s2 = 0, best_gap = kInf;
    for (const auto& e : fam.entries)
      if (std::abs(e.Ej) < best_gap) {
        best_gap = std::abs(e.Ej);
        best_flat = e.j;
        best_s2 = e.sigma * e.sigma;
      }
    int lev = -1;
    const int nmax = level_count(sp);
    for (int k = 0; nmax < 0 || k < nmax; ++k) {
      if (std::abs(sp.level_sigma2(k) - best_s2) <= 1e-9 * (1 + best_s2)) {
        lev = k;
        break;
      }
      if (sp.level_sigma2(k) > best_s2 + 1) break;
    }
    const double sigma_lev = std::sqrt(best_s2);
    auto Vlev = [&cfg, h, sigma_lev](double r) {
      return geometry::effective_potential(cfg, h, sigma_lev, r);
    };
    auto zero_lev = [best_flat](int j, double) { return j == best_flat ? 0.0 : 1.0; };

    auto point_of = [&](int variant, double s) {
      RiemannPoint p = physical(cplx(E0, s), h);
      if (variant == 1) p = physical(cplx(E0 + s, opts.eps), h);
      if (variant == 2) p = RiemannPoint{cplx(E0, -s), {lev}, 0, h};
      if (variant == 3) p = RiemannPoint{cplx(E0, s), {lev}, 0, h};
      return p;
    };
    auto dist_of = [&](const RiemannPoint& p) {
      return std::min(dh_metric(p, boundary(E0, +1, h), sp).value,
                      dh_metric(p, boundary(E0, -1, h), sp).value);
    };
    auto eval_at = [&](int variant, double t) {
      // bisect the offset so the point sits at distance t from the boundary pair
      double slo = 1e-16, shi = 2;
      if (dist_of(point_of(variant, slo)) > 1.25 * t) return -1.0;
      if (dist_of(point_of(variant, shi)) < t) return -1.0;
      for (int it = 0; it < 80; ++it) {
        const double sm = std::sqrt(slo * shi);
        (dist_of(point_of(variant, sm)) > t ? shi : slo) = sm;
      }
      const RiemannPoint p = point_of(variant, slo);
      if (dist_of(p) > 1.25 * t) return -1.0;
      modes::WeightQuery q;
      q.wl = chi;
      q.wr = chi;
      q.grid = opts.grid;
      q.norm = opts.norm;
      q.z = p.z;
      if (variant < 2) {
        const modes::FullNorm fn = modes::full_weighted_norm(fam, q);
        return fn.any_singular ? kInf : fn.value;
      }
      const modes::FullNorm fn = modes::full_weighted_norm(fam, q, zero_lev, zero_lev);
      const double flipped = jost_kernel_norm(Vlev, h, rho(p, sp, lev), chi, b_chi);
      return fn.any_singular ? kInf : std::max(fn.value, flipped);
    };
    double fit_max = 0;
    for (double kappa : {0.3, 0.7}) {
      // stay strictly inside the certified ball even when C' mu exceeds it
      const double t_ball = std::min(kappa * Ceff * rec.mu, 0.8 * rec.nearest_dh);
      for (int variant = 0; variant < 4; ++variant) {
        if (variant >= 2 && lev < 0) continue;
        // past the cut, the continued kernel grows like e^{c t / h}; the fitted
        // constant is read at depth proportional to h so that factor is the same
        // at every h, while an uncapped probe near the ball edge is recorded too
        const double t = variant < 2 ? t_ball : std::min(t_ball, 0.05 * h);
        const double v = eval_at(variant, t);
        if (v >= 0) {
          fit_max = std::max(fit_max, v);
          rec.inregion_max = std::max(rec.inregion_max, v);
        }
        if (variant >= 2 && kappa > 0.5 && t_ball > 1.2 * t) {
          const double ve = eval_at(variant, t_ball);
          if (ve >= 0) rec.inregion_max = std::max(rec.inregion_max, ve);
        }
      }
    }
    rec.inregion_fit_Cmu = fit_max * rec.mu;
    rec.inregion_max_Cmu = rec.inregion_max * rec.mu;
  }
  double lo = kInf, hi = 0, himax = 0;
  bool all_ok = true;
  for (const auto& r : rep.records) {
    if (!std::isfinite(r.inregion_max_Cmu)) all_ok = false;
    himax = std::max(himax, r.inregion_max_Cmu);
    if (r.inregion_fit_Cmu <= 0) continue;
    lo = std::min(lo, r.inregion_fit_Cmu);
    hi = std::max(hi, r.inregion_fit_Cmu);
  }
  // the reported constant covers every sample; stability is judged on the fitted
  // (depth-matched) family
  rep.Chat = himax;
  rep.Chat_spread = (hi <= 0 || lo == kInf) ? kInf : hi / lo;
  rep.pass = !rep.violation && all_ok && rep.Chat_spread <= 2;
  return rep;
}

}  // namespace cylscat::continuation
