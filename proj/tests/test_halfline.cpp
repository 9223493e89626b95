#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cylscat/halfline.hpp"

#include <cmath>
#include <random>

using namespace cylscat;
using namespace cylscat::halfline;

namespace {

// analytic outgoing Green's function of -h^2 d^2/dr^2 - z on the half line,
// Dirichlet at 0: sin(k r<) e^{i k r>} / (h^2 k), k = sqrt(z)/h
cplx free_green(cplx z, double h, double r, double s) {
  const cplx k = sqrt_upper(z) / h;
  const double lo = std::min(r, s), hi = std::max(r, s);
  return std::sin(k * lo) * std::exp(cplx(0, 1) * k * hi) / (h * h * k);
}

// relative error of the discretized free resolvent against the analytic kernel,
// applied to a localized source and probed in the interior
double free_kernel_error(int n, cplx z, double h, double rmax) {
  auto Vz = [](double) { return cplx(0, 0); };
  const ModeOperator op = discretize(h, rmax, n, Vz, Boundary::robin_outgoing);
  std::vector<cplx> rhs(op.n);
  for (int i = 0; i < op.n; ++i) {
    const double r = op.nodes[i];
    rhs[i] = std::exp(-(r - 3) * (r - 3));
  }
  const Resolved sol = apply_resolvent(op, z, rhs);
  REQUIRE(!sol.singular);
  double num = 0, den = 0;
  for (int i = 0; i < op.n; ++i) {
    const double r = op.nodes[i];
    if (r < 0.5 || r > 10) continue;
    cplx exact = 0;
    for (int j = 0; j < op.n; ++j) exact += free_green(z, h, r, op.nodes[j]) * rhs[j];
    exact *= op.dr;
    num += std::norm(sol.u[i] - exact);
    den += std::norm(exact);
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("discretized free resolvent against the analytic kernel") {
  const cplx z(2.0, 0.5);
  const double err = free_kernel_error(4000, z, 1.0, 30);
  CHECK(err < 1e-3);

  // halving the spacing divides the error by about four
  const double coarse = free_kernel_error(1000, z, 1.0, 30);
  const double fine = free_kernel_error(2000, z, 1.0, 30);
  const double order = std::log2(coarse / fine);
  CHECK(order > 1.5);
  CHECK(order < 2.5);
}

TEST_CASE("resolvent blows up near a Dirichlet box eigenvalue") {
  auto Vz = [](double) { return cplx(0, 0); };
  const int n = 2000;
  const ModeOperator op = discretize(1.0, 8.0, n, Vz, Boundary::dirichlet);
  // lowest discrete eigenvalue of the Dirichlet Laplacian on the grid
  const double eig = (2 - 2 * std::cos(pi * op.dr / 8.0)) / (op.dr * op.dr);
  const WeightFn w = w_window(1, 7, 0.5);
  const auto at = [&](cplx z) { return weighted_norm(op, z, w, w).value; };
  CHECK(at(cplx(eig, 0) + cplx(1e-7, 0)) > 1e3 * at(cplx(eig + 0.5, 0)));
}

TEST_CASE("iterative norm agrees with the dense SVD route") {
  auto Vc = [](double r) { return cplx(2.0 * std::exp(-r), 0); };
  const ModeOperator op = discretize(0.5, 12.0, 300, Vc, Boundary::robin_outgoing);
  const cplx z(1.3, 0.2);
  const WeightFn wl = w_power(1.05), wr = w_cc(2, 9);
  const double gk = weighted_norm(op, z, wl, wr).value;

  const auto sl = sample(wl, op.nodes);
  const auto sr = sample(wr, op.nodes);
  auto apply = [&](const cplx* x, cplx* y) {
    std::vector<cplx> rhs(op.n);
    for (int i = 0; i < op.n; ++i) rhs[i] = sr[i] * x[i];
    const Resolved sol = apply_resolvent(op, z, rhs);
    for (int i = 0; i < op.n; ++i) y[i] = sl[i] * sol.u[i];
  };
  const double dense = operator_norm_dense(op.n, op.n, apply);
  CHECK(gk == doctest::Approx(dense).epsilon(1e-7));
}

TEST_CASE("weight helpers") {
  CHECK(w_one()(4.2) == 1);
  CHECK(w_power(1)(1) == doctest::Approx(0.5));
  CHECK(w_power(1)(-3) == doctest::Approx(1));  // clamped at the origin
  CHECK(w_power_abs(2)(-1) == doctest::Approx(0.25));
  CHECK(w_window(2, 5, 1)(3.5) == 1);
  CHECK(w_window(2, 5, 1)(0.5) == 0);
  CHECK(w_cc(1, 3)(1.0) == 0);
  CHECK(w_cc(1, 3)(3.0) == 0);
  CHECK(w_cc(1, 3)(2.0) > 0);

  const auto VD = geometry::RepulsivePotential::power(2, 1);
  const auto wv = w_vd(VD, 0.5, 1.5);
  CHECK(wv(1.0) == doctest::Approx(std::sqrt(VD.value(1.0)) * std::pow(2.0, -1.5)));

  geometry::ManifoldConfig cfg;
  cfg.profile = geometry::Profile::bump(0.3, 6);
  const auto chi = w_chi_geom(cfg);
  CHECK(chi(7.0) == 0);
  CHECK(chi(0.0) ==
        doctest::Approx(std::sqrt(std::pow(0.7, -cfg.alpha()) - 1)).epsilon(1e-12));
}

TEST_CASE("grid policy reacts to wavelength and domain needs") {
  GridPolicy gp;
  double rmax1 = 0, rmax2 = 0;
  int n1 = 0, n2 = 0;
  gp.choose(cplx(1, 0.1), 0.2, 1.0, rmax1, n1);
  gp.choose(cplx(1, 0.1), 0.02, 1.0, rmax2, n2);
  CHECK(rmax1 >= gp.rmax_lo);
  CHECK(n2 > n1);  // smaller h needs a finer grid
  CHECK(n2 <= gp.n_cap);
}

TEST_CASE("truncation estimate is small for localized weights") {
  auto Vz = [](double) { return cplx(0, 0); };
  GridPolicy gp;
  const ModeOperator op = make_operator(gp, 1.0, cplx(2, 0.3), Vz, 0.0);
  const WeightFn w = w_cc(1, 5);
  const auto wn = weighted_norm(op, cplx(2, 0.3), w, w, {}, true);
  CHECK(wn.converged);
  CHECK(wn.trunc_estimate >= 0);
  CHECK(wn.trunc_estimate < 0.02);
}

TEST_CASE("explicit-constant bounds on a quick sample") {
  const auto VD = geometry::RepulsivePotential::power(1, 1);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(0, 1);
  std::vector<cplx> zs;
  for (int i = 0; i < 16; ++i) {
    const double m = 1e-2 * std::pow(1e4, uni(rng));
    const double a = 1e-5 * std::pow(pi / 1e-5, uni(rng));
    zs.push_back(m * std::exp(cplx(0, (uni(rng) < 0.5 ? 1 : -1) * a)));
  }
  const auto big = check_uniform_big(VD, zs, 1.0);
  CHECK(big.pass);
  CHECK(big.worst_ratio <= 1.02);
  CHECK(big.records.size() == zs.size());

  const auto small = check_uniform_small(VD, zs, 1.0, 0.5);
  CHECK(small.pass);
  CHECK(small.worst_ratio <= 1.02);

  const auto prod = check_uniform_product(VD, zs, 1.0, 0.5);
  CHECK(prod.pass);
  CHECK(prod.worst_ratio <= 1.02);
}

TEST_CASE("semiclassical exponents on a reduced sweep") {
  const auto VD = geometry::RepulsivePotential::power(1, 1);
  const std::vector<double> hs = {0.05, 0.0841, 0.1414, 0.2378};
  const auto rep = check_semiclassical(default_semiclassical_legs(VD), hs, 0.2);
  REQUIRE(rep.legs.size() == 3);
  CHECK(rep.legs[0].expected == doctest::Approx(-1));
  CHECK(rep.legs[1].expected == doctest::Approx(-2));
  CHECK(rep.legs[2].expected == doctest::Approx(-1));
  for (const auto& leg : rep.legs) {
    INFO(leg.name, " slope ", leg.fit.slope, " expected ", leg.expected);
    CHECK(std::abs(leg.fit.slope - leg.expected) < 0.2);
  }
  CHECK(rep.pass);
}

TEST_CASE("band projector selects the advertised frequencies") {
  const int n = 2048;
  const double dr = 0.01, h = 0.5;
  BandProjector P(n, dr, h, 0.5, 1.5);
  REQUIRE(P.size() == n);

  auto wave = [&](double k) {
    std::vector<cplx> u(n);
    for (int i = 0; i < n; ++i) u[i] = std::exp(cplx(0, k * i * dr));
    return u;
  };
  auto l2 = [&](const std::vector<cplx>& u) {
    double s = 0;
    for (const auto& x : u) s += std::norm(x);
    return std::sqrt(s);
  };

  const auto uin = wave(2.0);  // h k = 1: mid band
  std::vector<cplx> pu(n);
  P.apply(uin.data(), pu.data());
  double diff = 0;
  for (int i = n / 4; i < 3 * n / 4; ++i) diff += std::norm(pu[i] - uin[i]);
  CHECK(std::sqrt(diff) < 0.1 * l2(uin));

  const auto uout = wave(12.0);  // h k = 6: far outside
  P.apply(uout.data(), pu.data());
  CHECK(l2(pu) < 0.1 * l2(uout));

  // self-adjointness
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(-1, 1);
  std::vector<cplx> a(n), b(n), pa(n), pb(n);
  for (int i = 0; i < n; ++i) {
    a[i] = cplx(uni(rng), uni(rng));
    b[i] = cplx(uni(rng), uni(rng));
  }
  P.apply(a.data(), pa.data());
  P.apply(b.data(), pb.data());
  cplx s1 = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    s1 += std::conj(pa[i]) * b[i];
    s2 += std::conj(a[i]) * pb[i];
  }
  CHECK(std::abs(s1 - s2) < 1e-8 * std::abs(s1));
}

TEST_CASE("tunneling and propagation probes on the reference geometry") {
  geometry::ManifoldConfig cfg;
  cfg.profile = geometry::Profile::bump(0.3, 6);
  cfg.spectrum = geometry::TransverseSpectrum::circle(2 * pi);
  cfg.E0 = 1;

  std::vector<std::pair<double, double>> pairs;
  for (double h : {0.1, 0.141, 0.2}) pairs.emplace_back(h, std::sqrt(2.0) / h);

  const auto ag = agmon_probe(cfg, pairs);
  REQUIRE(ag.hs.size() == pairs.size());
  CHECK(ag.decay.slope < 0);
  CHECK(ag.decay.r2 >= 0.99);
  CHECK(ag.overlap_spread <= 3);
  CHECK(ag.pass);

  const auto ml = microlocal_probe(cfg, pairs);
  CHECK(ml.fit_out.slope >= 4);
  CHECK(ml.fit_in.slope >= -1.5);
  CHECK(ml.pass);
}

TEST_CASE("per-class mode estimates on a reduced sweep") {
  geometry::ManifoldConfig cfg;
  cfg.profile = geometry::Profile::bump(0.3, 6);
  cfg.spectrum = geometry::TransverseSpectrum::circle(2 * pi);
  cfg.E0 = 1;

  const auto rep = check_mode_estimates(cfg, {0.1, 0.141, 0.2}, 1.05, 1.05, 1.05, 1e-6, 0.35, 4);
  REQUIRE(!rep.legs.empty());
  for (const auto& leg : rep.legs) {
    INFO(leg.name, " slope ", leg.fit.slope, " expected ", leg.expected);
    CHECK(std::abs(leg.fit.slope - leg.expected) < 0.35);
  }
  CHECK(rep.pass);
}
