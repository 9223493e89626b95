#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cylscat/geometry.hpp"

#include <cmath>

using namespace cylscat;
using namespace cylscat::geometry;

namespace {

// centered finite-difference derivative of a scalar function, order k = 1..3
double fd_deriv(const std::function<double(double)>& g, double r, int k, double e = 1e-3) {
  if (k == 1) return (g(r + e) - g(r - e)) / (2 * e);
  if (k == 2) return (g(r + e) - 2 * g(r) + g(r - e)) / (e * e);
  return (g(r + 2 * e) - 2 * g(r + e) + 2 * g(r - e) - g(r - 2 * e)) / (2 * e * e * e);
}

}  // namespace

TEST_CASE("core helpers") {
  CHECK(sqrt_upper(cplx(4, 0)) == cplx(2, 0));
  CHECK(std::abs(sqrt_upper(cplx(-1, 0)) - cplx(0, 1)) < 1e-15);
  CHECK(sqrt_upper(cplx(0, 2)).imag() > 0);
  CHECK(sqrt_upper(cplx(0, -2)).imag() > 0);
  CHECK(sqrt_upper(cplx(3, -1e-18)).imag() >= 0);

  CHECK(smoothstep(-1) == 0);
  CHECK(smoothstep(2) == 1);
  CHECK(smoothstep(0.5) == doctest::Approx(0.5));
  CHECK(ramp_up(0, 1, 2) == 0);
  CHECK(ramp_up(3, 1, 2) == 1);
  CHECK(ramp_down(0, 1, 2) == 1);
  CHECK(ramp_down(3, 1, 2) == 0);
  CHECK(plateau(2.5, 1, 4, 1) == 1);
  CHECK(plateau(0.5, 1, 4, 1) == 0);
  CHECK(plateau(4.5, 1, 4, 1) == 0);

  // published FNV-1a 64-bit vectors
  CHECK(fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);

  LineFit lf = fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
  CHECK(lf.slope == doctest::Approx(2).epsilon(1e-12));
  CHECK(lf.intercept == doctest::Approx(1).epsilon(1e-12));
  CHECK(lf.r2 == doctest::Approx(1).epsilon(1e-12));
}

TEST_CASE("profile families: closed-form values and derivative consistency") {
  const Profile pw = Profile::power(0.5, 1.5);
  CHECK(pw.value(0) == doctest::Approx(0.5));
  CHECK(pw.value(3) == doctest::Approx(1 - 0.5 * std::pow(4.0, -1.5)).epsilon(1e-14));

  const Profile bp = Profile::bump(0.3, 6);
  CHECK(bp.value(0) == doctest::Approx(0.7));
  CHECK(bp.value(3) == doctest::Approx(1 - 0.3 * std::pow(0.5, 4)).epsilon(1e-14));
  CHECK(bp.value(6) == 1.0);
  CHECK(bp.value(9) == 1.0);
  CHECK(bp.deriv(7, 1) == 0.0);

  const Profile hg = Profile::hourglass(0.4, 4);
  CHECK(hg.full_line());
  CHECK(hg.value(0) == doctest::Approx(0.6));
  CHECK(hg.value(-2) == hg.value(2));
  CHECK(hg.value(5) == 1.0);

  for (const Profile& f : {pw, bp}) {
    auto g = [&](double r) { return f.value(r); };
    for (double r : {0.4, 1.7, 3.2, 5.1}) {
      for (int k = 1; k <= 3; ++k)
        CHECK(f.deriv(r, k) ==
              doctest::Approx(fd_deriv(g, r, k)).epsilon(1e-4).scale(std::abs(f.deriv(r, 1)) + 1));
    }
  }
  auto gh = [&](double r) { return hg.value(r); };
  for (double r : {-2.3, 0.9, 3.1})
    CHECK(hg.deriv(r, 2) == doctest::Approx(fd_deriv(gh, r, 2)).epsilon(1e-5).scale(1));

  CHECK_THROWS_AS(Profile::power(0, 1), input_error);
  CHECK_THROWS_AS(Profile::power(1.5, 1), input_error);
  CHECK_THROWS_AS(Profile::power(0.5, -1), input_error);
  CHECK_THROWS_AS(Profile::bump(0.5, 0), input_error);
  CHECK_THROWS_AS(pw.value(-0.5), precondition_error);
  CHECK_THROWS_AS(pw.deriv(1, 4), precondition_error);
}

TEST_CASE("profile validation") {
  CHECK(validate_profile(Profile::power(0.5, 1)).pass);
  CHECK(validate_profile(Profile::bump(0.3, 6)).pass);
  CHECK(validate_profile(Profile::hourglass(0.4, 4)).pass);

  // rejoining 1 before r = 6 violates the strict interior condition
  const auto early = validate_profile(Profile::bump(0.3, 4));
  CHECK(!early.pass);

  std::vector<double> ones(16, 1.0);
  const auto flat = validate_profile(Profile::tabulated(0, 0.5, ones, 0, false));
  CHECK(!flat.pass);
  bool strict_failed = false;
  for (const auto& c : flat.checks)
    if (c.name == "strict_below_one_inside") strict_failed = !c.pass;
  CHECK(strict_failed);

  // tabulated samples of a valid closed form pass with a line-searched rate
  const Profile src = Profile::power(0.4, 1.5);
  std::vector<double> tab;
  for (int i = 0; i < 240; ++i) tab.push_back(src.value(i * 0.05));
  const auto rep = validate_profile(Profile::tabulated(0, 0.05, tab, 0, false), 11.5);
  CHECK(rep.pass);
  CHECK(rep.delta0 > 0);
  CHECK(rep.delta0 <= 1.5 + 0.1);

  // fitted decay constants are finite and positive for a decaying profile
  const auto pr = validate_profile(Profile::power(0.5, 1));
  for (int k = 0; k <= 3; ++k) {
    CHECK(pr.fitted_C[k] > 0);
    CHECK(std::isfinite(pr.fitted_C[k]));
  }
}

TEST_CASE("repulsive potentials") {
  const auto zero = RepulsivePotential::zero();
  CHECK(zero.value(2) == 0);
  CHECK(validate_potential(zero).pass);

  const auto pw = RepulsivePotential::power(2, 1.5);
  CHECK(pw.value(0) == doctest::Approx(2));
  CHECK(pw.value(1) == doctest::Approx(2 * std::pow(2.0, -1.5)).epsilon(1e-14));
  auto g = [&](double r) { return pw.value(r); };
  for (double r : {0.3, 1.1, 4.2})
    CHECK(pw.slope(r) == doctest::Approx(fd_deriv(g, r, 1)).epsilon(1e-6));
  CHECK(validate_potential(pw).pass);

  const auto bp = RepulsivePotential::bump(3, 6);
  CHECK(bp.value(6) == 0);
  CHECK(bp.value(0) == doctest::Approx(3));
  CHECK(validate_potential(bp).pass);

  // an increasing tail violates the repulsivity inequality
  std::vector<double> rising;
  for (int i = 0; i < 40; ++i) rising.push_back(1 + 0.01 * i);
  CHECK(!validate_potential(RepulsivePotential::tabulated(0, 0.25, rising, 1)).pass);
}

TEST_CASE("transverse spectra") {
  const auto circ = TransverseSpectrum::circle(2 * pi);
  const auto s5 = circ.sigmas(5);
  REQUIRE(s5.size() == 5);
  CHECK(s5[0] == 0);
  CHECK(s5[1] == doctest::Approx(1));
  CHECK(s5[2] == doctest::Approx(1));
  CHECK(s5[3] == doctest::Approx(2));
  CHECK(s5[4] == doctest::Approx(2));
  CHECK(circ.level_mult(0) == 1);
  CHECK(circ.level_mult(1) == 2);

  const auto half = TransverseSpectrum::circle(pi);  // halved circumference doubles sigma
  CHECK(half.sigmas(3)[1] == doctest::Approx(2));

  const auto sph = TransverseSpectrum::sphere(2);  // cross-section S^2: l(l+1), mult 2l+1
  CHECK(sph.level_sigma2(0) == 0);
  CHECK(sph.level_sigma2(1) == doctest::Approx(2));
  CHECK(sph.level_sigma2(2) == doctest::Approx(6));
  CHECK(sph.level_mult(1) == 3);
  CHECK(sph.level_mult(2) == 5);
  const auto s4 = sph.sigmas(4);
  CHECK(s4[1] == doctest::Approx(std::sqrt(2.0)));
  CHECK(s4[3] == doctest::Approx(std::sqrt(2.0)));

  const auto lst = TransverseSpectrum::list({0, 3, 7}, {1, 2, 1});
  CHECK(lst.finite());
  CHECK(lst.level_sigma2(2) == 7);
  CHECK(lst.level_mult(1) == 2);
  const auto up = lst.sigmas_up_to(5);
  REQUIRE(up.size() == 3);
  CHECK(up[2] == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("effective potential matches the assembled closed form") {
  ManifoldConfig cfg;
  cfg.profile = Profile::power(0.5, 2);
  cfg.VL = RepulsivePotential::power(1, 1);
  cfg.d = 2;

  const double h = 0.1, sigma = 10;
  auto fval = [&](double r) { return cfg.profile.value(r); };
  for (double r : {0.0, 0.7, 2.3, 6.5}) {
    const double f = fval(r);
    const double fpp = fd_deriv(fval, r < 1e-3 ? 1e-3 : r, 2, 1e-4);
    const double oracle = cfg.VL.value(r) + h * h * fpp / f +
                          h * h * sigma * sigma * (std::pow(f, -cfg.alpha()) - 1);
    CHECK(effective_potential(cfg, h, sigma, r) ==
          doctest::Approx(oracle).epsilon(5e-4).scale(1 + std::abs(oracle)));
  }

  const std::vector<double> rs = {0.5, 1.5, 3.0};
  const auto vec = effective_potential(cfg, h, sigma, rs);
  REQUIRE(vec.size() == rs.size());
  for (size_t i = 0; i < rs.size(); ++i)
    CHECK(vec[i] == doctest::Approx(effective_potential(cfg, h, sigma, rs[i])).epsilon(1e-14));

  // flat-past-6 geometry: the mode potential vanishes identically on the tail
  ManifoldConfig flat;
  flat.profile = Profile::bump(0.3, 6);
  for (double r : {6.0, 7.5, 20.0}) CHECK(effective_potential(flat, 0.2, 4, r) == 0.0);

  CHECK(energy_level(1.0, 0.1, 3) == doctest::Approx(1 - 0.09).epsilon(1e-15));
}

TEST_CASE("config potential composition and wells") {
  ManifoldConfig cfg;
  cfg.profile = Profile::power(0.5, 1);
  cfg.VL = RepulsivePotential::power(2, 1);
  cfg.VS.amp = 0.7;
  Well w;
  w.depth = 1.2;
  w.lo = -3;
  w.hi = 3;
  w.ramp = 1;
  cfg.wells.push_back(w);

  const double h = 0.3;
  for (double r : {0.2, 1.0, 2.5, 4.0}) {
    const double expect =
        cfg.VL.value(r) + h * cfg.VS.value(r) + h * h * cfg.well_value(r);
    CHECK(cfg.potential(r, h) == doctest::Approx(expect).epsilon(1e-15));
  }
  // short-range piece lives inside [0,5]
  CHECK(cfg.VS.value(5.2) == 0);
  CHECK(cfg.VS.value(0.0) == 0);
  // well values stay within [-depth, 0]
  CHECK(w.value(0) == doctest::Approx(-1.2));
  CHECK(w.value(10) == 0);
  CHECK(w.value(-10) == 0);
}

TEST_CASE("threshold certificate") {
  ManifoldConfig cfg;
  cfg.profile = Profile::bump(0.3, 6);
  cfg.spectrum = TransverseSpectrum::circle(2 * pi);
  cfg.E0 = 1;
  cfg.cJ = 0.5;

  for (double h : {0.07, 0.11, 0.23}) {
    const double estar = estar_threshold(cfg, h);
    CHECK(estar > 0);
    CHECK(estar <= cfg.cJ);
    const double f5a = std::pow(cfg.profile.value(5), -cfg.alpha());
    for (double s : cfg.spectrum.sigmas_up_to((cfg.E0 + 1) / (h * h))) {
      const double Ej = cfg.E0 - h * h * s * s;
      if (Ej <= estar) CHECK(h * h * s * s * f5a >= cfg.E0 * (1 - 1e-9));
    }
  }

  // profile equal to 1 at r = 5 leaves no admissible threshold
  ManifoldConfig bad = cfg;
  bad.profile = Profile::bump(0.3, 4);
  CHECK_THROWS_AS(estar_threshold(bad, 0.1), geometry_error);
}
