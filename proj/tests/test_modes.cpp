#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cylscat/modes.hpp"

#include <cmath>

using namespace cylscat;
using namespace cylscat::modes;

namespace {

geometry::ManifoldConfig reference_config() {
  geometry::ManifoldConfig cfg;
  cfg.profile = geometry::Profile::bump(0.3, 6);
  cfg.spectrum = geometry::TransverseSpectrum::circle(2 * pi);
  cfg.E0 = 1;
  return cfg;
}

}  // namespace

TEST_CASE("mode family bookkeeping") {
  const auto cfg = reference_config();
  const double h = 0.2;
  const ModeFamily fam = assemble_modes(cfg, h, cfg.E0 + 1);

  REQUIRE(!fam.entries.empty());
  CHECK(fam.h == h);
  CHECK(fam.estar == doctest::Approx(geometry::estar_threshold(cfg, h)).epsilon(1e-14));

  int j = 0;
  double prev_sigma = -1;
  for (const auto& e : fam.entries) {
    CHECK(e.j == j);
    j += e.mult;
    CHECK(e.sigma > prev_sigma);
    prev_sigma = e.sigma;
    CHECK(e.mult == (e.sigma == 0 ? 1 : 2));  // circle multiplicities
    CHECK(e.Ej == doctest::Approx(geometry::energy_level(cfg.E0, h, e.sigma)).epsilon(1e-14));
    CHECK(e.below_estar == (e.Ej <= fam.estar));
    for (double r : {0.5, 3.0, 7.0})
      CHECK(e.potential(r).real() ==
            doctest::Approx(geometry::effective_potential(cfg, h, e.sigma, r)).epsilon(1e-13));
  }
  CHECK(fam.J_max == j - 1);
  CHECK(fam.levels == (int)fam.entries.size());

  // every excluded level clears the retention window by at least one unit
  CHECK(fam.tail_sigma2 >= fam.zwin_re_max + fam.tail_sup_v + 1 - 1e-9);
  CHECK(fam.tail_bound > 0);
  CHECK(fam.tail_bound <= 1 + 1e-12);
}

TEST_CASE("no admissible threshold degenerates to nothing blocked") {
  auto cfg = reference_config();
  cfg.profile = geometry::Profile::bump(0.3, 4);  // flat on [4, 6]: f(5) = 1
  CHECK_THROWS_AS(geometry::estar_threshold(cfg, 0.2), geometry_error);
  const ModeFamily fam = assemble_modes(cfg, 0.2, cfg.E0 + 1);
  CHECK(std::isinf(fam.estar));
  CHECK(fam.estar < 0);
  for (const auto& e : fam.entries) CHECK(!e.below_estar);
}

TEST_CASE("excluded levels respect their certificate") {
  const auto cfg = reference_config();
  const ModeFamily fam = assemble_modes(cfg, 0.3, cfg.E0 + 1);
  WeightQuery q;
  q.z = cplx(0.9, 1e-3);
  const auto recs = tail_spot_check(fam, q, 3);
  REQUIRE(recs.size() == 3);
  for (const auto& rec : recs) {
    CHECK(rec.computed > 0);
    CHECK(rec.computed <= rec.bound);
  }
}

TEST_CASE("full norm is the worst mode with the tail folded in") {
  const auto cfg = reference_config();
  const ModeFamily fam = assemble_modes(cfg, 0.25, cfg.E0 + 1);
  WeightQuery q;
  q.z = cplx(0.8, 1e-3);
  q.wl = halfline::w_power(1.05);
  q.wr = halfline::w_power(1.05);
  const FullNorm fn = full_weighted_norm(fam, q);

  REQUIRE(fn.per_mode.size() == fam.entries.size());
  CHECK(!fn.any_singular);
  double worst = fn.tail_term;
  int worst_j = -1;
  for (const auto& rec : fn.per_mode) {
    CHECK(rec.value > 0);
    if (rec.value > worst) {
      worst = rec.value;
      worst_j = rec.j;
    }
  }
  CHECK(fn.value == doctest::Approx(worst).epsilon(1e-12));
  CHECK(fn.argmax_j == worst_j);

  // level-selective reweighting: keeping only the worst mode reproduces its value
  const int keep = fn.argmax_j;
  const auto only = [keep](int jj, double) { return jj == keep ? 1.0 : 0.0; };
  const FullNorm sel = full_weighted_norm(fam, q, only, only);
  double kept = fn.tail_term;
  for (const auto& rec : fn.per_mode)
    if (rec.j == keep) kept = std::max(kept, rec.value);
  CHECK(sel.value == doctest::Approx(kept).epsilon(1e-10));
}

TEST_CASE("transverse decomposition matches a dense two-dimensional solve") {
  const auto cfg = reference_config();
  const CrossCheck cc = direct_sum_crosscheck(cfg, 0.5, cplx(0.7, 0.4), 1.05, 1.05, 400, 20, 5);
  CHECK(cc.norm_modes > 0);
  CHECK(cc.norm_2d > 0);
  CHECK(cc.rel_diff <= 1e-6);
}

TEST_CASE("uniform scan on a widening end") {
  geometry::ManifoldConfig cfg;
  cfg.profile = geometry::Profile::power(0.5, 1);
  cfg.spectrum = geometry::TransverseSpectrum::circle(2 * pi);
  cfg.E0 = 1;
  const auto chi = [](double r) { return ramp_down(r, 5, 6); };
  const ScanReport rep = scan_uniform_bound(cfg, 0.5, 8, 10, 1e-6, chi);
  REQUIRE(rep.records.size() == 10);
  CHECK(rep.poles == 0);
  CHECK(std::abs(rep.loglog.slope) <= 0.1);
  CHECK(rep.min_upper_half >= rep.median / 2);
  CHECK(rep.pass);
}

TEST_CASE("absorbing-barrier amplitude stays finite") {
  const auto cfg = reference_config();
  const AhReport rep = measure_a_of_h(cfg, {0.1, 0.141, 0.2});
  REQUIRE(rep.records.size() == 3);
  for (const auto& rec : rep.records) {
    CHECK(rec.finite);
    CHECK(rec.a > 0);
  }
  CHECK(rep.pass);
  CHECK(std::isfinite(rep.spread));
}
