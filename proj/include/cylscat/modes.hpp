#pragma once

#include "cylscat/halfline.hpp"

#include <memory>

namespace cylscat::modes {

// one transverse level: sigma repeated mult times starting at flattened index j
struct ModeEntry {
  int j = 0;
  int mult = 1;
  double sigma = 0;
  double Ej = 0;
  bool below_estar = false;
  std::function<cplx(double)> potential;  // V(r,h) + h^2 f''/f + h^2 sigma^2 (f^{-a} - 1)
};

// transverse decomposition of the operator at fixed h, valid for Re z up to the window:
// levels past the last entry satisfy h^2 sigma^2 > Re z + sup|V + h^2 f''/f| + 1, so
// their resolvent norm is at most tail_bound
struct ModeFamily {
  geometry::ManifoldConfig cfg;
  double h = 1;
  double estar = 0;  // -inf when no admissible threshold exists (nothing blocked)
  double zwin_re_max = 0;
  double tail_sup_v = 0;
  int J_max = -1;             // last retained flattened index
  int levels = 0;             // retained distinct levels
  double tail_sigma2 = 0;     // h^2 sigma^2 of the first excluded level
  double tail_bound = 0;
  std::vector<ModeEntry> entries;
  bool full_line() const { return cfg.domain == geometry::ManifoldConfig::Domain::full_cylinder; }
};

ModeFamily assemble_modes(const geometry::ManifoldConfig& cfg, double h, double zwin_re_max);

// weights are functions of the radial coordinate only, which is what keeps the
// transverse decomposition exact; y-dependent cutoffs are unrepresentable by design
struct WeightQuery {
  cplx z;
  halfline::WeightFn wl = halfline::w_one();
  halfline::WeightFn wr = halfline::w_one();
  std::function<double(double)> absorb;  // optional barrier W(r) >= 0, enters as -iW
  halfline::GridPolicy grid;
  NormOptions norm;
};

struct ModeNormRecord {
  int j = 0;
  double sigma = 0, Ej = 0;
  double value = 0;
  bool singular = false;
};

struct FullNorm {
  double value = 0;
  int argmax_j = -1;
  double tail_term = 0;
  bool any_singular = false;
  std::vector<ModeNormRecord> per_mode;
};

// max over retained levels of the per-mode weighted resolvent norm, tail folded in;
// mode_left / mode_right multiply the respective weight by a per-mode factor (first
// argument is the flattened index), realizing projections composed with ramps
FullNorm full_weighted_norm(const ModeFamily& fam, const WeightQuery& q,
                            const std::function<double(int, double)>& mode_left = {},
                            const std::function<double(int, double)>& mode_right = {});

struct TailCheckRecord {
  double sigma = 0;
  double computed = 0;
  double bound = 0;
};
// unweighted resolvent norms of the first `count` excluded levels against their
// certificate values; computed must come out below bound
std::vector<TailCheckRecord> tail_spot_check(const ModeFamily& fam, const WeightQuery& q,
                                             int count);

struct ScanRecord {
  double x = 0;
  double value = 0;
  bool pole = false;
};

struct ScanReport {
  std::vector<ScanRecord> records;
  LineFit loglog;
  double median = 0, min_upper_half = 0;
  int poles = 0;
  bool pass_flat = false;   // |log-log slope| <= 0.1
  bool pass_floor = false;  // min over the upper half of the grid >= median / 2
  bool pass = false;
};
// cutoff resolvent norms at h = 1 on a log-spaced energy grid x + i eps
ScanReport scan_uniform_bound(const geometry::ManifoldConfig& cfg, double x_lo, double x_hi,
                              int nx, double eps, const halfline::WeightFn& chi,
                              const halfline::GridPolicy& gp = {}, const NormOptions& no = {});

// 0 up to |r| = 5, 1 past |r| = 6
std::function<double(double)> default_barrier();

struct AhRecord {
  double h = 0, a = 0;
  int argmax_j = -1;
  bool finite = true;
};

struct AhReport {
  std::vector<AhRecord> records;
  double spread = 0;  // max a / min a
  LineFit log_fit;    // a against log(1/h)
  bool pass = false;  // every a finite
};
// a(h) = h * norm of the resolvent of the operator with the absorbing barrier,
// taken at the trapped energy
AhReport measure_a_of_h(const geometry::ManifoldConfig& cfg, const std::vector<double>& hs,
                        const std::function<double(double)>& W = {},
                        const halfline::GridPolicy& gp = {}, const NormOptions& no = {});

struct TcontReport {
  std::vector<double> hs, norms, a, targets, ratios;  // target = (a(h) + 1/h) / h
  LineFit loglog;
  double ratio_spread = 0;
  double s1 = 0, s2 = 0;
  bool pass = false;  // ratio spread <= 2
};
TcontReport check_tcont_scaling(const geometry::ManifoldConfig& cfg, const std::vector<double>& hs,
                                double s1, double s2, double eps = 1e-6,
                                const halfline::GridPolicy& gp = {}, const NormOptions& no = {});

struct TawayReport {
  std::vector<double> hs, cut, uncut, a;
  LineFit fit_cut, fit_uncut;
  double gap = 0;  // slope(cut) - slope(uncut), one extra power of h expected
  double cut_ratio_spread = 0;
  double adjoint_reldiff = 0;
  double s = 0, s_uncut = 0, cJ = 0;
  bool pass_gap = false, pass_adjoint = false;
  bool pass = false;
};
// cutoff suppressing the near-threshold levels and the untrapped region, against the
// plain two-weight norm; the cutoff buys one power of h on nontrapping geometries
TawayReport check_taway_scaling(const geometry::ManifoldConfig& cfg,
                                const std::vector<double>& hs, double s, double eps = 1e-6,
                                const halfline::GridPolicy& gp = {}, const NormOptions& no = {});

struct CrossCheck {
  double norm_modes = 0, norm_2d = 0, rel_diff = 0;
};
// exactness of the decomposition at matched resolution: a dense tensor-grid operator
// over (r, theta) with an n_theta-point periodic circle, against per-mode solves that
// use the discrete circle eigenvalues (2 - 2 cos(2 pi k / n_theta)) / dtheta^2
CrossCheck direct_sum_crosscheck(const geometry::ManifoldConfig& cfg, double h, cplx z,
                                 double s_left, double s_right, int n_r, double rmax,
                                 int n_theta = 5, const NormOptions& no = {});

}  // namespace cylscat::modes
