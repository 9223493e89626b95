#pragma once

#include "cylscat/modes.hpp"

namespace cylscat::continuation {

// point of the multi-sheeted continuation surface at fixed h: a base spectral value
// plus the finite set of transverse levels on which the square root takes the
// non-physical branch; boundary values E +/- i0 carry a side tag
struct RiemannPoint {
  cplx z;
  std::vector<int> flipped;  // level indices, sorted
  int side = 0;              // +1 / -1 when z is a boundary value on the real axis
  double h = 1;
  bool has_flip(int level) const;
};

RiemannPoint physical(cplx z, double h);
RiemannPoint boundary(double E, int side, double h);

// sqrt(z - h^2 sigma_level^2) on the branch the point dictates: nonnegative imaginary
// part off the flip set, negated on it; side*sqrt past an open threshold on the axis
cplx rho(const RiemannPoint& p, const geometry::TransverseSpectrum& sp, int level);

struct DhResult {
  double value = 0;
  int argmax_level = -1;
  int levels_used = 0;
  double tail_bound = 0;
};
// sup over levels of |rho_level(p) - rho_level(q)|; the enumeration stops once the
// remaining levels are certified below the running sup
DhResult dh_metric(const RiemannPoint& p, const RiemannPoint& q,
                   const geometry::TransverseSpectrum& sp);

// follows one level's square root continuously along a polyline, starting on the
// physical branch; returns the final branch sign (+1 physical, -1 flipped)
int monodromy_branch(const geometry::TransverseSpectrum& sp, double h, int level,
                     const std::vector<cplx>& path);

struct ProjdiffReport {
  std::vector<double> hs;
  std::vector<double> K;          // fitted constant of the h^{1/2-delta} term, per h
  std::vector<bool> weyl_ok;      // spectral gap precondition at this h
  std::vector<double> rho_j0_sq;  // |rho_{j0}(E +/- i0)|^2 at the selected level
  double delta = 0.1, deltap = 0.15;
  double spread = 0;
  bool precondition_ok = false;
  bool pass = false;  // K spread <= 2 over the h sweep where the precondition holds
};
// |p(z) - E| <= d(z, E +/- i0) [ d(z, E +/- i0) + K h^{1/2-delta} ] on sampled sheet
// points near the boundary
ProjdiffReport projdiff_check(const geometry::TransverseSpectrum& sp, double E,
                              const std::vector<double>& hs, double delta = 0.1,
                              double deltap = 0.15, int samples = 64,
                              std::uint64_t seed = 1234);

// free half-line outgoing kernel (i/2h xi)(e^{i xi |r-r'|/h} - e^{i xi (r+r')/h});
// |xi| below the series cutoff is evaluated by its expansion and flagged
cplx model_kernel(cplx xi, double r, double rp, double h, bool* threshold = nullptr);

// cutoff kernel-difference operator norm with derivative orders a1, a2 on the two
// sides; the delta-function parts cancel in the difference and are omitted
double kernel_difference_norm(const halfline::WeightFn& chi, double support, cplx xi, cplx xip,
                              double h, int a1, int a2, int n_hint = 0);

struct KernelPairRecord {
  double h = 0;
  cplx xi, xip;
  int a1 = 0, a2 = 0;
  double value = 0, rhs_unit = 0, C = 0;  // C = value / rhs_unit
};
struct KernelBoundReport {
  std::vector<KernelPairRecord> strip0, strip12, sector;
  double C_strip0 = 0, C_strip12 = 0, C_sector = 0;          // per-class max over h of per-h max
  double spread_strip0 = 0, spread_strip12 = 0, spread_sector = 0;
  bool pass = false;  // all three spreads <= 2
};
// sampled Lipschitz ratios in the strip Im xi > -Nh (orders 0 and 1..2) and in the
// sector away from the positive axis, fitted per h
KernelBoundReport check_kernel_bounds(const halfline::WeightFn& chi, double support,
                                      const std::vector<double>& hs, int pairs_per_h = 24,
                                      double N = 1, std::uint64_t seed = 42);

struct ShootOptions {
  double r_match = 6;      // potential must vanish from here on
  double steps_per_wave = 24;
  int min_steps = 4000;
  int max_edge_samples = 1 << 14;
  int max_subdivisions = 64;
  double winding_tol = 0.1;
  double newton_tol = 1e-11;
  int newton_iters = 60;
};

struct ResonanceRecord {
  int level = 0;
  cplx rho;
  cplx z;                // rho^2 + h^2 sigma_level^2
  RiemannPoint location;  // base z with the level flipped when Im rho < 0
  double wval = 0;       // |matching function| at convergence, relative to its local scale
  double residual = 0;   // last Newton step size relative to the local rho scale
  // distance to E0 +/- i0, minimized over the branch choices of the other levels
  // (the pole exists on every sheet containing the flipped level)
  double dh_plus = 0, dh_minus = 0;
  bool physical_side = false;  // Im rho > 0: an eigenvalue, not a resonance
};

struct ResonanceSearch {
  std::vector<ResonanceRecord> records;
  int winding_total = 0;
  int cells = 0;
  bool count_stable = false;
};

// zeros of the outgoing-matching function u'(r_match) - (i rho / h) u(r_match) inside
// the rho rectangle, by boundary winding count and Newton polish; V must vanish past
// r_match
ResonanceSearch find_matching_zeros(const std::function<double(double)>& V, double h, cplx rho_lo,
                                    cplx rho_hi, const ShootOptions& so = {});

// same search for one transverse level of a config obeying the flat-past-6 convention
ResonanceSearch mode_resonances(const geometry::ManifoldConfig& cfg, double h, int level,
                                cplx rho_lo, cplx rho_hi, const ShootOptions& so = {});

// dense cutoff kernel norm of one level's resolvent built from the regular and
// outgoing solutions at matching variable rho (any branch)
double jost_kernel_norm(const std::function<double(double)>& V, double h, cplx rho,
                        const halfline::WeightFn& chi, double support, int n_hint = 0);

struct VodevOptions {
  double rmax = 40;
  double dr = 0;  // 0 picks min(0.01, h / 50) so the grid resolves the h-wavelength
  int levels_cap = 8;
  double tol = 1e-4;
};

struct VodevModeRecord {
  int level = 0;
  double lhs_norm = 0;
  double rel = 0;
  double rel_coarse = 0;
};

struct VodevReport {
  std::vector<VodevModeRecord> per_mode;
  double worst = 0;
  double worst_coarse = 0;  // same assembly at doubled spacing
  double order_ratio = 0;
  bool pass = false;
};
// two-term resolvent identity relating the cutoff resolvent at z and z0 through the
// free model: both sides assembled as matrices per level, discrepancy in Frobenius
// norm relative to the left side; z and z0 must lie off [0, infinity)
VodevReport verify_vodev_identity(const geometry::ManifoldConfig& cfg, double h, cplx z, cplx z0,
                                  const halfline::WeightFn& chi, const halfline::WeightFn& chi1,
                                  const VodevOptions& opts = {});

struct RegionOptions {
  double eps = 1e-8;  // boundary-value proxy; Richardson-extrapolated in eps
  double Cprime_floor = 1e-3;
  halfline::GridPolicy grid;
  NormOptions norm;
  ShootOptions shoot;
};

struct RegionRecord {
  double h = 0, M = 0, mu = 0;
  int resonances = 0;
  double nearest_dh = 0;  // min over found resonances of min(dh to E0 +/- i0)
  double inregion_max = 0;      // max sampled cutoff-norm inside the region
  double inregion_max_Cmu = 0;  // that max times mu
  double inregion_fit_Cmu = 0;  // mu times the max over the depth-matched samples
};

struct RegionReport {
  std::vector<RegionRecord> records;
  double C_fit = 0;
  double Cprime = 0;
  double Chat = 0;
  double Chat_spread = 0;
  bool violation = false;
  bool pass = false;
};
// mu(h) = min(h^2, C/M(h)) from the measured boundary norms; verifies that no located
// resonance sits within Cprime mu(h) of E0 +/- i0 and samples the resolvent inside
// the region, including past the cut via the flipped-branch kernel
RegionReport resonance_free_region(const geometry::ManifoldConfig& cfg,
                                   const std::vector<double>& hs, const halfline::WeightFn& chi,
                                   const RegionOptions& opts = {});

}  // namespace cylscat::continuation
