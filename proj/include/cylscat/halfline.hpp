#pragma once

#include "cylscat/geometry.hpp"
#include "cylscat/linalg.hpp"

namespace cylscat::halfline {

enum class Boundary { dirichlet, robin_outgoing, absorbing };

// finite-difference Schrodinger operator -h^2 d^2/dr^2 + V on [0, rmax] or [-rmax, rmax],
// Dirichlet at r = 0 for the half-line case; the truncation end carries the chosen bc
struct ModeOperator {
  double h = 1;
  bool full_line = false;
  double rmax = 60;
  int n = 0;
  double dr = 0;
  Boundary bc = Boundary::dirichlet;
  double cap_strength = 1;
  std::vector<double> nodes;
  std::vector<cplx> V;
  std::function<cplx(double)> potential;  // retained so the domain can be rebuilt larger
  double robin_tail_dev = 0;              // max |V - V(end)| over the outer tenth

  // matrix of (operator - z); outgoing-Robin data is derived from z and the end value of V
  Tridiag assemble(cplx z) const;
  cplx robin_xi(cplx z, bool left_end) const;
};

ModeOperator discretize(double h, double rmax, int n, std::function<cplx(double)> V, Boundary bc,
                        bool full_line = false, double cap_strength = 1);

struct Resolved {
  std::vector<cplx> u;
  double residual = 0;
  bool singular = false;
};
// solves (op - z) u = rhs with one refinement pass; singular systems are flagged, not thrown
Resolved apply_resolvent(const ModeOperator& op, cplx z, const std::vector<cplx>& rhs);

using WeightFn = std::function<double(double)>;
WeightFn w_one();
WeightFn w_power(double s);                        // (1 + max(r,0))^{-s}
WeightFn w_power_abs(double s);                    // (1 + |r|)^{-s}, for two-ended domains
WeightFn w_window(double a, double b, double w);   // plateau in [a, b]
WeightFn w_cc(double a, double b);                 // smooth compactly supported bump on (a, b)
WeightFn w_vd(const geometry::RepulsivePotential& V, double p, double s);  // V^p (1+r)^{-s}
// sqrt(V_L + f^{-4/(d-1)} - 1): vanishes exactly where the end is untrapped
WeightFn w_chi_geom(const geometry::ManifoldConfig& cfg);
std::vector<double> sample(const WeightFn& w, const std::vector<double>& nodes);

struct WeightedNorm {
  double value = 0;
  double trunc_estimate = -1;  // relative shift under domain doubling; -1 = not measured
  bool converged = false;
  int iterations = 0;
  bool singular = false;
};
WeightedNorm weighted_norm(const ModeOperator& op, cplx z, const WeightFn& wl, const WeightFn& wr,
                           const NormOptions& opts = {}, bool with_truncation = false);

// grid selection: resolves the local wavenumber, caps effort on deep barriers where
// the weighted mass is negligible anyway, and widens the domain for long wavelengths
struct GridPolicy {
  double rmax_lo = 60;
  double rmax_hi = 240;
  double dr_max = 0.01;
  double resolve = 0.1;        // target k * dr
  double barrier_cap = 25;     // potential is resolved only up to barrier_cap * (1 + |z|)
  int n_cap = 60000;
  double wavelengths = 10;
  Boundary bc = Boundary::robin_outgoing;
  void choose(cplx z, double h, double V0, double& rmax_out, int& n_out) const;
};

ModeOperator make_operator(const GridPolicy& gp, double h, cplx z,
                           const std::function<cplx(double)>& V, double V0, bool full_line = false);

struct BoundRecord {
  cplx z;
  double value = 0, rhs = 0, ratio = 0;
  double trunc = -1;
  bool converged = false;
};

struct BoundReport {
  std::string bound;
  double delta = 0, deltaV = 0, theta = 0, tol = 0;
  std::vector<BoundRecord> records;
  double worst_ratio = 0;
  cplx worst_z;
  bool pass = false;
};

// |(1+r)^{-(1+d)/2} (P_D - z)^{-1} (1+r)^{-(1+d)/2}| <= (1+sqrt2)/sqrt|z| (1/d + 1/dV)
BoundReport check_uniform_big(const geometry::RepulsivePotential& VD, const std::vector<cplx>& zs,
                              double delta, double tol = 0.02, const GridPolicy& gp = {},
                              const NormOptions& no = {}, int trunc_stride = 0);
// |z|-free variant with extra weight decay split by theta
BoundReport check_uniform_small(const geometry::RepulsivePotential& VD, const std::vector<cplx>& zs,
                                double delta, double theta, double tol = 0.02,
                                const GridPolicy& gp = {}, const NormOptions& no = {},
                                int trunc_stride = 0);
// potential-weighted variant: V^{t/2}(1+r)^{-(1+(1-t)d)/2} ... V^{(1-t)/2}(1+r)^{-(1+td)/2}
BoundReport check_uniform_product(const geometry::RepulsivePotential& VD,
                                  const std::vector<cplx>& zs, double delta, double theta,
                                  double tol = 0.02, const GridPolicy& gp = {},
                                  const NormOptions& no = {}, int trunc_stride = 0);

struct SemiclassicalLegSpec {
  std::string name;
  geometry::RepulsivePotential VD;
  std::function<cplx(double)> zeta;  // spectral point as a function of h
  double s_left = 1, s_right = 1;
  bool product_weight = false;  // left weight V^{1/2}(1+r)^{-1/2}
  double expected = -1;         // model exponent of h
};

struct ScalingLeg {
  std::string name;
  std::vector<double> hs, values, cs;
  LineFit fit;
  double expected = 0;
  double c_spread = 0;
  bool pass = false;
};

struct SemiclassicalReport {
  std::vector<ScalingLeg> legs;
  double tol_exp = 0.15;
  bool pass = false;
};

SemiclassicalReport check_semiclassical(const std::vector<SemiclassicalLegSpec>& legs,
                                        const std::vector<double>& hs, double tol_exp = 0.15,
                                        const GridPolicy& gp = {}, const NormOptions& no = {});
// the three standard legs: fixed-energy decay -1, threshold-scaled decay -2 on the
// free operator, and the potential-weighted decay -1
std::vector<SemiclassicalLegSpec> default_semiclassical_legs(
    const geometry::RepulsivePotential& VD, cplx zeta_fixed = cplx(2, 1e-6),
    cplx zeta_scaled = cplx(2, 2e-6));

struct AgmonReport {
  std::vector<double> hs, sigmas, disjoint, overlap;
  LineFit decay;  // log(disjoint) against 1/h
  double overlap_spread = 0;
  bool pass_disjoint = false, pass_overlap = false;
  bool pass = false;
};
// tunneling decay through the classically forbidden head of a blocked mode
AgmonReport agmon_probe(const geometry::ManifoldConfig& cfg,
                        const std::vector<std::pair<double, double>>& h_sigma, double Rsplit = 3,
                        double s = 1.05, double eps = 1e-6, const GridPolicy& gp = {},
                        const NormOptions& no = {});

// smooth frequency window: multiplies the DFT by a mollified indicator of [lo, hi] in h*xi
class BandProjector {
 public:
  BandProjector(int n, double dr, double h, double lo, double hi, double mollify = -1);
  ~BandProjector();
  BandProjector(const BandProjector&) = delete;
  BandProjector& operator=(const BandProjector&) = delete;
  void apply(const cplx* x, cplx* y) const;  // self-adjoint
  int size() const { return n_; }

 private:
  int n_ = 0, N_ = 0;
  std::vector<double> mask_;
  void* plan_fwd_ = nullptr;
  void* plan_bwd_ = nullptr;
  cplx* buf_ = nullptr;
};

struct MicrolocalReport {
  std::vector<double> hs, outgoing, incoming;
  LineFit fit_out, fit_in;
  double min_out_slope = 4, floor_in_slope = -1.5;
  bool pass = false;
};
// contrast between forward-moving and backward-moving frequency content crossing r = 3
MicrolocalReport microlocal_probe(const geometry::ManifoldConfig& cfg,
                                  const std::vector<std::pair<double, double>>& h_sigma,
                                  double eps = 1e-6, double min_out_slope = 4,
                                  double floor_in_slope = -1.5, const GridPolicy& gp = {},
                                  const NormOptions& no = {});

struct ModeScalingLeg {
  std::string name;
  std::vector<double> hs, values;
  LineFit fit;
  double expected = 0;
  bool pass = false;
};

struct ModeEstimatesReport {
  std::vector<ModeScalingLeg> legs;
  bool pass = false;
};
// worst-mode resolvent norms per mode class: blocked modes with two power weights (h^-2),
// blocked modes with the geometric cutoff weight (h^-1), running modes on the full-line
// model (h^-1)
ModeEstimatesReport check_mode_estimates(const geometry::ManifoldConfig& cfg,
                                         const std::vector<double>& hs, double s1 = 1.05,
                                         double s2 = 1.05, double s = 1.05, double eps = 1e-6,
                                         double tol_exp = 0.3, int max_modes_per_class = 10,
                                         const GridPolicy& gp = {}, const NormOptions& no = {});

}  // namespace cylscat::halfline
