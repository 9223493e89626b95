#pragma once

#include "cylscat/modes.hpp"

namespace cylscat::embedded {

// full-line hourglass geometry carrying a neck well: the profile equals 1 off (-R, R),
// has a single nondegenerate interior minimum, and the well acts on transverse level J
struct HourglassSpec {
  geometry::Profile f;
  double R = 4;
  int J = 8;
  double sigma2 = 64;  // transverse eigenvalue of level J
  int mult = 2;
  int d = 2;
  geometry::TransverseSpectrum spectrum = geometry::TransverseSpectrum::circle(2 * pi);
  std::vector<geometry::Well> wells;  // their sum is the neck potential, support in (-R, R)
  double alpha() const { return 4.0 / (d - 1); }
  double well(double r) const;
};

// neck depth c chosen (when passed as 0) so that the warp excess integrates to <= 1/4;
// the single well is -sigma2/2 on the middle half of the neck
HourglassSpec recipe_spec(const geometry::TransverseSpectrum& sp, int J, double R = 4, int d = 2,
                          double c = 0);
// k separated wells of depth sigma2/2 inside (-R, R)
HourglassSpec multiwell_spec(const geometry::TransverseSpectrum& sp, int J, int k, double R = 6,
                             int d = 2, double c = 0);

struct SpecReport {
  bool pass = false;
  std::vector<geometry::CheckRecord> checks;
};
// profile flat off the neck, single nondegenerate minimum, wells supported in the neck
// with values in [-sigma2/2, 0]
SpecReport validate_spec(const HourglassSpec& spec);

// f''/f + sigma2 (f^{-4/(d-1)} - 1) + well; identically zero off (-R, R)
double VJ_value(const HourglassSpec& spec, double r);
std::vector<double> build_VJ(const HourglassSpec& spec, const std::vector<double>& r);

struct CriterionReport {
  double integral = 0;
  double quad_err = 0;
  double min_VJ = 0;
  double min_at = 0;
  double sigma2 = 0;
  bool pass_integral = false;  // integral <= 0
  bool pass_floor = false;     // min > -sigma2
  bool pass = false;
};
CriterionReport embedded_criterion(const HourglassSpec& spec);

struct BoundState {
  double lambda = 0;
  std::vector<double> psi;  // l2-normalized on the grid
  double residual = 0;      // relative eigen-equation residual
  double tail = 0;          // largest |psi| over the outer nodes, relative to max |psi|
  int nodes = 0;            // interior sign changes
};

struct BoundStateSet {
  std::vector<double> grid;
  double dr = 0;
  std::vector<BoundState> states;
};
// all eigenvalues below 0 of -d^2/dr^2 + V on a uniform grid with Dirichlet ends
BoundStateSet find_bound_states(const std::vector<double>& V, const std::vector<double>& r);
// convenience builder on [-rmax, rmax]
BoundStateSet bound_states_of(const HourglassSpec& spec, double rmax, double dr);

struct EmbeddedState {
  double lambda = 0;
  double E = 0;  // lambda + sigma2, an eigenvalue of the full operator when positive
  bool is_embedded = false;
  double residual = 0;
  double tail = 0;
  int nodes = 0;
  double E_doubled = 0;
  double doubling_shift = 0;  // |E_doubled - E| / max(|E|, eps)
  bool stable4 = false;       // shift <= 1e-4
};

struct EmbeddedReport {
  SpecReport spec_check;
  CriterionReport criterion;
  std::vector<EmbeddedState> states;
  int embedded_count = 0;
  int transverse_mult = 1;
  int refinements = 0;      // grid-halving escalations used before states appeared
  bool discrepancy = false; // criterion passed yet no states after escalation
  // dense energy scan of the monotone-profile counterpart (same well, same spectrum):
  // the top eigenvalue must sit at or below the last elevated-norm energy of that scan
  bool consist_ran = false;
  double consist_z0 = 0;
  double consist_top_E = 0;
  bool consist_pass = false;
  bool pass = false;
};

struct CertifyOptions {
  double rmax = 0;  // 0: R + 30
  double dr = 2.5e-3;
  bool consistency = true;
  double residual_tol = 1e-8;
  double tail_tol = 1e-6;
  double stable_tol = 1e-4;
};

EmbeddedReport certify_embedded(const HourglassSpec& spec, const CertifyOptions& opts = {});

}  // namespace cylscat::embedded
