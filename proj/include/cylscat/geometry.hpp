#pragma once

#include "cylscat/core.hpp"

#include <array>

namespace cylscat::geometry {

// warping profile f of the end metric dr^2 + f(r)^{4/(d-1)} g_Y
struct Profile {
  enum class Family { power, bump, hourglass, tabulated };
  Family family = Family::power;
  double c = 0.5;        // depth parameter, f approaches 1 - c at the reference point
  double m = 1;          // power family decay rate
  double R = 4;          // support radius for bump / hourglass
  double delta0 = 0;     // certified decay rate; 0 means "use the family default"
  bool tab_full_line = false;
  double tab_r0 = 0, tab_dr = 0;
  std::vector<double> tab;

  static Profile power(double c, double m, double delta0 = 0);
  static Profile bump(double c, double R, double delta0 = 0);
  static Profile hourglass(double c, double R);
  static Profile tabulated(double r0, double dr, std::vector<double> samples, double delta0,
                           bool full_line);

  double value(double r) const;
  double deriv(double r, int k) const;  // k = 1, 2, 3
  double decay_rate() const;            // delta0 resolved against the family default
  bool full_line() const;
};

// nonnegative repulsive potential, decaying, with slope <= -deltaV (1+r)^{-1} value
struct RepulsivePotential {
  enum class Family { zero, power, bump, tabulated };
  Family family = Family::zero;
  double A = 0;  // amplitude
  double m = 1;  // power decay rate
  double R = 4;  // bump support radius
  double deltaV = 0;
  double tab_r0 = 0, tab_dr = 0;
  std::vector<double> tab;

  static RepulsivePotential zero();
  static RepulsivePotential power(double A, double m);
  static RepulsivePotential bump(double A, double R);
  static RepulsivePotential tabulated(double r0, double dr, std::vector<double> samples,
                                      double deltaV);

  double value(double r) const;
  double slope(double r) const;
  double decay_rate() const;  // deltaV resolved; zero family reports +infinity
};

// compactly supported short-range term, support inside [0,5]
struct ShortRange {
  double amp = 0;
  double lo = 0.5, hi = 4.5, w = 1.0;
  double value(double r) const;
};

// trapping well on the neck of a full-line geometry; values in [-depth, 0]
struct Well {
  double depth = 0;
  double lo = -4, hi = 4, ramp = 2;
  double value(double r) const;
};

struct TransverseSpectrum {
  enum class Kind { circle, sphere, list };
  Kind kind = Kind::circle;
  double L = 2 * pi;  // circle circumference
  int dim = 2;        // sphere dimension (cross-section dimension d-1)
  std::vector<double> sigma2_list;
  std::vector<int> mult_list;

  static TransverseSpectrum circle(double L);
  static TransverseSpectrum sphere(int dim);
  static TransverseSpectrum list(std::vector<double> sigma2, std::vector<int> mult);

  // level k (without multiplicity): sigma^2 and multiplicity
  double level_sigma2(int k) const;
  int level_mult(int k) const;
  bool finite() const { return kind == Kind::list; }
  // sigma values with multiplicity, ascending
  std::vector<double> sigmas(int count) const;
  std::vector<double> sigmas_up_to(double sigma2_max) const;
};

struct ManifoldConfig {
  enum class Domain { half_cylinder, full_cylinder };
  Domain domain = Domain::half_cylinder;
  int d = 2;  // dimension of the manifold
  double E0 = 1;
  double cJ = 0.5;
  Profile profile;
  TransverseSpectrum spectrum;
  RepulsivePotential VL;
  ShortRange VS;
  std::vector<Well> wells;

  double alpha() const { return 4.0 / (d - 1); }
  double well_value(double r) const;
  // total potential V_L + h V_S + h^2 V_W at base radius r
  double potential(double r, double h) const;
};

struct CheckRecord {
  std::string name;
  double margin = 0;
  bool pass = false;
};

struct ProfileReport {
  bool pass = false;
  double delta0 = 0;
  std::array<double, 4> fitted_C{};  // sup |(f-1)^{(k)}| (1+r)^{k+delta0}, k = 0..3
  std::vector<CheckRecord> checks;
};

// checks positivity, f <= 1, monotonicity, the decay-rate inequality for f', and
// strict f < 1 on [0,6) for half-line profiles; full-line profiles are checked for
// a single nondegenerate interior minimum and f = 1 outside (-R, R)
ProfileReport validate_profile(const Profile& f, double rmax = 80, int n = 8000,
                               double tol = 1e-10);

struct PotentialReport {
  bool pass = false;
  double deltaV = 0;
  std::vector<CheckRecord> checks;
};

// checks V >= 0, decay, and the repulsivity inequality V' <= -deltaV (1+r)^{-1} V
PotentialReport validate_potential(const RepulsivePotential& V, double rmax = 80, int n = 8000,
                                   double tol = 1e-10);

// V_j(r) = V(r) + h^2 f''/f + h^2 sigma^2 (f^{-4/(d-1)} - 1)
double effective_potential(const ManifoldConfig& cfg, double h, double sigma, double r);
std::vector<double> effective_potential(const ManifoldConfig& cfg, double h, double sigma,
                                        const std::vector<double>& r);

inline double energy_level(double E0, double h, double sigma) { return E0 - h * h * sigma * sigma; }

// largest admissible threshold E* in (0, cJ]: every mode with E_j <= E* has
// h^2 sigma_j^2 f(5)^{-4/(d-1)} >= E0
double estar_threshold(const ManifoldConfig& cfg, double h);

}  // namespace cylscat::geometry
