#pragma once

#include "cylscat/core.hpp"

namespace cylscat {

struct Tridiag {
  int n = 0;
  std::vector<cplx> lower, diag, upper;  // lower/upper hold n-1 entries
  void apply(const cplx* x, cplx* y) const;
  void apply_adj(const cplx* x, cplx* y) const;
};

// LU of (T - shift) with partial pivoting; solves with one refinement pass
class TridiagSolver {
 public:
  TridiagSolver(const Tridiag& T, cplx shift);
  bool singular() const { return singular_; }
  // returns the relative residual |(T-shift)x - b| / |b|
  double solve(const cplx* b, cplx* x, bool adjoint = false) const;

 private:
  Tridiag shifted_;
  int n_;
  std::vector<cplx> dl_, d_, du_, du2_;
  std::vector<int> ipiv_;
  bool singular_ = false;
  void raw_solve(cplx* bx, bool adjoint) const;
};

struct NormOptions {
  int max_iter = 240;
  double tol = 1e-8;          // relative stagnation tolerance for sigma_max
  int probes = 2;             // independent random starts; the max is kept
  bool high_accuracy = false; // full reorthogonalization, tighter tolerance
  std::uint64_t seed = 0x2545f4914f6cdd1dull;
};

struct NormResult {
  double value = 0;
  bool converged = false;
  int iterations = 0;
};

using ApplyFn = std::function<void(const cplx*, cplx*)>;

// largest singular value of an n_out x n_in operator via Golub-Kahan bidiagonalization
NormResult operator_norm(int n_in, int n_out, const ApplyFn& apply, const ApplyFn& apply_adj,
                         const NormOptions& opts = {});

// assembles the matrix column by column and runs a dense SVD; cross-check path
double operator_norm_dense(int n_in, int n_out, const ApplyFn& apply);

// largest singular value of the upper bidiagonal matrix diag(alpha), superdiag(beta)
double bidiag_sigma_max(const std::vector<double>& alpha, const std::vector<double>& beta);

// eigenvalues of a real symmetric tridiagonal matrix in (vl, vu], with eigenvectors
struct SymTridiagEigen {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
};
SymTridiagEigen sym_tridiag_eigen_range(const std::vector<double>& diag,
                                        const std::vector<double>& off, double vl, double vu);

}  // namespace cylscat
