#include "cylscat/linalg.hpp"

#include <lapacke.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

namespace cylscat {

void Tridiag::apply(const cplx* x, cplx* y) const {
  for (int i = 0; i < n; ++i) {
    cplx v = diag[i] * x[i];
    if (i > 0) v += lower[i - 1] * x[i - 1];
    if (i < n - 1) v += upper[i] * x[i + 1];
    y[i] = v;
  }
}

void Tridiag::apply_adj(const cplx* x, cplx* y) const {
  for (int i = 0; i < n; ++i) {
    cplx v = std::conj(diag[i]) * x[i];
    if (i < n - 1) v += std::conj(lower[i]) * x[i + 1];
    if (i > 0) v += std::conj(upper[i - 1]) * x[i - 1];
    y[i] = v;
  }
}

TridiagSolver::TridiagSolver(const Tridiag& T, cplx shift) : n_(T.n) {
  shifted_ = T;
  for (int i = 0; i < n_; ++i) shifted_.diag[i] -= shift;
  dl_ = shifted_.lower;
  d_ = shifted_.diag;
  du_ = shifted_.upper;
  du2_.assign(n_ > 2 ? n_ - 2 : 0, cplx(0));
  ipiv_.assign(n_, 0);
  lapack_int info = LAPACKE_zgttrf(n_, reinterpret_cast<lapack_complex_double*>(dl_.data()),
                                   reinterpret_cast<lapack_complex_double*>(d_.data()),
                                   reinterpret_cast<lapack_complex_double*>(du_.data()),
                                   reinterpret_cast<lapack_complex_double*>(du2_.data()),
                                   ipiv_.data());
  singular_ = info > 0;
}

void TridiagSolver::raw_solve(cplx* bx, bool adjoint) const {
  LAPACKE_zgttrs(LAPACK_COL_MAJOR, adjoint ? 'C' : 'N', n_, 1,
                 reinterpret_cast<const lapack_complex_double*>(dl_.data()),
                 reinterpret_cast<const lapack_complex_double*>(d_.data()),
                 reinterpret_cast<const lapack_complex_double*>(du_.data()),
                 reinterpret_cast<const lapack_complex_double*>(du2_.data()), ipiv_.data(),
                 reinterpret_cast<lapack_complex_double*>(bx), n_);
}

double TridiagSolver::solve(const cplx* b, cplx* x, bool adjoint) const {
  if (singular_) throw pole_error("tridiagonal solve: matrix is exactly singular");
  double bn = 0;
  for (int i = 0; i < n_; ++i) bn += std::norm(b[i]);
  bn = std::sqrt(bn);
  if (bn == 0) {
    for (int i = 0; i < n_; ++i) x[i] = 0;
    return 0;
  }
  for (int i = 0; i < n_; ++i) x[i] = b[i];
  raw_solve(x, adjoint);
  // one refinement pass; the residual returned is the post-refinement one
  std::vector<cplx> res(n_), corr(n_);
  for (int pass = 0; pass < 2; ++pass) {
    if (adjoint)
      shifted_.apply_adj(x, res.data());
    else
      shifted_.apply(x, res.data());
    double rn = 0;
    for (int i = 0; i < n_; ++i) {
      res[i] = b[i] - res[i];
      rn += std::norm(res[i]);
    }
    rn = std::sqrt(rn);
    if (pass == 1 || rn <= 1e-13 * bn) return rn / bn;
    corr = res;
    raw_solve(corr.data(), adjoint);
    for (int i = 0; i < n_; ++i) x[i] += corr[i];
  }
  return 0;
}

double bidiag_sigma_max(const std::vector<double>& alpha, const std::vector<double>& beta) {
  int k = (int)alpha.size();
  if (k == 0) return 0;
  if (k == 1) return std::abs(alpha[0]);
  // power iteration on B^T B, which is symmetric tridiagonal:
  //   diag_i = a_i^2 + b_{i-1}^2,  off_i = a_i b_i
  std::vector<double> dg(k), off(k - 1);
  for (int i = 0; i < k; ++i) {
    dg[i] = alpha[i] * alpha[i] + (i > 0 ? beta[i - 1] * beta[i - 1] : 0.0);
    if (i < k - 1) off[i] = alpha[i] * beta[i];
  }
  std::vector<double> v(k, 1.0 / std::sqrt((double)k)), w(k);
  double lam = 0;
  for (int it = 0; it < 400; ++it) {
    for (int i = 0; i < k; ++i) {
      double s = dg[i] * v[i];
      if (i > 0) s += off[i - 1] * v[i - 1];
      if (i < k - 1) s += off[i] * v[i + 1];
      w[i] = s;
    }
    double nw = 0;
    for (double t : w) nw += t * t;
    nw = std::sqrt(nw);
    if (nw == 0) return 0;
    double prev = lam;
    lam = nw;
    for (int i = 0; i < k; ++i) v[i] = w[i] / nw;
    if (it > 8 && std::abs(lam - prev) <= 1e-14 * lam) break;
  }
  return std::sqrt(lam);
}

namespace {

double vec_norm(const std::vector<cplx>& v) {
  double s = 0;
  for (const cplx& t : v) s += std::norm(t);
  return std::sqrt(s);
}

void reorth(std::vector<cplx>& w, const std::vector<std::vector<cplx>>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& q : basis) {
      cplx c(0);
      for (std::size_t i = 0; i < w.size(); ++i) c += std::conj(q[i]) * w[i];
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= c * q[i];
    }
  }
}

double gk_probe(int n_in, int n_out, const ApplyFn& apply, const ApplyFn& apply_adj,
                const NormOptions& opts, std::mt19937_64& rng, bool& converged, int& iters) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<cplx> v(n_in), u(n_out), w(n_in), t(n_out);
  for (auto& c : v) c = cplx(gauss(rng), gauss(rng));
  double nv = vec_norm(v);
  for (auto& c : v) c /= nv;

  bool store = opts.high_accuracy;
  std::vector<std::vector<cplx>> V, U;
  std::vector<cplx> v_prev, u_prev;

  apply(v.data(), u.data());
  double a = vec_norm(u);
  if (a < 1e-300) {
    converged = true;
    iters = 1;
    return 0;
  }
  for (auto& c : u) c /= a;
  std::vector<double> alphas{a}, betas;
  if (store) {
    V.push_back(v);
    U.push_back(u);
  }
  double sigma = a, sigma_prev = 0;
  int stable = 0;
  converged = false;
  double tol = opts.high_accuracy ? 1e-12 : opts.tol;

  for (int k = 1; k < opts.max_iter; ++k) {
    iters = k;
    apply_adj(u.data(), w.data());
    for (int i = 0; i < n_in; ++i) w[i] -= a * v[i];
    if (store)
      reorth(w, V);
    else if (!v_prev.empty()) {
      cplx c(0);
      for (int i = 0; i < n_in; ++i) c += std::conj(v_prev[i]) * w[i];
      for (int i = 0; i < n_in; ++i) w[i] -= c * v_prev[i];
    }
    double b = vec_norm(w);
    if (b < 1e-300) {
      converged = true;
      break;
    }
    v_prev = v;
    for (int i = 0; i < n_in; ++i) v[i] = w[i] / b;
    betas.push_back(b);
    if (store) V.push_back(v);

    apply(v.data(), t.data());
    for (int i = 0; i < n_out; ++i) t[i] -= b * u[i];
    if (store)
      reorth(t, U);
    else if (!u_prev.empty()) {
      cplx c(0);
      for (int i = 0; i < n_out; ++i) c += std::conj(u_prev[i]) * t[i];
      for (int i = 0; i < n_out; ++i) t[i] -= c * u_prev[i];
    }
    a = vec_norm(t);
    if (a < 1e-300) {
      converged = true;
      break;
    }
    u_prev = u;
    for (int i = 0; i < n_out; ++i) u[i] = t[i] / a;
    alphas.push_back(a);
    if (store) U.push_back(u);

    if (k % 4 == 0 || k == opts.max_iter - 1) {
      sigma_prev = sigma;
      sigma = bidiag_sigma_max(alphas, betas);
      if (std::abs(sigma - sigma_prev) <= tol * sigma) {
        if (++stable >= 2) {
          converged = true;
          break;
        }
      } else {
        stable = 0;
      }
    }
  }
  return std::max(sigma, bidiag_sigma_max(alphas, betas));
}

}  // namespace

NormResult operator_norm(int n_in, int n_out, const ApplyFn& apply, const ApplyFn& apply_adj,
                         const NormOptions& opts) {
  NormResult out;
  std::mt19937_64 rng(opts.seed);
  out.converged = true;
  for (int p = 0; p < std::max(1, opts.probes); ++p) {
    bool conv = false;
    int it = 0;
    double val = gk_probe(n_in, n_out, apply, apply_adj, opts, rng, conv, it);
    out.value = std::max(out.value, val);
    out.converged = out.converged && conv;
    out.iterations += it;
  }
  return out;
}

double operator_norm_dense(int n_in, int n_out, const ApplyFn& apply) {
  Eigen::MatrixXcd M(n_out, n_in);
  std::vector<cplx> e(n_in, cplx(0)), col(n_out);
  for (int j = 0; j < n_in; ++j) {
    e[j] = 1;
    apply(e.data(), col.data());
    e[j] = 0;
    for (int i = 0; i < n_out; ++i) M(i, j) = col[i];
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(M);
  return svd.singularValues()(0);
}

SymTridiagEigen sym_tridiag_eigen_range(const std::vector<double>& diag,
                                        const std::vector<double>& off, double vl, double vu) {
  int n = (int)diag.size();
  SymTridiagEigen out;
  if (n == 0) return out;
  std::vector<double> d = diag, e = off;
  e.resize(n, 0.0);
  std::vector<double> wv(n);
  std::vector<double> zv((std::size_t)n * n);
  std::vector<lapack_int> isuppz(2 * (std::size_t)n);
  lapack_int m = 0;
  lapack_int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'V', n, d.data(), e.data(), vl, vu, 0, 0,
                                   0.0, &m, wv.data(), zv.data(), n, isuppz.data());
  if (info != 0) throw error("dstevr failed");
  for (int k = 0; k < m; ++k) {
    out.values.push_back(wv[k]);
    out.vectors.emplace_back(zv.begin() + (std::size_t)k * n, zv.begin() + (std::size_t)(k + 1) * n);
  }
  return out;
}

}  // namespace cylscat
