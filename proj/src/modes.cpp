#include "cylscat/modes.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace cylscat::modes {

using geometry::ManifoldConfig;
using halfline::GridPolicy;
using halfline::make_operator;
using halfline::ModeOperator;
using halfline::WeightFn;
using halfline::weighted_norm;

namespace {

double sup_weight(const std::function<double(double)>& w, bool full, double rmax = 240) {
  double s = 0;
  int n = 2000;
  double lo = full ? -rmax : 0.0;
  for (int i = 0; i <= n; ++i) s = std::max(s, std::abs(w(lo + (rmax - lo) * i / n)));
  return s;
}

}  // namespace

ModeFamily assemble_modes(const ManifoldConfig& cfg, double h, double zwin_re_max) {
  if (!(h > 0)) throw input_error("assemble_modes: h > 0 required");
  ModeFamily fam;
  fam.cfg = cfg;
  fam.h = h;
  fam.zwin_re_max = zwin_re_max;
  try {
    fam.estar = geometry::estar_threshold(cfg, h);
  } catch (const geometry_error&) {
    fam.estar = -std::numeric_limits<double>::infinity();
  }
  bool full = fam.full_line();
  double sup = 0;
  {
    int ns = 4000;
    double lo = full ? -80.0 : 0.0;
    for (int i = 0; i <= ns; ++i) {
      double r = lo + (80.0 - lo) * i / ns;
      sup = std::max(sup, std::abs(geometry::effective_potential(cfg, h, 0, r)));
    }
  }
  fam.tail_sup_v = sup;
  double need = zwin_re_max + sup + 1;  // excluded levels must have h^2 sigma^2 above this
  auto held = std::make_shared<const ManifoldConfig>(cfg);
  int j = 0;
  for (int k = 0;; ++k) {
    if (cfg.spectrum.finite() && k >= (int)cfg.spectrum.sigma2_list.size())
      throw input_error("assemble_modes: spectrum list exhausted before the tail certificate; "
                        "need at least " + std::to_string(k + 1) + " levels");
    if (k > 100000) throw input_error("assemble_modes: tail certificate unreachable");
    double s2 = cfg.spectrum.level_sigma2(k);
    if (h * h * s2 > need) {
      fam.tail_sigma2 = h * h * s2;
      fam.tail_bound = 1.0 / (fam.tail_sigma2 - zwin_re_max - sup);
      break;
    }
    ModeEntry e;
    e.j = j;
    e.mult = cfg.spectrum.level_mult(k);
    e.sigma = std::sqrt(s2);
    e.Ej = geometry::energy_level(cfg.E0, h, e.sigma);
    e.below_estar = e.Ej <= fam.estar;
    double sg = e.sigma;
    e.potential = [held, h, sg](double r) {
      return cplx(geometry::effective_potential(*held, h, sg, r), 0);
    };
    j += e.mult;
    fam.entries.push_back(std::move(e));
  }
  fam.levels = (int)fam.entries.size();
  fam.J_max = j - 1;
  return fam;
}

namespace {

double mode_norm(const ModeFamily& fam, const WeightQuery& q, const ModeEntry& e,
                 const std::function<double(int, double)>& mode_left,
                 const std::function<double(int, double)>& mode_right, bool& singular) {
  cplx zeta = q.z - fam.h * fam.h * e.sigma * e.sigma;
  std::function<cplx(double)> fn = e.potential;
  if (q.absorb) {
    auto base = e.potential;
    auto W = q.absorb;
    fn = [base, W](double r) { return base(r) - cplx(0, W(r)); };
  }
  WeightFn wl = q.wl, wr = q.wr;
  if (mode_left) {
    auto base = q.wl;
    int jj = e.j;
    wl = [base, mode_left, jj](double r) { return mode_left(jj, r) * base(r); };
  }
  if (mode_right) {
    auto base = q.wr;
    int jj = e.j;
    wr = [base, mode_right, jj](double r) { return mode_right(jj, r) * base(r); };
  }
  ModeOperator op = make_operator(q.grid, fam.h, zeta, fn, std::abs(fn(0.0)), fam.full_line());
  halfline::WeightedNorm wn = weighted_norm(op, zeta, wl, wr, q.norm);
  singular = wn.singular;
  return wn.value;
}

}  // namespace

FullNorm full_weighted_norm(const ModeFamily& fam, const WeightQuery& q,
                            const std::function<double(int, double)>& mode_left,
                            const std::function<double(int, double)>& mode_right) {
  if (!(q.z.real() <= fam.zwin_re_max + 1e-12))
    throw precondition_error("full_weighted_norm: Re z outside the family window");
  FullNorm out;
  out.per_mode.resize(fam.entries.size());
  parallel_for(fam.entries.size(), [&](std::size_t i) {
    const ModeEntry& e = fam.entries[i];
    ModeNormRecord rec;
    rec.j = e.j;
    rec.sigma = e.sigma;
    rec.Ej = e.Ej;
    rec.value = mode_norm(fam, q, e, mode_left, mode_right, rec.singular);
    out.per_mode[i] = rec;
  });
  double swl = sup_weight(mode_left ? std::function<double(double)>(
                                          [&](double r) { return mode_left(fam.J_max + 1, r) * q.wl(r); })
                                    : std::function<double(double)>(q.wl),
                          fam.full_line());
  double swr = sup_weight(mode_right ? std::function<double(double)>(
                                           [&](double r) { return mode_right(fam.J_max + 1, r) * q.wr(r); })
                                     : std::function<double(double)>(q.wr),
                          fam.full_line());
  out.tail_term = fam.tail_bound * swl * swr;
  out.value = out.tail_term;
  for (const auto& rec : out.per_mode) {
    out.any_singular = out.any_singular || rec.singular;
    if (rec.value > out.value) {
      out.value = rec.value;
      out.argmax_j = rec.j;
    }
  }
  return out;
}

std::vector<TailCheckRecord> tail_spot_check(const ModeFamily& fam, const WeightQuery& q,
                                             int count) {
  std::vector<TailCheckRecord> out;
  int k0 = fam.levels;
  auto held = std::make_shared<const ManifoldConfig>(fam.cfg);
  for (int k = k0; k < k0 + count; ++k) {
    if (fam.cfg.spectrum.finite() && k >= (int)fam.cfg.spectrum.sigma2_list.size()) break;
    double s2 = fam.cfg.spectrum.level_sigma2(k);
    double sg = std::sqrt(s2);
    double h = fam.h;
    auto fn = [held, h, sg](double r) {
      return cplx(geometry::effective_potential(*held, h, sg, r), 0);
    };
    cplx zeta = q.z - h * h * s2;
    ModeOperator op = make_operator(q.grid, h, zeta, fn, std::abs(fn(0.0)), fam.full_line());
    TailCheckRecord rec;
    rec.sigma = sg;
    rec.computed = weighted_norm(op, zeta, halfline::w_one(), halfline::w_one(), q.norm).value;
    rec.bound = 1.0 / (h * h * s2 - q.z.real() - fam.tail_sup_v);
    out.push_back(rec);
  }
  return out;
}

ScanReport scan_uniform_bound(const ManifoldConfig& cfg, double x_lo, double x_hi, int nx,
                              double eps, const WeightFn& chi, const GridPolicy& gp,
                              const NormOptions& no) {
  if (!(0 < x_lo) || !(x_lo < x_hi) || nx < 4)
    throw input_error("scan_uniform_bound: need 0 < x_lo < x_hi and nx >= 4");
  ModeFamily fam = assemble_modes(cfg, 1.0, x_hi);
  ScanReport rep;
  rep.records.resize(nx);
  parallel_for((std::size_t)nx, [&](std::size_t i) {
    double x = x_lo * std::pow(x_hi / x_lo, (double)i / (nx - 1));
    WeightQuery q;
    q.z = cplx(x, eps);
    q.wl = chi;
    q.wr = chi;
    q.grid = gp;
    q.norm = no;
    FullNorm fn = full_weighted_norm(fam, q);
    rep.records[i] = {x, fn.value, fn.any_singular};
  });
  std::vector<double> lx, ly, vals;
  for (const auto& r : rep.records) {
    if (r.pole) {
      ++rep.poles;
      continue;
    }
    lx.push_back(std::log(r.x));
    ly.push_back(std::log(std::max(r.value, 1e-300)));
    vals.push_back(r.value);
  }
  if (vals.size() < 4) throw resolution_error("scan_uniform_bound: too few usable grid points");
  rep.loglog = fit_line(lx, ly);
  std::vector<double> sorted = vals;
  std::sort(sorted.begin(), sorted.end());
  rep.median = sorted[sorted.size() / 2];
  rep.min_upper_half = 1e300;
  for (std::size_t i = rep.records.size() / 2; i < rep.records.size(); ++i)
    if (!rep.records[i].pole) rep.min_upper_half = std::min(rep.min_upper_half, rep.records[i].value);
  rep.pass_flat = std::abs(rep.loglog.slope) <= 0.1;
  rep.pass_floor = rep.min_upper_half >= 0.5 * rep.median;
  rep.pass = rep.pass_flat && rep.pass_floor;
  return rep;
}

std::function<double(double)> default_barrier() {
  return [](double r) { return ramp_up(std::abs(r), 5, 6); };
}

namespace {

void check_barrier_contract(const std::function<double(double)>& W) {
  for (int i = 0; i <= 500; ++i) {
    double r = 200.0 * i / 500 - 100.0;
    double v = W(r);
    if (!(v >= -1e-9) || !(v <= 1 + 1e-9))
      throw input_error("absorbing barrier must take values in [0,1]");
    double a = std::abs(r);
    if (a <= 5 && std::abs(v) > 1e-9)
      throw input_error("absorbing barrier must vanish up to |r| = 5");
    if (a >= 6 && std::abs(v - 1) > 1e-9)
      throw input_error("absorbing barrier must equal 1 past |r| = 6");
  }
}

AhRecord a_of_h_single(const ManifoldConfig& cfg, double h,
                       const std::function<double(double)>& W, const GridPolicy& gp,
                       const NormOptions& no) {
  ModeFamily fam = assemble_modes(cfg, h, cfg.E0);
  WeightQuery q;
  q.z = cplx(cfg.E0, 0);
  q.absorb = W;
  q.grid = gp;
  q.norm = no;
  FullNorm fn = full_weighted_norm(fam, q);
  AhRecord rec;
  rec.h = h;
  rec.a = h * fn.value;
  rec.argmax_j = fn.argmax_j;
  rec.finite = !fn.any_singular && std::isfinite(fn.value);
  return rec;
}

}  // namespace

AhReport measure_a_of_h(const ManifoldConfig& cfg, const std::vector<double>& hs,
                        const std::function<double(double)>& W, const GridPolicy& gp,
                        const NormOptions& no) {
  if (hs.empty()) throw input_error("measure_a_of_h: empty h set");
  std::function<double(double)> barrier = W ? W : default_barrier();
  check_barrier_contract(barrier);
  AhReport rep;
  rep.records.resize(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i)
    rep.records[i] = a_of_h_single(cfg, hs[i], barrier, gp, no);
  double amin = 1e300, amax = 0;
  std::vector<double> lx, ly;
  rep.pass = true;
  for (const auto& r : rep.records) {
    rep.pass = rep.pass && r.finite;
    amin = std::min(amin, r.a);
    amax = std::max(amax, r.a);
    lx.push_back(std::log(1 / r.h));
    ly.push_back(r.a);
  }
  rep.spread = amin > 0 ? amax / amin : std::numeric_limits<double>::infinity();
  rep.log_fit = fit_line(lx, ly);
  return rep;
}

TcontReport check_tcont_scaling(const ManifoldConfig& cfg, const std::vector<double>& hs,
                                double s1, double s2, double eps, const GridPolicy& gp,
                                const NormOptions& no) {
  if (!(s1 > 0.5) || !(s2 > 0.5) || !(s1 + s2 > 2))
    throw precondition_error("check_tcont_scaling: need s1, s2 > 1/2 and s1 + s2 > 2");
  if (hs.size() < 3) throw input_error("check_tcont_scaling: need at least 3 h values");
  TcontReport rep;
  rep.s1 = s1;
  rep.s2 = s2;
  bool full = cfg.domain == ManifoldConfig::Domain::full_cylinder;
  WeightFn wl = full ? halfline::w_power_abs(s1) : halfline::w_power(s1);
  WeightFn wr = full ? halfline::w_power_abs(s2) : halfline::w_power(s2);
  auto barrier = default_barrier();
  for (double h : hs) {
    AhRecord ah = a_of_h_single(cfg, h, barrier, gp, no);
    ModeFamily fam = assemble_modes(cfg, h, cfg.E0 + 1);
    WeightQuery q;
    q.z = cplx(cfg.E0, eps);
    q.wl = wl;
    q.wr = wr;
    q.grid = gp;
    q.norm = no;
    double v = full_weighted_norm(fam, q).value;
    double target = (ah.a + 1 / h) / h;
    rep.hs.push_back(h);
    rep.norms.push_back(v);
    rep.a.push_back(ah.a);
    rep.targets.push_back(target);
    rep.ratios.push_back(v / target);
  }
  std::vector<double> lx, ly;
  double rmin = 1e300, rmax = 0;
  for (std::size_t i = 0; i < rep.hs.size(); ++i) {
    lx.push_back(std::log(rep.hs[i]));
    ly.push_back(std::log(std::max(rep.norms[i], 1e-300)));
    rmin = std::min(rmin, rep.ratios[i]);
    rmax = std::max(rmax, rep.ratios[i]);
  }
  rep.loglog = fit_line(lx, ly);
  rep.ratio_spread = rmin > 0 ? rmax / rmin : std::numeric_limits<double>::infinity();
  rep.pass = rep.ratio_spread <= 2.0;
  return rep;
}

TawayReport check_taway_scaling(const ManifoldConfig& cfg, const std::vector<double>& hs,
                                double s, double eps, const GridPolicy& gp,
                                const NormOptions& no) {
  if (!(s > 0.5)) throw precondition_error("check_taway_scaling: need s > 1/2");
  if (hs.size() < 3) throw input_error("check_taway_scaling: need at least 3 h values");
  TawayReport rep;
  rep.s = s;
  rep.s_uncut = 2 * s > 2 ? s : 1.05;
  rep.cJ = cfg.cJ;
  bool full = cfg.domain == ManifoldConfig::Domain::full_cylinder;
  WeightFn ws = full ? halfline::w_power_abs(s) : halfline::w_power(s);
  WeightFn wu = full ? halfline::w_power_abs(rep.s_uncut) : halfline::w_power(rep.s_uncut);
  WeightFn chig = halfline::w_chi_geom(cfg);
  auto barrier = default_barrier();
  double cJ = cfg.cJ;

  auto make_cut = [&](const ModeFamily& fam) {
    // membership recomputed both from the level table and from E_j directly; any
    // disagreement means the family is internally inconsistent
    auto held = std::make_shared<std::vector<std::pair<int, bool>>>();
    for (const auto& e : fam.entries) {
      bool in_J = !(e.Ej >= -cJ * fam.h && e.Ej <= cJ);
      for (int t = 0; t < e.mult; ++t) held->push_back({e.j + t, in_J});
    }
    double h = fam.h;
    double E0 = fam.cfg.E0;
    return [held, chig, full, h, E0, cJ, &fam](int j, double r) {
      bool in_J;
      if (j > fam.J_max) {
        in_J = true;  // tail levels are far below any window around E_0
      } else {
        auto it = std::find_if(held->begin(), held->end(),
                               [j](const auto& p) { return p.first == j; });
        if (it == held->end()) throw error("cutoff: flattened index missing from the level table");
        in_J = it->second;
        double sg = -1;
        for (const auto& e : fam.entries)
          if (j >= e.j && j < e.j + e.mult) sg = e.sigma;
        double Ej = E0 - h * h * sg * sg;
        bool in_J2 = !(Ej >= -cJ * h && Ej <= cJ);
        if (in_J != in_J2) throw error("cutoff: J membership inconsistent with E_j");
      }
      double pi_part = in_J ? ramp_up(full ? std::abs(r) : r, 0, 1) : 0.0;
      return pi_part + chig(r);
    };
  };

  std::size_t mid = hs.size() / 2;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    double h = hs[i];
    AhRecord ah = a_of_h_single(cfg, h, barrier, gp, no);
    ModeFamily fam = assemble_modes(cfg, h, cfg.E0 + 1);
    auto cut = make_cut(fam);
    WeightQuery q;
    q.z = cplx(cfg.E0, eps);
    q.wl = ws;
    q.wr = ws;
    q.grid = gp;
    q.norm = no;
    double vcut = full_weighted_norm(fam, q, cut).value;
    WeightQuery qu = q;
    qu.wl = wu;
    qu.wr = wu;
    double vuncut = full_weighted_norm(fam, qu).value;
    rep.hs.push_back(h);
    rep.cut.push_back(vcut);
    rep.uncut.push_back(vuncut);
    rep.a.push_back(ah.a);
    if (i == mid) {
      WeightQuery qc = q;
      qc.z = std::conj(q.z);
      double vadj = full_weighted_norm(fam, qc, {}, cut).value;
      rep.adjoint_reldiff = std::abs(vadj - vcut) / std::max(vcut, 1e-300);
    }
  }
  std::vector<double> lx, lc, lu;
  double spmin = 1e300, spmax = 0;
  for (std::size_t i = 0; i < rep.hs.size(); ++i) {
    lx.push_back(std::log(rep.hs[i]));
    lc.push_back(std::log(std::max(rep.cut[i], 1e-300)));
    lu.push_back(std::log(std::max(rep.uncut[i], 1e-300)));
    double ratio = rep.cut[i] / ((1 + rep.a[i]) / rep.hs[i]);
    spmin = std::min(spmin, ratio);
    spmax = std::max(spmax, ratio);
  }
  rep.fit_cut = fit_line(lx, lc);
  rep.fit_uncut = fit_line(lx, lu);
  rep.gap = rep.fit_cut.slope - rep.fit_uncut.slope;
  rep.cut_ratio_spread = spmin > 0 ? spmax / spmin : std::numeric_limits<double>::infinity();
  rep.pass_gap = std::abs(rep.fit_cut.slope + 1) <= 0.3 && std::abs(rep.fit_uncut.slope + 2) <= 0.3;
  rep.pass_adjoint = rep.adjoint_reldiff <= 1e-4;
  rep.pass = rep.pass_gap && rep.pass_adjoint;
  return rep;
}

CrossCheck direct_sum_crosscheck(const ManifoldConfig& cfg, double h, cplx z, double s_left,
                                 double s_right, int n_r, double rmax, int n_theta,
                                 const NormOptions& no) {
  if (cfg.domain != ManifoldConfig::Domain::half_cylinder)
    throw precondition_error("direct_sum_crosscheck: half-cylinder domains only");
  if (cfg.spectrum.kind != geometry::TransverseSpectrum::Kind::circle)
    throw precondition_error("direct_sum_crosscheck: circle cross-sections only");
  if (n_r < 8 || n_r * n_theta > 4000)
    throw input_error("direct_sum_crosscheck: grid size out of range");
  double dr = rmax / (n_r + 1);
  double dtheta = cfg.spectrum.L / n_theta;
  double a = cfg.alpha();
  int N = n_r * n_theta;

  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(N, N);
  double t = h * h / (dr * dr);
  double tt = h * h / (dtheta * dtheta);
  std::vector<double> rs(n_r), base(n_r), warp(n_r);
  for (int i = 0; i < n_r; ++i) {
    rs[i] = (i + 1) * dr;
    base[i] = geometry::effective_potential(cfg, h, 0, rs[i]);
    warp[i] = std::pow(cfg.profile.value(rs[i]), -a);
  }
  for (int i = 0; i < n_r; ++i) {
    for (int q = 0; q < n_theta; ++q) {
      int row = i * n_theta + q;
      A(row, row) = 2 * t + base[i] + 2 * tt * warp[i] - z;
      if (i > 0) A(row, row - n_theta) = -t;
      if (i + 1 < n_r) A(row, row + n_theta) = -t;
      A(row, i * n_theta + (q + 1) % n_theta) -= tt * warp[i];
      A(row, i * n_theta + (q + n_theta - 1) % n_theta) -= tt * warp[i];
    }
  }
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A);
  std::vector<double> wl(n_r), wr(n_r);
  for (int i = 0; i < n_r; ++i) {
    wl[i] = std::pow(1 + rs[i], -s_left);
    wr[i] = std::pow(1 + rs[i], -s_right);
  }
  auto apply = [&](const cplx* x, cplx* y) {
    Eigen::VectorXcd v(N);
    for (int i = 0; i < N; ++i) v(i) = wr[i / n_theta] * x[i];
    Eigen::VectorXcd u = lu.solve(v);
    for (int i = 0; i < N; ++i) y[i] = wl[i / n_theta] * u(i);
  };
  auto apply_adj = [&](const cplx* x, cplx* y) {
    Eigen::VectorXcd v(N);
    for (int i = 0; i < N; ++i) v(i) = wl[i / n_theta] * x[i];
    Eigen::VectorXcd u = lu.adjoint().solve(v);
    for (int i = 0; i < N; ++i) y[i] = wr[i / n_theta] * u(i);
  };
  CrossCheck out;
  out.norm_2d = operator_norm(N, N, apply, apply_adj, no).value;

  auto held = std::make_shared<const ManifoldConfig>(cfg);
  double best = 0;
  for (int k = 0; k < n_theta; ++k) {
    double s2k = (2 - 2 * std::cos(2 * pi * k / n_theta)) / (dtheta * dtheta);
    auto fn = [held, h, s2k, a](double r) {
      double fv = held->profile.value(r);
      return cplx(geometry::effective_potential(*held, h, 0, r) +
                      h * h * s2k * std::pow(fv, -a),
                  0);
    };
    ModeOperator op = halfline::discretize(h, rmax, n_r, fn, halfline::Boundary::dirichlet);
    best = std::max(best, weighted_norm(op, z, halfline::w_power(s_left),
                                        halfline::w_power(s_right), no)
                              .value);
  }
  out.norm_modes = best;
  out.rel_diff = std::abs(out.norm_2d - out.norm_modes) / std::max(out.norm_modes, 1e-300);
  return out;
}

}  // namespace cylscat::modes
