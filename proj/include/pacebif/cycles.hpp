#pragma once

// Periodic-orbit location and continuation by single shooting, Floquet
// multipliers from the variational equations, saddle-node-of-cycles
// detection, and homoclinic/SNIC approach handling via period blow-up.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "pacebif/equilibria.hpp"

namespace pacebif {

template <class P>
inline SystemDef<P> reversed(const SystemDef<P>& sys) {
  SystemDef<P> r = sys;
  r.name = sys.name + "-reversed";
  auto rhs = sys.rhs;
  auto jac = sys.jacobian;
  r.rhs = [rhs](const Vec& x, const P& p, Vec& out) {
    rhs(x, p, out);
    out *= -1.0;
  };
  r.jacobian = [jac](const Vec& x, const P& p, Mat& out) {
    jac(x, p, out);
    for (int i = 0; i < out.rows(); ++i)
      for (int j = 0; j < out.cols(); ++j) out(i, j) = -out(i, j);
  };
  return r;
}

struct FlowResult {
  Vec x_end;
  Mat monodromy;          // d(x_end)/d(x0)
  Vec dx_dp;              // d(x_end)/d(param), when requested
  double trace_integral = 0.0;  // integral of trace J dt along the orbit
  double v_min = 0.0, v_max = 0.0;
  bool ok = false;
};

namespace detail {

// RK4 on the orbit + first variational equations (+ parameter variational
// when freed != nullptr), all sharing one grid. Augmented layout:
// [x(d), M columns (d*d), w(d) optional, q(1)].
template <class P>
inline FlowResult flow_variational(const SystemDef<P>& sys, const P& params,
                                   const Vec& x0, double T, double grid_step,
                                   double P::* freed = nullptr,
                                   std::vector<Vec>* samples = nullptr,
                                   int n_samples = 0) {
  FlowResult out;
  int d = sys.dim;
  bool withp = freed != nullptr;
  int nv = d + d * d + (withp ? d : 0) + 1;
  Vec a(nv);
  for (int i = 0; i < d; ++i) a[i] = x0[i];
  for (int i = 0; i < d; ++i) a[d + i * d + i] = 1.0;

  double dp = 0.0;
  P pp = params, pm = params;
  if (withp) {
    double scale = std::fabs(params.*freed) + 1.0;
    dp = 1e-7 * scale;
    pp.*freed = params.*freed + dp;
    pm.*freed = params.*freed - dp;
  }

  auto aug_rhs = [&](const Vec& v, Vec& dv) {
    Vec x(d);
    for (int i = 0; i < d; ++i) x[i] = v[i];
    Vec f = sys.eval_rhs(x, params);
    Mat J = sys.eval_jac(x, params);
    dv = Vec(nv);
    for (int i = 0; i < d; ++i) dv[i] = f[i];
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) {
        double s = 0;
        for (int k = 0; k < d; ++k) s += J(i, k) * v[d + j * d + k];
        dv[d + j * d + i] = s;
      }
    int off = d + d * d;
    if (withp) {
      Vec fp = sys.eval_rhs(x, pp), fm = sys.eval_rhs(x, pm);
      for (int i = 0; i < d; ++i) {
        double s = (fp[i] - fm[i]) / (2.0 * dp);
        for (int k = 0; k < d; ++k) s += J(i, k) * v[off + k];
        dv[off + i] = s;
      }
      off += d;
    }
    double tr = 0;
    for (int i = 0; i < d; ++i) tr += J(i, i);
    dv[off] = tr;
  };

  int nsteps = std::max<int>(64, static_cast<int>(std::ceil(T / grid_step)));
  double h = T / nsteps;
  out.v_min = x0[0];
  out.v_max = x0[0];
  int sample_every = (samples && n_samples > 0)
                         ? std::max(1, nsteps / n_samples)
                         : 0;
  if (samples) {
    samples->clear();
    samples->push_back(x0);
  }
  Vec k1(nv), k2(nv), k3(nv), k4(nv);
  for (int s = 0; s < nsteps; ++s) {
    aug_rhs(a, k1);
    aug_rhs(a + 0.5 * h * k1, k2);
    aug_rhs(a + 0.5 * h * k2, k3);
    aug_rhs(a + h * k3, k4);
    a += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!a.finite()) return out;
    out.v_min = std::min(out.v_min, a[0]);
    out.v_max = std::max(out.v_max, a[0]);
    if (sample_every && (s + 1) % sample_every == 0 && s + 1 < nsteps) {
      Vec x(d);
      for (int i = 0; i < d; ++i) x[i] = a[i];
      samples->push_back(x);
    }
  }
  out.x_end = Vec(d);
  for (int i = 0; i < d; ++i) out.x_end[i] = a[i];
  out.monodromy = Mat(d, d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) out.monodromy(i, j) = a[d + j * d + i];
  int off = d + d * d;
  if (withp) {
    out.dx_dp = Vec(d);
    for (int i = 0; i < d; ++i) out.dx_dp[i] = a[off + i];
    off += d;
  }
  out.trace_integral = a[off];
  out.ok = true;
  return out;
}

}  // namespace detail

struct CycleOpts {
  double grid_step = 0.01;       // in units of the system's time scale
  int max_grid_steps = 400000;
  double tol = 1e-10;            // scaled shooting residual
  int max_newton = 30;
  int phase_component = 0;
};

template <class P>
inline double cycle_grid_step(const SystemDef<P>& sys, const CycleOpts& o) {
  return o.grid_step * sys.time_scale;
}

struct CycleSolution {
  double param = std::nan("");
  double period = 0.0;
  Vec anchor;
  Eigs multipliers;        // full monodromy spectrum
  double sec_mult_re = 0;  // leading nontrivial (Poincare section) multiplier
  double sec_mult_im = 0;
  bool stable = false;
  double trivial_err = 0.0;  // |mu_0 - 1| quality metric
  double v_min = 0, v_max = 0;
  double residual = 0.0;
};

// Nontrivial multipliers as eigenvalues of the Poincare-section return-map
// derivative: S = (I - f n^T / (n.f)) M restricted to the section tangent.
// Computed in scaled coordinates; avoids trivial-multiplier contamination
// near multiplier collisions at SNC.
template <class P>
inline Eigs section_multipliers(const SystemDef<P>& sys, const P& params,
                                const Vec& anchor, const Mat& M,
                                int phase_component = 0) {
  int d = sys.dim;
  Vec f = sys.eval_rhs(anchor, params);
  Mat J = sys.eval_jac(anchor, params);
  // scaled quantities
  Vec fs(d), n(d);
  for (int i = 0; i < d; ++i) fs[i] = f[i] / sys.state_scale[i];
  for (int j = 0; j < d; ++j)
    n[j] = J(phase_component, j) * sys.state_scale[j];  // grad of rhs[pc], scaled
  Mat Ms(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      Ms(i, j) = M(i, j) * sys.state_scale[j] / sys.state_scale[i];
  double nf = n.dot(fs);
  Eigs out;
  out.n = d - 1;
  if (std::fabs(nf) < 1e-300) return out;
  // projector Pi = I - fs n^T / nf, restricted to an orthonormal basis of n^perp
  std::vector<Vec> basis;
  for (int axis = 0; axis < d && static_cast<int>(basis.size()) < d - 1; ++axis) {
    Vec u(d);
    u[axis] = 1.0;
    double un = u.dot(n) / n.dot(n);
    u -= un * n;
    for (const Vec& b : basis) u -= u.dot(b) * b;
    double nu = u.norm();
    if (nu > 1e-8) basis.push_back(u * (1.0 / nu));
  }
  if (static_cast<int>(basis.size()) != d - 1) return out;
  auto apply = [&](const Vec& v) {
    Vec mv = Ms.mul(v);
    double c = n.dot(mv) / nf;
    return mv - c * fs;
  };
  if (d == 2) {
    Vec s0 = apply(basis[0]);
    out.ev[0] = cplx(basis[0].dot(s0), 0.0);
  } else {
    Mat S(2, 2);
    for (int j = 0; j < 2; ++j) {
      Vec sj = apply(basis[j]);
      for (int i = 0; i < 2; ++i) S(i, j) = basis[i].dot(sj);
    }
    Eigs e;
    auto r = solve_quadratic(-(S(0, 0) + S(1, 1)), det2(S));
    out.ev[0] = r[0];
    out.ev[1] = r[1];
  }
  return out;
}

struct MonodromyReport {
  Mat M;
  Eigs multipliers;
  Eigs section;            // nontrivial multipliers
  double trivial_err = 0;
  double det_M = 0;
  double liouville = 0;    // exp of the trace integral on the same grid
  bool ok = false;
};

template <class P>
inline MonodromyReport monodromy(const SystemDef<P>& sys, const P& params,
                                 const CycleSolution& cyc, CycleOpts opts = {}) {
  MonodromyReport rep;
  auto fl = detail::flow_variational<P>(sys, params, cyc.anchor, cyc.period,
                                        cycle_grid_step(sys, opts));
  if (!fl.ok) return rep;
  rep.M = fl.monodromy;
  rep.multipliers = eigenvalues(fl.monodromy);
  rep.section = section_multipliers(sys, params, cyc.anchor, fl.monodromy,
                                    opts.phase_component);
  double best = 1e300;
  for (int i = 0; i < rep.multipliers.n; ++i) {
    double dist = std::abs(rep.multipliers.ev[i] - cplx(1.0, 0.0));
    if (dist < best) best = dist;
    }
  rep.trivial_err = best;
  rep.det_M = det_any(fl.monodromy);
  rep.liouville = std::exp(fl.trace_integral);
  rep.ok = true;
  return rep;
}

namespace detail {

template <class P>
inline void fill_cycle_quality(const SystemDef<P>& sys, const P& params,
                               CycleSolution& c, const FlowResult& fl,
                               int phase_component) {
  c.multipliers = eigenvalues(fl.monodromy);
  Eigs sec = section_multipliers(sys, params, c.anchor, fl.monodromy,
                                 phase_component);
  c.sec_mult_re = sec.ev[0].real();
  c.sec_mult_im = sec.ev[0].imag();
  if (sec.n == 2 && std::abs(sec.ev[1]) > std::abs(sec.ev[0])) {
    c.sec_mult_re = sec.ev[1].real();
    c.sec_mult_im = sec.ev[1].imag();
  }
  bool st = true;
  for (int i = 0; i < sec.n; ++i)
    if (std::abs(sec.ev[i]) >= 1.0) st = false;
  c.stable = st;
  double best = 1e300;
  for (int i = 0; i < c.multipliers.n; ++i)
    best = std::min(best, std::abs(c.multipliers.ev[i] - cplx(1.0, 0.0)));
  c.trivial_err = best;
  c.v_min = fl.v_min;
  c.v_max = fl.v_max;
}

}  // namespace detail

// Single-shooting Newton on (anchor, period) with the phase condition
// rhs[phase_component](anchor) = 0.
template <class P>
inline std::optional<CycleSolution> find_cycle(const SystemDef<P>& sys,
                                               const P& params, Vec anchor_guess,
                                               double period_guess,
                                               CycleOpts opts = {}) {
  int d = sys.dim;
  int pc = opts.phase_component;
  double Tscale = 20.0 * sys.time_scale;
  Vec x = anchor_guess;
  double T = period_guess;
  double gs = cycle_grid_step(sys, opts);
  for (int it = 0; it < opts.max_newton; ++it) {
    if (!(T > 1e-6 * sys.time_scale) || !(T < 1e7 * sys.time_scale))
      return std::nullopt;
    auto fl = detail::flow_variational<P>(sys, params, x, T, gs);
    if (!fl.ok) return std::nullopt;
    Vec fT = sys.eval_rhs(fl.x_end, params);
    Vec f0 = sys.eval_rhs(x, params);
    Mat J0 = sys.eval_jac(x, params);
    Vec F(d + 1);
    for (int i = 0; i < d; ++i)
      F[i] = (fl.x_end[i] - x[i]) / sys.state_scale[i];
    F[d] = f0[pc] * sys.time_scale / sys.state_scale[pc];
    double res = F.norm_inf();
    if (res <= opts.tol) {
      CycleSolution c;
      c.anchor = x;
      c.period = T;
      c.residual = res;
      detail::fill_cycle_quality(sys, params, c, fl, pc);
      return c;
    }
    Mat A(d + 1, d + 1);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j)
        A(i, j) = (fl.monodromy(i, j) - (i == j ? 1.0 : 0.0)) *
                  sys.state_scale[j] / sys.state_scale[i];
      A(i, d) = fT[i] * Tscale / sys.state_scale[i];
    }
    for (int j = 0; j < d; ++j)
      A(d, j) = J0(pc, j) * sys.time_scale * sys.state_scale[j] /
                sys.state_scale[pc];
    A(d, d) = 0.0;
    Lu lu = Lu::factor(A);
    if (!lu.ok) return std::nullopt;
    Vec du = lu.solve(F);
    for (int i = 0; i < d; ++i) x[i] -= du[i] * sys.state_scale[i];
    T -= du[d] * Tscale;
    if (!x.finite() || !std::isfinite(T)) return std::nullopt;
  }
  return std::nullopt;
}

// Anchor and period estimates from a simulated trajectory that the
// oscillation classifier judged periodic: a late local minimum of the first
// component plus the detected period.
template <class P>
inline std::optional<std::pair<Vec, double>> seed_cycle_from_simulation(
    const SystemDef<P>& sys, const P& params, Vec s0,
    std::optional<OscBudget> budget = {}) {
  OscBudget b = budget ? *budget : default_budget(sys);
  OscillationReport rep = classify_oscillation(sys, params, s0, b);
  if (rep.cls != OscClass::periodic) return std::nullopt;
  auto xe = rk4_advance(sys, params, s0, b.transient + b.observe, b.step);
  if (!xe) return std::nullopt;
  // walk one more period window and grab a V-minimum
  double h = std::min(b.step, rep.period / 64.0);
  int n = static_cast<int>(std::ceil(2.2 * rep.period / h));
  Vec prev2 = *xe;
  Vec prev1 = detail::rk4_step(sys, params, prev2, h);
  Vec cur = detail::rk4_step(sys, params, prev1, h);
  for (int i = 0; i < n; ++i) {
    if (prev1[0] < prev2[0] && prev1[0] <= cur[0])
      return std::make_pair(prev1, rep.period);
    prev2 = prev1;
    prev1 = cur;
    cur = detail::rk4_step(sys, params, cur, h);
    if (!cur.finite()) return std::nullopt;
  }
  return std::nullopt;
}

// ---- cycle branch continuation ----------------------------------------------

struct CycleBranch {
  std::string freed;
  std::vector<CycleSolution> points;
  std::vector<BifurcationEvent> events;
  std::string termination;  // period-blowup | amplitude-zero | param-limit |
                            // step-failure | max-points
  double termination_param = std::nan("");
};

struct CycleContOpts {
  CycleOpts shoot;
  double h0 = 0.02;
  double hmin = 1e-7;
  double hmax = 2.0;
  int grow_threshold = 3;
  int shrink_threshold = 8;
  int max_corrector = 10;
  int max_points = 6000;
  double T_max = 1000.0;            // in units of time scale: blow-up declare
  double T_illcond = 50.0;          // ill-conditioned shooting treated as blow-up
  double amp_tol = 1e-3;            // scaled amplitude => Hopf termination
  double snc_param_tol = 1e-6;      // SNC bisection |dparam| target
};

namespace detail {

template <class P>
struct CycContSpace {
  const SystemDef<P>* sys;
  P params;
  double P::* freed;
  double pscale = 1.0;
  double Tscale = 1.0;
  double grid = 0.01;
  int pc = 0;

  int d() const { return sys->dim; }
  int nu() const { return sys->dim + 2; }

  Vec pack(const Vec& x, double T, double p) const {
    Vec u(nu());
    for (int i = 0; i < d(); ++i) u[i] = x[i] / sys->state_scale[i];
    u[d()] = T / Tscale;
    u[d() + 1] = p / pscale;
    return u;
  }
  Vec unpack_x(const Vec& u) const {
    Vec x(d());
    for (int i = 0; i < d(); ++i) x[i] = u[i] * sys->state_scale[i];
    return x;
  }
  double unpack_T(const Vec& u) const { return u[d()] * Tscale; }
  double unpack_p(const Vec& u) const { return u[d() + 1] * pscale; }

  struct Eval {
    Vec F;      // d+1 rows (return map + phase)
    Mat Jrows;  // (d+1) x (d+2)
    FlowResult flow;
    bool ok = false;
  };

  Eval evaluate(const Vec& u) const {
    Eval e;
    Vec x = unpack_x(u);
    double T = unpack_T(u), p = unpack_p(u);
    if (!(T > 1e-8 * Tscale)) return e;
    P q = params;
    q.*freed = p;
    e.flow = flow_variational<P>(*sys, q, x, T, grid, freed);
    if (!e.flow.ok) return e;
    Vec fT = sys->eval_rhs(e.flow.x_end, q);
    Vec f0 = sys->eval_rhs(x, q);
    Mat J0 = sys->eval_jac(x, q);
    int n = d();
    e.F = Vec(n + 1);
    for (int i = 0; i < n; ++i)
      e.F[i] = (e.flow.x_end[i] - x[i]) / sys->state_scale[i];
    e.F[n] = f0[pc] * sys->time_scale / sys->state_scale[pc];
    e.Jrows = Mat(n + 1, n + 2);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j)
        e.Jrows(i, j) = (e.flow.monodromy(i, j) - (i == j ? 1.0 : 0.0)) *
                        sys->state_scale[j] / sys->state_scale[i];
      e.Jrows(i, n) = fT[i] * Tscale / sys->state_scale[i];
      e.Jrows(i, n + 1) = e.flow.dx_dp[i] * pscale / sys->state_scale[i];
    }
    for (int j = 0; j < n; ++j)
      e.Jrows(n, j) = J0(pc, j) * sys->time_scale * sys->state_scale[j] /
                      sys->state_scale[pc];
    e.Jrows(n, n) = 0.0;
    {
      double dp = 1e-7 * pscale;
      P qp = params, qm = params;
      qp.*freed = p + dp;
      qm.*freed = p - dp;
      Vec fp = sys->eval_rhs(x, qp), fm = sys->eval_rhs(x, qm);
      e.Jrows(n, n + 1) = (fp[pc] - fm[pc]) / (2.0 * dp) * sys->time_scale *
                          pscale / sys->state_scale[pc];
    }
    e.ok = true;
    return e;
  }

  bool correct(Vec& u, const Vec& t, const Vec& anchor, double tol,
               int max_iter, int* iters, FlowResult* last_flow) const {
    int n = nu();
    for (int it = 0; it < max_iter; ++it) {
      Eval e = evaluate(u);
      if (!e.ok) return false;
      double plane = t.dot(u - anchor);
      double res = std::max(e.F.norm_inf(), std::fabs(plane));
      if (iters) *iters = it;
      if (res <= tol) {
        if (last_flow) *last_flow = e.flow;
        return true;
      }
      Mat A(n, n);
      for (int i = 0; i < n - 1; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = e.Jrows(i, j);
      for (int j = 0; j < n; ++j) A(n - 1, j) = t[j];
      Lu lu = Lu::factor(A);
      if (!lu.ok) return false;
      Vec rhs(n);
      for (int i = 0; i < n - 1; ++i) rhs[i] = e.F[i];
      rhs[n - 1] = plane;
      Vec du = lu.solve(rhs);
      u -= du;
      if (!u.finite()) return false;
    }
    return false;
  }

  std::optional<Vec> tangent(const Vec& u, const Vec& t_prev,
                             const Eval* pre = nullptr) const {
    Eval tmp;
    const Eval* e = pre;
    if (!e) {
      tmp = evaluate(u);
      if (!tmp.ok) return std::nullopt;
      e = &tmp;
    }
    int n = nu();
    Mat A(n, n);
    for (int i = 0; i < n - 1; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = e->Jrows(i, j);
    for (int j = 0; j < n; ++j) A(n - 1, j) = t_prev[j];
    Lu lu = Lu::factor(A);
    if (!lu.ok) return std::nullopt;
    Vec rhs(n);
    rhs[n - 1] = 1.0;
    Vec t = lu.solve(rhs);
    double nt = t.norm();
    if (!(nt > 0) || !t.finite()) return std::nullopt;
    t *= 1.0 / nt;
    if (t.dot(t_prev) < 0) t *= -1.0;
    return t;
  }
};

}  // namespace detail

// Pseudo-arclength continuation of the shooting system in
// (anchor, period, parameter). Monitors the nontrivial multiplier for +1
// crossings (SNC) and terminates on period blow-up (homoclinic/SNIC
// approach), vanishing amplitude (Hopf), or parameter limits.
template <class P>
inline CycleBranch continue_cycle(const SystemDef<P>& sys, P params,
                                  std::string_view freed,
                                  const CycleSolution& start, int direction,
                                  double p_lo, double p_hi,
                                  CycleContOpts opts = {}) {
  detail::CycContSpace<P> sp;
  sp.sys = &sys;
  sp.params = params;
  sp.freed = nullptr;
  for (const auto& [k, m] : ParamTraits<P>::fields())
    if (k == freed) sp.freed = m;
  if (!sp.freed) throw std::invalid_argument("unknown parameter handle: " + std::string(freed));
  sp.pscale = param_scale(sys, freed);
  sp.Tscale = 20.0 * sys.time_scale;
  sp.grid = cycle_grid_step(sys, opts.shoot);
  sp.pc = opts.shoot.phase_component;

  CycleBranch br;
  br.freed = std::string(freed);
  double T_max = opts.T_max * sys.time_scale;
  double tol = opts.shoot.tol * 50.0;

  double p_start = start.param;
  if (std::isnan(p_start)) p_start = params.*(sp.freed);
  Vec u = sp.pack(start.anchor, start.period, p_start);
  Vec t_prev(sp.nu());
  t_prev[sp.d() + 1] = direction >= 0 ? 1.0 : -1.0;
  auto t0 = sp.tangent(u, t_prev);
  if (!t0) {
    br.termination = "step-failure";
    return br;
  }
  Vec t = *t0;

  auto record_point = [&](const Vec& uu, const FlowResult& fl) {
    CycleSolution c;
    c.anchor = sp.unpack_x(uu);
    c.period = sp.unpack_T(uu);
    c.param = sp.unpack_p(uu);
    P q = sp.params;
    q.*(sp.freed) = c.param;
    detail::fill_cycle_quality(sys, q, c, fl, sp.pc);
    br.points.push_back(c);
    return c;
  };
  {
    auto e0 = sp.evaluate(u);
    if (!e0.ok) {
      br.termination = "step-failure";
      return br;
    }
    record_point(u, e0.flow);
  }

  // SNC test function: leading real section multiplier minus one
  auto snc_fn = [&](const CycleSolution& c) {
    if (c.sec_mult_im != 0.0) return std::abs(cplx(c.sec_mult_re, c.sec_mult_im)) - 1.0;
    return c.sec_mult_re - 1.0;
  };

  double h = opts.h0;
  int stall_count = 0;
  for (int step = 0; step < opts.max_points; ++step) {
    Vec pred = u + h * t;
    Vec u_new = pred;
    int iters = 0;
    FlowResult fl;
    bool ok = sp.correct(u_new, t, pred, tol, opts.max_corrector, &iters, &fl);
    if (!ok) {
      h *= 0.5;
      if (h < opts.hmin) {
        const CycleSolution& last = br.points.back();
        if (last.period > opts.T_illcond * sys.time_scale) {
          // shooting ill-conditioning near a homoclinic: terminate as blow-up
          br.termination = "period-blowup";
          br.termination_param = last.param;
        } else {
          br.termination = "step-failure";
          br.termination_param = last.param;
        }
        return br;
      }
      continue;
    }

    CycleSolution prev = br.points.back();
    CycleSolution cand = record_point(u_new, fl);
    br.points.pop_back();  // re-push after event handling keeps order simple

    // SNC: nontrivial multiplier crossing +1
    double g0 = snc_fn(prev), g1 = snc_fn(cand);
    if (g0 * g1 < 0.0 && std::fabs(g0) < 0.8 && std::fabs(g1) < 0.8) {
      double lo = 0, hi = h;
      Vec u_ev = u_new;
      CycleSolution c_ev = cand;
      for (int it = 0; it < 60; ++it) {
        double pa = prev.param, pb = c_ev.param;
        if (std::fabs(pb - pa) <= opts.snc_param_tol * sp.pscale && it > 2) break;
        double mid = 0.5 * (lo + hi);
        Vec pm = u + mid * t;
        Vec um = pm;
        FlowResult flm;
        if (!sp.correct(um, t, pm, tol, opts.max_corrector, nullptr, &flm)) break;
        CycleSolution cm;
        cm.anchor = sp.unpack_x(um);
        cm.period = sp.unpack_T(um);
        cm.param = sp.unpack_p(um);
        P q = sp.params;
        q.*(sp.freed) = cm.param;
        detail::fill_cycle_quality(sys, q, cm, flm, sp.pc);
        if (g0 * snc_fn(cm) <= 0) {
          hi = mid;
          u_ev = um;
          c_ev = cm;
        } else {
          lo = mid;
          prev = cm;
        }
      }
      BifurcationEvent ev;
      ev.kind = EventKind::SNC;
      ev.param1 = c_ev.param;
      ev.state = c_ev.anchor;
      ev.diagnostics["period"] = c_ev.period;
      ev.diagnostics["multiplier"] = c_ev.sec_mult_re;
      ev.provenance = "cycle-branch[" + br.freed + "]";
      br.events.push_back(ev);
    }

    br.points.push_back(cand);
    u = u_new;
    auto tn = sp.tangent(u, t);
    if (tn) t = *tn;

    if (cand.param < p_lo || cand.param > p_hi) {
      br.termination = "param-limit";
      br.termination_param = cand.param;
      break;
    }
    if (cand.period > T_max) {
      br.termination = "period-blowup";
      br.termination_param = cand.param;
      break;
    }
    if (cand.v_max - cand.v_min < opts.amp_tol * sys.state_scale[0]) {
      br.termination = "amplitude-zero";
      br.termination_param = cand.param;
      break;
    }
    // parameter stall with a long and growing period: homoclinic approach
    int nb = static_cast<int>(br.points.size());
    if (nb > 6 && cand.period > opts.T_illcond * sys.time_scale) {
      double dp = std::fabs(br.points[nb - 1].param - br.points[nb - 6].param);
      if (dp < 1e-11 * sp.pscale)
        ++stall_count;
      else
        stall_count = 0;
      if (stall_count >= 3) {
        br.termination = "period-blowup";
        br.termination_param = cand.param;
        break;
      }
    }

    if (iters <= opts.grow_threshold)
      h = std::min(opts.hmax, h * 1.5);
    else if (iters >= opts.shrink_threshold)
      h = std::max(opts.hmin, h * 0.5);
    if (step + 1 == opts.max_points) {
      br.termination = "max-points";
      br.termination_param = cand.param;
    }
  }
  if (br.termination.empty() && !br.points.empty()) {
    br.termination = "max-points";
    br.termination_param = br.points.back().param;
  }
  return br;
}

// Classify a period-blow-up termination: SNIC when an equilibrium fold sits
// at the matching parameter, homoclinic-to-saddle otherwise. Records the
// saddle eigenvalues and the saddle quantity sigma.
template <class P>
inline BifurcationEvent detect_homoclinic_termination(
    const SystemDef<P>& sys, P params, std::string_view freed,
    const CycleBranch& branch, const std::vector<BifurcationEvent>& eq_events,
    CycleOpts shoot_opts = {}) {
  BifurcationEvent ev;
  ev.kind = EventKind::Blowup;
  ev.provenance = "cycle-branch[" + std::string(freed) + "]";
  if (branch.points.empty()) return ev;
  const CycleSolution& last = branch.points.back();
  ev.param1 = branch.termination_param;
  if (std::isnan(ev.param1)) ev.param1 = last.param;
  ev.state = last.anchor;

  P q = params;
  param_ref(q, freed) = ev.param1;

  // resample the terminal orbit and find the slowest point
  std::vector<Vec> samples;
  detail::flow_variational<P>(sys, q, last.anchor, last.period,
                              cycle_grid_step(sys, shoot_opts), nullptr,
                              &samples, 512);
  double best = 1e300;
  Vec slow = last.anchor;
  for (const Vec& s : samples) {
    double r = sys.scaled_residual(sys.eval_rhs(s, q));
    if (r < best) {
      best = r;
      slow = s;
    }
  }
  NewtonResult nr = newton_equilibrium(sys, q, slow);
  if (!nr.converged) return ev;  // unclassified blow-up
  double dist = 1e300;
  for (const Vec& s : samples)
    dist = std::min(dist, sys.scaled_distance(s, nr.state));
  Mat J = sys.eval_jac(nr.state, q);
  auto [eigs, stab] = classify_point(J);
  ev.diagnostics["saddle_distance"] = dist;
  for (int i = 0; i < eigs.n; ++i) {
    ev.diagnostics["saddle_re_eig" + std::to_string(i + 1)] = eigs.ev[i].real();
  }
  if (dist > 1e-3) return ev;

  double pscale = param_scale(sys, freed);
  for (const BifurcationEvent& fe : eq_events) {
    if (fe.kind != EventKind::SN) continue;
    if (std::fabs(fe.param1 - ev.param1) <= 1e-4 * pscale) {
      ev.kind = EventKind::SNIC;
      ev.diagnostics["fold_param"] = fe.param1;
      return ev;
    }
  }
  ev.kind = EventKind::HC;
  if (sys.dim == 2) {
    double lu = eigs.ev[1].real(), ls = eigs.ev[0].real();
    ev.diagnostics["sigma"] = lu + ls;
    ev.diagnostics["lambda_u"] = lu;
    ev.diagnostics["lambda_s"] = ls;
  } else {
    ev.diagnostics["sigma"] = J.trace();
  }
  return ev;
}

}  // namespace pacebif
