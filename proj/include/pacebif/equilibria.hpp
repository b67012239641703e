#pragma once

// Newton equilibrium solving, pseudo-arclength continuation of equilibrium
// branches in one freed parameter, eigenvalue stability classification, and
// localization of fold and Hopf points by test-function bisection.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pacebif/integrate.hpp"
#include "pacebif/model.hpp"

namespace pacebif {

enum class Stability {
  stable_node,
  stable_focus,
  saddle,
  unstable_node,
  unstable_focus,
  non_hyperbolic
};

inline const char* to_string(Stability s) {
  switch (s) {
    case Stability::stable_node: return "stable-node";
    case Stability::stable_focus: return "stable-focus";
    case Stability::saddle: return "saddle";
    case Stability::unstable_node: return "unstable-node";
    case Stability::unstable_focus: return "unstable-focus";
    default: return "non-hyperbolic";
  }
}

inline std::pair<Eigs, Stability> classify_point(const Mat& J) {
  Eigs e = eigenvalues(J);
  constexpr double tol = 1e-9;
  bool zero = false, pos = false, neg = false, cplx = false;
  for (int i = 0; i < e.n; ++i) {
    double re = e.ev[i].real();
    if (std::fabs(re) <= tol) zero = true;
    else if (re > 0) pos = true;
    else neg = true;
    if (std::fabs(e.ev[i].imag()) > tol) cplx = true;
  }
  Stability s;
  if (zero) s = Stability::non_hyperbolic;
  else if (pos && neg) s = Stability::saddle;
  else if (pos) s = cplx ? Stability::unstable_focus : Stability::unstable_node;
  else s = cplx ? Stability::stable_focus : Stability::stable_node;
  return {e, s};
}

inline double fold_testfn(const Mat& J) { return det_any(J); }

// 2D: trace. 3D: (l1+l2)(l1+l3)(l2+l3), the bialternate-sum determinant,
// which vanishes at a Hopf pair (and at neutral saddles, disambiguated at
// localization time).
inline double hopf_testfn(const Mat& J) {
  if (J.rows() == 2) return J.trace();
  double a = -J.trace();
  double b = (J(1, 1) * J(2, 2) - J(1, 2) * J(2, 1)) +
             (J(0, 0) * J(2, 2) - J(0, 2) * J(2, 0)) +
             (J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0));
  double c = -det3(J);
  return c - a * b;
}

// ---- Newton ----------------------------------------------------------------

struct NewtonResult {
  Vec state;
  bool converged = false;
  bool singular = false;
  int iterations = 0;
  double residual = 0.0;
};

template <class P>
inline double newton_tol(const SystemDef<P>& sys) {
  // scaled-residual tolerance: tighter for the dimensionless model
  return sys.time_scale == 1.0 ? 1e-12 : 1e-10;
}

template <class P>
inline NewtonResult newton_equilibrium(const SystemDef<P>& sys, const P& p,
                                       Vec guess, double tol = -1.0,
                                       int max_iter = 50) {
  if (tol < 0) tol = newton_tol(sys);
  NewtonResult r;
  r.state = guess;
  for (int it = 0; it < max_iter; ++it) {
    Vec f = sys.eval_rhs(r.state, p);
    r.residual = sys.scaled_residual(f);
    r.iterations = it;
    if (r.residual <= tol) {
      r.converged = true;
      return r;
    }
    Mat J = sys.eval_jac(r.state, p);
    Lu lu = Lu::factor(J);
    if (!lu.ok) {
      r.singular = true;
      return r;
    }
    Vec dx = lu.solve(f);
    r.state -= dx;
    if (!r.state.finite()) {
      r.singular = true;
      return r;
    }
  }
  Vec f = sys.eval_rhs(r.state, p);
  r.residual = sys.scaled_residual(f);
  r.converged = r.residual <= tol;
  r.iterations = max_iter;
  return r;
}

// Newton starts along the equilibrium manifold's natural parameterization.
inline std::vector<Vec> equilibrium_guesses(const SystemDef<DimlessParams>& sys,
                                            const DimlessParams& p, int n = 40) {
  (void)sys;
  std::vector<Vec> g;
  for (int i = 0; i < n; ++i) {
    double V = -1.3 + (0.5 + 1.3) * i / (n - 1);
    g.push_back(Vec{V, N_inf(V, p)});
  }
  return g;
}

inline std::vector<Vec> equilibrium_guesses(const SystemDef<DimensionalParams>& sys,
                                            const DimensionalParams& p, int n = 40) {
  std::vector<Vec> g;
  for (int i = 0; i < n; ++i) {
    double v = -104.0 + (40.0 + 104.0) * i / (n - 1);
    if (sys.dim == 2) {
      g.push_back(Vec{v, n_inf_reduced(v, p)});
    } else {
      double ca = -p.alpha * p.gCa * m_inf(v, p) * (v - p.vCa) / p.kCa;
      if (ca < 0) ca = 0;
      g.push_back(Vec{v, n_inf_full(v, ca, p), ca});
    }
  }
  return g;
}

// All distinct equilibria reached from the guess grid.
template <class P>
inline std::vector<Vec> find_equilibria(const SystemDef<P>& sys, const P& p,
                                        int n_guesses = 60) {
  std::vector<Vec> found;
  for (const Vec& g : equilibrium_guesses(sys, p, n_guesses)) {
    NewtonResult r = newton_equilibrium(sys, p, g);
    if (!r.converged) continue;
    if (!sys.admissible(r.state)) continue;
    bool dup = false;
    for (const Vec& x : found)
      if (sys.scaled_distance(x, r.state) < 1e-6) {
        dup = true;
        break;
      }
    if (!dup) found.push_back(r.state);
  }
  std::sort(found.begin(), found.end(),
            [](const Vec& a, const Vec& b) { return a[0] < b[0]; });
  return found;
}

// ---- events and branches -----------------------------------------------------

enum class EventKind { SN, HB, SNIC, SNC, HC, BT, CP, GH, NSH, RHom, Blowup };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::SN: return "SN";
    case EventKind::HB: return "HB";
    case EventKind::SNIC: return "SNIC";
    case EventKind::SNC: return "SNC";
    case EventKind::HC: return "HC";
    case EventKind::BT: return "BT";
    case EventKind::CP: return "CP";
    case EventKind::GH: return "GH";
    case EventKind::NSH: return "NSH";
    case EventKind::RHom: return "RHom";
    default: return "blowup";
  }
}

struct BifurcationEvent {
  EventKind kind = EventKind::SN;
  double param1 = 0.0;                    // freed parameter (or v1b for maps)
  double param2 = std::nan("");           // second parameter for codim-2
  Vec state;
  std::map<std::string, double> diagnostics;
  std::string provenance;
};

struct BranchPoint {
  double param = 0.0;
  Vec state;
  Eigs eigs;
  Stability stability = Stability::non_hyperbolic;
  double test_fold = 0.0;
  double test_hopf = 0.0;
  std::string event;  // kind tag at localized rows
};

struct EquilibriumBranch {
  std::string freed;
  std::vector<BranchPoint> points;
  std::vector<BifurcationEvent> events;
  bool truncated = false;
  std::string termination;
};

struct ContinuationOpts {
  double h0 = 1e-3;
  double hmin = 1e-6;
  double hmax = 1e-2;
  int grow_threshold = 3;   // corrector iterations
  int shrink_threshold = 8;
  int max_corrector = 12;
  int max_points = 40000;
  double event_param_tol = 1e-8;  // |dparam| bisection target, scaled units
  double state_box = 50.0;        // stop when scaled state leaves this box
};

namespace detail {

// Scaled view of the (state, parameter) continuation space.
template <class P>
struct EqContSpace {
  const SystemDef<P>* sys;
  P params;  // freed handle value is overwritten per evaluation
  double P::* freed = nullptr;
  double pscale = 1.0;

  int nx() const { return sys->dim; }
  int nu() const { return sys->dim + 1; }

  Vec pack(const Vec& x, double p) const {
    Vec u(nu());
    for (int i = 0; i < nx(); ++i) u[i] = x[i] / sys->state_scale[i];
    u[nx()] = p / pscale;
    return u;
  }
  Vec unpack_x(const Vec& u) const {
    Vec x(nx());
    for (int i = 0; i < nx(); ++i) x[i] = u[i] * sys->state_scale[i];
    return x;
  }
  double unpack_p(const Vec& u) const { return u[nx()] * pscale; }

  Vec residual(const Vec& u) const {
    P q = params;
    q.*freed = unpack_p(u);
    Vec f = sys->eval_rhs(unpack_x(u), q);
    Vec r(nx());
    for (int i = 0; i < nx(); ++i)
      r[i] = f[i] * sys->time_scale / sys->state_scale[i];
    return r;
  }

  // d residual / d u, analytic in state, central FD in the parameter
  Mat jacobian(const Vec& u) const {
    P q = params;
    double p = unpack_p(u);
    q.*freed = p;
    Vec x = unpack_x(u);
    Mat J = sys->eval_jac(x, q);
    Mat out(nx(), nu());
    for (int i = 0; i < nx(); ++i)
      for (int j = 0; j < nx(); ++j)
        out(i, j) = J(i, j) * sys->time_scale * sys->state_scale[j] /
                    sys->state_scale[i];
    double dp = 1e-7 * pscale;
    P qp = params, qm = params;
    qp.*freed = p + dp;
    qm.*freed = p - dp;
    Vec fp = sys->eval_rhs(x, qp), fm = sys->eval_rhs(x, qm);
    for (int i = 0; i < nx(); ++i)
      out(i, nx()) = (fp[i] - fm[i]) / (2.0 * dp) * sys->time_scale * pscale /
                     sys->state_scale[i];
    return out;
  }

  Mat state_jacobian(const Vec& u) const {
    P q = params;
    q.*freed = unpack_p(u);
    return sys->eval_jac(unpack_x(u), q);
  }
};

// Newton on [residual; g(u)] = 0 in the full (state, parameter) space:
// sharpens a bisected event to the test function's root.
template <class P, class G>
inline bool polish_codim1(const EqContSpace<P>& sp, Vec& u, G&& g, double tol) {
  int n = sp.nu();
  Vec u0 = u;
  for (int it = 0; it < 10; ++it) {
    Vec f = sp.residual(u);
    double gv = g(u);
    if (std::max(f.norm_inf(), std::fabs(gv)) <= tol) return true;
    Mat Jr = sp.jacobian(u);
    Mat A(n, n);
    for (int i = 0; i < n - 1; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = Jr(i, j);
    for (int j = 0; j < n; ++j) {
      double h = 1e-6;
      Vec up = u, um = u;
      up[j] += h;
      um[j] -= h;
      A(n - 1, j) = (g(up) - g(um)) / (2 * h);
    }
    Lu lu = Lu::factor(A);
    if (!lu.ok) return false;
    Vec rhs(n);
    for (int i = 0; i < n - 1; ++i) rhs[i] = f[i];
    rhs[n - 1] = gv;
    Vec du = lu.solve(rhs);
    u -= du;
    if (!u.finite() || (u - u0).norm() > 1e-2) {
      u = u0;  // refuse wild jumps; the bisected point stands
      return false;
    }
  }
  return false;
}

// Corrector: Newton on [residual; t.(u - u_anchor)] = 0.
template <class P>
inline bool eq_correct(const EqContSpace<P>& sp, Vec& u, const Vec& t,
                       const Vec& anchor, double tol, int max_iter, int* iters) {
  int n = sp.nu();
  for (int it = 0; it < max_iter; ++it) {
    Vec f = sp.residual(u);
    double plane = t.dot(u - anchor);
    double res = std::max(f.norm_inf(), std::fabs(plane));
    if (iters) *iters = it;
    if (res <= tol) return true;
    Mat Jr = sp.jacobian(u);
    Mat A(n, n);
    for (int i = 0; i < n - 1; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = Jr(i, j);
    for (int j = 0; j < n; ++j) A(n - 1, j) = t[j];
    Lu lu = Lu::factor(A);
    if (!lu.ok) return false;
    Vec rhs(n);
    for (int i = 0; i < n - 1; ++i) rhs[i] = f[i];
    rhs[n - 1] = plane;
    Vec du = lu.solve(rhs);
    u -= du;
    if (!u.finite()) return false;
  }
  Vec f = sp.residual(u);
  return std::max(f.norm_inf(), std::fabs(t.dot(u - anchor))) <= tol;
}

// Unit tangent of the solution curve oriented along t_prev.
template <class P>
inline std::optional<Vec> eq_tangent(const EqContSpace<P>& sp, const Vec& u,
                                     const Vec& t_prev) {
  int n = sp.nu();
  Mat Jr = sp.jacobian(u);
  Mat A(n, n);
  for (int i = 0; i < n - 1; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = Jr(i, j);
  for (int j = 0; j < n; ++j) A(n - 1, j) = t_prev[j];
  Lu lu = Lu::factor(A);
  if (!lu.ok) return std::nullopt;
  Vec e(n);
  e[n - 1] = 1.0;
  Vec t = lu.solve(e);
  double nt = t.norm();
  if (!(nt > 0) || !t.finite()) return std::nullopt;
  t *= 1.0 / nt;
  if (t.dot(t_prev) < 0) t *= -1.0;
  return t;
}

}  // namespace detail

// Pseudo-arclength continuation with tangent predictor and bordered Newton
// corrector. Monitors det J and the Hopf test function, bisecting each sign
// change. direction = +1 continues toward increasing parameter first.
template <class P>
inline EquilibriumBranch continue_equilibrium(
    const SystemDef<P>& sys, P params, std::string_view freed, Vec start,
    int direction, double p_lo, double p_hi, ContinuationOpts opts = {}) {
  detail::EqContSpace<P> sp;
  sp.sys = &sys;
  sp.params = params;
  for (const auto& [k, m] : ParamTraits<P>::fields())
    if (k == freed) sp.freed = m;
  if (!sp.freed) throw std::invalid_argument("unknown parameter handle: " + std::string(freed));
  sp.pscale = param_scale(sys, freed);

  EquilibriumBranch br;
  br.freed = std::string(freed);
  double tol = newton_tol(sys) * 10.0;

  double p0 = params.*(sp.freed);
  {
    NewtonResult nr = newton_equilibrium(sys, params, start);
    if (!nr.converged) {
      br.truncated = true;
      br.termination = "no-seed";
      return br;
    }
    start = nr.state;
    // degenerate start on a fold: nudge the freed parameter
    Mat J = sys.eval_jac(start, params);
    if (std::fabs(fold_testfn(J)) < 1e-10) {
      P q = params;
      q.*(sp.freed) = p0 + 1e-6 * sp.pscale;
      NewtonResult nr2 = newton_equilibrium(sys, q, start);
      if (nr2.converged) {
        p0 += 1e-6 * sp.pscale;
        start = nr2.state;
      }
    }
  }

  auto make_point = [&](const Vec& u) {
    BranchPoint bp;
    bp.param = sp.unpack_p(u);
    bp.state = sp.unpack_x(u);
    Mat J = sp.state_jacobian(u);
    auto [eigs, stab] = classify_point(J);
    bp.eigs = eigs;
    bp.stability = stab;
    bp.test_fold = fold_testfn(J);
    bp.test_hopf = hopf_testfn(J);
    return bp;
  };

  Vec u = sp.pack(start, p0);
  Vec t_prev(sp.nu());
  t_prev[sp.nx()] = direction >= 0 ? 1.0 : -1.0;
  auto t0 = detail::eq_tangent(sp, u, t_prev);
  if (!t0) {
    br.truncated = true;
    br.termination = "singular-at-start";
    return br;
  }
  Vec t = *t0;
  br.points.push_back(make_point(u));

  double h = opts.h0;
  int fails = 0;

  // localize a test-function zero between the current point and the predictor
  // offset s along tangent t_from, by bisection on the arclength offset
  auto localize = [&](const Vec& u_from, const Vec& t_from, double s_hi,
                      auto&& testfn) -> std::optional<Vec> {
    double lo = 0.0, hi = s_hi;
    Vec u_lo = u_from;
    double f_lo = testfn(u_lo);
    Vec u_hi_pt;
    {
      Vec pred = u_from + s_hi * t_from;
      u_hi_pt = pred;
      if (!detail::eq_correct(sp, u_hi_pt, t_from, pred, tol, opts.max_corrector,
                              nullptr))
        return std::nullopt;
    }
    for (int it = 0; it < 80; ++it) {
      double pa = sp.unpack_p(u_lo), pb = sp.unpack_p(u_hi_pt);
      if (std::fabs(pb - pa) <= opts.event_param_tol * sp.pscale && it > 0)
        break;
      double mid = 0.5 * (lo + hi);
      Vec pred = u_from + mid * t_from;
      Vec um = pred;
      if (!detail::eq_correct(sp, um, t_from, pred, tol, opts.max_corrector,
                              nullptr))
        return std::nullopt;
      if (f_lo * testfn(um) <= 0.0) {
        hi = mid;
        u_hi_pt = um;
      } else {
        lo = mid;
        u_lo = um;
        f_lo = testfn(um);
      }
    }
    return u_hi_pt;
  };

  auto fold_of = [&](const Vec& uu) { return fold_testfn(sp.state_jacobian(uu)); };
  auto hopf_of = [&](const Vec& uu) { return hopf_testfn(sp.state_jacobian(uu)); };

  auto emit_event = [&](Vec ue, bool fold_zero) {
    if (fold_zero)
      detail::polish_codim1(sp, ue, fold_of, 1e-13);
    else
      detail::polish_codim1(sp, ue, hopf_of, 1e-13);
    BranchPoint bp = make_point(ue);
    Mat J = sp.state_jacobian(ue);
    BifurcationEvent ev;
    ev.param1 = bp.param;
    ev.state = bp.state;
    ev.provenance = "equilibrium-branch[" + br.freed + "]";
    double dj = fold_testfn(J), hj = hopf_testfn(J);
    ev.diagnostics["det"] = dj;
    ev.diagnostics["hopf_testfn"] = hj;
    bool hopf_zero_too = false;
    if (fold_zero) {
      // simultaneous zeros escalate to codim-2 handling
      double hscale = std::fabs(br.points.back().test_hopf) + 1e-12;
      hopf_zero_too = std::fabs(hj) < 1e-6 * std::max(1.0, hscale);
      if (hopf_zero_too && sys.dim == 2) {
        ev.kind = EventKind::BT;
        for (int i = 0; i < bp.eigs.n; ++i)
          ev.diagnostics["re_eig" + std::to_string(i + 1)] = bp.eigs.ev[i].real();
      } else {
        ev.kind = EventKind::SN;
      }
    } else {
      // trace zero with det <= 0 is a neutral saddle, not a bifurcation
      if (sys.dim == 2) {
        if (det2(J) <= 0) return;
        ev.kind = EventKind::HB;
        ev.diagnostics["omega"] = std::sqrt(det2(J));
      } else {
        bool cplx = false;
        double om = 0;
        for (int i = 0; i < bp.eigs.n; ++i)
          if (std::fabs(bp.eigs.ev[i].imag()) > 1e-7) {
            cplx = true;
            om = std::fabs(bp.eigs.ev[i].imag());
          }
        if (!cplx) return;
        ev.kind = EventKind::HB;
        ev.diagnostics["omega"] = om;
      }
    }
    bp.event = to_string(ev.kind);
    br.points.push_back(bp);
    br.events.push_back(ev);
  };

  for (int step = 0; step < opts.max_points; ++step) {
    Vec pred = u + h * t;
    Vec u_new = pred;
    int iters = 0;
    bool ok = detail::eq_correct(sp, u_new, t, pred, tol, opts.max_corrector,
                                 &iters);
    if (ok) {
      // keep the branch from doubling back onto itself at corrector jumps
      Vec du = u_new - u;
      if (du.norm() > 10.0 * h) ok = false;
    }
    if (!ok) {
      h *= 0.5;
      if (h < opts.hmin) {
        br.truncated = true;
        br.termination = "step-failure";
        break;
      }
      ++fails;
      continue;
    }

    const BranchPoint& prev = br.points.back();
    BranchPoint cand = make_point(u_new);

    // parameter limits: land exactly on the boundary and stop
    if (cand.param < p_lo || cand.param > p_hi) {
      double plim = cand.param < p_lo ? p_lo : p_hi;
      P q = sp.params;
      q.*(sp.freed) = plim;
      NewtonResult nr = newton_equilibrium(sys, q, cand.state);
      if (nr.converged) {
        Vec ub = sp.pack(nr.state, plim);
        BranchPoint bp = make_point(ub);
        // localize any events between prev and the boundary point
        if (prev.test_fold * bp.test_fold < 0)
          if (auto ue = localize(u, t, h, fold_of)) emit_event(*ue, true);
        if (prev.test_hopf * bp.test_hopf < 0)
          if (auto ue = localize(u, t, h, hopf_of)) emit_event(*ue, false);
        br.points.push_back(bp);
      }
      br.termination = "param-limit";
      break;
    }

    if (prev.test_fold * cand.test_fold < 0) {
      if (auto ue = localize(u, t, h, fold_of)) emit_event(*ue, true);
    }
    if (prev.test_hopf * cand.test_hopf < 0) {
      if (auto ue = localize(u, t, h, hopf_of)) emit_event(*ue, false);
    }

    br.points.push_back(cand);
    auto tn = detail::eq_tangent(sp, u_new, t);
    if (!tn) {
      br.truncated = true;
      br.termination = "singular-tangent";
      break;
    }
    u = u_new;
    t = *tn;

    bool inside_box = true;
    for (int i = 0; i < sp.nx(); ++i)
      if (std::fabs(u[i]) > opts.state_box) inside_box = false;
    if (!inside_box) {
      br.termination = "state-escape";
      break;
    }

    if (iters <= opts.grow_threshold)
      h = std::min(opts.hmax, h * 1.5);
    else if (iters >= opts.shrink_threshold)
      h = std::max(opts.hmin, h * 0.5);
    if (step + 1 == opts.max_points) {
      br.truncated = true;
      br.termination = "max-points";
    }
  }
  return br;
}

}  // namespace pacebif
