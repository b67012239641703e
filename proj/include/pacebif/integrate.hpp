#pragma once

// Fixed-step RK4 integration, transient trimming, oscillation classification,
// channel-block experiments, and brute-force parameter sweeps.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pacebif/model.hpp"

namespace pacebif {

struct Trajectory {
  double step = 0.0;
  std::vector<double> times;
  std::vector<Vec> states;
  bool blew_up = false;
  double blowup_time = 0.0;
};

namespace detail {

template <class P>
inline Vec rk4_step(const SystemDef<P>& sys, const P& p, const Vec& x,
                    double h) {
  Vec k1 = sys.eval_rhs(x, p);
  Vec k2 = sys.eval_rhs(x + 0.5 * h * k1, p);
  Vec k3 = sys.eval_rhs(x + 0.5 * h * k2, p);
  Vec k4 = sys.eval_rhs(x + h * k3, p);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

// Classical RK4 at fixed step; the last step is shortened to land exactly on
// t_end. Aborts on non-finite state and reports the blow-up time.
template <class P>
inline Trajectory rk4_integrate(const SystemDef<P>& sys, const P& p, Vec s0,
                                double t0, double t_end, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("rk4_integrate: step must be > 0");
  if (!std::isfinite(t0) || !std::isfinite(t_end) || t_end < t0)
    throw std::invalid_argument("rk4_integrate: bad time span");
  Trajectory tr;
  tr.step = step;
  double t = t0;
  Vec x = s0;
  tr.times.push_back(t);
  tr.states.push_back(x);
  while (t < t_end - 1e-12 * std::max(1.0, std::fabs(t_end))) {
    double h = std::min(step, t_end - t);
    x = detail::rk4_step(sys, p, x, h);
    t += h;
    if (!x.finite()) {
      tr.blew_up = true;
      tr.blowup_time = t;
      return tr;
    }
    tr.times.push_back(t);
    tr.states.push_back(x);
  }
  return tr;
}

// Advance without storing the path. Returns nullopt on blow-up.
template <class P>
inline std::optional<Vec> rk4_advance(const SystemDef<P>& sys, const P& p,
                                      Vec x, double duration, double step) {
  double t = 0.0;
  while (t < duration - 1e-12 * std::max(1.0, duration)) {
    double h = std::min(step, duration - t);
    x = detail::rk4_step(sys, p, x, h);
    t += h;
    if (!x.finite()) return std::nullopt;
  }
  return x;
}

enum class OscClass { quiescent, periodic, undecided };

inline const char* to_string(OscClass c) {
  switch (c) {
    case OscClass::quiescent: return "quiescent";
    case OscClass::periodic: return "periodic";
    default: return "undecided";
  }
}

struct OscBudget {
  double transient = 500.0;
  double observe = 500.0;
  double step = 0.05;
};

template <class P>
inline OscBudget default_budget(const SystemDef<P>& sys) {
  OscBudget b;
  b.transient = 500.0 * sys.time_scale;
  b.observe = 500.0 * sys.time_scale;
  b.step = 0.05;  // the step is taken in each system's own time variable
  return b;
}

struct OscillationReport {
  OscClass cls = OscClass::undecided;
  double period = 0.0;   // valid when periodic
  double v_min = 0.0;
  double v_max = 0.0;
  bool blew_up = false;
};

// Discards the transient window, then detects periodicity from upward
// crossings of the first state component through its post-transient midrange.
// Periodic needs >= 5 crossings with interval CV < 1%; quiescent needs the
// amplitude below 1e-6 of the state scale.
template <class P>
inline OscillationReport classify_oscillation(const SystemDef<P>& sys, const P& p,
                                              Vec s0, OscBudget b) {
  OscillationReport rep;
  auto xe = rk4_advance(sys, p, s0, b.transient, b.step);
  if (!xe) {
    rep.blew_up = true;
    return rep;
  }
  int nsteps = static_cast<int>(std::ceil(b.observe / b.step));
  std::vector<double> v;
  v.reserve(nsteps + 1);
  Vec x = *xe;
  v.push_back(x[0]);
  for (int i = 0; i < nsteps; ++i) {
    x = detail::rk4_step(sys, p, x, b.step);
    if (!x.finite()) {
      rep.blew_up = true;
      return rep;
    }
    v.push_back(x[0]);
  }
  double vmin = v[0], vmax = v[0];
  for (double y : v) {
    vmin = std::min(vmin, y);
    vmax = std::max(vmax, y);
  }
  rep.v_min = vmin;
  rep.v_max = vmax;
  if (vmax - vmin < 1e-6 * sys.state_scale[0]) {
    rep.cls = OscClass::quiescent;
    return rep;
  }
  double mid = 0.5 * (vmin + vmax);
  std::vector<double> tcross;
  for (std::size_t i = 0; i + 1 < v.size(); ++i)
    if (v[i] < mid && v[i + 1] >= mid)
      tcross.push_back((static_cast<double>(i) + (mid - v[i]) / (v[i + 1] - v[i])) * b.step);
  if (tcross.size() >= 5) {
    double sum = 0, sum2 = 0;
    std::size_t m = tcross.size() - 1;
    for (std::size_t i = 0; i < m; ++i) sum += tcross[i + 1] - tcross[i];
    double mean = sum / m;
    for (std::size_t i = 0; i < m; ++i) {
      double d = tcross[i + 1] - tcross[i] - mean;
      sum2 += d * d;
    }
    double cv = std::sqrt(sum2 / m) / mean;
    if (cv < 0.01) {
      rep.cls = OscClass::periodic;
      rep.period = mean;
      return rep;
    }
  }
  rep.cls = OscClass::undecided;
  return rep;
}

// ---- channel block ---------------------------------------------------------

enum class Conductance { gL, gCa, gK };

inline const char* to_string(Conductance c) {
  switch (c) {
    case Conductance::gL: return "gL";
    case Conductance::gCa: return "gCa";
    default: return "gK";
  }
}

inline OscillationReport channel_block(Conductance which, DimensionalParams p,
                                       Vec s0 = Vec{0.0, 0.0, 0.0},
                                       std::optional<OscBudget> budget = {}) {
  switch (which) {
    case Conductance::gL: p.gL = 0.0; break;
    case Conductance::gCa: p.gCa = 0.0; break;
    case Conductance::gK: p.gK = 0.0; break;
  }
  auto sys = full_system();
  OscBudget b = budget ? *budget : default_budget(sys);
  return classify_oscillation(sys, p, s0, b);
}

// ---- parameter sweeps -------------------------------------------------------

enum class SeedPolicy { fixed, carry_final_state };

template <class P>
struct SweepSample {
  double param = 0.0;
  OscillationReport report;
};

// Brute-force classification over an inclusive parameter range. With the
// carry_final_state policy samples run sequentially and each sample starts
// from the previous endpoint (traces hysteresis); with the fixed policy the
// samples are independent and may run on several threads.
template <class P>
inline std::vector<SweepSample<P>> sweep(const SystemDef<P>& sys, P params,
                                         std::string_view handle, double lo,
                                         double hi, int samples, Vec s0,
                                         SeedPolicy policy,
                                         std::optional<OscBudget> budget = {},
                                         int jobs = 1) {
  if (samples < 2) throw std::invalid_argument("sweep: samples must be >= 2");
  OscBudget b = budget ? *budget : default_budget(sys);
  std::vector<SweepSample<P>> out(samples);
  auto value_at = [&](int i) {
    return lo + (hi - lo) * static_cast<double>(i) / (samples - 1);
  };
  if (policy == SeedPolicy::carry_final_state) {
    Vec x = s0;
    for (int i = 0; i < samples; ++i) {
      P q = params;
      param_ref(q, handle) = value_at(i);
      out[i].param = value_at(i);
      out[i].report = classify_oscillation(sys, q, x, b);
      auto xe = rk4_advance(sys, q, x, b.transient + b.observe, b.step);
      if (xe) x = *xe;  // on blow-up keep the previous seed
    }
    return out;
  }
  auto work = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      P q = params;
      param_ref(q, handle) = value_at(i);
      out[i].param = value_at(i);
      out[i].report = classify_oscillation(sys, q, s0, b);
    }
  };
  int nthreads = std::max(1, std::min(jobs, samples));
  if (nthreads == 1) {
    work(0, samples);
  } else {
    std::vector<std::thread> ts;
    int chunk = (samples + nthreads - 1) / nthreads;
    for (int t = 0; t < nthreads; ++t) {
      int b0 = t * chunk, b1 = std::min(samples, b0 + chunk);
      if (b0 < b1) ts.emplace_back(work, b0, b1);
    }
    for (auto& t : ts) t.join();
  }
  return out;
}

}  // namespace pacebif
