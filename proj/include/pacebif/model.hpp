#pragma once

// The three ODE systems: the full 3D pacemaker model, its 2D reduction with
// the calcium gate pinned at its upper bound, and the nondimensionalised 2D
// model. Right-hand sides and analytic Jacobians.

#include <functional>
#include <string>
#include <vector>

#include "pacebif/linalg.hpp"
#include "pacebif/params.hpp"

namespace pacebif {

// ---- auxiliary gating functions (dimensional) -----------------------------

inline double m_inf(double v, const DimensionalParams& p) {
  return 0.5 * (1.0 + std::tanh((v - p.v1) / p.v2));
}

inline double v3_of_ca(double ca, const DimensionalParams& p) {
  return -0.5 * p.v5 * std::tanh((ca - p.Ca3) / p.Ca4) + p.v6;
}

inline double n_inf_full(double v, double ca, const DimensionalParams& p) {
  return 0.5 * (1.0 + std::tanh((v - v3_of_ca(ca, p)) / p.v4));
}

inline double lambda_n_full(double v, double ca, const DimensionalParams& p) {
  return p.phi_n * std::cosh((v - v3_of_ca(ca, p)) / (2.0 * p.v4));
}

inline double rho(double ca, const DimensionalParams& p) {
  double s = p.Kd + ca;
  return s * s / (s * s + p.Kd * p.BT_buf);
}

// reduced-model gating (v3 pinned at v3*)
inline double n_inf_reduced(double v, const DimensionalParams& p) {
  return 0.5 * (1.0 + std::tanh((v - v3_star(p)) / p.v4));
}
inline double lambda_n_reduced(double v, const DimensionalParams& p) {
  return p.phi_n * std::cosh((v - v3_star(p)) / (2.0 * p.v4));
}

// ---- dimensionless gating --------------------------------------------------

inline double M_inf(double V, const DimlessParams& p) {
  return 0.5 * (1.0 + std::tanh((V - p.v1b) / p.v2b));
}
inline double N_inf(double V, const DimlessParams& p) {
  return 0.5 * (1.0 + std::tanh((V - p.v3b) / p.v4b));
}
inline double lambda_gain(double V, const DimlessParams& p) {
  return std::cosh((V - p.v3b) / (2.0 * p.v4b));
}

namespace detail {
inline double sech2(double x) {
  double c = std::cosh(x);
  return 1.0 / (c * c);
}
}  // namespace detail

// ---- right-hand sides ------------------------------------------------------

inline void rhs_full(const Vec& s, const DimensionalParams& p, Vec& out) {
  double v = s[0], n = s[1], ca = s[2];
  double m = m_inf(v, p);
  double ica = p.gCa * m * (v - p.vCa);
  out = Vec(3);
  out[0] = (-p.gL * (v - p.vL) - p.gK * n * (v - p.vK) - ica) / p.C;
  out[1] = lambda_n_full(v, ca, p) * (n_inf_full(v, ca, p) - n);
  out[2] = (-p.alpha * ica - p.kCa * ca) * rho(ca, p);
}

inline void jac_full(const Vec& s, const DimensionalParams& p, Mat& out) {
  double v = s[0], n = s[1], ca = s[2];
  double m = m_inf(v, p);
  double dm = detail::sech2((v - p.v1) / p.v2) / (2.0 * p.v2);
  double v3 = v3_of_ca(ca, p);
  double dv3 = -0.5 * p.v5 / p.Ca4 * detail::sech2((ca - p.Ca3) / p.Ca4);
  double xin = (v - v3) / p.v4;
  double ninf = 0.5 * (1.0 + std::tanh(xin));
  double dninf_dv = detail::sech2(xin) / (2.0 * p.v4);
  double dninf_dca = -dninf_dv * dv3;
  double xl = (v - v3) / (2.0 * p.v4);
  double lam = p.phi_n * std::cosh(xl);
  double dlam_dv = p.phi_n * std::sinh(xl) / (2.0 * p.v4);
  double dlam_dca = -dlam_dv * dv3;
  double r = rho(ca, p);
  double ssum = p.Kd + ca;
  double dr = 2.0 * ssum * p.Kd * p.BT_buf /
              ((ssum * ssum + p.Kd * p.BT_buf) * (ssum * ssum + p.Kd * p.BT_buf));
  double dica_dv = p.gCa * (dm * (v - p.vCa) + m);
  double ica = p.gCa * m * (v - p.vCa);

  out = Mat(3, 3);
  out(0, 0) = (-p.gL - p.gK * n - dica_dv) / p.C;
  out(0, 1) = -p.gK * (v - p.vK) / p.C;
  out(0, 2) = 0.0;
  out(1, 0) = dlam_dv * (ninf - n) + lam * dninf_dv;
  out(1, 1) = -lam;
  out(1, 2) = dlam_dca * (ninf - n) + lam * dninf_dca;
  out(2, 0) = -p.alpha * dica_dv * r;
  out(2, 1) = 0.0;
  out(2, 2) = -p.kCa * r + (-p.alpha * ica - p.kCa * ca) * dr;
}

inline void rhs_reduced(const Vec& s, const DimensionalParams& p, Vec& out) {
  double v = s[0], n = s[1];
  double m = m_inf(v, p);
  out = Vec(2);
  out[0] = (-p.gL * (v - p.vL) - p.gK * n * (v - p.vK) -
            p.gCa * m * (v - p.vCa)) / p.C;
  out[1] = lambda_n_reduced(v, p) * (n_inf_reduced(v, p) - n);
}

inline void jac_reduced(const Vec& s, const DimensionalParams& p, Mat& out) {
  double v = s[0], n = s[1];
  double m = m_inf(v, p);
  double dm = detail::sech2((v - p.v1) / p.v2) / (2.0 * p.v2);
  double v3s = v3_star(p);
  double xin = (v - v3s) / p.v4;
  double ninf = 0.5 * (1.0 + std::tanh(xin));
  double dninf = detail::sech2(xin) / (2.0 * p.v4);
  double xl = (v - v3s) / (2.0 * p.v4);
  double lam = p.phi_n * std::cosh(xl);
  double dlam = p.phi_n * std::sinh(xl) / (2.0 * p.v4);
  out = Mat(2, 2);
  out(0, 0) = (-p.gL - p.gK * n - p.gCa * (dm * (v - p.vCa) + m)) / p.C;
  out(0, 1) = -p.gK * (v - p.vK) / p.C;
  out(1, 0) = dlam * (ninf - n) + lam * dninf;
  out(1, 1) = -lam;
}

inline void rhs_dimless(const Vec& s, const DimlessParams& p, Vec& out) {
  double V = s[0], N = s[1];
  out = Vec(2);
  out[0] = -p.gLb * (V - p.vLb) - p.gKb * N * (V - p.vKb) -
           p.gCab * M_inf(V, p) * (V - 1.0);
  out[1] = p.psi * lambda_gain(V, p) * (N_inf(V, p) - N);
}

inline void jac_dimless(const Vec& s, const DimlessParams& p, Mat& out) {
  double V = s[0], N = s[1];
  double m = M_inf(V, p);
  double dm = detail::sech2((V - p.v1b) / p.v2b) / (2.0 * p.v2b);
  double xin = (V - p.v3b) / p.v4b;
  double ninf = 0.5 * (1.0 + std::tanh(xin));
  double dninf = detail::sech2(xin) / (2.0 * p.v4b);
  double xl = (V - p.v3b) / (2.0 * p.v4b);
  double lam = std::cosh(xl);
  double dlam = std::sinh(xl) / (2.0 * p.v4b);
  out = Mat(2, 2);
  out(0, 0) = -p.gLb - p.gKb * N - p.gCab * (dm * (V - 1.0) + m);
  out(0, 1) = -p.gKb * (V - p.vKb);
  out(1, 0) = p.psi * (dlam * (ninf - N) + lam * dninf);
  out(1, 1) = -p.psi * lam;
}

// ---- system definition -----------------------------------------------------

template <class P>
struct SystemDef {
  int dim = 0;
  std::string name;
  std::function<void(const Vec&, const P&, Vec&)> rhs;
  std::function<void(const Vec&, const P&, Mat&)> jacobian;
  Vec state_scale;            // per-component magnitudes, for scaled norms
  double time_scale = 1.0;    // characteristic time in this system's units
  std::vector<std::string> state_names;
  // physically admissible states; equilibrium searches discard the rest
  std::function<bool(const Vec&)> admissible = [](const Vec&) { return true; };

  Vec eval_rhs(const Vec& x, const P& p) const {
    Vec out;
    rhs(x, p, out);
    return out;
  }
  Mat eval_jac(const Vec& x, const P& p) const {
    Mat out;
    jacobian(x, p, out);
    return out;
  }
  // residual in dimensionless form: |f_i| * time_scale / state_scale_i
  double scaled_residual(const Vec& f) const {
    double m = 0.0;
    for (int i = 0; i < dim; ++i)
      m = std::max(m, std::fabs(f[i]) * time_scale / state_scale[i]);
    return m;
  }
  double scaled_distance(const Vec& a, const Vec& b) const {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) {
      double d = (a[i] - b[i]) / state_scale[i];
      s += d * d;
    }
    return std::sqrt(s);
  }
};

inline SystemDef<DimensionalParams> full_system() {
  SystemDef<DimensionalParams> s;
  s.dim = 3;
  s.name = "full";
  s.rhs = rhs_full;
  s.jacobian = jac_full;
  s.state_scale = Vec{100.0, 1.0, 500.0};
  s.time_scale = char_time(table1());
  s.state_names = {"v", "n", "Ca_i"};
  // rho vanishes on the plane Ca = -Kd, creating a nonphysical equilibrium
  // surface; keep searches on the physical side
  s.admissible = [](const Vec& x) { return x[2] >= 0.0; };
  return s;
}

inline SystemDef<DimensionalParams> reduced_system() {
  SystemDef<DimensionalParams> s;
  s.dim = 2;
  s.name = "reduced";
  s.rhs = rhs_reduced;
  s.jacobian = jac_reduced;
  s.state_scale = Vec{100.0, 1.0};
  s.time_scale = char_time(table1());
  s.state_names = {"v", "n"};
  return s;
}

inline SystemDef<DimlessParams> dimless_system() {
  SystemDef<DimlessParams> s;
  s.dim = 2;
  s.name = "dimless";
  s.rhs = rhs_dimless;
  s.jacobian = jac_dimless;
  s.state_scale = Vec{1.0, 1.0};
  s.time_scale = 1.0;
  s.state_names = {"V", "N"};
  return s;
}

// Natural parameter scale for continuation step control: voltage-like
// dimensional handles live on the vCa scale, everything else on 1.
template <class P>
inline double param_scale(const SystemDef<P>&, std::string_view) {
  return 1.0;
}

template <>
inline double param_scale(const SystemDef<DimensionalParams>& sys,
                          std::string_view handle) {
  (void)sys;
  if (handle == "v1" || handle == "v2" || handle == "v4" || handle == "v5" ||
      handle == "v6" || handle == "vL" || handle == "vK" || handle == "vCa")
    return 80.0;
  if (handle == "Ca3" || handle == "Ca4") return 500.0;
  return 1.0;
}

}  // namespace pacebif
