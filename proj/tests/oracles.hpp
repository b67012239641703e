#pragma once

// Test-only oracles, independent of the continuation engine. The dimensionless
// model's equilibrium set is globally parameterizable by V because v1b enters
// the vector field only through M_inf; that yields closed-form slice diagrams
// to check branches, folds, Hopf points, and the codimension-two organizing
// centers against.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "pacebif/model.hpp"

namespace oracles {

using pacebif::DimlessParams;
using pacebif::Mat;
using pacebif::Vec;

// v1b value that makes V an equilibrium at the given slice; nullopt when no
// admissible M_inf exists.
inline std::optional<double> v1_of_equilibrium(double V, const DimlessParams& base) {
  double A = -base.gLb * (V - base.vLb) -
             base.gKb * pacebif::N_inf(V, base) * (V - base.vKb);
  double m = A / (base.gCab * (V - 1.0));
  if (!(m > 0.0 && m < 1.0)) return std::nullopt;
  return V - base.v2b * std::atanh(2.0 * m - 1.0);
}

inline double trace_at(double V, double v1, const DimlessParams& base) {
  DimlessParams q = base;
  q.v1b = v1;
  Mat J;
  pacebif::jac_dimless(Vec{V, pacebif::N_inf(V, q)}, q, J);
  return J.trace();
}

inline double det_at(double V, double v1, const DimlessParams& base) {
  DimlessParams q = base;
  q.v1b = v1;
  Mat J;
  pacebif::jac_dimless(Vec{V, pacebif::N_inf(V, q)}, q, J);
  return pacebif::det2(J);
}

struct SliceOracle {
  struct Fold {
    double v1, V;
  };
  struct Hopf {
    double v1, V;
  };
  std::vector<Fold> folds;
  std::vector<Hopf> hopfs;  // genuine Hopf points (det > 0)
};

// Scan the equilibrium curve over V, detecting v1-extrema (folds) and
// trace zero-crossings with positive determinant (Hopf points).
inline SliceOracle slice_oracle(const DimlessParams& base, double Vlo = -1.12,
                                double Vhi = 0.45, int n = 60001) {
  SliceOracle out;
  std::vector<std::pair<double, double>> pts;  // (V, v1)
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    double V = Vlo + (Vhi - Vlo) * i / (n - 1);
    auto p = v1_of_equilibrium(V, base);
    if (p) pts.emplace_back(V, *p);
  }
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    double d0 = pts[i].second - pts[i - 1].second;
    double d1 = pts[i + 1].second - pts[i].second;
    if (d0 * d1 < 0.0) {
      // refine the extremum of v1(V) by golden-section search
      double a = pts[i - 1].first, b = pts[i + 1].first;
      bool maximum = d0 > 0;
      const double gr = 0.6180339887498949;
      double c = b - gr * (b - a), d = a + gr * (b - a);
      for (int it = 0; it < 80; ++it) {
        auto fc = v1_of_equilibrium(c, base), fd = v1_of_equilibrium(d, base);
        double vc = fc ? *fc : (maximum ? -1e30 : 1e30);
        double vd = fd ? *fd : (maximum ? -1e30 : 1e30);
        bool keep_left = maximum ? (vc > vd) : (vc < vd);
        if (keep_left) {
          b = d;
        } else {
          a = c;
        }
        c = b - gr * (b - a);
        d = a + gr * (b - a);
      }
      double Vf = 0.5 * (a + b);
      out.folds.push_back({*v1_of_equilibrium(Vf, base), Vf});
    }
    double t0 = trace_at(pts[i - 1].first, pts[i - 1].second, base);
    double t1 = trace_at(pts[i].first, pts[i].second, base);
    if (t0 * t1 < 0.0) {
      double a = pts[i - 1].first, b = pts[i].first;
      for (int it = 0; it < 80; ++it) {
        double m = 0.5 * (a + b);
        auto pm = v1_of_equilibrium(m, base);
        if (!pm) break;
        double tm = trace_at(m, *pm, base);
        if (t0 * tm <= 0)
          b = m;
        else
          a = m;
      }
      double Vh = 0.5 * (a + b);
      double v1h = *v1_of_equilibrium(Vh, base);
      if (det_at(Vh, v1h, base) > 0.0) out.hopfs.push_back({v1h, Vh});
    }
  }
  return out;
}

// Newton on (f, f_V, trace) = 0 in (V, v1b, v3b): Bogdanov-Takens oracle.
// Newton on (f, f_V, f_VV) = 0: cusp oracle. Derivatives by central FD on the
// scalar reduced equation; independent of the library's bordered systems.
inline double scalar_f(double V, double v1, double v3, const DimlessParams& base) {
  DimlessParams q = base;
  q.v1b = v1;
  q.v3b = v3;
  return -q.gLb * (V - q.vLb) - q.gKb * pacebif::N_inf(V, q) * (V - q.vKb) -
         q.gCab * pacebif::M_inf(V, q) * (V - 1.0);
}

inline double scalar_fV(double V, double v1, double v3, const DimlessParams& b) {
  double h = 1e-6;
  return (scalar_f(V + h, v1, v3, b) - scalar_f(V - h, v1, v3, b)) / (2 * h);
}
inline double scalar_fVV(double V, double v1, double v3, const DimlessParams& b) {
  double h = 1e-4;
  return (scalar_f(V + h, v1, v3, b) - 2 * scalar_f(V, v1, v3, b) +
          scalar_f(V - h, v1, v3, b)) / (h * h);
}
inline double trace3(double V, double v1, double v3, const DimlessParams& base) {
  DimlessParams q = base;
  q.v1b = v1;
  q.v3b = v3;
  Mat J;
  pacebif::jac_dimless(Vec{V, pacebif::N_inf(V, q)}, q, J);
  return J.trace();
}

struct TripleRoot {
  double V, v1, v3;
  bool ok = false;
};

inline TripleRoot solve3(std::function<void(const double*, double*)> F,
                         double V0, double p0, double q0) {
  double x[3] = {V0, p0, q0};
  for (int it = 0; it < 80; ++it) {
    double f[3];
    F(x, f);
    double nrm = std::fabs(f[0]) + std::fabs(f[1]) + std::fabs(f[2]);
    if (nrm < 1e-12) {
      return {x[0], x[1], x[2], true};
    }
    double J[3][3];
    for (int j = 0; j < 3; ++j) {
      double h = 1e-7 * (1.0 + std::fabs(x[j]));
      double xp[3] = {x[0], x[1], x[2]}, xm[3] = {x[0], x[1], x[2]};
      xp[j] += h;
      xm[j] -= h;
      double fp[3], fm[3];
      F(xp, fp);
      F(xm, fm);
      for (int i = 0; i < 3; ++i) J[i][j] = (fp[i] - fm[i]) / (2 * h);
    }
    // 3x3 solve by Cramer
    double det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                 J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                 J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
    if (std::fabs(det) < 1e-300) break;
    auto solve_col = [&](int col) {
      double A[3][3];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) A[i][j] = (j == col) ? f[i] : J[i][j];
      return (A[0][0] * (A[1][1] * A[2][2] - A[1][2] * A[2][1]) -
              A[0][1] * (A[1][0] * A[2][2] - A[1][2] * A[2][0]) +
              A[0][2] * (A[1][0] * A[2][1] - A[1][1] * A[2][0])) / det;
    };
    double d0 = solve_col(0), d1 = solve_col(1), d2 = solve_col(2);
    x[0] -= d0;
    x[1] -= d1;
    x[2] -= d2;
  }
  return {x[0], x[1], x[2], false};
}

inline TripleRoot bt_oracle(const DimlessParams& base, double V0, double p0,
                            double q0) {
  return solve3(
      [&](const double* x, double* f) {
        f[0] = scalar_f(x[0], x[1], x[2], base);
        f[1] = scalar_fV(x[0], x[1], x[2], base);
        f[2] = trace3(x[0], x[1], x[2], base);
      },
      V0, p0, q0);
}

inline TripleRoot cusp_oracle(const DimlessParams& base, double V0, double p0,
                              double q0) {
  return solve3(
      [&](const double* x, double* f) {
        f[0] = scalar_f(x[0], x[1], x[2], base);
        f[1] = scalar_fV(x[0], x[1], x[2], base);
        f[2] = scalar_fVV(x[0], x[1], x[2], base);
      },
      V0, p0, q0);
}

}  // namespace oracles
