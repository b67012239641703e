#pragma once

// Small fixed-capacity dense vectors/matrices and the closed-form eigenvalue
// solvers used throughout the toolkit. Problem sizes here are tiny (state
// dimension 2 or 3, bordered continuation systems up to 7), so everything
// lives on the stack.

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>

namespace pacebif {

inline constexpr int kMaxDim = 16;

class Vec {
 public:
  Vec() : n_(0) {}
  explicit Vec(int n, double fill = 0.0) : n_(n) {
    assert(n >= 0 && n <= kMaxDim);
    d_.fill(0.0);
    for (int i = 0; i < n_; ++i) d_[i] = fill;
  }
  Vec(std::initializer_list<double> xs) : n_(static_cast<int>(xs.size())) {
    assert(n_ <= kMaxDim);
    d_.fill(0.0);
    int i = 0;
    for (double x : xs) d_[i++] = x;
  }

  int size() const { return n_; }
  double& operator[](int i) { return d_[i]; }
  double operator[](int i) const { return d_[i]; }
  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }

  Vec& operator+=(const Vec& o) {
    for (int i = 0; i < n_; ++i) d_[i] += o.d_[i];
    return *this;
  }
  Vec& operator-=(const Vec& o) {
    for (int i = 0; i < n_; ++i) d_[i] -= o.d_[i];
    return *this;
  }
  Vec& operator*=(double s) {
    for (int i = 0; i < n_; ++i) d_[i] *= s;
    return *this;
  }

  friend Vec operator+(Vec a, const Vec& b) { return a += b; }
  friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
  friend Vec operator*(double s, Vec a) { return a *= s; }
  friend Vec operator*(Vec a, double s) { return a *= s; }

  double dot(const Vec& o) const {
    double s = 0;
    for (int i = 0; i < n_; ++i) s += d_[i] * o.d_[i];
    return s;
  }
  double norm() const { return std::sqrt(dot(*this)); }
  double norm_inf() const {
    double m = 0;
    for (int i = 0; i < n_; ++i) m = std::max(m, std::fabs(d_[i]));
    return m;
  }
  bool finite() const {
    for (int i = 0; i < n_; ++i)
      if (!std::isfinite(d_[i])) return false;
    return true;
  }
  Vec head(int k) const {
    Vec r(k);
    for (int i = 0; i < k; ++i) r[i] = d_[i];
    return r;
  }

 private:
  std::array<double, kMaxDim> d_;
  int n_;
};

class Mat {
 public:
  Mat() : r_(0), c_(0) {}
  Mat(int r, int c) : r_(r), c_(c) {
    assert(r >= 0 && r <= kMaxDim && c >= 0 && c <= kMaxDim);
    d_.fill(0.0);
  }
  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return r_; }
  int cols() const { return c_; }
  double& operator()(int i, int j) { return d_[i * kMaxDim + j]; }
  double operator()(int i, int j) const { return d_[i * kMaxDim + j]; }

  Vec mul(const Vec& x) const {
    Vec y(r_);
    for (int i = 0; i < r_; ++i) {
      double s = 0;
      for (int j = 0; j < c_; ++j) s += (*this)(i, j) * x[j];
      y[i] = s;
    }
    return y;
  }
  Mat mul(const Mat& b) const {
    Mat y(r_, b.c_);
    for (int i = 0; i < r_; ++i)
      for (int k = 0; k < c_; ++k) {
        double a = (*this)(i, k);
        if (a == 0.0) continue;
        for (int j = 0; j < b.c_; ++j) y(i, j) += a * b(k, j);
      }
    return y;
  }
  double trace() const {
    double s = 0;
    for (int i = 0; i < std::min(r_, c_); ++i) s += (*this)(i, i);
    return s;
  }
  bool finite() const {
    for (int i = 0; i < r_; ++i)
      for (int j = 0; j < c_; ++j)
        if (!std::isfinite((*this)(i, j))) return false;
    return true;
  }

 private:
  std::array<double, kMaxDim * kMaxDim> d_;
  int r_, c_;
};

// In-place LU with partial pivoting; returns false when numerically singular.
struct Lu {
  Mat lu;
  std::array<int, kMaxDim> piv{};
  int n = 0;
  int sign = 1;
  bool ok = false;

  static Lu factor(Mat a) {
    Lu f;
    f.n = a.rows();
    f.sign = 1;
    f.ok = true;
    for (int i = 0; i < f.n; ++i) f.piv[i] = i;
    for (int k = 0; k < f.n; ++k) {
      int p = k;
      double best = std::fabs(a(k, k));
      for (int i = k + 1; i < f.n; ++i)
        if (std::fabs(a(i, k)) > best) {
          best = std::fabs(a(i, k));
          p = i;
        }
      if (best == 0.0 || !std::isfinite(best)) {
        f.ok = false;
        f.lu = a;
        return f;
      }
      if (p != k) {
        for (int j = 0; j < f.n; ++j) std::swap(a(k, j), a(p, j));
        std::swap(f.piv[k], f.piv[p]);
        f.sign = -f.sign;
      }
      for (int i = k + 1; i < f.n; ++i) {
        a(i, k) /= a(k, k);
        double m = a(i, k);
        for (int j = k + 1; j < f.n; ++j) a(i, j) -= m * a(k, j);
      }
    }
    f.lu = a;
    return f;
  }

  Vec solve(const Vec& b) const {
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = b[piv[i]];
    for (int i = 1; i < n; ++i)
      for (int j = 0; j < i; ++j) x[i] -= lu(i, j) * x[j];
    for (int i = n - 1; i >= 0; --i) {
      for (int j = i + 1; j < n; ++j) x[i] -= lu(i, j) * x[j];
      x[i] /= lu(i, i);
    }
    return x;
  }

  double det() const {
    if (!ok) return 0.0;
    double d = sign;
    for (int i = 0; i < n; ++i) d *= lu(i, i);
    return d;
  }
};

inline double det2(const Mat& m) { return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0); }

inline double det3(const Mat& m) {
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
         m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

inline double det_any(const Mat& m) {
  if (m.rows() == 2) return det2(m);
  if (m.rows() == 3) return det3(m);
  return Lu::factor(m).det();
}

using cplx = std::complex<double>;

struct Eigs {
  int n = 0;
  std::array<cplx, 3> ev{};
};

// Roots of x^2 + b x + c, numerically stable real form.
inline std::array<cplx, 2> solve_quadratic(double b, double c) {
  double disc = b * b - 4.0 * c;
  if (disc >= 0.0) {
    double sq = std::sqrt(disc);
    double q = -0.5 * (b + (b >= 0 ? sq : -sq));
    double r0 = q;
    double r1 = (q != 0.0) ? c / q : -b - q;
    return {cplx(r0, 0), cplx(r1, 0)};
  }
  double re = -0.5 * b, im = 0.5 * std::sqrt(-disc);
  return {cplx(re, im), cplx(re, -im)};
}

// Roots of x^3 + a x^2 + b x + c (Cardano / trigonometric), with a Newton
// polish pass on each root.
inline std::array<cplx, 3> solve_cubic(double a, double b, double c) {
  double p = b - a * a / 3.0;
  double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  std::array<cplx, 3> t;
  double disc = 0.25 * q * q + p * p * p / 27.0;
  if (disc > 0.0) {
    double sq = std::sqrt(disc);
    double u3 = -0.5 * q + sq;
    double v3 = -0.5 * q - sq;
    double u = std::cbrt(u3);
    double v = std::cbrt(v3);
    t[0] = cplx(u + v, 0.0);
    double re = -0.5 * (u + v);
    double im = 0.5 * std::sqrt(3.0) * (u - v);
    t[1] = cplx(re, im);
    t[2] = cplx(re, -im);
  } else if (p == 0.0 && q == 0.0) {
    t[0] = t[1] = t[2] = cplx(0, 0);
  } else {
    double m = 2.0 * std::sqrt(-p / 3.0);
    double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
    double th = std::acos(arg) / 3.0;
    constexpr double twopi3 = 2.0943951023931953;
    t[0] = cplx(m * std::cos(th), 0);
    t[1] = cplx(m * std::cos(th - twopi3), 0);
    t[2] = cplx(m * std::cos(th - 2 * twopi3), 0);
  }
  std::array<cplx, 3> r;
  for (int i = 0; i < 3; ++i) {
    cplx x = t[i] - a / 3.0;
    for (int it = 0; it < 3; ++it) {  // polish
      cplx f = ((x + a) * x + b) * x + c;
      cplx df = (3.0 * x + 2.0 * a) * x + b;
      if (std::abs(df) == 0.0) break;
      x -= f / df;
    }
    r[i] = x;
  }
  // a conjugate pair may have drifted; re-symmetrize
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (std::abs(r[i] - std::conj(r[j])) <
          1e-9 * (1.0 + std::abs(r[i])) && r[i].imag() != 0.0) {
        cplx m = 0.5 * (r[i] + std::conj(r[j]));
        r[i] = m;
        r[j] = std::conj(m);
      }
  return r;
}

// Eigenvalues of a 2x2 or 3x3 matrix via its characteristic polynomial.
inline Eigs eigenvalues(const Mat& m) {
  Eigs e;
  e.n = m.rows();
  if (e.n == 2) {
    double tr = m(0, 0) + m(1, 1);
    double de = det2(m);
    auto r = solve_quadratic(-tr, de);
    e.ev[0] = r[0];
    e.ev[1] = r[1];
  } else if (e.n == 3) {
    double tr = m.trace();
    double m00 = m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
    double m11 = m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0);
    double m22 = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    double sum2 = m00 + m11 + m22;
    double de = det3(m);
    auto r = solve_cubic(-tr, sum2, -de);
    for (int i = 0; i < 3; ++i) e.ev[i] = r[i];
  } else {
    throw std::invalid_argument("eigenvalues: dimension must be 2 or 3");
  }
  std::sort(e.ev.begin(), e.ev.begin() + e.n,
            [](const cplx& a, const cplx& b) {
              if (a.real() != b.real()) return a.real() < b.real();
              return a.imag() < b.imag();
            });
  return e;
}

// Real eigenvector for a real eigenvalue of a small matrix, by inverse
// iteration with a shifted, regularized LU.
inline Vec real_eigenvector(const Mat& m, double lambda) {
  int n = m.rows();
  Mat a = m;
  double scale = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) scale = std::max(scale, std::fabs(a(i, j)));
  double shift = lambda + 1e-10 * (scale + 1.0);
  for (int i = 0; i < n; ++i) a(i, i) -= shift;
  Lu f = Lu::factor(a);
  Vec v(n, 1.0);
  v[0] = 1.3;  // break symmetry
  if (n > 1) v[1] = 0.7;
  for (int it = 0; it < 8; ++it) {
    if (!f.ok) break;
    Vec w = f.solve(v);
    double nw = w.norm();
    if (!(nw > 0) || !w.finite()) break;
    v = w * (1.0 / nw);
  }
  return v;
}

}  // namespace pacebif
