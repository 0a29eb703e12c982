#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

#include "wgdelay/errors.hpp"

namespace wg {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Compensated (Kahan) accumulator. Accumulation order still matters at the
// 1e-16 level, so callers keep a fixed iteration order.
template <typename T>
class KahanSum {
 public:
  void add(T x) {
    T y = x - carry_;
    T t = sum_ + y;
    carry_ = (t - sum_) - y;
    sum_ = t;
  }
  T value() const { return sum_; }

 private:
  T sum_{};
  T carry_{};
};

// Uniform grid descriptor: x_i = lo + i*step, i = 0..n-1.
struct UniformGrid {
  double lo = 0.0;
  double step = 0.0;
  std::size_t n = 0;

  double hi() const { return lo + step * double(n - 1); }
  double at(std::size_t i) const { return lo + step * double(i); }
  bool covers(double x) const { return x >= lo - 1e-12 * step && x <= hi() + 1e-12 * step; }

  static UniformGrid over(double lo, double hi, std::size_t n) {
    require(n >= 2 && hi > lo, ErrorCode::invalid_argument, "uniform grid needs n >= 2 and hi > lo");
    return {lo, (hi - lo) / double(n - 1), n};
  }
};

// Composite Simpson on uniformly sampled values. Odd panel counts fall back
// to Simpson on the leading even part plus a 3/8 rule on the last three
// panels, so any n >= 4 is fine.
template <typename T>
T simpson(const std::vector<T>& f, double h) {
  const std::size_t n = f.size();
  require(n >= 3, ErrorCode::invalid_argument, "simpson needs at least 3 samples");
  const std::size_t panels = n - 1;
  std::size_t even_end = panels;          // samples 0..even_end integrated by Simpson
  bool tail38 = false;
  if (panels % 2 != 0) {
    require(n >= 4, ErrorCode::invalid_argument, "simpson with odd panels needs >= 4 samples");
    even_end = panels - 3;
    tail38 = true;
  }
  KahanSum<T> acc;
  if (even_end > 0) {
    acc.add(f[0]);
    for (std::size_t i = 1; i < even_end; ++i) acc.add(f[i] * ((i % 2) ? 4.0 : 2.0));
    acc.add(f[even_end]);
  }
  T result = acc.value() * (h / 3.0);
  if (tail38) {
    const std::size_t i = even_end;
    result += (f[i] + f[i + 1] * 3.0 + f[i + 2] * 3.0 + f[i + 3]) * (3.0 * h / 8.0);
  }
  return result;
}

// Adaptive Simpson for smooth scalar integrands.
namespace detail {
inline double adaptive_simpson_impl(const std::function<double(double)>& f, double a, double b,
                                    double fa, double fm, double fb, double whole, double tol,
                                    int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson_impl(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_impl(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-10, int max_depth = 48) {
  if (a == b) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::adaptive_simpson_impl(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
struct GaussLegendre {
  std::vector<double> x;
  std::vector<double> w;

  explicit GaussLegendre(int n) {
    require(n >= 1, ErrorCode::invalid_argument, "Gauss-Legendre order must be >= 1");
    x.resize(n);
    w.resize(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
      double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
      double pp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = 0.0;
        for (int j = 0; j < n; ++j) {
          const double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
        }
        pp = n * (z * p0 - p1) / (z * z - 1.0);
        const double dz = p0 / pp;
        z -= dz;
        if (std::abs(dz) < 1e-15) break;
      }
      x[i] = -z;
      x[n - 1 - i] = z;
      w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
      w[n - 1 - i] = w[i];
    }
  }

  // Integrate f over [a, b].
  template <typename F>
  double integrate(F&& f, double a, double b) const {
    const double c = 0.5 * (b - a), d = 0.5 * (b + a);
    KahanSum<double> acc;
    for (std::size_t i = 0; i < x.size(); ++i) acc.add(w[i] * f(c * x[i] + d));
    return c * acc.value();
  }
};

// Local Lagrange interpolation of order `points` (4 = cubic, 6 = quintic) on
// a uniform grid. Exact at the nodes; values outside the grid are zero.
template <typename T>
class LagrangeInterp {
 public:
  LagrangeInterp() = default;
  LagrangeInterp(UniformGrid grid, std::vector<T> values, int points = 4)
      : g_(grid), v_(std::move(values)), p_(points) {
    require(v_.size() == g_.n, ErrorCode::invalid_argument, "interp: values/grid size mismatch");
    require(p_ == 4 || p_ == 6, ErrorCode::invalid_argument, "interp: points must be 4 or 6");
    require(g_.n >= std::size_t(p_), ErrorCode::invalid_argument, "interp: too few samples");
  }

  bool valid() const { return !v_.empty(); }
  const UniformGrid& grid() const { return g_; }

  T operator()(double x) const {
    if (x < g_.lo || x > g_.hi()) return T{};
    const double u = (x - g_.lo) / g_.step;
    std::size_t j = std::size_t(std::floor(u));
    if (j >= g_.n - 1) j = g_.n - 2;
    // Node hit: pass samples through untouched.
    if (std::abs(u - double(j)) < 1e-9) return v_[j];
    if (std::abs(u - double(j + 1)) < 1e-9) return v_[j + 1];
    const int half = p_ / 2;
    std::ptrdiff_t first = std::ptrdiff_t(j) - (half - 1);
    first = std::clamp<std::ptrdiff_t>(first, 0, std::ptrdiff_t(g_.n) - p_);
    T result{};
    for (int a = 0; a < p_; ++a) {
      double w = 1.0;
      const double xa = double(first + a);
      for (int b = 0; b < p_; ++b) {
        if (a == b) continue;
        w *= (u - double(first + b)) / (xa - double(first + b));
      }
      result += v_[std::size_t(first + a)] * w;
    }
    return result;
  }

 private:
  UniformGrid g_;
  std::vector<T> v_;
  int p_ = 4;
};

// d/dx of uniformly sampled values, central stencils of order 2 or 4 with
// one-sided closures of matching order at the ends.
template <typename T>
std::vector<T> derivative_uniform(const std::vector<T>& f, double h, int order = 2) {
  const std::size_t n = f.size();
  require(order == 2 || order == 4, ErrorCode::invalid_argument, "stencil order must be 2 or 4");
  require(n >= (order == 2 ? std::size_t(3) : std::size_t(6)), ErrorCode::stencil,
          "too few samples for derivative stencil");
  std::vector<T> d(n);
  if (order == 2) {
    d[0] = (f[0] * -3.0 + f[1] * 4.0 - f[2]) / (2.0 * h);
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    d[n - 1] = (f[n - 1] * 3.0 - f[n - 2] * 4.0 + f[n - 3]) / (2.0 * h);
  } else {
    auto at = [&](std::size_t i) { return f[i]; };
    d[0] = (at(0) * -25.0 + at(1) * 48.0 - at(2) * 36.0 + at(3) * 16.0 - at(4) * 3.0) / (12.0 * h);
    d[1] = (at(0) * -3.0 - at(1) * 10.0 + at(2) * 18.0 - at(3) * 6.0 + at(4)) / (12.0 * h);
    for (std::size_t i = 2; i + 2 < n; ++i)
      d[i] = (at(i - 2) - at(i - 1) * 8.0 + at(i + 1) * 8.0 - at(i + 2)) / (12.0 * h);
    d[n - 2] =
        (at(n - 1) * 3.0 + at(n - 2) * 10.0 - at(n - 3) * 18.0 + at(n - 4) * 6.0 - at(n - 5)) /
        (12.0 * h);
    d[n - 1] = (at(n - 1) * 25.0 - at(n - 2) * 48.0 + at(n - 3) * 36.0 - at(n - 4) * 16.0 +
                at(n - 5) * 3.0) /
               (12.0 * h);
  }
  return d;
}

// Entire functions C(w) = cos(sqrt(w)), S(w) = sin(sqrt(w))/sqrt(w) and
// G(w) = (C - S)/w of w = u^2, valid for either sign of w. These drive the
// constant-coefficient slice propagator and the square-well closed forms
// without branch cuts at channel openings.
inline double cos_sqrt(double w) {
  if (std::abs(w) < 1e-8) return 1.0 - w / 2.0 + w * w / 24.0;
  return w > 0 ? std::cos(std::sqrt(w)) : std::cosh(std::sqrt(-w));
}
inline double sinc_sqrt(double w) {
  if (std::abs(w) < 1e-8) return 1.0 - w / 6.0 + w * w / 120.0;
  if (w > 0) {
    const double u = std::sqrt(w);
    return std::sin(u) / u;
  }
  const double y = std::sqrt(-w);
  return std::sinh(y) / y;
}
inline double cms_over_w(double w) {
  if (std::abs(w) < 1e-6) return -1.0 / 3.0 + w / 30.0 - w * w / 840.0;
  return (cos_sqrt(w) - sinc_sqrt(w)) / w;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace wg
