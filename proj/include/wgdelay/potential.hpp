#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "wgdelay/errors.hpp"
#include "wgdelay/numerics.hpp"
#include "wgdelay/transverse.hpp"

namespace wg {

// Longitudinal profile catalog. Everything here decays at least like
// <x>^-kappa with kappa > 4 (box: compact support, flagged kappa = inf).
struct LongitudinalProfile {
  enum class Kind { gaussian, box, sech2 };
  Kind kind = Kind::gaussian;
  double strength = 0.0;
  double width = 1.0;   // gaussian/sech2 scale; box half-width
  double center = 0.0;

  double operator()(double x) const {
    const double u = x - center;
    switch (kind) {
      case Kind::gaussian:
        return strength * std::exp(-u * u / (width * width));
      case Kind::box: {
        const double d = std::abs(u) - width;
        if (d < 0.0) return strength;
        if (d == 0.0) return 0.5 * strength;  // half-value at the jump
        return 0.0;
      }
      case Kind::sech2: {
        const double c = std::cosh(u / width);
        return strength / (c * c);
      }
    }
    return 0.0;
  }

  double decay_kappa() const {
    return kind == Kind::box ? std::numeric_limits<double>::infinity() : 1e300;
  }
  // Radius beyond which |v| < eps * |strength|.
  double support_radius(double eps) const {
    if (strength == 0.0) return 0.0;
    switch (kind) {
      case Kind::gaussian: return std::abs(center) + width * std::sqrt(-std::log(eps));
      case Kind::box:      return std::abs(center) + width;
      case Kind::sech2:    return std::abs(center) + 0.5 * width * std::log(4.0 / eps);
    }
    return 0.0;
  }
};

// Transverse profile catalog: constant or a Gaussian bump in the cross
// section (off-center bumps break parity and couple neighboring modes).
struct TransverseProfile {
  enum class Kind { constant, gaussian_bump };
  Kind kind = Kind::constant;
  double center = 0.0;
  double width = 1.0;

  double operator()(double y) const {
    if (kind == Kind::constant) return 1.0;
    const double u = (y - center) / width;
    return std::exp(-u * u);
  }
  bool is_constant() const { return kind == Kind::constant; }
  bool symmetric_about(double mid) const {
    return kind == Kind::constant || std::abs(center - mid) < 1e-14 * (1.0 + std::abs(mid));
  }
};

struct SeparableTerm {
  TransverseProfile transverse;
  LongitudinalProfile longitudinal;
};

// 2D samples U(y_i, x_j) on a tensor grid, interpolated bicubically.
struct GridSampledPotential {
  UniformGrid y_grid;
  UniformGrid x_grid;
  std::vector<std::vector<double>> values;  // values[i][j] = U(y_i, x_j)

  double eval(double y, double x) const;
};

inline double GridSampledPotential::eval(double y, double x) const {
  require(y_grid.covers(y), ErrorCode::out_of_domain, "grid potential: transverse point outside samples");
  require(x_grid.covers(x), ErrorCode::out_of_domain, "grid potential: longitudinal point outside samples");
  // Cubic in x for the four bracketing y-rows, then cubic in y.
  auto row_value = [&](std::size_t i) {
    const double u = (x - x_grid.lo) / x_grid.step;
    std::size_t j = std::min<std::size_t>(std::size_t(std::floor(u)), x_grid.n - 2);
    std::ptrdiff_t first = std::clamp<std::ptrdiff_t>(std::ptrdiff_t(j) - 1, 0,
                                                      std::ptrdiff_t(x_grid.n) - 4);
    double r = 0.0;
    for (int a = 0; a < 4; ++a) {
      double w = 1.0;
      for (int b = 0; b < 4; ++b) {
        if (a == b) continue;
        w *= (u - double(first + b)) / (double(first + a) - double(first + b));
      }
      r += values[i][std::size_t(first + a)] * w;
    }
    return r;
  };
  const double uy = (y - y_grid.lo) / y_grid.step;
  std::size_t i = std::min<std::size_t>(std::size_t(std::floor(uy)), y_grid.n - 2);
  std::ptrdiff_t first = std::clamp<std::ptrdiff_t>(std::ptrdiff_t(i) - 1, 0,
                                                    std::ptrdiff_t(y_grid.n) - 4);
  double r = 0.0;
  for (int a = 0; a < 4; ++a) {
    double w = 1.0;
    for (int b = 0; b < 4; ++b) {
      if (a == b) continue;
      w *= (uy - double(first + b)) / (double(first + a) - double(first + b));
    }
    r += row_value(std::size_t(first + a)) * w;
  }
  return r;
}

// Real multiplicative potential on the waveguide, in one of three shapes.
class PotentialSpec {
 public:
  static PotentialSpec separable(TransverseProfile u, LongitudinalProfile v) {
    PotentialSpec p;
    p.terms_.push_back({u, v});
    return p;
  }
  static PotentialSpec sum(std::vector<SeparableTerm> terms) {
    PotentialSpec p;
    p.terms_ = std::move(terms);
    return p;
  }
  static PotentialSpec sampled(GridSampledPotential g) {
    PotentialSpec p;
    p.grid_ = std::move(g);
    p.is_grid_ = true;
    return p;
  }
  static PotentialSpec zero() { return PotentialSpec{}; }

  bool is_grid() const { return is_grid_; }
  bool is_zero() const { return !is_grid_ && terms_.empty(); }
  const std::vector<SeparableTerm>& terms() const { return terms_; }
  const GridSampledPotential& grid() const { return grid_; }

  double eval(double y, double x) const {
    if (is_grid_) return grid_.eval(y, x);
    double v = 0.0;
    for (const auto& t : terms_) v += t.transverse(y) * t.longitudinal(x);
    return v;
  }

  // Radius beyond which every term has decayed below eps of its strength.
  double support_radius(double eps) const {
    if (is_grid_) return std::max(std::abs(grid_.x_grid.lo), std::abs(grid_.x_grid.hi()));
    double r = 0.0;
    for (const auto& t : terms_) r = std::max(r, t.longitudinal.support_radius(eps));
    return r;
  }

 private:
  std::vector<SeparableTerm> terms_;
  GridSampledPotential grid_;
  bool is_grid_ = false;
};

}  // namespace wg
