#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "wgdelay/errors.hpp"
#include "wgdelay/numerics.hpp"

namespace wg::oracles {

// 1D square well/barrier v(x) = -depth on |x| <= half_width, zero outside.
// Positive depth is attractive. Shares no code with the coupled-channel
// solver: everything below is the textbook closed form, written through the
// entire functions C(w) = cos(sqrt(w)), S(w) = sinc(sqrt(w)) of
// w = a^2 (k^2 + depth) so barriers (w < 0) and the w = 0 crossover need no
// branch handling.
struct SquareWell1D {
  double depth = 0.0;
  double half_width = 1.0;
};

struct WellAmplitudes {
  Complex r;       // reflection, incidence from the left
  Complex t;       // transmission
  double delta_even;
  double delta_odd;
};

namespace detail {

struct ParityFactors {
  Complex even;  // Z = k C + i a q^2 S
  Complex odd;   // Y = C + i k a S (interior momentum factored out)
};

inline ParityFactors parity_factors(const SquareWell1D& well, double k) {
  const double a = well.half_width;
  const double q2 = k * k + well.depth;
  const double w = a * a * q2;
  const double C = cos_sqrt(w);
  const double S = sinc_sqrt(w);
  return {Complex(k * C, a * q2 * S), Complex(C, k * a * S)};
}

}  // namespace detail

inline WellAmplitudes square_well_1d(const SquareWell1D& well, double k) {
  require(well.half_width > 0.0, ErrorCode::invalid_argument, "well half-width must be positive");
  require(k > 0.0, ErrorCode::threshold_proximity, "square well oracle needs k > 0");
  const double a = well.half_width;
  const auto [Z, Y] = detail::parity_factors(well, k);
  const Complex phase = std::exp(Complex(0.0, -2.0 * k * a));
  const Complex Se = phase * Z / std::conj(Z);
  const Complex So = phase * Y / std::conj(Y);
  WellAmplitudes out;
  out.t = 0.5 * (Se + So);
  out.r = 0.5 * (Se - So);
  out.delta_even = 0.5 * std::arg(Se);
  out.delta_odd = 0.5 * std::arg(So);
  return out;
}

// d(delta_even)/dk + d(delta_odd)/dk, from the analytic log-derivative of the
// parity factors.
inline double phase_derivative_sum_k(const SquareWell1D& well, double k) {
  require(k > 0.0, ErrorCode::threshold_proximity, "square well oracle needs k > 0");
  const double a = well.half_width;
  const double q2 = k * k + well.depth;
  const double w = a * a * q2;
  const double C = cos_sqrt(w);
  const double S = sinc_sqrt(w);
  const double G = cms_over_w(w);

  const Complex Z(k * C, a * q2 * S);
  const Complex dZ(C - a * a * k * k * S, a * k * (2.0 * S + w * G));
  const Complex Y(C, k * a * S);
  const Complex dY(-a * a * k * S, a * (S + a * a * k * k * G));

  const double de = -a + std::imag(dZ / Z);
  const double dq = -a + std::imag(dY / Y);
  return de + dq;
}

// 2 d(delta_bar)/dlambda with delta_bar = (delta_even + delta_odd)/2, as a
// function of the waveguide energy lambda in a channel with threshold nu.
// This equals the diagonal Eisenbud-Wigner entry of the decoupled channel.
inline double analytic_phase_delay(const SquareWell1D& well, double lambda, double nu) {
  require(lambda > nu, ErrorCode::threshold_proximity, "energy below channel threshold");
  const double k = std::sqrt(lambda - nu);
  return phase_derivative_sum_k(well, k) / (2.0 * k);
}

inline std::vector<double> analytic_phase_delay(const SquareWell1D& well,
                                                const std::vector<double>& lambda_grid,
                                                double nu) {
  std::vector<double> out;
  out.reserve(lambda_grid.size());
  for (double l : lambda_grid) out.push_back(analytic_phase_delay(well, l, nu));
  return out;
}

// Free sojourn time of a single-channel Gaussian packet inside |x| <= r,
// by dense adaptive quadrature of the closed-form dispersing density:
// position mean x0 + 2 xi0 t, variance sx^2 + 4 sxi^2 t^2, sx = 1/(2 sxi).
struct GaussianPacket1D {
  double xi0 = 1.0;      // center momentum
  double sigma_xi = 0.1; // momentum std deviation
  double x0 = 0.0;       // center position at t = 0
};

inline double free_gaussian_sojourn(const GaussianPacket1D& p, double r, double tol = 1e-10) {
  require(p.sigma_xi > 0.0, ErrorCode::invalid_argument, "packet momentum width must be positive");
  require(std::abs(p.xi0) > 6.0 * p.sigma_xi, ErrorCode::admissibility,
          "packet momentum support touches 0");
  require(r >= 0.0, ErrorCode::invalid_argument, "radius must be nonnegative");
  if (r == 0.0) return 0.0;

  const double sx = 1.0 / (2.0 * p.sigma_xi);
  auto inside = [&](double t) {
    const double mu = p.x0 + 2.0 * p.xi0 * t;
    const double sig = std::sqrt(sx * sx + 4.0 * p.sigma_xi * p.sigma_xi * t * t);
    const double inv = 1.0 / (std::sqrt(2.0) * sig);
    return 0.5 * (std::erf((r - mu) * inv) - std::erf((-r - mu) * inv));
  };

  // Central window, then doubling segments until the tails stop contributing.
  const double t_core = (r + std::abs(p.x0) + 8.0 * sx) / (2.0 * std::abs(p.xi0));
  double total = adaptive_simpson(inside, -t_core, t_core, tol);
  for (int side = 0; side < 2; ++side) {
    double lo = t_core, span = t_core;
    for (int it = 0; it < 60; ++it) {
      const double a = side == 0 ? lo : -(lo + span);
      const double b = side == 0 ? lo + span : -lo;
      const double piece = adaptive_simpson(inside, a, b, tol);
      total += piece;
      if (std::abs(piece) < tol * std::max(1.0, std::abs(total))) break;
      lo += span;
      span *= 2.0;
    }
  }
  return total;
}

}  // namespace wg::oracles
