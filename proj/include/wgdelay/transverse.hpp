#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "wgdelay/errors.hpp"
#include "wgdelay/numerics.hpp"

namespace wg {

// Dirichlet modes of the cross-section (0, L): thresholds nu_a = (a*pi/L)^2
// and eigenfunctions chi_a(y) = sqrt(2/L) sin(a*pi*y/L), a = 1..mode_count.
class TransverseBasis {
 public:
  TransverseBasis(double width, int mode_count) : width_(width), modes_(mode_count) {
    require(width > 0.0, ErrorCode::invalid_argument, "waveguide width must be positive");
    require(mode_count >= 1, ErrorCode::invalid_argument, "mode count must be >= 1");
    thresholds_.reserve(mode_count);
    for (int a = 1; a <= mode_count; ++a) {
      const double k = double(a) * kPi / width_;
      thresholds_.push_back(k * k);
    }
  }

  double width() const { return width_; }
  int mode_count() const { return modes_; }

  // 1-based channel index.
  double threshold(int alpha) const {
    require(alpha >= 1 && alpha <= modes_, ErrorCode::invalid_argument, "channel index out of range");
    return thresholds_[std::size_t(alpha - 1)];
  }
  const std::vector<double>& thresholds() const { return thresholds_; }

  double eigenfunction(int alpha, double y) const {
    require(alpha >= 1 && alpha <= modes_, ErrorCode::invalid_argument, "channel index out of range");
    return std::sqrt(2.0 / width_) * std::sin(double(alpha) * kPi * y / width_);
  }

  // Default half-width of the excluded neighborhood around each threshold.
  double threshold_window() const { return 1e-3 * thresholds_.front(); }

 private:
  double width_;
  int modes_;
  std::vector<double> thresholds_;
};

inline TransverseBasis build_transverse_basis(double width, int mode_count) {
  return TransverseBasis(width, mode_count);
}

// Open-channel bookkeeping at a fixed energy: channel list, on-shell momenta,
// and the (a,-),(a,+) slot layout the scattering matrices act on.
struct FiberBasis {
  double lambda = 0.0;
  std::vector<int> channels;   // open channels, ascending
  std::vector<double> momenta; // k_a = sqrt(lambda - nu_a)

  int dim() const { return 2 * int(channels.size()); }

  int channel_index(int alpha) const {
    for (std::size_t i = 0; i < channels.size(); ++i)
      if (channels[i] == alpha) return int(i);
    return -1;
  }

  // dir = -1 or +1; slots ordered [(a1,-),(a1,+),(a2,-),(a2,+),...].
  int slot(int alpha, int dir) const {
    const int ci = channel_index(alpha);
    require(ci >= 0, ErrorCode::invalid_argument, "channel not open at this energy");
    return 2 * ci + (dir > 0 ? 1 : 0);
  }

  bool same_channels(const FiberBasis& other) const { return channels == other.channels; }
};

inline void check_away_from_thresholds(double lambda, const TransverseBasis& basis,
                                       double window) {
  for (int a = 1; a <= basis.mode_count(); ++a) {
    if (std::abs(lambda - basis.threshold(a)) < window)
      fail(ErrorCode::threshold_proximity,
           "energy " + std::to_string(lambda) + " within excluded window of threshold " +
               std::to_string(basis.threshold(a)));
  }
}

// N(lambda) = {a : nu_a <= lambda} plus on-shell momenta. Energies inside a
// threshold window are rejected; everything downstream assumes this.
inline FiberBasis open_channels(double lambda, const TransverseBasis& basis,
                                double window = -1.0) {
  if (window < 0.0) window = basis.threshold_window();
  require(lambda > basis.threshold(1), ErrorCode::invalid_argument,
          "energy must lie above the first threshold");
  check_away_from_thresholds(lambda, basis, window);
  FiberBasis fb;
  fb.lambda = lambda;
  for (int a = 1; a <= basis.mode_count(); ++a) {
    const double nu = basis.threshold(a);
    if (nu <= lambda) {
      fb.channels.push_back(a);
      fb.momenta.push_back(std::sqrt(lambda - nu));
    }
  }
  return fb;
}

// Largest threshold interval (nu_j, nu_j+1) (or (nu_max, +inf)) containing
// lambda. Used to keep sweeps and packets inside one fiber-dimension window.
struct ThresholdInterval {
  double lo = 0.0;
  double hi = 0.0;  // +inf encoded as infinity()
  bool contains(double lambda) const { return lambda > lo && lambda < hi; }
};

inline ThresholdInterval threshold_interval(double lambda, const TransverseBasis& basis) {
  require(lambda > basis.threshold(1), ErrorCode::invalid_argument,
          "energy must lie above the first threshold");
  ThresholdInterval iv{basis.threshold(1), std::numeric_limits<double>::infinity()};
  for (int a = 1; a <= basis.mode_count(); ++a) {
    const double nu = basis.threshold(a);
    if (nu <= lambda) iv.lo = nu;
    else {
      iv.hi = nu;
      break;
    }
  }
  return iv;
}

}  // namespace wg
