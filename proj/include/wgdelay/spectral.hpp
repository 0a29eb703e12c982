#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "wgdelay/errors.hpp"
#include "wgdelay/numerics.hpp"
#include "wgdelay/smatrix.hpp"
#include "wgdelay/transverse.hpp"

namespace wg {

// One packet component: channel index plus a momentum-space profile.
// Analytic profiles stay analytic through free evolution (a phase exponent),
// so the spectral side never pays interpolation error for catalog packets.
struct PacketComponent {
  enum class Profile { gaussian, bump };

  int channel = 1;
  double nu = 0.0;          // channel threshold
  Complex weight = 1.0;
  Profile profile = Profile::gaussian;
  double xi0 = 1.0;         // momentum center
  double width = 0.1;       // gaussian: momentum std dev; bump: support half-width
  double x0 = 0.0;          // position offset at t = 0
  double evolved_time = 0.0;

  static double bump_norm_constant() {
    static const double c = [] {
      const double i0 = adaptive_simpson(
          [](double u) { return std::exp(-2.0 / (1.0 - u * u)); }, -1.0 + 1e-14, 1.0 - 1e-14,
          1e-14);
      return 1.0 / std::sqrt(i0);
    }();
    return c;
  }

  // Unit-norm profile value at xi (excluding weight and phases).
  double profile_value(double xi) const {
    const double u = (xi - xi0) / width;
    switch (profile) {
      case Profile::gaussian:
        return std::pow(2.0 * kPi * width * width, -0.25) * std::exp(-u * u / 4.0);
      case Profile::bump: {
        if (std::abs(u) >= 1.0) return 0.0;
        return bump_norm_constant() / std::sqrt(width) * std::exp(-1.0 / (1.0 - u * u));
      }
    }
    return 0.0;
  }

  Complex amplitude(double xi) const {
    const double p = profile_value(xi);
    if (p == 0.0) return {};
    const double phase = -xi * x0 - evolved_time * (xi * xi + nu);
    return weight * p * std::exp(Complex(0.0, phase));
  }

  // Momentum support where |g| >= ~1e-12 of peak.
  std::pair<double, double> support() const {
    if (profile == Profile::bump) return {xi0 - width, xi0 + width};
    const double cut = width * std::sqrt(4.0 * std::log(1e12));
    return {xi0 - cut, xi0 + cut};
  }
};

// State phi = sum_a chi_a (x) g_a in momentum representation: either a list
// of analytic components or per-channel samples on a shared uniform xi grid.
class ChannelWavepacket {
 public:
  ChannelWavepacket() = default;

  static ChannelWavepacket analytic(std::vector<PacketComponent> comps) {
    ChannelWavepacket p;
    for (auto& c : comps) {
      for (const auto& other : p.comps_)
        require(other.channel != c.channel, ErrorCode::invalid_argument,
                "duplicate channel in analytic packet");
      p.comps_.push_back(c);
    }
    return p;
  }

  static ChannelWavepacket sampled(UniformGrid xi_grid,
                                   std::map<int, std::vector<Complex>> channel_samples,
                                   std::map<int, double> channel_nu) {
    ChannelWavepacket p;
    p.sampled_ = true;
    p.xi_grid_ = xi_grid;
    for (auto& [ch, vals] : channel_samples) {
      require(vals.size() == xi_grid.n, ErrorCode::invalid_argument,
              "sampled packet: grid/values mismatch");
      p.samples_[ch] = LagrangeInterp<Complex>(xi_grid, vals, 6);
      p.raw_[ch] = std::move(vals);
      p.nus_[ch] = channel_nu.at(ch);
    }
    return p;
  }

  bool is_sampled() const { return sampled_; }

  std::vector<int> channels() const {
    std::vector<int> ch;
    if (sampled_) {
      for (const auto& [c, _] : raw_) ch.push_back(c);
    } else {
      for (const auto& c : comps_) ch.push_back(c.channel);
      std::sort(ch.begin(), ch.end());
    }
    return ch;
  }

  double channel_nu(int ch) const {
    if (sampled_) return nus_.at(ch);
    for (const auto& c : comps_)
      if (c.channel == ch) return c.nu;
    fail(ErrorCode::invalid_argument, "channel not present in packet");
  }

  Complex amplitude(int ch, double xi) const {
    if (sampled_) {
      auto it = samples_.find(ch);
      return it == samples_.end() ? Complex{} : it->second(xi);
    }
    Complex a{};
    for (const auto& c : comps_)
      if (c.channel == ch) a += c.amplitude(xi);
    return a;
  }

  // ||phi||^2. Analytic components have unit-norm profiles.
  double norm2() const {
    if (!sampled_) {
      double n = 0.0;
      for (const auto& c : comps_) n += std::norm(c.weight);
      return n;
    }
    double n = 0.0;
    for (const auto& [ch, vals] : raw_) {
      std::vector<double> f(vals.size());
      for (std::size_t i = 0; i < vals.size(); ++i) f[i] = std::norm(vals[i]);
      n += simpson(f, xi_grid_.step);
    }
    return n;
  }

  // Union of per-channel momentum supports (|g| above ~1e-12 of peak).
  std::pair<double, double> momentum_support(int ch) const {
    if (!sampled_) {
      double lo = 1e300, hi = -1e300;
      for (const auto& c : comps_)
        if (c.channel == ch) {
          auto [a, b] = c.support();
          lo = std::min(lo, a);
          hi = std::max(hi, b);
        }
      require(lo <= hi, ErrorCode::invalid_argument, "channel not present in packet");
      return {lo, hi};
    }
    const auto& vals = raw_.at(ch);
    double peak = 0.0;
    for (const auto& v : vals) peak = std::max(peak, std::abs(v));
    require(peak > 0.0, ErrorCode::invalid_argument, "empty channel samples");
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (std::abs(vals[i]) >= 1e-12 * peak) {
        lo = std::min(lo, xi_grid_.at(i));
        hi = std::max(hi, xi_grid_.at(i));
      }
    }
    return {lo, hi};
  }

  // Energy support [nu + min xi^2, nu + max xi^2] over all channels.
  std::pair<double, double> energy_support() const {
    double lo = 1e300, hi = -1e300;
    for (int ch : channels()) {
      const auto [a, b] = momentum_support(ch);
      const double nu = channel_nu(ch);
      double minabs;
      if (a <= 0.0 && b >= 0.0) minabs = 0.0;
      else minabs = std::min(std::abs(a), std::abs(b));
      const double maxabs = std::max(std::abs(a), std::abs(b));
      lo = std::min(lo, nu + minabs * minabs);
      hi = std::max(hi, nu + maxabs * maxabs);
    }
    return {lo, hi};
  }

  const std::vector<PacketComponent>& components() const { return comps_; }
  const UniformGrid& xi_grid() const { return xi_grid_; }
  const std::vector<Complex>& raw_samples(int ch) const { return raw_.at(ch); }

  ChannelWavepacket with_global_phase(double theta) const {
    ChannelWavepacket p = *this;
    const Complex ph = std::exp(Complex(0.0, theta));
    for (auto& c : p.comps_) c.weight *= ph;
    for (auto& [ch, vals] : p.raw_) {
      for (auto& v : vals) v *= ph;
      p.samples_[ch] = LagrangeInterp<Complex>(p.xi_grid_, vals, 6);
    }
    return p;
  }

 private:
  std::vector<PacketComponent> comps_;
  bool sampled_ = false;
  UniformGrid xi_grid_;
  std::map<int, std::vector<Complex>> raw_;
  std::map<int, LagrangeInterp<Complex>> samples_;
  std::map<int, double> nus_;
};

// Exact free evolution: multiply each channel by exp(-i t (xi^2 + nu)).
inline ChannelWavepacket free_evolve(const ChannelWavepacket& phi, double t) {
  if (!phi.is_sampled()) {
    std::vector<PacketComponent> comps = phi.components();
    for (auto& c : comps) c.evolved_time += t;
    return ChannelWavepacket::analytic(std::move(comps));
  }
  std::map<int, std::vector<Complex>> samples;
  std::map<int, double> nus;
  const UniformGrid grid = phi.xi_grid();
  for (int ch : phi.channels()) {
    const double nu = phi.channel_nu(ch);
    nus[ch] = nu;
    std::vector<Complex> vals = phi.raw_samples(ch);
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double xi = grid.at(i);
      vals[i] *= std::exp(Complex(0.0, -t * (xi * xi + nu)));
    }
    samples[ch] = std::move(vals);
  }
  return ChannelWavepacket::sampled(grid, std::move(samples), std::move(nus));
}

// Admissibility of a packet relative to a basis and an energy window:
// momentum support away from 0, energy support inside [lo, hi] and clear of
// every threshold window.
inline void validate_packet(const ChannelWavepacket& phi, const TransverseBasis& basis,
                            double window_lo, double window_hi, double threshold_window = -1.0) {
  if (threshold_window < 0.0) threshold_window = basis.threshold_window();
  for (int ch : phi.channels()) {
    require(ch >= 1 && ch <= basis.mode_count(), ErrorCode::invalid_argument,
            "packet channel outside basis");
    const auto [a, b] = phi.momentum_support(ch);
    require(a * b > 0.0, ErrorCode::admissibility,
            "packet momentum support touches 0 in channel " + std::to_string(ch));
  }
  const auto [elo, ehi] = phi.energy_support();
  require(elo >= window_lo - 1e-12 && ehi <= window_hi + 1e-12, ErrorCode::coverage,
          "packet energy support [" + std::to_string(elo) + ", " + std::to_string(ehi) +
              "] not inside the configured window");
  for (int a = 1; a <= basis.mode_count(); ++a) {
    const double nu = basis.threshold(a);
    require(ehi < nu - threshold_window || elo > nu + threshold_window,
            ErrorCode::admissibility, "packet energy support crosses a threshold window");
  }
}

// Spectral-representation vector: per grid energy, amplitudes on the open
// slots [(a,-),(a,+)]. Closed channels are identically absent.
struct FiberVector {
  std::vector<double> lambdas;  // uniform
  double dlam = 0.0;
  std::vector<int> channels;
  std::vector<double> nus;
  std::vector<Eigen::VectorXcd> v;

  int dim() const { return 2 * int(channels.size()); }

  double norm2() const {
    std::vector<double> f(lambdas.size());
    for (std::size_t j = 0; j < lambdas.size(); ++j) f[j] = v[j].squaredNorm();
    return simpson(f, dlam);
  }
};

inline Complex inner_product(const FiberVector& a, const FiberVector& b) {
  require(a.lambdas.size() == b.lambdas.size() && a.channels == b.channels,
          ErrorCode::invalid_argument, "fiber vectors live on different grids");
  std::vector<Complex> f(a.lambdas.size());
  for (std::size_t j = 0; j < f.size(); ++j) f[j] = a.v[j].dot(b.v[j]);  // conj(a) . b
  return simpson(f, a.dlam);
}

// (U phi)(lambda): psi_(a,s)(lambda) = 2^{-1/2} (lambda-nu_a)^{-1/4} g_a(s k_a).
inline FiberVector forward_transform(const ChannelWavepacket& phi, const TransverseBasis& basis,
                                     const std::vector<double>& lambda_grid,
                                     double threshold_window = -1.0) {
  require(lambda_grid.size() >= 5, ErrorCode::invalid_argument, "lambda grid too small");
  const auto [elo, ehi] = phi.energy_support();
  require(lambda_grid.front() <= elo && lambda_grid.back() >= ehi, ErrorCode::coverage,
          "packet energy support not covered by the lambda grid");

  FiberVector out;
  out.lambdas = lambda_grid;
  out.dlam = lambda_grid[1] - lambda_grid[0];

  const FiberBasis fb_lo = open_channels(lambda_grid.front(), basis, threshold_window);
  const FiberBasis fb_hi = open_channels(lambda_grid.back(), basis, threshold_window);
  require(fb_lo.channels == fb_hi.channels, ErrorCode::coverage,
          "lambda grid crosses a channel threshold");
  out.channels = fb_lo.channels;
  for (int ch : out.channels) out.nus.push_back(basis.threshold(ch));

  for (int ch : phi.channels())
    require(fb_lo.channel_index(ch) >= 0, ErrorCode::coverage,
            "packet channel closed on the lambda grid");

  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  out.v.assign(lambda_grid.size(), Eigen::VectorXcd::Zero(out.dim()));
  for (std::size_t j = 0; j < lambda_grid.size(); ++j) {
    const double lam = lambda_grid[j];
    for (std::size_t c = 0; c < out.channels.size(); ++c) {
      const double dk2 = lam - out.nus[c];
      if (dk2 <= 0.0) continue;
      const double k = std::sqrt(dk2);
      const double flux = inv_sqrt2 * std::pow(dk2, -0.25);
      out.v[j](2 * Eigen::Index(c) + 0) = flux * phi.amplitude(out.channels[c], -k);
      out.v[j](2 * Eigen::Index(c) + 1) = flux * phi.amplitude(out.channels[c], +k);
    }
  }
  return out;
}

// U* psi as a sampled packet on the requested xi grid:
// g_a(xi) = sqrt(2|xi|) psi_a^{-/+}(xi^2 + nu_a), sign slot by sign of xi.
inline ChannelWavepacket inverse_transform(const FiberVector& psi, UniformGrid xi_grid) {
  std::map<int, std::vector<Complex>> samples;
  std::map<int, double> nus;
  const double lam_lo = psi.lambdas.front(), lam_hi = psi.lambdas.back();
  for (std::size_t c = 0; c < psi.channels.size(); ++c) {
    const int ch = psi.channels[c];
    const double nu = psi.nus[c];
    // Interpolants for the two slots of this channel.
    std::vector<Complex> minus(psi.lambdas.size()), plus(psi.lambdas.size());
    for (std::size_t j = 0; j < psi.lambdas.size(); ++j) {
      minus[j] = psi.v[j](2 * Eigen::Index(c) + 0);
      plus[j] = psi.v[j](2 * Eigen::Index(c) + 1);
    }
    UniformGrid lgrid{lam_lo, psi.dlam, psi.lambdas.size()};
    LagrangeInterp<Complex> im(lgrid, std::move(minus), 6);
    LagrangeInterp<Complex> ip(lgrid, std::move(plus), 6);

    std::vector<Complex> g(xi_grid.n, Complex{});
    for (std::size_t i = 0; i < xi_grid.n; ++i) {
      const double xi = xi_grid.at(i);
      const double lam = xi * xi + nu;
      if (lam < lam_lo || lam > lam_hi) continue;
      const Complex val = xi < 0.0 ? im(lam) : ip(lam);
      g[i] = std::sqrt(2.0 * std::abs(xi)) * val;
    }
    samples[ch] = std::move(g);
    nus[ch] = nu;
  }
  return ChannelWavepacket::sampled(xi_grid, std::move(samples), std::move(nus));
}

namespace detail {

// Entrywise Lagrange interpolation of sweep matrices at one energy.
inline Eigen::MatrixXcd interp_matrix(const std::vector<Eigen::MatrixXcd>& mats,
                                      const std::vector<double>& grid, double dg, double lam,
                                      int points = 4) {
  const double u = (lam - grid.front()) / dg;
  const std::ptrdiff_t n = std::ptrdiff_t(grid.size());
  std::ptrdiff_t j = std::ptrdiff_t(std::floor(u));
  j = std::clamp<std::ptrdiff_t>(j, 0, n - 2);
  if (std::abs(u - double(j)) < 1e-9) return mats[std::size_t(j)];
  if (std::abs(u - double(j + 1)) < 1e-9) return mats[std::size_t(j + 1)];
  std::ptrdiff_t first = std::clamp<std::ptrdiff_t>(j - (points / 2 - 1), 0, n - points);
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(mats.front().rows(), mats.front().cols());
  for (int a = 0; a < points; ++a) {
    double w = 1.0;
    for (int b = 0; b < points; ++b) {
      if (a == b) continue;
      w *= (u - double(first + b)) / (double(first + a) - double(first + b));
    }
    out += w * mats[std::size_t(first + a)];
  }
  return out;
}

}  // namespace detail

// (S psi)(lambda) = S(lambda) psi(lambda), S interpolated entrywise in energy.
inline FiberVector apply_smatrix(const FiberVector& psi, const SMatrixSweep& sweep) {
  const auto& seg = sweep.segment_containing(psi.lambdas.front(), psi.lambdas.back());
  require(seg.channels == psi.channels, ErrorCode::coverage,
          "open-channel sets of fiber vector and sweep segment differ");
  std::vector<Eigen::MatrixXcd> mats(seg.mats.size());
  for (std::size_t j = 0; j < seg.mats.size(); ++j) mats[j] = seg.mats[j].s;

  FiberVector out = psi;
  for (std::size_t j = 0; j < psi.lambdas.size(); ++j) {
    const Eigen::MatrixXcd s =
        detail::interp_matrix(mats, seg.lambdas, seg.dlam, psi.lambdas[j]);
    out.v[j] = s * psi.v[j];
  }
  return out;
}

// 1 x D0 = 2i d/dlambda, componentwise finite differences.
inline FiberVector apply_D0(const FiberVector& psi, int stencil_order = 2) {
  // Support must stay clear of the grid ends for the stencil to be valid.
  double peak = 0.0, edge = 0.0;
  for (std::size_t j = 0; j < psi.v.size(); ++j)
    peak = std::max(peak, psi.v[j].cwiseAbs().maxCoeff());
  const std::size_t guard = stencil_order == 2 ? 2 : 3;
  for (std::size_t j = 0; j < guard; ++j) {
    edge = std::max(edge, psi.v[j].cwiseAbs().maxCoeff());
    edge = std::max(edge, psi.v[psi.v.size() - 1 - j].cwiseAbs().maxCoeff());
  }
  require(peak == 0.0 || edge <= 1e-10 * peak, ErrorCode::stencil,
          "fiber support touches the lambda grid ends");

  FiberVector out = psi;
  const Eigen::Index dim = psi.v.front().size();
  for (Eigen::Index comp = 0; comp < dim; ++comp) {
    std::vector<Complex> f(psi.v.size());
    for (std::size_t j = 0; j < psi.v.size(); ++j) f[j] = psi.v[j](comp);
    const auto d = derivative_uniform(f, psi.dlam, stencil_order);
    for (std::size_t j = 0; j < psi.v.size(); ++j) out.v[j](comp) = Complex(0.0, 2.0) * d[j];
  }
  return out;
}

struct ExpectationDiag {
  double value = 0.0;
  double imag_residual = 0.0;  // |Im| / max(|Re|, tiny)
};

// <psi, tau psi> with tau on the same grid as psi.
inline ExpectationDiag expectation_on_grid(const FiberVector& psi, const EwSegment& ew) {
  require(psi.lambdas.size() == ew.lambdas.size() &&
              std::abs(psi.lambdas.front() - ew.lambdas.front()) < 1e-9 &&
              psi.channels == ew.channels,
          ErrorCode::coverage, "fiber vector and EW matrices live on different grids");
  std::vector<Complex> f(psi.lambdas.size());
  for (std::size_t j = 0; j < f.size(); ++j) f[j] = psi.v[j].dot(ew.tau[j] * psi.v[j]);
  const Complex val = simpson(f, psi.dlam);
  ExpectationDiag d;
  d.value = val.real();
  d.imag_residual = std::abs(val.imag()) / std::max(std::abs(val.real()), 1e-300);
  return d;
}

// <phi, tau_EW phi> = -i Int <phi(lambda), S* dS/dlambda phi(lambda)> dlambda.
inline double ew_expectation(const ChannelWavepacket& phi, const SMatrixSweep& sweep,
                             const EwDelaySweep& ew, const TransverseBasis& basis,
                             ExpectationDiag* diag = nullptr, double imag_tol = 1e-8) {
  const auto [elo, ehi] = phi.energy_support();
  const auto& seg = sweep.segment_containing(elo, ehi);
  const EwSegment& ewseg = ew.segment_containing(elo, ehi);
  const FiberVector psi = forward_transform(phi, basis, seg.lambdas);
  const auto d = expectation_on_grid(psi, ewseg);
  if (diag) *diag = d;
  require(std::abs(d.value) < 1e-300 || d.imag_residual <= imag_tol, ErrorCode::accuracy_failure,
          "EW expectation imaginary residual " + std::to_string(d.imag_residual) +
              " above tolerance");
  return d.value;
}

inline double ew_expectation(const ChannelWavepacket& phi, const SMatrixSweep& sweep,
                             const TransverseBasis& basis, int stencil_order = 2,
                             ExpectationDiag* diag = nullptr) {
  const auto ew = ew_delay(sweep, stencil_order);
  return ew_expectation(phi, sweep, ew, basis, diag);
}

// -1/2 <phi, S*[1xD0, S] phi> assembled from apply_smatrix / apply_D0 only;
// the independent route against the EW expectation.
inline ExpectationDiag commutator_expectation(const ChannelWavepacket& phi,
                                              const SMatrixSweep& sweep,
                                              const TransverseBasis& basis,
                                              int stencil_order = 2) {
  const auto [elo, ehi] = phi.energy_support();
  const auto& seg = sweep.segment_containing(elo, ehi);
  const FiberVector psi = forward_transform(phi, basis, seg.lambdas);
  const FiberVector s_psi = apply_smatrix(psi, sweep);
  const FiberVector d0_s_psi = apply_D0(s_psi, stencil_order);
  const FiberVector d0_psi = apply_D0(psi, stencil_order);
  const FiberVector s_d0_psi = apply_smatrix(d0_psi, sweep);

  FiberVector comm = d0_s_psi;
  for (std::size_t j = 0; j < comm.v.size(); ++j) comm.v[j] -= s_d0_psi.v[j];

  const Complex val = -0.5 * inner_product(s_psi, comm);
  ExpectationDiag d;
  d.value = val.real();
  d.imag_residual = std::abs(val.imag()) / std::max(std::abs(val.real()), 1e-300);
  return d;
}

// Channel-decomposed EW expectation for a packet in a single incoming
// channel: sum over outgoing channels of -i Int <phi, B* dB/dlambda phi>,
// B the 2x2 partial blocks.
inline double ew_expectation_by_channels(const ChannelWavepacket& phi, const SMatrixSweep& sweep,
                                         const TransverseBasis& basis, int stencil_order = 2) {
  const auto chs = phi.channels();
  require(chs.size() == 1, ErrorCode::invalid_argument,
          "channel-decomposed expectation expects a single-channel packet");
  const int alpha = chs.front();

  const auto [elo, ehi] = phi.energy_support();
  const auto& seg = sweep.segment_containing(elo, ehi);
  const FiberVector psi = forward_transform(phi, basis, seg.lambdas);
  const int ia = 2 * int(std::find(psi.channels.begin(), psi.channels.end(), alpha) -
                         psi.channels.begin());

  KahanSum<Complex> total;
  for (int beta : seg.channels) {
    // Gather the per-energy 2x2 blocks beta <- alpha along this segment.
    std::vector<Eigen::Matrix2cd> blocks(seg.mats.size());
    for (std::size_t j = 0; j < seg.mats.size(); ++j) {
      const int ib = seg.mats[j].basis.channel_index(beta);
      const int iaj = seg.mats[j].basis.channel_index(alpha);
      blocks[j] = seg.mats[j].s.block<2, 2>(2 * ib, 2 * iaj);
    }
    const auto dblocks = derivative_uniform(blocks, seg.dlam, stencil_order);
    std::vector<Complex> f(seg.mats.size());
    for (std::size_t j = 0; j < f.size(); ++j) {
      const Eigen::Vector2cd phi2(psi.v[j](ia), psi.v[j](ia + 1));
      f[j] = Complex(0.0, -1.0) * phi2.dot(blocks[j].adjoint() * dblocks[j] * phi2);
    }
    total.add(simpson(f, seg.dlam));
  }
  return total.value().real();
}

}  // namespace wg
