#pragma once

#include <Eigen/Dense>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "wgdelay/coupling.hpp"
#include "wgdelay/errors.hpp"
#include "wgdelay/numerics.hpp"
#include "wgdelay/smatrix.hpp"
#include "wgdelay/spectral.hpp"
#include "wgdelay/transverse.hpp"

namespace wg {

// Periodic grid x_j = -X + j dx, j = 0..n-1, with conjugate momenta
// xi_m = m pi / X (wrapped). n is kept a power of two.
struct GridSpec {
  double half_extent = 0.0;
  std::size_t n = 0;

  double dx() const { return 2.0 * half_extent / double(n); }
  double dxi() const { return kPi / half_extent; }
  double x(std::size_t j) const { return -half_extent + dx() * double(j); }
  double xi(std::size_t m) const {
    const double mm = m < n / 2 ? double(m) : double(m) - double(n);
    return mm * dxi();
  }
};

namespace detail {

class Fft1D {
 public:
  explicit Fft1D(std::size_t n) : n_(n) {
    std::vector<Complex> buf(n);
    auto* p = reinterpret_cast<fftw_complex*>(buf.data());
    // FFTW_ESTIMATE keeps planning deterministic run-to-run.
    fwd_ = fftw_plan_dft_1d(int(n), p, p, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    bwd_ = fftw_plan_dft_1d(int(n), p, p, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    require(fwd_ && bwd_, ErrorCode::invalid_argument, "FFT plan creation failed");
  }
  ~Fft1D() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }
  Fft1D(const Fft1D&) = delete;
  Fft1D& operator=(const Fft1D&) = delete;

  void forward(Complex* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(fwd_, p, p);
  }
  void backward(Complex* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(bwd_, p, p);
  }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  fftw_plan fwd_;
  fftw_plan bwd_;
};

}  // namespace detail

// Per-channel complex amplitudes on the grid at a timestamp.
struct GridState {
  Eigen::MatrixXcd psi;  // n x channels
  double t = 0.0;
};

// FFT workhorse: exact free evolution of mode amplitudes, Strang split-step
// under the channel-coupled potential, densities and window probabilities.
class GridEngine {
 public:
  GridEngine(GridSpec spec, const TransverseBasis& basis, const CouplingMatrix* coupling)
      : spec_(spec), fft_(spec.n) {
    require((spec.n & (spec.n - 1)) == 0 && spec.n >= 8, ErrorCode::invalid_argument,
            "grid size must be a power of two >= 8");
    for (int a = 1; a <= basis.mode_count(); ++a) nus_.push_back(basis.threshold(a));
    if (coupling) {
      require(coupling->mode_count() == basis.mode_count(), ErrorCode::invalid_argument,
              "coupling and basis disagree on mode count");
      const auto& cg = coupling->grid();
      for (std::size_t j = 0; j < spec_.n; ++j) {
        const double x = spec_.x(j);
        if (!cg.covers(x)) continue;
        Eigen::MatrixXd v = coupling->at(x);
        if (v.cwiseAbs().maxCoeff() <= 1e-250) continue;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
        cells_.push_back({j, es.eigenvectors(), es.eigenvalues()});
      }
    }
  }

  const GridSpec& spec() const { return spec_; }
  int channels() const { return int(nus_.size()); }
  double channel_nu(int a) const { return nus_[std::size_t(a - 1)]; }

  // g_a(xi_m) for every engine channel (zero where the packet is absent).
  std::vector<Eigen::VectorXcd> mode_amplitudes(const ChannelWavepacket& phi) const {
    std::vector<Eigen::VectorXcd> modes(nus_.size(),
                                        Eigen::VectorXcd::Zero(Eigen::Index(spec_.n)));
    for (int ch : phi.channels()) {
      require(ch >= 1 && ch <= channels(), ErrorCode::invalid_argument,
              "packet channel outside engine channels");
      auto& dst = modes[std::size_t(ch - 1)];
      for (std::size_t m = 0; m < spec_.n; ++m) dst(Eigen::Index(m)) = phi.amplitude(ch, spec_.xi(m));
    }
    return modes;
  }

  // x-representation of freely evolved mode amplitudes at time t.
  GridState state_from_modes(const std::vector<Eigen::VectorXcd>& modes, double t) const {
    GridState st;
    st.t = t;
    st.psi.resize(Eigen::Index(spec_.n), channels());
    const double scale = spec_.dxi() / std::sqrt(2.0 * kPi);
    for (int c = 0; c < channels(); ++c) {
      auto col = st.psi.col(c);
      const double nu = nus_[std::size_t(c)];
      for (std::size_t m = 0; m < spec_.n; ++m) {
        const double xi = spec_.xi(m);
        const double sign = (m % 2 == 0) ? 1.0 : -1.0;
        col(Eigen::Index(m)) = modes[std::size_t(c)](Eigen::Index(m)) * sign * scale *
                               std::exp(Complex(0.0, -t * (xi * xi + nu)));
      }
      fft_.backward(col.data());
    }
    return st;
  }

  // Inverse of state_from_modes at the state's own time.
  std::vector<Eigen::VectorXcd> modes_from_state(const GridState& st) const {
    std::vector<Eigen::VectorXcd> modes(nus_.size());
    const double scale = spec_.dx() / std::sqrt(2.0 * kPi);
    Eigen::VectorXcd buf(Eigen::Index(spec_.n));
    for (int c = 0; c < channels(); ++c) {
      buf = st.psi.col(c);
      fft_.forward(buf.data());
      const double nu = nus_[std::size_t(c)];
      for (std::size_t m = 0; m < spec_.n; ++m) {
        const double xi = spec_.xi(m);
        const double sign = (m % 2 == 0) ? 1.0 : -1.0;
        buf(Eigen::Index(m)) *= sign * scale * std::exp(Complex(0.0, st.t * (xi * xi + nu)));
      }
      modes[std::size_t(c)] = buf;
    }
    return modes;
  }

  double norm2(const GridState& st) const { return st.psi.squaredNorm() * spec_.dx(); }

  // <psi, H psi>: kinetic+threshold part in momentum space, potential on the grid.
  double energy(const GridState& st) const {
    double e = 0.0;
    Eigen::VectorXcd buf(Eigen::Index(spec_.n));
    for (int c = 0; c < channels(); ++c) {
      buf = st.psi.col(c);
      fft_.forward(buf.data());
      const double nu = nus_[std::size_t(c)];
      KahanSum<double> acc;
      for (std::size_t m = 0; m < spec_.n; ++m) {
        const double xi = spec_.xi(m);
        acc.add((xi * xi + nu) * std::norm(buf(Eigen::Index(m))));
      }
      e += acc.value() * spec_.dx() / double(spec_.n);
    }
    KahanSum<double> pot;
    for (const auto& cell : cells_) {
      const Eigen::VectorXcd row = st.psi.row(Eigen::Index(cell.j)).transpose();
      const Eigen::VectorXcd vrow = cell.u * (cell.d.asDiagonal() * (cell.u.transpose() * row));
      pot.add((row.dot(vrow)).real());
    }
    return e + pot.value() * spec_.dx();
  }

  // Strang split-step: half potential, full kinetic, half potential.
  void propagate(GridState& st, double dt, int steps) const {
    if (steps <= 0) return;
    refresh_kinetic_cache(dt);
    half_potential(st.psi, dt);
    for (int s = 0; s < steps; ++s) {
      kinetic_full(st.psi);
      if (s + 1 < steps) {
        full_potential(st.psi, dt);
      }
    }
    half_potential(st.psi, dt);
    st.t += dt * steps;
  }

  bool has_potential() const { return !cells_.empty(); }

 private:
  struct Cell {
    std::size_t j;
    Eigen::MatrixXd u;
    Eigen::VectorXd d;
  };

  void refresh_kinetic_cache(double dt) const {
    if (kin_dt_ == dt && !kin_.empty()) return;
    kin_dt_ = dt;
    kin_.assign(nus_.size(), Eigen::VectorXcd(Eigen::Index(spec_.n)));
    const double inv_n = 1.0 / double(spec_.n);
    for (std::size_t c = 0; c < nus_.size(); ++c) {
      for (std::size_t m = 0; m < spec_.n; ++m) {
        const double xi = spec_.xi(m);
        kin_[c](Eigen::Index(m)) =
            std::exp(Complex(0.0, -dt * (xi * xi + nus_[c]))) * inv_n;
      }
    }
  }

  void kinetic_full(Eigen::MatrixXcd& psi) const {
    for (int c = 0; c < channels(); ++c) {
      auto col = psi.col(c);
      fft_.forward(col.data());
      col.array() *= kin_[std::size_t(c)].array();
      fft_.backward(col.data());
    }
  }

  void apply_potential_phase(Eigen::MatrixXcd& psi, double theta) const {
    for (const auto& cell : cells_) {
      Eigen::VectorXcd row = psi.row(Eigen::Index(cell.j)).transpose();
      Eigen::VectorXcd tmp = cell.u.transpose() * row;
      for (Eigen::Index i = 0; i < tmp.size(); ++i)
        tmp(i) *= std::exp(Complex(0.0, -theta * cell.d(i)));
      psi.row(Eigen::Index(cell.j)) = (cell.u * tmp).transpose();
    }
  }

  void half_potential(Eigen::MatrixXcd& psi, double dt) const {
    if (!cells_.empty()) apply_potential_phase(psi, 0.5 * dt);
  }
  void full_potential(Eigen::MatrixXcd& psi, double dt) const {
    if (!cells_.empty()) apply_potential_phase(psi, dt);
  }

  GridSpec spec_;
  detail::Fft1D fft_;
  std::vector<double> nus_;
  std::vector<Cell> cells_;
  mutable double kin_dt_ = 0.0;
  mutable std::vector<Eigen::VectorXcd> kin_;
};

// Channel-summed density with prefix sums; window probabilities with
// cubically interpolated partial end cells.
class RadialProbe {
 public:
  RadialProbe(const Eigen::MatrixXcd& psi, const GridSpec& spec) : spec_(spec) {
    density_.resize(spec.n);
    for (std::size_t j = 0; j < spec.n; ++j) density_[j] = psi.row(Eigen::Index(j)).squaredNorm();
    prefix_.resize(spec.n + 1, 0.0);
    KahanSum<double> acc;
    for (std::size_t j = 0; j < spec.n; ++j) {
      acc.add(density_[j]);
      prefix_[j + 1] = acc.value();
    }
  }

  double total() const { return prefix_.back() * spec_.dx(); }

  double density_at(double x) const {
    const double u = (x + spec_.half_extent) / spec_.dx();
    std::ptrdiff_t j = std::ptrdiff_t(std::floor(u));
    if (j < 0 || std::size_t(j) >= spec_.n - 1) return 0.0;
    std::ptrdiff_t first =
        std::clamp<std::ptrdiff_t>(j - 1, 0, std::ptrdiff_t(spec_.n) - 4);
    double r = 0.0;
    for (int a = 0; a < 4; ++a) {
      double w = 1.0;
      for (int b = 0; b < 4; ++b) {
        if (a == b) continue;
        w *= (u - double(first + b)) / (double(first + a) - double(first + b));
      }
      r += density_[std::size_t(first + a)] * w;
    }
    return std::max(r, 0.0);
  }

  // Probability within |x| <= r.
  double within(double r) const {
    if (r <= 0.0) return 0.0;
    if (r >= spec_.half_extent) return total();
    const double dx = spec_.dx();
    const double u_lo = (spec_.half_extent - r) / dx;
    const double u_hi = (spec_.half_extent + r) / dx;
    const std::size_t j_lo = std::size_t(std::ceil(u_lo - 1e-12));
    const std::size_t j_hi = std::size_t(std::floor(u_hi + 1e-12));
    if (j_hi < j_lo + 1 || j_hi >= spec_.n) {
      // Too few interior nodes to trapezoid: sample the window directly.
      double acc = 0.0;
      const int ns = 9;
      std::vector<double> f(ns);
      for (int i = 0; i < ns; ++i) f[std::size_t(i)] = density_at(-r + 2.0 * r * i / (ns - 1));
      acc = simpson(f, 2.0 * r / (ns - 1));
      return acc;
    }
    const double interior =
        (prefix_[j_hi + 1] - prefix_[j_lo]) - 0.5 * (density_[j_lo] + density_[j_hi]);
    double result = interior * dx;
    // Partial cells between -r..x(j_lo) and x(j_hi)..r.
    const double xl = spec_.x(j_lo), xr = spec_.x(j_hi);
    const double wl = xl - (-r), wr = r - xr;
    if (wl > 1e-14 * dx) result += 0.5 * wl * (density_at(-r) + density_[j_lo]);
    if (wr > 1e-14 * dx) result += 0.5 * wr * (density_[j_hi] + density_at(r));
    return result;
  }

  // Mass in the outermost fraction of the box (leakage monitor).
  double outer_mass(double fraction = 0.05) const {
    return std::max(total() - within(spec_.half_extent * (1.0 - fraction)), 0.0);
  }

  // First position moment of the density.
  double mean_position() const {
    KahanSum<double> acc;
    for (std::size_t j = 0; j < spec_.n; ++j) acc.add(density_[j] * spec_.x(j));
    const double tot = prefix_.back();
    return tot > 0.0 ? acc.value() / tot : 0.0;
  }

 private:
  GridSpec spec_;
  std::vector<double> density_;
  std::vector<double> prefix_;
};

// Fused packet -> S(lambda) -> grid-mode evaluation: the outgoing state's
// amplitudes on the engine's momentum lattice, with S interpolated in energy
// and the incoming packet read at the exact conjugate momenta.
inline std::vector<Eigen::VectorXcd> scattered_mode_amplitudes(const GridEngine& engine,
                                                               const ChannelWavepacket& phi,
                                                               const SMatrixSweep& sweep,
                                                               const TransverseBasis& basis) {
  const auto [elo, ehi] = phi.energy_support();
  const auto& seg = sweep.segment_containing(elo, ehi);
  std::vector<Eigen::MatrixXcd> mats(seg.mats.size());
  for (std::size_t j = 0; j < seg.mats.size(); ++j) mats[j] = seg.mats[j].s;
  const auto& spec = engine.spec();

  std::vector<Eigen::VectorXcd> out(std::size_t(engine.channels()),
                                    Eigen::VectorXcd::Zero(Eigen::Index(spec.n)));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (std::size_t c = 0; c < seg.channels.size(); ++c) {
    const int alpha = seg.channels[c];
    const double nu_a = basis.threshold(alpha);
    auto& dst = out[std::size_t(alpha - 1)];
    for (std::size_t m = 0; m < spec.n; ++m) {
      const double xi = spec.xi(m);
      const double lam = xi * xi + nu_a;
      if (lam < elo || lam > ehi || xi == 0.0) continue;
      // Incoming fiber vector at this energy.
      Eigen::VectorXcd fin = Eigen::VectorXcd::Zero(2 * Eigen::Index(seg.channels.size()));
      bool any = false;
      for (std::size_t b = 0; b < seg.channels.size(); ++b) {
        const double dk2 = lam - basis.threshold(seg.channels[b]);
        if (dk2 <= 0.0) continue;
        const double k = std::sqrt(dk2);
        const double flux = inv_sqrt2 * std::pow(dk2, -0.25);
        const Complex gm = phi.amplitude(seg.channels[b], -k);
        const Complex gp = phi.amplitude(seg.channels[b], +k);
        if (gm != Complex{} || gp != Complex{}) any = true;
        fin(2 * Eigen::Index(b) + 0) = flux * gm;
        fin(2 * Eigen::Index(b) + 1) = flux * gp;
      }
      if (!any) continue;
      const Eigen::MatrixXcd s = detail::interp_matrix(mats, seg.lambdas, seg.dlam, lam);
      const int slot = 2 * int(c) + (xi > 0.0 ? 1 : 0);
      const Complex comp = (s.row(slot) * fin)(0);
      dst(Eigen::Index(m)) = std::sqrt(2.0 * std::abs(xi)) * comp;
    }
  }
  return out;
}

struct SojournConfig {
  double t0 = 0.0;        // start of the propagation window (< 0)
  double t1 = 0.0;        // end of the propagation window (> 0)
  double dt = 1e-2;       // split-step size
  int sample_stride = 10; // time-quadrature lattice spacing in steps
  double eps_leak = 1e-6;
  double norm_tol = 1e-10;
  double prep_overlap = 1e-8;
  double tail_rel_tol = 1e-9;
  int tail_block_panels = 8;
  double tail_max_time = 2e4;
  int trace_radii = 0;    // record (t, ||F_r psi||^2) for this many largest radii
};

struct SojournRecord {
  std::vector<double> radii;
  std::vector<double> t_full;     // T_r
  std::vector<double> t0_phi;     // T_r^0(phi)
  std::vector<double> t0_sphi;    // T_r^0(S phi)
  std::vector<double> tau;        // modified delay
  std::vector<double> tau_free;   // auxiliary free-only delay
  std::vector<double> tail_bound; // residual tail estimate of the full integral

  double tau_plateau = 0.0;
  double plateau_slope = 0.0;
  double norm_drift = 0.0;
  double max_leakage = 0.0;
  double prep_overlap_achieved = 0.0;

  std::vector<double> trace_times;
  std::vector<double> trace_radii;
  std::vector<std::vector<double>> trace;  // trace[m][i]: radius m, time index i
};

namespace detail {

// Composite Simpson accumulator over lattice blocks with an even panel count.
struct BlockIntegral {
  KahanSum<double> sum;
  void add_block(const std::vector<double>& f, double h) { sum.add(simpson(f, h)); }
  double value() const { return sum.value(); }
};

}  // namespace detail

// Diagnostics from preparing e^{-i t0 H0} phi on the grid.
struct PrepDiag {
  double overlap = 0.0;
  bool moving_inward = true;
};

inline GridState prepare_scattering_state(const GridEngine& engine, const ChannelWavepacket& phi,
                                          double t0, double interaction_radius,
                                          double eps_prep = 1e-8, PrepDiag* diag = nullptr) {
  require(t0 < 0.0, ErrorCode::invalid_argument, "preparation time must be negative");
  const auto modes = engine.mode_amplitudes(phi);
  GridState st = engine.state_from_modes(modes, t0);
  RadialProbe probe(st.psi, engine.spec());
  PrepDiag d;
  d.overlap = probe.within(interaction_radius) / std::max(probe.total(), 1e-300);

  // The packet must head toward the interaction region.
  const double mean_x = probe.mean_position();
  double mean_xi = 0.0, weight = 0.0;
  for (const auto& mvec : modes) {
    for (Eigen::Index m = 0; m < mvec.size(); ++m) {
      const double w = std::norm(mvec(m));
      mean_xi += w * engine.spec().xi(std::size_t(m));
      weight += w;
    }
  }
  if (weight > 0.0) mean_xi /= weight;
  d.moving_inward = mean_x * mean_xi < 0.0 || std::abs(mean_x) < interaction_radius;
  if (diag) *diag = d;

  require(d.overlap <= eps_prep, ErrorCode::domain_too_small,
          "prepared state overlaps the interaction region (" + std::to_string(d.overlap) +
              " > " + std::to_string(eps_prep) + "); move t0 earlier or enlarge the grid");
  require(d.moving_inward, ErrorCode::invalid_argument,
          "prepared packet is not moving toward the interaction region");
  return st;
}

namespace detail {

inline std::vector<double> probe_radii(const GridEngine& engine,
                                       const std::vector<Eigen::VectorXcd>& modes, double t,
                                       const std::vector<double>& radii) {
  const GridState st = engine.state_from_modes(modes, t);
  RadialProbe probe(st.psi, engine.spec());
  std::vector<double> out(radii.size());
  for (std::size_t i = 0; i < radii.size(); ++i) out[i] = probe.within(radii[i]);
  return out;
}

// March Simpson blocks outward from t_edge in the given direction until the
// block contribution is negligible for every radius. Symmetric Simpson
// weights make the descending-time samples integrate with the correct
// positive orientation. `min_span` prevents stopping before a packet that is
// still on its way toward the window ever reaches it.
template <typename Eval>
inline void march_tail(Eval&& eval, double t_edge, double direction, double h, int block_panels,
                       double rel_tol, double max_span, std::vector<KahanSum<double>>& acc,
                       double scale_floor, double* tail_bound, double min_span = 0.0) {
  const std::size_t nr = acc.size();
  double prev_block = 0.0;
  double span = 0.0;
  int quiet = 0;
  while (span < max_span) {
    std::vector<std::vector<double>> rows(std::size_t(block_panels) + 1);
    for (int i = 0; i <= block_panels; ++i) {
      const double t = t_edge + direction * (span + double(i) * h);
      rows[std::size_t(i)] = eval(t);
    }
    double block_max = 0.0;
    for (std::size_t r = 0; r < nr; ++r) {
      std::vector<double> f(std::size_t(block_panels) + 1);
      for (int i = 0; i <= block_panels; ++i) f[std::size_t(i)] = rows[std::size_t(i)][r];
      const double piece = simpson(f, h);
      acc[r].add(piece);
      block_max = std::max(block_max, std::abs(piece));
    }
    span += double(block_panels) * h;
    const double ref = std::max(scale_floor, std::abs(acc[nr - 1].value()));
    if (span >= min_span && block_max < rel_tol * ref) {
      if (++quiet >= 2) {
        if (tail_bound) {
          const double rho = prev_block > 0.0 ? std::clamp(block_max / prev_block, 0.0, 0.9) : 0.5;
          *tail_bound = block_max * rho / (1.0 - rho) + block_max;
        }
        return;
      }
    } else {
      quiet = 0;
    }
    prev_block = block_max;
  }
  fail(ErrorCode::window_too_short,
       "sojourn tail did not converge within the configured marching span");
}

// Slowest group speed carried by the packet (2 * min |xi| over support).
inline double packet_min_speed(const ChannelWavepacket& phi) {
  double v = 1e300;
  for (int ch : phi.channels()) {
    const auto [a, b] = phi.momentum_support(ch);
    const double minabs = std::min(std::abs(a), std::abs(b));
    v = std::min(v, 2.0 * minabs);
  }
  return v;
}

}  // namespace detail

// Full sojourn pipeline. With `sphi_modes` present, the free references for
// phi and S phi are accumulated on the same lattice and tau_r is the exact
// linear combination of the three integrals.
inline SojournRecord time_delay_on_grid(const GridEngine& engine, const ChannelWavepacket& phi,
                                        const std::vector<Eigen::VectorXcd>& sphi_modes,
                                        const std::vector<double>& radii_in,
                                        double interaction_radius, const SojournConfig& cfg) {
  require(!radii_in.empty(), ErrorCode::invalid_argument, "no radii requested");
  require(cfg.t0 < 0.0 && cfg.t1 > 0.0, ErrorCode::invalid_argument,
          "sojourn window must straddle t = 0");
  require(cfg.sample_stride >= 1, ErrorCode::invalid_argument, "sample stride must be >= 1");

  std::vector<double> radii = radii_in;
  std::sort(radii.begin(), radii.end());
  const std::size_t nr = radii.size();
  for (double r : radii)
    require(r >= 0.0 && r <= engine.spec().half_extent / 2.0 + 1e-12, ErrorCode::invalid_argument,
            "radius outside [0, X/2]");

  const double h = cfg.dt * cfg.sample_stride;
  // Core lattice [t0, t1] with an even panel count, t0 on the lattice.
  const double t0 = -std::ceil((-cfg.t0) / h) * h;
  std::size_t panels = std::size_t(std::ceil((cfg.t1 - t0) / h));
  if (panels % 2) ++panels;
  const double t1 = t0 + double(panels) * h;

  const auto phi_modes = engine.mode_amplitudes(phi);

  // Propagated samples of all three integrands on the core lattice.
  GridState st = prepare_scattering_state(engine, phi, t0, interaction_radius, cfg.prep_overlap);
  SojournRecord rec;
  rec.radii = radii;
  rec.prep_overlap_achieved = [&] {
    RadialProbe probe(st.psi, engine.spec());
    return probe.within(interaction_radius) / std::max(probe.total(), 1e-300);
  }();

  const double norm0 = engine.norm2(st);
  std::vector<std::vector<double>> core_full(nr), core_phi(nr), core_sphi(nr);
  for (auto& v : core_full) v.reserve(panels + 1);
  for (auto& v : core_phi) v.reserve(panels + 1);
  for (auto& v : core_sphi) v.reserve(panels + 1);

  const std::size_t n_trace = std::min<std::size_t>(std::size_t(std::max(cfg.trace_radii, 0)), nr);
  rec.trace.assign(n_trace, {});
  for (std::size_t m = 0; m < n_trace; ++m) rec.trace_radii.push_back(radii[nr - n_trace + m]);

  for (std::size_t i = 0; i <= panels; ++i) {
    const double t = t0 + double(i) * h;
    if (i > 0) {
      engine.propagate(st, cfg.dt, cfg.sample_stride);
      st.t = t;  // keep lattice times exact
    }
    RadialProbe probe(st.psi, engine.spec());
    for (std::size_t r = 0; r < nr; ++r) core_full[r].push_back(probe.within(radii[r]));
    const double drift = std::abs(engine.norm2(st) - norm0) / norm0;
    rec.norm_drift = std::max(rec.norm_drift, drift);
    require(drift <= cfg.norm_tol, ErrorCode::integrator_failure,
            "norm drift " + std::to_string(drift) + " above tolerance");
    const double leak = probe.outer_mass() / std::max(probe.total(), 1e-300);
    rec.max_leakage = std::max(rec.max_leakage, leak);
    require(leak <= cfg.eps_leak, ErrorCode::domain_too_small,
            "probability leaked into the outer 5% of the grid");

    const auto pf = detail::probe_radii(engine, phi_modes, t, radii);
    const auto ps = detail::probe_radii(engine, sphi_modes, t, radii);
    for (std::size_t r = 0; r < nr; ++r) {
      core_phi[r].push_back(pf[r]);
      core_sphi[r].push_back(ps[r]);
    }
    rec.trace_times.push_back(t);
    for (std::size_t m = 0; m < n_trace; ++m)
      rec.trace[m].push_back(core_full[nr - n_trace + m].back());
  }

  // Final state's free continuation for the post-window tail.
  const auto final_modes = engine.modes_from_state(st);

  std::vector<KahanSum<double>> acc_full(nr), acc_phi(nr), acc_sphi(nr);
  for (std::size_t r = 0; r < nr; ++r) {
    acc_full[r].add(simpson(core_full[r], h));
    acc_phi[r].add(simpson(core_phi[r], h));
    acc_sphi[r].add(simpson(core_sphi[r], h));
  }

  // Tails: before t0 the scattering state coincides with the free phi within
  // wave-operator accuracy; after t1 it evolves freely from the final state.
  auto eval_pre = [&](double t) {
    const auto v = detail::probe_radii(engine, phi_modes, t, radii);
    return v;
  };
  auto eval_post = [&](double t) { return detail::probe_radii(engine, final_modes, t, radii); };
  auto eval_phi = [&](double t) { return detail::probe_radii(engine, phi_modes, t, radii); };
  auto eval_sphi = [&](double t) { return detail::probe_radii(engine, sphi_modes, t, radii); };

  const double scale_floor = std::max(1.0, std::abs(t1 - t0));
  double tail_full_pre = 0.0, tail_full_post = 0.0;

  // The three integrands share lattice and weights; tails are marched
  // per-integrand but on the same lattice offsets so the linear combination
  // in tau remains exact where they overlap.
  detail::march_tail(eval_pre, t0, -1.0, h, cfg.tail_block_panels, cfg.tail_rel_tol,
                     cfg.tail_max_time, acc_full, scale_floor, &tail_full_pre);
  detail::march_tail(eval_post, t1, +1.0, h, cfg.tail_block_panels, cfg.tail_rel_tol,
                     cfg.tail_max_time, acc_full, scale_floor, &tail_full_post);
  detail::march_tail(eval_phi, t0, -1.0, h, cfg.tail_block_panels, cfg.tail_rel_tol,
                     cfg.tail_max_time, acc_phi, scale_floor, nullptr);
  detail::march_tail(eval_phi, t1, +1.0, h, cfg.tail_block_panels, cfg.tail_rel_tol,
                     cfg.tail_max_time, acc_phi, scale_floor, nullptr);
  detail::march_tail(eval_sphi, t0, -1.0, h, cfg.tail_block_panels, cfg.tail_rel_tol,
                     cfg.tail_max_time, acc_sphi, scale_floor, nullptr);
  detail::march_tail(eval_sphi, t1, +1.0, h, cfg.tail_block_panels, cfg.tail_rel_tol,
                     cfg.tail_max_time, acc_sphi, scale_floor, nullptr);

  rec.t_full.resize(nr);
  rec.t0_phi.resize(nr);
  rec.t0_sphi.resize(nr);
  rec.tau.resize(nr);
  rec.tail_bound.assign(nr, tail_full_pre + tail_full_post);
  for (std::size_t r = 0; r < nr; ++r) {
    rec.t_full[r] = acc_full[r].value();
    rec.t0_phi[r] = acc_phi[r].value();
    rec.t0_sphi[r] = acc_sphi[r].value();
    rec.tau[r] = rec.t_full[r] - 0.5 * (rec.t0_phi[r] + rec.t0_sphi[r]);
  }

  // tau_r^free on a lattice anchored at t = 0: half-difference of the two
  // free sojourn integrands on each time half-line.
  {
    std::vector<KahanSum<double>> neg(nr), pos(nr);
    auto eval_diff_neg = [&](double t) {
      auto a = eval_phi(t);
      const auto b = eval_sphi(t);
      for (std::size_t r = 0; r < nr; ++r) a[r] -= b[r];
      return a;
    };
    auto eval_diff_pos = [&](double t) {
      auto a = eval_sphi(t);
      const auto b = eval_phi(t);
      for (std::size_t r = 0; r < nr; ++r) a[r] -= b[r];
      return a;
    };
    const double clear_span =
        (radii.back() + 0.25 * engine.spec().half_extent) / detail::packet_min_speed(phi);
    detail::march_tail(eval_diff_neg, 0.0, -1.0, h, cfg.tail_block_panels, cfg.tail_rel_tol,
                       cfg.tail_max_time, neg, scale_floor, nullptr, clear_span);
    detail::march_tail(eval_diff_pos, 0.0, +1.0, h, cfg.tail_block_panels, cfg.tail_rel_tol,
                       cfg.tail_max_time, pos, scale_floor, nullptr, clear_span);
    rec.tau_free.resize(nr);
    for (std::size_t r = 0; r < nr; ++r)
      rec.tau_free[r] = 0.5 * (neg[r].value() + pos[r].value());
  }

  // Plateau estimate: average of the top quartile of radii.
  {
    const std::size_t q = std::max<std::size_t>(1, nr / 4);
    double mean = 0.0;
    for (std::size_t i = nr - q; i < nr; ++i) mean += rec.tau[i];
    rec.tau_plateau = mean / double(q);
    if (q >= 2) {
      const double dr = radii[nr - 1] - radii[nr - q];
      if (dr > 0.0) rec.plateau_slope = (rec.tau[nr - 1] - rec.tau[nr - q]) / dr;
    }
  }
  return rec;
}

// Free sojourn times T_r^0 for a packet, by exact spectral evolution on the
// grid and the shared marching quadrature (no split-step involved).
inline std::vector<double> sojourn_free(const GridEngine& engine, const ChannelWavepacket& phi,
                                        const std::vector<double>& radii_in, double lattice_h,
                                        const SojournConfig& cfg = {}) {
  std::vector<double> radii = radii_in;
  std::sort(radii.begin(), radii.end());
  const std::size_t nr = radii.size();
  for (int ch : phi.channels()) {
    const auto [a, b] = phi.momentum_support(ch);
    require(a * b > 0.0, ErrorCode::admissibility,
            "free sojourn diverges: momentum support touches 0");
  }
  const auto modes = engine.mode_amplitudes(phi);
  auto eval = [&](double t) { return detail::probe_radii(engine, modes, t, radii); };
  std::vector<KahanSum<double>> acc(nr);
  const double floor = 1.0;
  const double clear_span =
      (radii.back() + 0.25 * engine.spec().half_extent) / detail::packet_min_speed(phi);
  detail::march_tail(eval, 0.0, -1.0, lattice_h, cfg.tail_block_panels, cfg.tail_rel_tol,
                     cfg.tail_max_time, acc, floor, nullptr, clear_span);
  detail::march_tail(eval, 0.0, +1.0, lattice_h, cfg.tail_block_panels, cfg.tail_rel_tol,
                     cfg.tail_max_time, acc, floor, nullptr, clear_span);
  std::vector<double> out(nr);
  for (std::size_t r = 0; r < nr; ++r) out[r] = acc[r].value();
  return out;
}

}  // namespace wg
