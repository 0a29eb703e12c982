#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "wgdelay/coupling.hpp"
#include "wgdelay/errors.hpp"
#include "wgdelay/numerics.hpp"
#include "wgdelay/transverse.hpp"

namespace wg {

// Flux-normalized multichannel scattering matrix at one energy, on the slot
// basis [(a,-),(a,+) for a in N(lambda)]. Column (a,s) is the outgoing
// response to a unit-flux incoming wave in channel a from direction s.
struct SMatrix {
  FiberBasis basis;
  Eigen::MatrixXcd s;

  double unitarity_residual() const {
    const auto n = s.rows();
    return (s.adjoint() * s - Eigen::MatrixXcd::Identity(n, n)).norm();
  }

  // || S - P S^T P ||_F with P the (a,-) <-> (a,+) swap.
  double reciprocity_residual() const {
    const auto n = s.rows();
    Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(n, n);
    for (Eigen::Index i = 0; i + 1 < n; i += 2) {
      p(i, i + 1) = 1.0;
      p(i + 1, i) = 1.0;
    }
    return (s - p * s.transpose() * p).norm();
  }
};

struct SolveOpts {
  int n_closed = 4;            // evanescent channels kept above the open set
  int order = 4;               // 2: midpoint slices, 4: two-point Magnus
  double eps_v = 1e-12;        // matching radius cutoff, relative to peak |V|
  double slice_width = 0.0;    // 0: use the coupling grid spacing
  double cond_max = 1e12;      // amplification guard in the compositions
  double unitarity_tol = 1e-6;
  double threshold_window = -1.0;  // <0: basis default
};

struct SolveDiag {
  double matching_radius = 0.0;
  int channels_used = 0;
  int slices = 0;
  double unitarity = 0.0;
  double reciprocity = 0.0;
  double max_amplification = 0.0;
};

namespace detail {

// One-slice scattering blocks in the asymptotic channel basis, amplitudes
// referenced at the slice's own edges so only bounded factors appear.
struct SliceBlocks {
  Eigen::MatrixXcd t, r, rp, tp;
};

struct ChannelFrame {
  Eigen::VectorXcd n;     // value normalization per channel
  Eigen::VectorXcd d;     // derivative factor per channel
  int m = 0;

  static ChannelFrame build(const std::vector<double>& nu, double lambda) {
    ChannelFrame f;
    f.m = int(nu.size());
    f.n.resize(f.m);
    f.d.resize(f.m);
    for (int a = 0; a < f.m; ++a) {
      const double w = nu[std::size_t(a)] - lambda;
      if (w < 0.0) {
        const double k = std::sqrt(-w);
        f.n(a) = 1.0 / std::sqrt(k);
        f.d(a) = Complex(0.0, k) / std::sqrt(k);
      } else {
        const double kap = std::sqrt(w);
        f.n(a) = 1.0;
        f.d(a) = -kap;
      }
    }
    return f;
  }
};

// exp of the slice generator for constant W: blocks of entire functions.
inline Eigen::MatrixXd constant_slice_transfer(const Eigen::MatrixXd& w_mat, double h) {
  const int m = int(w_mat.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w_mat);
  const Eigen::VectorXd& w = es.eigenvalues();
  const Eigen::MatrixXd& u = es.eigenvectors();
  Eigen::VectorXd c(m), s(m), ws(m);
  for (int i = 0; i < m; ++i) {
    const double arg = -w(i) * h * h;  // phi'' = w phi
    c(i) = cos_sqrt(arg);
    s(i) = h * sinc_sqrt(arg);
    ws(i) = w(i) * s(i);
  }
  Eigen::MatrixXd t(2 * m, 2 * m);
  t.topLeftCorner(m, m) = u * c.asDiagonal() * u.transpose();
  t.topRightCorner(m, m) = u * s.asDiagonal() * u.transpose();
  t.bottomLeftCorner(m, m) = u * ws.asDiagonal() * u.transpose();
  t.bottomRightCorner(m, m) = t.topLeftCorner(m, m);
  return t;
}

inline Eigen::MatrixXd magnus4_slice_transfer(const Eigen::MatrixXd& w1,
                                              const Eigen::MatrixXd& w2, double h) {
  const int m = int(w1.rows());
  const double kappa = std::sqrt(3.0) * h * h / 12.0;
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  omega.topLeftCorner(m, m) = kappa * (w1 - w2);
  omega.topRightCorner(m, m) = h * Eigen::MatrixXd::Identity(m, m);
  omega.bottomLeftCorner(m, m) = 0.5 * h * (w1 + w2);
  omega.bottomRightCorner(m, m) = -omega.topLeftCorner(m, m);
  return omega.exp();
}

inline SliceBlocks slice_scattering(const Eigen::MatrixXd& transfer, const ChannelFrame& f,
                                    double cond_max, int slice_index) {
  const int m = f.m;
  const Eigen::MatrixXcd t11r = transfer.topLeftCorner(m, m).cast<Complex>();
  const Eigen::MatrixXcd t12r = transfer.topRightCorner(m, m).cast<Complex>();
  const Eigen::MatrixXcd t21r = transfer.bottomLeftCorner(m, m).cast<Complex>();
  const Eigen::MatrixXcd t22r = transfer.bottomRightCorner(m, m).cast<Complex>();

  const auto ninv = f.n.cwiseInverse().asDiagonal();
  const auto dinv = f.d.cwiseInverse().asDiagonal();
  const auto nd = f.n.asDiagonal();
  const auto dd = f.d.asDiagonal();

  // Amplitude transfer M^-1 T M with M = [[N, N], [D, -D]].
  const Eigen::MatrixXcd a11 = t11r * nd + t12r * dd;
  const Eigen::MatrixXcd a12 = t11r * nd - t12r * dd;
  const Eigen::MatrixXcd a21 = t21r * nd + t22r * dd;
  const Eigen::MatrixXcd a22 = t21r * nd - t22r * dd;
  const Eigen::MatrixXcd h11 = 0.5 * (ninv * a11 + dinv * a21);
  const Eigen::MatrixXcd h12 = 0.5 * (ninv * a12 + dinv * a22);
  const Eigen::MatrixXcd h21 = 0.5 * (ninv * a11 - dinv * a21);
  const Eigen::MatrixXcd h22 = 0.5 * (ninv * a12 - dinv * a22);

  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(h22);
  SliceBlocks b;
  b.tp = lu.solve(Eigen::MatrixXcd::Identity(m, m));
  require(b.tp.allFinite() && b.tp.norm() < cond_max, ErrorCode::solver_failure,
          "slice " + std::to_string(slice_index) + ": interface system ill-conditioned");
  b.r = -(b.tp * h21);
  b.t = h11 + h12 * b.r;
  b.rp = h12 * b.tp;
  return b;
}

// Redheffer star product: A (left region) composed with B (right region).
inline void star_compose(SliceBlocks& a, const SliceBlocks& b, double cond_max, double& max_amp,
                         int slice_index) {
  const int m = int(a.t.rows());
  const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(m, m);
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(eye - a.rp * b.r);
  const Eigen::MatrixXcd g = lu.solve(eye);
  require(g.allFinite() && g.norm() < cond_max, ErrorCode::solver_failure,
          "slice " + std::to_string(slice_index) + ": resonant denominator in composition");
  max_amp = std::max(max_amp, g.norm());

  const Eigen::MatrixXcd gt = g * a.t;
  SliceBlocks out;
  out.t = b.t * gt;
  out.r = a.r + a.tp * b.r * gt;
  out.rp = b.rp + b.t * g * a.rp * b.tp;
  out.tp = a.tp * (eye + b.r * g * a.rp) * b.tp;
  a = std::move(out);
}

}  // namespace detail

// Coupled-channel solve by piecewise slice propagators over [-R, R] with
// scattering-matrix composition, matched to flux-normalized open waves and
// decaying closed-channel exponentials. With an identically negligible
// coupling the composition is empty and the identity is returned exactly.
inline SMatrix solve_smatrix(const CouplingMatrix& coupling, const TransverseBasis& basis,
                             double lambda, const SolveOpts& opts = {},
                             SolveDiag* diag_out = nullptr) {
  FiberBasis fiber = open_channels(lambda, basis, opts.threshold_window);
  const int m_open = int(fiber.channels.size());
  require(coupling.mode_count() == basis.mode_count(), ErrorCode::invalid_argument,
          "coupling and basis disagree on mode count");

  const int m_use = std::min(basis.mode_count(), m_open + std::max(0, opts.n_closed));
  require(m_use >= m_open, ErrorCode::invalid_argument, "channel truncation below open set");

  SolveDiag diag;
  diag.channels_used = m_use;

  const double radius = coupling.matching_radius(opts.eps_v);
  diag.matching_radius = radius;

  SMatrix out;
  out.basis = fiber;
  if (radius <= 0.0) {
    out.s = Eigen::MatrixXcd::Identity(fiber.dim(), fiber.dim());
    if (diag_out) *diag_out = diag;
    return out;
  }

  std::vector<double> nu(static_cast<std::size_t>(m_use));
  for (int a = 1; a <= m_use; ++a) nu[std::size_t(a - 1)] = basis.threshold(a);
  const auto frame = detail::ChannelFrame::build(nu, lambda);

  const double h_target = opts.slice_width > 0.0 ? opts.slice_width : coupling.grid().step;
  const int n_slices = std::max(1, int(std::lround(2.0 * radius / h_target)));
  const double h = 2.0 * radius / n_slices;
  diag.slices = n_slices;

  auto w_at = [&](double x) {
    Eigen::MatrixXd w = coupling.at(x).topLeftCorner(m_use, m_use);
    for (int a = 0; a < m_use; ++a) w(a, a) += nu[std::size_t(a)] - lambda;
    return w;
  };

  detail::SliceBlocks total;
  total.t = Eigen::MatrixXcd::Identity(m_use, m_use);
  total.tp = total.t;
  total.r = Eigen::MatrixXcd::Zero(m_use, m_use);
  total.rp = total.r;

  const double gauss_off = h * std::sqrt(3.0) / 6.0;
  for (int i = 0; i < n_slices; ++i) {
    const double xc = -radius + (double(i) + 0.5) * h;
    Eigen::MatrixXd transfer;
    if (opts.order == 2) {
      transfer = detail::constant_slice_transfer(w_at(xc), h);
    } else {
      transfer = detail::magnus4_slice_transfer(w_at(xc - gauss_off), w_at(xc + gauss_off), h);
    }
    const auto blocks = detail::slice_scattering(transfer, frame, opts.cond_max, i);
    detail::star_compose(total, blocks, opts.cond_max, diag.max_amplification, i);
  }

  // Physical matrix on the open slots, phases re-referenced to x = 0.
  out.s.resize(fiber.dim(), fiber.dim());
  std::vector<Complex> phase(static_cast<std::size_t>(m_open));
  for (int a = 0; a < m_open; ++a)
    phase[std::size_t(a)] = std::exp(Complex(0.0, -fiber.momenta[std::size_t(a)] * radius));
  for (int a = 0; a < m_open; ++a) {
    for (int b = 0; b < m_open; ++b) {
      const Complex pp = phase[std::size_t(b)] * phase[std::size_t(a)];
      out.s(2 * b + 1, 2 * a + 1) = pp * total.t(b, a);
      out.s(2 * b + 0, 2 * a + 1) = pp * total.r(b, a);
      out.s(2 * b + 1, 2 * a + 0) = pp * total.rp(b, a);
      out.s(2 * b + 0, 2 * a + 0) = pp * total.tp(b, a);
    }
  }

  diag.unitarity = out.unitarity_residual();
  diag.reciprocity = out.reciprocity_residual();
  if (diag_out) *diag_out = diag;
  require(diag.unitarity <= 10.0 * opts.unitarity_tol, ErrorCode::accuracy_failure,
          "unitarity residual " + std::to_string(diag.unitarity) + " above 10x tolerance");
  return out;
}

// First Born order of the stationary formula: the resolvent term dropped,
// entries delta - i sqrt(pi/2) (k_b k_a)^{-1/2} Vhat_ba(xi' - xi) with the
// unitary transform Vhat(q) = (2 pi)^{-1/2} Int V(x) e^{-iqx} dx.
inline SMatrix born_smatrix(const CouplingMatrix& coupling, const TransverseBasis& basis,
                            double lambda, double threshold_window = -1.0) {
  FiberBasis fiber = open_channels(lambda, basis, threshold_window);
  const int m_open = int(fiber.channels.size());

  const auto& grid = coupling.grid();
  auto plain_ft = [&](int b, int a, double q) {
    std::vector<Complex> f(grid.n);
    for (std::size_t j = 0; j < grid.n; ++j) {
      const double x = grid.at(j);
      f[j] = coupling.at_node(j)(b, a) * std::exp(Complex(0.0, -q * x));
    }
    return simpson(f, grid.step);
  };

  SMatrix out;
  out.basis = fiber;
  out.s = Eigen::MatrixXcd::Identity(fiber.dim(), fiber.dim());
  for (int a = 0; a < m_open; ++a) {
    for (int b = 0; b < m_open; ++b) {
      const double ka = fiber.momenta[std::size_t(a)];
      const double kb = fiber.momenta[std::size_t(b)];
      const double flux = 1.0 / std::sqrt(ka * kb);
      for (int sa : {-1, +1}) {
        for (int sb : {-1, +1}) {
          const double q = sb * kb - sa * ka;
          const Complex v = plain_ft(fiber.channels[std::size_t(b)] - 1,
                                     fiber.channels[std::size_t(a)] - 1, q);
          out.s(2 * b + (sb > 0), 2 * a + (sa > 0)) += Complex(0.0, -0.5) * flux * v;
        }
      }
    }
  }
  return out;
}

// Energy sweep: uniform grids inside threshold intervals, threshold windows
// excluded. Fiber dimension is constant within a segment by construction.
struct SweepSegment {
  std::vector<double> lambdas;
  double dlam = 0.0;
  std::vector<int> channels;
  std::vector<SMatrix> mats;

  bool covers(double lo, double hi) const {
    return lambdas.front() <= lo + 1e-12 && lambdas.back() >= hi - 1e-12;
  }
};

struct SMatrixSweep {
  std::vector<SweepSegment> segments;

  const SweepSegment& segment_containing(double lo, double hi) const {
    for (const auto& seg : segments)
      if (seg.covers(lo, hi)) return seg;
    fail(ErrorCode::coverage, "no sweep segment covers [" + std::to_string(lo) + ", " +
                                  std::to_string(hi) + "]");
  }

  double max_unitarity_residual() const {
    double r = 0.0;
    for (const auto& seg : segments)
      for (const auto& m : seg.mats) r = std::max(r, m.unitarity_residual());
    return r;
  }
  double max_reciprocity_residual() const {
    double r = 0.0;
    for (const auto& seg : segments)
      for (const auto& m : seg.mats) r = std::max(r, m.reciprocity_residual());
    return r;
  }
};

inline SMatrixSweep make_sweep(const CouplingMatrix& coupling, const TransverseBasis& basis,
                               double lambda_min, double lambda_max, int points,
                               const SolveOpts& opts = {}, int threads = 1) {
  require(lambda_max > lambda_min, ErrorCode::invalid_argument, "sweep range must be nonempty");
  require(points >= 5, ErrorCode::invalid_argument, "sweep needs at least 5 points");
  const double window =
      opts.threshold_window >= 0.0 ? opts.threshold_window : basis.threshold_window();
  require(lambda_min > basis.threshold(1), ErrorCode::invalid_argument,
          "sweep must start above the first threshold");

  // Cut the requested range at excluded threshold windows, inset slightly so
  // rounding cannot push a grid point back inside a window.
  std::vector<std::pair<double, double>> parts;
  const double inset = 1.0 + 1e-9;
  double cursor = lambda_min;
  for (int a = 1; a <= basis.mode_count(); ++a) {
    const double nu = basis.threshold(a);
    const double lo = nu - window * inset, hi = nu + window * inset;
    if (hi <= cursor || lo >= lambda_max) continue;
    if (lo > cursor) parts.emplace_back(cursor, lo);
    cursor = std::max(cursor, hi);
  }
  if (cursor < lambda_max) parts.emplace_back(cursor, lambda_max);
  require(!parts.empty(), ErrorCode::invalid_argument, "sweep range lies inside threshold windows");

  double total_len = 0.0;
  for (auto& p : parts) total_len += p.second - p.first;

  SMatrixSweep sweep;
  for (auto& p : parts) {
    const int n = std::max(5, int(std::lround(points * (p.second - p.first) / total_len)));
    SweepSegment seg;
    seg.lambdas.resize(std::size_t(n));
    seg.dlam = (p.second - p.first) / double(n - 1);
    for (int j = 0; j < n; ++j) seg.lambdas[std::size_t(j)] = p.first + seg.dlam * j;
    seg.mats.resize(std::size_t(n));
    sweep.segments.push_back(std::move(seg));
  }

  for (auto& seg : sweep.segments) {
    const int n = int(seg.lambdas.size());
    std::exception_ptr first_error;
    std::mutex err_mutex;
    auto work = [&](int begin, int end) {
      for (int j = begin; j < end; ++j) {
        try {
          seg.mats[std::size_t(j)] =
              solve_smatrix(coupling, basis, seg.lambdas[std::size_t(j)], opts);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    const int nt = std::max(1, threads);
    if (nt == 1) {
      work(0, n);
    } else {
      std::vector<std::thread> pool;
      const int chunk = (n + nt - 1) / nt;
      for (int t = 0; t < nt; ++t) {
        const int begin = t * chunk;
        const int end = std::min(n, begin + chunk);
        if (begin < end) pool.emplace_back(work, begin, end);
      }
      for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    seg.channels = seg.mats.front().basis.channels;
    for (const auto& m : seg.mats)
      require(m.basis.channels == seg.channels, ErrorCode::solver_failure,
              "open-channel set changed inside a sweep segment");
  }
  return sweep;
}

// Eisenbud-Wigner matrices tau(lambda) = -i S* dS/dlambda on the sweep grid.
struct EwSegment {
  std::vector<double> lambdas;
  double dlam = 0.0;
  std::vector<int> channels;
  std::vector<Eigen::MatrixXcd> tau;
  double hermiticity_residual = 0.0;   // max over grid, before symmetrization
  double truncation_estimate = 0.0;
};

struct EwDelaySweep {
  std::vector<EwSegment> segments;

  const EwSegment& segment_containing(double lo, double hi) const {
    for (const auto& seg : segments)
      if (seg.lambdas.front() <= lo + 1e-12 && seg.lambdas.back() >= hi - 1e-12) return seg;
    fail(ErrorCode::coverage, "no EW segment covers the requested window");
  }
};

inline EwDelaySweep ew_delay(const SMatrixSweep& sweep, int stencil_order = 2,
                             bool enforce_residual_check = true) {
  EwDelaySweep out;
  for (const auto& seg : sweep.segments) {
    const std::size_t n = seg.lambdas.size();
    require(n >= 5, ErrorCode::invalid_argument, "ew_delay needs >= 5 points per segment");
    EwSegment es;
    es.lambdas = seg.lambdas;
    es.dlam = seg.dlam;
    es.channels = seg.channels;

    std::vector<Eigen::MatrixXcd> svals(n);
    for (std::size_t j = 0; j < n; ++j) svals[j] = seg.mats[j].s;
    const auto ds = derivative_uniform(svals, seg.dlam, stencil_order);

    // Truncation scale from high-order differences of the samples.
    double diff_norm = 0.0;
    if (stencil_order == 2) {
      for (std::size_t j = 0; j + 3 < n; ++j)
        diff_norm = std::max(diff_norm,
                             (svals[j + 3] - 3.0 * svals[j + 2] + 3.0 * svals[j + 1] - svals[j]).norm());
      es.truncation_estimate = 2.0 * diff_norm / (3.0 * seg.dlam);
    } else {
      for (std::size_t j = 0; j + 5 < n; ++j)
        diff_norm = std::max(diff_norm, (svals[j + 5] - 5.0 * svals[j + 4] + 10.0 * svals[j + 3] -
                                         10.0 * svals[j + 2] + 5.0 * svals[j + 1] - svals[j])
                                            .norm());
      es.truncation_estimate = 2.0 * diff_norm / (5.0 * seg.dlam);
    }
    // Roundoff floor so an exactly constant S never trips the check.
    const double floor = 1e3 * std::numeric_limits<double>::epsilon() *
                         std::sqrt(double(svals.front().rows())) / seg.dlam;
    es.truncation_estimate = std::max(es.truncation_estimate, floor);

    es.tau.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      Eigen::MatrixXcd t = Complex(0.0, -1.0) * (svals[j].adjoint() * ds[j]);
      es.hermiticity_residual =
          std::max(es.hermiticity_residual, (t - t.adjoint()).norm());
      es.tau[j] = 0.5 * (t + t.adjoint().eval());
    }
    if (enforce_residual_check)
      require(es.hermiticity_residual <= 10.0 * es.truncation_estimate, ErrorCode::accuracy_failure,
              "EW Hermiticity residual " + std::to_string(es.hermiticity_residual) +
                  " above 10x stencil truncation estimate " +
                  std::to_string(es.truncation_estimate));
    out.segments.push_back(std::move(es));
  }
  return out;
}

// 2x2 direction block of S(lambda) from incoming channel alpha to outgoing
// channel beta; zero when either channel is closed at that energy.
struct PartialBlock {
  double lambda = 0.0;
  Eigen::Matrix2cd block = Eigen::Matrix2cd::Zero();
  bool open = false;
};

inline std::vector<PartialBlock> partial_smatrix(const SMatrixSweep& sweep, int alpha, int beta) {
  std::vector<PartialBlock> out;
  for (const auto& seg : sweep.segments) {
    for (const auto& m : seg.mats) {
      PartialBlock pb;
      pb.lambda = m.basis.lambda;
      const int ia = m.basis.channel_index(alpha);
      const int ib = m.basis.channel_index(beta);
      if (ia >= 0 && ib >= 0) {
        pb.open = true;
        pb.block = m.s.block<2, 2>(2 * ib, 2 * ia);
      }
      out.push_back(pb);
    }
  }
  return out;
}

}  // namespace wg
