#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "wgdelay/oracles.hpp"
#include "wgdelay/scenario.hpp"

namespace wg::verify {

struct Check {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool pass = false;
  std::string note;
};

struct SuiteResult {
  std::string suite;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

namespace detail {

inline Check bounded(const std::string& name, double value, double bound) {
  return {name, value, bound, std::abs(value) <= bound, ""};
}
inline Check in_range(const std::string& name, double value, double lo, double hi) {
  Check c{name, value, hi, value >= lo && value <= hi, "range [" + std::to_string(lo) + ", " +
                                                           std::to_string(hi) + "]"};
  return c;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline PotentialSpec scale_potential(const PotentialSpec& p, double factor) {
  require(!p.is_grid(), ErrorCode::invalid_argument, "cannot scale a grid-sampled potential");
  std::vector<SeparableTerm> terms = p.terms();
  for (auto& t : terms) t.longitudinal.strength *= factor;
  return PotentialSpec::sum(std::move(terms));
}

struct Workbench {
  TransverseBasis basis;
  CouplingMatrix coupling;
  ChannelWavepacket packet;
  SMatrixSweep sweep;

  Workbench(const Scenario& s, int threads)
      : basis(s.make_basis()),
        coupling(s.make_solver_coupling(basis)),
        packet(s.make_packet(basis)),
        sweep(make_sweep(coupling, basis, s.sweep_min, s.sweep_max, s.sweep_points, s.solver,
                         threads)) {}
};

inline SojournRecord run_delay(const Scenario& s, const Workbench& wb, double t0_override = 0.0) {
  GridEngine engine(s.make_grid_spec(), wb.basis,
                    s.potential.is_zero() ? nullptr : &wb.coupling);
  const auto sphi = scattered_mode_amplitudes(engine, wb.packet, wb.sweep, wb.basis);
  SojournConfig cfg = s.make_sojourn_config();
  if (t0_override != 0.0) cfg.t0 = t0_override;
  return time_delay_on_grid(engine, wb.packet, sphi, s.make_radii(),
                            wb.coupling.matching_radius(s.solver.eps_v), cfg);
}

}  // namespace detail

// Criterion 1: V = 0 gives the identity S-matrix exactly and vanishing
// delays within 1e-8 absolute, in under 30 s.
inline SuiteResult free_suite(const Scenario& s, int threads = 1) {
  detail::Stopwatch watch;
  SuiteResult out;
  out.suite = "free";

  detail::Workbench wb(s, threads);
  double dev = 0.0;
  for (const auto& seg : wb.sweep.segments)
    for (const auto& m : seg.mats) {
      const Eigen::MatrixXcd diff =
          m.s - Eigen::MatrixXcd::Identity(m.s.rows(), m.s.cols());
      dev = std::max(dev, diff.cwiseAbs().maxCoeff());
    }
  out.checks.push_back(detail::bounded("S(lambda) == identity (exact)", dev, 0.0));

  const auto rec = detail::run_delay(s, wb);
  double tau_max = 0.0, tau_free_max = 0.0;
  for (std::size_t i = 0; i < rec.radii.size(); ++i) {
    tau_max = std::max(tau_max, std::abs(rec.tau[i]));
    tau_free_max = std::max(tau_free_max, std::abs(rec.tau_free[i]));
  }
  out.checks.push_back(detail::bounded("max_r |tau_r|", tau_max, 1e-8));
  out.checks.push_back(detail::bounded("max_r |tau_r_free|", tau_free_max, 1e-8));

  out.seconds = watch.seconds();
  out.checks.push_back(detail::bounded("runtime [s]", out.seconds, 30.0));
  return out;
}

// Criterion 2: diagonal square well against the closed-form oracle, then the
// sojourn pipeline against the Eisenbud-Wigner expectation.
inline SuiteResult well_suite(const Scenario& s, int threads = 1) {
  detail::Stopwatch watch;
  SuiteResult out;
  out.suite = "well";

  require(!s.potential.is_grid() && s.potential.terms().size() == 1, ErrorCode::validation,
          "well suite expects a single separable term");
  const auto& term = s.potential.terms().front();
  require(term.transverse.is_constant() &&
              term.longitudinal.kind == LongitudinalProfile::Kind::box,
          ErrorCode::validation, "well suite expects a constant x box potential");
  const oracles::SquareWell1D well{-term.longitudinal.strength, term.longitudinal.width};

  detail::Workbench wb(s, threads);
  const double nu1 = wb.basis.threshold(1);

  // (a) solver vs closed form on a sample of sweep energies.
  double s_dev = 0.0;
  {
    const auto& seg = wb.sweep.segments.front();
    const std::size_t stride = std::max<std::size_t>(1, seg.lambdas.size() / 24);
    for (std::size_t j = 0; j < seg.lambdas.size(); j += stride) {
      const double lam = seg.lambdas[j];
      const auto amp = oracles::square_well_1d(well, std::sqrt(lam - nu1));
      Eigen::Matrix2cd ref;
      ref << amp.t, amp.r, amp.r, amp.t;
      const int i1 = seg.mats[j].basis.channel_index(1);
      const Eigen::Matrix2cd got = seg.mats[j].s.block<2, 2>(2 * i1, 2 * i1);
      s_dev = std::max(s_dev, (got - ref).cwiseAbs().maxCoeff());
    }
  }
  out.checks.push_back(detail::bounded("|S - oracle| (max entry)", s_dev, 1e-8));

  // (b) EW expectation vs the analytic phase-derivative quadrature.
  const auto ew = ew_delay(wb.sweep, s.stencil_order);
  const double ew_val = ew_expectation(wb.packet, wb.sweep, ew, wb.basis);
  double analytic = 0.0;
  {
    const auto [elo, ehi] = wb.packet.energy_support();
    const auto& seg = wb.sweep.segment_containing(elo, ehi);
    const FiberVector psi = forward_transform(wb.packet, wb.basis, seg.lambdas);
    std::vector<double> f(seg.lambdas.size());
    for (std::size_t j = 0; j < f.size(); ++j)
      f[j] = psi.v[j].squaredNorm() *
             oracles::analytic_phase_delay(well, seg.lambdas[j], nu1);
    analytic = simpson(f, seg.dlam);
  }
  out.checks.push_back(detail::bounded("|ew_expectation - analytic| / |analytic|",
                                       (ew_val - analytic) / analytic, 1e-2));

  // (c,d) pipeline delay against the EW expectation and the free-only form.
  const auto rec = detail::run_delay(s, wb);
  const double tau = rec.tau.back();
  const double tau_free = rec.tau_free.back();
  out.checks.push_back(
      detail::bounded("|tau_rmax - ew_expectation| / |ew|", (tau - ew_val) / ew_val, 2e-2));
  out.checks.push_back(
      detail::bounded("|tau_rmax - tau_free_rmax| / |tau|", (tau - tau_free) / tau, 2e-2));

  out.seconds = watch.seconds();
  out.checks.push_back(detail::bounded("runtime [s]", out.seconds, 300.0));
  return out;
}

// Criterion 3: two-open-channel consistency: unitarity, reciprocity,
// stencil-order Hermiticity scaling, pipeline vs EW, channel decomposition.
inline SuiteResult multichannel_suite(const Scenario& s, int threads = 1) {
  detail::Stopwatch watch;
  SuiteResult out;
  out.suite = "multichannel";

  detail::Workbench wb(s, threads);
  out.checks.push_back(
      detail::bounded("max unitarity residual", wb.sweep.max_unitarity_residual(), 1e-6));
  out.checks.push_back(
      detail::bounded("max reciprocity residual", wb.sweep.max_reciprocity_residual(), 1e-6));

  // Hermiticity residual drops ~x4 when the grid is halved (2nd order).
  {
    const auto [elo, ehi] = wb.packet.energy_support();
    const double lo = elo, hi = std::min(ehi, elo + 0.5 * (ehi - elo));
    const auto sw_a = make_sweep(wb.coupling, wb.basis, lo, hi, 41, s.solver, threads);
    const auto sw_b = make_sweep(wb.coupling, wb.basis, lo, hi, 81, s.solver, threads);
    const auto ew_a = ew_delay(sw_a, 2, false);
    const auto ew_b = ew_delay(sw_b, 2, false);
    const double ratio =
        ew_a.segments.front().hermiticity_residual / ew_b.segments.front().hermiticity_residual;
    out.checks.push_back(detail::in_range("Hermiticity residual ratio (h -> h/2)", ratio, 3.0, 5.0));
  }

  const auto ew = ew_delay(wb.sweep, s.stencil_order);
  const double ew_val = ew_expectation(wb.packet, wb.sweep, ew, wb.basis);
  const auto rec = detail::run_delay(s, wb);
  out.checks.push_back(detail::bounded("|tau_rmax - ew_expectation| / |ew|",
                                       (rec.tau.back() - ew_val) / ew_val, 5e-2));

  const double by_channels = ew_expectation_by_channels(wb.packet, wb.sweep, wb.basis,
                                                        s.stencil_order);
  out.checks.push_back(detail::bounded("|channel-decomposed - full| / |full|",
                                       (by_channels - ew_val) / ew_val, 1e-6));

  out.seconds = watch.seconds();
  out.checks.push_back(detail::bounded("runtime [s]", out.seconds, 900.0));
  return out;
}

// Criterion 4: Parseval and round-trip accuracy of the spectral transform on
// the catalog packets of both scenarios plus a bump-profile variant.
inline SuiteResult spectral_suite(const Scenario& well, const Scenario& multi) {
  detail::Stopwatch watch;
  SuiteResult out;
  out.suite = "spectral";

  struct Case {
    std::string name;
    const Scenario* scen;
    bool bump;
  };
  const std::vector<Case> cases = {{"well-gaussian", &well, false},
                                   {"well-bump", &well, true},
                                   {"multi-gaussian", &multi, false}};

  for (const auto& c : cases) {
    const Scenario& s = *c.scen;
    const TransverseBasis basis = s.make_basis();
    Scenario mod = s;
    if (c.bump)
      for (auto& p : mod.packets) {
        p.profile = "bump";
        p.width *= 6.0;  // comparable energy footprint
      }
    const ChannelWavepacket phi = mod.make_packet(basis);

    std::vector<double> lam(std::size_t(s.sweep_points));
    const double dl = (s.sweep_max - s.sweep_min) / double(s.sweep_points - 1);
    for (std::size_t j = 0; j < lam.size(); ++j) lam[j] = s.sweep_min + dl * double(j);

    const FiberVector psi = forward_transform(phi, basis, lam);
    const double parseval = std::abs(psi.norm2() - phi.norm2()) / phi.norm2();
    out.checks.push_back(detail::bounded("Parseval [" + c.name + "]", parseval, 1e-8));

    // Round trip back to a fine momentum grid and compare amplitudes.
    double xi_max = 0.0;
    for (int ch : phi.channels()) {
      const auto [a, b] = phi.momentum_support(ch);
      xi_max = std::max({xi_max, std::abs(a), std::abs(b)});
    }
    const UniformGrid xi_grid = UniformGrid::over(-1.2 * xi_max, 1.2 * xi_max, 4097);
    const ChannelWavepacket back = inverse_transform(psi, xi_grid);
    double num = 0.0, den = 0.0;
    for (int ch : phi.channels()) {
      std::vector<double> dn(xi_grid.n), dd(xi_grid.n);
      for (std::size_t i = 0; i < xi_grid.n; ++i) {
        const double xi = xi_grid.at(i);
        const Complex orig = phi.amplitude(ch, xi);
        const Complex rt = back.amplitude(ch, xi);
        // The transform pair only represents energies covered by the grid.
        const double lam_here = xi * xi + basis.threshold(ch);
        const bool covered = lam_here >= lam.front() && lam_here <= lam.back();
        dn[i] = covered ? std::norm(rt - orig) : 0.0;
        dd[i] = covered ? std::norm(orig) : 0.0;
      }
      num += simpson(dn, xi_grid.step);
      den += simpson(dd, xi_grid.step);
    }
    out.checks.push_back(
        detail::bounded("round trip [" + c.name + "]", std::sqrt(num / den), 1e-6));
  }

  out.seconds = watch.seconds();
  return out;
}

// Criterion 5: the commutator route agrees with the EW expectation.
inline SuiteResult commutator_suite(const Scenario& well, const Scenario& multi,
                                    int threads = 1) {
  detail::Stopwatch watch;
  SuiteResult out;
  out.suite = "commutator";
  for (const auto* sp : {&well, &multi}) {
    const Scenario& s = *sp;
    detail::Workbench wb(s, threads);
    const auto ew = ew_delay(wb.sweep, s.stencil_order);
    const double ew_val = ew_expectation(wb.packet, wb.sweep, ew, wb.basis);
    const auto comm = commutator_expectation(wb.packet, wb.sweep, wb.basis, s.stencil_order);
    out.checks.push_back(detail::bounded(
        "|commutator - ew| / |ew| [" + (sp == &well ? std::string("well") : "multi") + "]",
        (comm.value - ew_val) / ew_val, 1e-4));
  }
  out.seconds = watch.seconds();
  return out;
}

// Criterion 6: halving the coupling strength reduces the Born defect ~x4.
inline SuiteResult born_suite(const Scenario& s, int threads = 1) {
  (void)threads;
  detail::Stopwatch watch;
  SuiteResult out;
  out.suite = "born";

  const TransverseBasis basis = s.make_basis();
  const double lam = 0.5 * (s.sweep_min + s.sweep_max);
  auto defect = [&](double factor) {
    const PotentialSpec scaled = detail::scale_potential(s.potential, factor);
    Scenario mod = s;
    mod.potential = scaled;
    const CouplingMatrix c = mod.make_solver_coupling(basis);
    const SMatrix exact = solve_smatrix(c, basis, lam, s.solver);
    const SMatrix born = born_smatrix(c, basis, lam);
    return (exact.s - born.s).norm();
  };
  const double d1 = defect(0.25);
  const double d2 = defect(0.125);
  out.checks.push_back(detail::in_range("|S_exact - S_Born| ratio under g -> g/2", d1 / d2,
                                        3.5, 4.5));
  out.seconds = watch.seconds();
  return out;
}

// Criterion 7: norm conservation, Strang order, t0-refinement stability.
inline SuiteResult hygiene_suite(const Scenario& s, int threads = 1) {
  detail::Stopwatch watch;
  SuiteResult out;
  out.suite = "hygiene";

  detail::Workbench wb(s, threads);
  GridEngine engine(s.make_grid_spec(), wb.basis, &wb.coupling);

  // Strang self-convergence against a dt/8 reference, packet crossing the
  // potential.
  {
    const auto modes = engine.mode_amplitudes(wb.packet);
    const double span = 2.0;
    auto advance = [&](double dt) {
      GridState st = engine.state_from_modes(modes, 0.0);
      const int steps = int(std::lround(span / dt));
      engine.propagate(st, dt, steps);
      return st;
    };
    const GridState ref = advance(s.dt / 8.0);
    const GridState a = advance(s.dt);
    const GridState b = advance(s.dt / 2.0);
    const double ea = (a.psi - ref.psi).norm();
    const double eb = (b.psi - ref.psi).norm();
    const double order = std::log2(ea / eb);
    out.checks.push_back(detail::in_range("Strang self-convergence order", order, 1.8, 2.2));
  }

  const auto rec1 = detail::run_delay(s, wb);
  out.checks.push_back(detail::bounded("norm drift", rec1.norm_drift, 1e-10));

  const auto rec2 = detail::run_delay(s, wb, 2.0 * s.t0);
  out.checks.push_back(detail::bounded("t0-refinement |dtau| / |tau|",
                                       (rec2.tau.back() - rec1.tau.back()) / rec1.tau.back(),
                                       1e-4));

  out.seconds = watch.seconds();
  return out;
}

}  // namespace wg::verify
