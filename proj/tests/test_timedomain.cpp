#include <catch2/catch_amalgamated.hpp>

#include "wgdelay/oracles.hpp"
#include "wgdelay/timedomain.hpp"

using namespace wg;

namespace {

const double kL = kPi;

PacketComponent gaussian_component(int channel, double nu, double xi0, double sigma,
                                   double x0 = 0.0) {
  PacketComponent c;
  c.channel = channel;
  c.nu = nu;
  c.profile = PacketComponent::Profile::gaussian;
  c.xi0 = xi0;
  c.width = sigma;
  c.x0 = x0;
  return c;
}

CouplingMatrix well_coupling(const TransverseBasis& basis, double v0, double a) {
  LongitudinalProfile box;
  box.kind = LongitudinalProfile::Kind::box;
  box.strength = -v0;
  box.width = a;
  return compute_coupling(PotentialSpec::separable(TransverseProfile{}, box), basis,
                          UniformGrid::over(-4.0, 4.0, 513));
}

CouplingMatrix gauss_coupling(const TransverseBasis& basis, double g, double w) {
  TransverseProfile u;
  u.kind = TransverseProfile::Kind::gaussian_bump;
  u.center = 0.4 * kL;
  u.width = 0.8;
  LongitudinalProfile v;
  v.kind = LongitudinalProfile::Kind::gaussian;
  v.strength = g;
  v.width = w;
  return compute_coupling(PotentialSpec::separable(u, v), basis, UniformGrid{-10.0, 0.02, 1001});
}

// Position moments of a grid state in one channel.
std::pair<double, double> channel_moments(const GridEngine& engine, const GridState& st, int ch) {
  const auto& spec = engine.spec();
  double w = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t j = 0; j < spec.n; ++j) {
    const double d = std::norm(st.psi(Eigen::Index(j), ch - 1));
    const double x = spec.x(j);
    w += d;
    m1 += d * x;
    m2 += d * x * x;
  }
  m1 /= w;
  m2 = m2 / w - m1 * m1;
  return {m1, std::sqrt(m2)};
}

}  // namespace

TEST_CASE("free evolution of a wavepacket is exact in the spectral representation") {
  const auto phi = ChannelWavepacket::analytic({gaussian_component(1, 1.0, 1.1, 0.05)});
  const auto same = free_evolve(phi, 0.0);
  CHECK(std::abs(same.amplitude(1, 1.1) - phi.amplitude(1, 1.1)) == 0.0);

  const auto later = free_evolve(phi, 3.7);
  CHECK(later.norm2() == Catch::Approx(phi.norm2()).epsilon(1e-15));
  // Pure phase: amplitude magnitudes untouched.
  for (double xi : {0.9, 1.1, 1.3})
    CHECK(std::abs(std::abs(later.amplitude(1, xi)) - std::abs(phi.amplitude(1, xi))) < 1e-16);
}

TEST_CASE("grid free evolution reproduces the closed-form Gaussian dispersion") {
  const auto basis = build_transverse_basis(kL, 1);
  GridEngine engine(GridSpec{128.0, 4096}, basis, nullptr);
  const double xi0 = 1.1, sigma = 0.05;
  const auto phi = ChannelWavepacket::analytic({gaussian_component(1, 1.0, xi0, sigma)});
  const auto modes = engine.mode_amplitudes(phi);

  for (double t : {-7.0, 0.0, 9.5}) {
    const GridState st = engine.state_from_modes(modes, t);
    const auto [mean, width] = channel_moments(engine, st, 1);
    const double sx = 1.0 / (2.0 * sigma);
    const double expect_mean = 2.0 * xi0 * t;
    const double expect_width = std::sqrt(sx * sx + 4.0 * sigma * sigma * t * t);
    CHECK(std::abs(mean - expect_mean) < 1e-10 * std::max(1.0, std::abs(expect_mean)));
    CHECK(std::abs(width - expect_width) < 1e-10 * expect_width);
    CHECK(std::abs(engine.norm2(st) - 1.0) < 1e-12);
  }
}

TEST_CASE("modes_from_state inverts state_from_modes") {
  const auto basis = build_transverse_basis(kL, 2);
  GridEngine engine(GridSpec{64.0, 1024}, basis, nullptr);
  const auto phi = ChannelWavepacket::analytic({gaussian_component(1, 1.0, 1.1, 0.05)});
  const auto modes = engine.mode_amplitudes(phi);
  const GridState st = engine.state_from_modes(modes, -4.2);
  const auto back = engine.modes_from_state(st);
  double dev = 0.0;
  for (std::size_t c = 0; c < back.size(); ++c)
    dev = std::max(dev, (back[c] - modes[c]).cwiseAbs().maxCoeff());
  CHECK(dev < 1e-12);
}

TEST_CASE("split-step with zero potential matches exact free evolution") {
  const auto basis = build_transverse_basis(kL, 2);
  GridEngine engine(GridSpec{64.0, 1024}, basis, nullptr);
  const auto phi = ChannelWavepacket::analytic({gaussian_component(1, 1.0, 1.1, 0.05)});
  const auto modes = engine.mode_amplitudes(phi);
  GridState st = engine.state_from_modes(modes, 0.0);
  engine.propagate(st, 0.01, 500);
  const GridState ref = engine.state_from_modes(modes, 5.0);
  CHECK((st.psi - ref.psi).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("Strang splitting self-converges at second order") {
  const auto basis = build_transverse_basis(kL, 3);
  const auto c = well_coupling(basis, 2.0, 1.0);
  GridEngine engine(GridSpec{64.0, 2048}, basis, &c);
  const auto phi = ChannelWavepacket::analytic({gaussian_component(1, 1.0, 1.1, 0.055)});
  const auto modes = engine.mode_amplitudes(phi);

  auto advance = [&](double dt) {
    GridState st = engine.state_from_modes(modes, 0.0);
    engine.propagate(st, dt, int(std::lround(2.0 / dt)));
    return st;
  };
  const GridState ref = advance(0.02 / 8.0);
  const double e1 = (advance(0.02).psi - ref.psi).norm();
  const double e2 = (advance(0.01).psi - ref.psi).norm();
  CHECK(e1 / e2 == Catch::Approx(4.2).margin(0.7));
}

TEST_CASE("diagonal coupling leaves other channels empty") {
  const auto basis = build_transverse_basis(kL, 3);
  const auto c = well_coupling(basis, 2.0, 1.0);  // constant transverse profile
  GridEngine engine(GridSpec{64.0, 1024}, basis, &c);
  const auto phi = ChannelWavepacket::analytic({gaussian_component(1, 1.0, 1.1, 0.055)});
  GridState st = engine.state_from_modes(engine.mode_amplitudes(phi), 0.0);
  engine.propagate(st, 0.01, 400);
  CHECK(st.psi.col(1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(st.psi.col(2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("norm and energy are conserved through the potential region") {
  const auto basis = build_transverse_basis(kL, 4);
  const auto c = gauss_coupling(basis, -0.8, 1.2);
  GridEngine engine(GridSpec{128.0, 4096}, basis, &c);
  const auto phi = ChannelWavepacket::analytic({gaussian_component(1, 1.0, 2.28, 0.05, -40.0)});
  GridState st = engine.state_from_modes(engine.mode_amplitudes(phi), 0.0);
  const double n0 = engine.norm2(st);
  const double e0 = engine.energy(st);
  engine.propagate(st, 0.005, 4000);  // crosses the coupling region
  CHECK(std::abs(engine.norm2(st) - n0) < 1e-10 * n0);
  CHECK(std::abs(engine.energy(st) - e0) < 1e-8 * std::abs(e0));
}

TEST_CASE("prepared state sits clear of the interaction region and moves inward") {
  const auto basis = build_transverse_basis(kL, 3);
  const auto c = well_coupling(basis, 2.0, 1.0);
  GridEngine engine(GridSpec{128.0, 4096}, basis, &c);
  const auto phi = ChannelWavepacket::analytic({gaussian_component(1, 1.0, 1.1, 0.055)});

  PrepDiag diag;
  const double t0 = -30.0;
  const GridState st = prepare_scattering_state(engine, phi, t0, 1.0, 1e-8, &diag);
  CHECK(diag.overlap <= 1e-8);
  CHECK(diag.moving_inward);
  const auto [mean, width] = channel_moments(engine, st, 1);
  (void)width;
  CHECK(mean == Catch::Approx(2.0 * 1.1 * t0).margin(0.05));

  // A packet already past the potential and moving away is rejected.
  const auto wrong =
      ChannelWavepacket::analytic({gaussian_component(1, 1.0, 1.1, 0.055, -2.0 * 1.1 * t0)});
  CHECK_THROWS_AS(prepare_scattering_state(engine, wrong, t0, 1.0, 1e-8), Error);

  CHECK_THROWS_AS(prepare_scattering_state(engine, phi, +5.0, 1.0, 1e-8), Error);
}

TEST_CASE("free sojourn against the closed-form Gaussian oracle") {
  const auto basis = build_transverse_basis(kL, 1);
  GridEngine engine(GridSpec{256.0, 8192}, basis, nullptr);
  const double xi0 = 1.1, sigma = 0.055;
  const auto phi = ChannelWavepacket::analytic({gaussian_component(1, 1.0, xi0, sigma)});

  const std::vector<double> radii = {0.0, 5.0, 20.0, 60.0};
  const auto got = sojourn_free(engine, phi, radii, 0.125);

  CHECK(got[0] == 0.0);
  oracles::GaussianPacket1D p;
  p.xi0 = xi0;
  p.sigma_xi = sigma;
  for (std::size_t i = 1; i < radii.size(); ++i) {
    const double ref = oracles::free_gaussian_sojourn(p, radii[i]);
    CHECK(std::abs(got[i] - ref) <= 1e-6 * ref);
  }
  // Monotone in r.
  for (std::size_t i = 1; i < radii.size(); ++i) CHECK(got[i] >= got[i - 1]);
}

TEST_CASE("radial probe: totals, monotonicity, partial cells") {
  const auto basis = build_transverse_basis(kL, 1);
  GridEngine engine(GridSpec{64.0, 1024}, basis, nullptr);
  const auto phi = ChannelWavepacket::analytic({gaussian_component(1, 1.0, 1.1, 0.055)});
  const GridState st = engine.state_from_modes(engine.mode_amplitudes(phi), 0.0);
  RadialProbe probe(st.psi, engine.spec());
  CHECK(probe.total() == Catch::Approx(1.0).epsilon(1e-12));
  double prev = 0.0;
  for (double r = 0.5; r < 32.0; r += 0.7) {
    const double p = probe.within(r);
    CHECK(p >= prev);
    prev = p;
  }
  CHECK(probe.within(64.0) == Catch::Approx(probe.total()));
  // Partial-cell interpolation: within() is smooth in r at the 1e-6 level.
  const double a = probe.within(10.0), b = probe.within(10.0 + 1e-6);
  CHECK(std::abs(b - a) < 1e-6);
}

TEST_CASE("scattered modes reduce to the incoming modes for a free sweep") {
  const auto basis = build_transverse_basis(kL, 3);
  const auto zero =
      compute_coupling(PotentialSpec::zero(), basis, UniformGrid::over(-4.0, 4.0, 101));
  const auto sweep = make_sweep(zero, basis, 1.25, 3.75, 61);
  GridEngine engine(GridSpec{128.0, 4096}, basis, nullptr);
  const auto phi = ChannelWavepacket::analytic({gaussian_component(1, 1.0, 1.1, 0.055)});
  const auto in_modes = engine.mode_amplitudes(phi);
  const auto out_modes = scattered_mode_amplitudes(engine, phi, sweep, basis);
  double dev = 0.0, peak = 0.0;
  for (std::size_t c = 0; c < in_modes.size(); ++c) {
    dev = std::max(dev, (out_modes[c] - in_modes[c]).cwiseAbs().maxCoeff());
    peak = std::max(peak, in_modes[c].cwiseAbs().maxCoeff());
  }
  CHECK(dev < 1e-12 * peak);
}

TEST_CASE("end-to-end: square-well delay matches the EW expectation") {
  const auto basis = build_transverse_basis(kL, 3);
  const auto c = well_coupling(basis, 2.0, 1.0);
  const auto sweep = make_sweep(c, basis, 1.25, 3.85, 601);
  const auto phi = ChannelWavepacket::analytic({gaussian_component(1, 1.0, 1.1, 0.055)});
  const auto ew = ew_delay(sweep, 4);
  const double ew_val = ew_expectation(phi, sweep, ew, basis);

  GridEngine engine(GridSpec{128.0, 4096}, basis, &c);
  const auto sphi = scattered_mode_amplitudes(engine, phi, sweep, basis);
  SojournConfig cfg;
  cfg.t0 = -30.0;
  cfg.t1 = 34.0;
  cfg.dt = 0.01;
  cfg.sample_stride = 20;
  const std::vector<double> radii = {8.0, 16.0, 24.0, 32.0, 40.0, 48.0, 56.0, 64.0};
  const auto rec = time_delay_on_grid(engine, phi, sphi, radii, c.matching_radius(), cfg);

  CHECK(rec.norm_drift < 1e-10);
  CHECK(rec.max_leakage < 1e-6);
  for (std::size_t i = 0; i < radii.size(); ++i) {
    CHECK(rec.t_full[i] >= 0.0);
    CHECK(rec.t0_phi[i] >= 0.0);
    if (i > 0) {
      CHECK(rec.t_full[i] >= rec.t_full[i - 1]);
      CHECK(rec.t0_phi[i] >= rec.t0_phi[i - 1]);
    }
  }
  CHECK(std::abs(rec.tau.back() - ew_val) < 0.03 * std::abs(ew_val));
  CHECK(std::abs(rec.tau_free.back() - rec.tau.back()) < 0.03 * std::abs(rec.tau.back()));
  CHECK(std::abs(rec.tau_plateau - ew_val) < 0.05 * std::abs(ew_val));
}

TEST_CASE("leakage aborts with domain-too-small") {
  const auto basis = build_transverse_basis(kL, 1);
  GridEngine engine(GridSpec{32.0, 512}, basis, nullptr);
  const auto phi = ChannelWavepacket::analytic({gaussian_component(1, 1.0, 1.1, 0.055)});
  const auto modes = engine.mode_amplitudes(phi);
  SojournConfig cfg;
  cfg.t0 = -2.0;
  cfg.t1 = 30.0;  // packet exits the box well before this
  cfg.dt = 0.01;
  cfg.sample_stride = 25;
  try {
    time_delay_on_grid(engine, phi, modes, {4.0}, 0.0, cfg);
    FAIL("expected domain-too-small");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::domain_too_small);
  }
}

TEST_CASE("non-convergent tails abort with window-too-short") {
  const auto basis = build_transverse_basis(kL, 1);
  GridEngine engine(GridSpec{128.0, 2048}, basis, nullptr);
  const auto phi = ChannelWavepacket::analytic({gaussian_component(1, 1.0, 1.1, 0.055)});
  SojournConfig cfg;
  cfg.tail_max_time = 4.0;  // far too short for the packet to clear r
  try {
    sojourn_free(engine, phi, {20.0}, 0.25, cfg);
    FAIL("expected window-too-short");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::window_too_short);
  }
}
