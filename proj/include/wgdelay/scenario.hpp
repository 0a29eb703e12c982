#pragma once

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "wgdelay/coupling.hpp"
#include "wgdelay/errors.hpp"
#include "wgdelay/potential.hpp"
#include "wgdelay/report.hpp"
#include "wgdelay/smatrix.hpp"
#include "wgdelay/spectral.hpp"
#include "wgdelay/timedomain.hpp"
#include "wgdelay/transverse.hpp"

namespace wg {

// A full experiment description: geometry, potential, packets, sweep and
// time-domain grids, tolerances. Units: hbar = 1, 2m = 1 (energy = 1/length^2,
// time = length^2, group velocity = 2 xi).
struct Scenario {
  // waveguide
  double width = kPi;
  int mode_count = 1;

  PotentialSpec potential;

  struct Packet {
    int channel = 1;
    std::string profile = "gaussian";
    double xi0 = 1.0;
    double width = 0.1;
    double weight_re = 1.0;
    double weight_im = 0.0;
    double x0 = 0.0;
  };
  std::vector<Packet> packets;

  // energy sweep
  double sweep_min = 0.0;
  double sweep_max = 0.0;
  int sweep_points = 201;

  // coupling grid (stationary solver)
  double coupling_half_extent = 10.0;
  double coupling_dx = 0.02;
  int quadrature_order = 64;

  // time-domain grid
  double half_extent = 128.0;
  std::size_t grid_n = 4096;
  double dt = 4e-3;
  double t0 = -10.0;
  double t1 = 10.0;
  int sample_stride = 50;

  // radii
  double r_min = 2.0;
  double r_max = 32.0;
  int r_count = 10;

  SolveOpts solver;
  int stencil_order = 2;

  // tolerances
  double eps_leak = 1e-6;
  double norm_tol = 1e-10;
  double prep_overlap = 1e-8;
  double tail_rel_tol = 1e-9;
  double dt_energy_bound = 0.5;  // accuracy guard: dt * (E_max + |V|max) <= bound

  std::string output_dir = "out";
  std::string config_hash;

  TransverseBasis make_basis() const { return TransverseBasis(width, mode_count); }

  CouplingMatrix make_solver_coupling(const TransverseBasis& basis) const {
    const std::size_t n =
        std::size_t(std::lround(2.0 * coupling_half_extent / coupling_dx)) + 1;
    return compute_coupling(potential, basis,
                            UniformGrid{-coupling_half_extent, coupling_dx, n}, quadrature_order);
  }

  GridSpec make_grid_spec() const { return GridSpec{half_extent, grid_n}; }

  ChannelWavepacket make_packet(const TransverseBasis& basis) const {
    require(!packets.empty(), ErrorCode::validation, "scenario has no packets");
    double norm = 0.0;
    for (const auto& p : packets) norm += p.weight_re * p.weight_re + p.weight_im * p.weight_im;
    norm = std::sqrt(norm);
    std::vector<PacketComponent> comps;
    for (const auto& p : packets) {
      PacketComponent c;
      c.channel = p.channel;
      c.nu = basis.threshold(p.channel);
      c.weight = Complex(p.weight_re, p.weight_im) / norm;
      c.profile = p.profile == "bump" ? PacketComponent::Profile::bump
                                      : PacketComponent::Profile::gaussian;
      c.xi0 = p.xi0;
      c.width = p.width;
      c.x0 = p.x0;
      comps.push_back(c);
    }
    return ChannelWavepacket::analytic(std::move(comps));
  }

  std::vector<double> make_radii() const {
    std::vector<double> r;
    if (r_count <= 1) {
      r.push_back(r_max);
      return r;
    }
    const double ratio = std::pow(r_max / r_min, 1.0 / double(r_count - 1));
    double x = r_min;
    for (int i = 0; i < r_count; ++i) {
      r.push_back(std::min(x, r_max));
      x *= ratio;
    }
    r.back() = r_max;
    return r;
  }

  SojournConfig make_sojourn_config() const {
    SojournConfig c;
    c.t0 = t0;
    c.t1 = t1;
    c.dt = dt;
    c.sample_stride = sample_stride;
    c.eps_leak = eps_leak;
    c.norm_tol = norm_tol;
    c.prep_overlap = prep_overlap;
    c.tail_rel_tol = tail_rel_tol;
    return c;
  }
};

namespace detail {

inline LongitudinalProfile parse_longitudinal(const nlohmann::json& j) {
  LongitudinalProfile p;
  const std::string kind = j.at("profile").get<std::string>();
  if (kind == "gaussian") p.kind = LongitudinalProfile::Kind::gaussian;
  else if (kind == "box") p.kind = LongitudinalProfile::Kind::box;
  else if (kind == "sech2") p.kind = LongitudinalProfile::Kind::sech2;
  else fail(ErrorCode::validation, "unknown longitudinal profile '" + kind + "'");
  p.strength = j.at("strength").get<double>();
  p.width = j.at("width").get<double>();
  p.center = j.value("center", 0.0);
  require(p.width > 0.0, ErrorCode::validation, "potential.longitudinal.width must be positive");
  return p;
}

inline TransverseProfile parse_transverse(const nlohmann::json& j) {
  TransverseProfile p;
  const std::string kind = j.at("profile").get<std::string>();
  if (kind == "constant") {
    p.kind = TransverseProfile::Kind::constant;
  } else if (kind == "gaussian_bump") {
    p.kind = TransverseProfile::Kind::gaussian_bump;
    p.center = j.at("center").get<double>();
    p.width = j.at("width").get<double>();
    require(p.width > 0.0, ErrorCode::validation, "potential.transverse.width must be positive");
  } else {
    fail(ErrorCode::validation, "unknown transverse profile '" + kind + "'");
  }
  return p;
}

inline PotentialSpec parse_potential(const nlohmann::json& j) {
  const std::string kind = j.value("kind", "separable");
  if (kind == "zero") return PotentialSpec::zero();
  if (kind == "separable") {
    return PotentialSpec::separable(parse_transverse(j.at("transverse")),
                                    parse_longitudinal(j.at("longitudinal")));
  }
  if (kind == "sum") {
    std::vector<SeparableTerm> terms;
    for (const auto& t : j.at("terms"))
      terms.push_back({parse_transverse(t.at("transverse")),
                       parse_longitudinal(t.at("longitudinal"))});
    return PotentialSpec::sum(std::move(terms));
  }
  if (kind == "grid") {
    GridSampledPotential g;
    const auto& jy = j.at("y");
    const auto& jx = j.at("x");
    g.y_grid = UniformGrid::over(jy.at("min").get<double>(), jy.at("max").get<double>(),
                                 jy.at("n").get<std::size_t>());
    g.x_grid = UniformGrid::over(jx.at("min").get<double>(), jx.at("max").get<double>(),
                                 jx.at("n").get<std::size_t>());
    for (const auto& row : j.at("values"))
      g.values.push_back(row.get<std::vector<double>>());
    require(g.values.size() == g.y_grid.n, ErrorCode::validation,
            "potential.values row count must equal y.n");
    for (const auto& row : g.values)
      require(row.size() == g.x_grid.n, ErrorCode::validation,
              "potential.values column count must equal x.n");
    return PotentialSpec::sampled(std::move(g));
  }
  fail(ErrorCode::validation, "unknown potential.kind '" + kind + "'");
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
  Scenario s;
  const auto& wg_j = j.at("waveguide");
  s.width = wg_j.at("width").get<double>();
  s.mode_count = wg_j.at("mode_count").get<int>();

  s.potential = detail::parse_potential(j.at("potential"));

  for (const auto& pj : j.value("packets", nlohmann::json::array())) {
    Scenario::Packet p;
    p.channel = pj.at("channel").get<int>();
    p.profile = pj.value("profile", "gaussian");
    p.xi0 = pj.at("xi0").get<double>();
    p.width = pj.at("width").get<double>();
    p.weight_re = pj.value("weight_re", 1.0);
    p.weight_im = pj.value("weight_im", 0.0);
    p.x0 = pj.value("x0", 0.0);
    s.packets.push_back(p);
  }

  const auto& sw = j.at("sweep");
  s.sweep_min = sw.at("lambda_min").get<double>();
  s.sweep_max = sw.at("lambda_max").get<double>();
  s.sweep_points = sw.value("points", 201);

  const auto& grids = j.at("grids");
  const auto& cg = grids.at("coupling");
  s.coupling_half_extent = cg.at("half_extent").get<double>();
  s.coupling_dx = cg.at("dx").get<double>();
  s.quadrature_order = cg.value("quadrature_order", 64);
  const auto& tg = grids.at("time");
  s.half_extent = tg.at("half_extent").get<double>();
  s.grid_n = tg.at("n").get<std::size_t>();
  s.dt = tg.at("dt").get<double>();
  s.t0 = tg.at("t0").get<double>();
  s.t1 = tg.at("t1").get<double>();
  s.sample_stride = tg.value("sample_stride", 50);

  const auto& rad = j.at("radii");
  s.r_max = rad.at("r_max").get<double>();
  s.r_min = rad.value("r_min", std::min(2.0, s.r_max));
  s.r_count = rad.value("count", 10);

  if (j.contains("solver")) {
    const auto& so = j.at("solver");
    s.solver.n_closed = so.value("n_closed", 4);
    s.solver.order = so.value("order", 4);
    s.solver.eps_v = so.value("eps_v", 1e-12);
    s.solver.slice_width = so.value("slice_width", 0.0);
    s.solver.cond_max = so.value("cond_max", 1e12);
    s.solver.unitarity_tol = so.value("unitarity_tol", 1e-6);
  }
  s.stencil_order = j.value("stencil_order", 2);

  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    s.eps_leak = t.value("leakage", 1e-6);
    s.norm_tol = t.value("norm_drift", 1e-10);
    s.prep_overlap = t.value("prep_overlap", 1e-8);
    s.tail_rel_tol = t.value("tail", 1e-9);
    s.dt_energy_bound = t.value("dt_energy_bound", 0.5);
  }

  s.output_dir = j.value("output_dir", "out");
  s.config_hash = report::fnv1a_hex(j.dump());
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(bool(is), ErrorCode::io, "cannot open scenario file " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    fail(ErrorCode::validation, "scenario parse error: " + std::string(e.what()));
  }
  return parse_scenario(j);
}

// Internal-consistency checks; throws with the violated invariant named.
inline void validate_scenario(const Scenario& s) {
  require(s.width > 0.0, ErrorCode::validation, "waveguide.width must be positive");
  require(s.mode_count >= 1, ErrorCode::validation, "waveguide.mode_count must be >= 1");
  const TransverseBasis basis = s.make_basis();

  require(s.sweep_max > s.sweep_min, ErrorCode::validation,
          "sweep.lambda_max must exceed sweep.lambda_min");
  require(s.sweep_min > basis.threshold(1), ErrorCode::validation,
          "sweep.lambda_min must lie above the first threshold");
  require(s.sweep_points >= 5, ErrorCode::validation, "sweep.points must be >= 5");

  require((s.grid_n & (s.grid_n - 1)) == 0, ErrorCode::validation,
          "grids.time.n must be a power of two");
  require(s.dt > 0.0, ErrorCode::validation, "grids.time.dt must be positive");
  require(s.t0 < 0.0 && s.t1 > 0.0, ErrorCode::validation,
          "time window must satisfy t0 < 0 < t1");
  require(s.sample_stride >= 1, ErrorCode::validation, "grids.time.sample_stride must be >= 1");

  require(s.r_max <= s.half_extent / 2.0 + 1e-12, ErrorCode::validation,
          "radii.r_max must satisfy r_max <= grids.time.half_extent / 2");
  require(s.r_min > 0.0 && s.r_min <= s.r_max, ErrorCode::validation,
          "radii.r_min must satisfy 0 < r_min <= r_max");

  const double support = s.potential.support_radius(1e-16);
  require(s.coupling_half_extent >= support || s.potential.is_zero(), ErrorCode::validation,
          "grids.coupling.half_extent must cover the potential support radius " +
              std::to_string(support));

  if (!s.packets.empty()) {
    const ChannelWavepacket phi = s.make_packet(basis);
    validate_packet(phi, basis, s.sweep_min, s.sweep_max);

    // Accuracy guard on the step size and Nyquist margin on the grid.
    const auto [elo, ehi] = phi.energy_support();
    (void)elo;
    double vmax = 0.0;
    if (!s.potential.is_zero()) {
      const auto c = s.make_solver_coupling(basis);
      vmax = c.peak();
    }
    require(s.dt * (ehi + vmax) <= s.dt_energy_bound, ErrorCode::validation,
            "grids.time.dt violates the accuracy bound dt * (E_max + |V|_max) <= " +
                std::to_string(s.dt_energy_bound));
    double xi_max = 0.0;
    for (int ch : phi.channels()) {
      const auto [a, b] = phi.momentum_support(ch);
      xi_max = std::max({xi_max, std::abs(a), std::abs(b)});
    }
    const GridSpec gs = s.make_grid_spec();
    require(kPi / gs.dx() >= 4.0 * xi_max, ErrorCode::validation,
            "grids.time.dx violates the Nyquist rule pi/dx >= 4 * max packet momentum");
  }
}

}  // namespace wg
