#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "wgdelay/report.hpp"
#include "wgdelay/scenario.hpp"
#include "wgdelay/verify.hpp"

namespace wg::cli {

namespace detail {

inline std::filesystem::path resolve_out_dir(const Scenario& s, const std::string& override_dir) {
  if (const char* env = std::getenv("WGDELAY_OUT"); env && *env) return env;
  if (!override_dir.empty()) return override_dir;
  return s.output_dir;
}

inline void write_fiber_csv(const std::filesystem::path& path, const FiberVector& psi) {
  report::CsvBuilder csv({"lambda", "alpha", "direction", "re", "im"});
  for (std::size_t j = 0; j < psi.lambdas.size(); ++j) {
    for (std::size_t c = 0; c < psi.channels.size(); ++c) {
      for (int d : {0, 1}) {
        const Complex v = psi.v[j](2 * Eigen::Index(c) + d);
        csv.row(psi.lambdas[j], psi.channels[c], d ? "+" : "-", v.real(), v.imag());
      }
    }
  }
  report::atomic_write(path, csv.str());
}

inline int cmd_modes(const Scenario& s, const std::filesystem::path& out) {
  const TransverseBasis basis = s.make_basis();
  report::CsvBuilder csv({"alpha", "nu_alpha"});
  for (int a = 1; a <= basis.mode_count(); ++a) csv.row(a, basis.threshold(a));
  report::atomic_write(out / "modes.csv", csv.str());

  nlohmann::json summary;
  summary["config_hash"] = s.config_hash;
  summary["thresholds"] = basis.thresholds();
  summary["open_at_sweep_min"] = open_channels(s.sweep_min, basis).channels;
  summary["open_at_sweep_max"] = open_channels(s.sweep_max, basis).channels;
  report::atomic_write(out / "modes_summary.json", summary.dump(2) + "\n");
  std::cout << "modes: " << basis.mode_count() << " channels, nu_1 = " << basis.threshold(1)
            << ", wrote " << (out / "modes.csv").string() << "\n";
  return 0;
}

inline int cmd_smatrix(const Scenario& s, const std::filesystem::path& out, int threads) {
  const TransverseBasis basis = s.make_basis();
  const CouplingMatrix coupling = s.make_solver_coupling(basis);
  const SMatrixSweep sweep =
      make_sweep(coupling, basis, s.sweep_min, s.sweep_max, s.sweep_points, s.solver, threads);
  const EwDelaySweep ew = ew_delay(sweep, s.stencil_order);

  report::CsvBuilder scsv({"lambda", "row", "col", "re", "im"});
  report::CsvBuilder tcsv({"lambda", "row", "col", "re", "im"});
  report::CsvBuilder rcsv({"lambda", "unitarity", "reciprocity"});
  for (std::size_t g = 0; g < sweep.segments.size(); ++g) {
    const auto& seg = sweep.segments[g];
    for (std::size_t j = 0; j < seg.lambdas.size(); ++j) {
      const auto& m = seg.mats[j];
      for (Eigen::Index r = 0; r < m.s.rows(); ++r)
        for (Eigen::Index c = 0; c < m.s.cols(); ++c)
          scsv.row(seg.lambdas[j], r, c, m.s(r, c).real(), m.s(r, c).imag());
      const auto& tau = ew.segments[g].tau[j];
      for (Eigen::Index r = 0; r < tau.rows(); ++r)
        for (Eigen::Index c = 0; c < tau.cols(); ++c)
          tcsv.row(seg.lambdas[j], r, c, tau(r, c).real(), tau(r, c).imag());
      rcsv.row(seg.lambdas[j], m.unitarity_residual(), m.reciprocity_residual());
    }
  }
  report::atomic_write(out / "smatrix.csv", scsv.str());
  report::atomic_write(out / "ew_delay.csv", tcsv.str());
  report::atomic_write(out / "smatrix_residuals.csv", rcsv.str());

  nlohmann::json summary;
  summary["config_hash"] = s.config_hash;
  summary["unitarity_max"] = sweep.max_unitarity_residual();
  summary["reciprocity_max"] = sweep.max_reciprocity_residual();
  for (const auto& es : ew.segments) {
    summary["ew_hermiticity_residuals"].push_back(es.hermiticity_residual);
    summary["ew_truncation_estimates"].push_back(es.truncation_estimate);
  }
  report::atomic_write(out / "smatrix_summary.json", summary.dump(2) + "\n");
  std::cout << "smatrix: unitarity max " << sweep.max_unitarity_residual() << ", wrote "
            << (out / "smatrix.csv").string() << "\n";
  return 0;
}

inline int cmd_sojourn(const Scenario& s, const std::filesystem::path& out) {
  const TransverseBasis basis = s.make_basis();
  const ChannelWavepacket phi = s.make_packet(basis);
  validate_packet(phi, basis, s.sweep_min, s.sweep_max);
  GridEngine engine(s.make_grid_spec(), basis, nullptr);
  const auto radii = s.make_radii();
  const auto t0 = sojourn_free(engine, phi, radii, s.dt * s.sample_stride,
                               s.make_sojourn_config());
  report::CsvBuilder csv({"r", "t0_phi"});
  for (std::size_t i = 0; i < radii.size(); ++i) csv.row(radii[i], t0[i]);
  report::atomic_write(out / "sojourn_free.csv", csv.str());

  nlohmann::json summary;
  summary["config_hash"] = s.config_hash;
  summary["t0_r_max"] = t0.back();
  report::atomic_write(out / "sojourn_summary.json", summary.dump(2) + "\n");
  std::cout << "sojourn: T0(r_max) = " << t0.back() << ", wrote "
            << (out / "sojourn_free.csv").string() << "\n";
  return 0;
}

inline int cmd_delay(const Scenario& s, const std::filesystem::path& out, int threads) {
  const TransverseBasis basis = s.make_basis();
  const ChannelWavepacket phi = s.make_packet(basis);
  validate_packet(phi, basis, s.sweep_min, s.sweep_max);
  const CouplingMatrix coupling = s.make_solver_coupling(basis);
  const SMatrixSweep sweep =
      make_sweep(coupling, basis, s.sweep_min, s.sweep_max, s.sweep_points, s.solver, threads);
  const EwDelaySweep ew = ew_delay(sweep, s.stencil_order);
  const double ew_val = ew_expectation(phi, sweep, ew, basis);

  GridEngine engine(s.make_grid_spec(), basis, s.potential.is_zero() ? nullptr : &coupling);
  const auto sphi_modes = scattered_mode_amplitudes(engine, phi, sweep, basis);
  SojournConfig cfg = s.make_sojourn_config();
  cfg.trace_radii = 3;
  const SojournRecord rec = time_delay_on_grid(engine, phi, sphi_modes, s.make_radii(),
                                               coupling.matching_radius(s.solver.eps_v), cfg);

  report::CsvBuilder csv({"r", "t_full", "t0_phi", "t0_sphi", "tau", "tau_free"});
  for (std::size_t i = 0; i < rec.radii.size(); ++i)
    csv.row(rec.radii[i], rec.t_full[i], rec.t0_phi[i], rec.t0_sphi[i], rec.tau[i],
            rec.tau_free[i]);
  report::atomic_write(out / "delay.csv", csv.str());

  {
    std::vector<std::string> header = {"t"};
    for (double r : rec.trace_radii) header.push_back("norm_r=" + std::to_string(r));
    report::CsvBuilder trace(header);
    for (std::size_t i = 0; i < rec.trace_times.size(); ++i) {
      std::ostringstream row;
      row << std::setprecision(17) << rec.trace_times[i];
      for (std::size_t m = 0; m < rec.trace.size(); ++m) row << ',' << rec.trace[m][i];
      trace.row(row.str());
    }
    report::atomic_write(out / "sojourn_trace.csv", trace.str());
  }

  {
    const auto [elo, ehi] = phi.energy_support();
    const auto& seg = sweep.segment_containing(elo, ehi);
    const FiberVector psi = forward_transform(phi, basis, seg.lambdas);
    write_fiber_csv(out / "phi_fiber.csv", psi);
    write_fiber_csv(out / "sphi_fiber.csv", apply_smatrix(psi, sweep));
  }

  nlohmann::json summary;
  summary["config_hash"] = s.config_hash;
  summary["tau_plateau"] = rec.tau_plateau;
  summary["ew_expectation"] = ew_val;
  summary["relative_gap"] = std::abs(rec.tau_plateau - ew_val) / std::abs(ew_val);
  summary["tau_r_max"] = rec.tau.back();
  summary["tau_free_r_max"] = rec.tau_free.back();
  summary["norm_drift"] = rec.norm_drift;
  summary["max_leakage"] = rec.max_leakage;
  summary["prep_overlap"] = rec.prep_overlap_achieved;
  summary["tail_bound"] = rec.tail_bound.back();
  summary["unitarity_max"] = sweep.max_unitarity_residual();
  report::atomic_write(out / "delay_summary.json", summary.dump(2) + "\n");
  std::cout << "delay: tau_plateau = " << rec.tau_plateau << ", ew = " << ew_val
            << ", gap = " << summary["relative_gap"].get<double>() << ", wrote "
            << (out / "delay.csv").string() << "\n";
  return 0;
}

inline void print_suite(const verify::SuiteResult& r) {
  for (const auto& c : r.checks) {
    std::cout << (c.pass ? "PASS" : "FAIL") << "  [" << r.suite << "] " << c.name
              << ": value = " << c.value << ", bound = " << c.bound;
    if (!c.note.empty()) std::cout << " (" << c.note << ")";
    std::cout << "\n";
  }
}

inline int cmd_verify(const std::string& suite, const std::filesystem::path& dir,
                      const std::filesystem::path& out, int threads) {
  namespace fs = std::filesystem;
  auto load = [&](const std::string& name) {
    const fs::path p = dir / (name + ".json");
    Scenario s = load_scenario(p);
    validate_scenario(s);
    return s;
  };

  std::vector<verify::SuiteResult> results;
  const bool all = suite == "all";
  if (all || suite == "free") results.push_back(verify::free_suite(load("free"), threads));
  if (all || suite == "well") results.push_back(verify::well_suite(load("square_well"), threads));
  if (all || suite == "multichannel")
    results.push_back(verify::multichannel_suite(load("multichannel"), threads));
  if (all || suite == "spectral")
    results.push_back(verify::spectral_suite(load("square_well"), load("multichannel")));
  if (all || suite == "commutator")
    results.push_back(
        verify::commutator_suite(load("square_well"), load("multichannel"), threads));
  if (all || suite == "born") results.push_back(verify::born_suite(load("multichannel"), threads));
  if (all || suite == "hygiene")
    results.push_back(verify::hygiene_suite(load("hygiene"), threads));
  require(!results.empty(), ErrorCode::invalid_argument, "unknown verify suite '" + suite + "'");

  nlohmann::json j;
  bool ok = true;
  for (const auto& r : results) {
    print_suite(r);
    ok = ok && r.passed();
    nlohmann::json js;
    js["suite"] = r.suite;
    js["seconds"] = r.seconds;
    js["passed"] = r.passed();
    for (const auto& c : r.checks)
      js["checks"].push_back({{"name", c.name}, {"value", c.value}, {"bound", c.bound},
                              {"pass", c.pass}});
    j.push_back(js);
  }
  report::atomic_write(out / ("verify_" + suite + ".json"), j.dump(2) + "\n");
  std::cout << (ok ? "verify: all checks passed" : "verify: FAILURES present") << "\n";
  return ok ? 0 : 4;
}

}  // namespace detail

inline int run(std::vector<std::string> args) {
  CLI::App app{"wgdelay: multichannel waveguide scattering and time-delay laboratory"};
  app.require_subcommand(1);

  std::string scenario_path, out_override, scenarios_dir = "scenarios", suite = "all";
  int threads = 1;
  double lambda_min = 0.0, lambda_max = 0.0, r_max = 0.0, t0 = 0.0, dt = 0.0;
  int points = 0;

  auto add_common = [&](CLI::App* cmd, bool needs_scenario) {
    if (needs_scenario)
      cmd->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    cmd->add_option("--out", out_override, "output directory override");
    cmd->add_option("--threads", threads, "sweep worker threads");
  };

  auto* modes = app.add_subcommand("modes", "transverse mode table");
  add_common(modes, true);
  auto* smatrix = app.add_subcommand("smatrix", "S-matrix and EW-delay sweep");
  add_common(smatrix, true);
  smatrix->add_option("--lambda-min", lambda_min, "sweep lower edge override");
  smatrix->add_option("--lambda-max", lambda_max, "sweep upper edge override");
  smatrix->add_option("--points", points, "sweep point count override");
  auto* sojourn = app.add_subcommand("sojourn", "free sojourn times");
  add_common(sojourn, true);
  sojourn->add_option("--r-max", r_max, "largest radius override");
  auto* delay = app.add_subcommand("delay", "full modified-delay pipeline");
  add_common(delay, true);
  delay->add_option("--r-max", r_max, "largest radius override");
  delay->add_option("--t0", t0, "preparation time override (negative)");
  delay->add_option("--dt", dt, "split-step size override");
  auto* verify_cmd = app.add_subcommand("verify", "acceptance check suites");
  verify_cmd->add_option("--suite", suite,
                         "free|well|multichannel|spectral|commutator|born|hygiene|all");
  verify_cmd->add_option("--scenarios", scenarios_dir, "directory with the named scenarios");
  verify_cmd->add_option("--out", out_override, "output directory override");
  verify_cmd->add_option("--threads", threads, "sweep worker threads");

  std::vector<const char*> argv;
  argv.push_back("wgdelay");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (verify_cmd->parsed()) {
      const std::filesystem::path out =
          out_override.empty() ? std::filesystem::path("out") : out_override;
      return detail::cmd_verify(suite, scenarios_dir, out, threads);
    }
    Scenario s = load_scenario(scenario_path);
    if (lambda_min != 0.0) s.sweep_min = lambda_min;
    if (lambda_max != 0.0) s.sweep_max = lambda_max;
    if (points != 0) s.sweep_points = points;
    if (r_max != 0.0) s.r_max = r_max;
    if (t0 != 0.0) s.t0 = t0;
    if (dt != 0.0) s.dt = dt;
    validate_scenario(s);
    const std::filesystem::path out = detail::resolve_out_dir(s, out_override);

    if (modes->parsed()) return detail::cmd_modes(s, out);
    if (smatrix->parsed()) return detail::cmd_smatrix(s, out, threads);
    if (sojourn->parsed()) return detail::cmd_sojourn(s, out);
    if (delay->parsed()) return detail::cmd_delay(s, out, threads);
    return 1;
  } catch (const Error& e) {
    nlohmann::json err;
    err["error"]["code"] = to_string(e.code());
    err["error"]["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return e.code() == ErrorCode::validation ? 2 : 3;
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"]["code"] = "internal";
    err["error"]["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return 3;
  }
}

}  // namespace wg::cli
