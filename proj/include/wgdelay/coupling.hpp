#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "wgdelay/errors.hpp"
#include "wgdelay/numerics.hpp"
#include "wgdelay/potential.hpp"
#include "wgdelay/transverse.hpp"

namespace wg {

// Channel-space reduction V_ab(x) = <chi_a, V(.,x) chi_b> of a waveguide
// potential. Holds node samples on a uniform x grid plus an exact entry
// evaluator; the stationary solver reads slice values from the evaluator so
// that discontinuous profiles are not smeared by interpolation.
class CouplingMatrix {
 public:
  using Evaluator = std::function<Eigen::MatrixXd(double)>;

  CouplingMatrix() = default;
  CouplingMatrix(UniformGrid grid, int modes, std::vector<Eigen::MatrixXd> node_values,
                 Evaluator eval)
      : grid_(grid), modes_(modes), nodes_(std::move(node_values)), eval_(std::move(eval)) {}

  const UniformGrid& grid() const { return grid_; }
  int mode_count() const { return modes_; }
  const Eigen::MatrixXd& at_node(std::size_t j) const { return nodes_[j]; }
  std::size_t node_count() const { return nodes_.size(); }

  Eigen::MatrixXd at(double x) const { return eval_(x); }

  // max_ab |V_ab| over all nodes.
  double peak() const {
    double p = 0.0;
    for (const auto& m : nodes_) p = std::max(p, m.cwiseAbs().maxCoeff());
    return p;
  }

  // Smallest radius R (snapped outward to the node grid) with
  // max_ab |V_ab(x)| < eps_rel * peak for all |x| > R. Zero coupling gives 0.
  double matching_radius(double eps_rel = 1e-12) const {
    const double p = peak();
    if (p == 0.0) return 0.0;
    const double floor = eps_rel * p;
    double r = 0.0;
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
      if (nodes_[j].cwiseAbs().maxCoeff() >= floor) r = std::max(r, std::abs(grid_.at(j)));
    }
    const double snapped = std::ceil((r - 1e-12 * grid_.step) / grid_.step) * grid_.step;
    return std::min(snapped + grid_.step, std::max(std::abs(grid_.lo), std::abs(grid_.hi())));
  }

  // Largest |V_ab| on the outermost nodes; the decay-metadata check.
  double tail_magnitude() const {
    if (nodes_.empty()) return 0.0;
    return std::max(nodes_.front().cwiseAbs().maxCoeff(), nodes_.back().cwiseAbs().maxCoeff());
  }

 private:
  UniformGrid grid_;
  int modes_ = 0;
  std::vector<Eigen::MatrixXd> nodes_;
  Evaluator eval_;
};

namespace detail {

// <chi_a, u chi_b> on (0, L) by fixed-order Gauss-Legendre.
inline Eigen::MatrixXd transverse_bracket(const TransverseBasis& basis,
                                          const std::function<double(double)>& u,
                                          const GaussLegendre& gl) {
  const int m = basis.mode_count();
  Eigen::MatrixXd b(m, m);
  for (int a = 1; a <= m; ++a) {
    for (int c = a; c <= m; ++c) {
      const double val = gl.integrate(
          [&](double y) { return basis.eigenfunction(a, y) * u(y) * basis.eigenfunction(c, y); },
          0.0, basis.width());
      b(a - 1, c - 1) = val;
      b(c - 1, a - 1) = val;
    }
  }
  return b;
}

}  // namespace detail

// Transverse quadrature of the potential against every unordered mode pair,
// sampled on x_grid. Symmetry is exact by construction.
inline CouplingMatrix compute_coupling(const PotentialSpec& pot, const TransverseBasis& basis,
                                       UniformGrid x_grid, int quadrature_order = 64) {
  const int m = basis.mode_count();
  const GaussLegendre gl(quadrature_order);

  CouplingMatrix::Evaluator eval;
  if (pot.is_grid()) {
    const auto& gp = pot.grid();
    require(gp.x_grid.covers(x_grid.lo) && gp.x_grid.covers(x_grid.hi()), ErrorCode::out_of_domain,
            "grid-sampled potential does not cover the requested x grid");
    require(gp.y_grid.covers(0.0) && gp.y_grid.covers(basis.width()), ErrorCode::out_of_domain,
            "grid-sampled potential does not cover the cross-section");
    auto shared = std::make_shared<GridSampledPotential>(gp);
    auto basis_copy = std::make_shared<TransverseBasis>(basis);
    auto gl_copy = std::make_shared<GaussLegendre>(gl);
    eval = [shared, basis_copy, gl_copy](double x) {
      return detail::transverse_bracket(
          *basis_copy, [&](double y) { return shared->eval(y, x); }, *gl_copy);
    };
  } else {
    // Separable terms: the transverse bracket is x-independent, compute once.
    struct Term {
      Eigen::MatrixXd bracket;
      LongitudinalProfile v;
    };
    auto terms = std::make_shared<std::vector<Term>>();
    for (const auto& t : pot.terms()) {
      Eigen::MatrixXd b;
      if (t.transverse.is_constant()) {
        b = Eigen::MatrixXd::Identity(m, m);  // orthonormal modes
      } else {
        b = detail::transverse_bracket(basis, [&](double y) { return t.transverse(y); }, gl);
      }
      terms->push_back({std::move(b), t.longitudinal});
    }
    const int modes = m;
    eval = [terms, modes](double x) {
      Eigen::MatrixXd v = Eigen::MatrixXd::Zero(modes, modes);
      for (const auto& t : *terms) v += t.bracket * t.v(x);
      return v;
    };
  }

  std::vector<Eigen::MatrixXd> nodes(x_grid.n);
  for (std::size_t j = 0; j < x_grid.n; ++j) nodes[j] = eval(x_grid.at(j));
  return CouplingMatrix(x_grid, m, std::move(nodes), std::move(eval));
}

}  // namespace wg
