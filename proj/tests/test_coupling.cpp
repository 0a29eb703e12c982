#include <catch2/catch_amalgamated.hpp>

#include "wgdelay/coupling.hpp"

using namespace wg;

namespace {

UniformGrid test_grid() { return UniformGrid::over(-8.0, 8.0, 321); }

LongitudinalProfile gaussian_profile(double strength, double width) {
  LongitudinalProfile p;
  p.kind = LongitudinalProfile::Kind::gaussian;
  p.strength = strength;
  p.width = width;
  return p;
}

}  // namespace

TEST_CASE("constant transverse profile gives a diagonal coupling v(x) delta_ab") {
  const auto basis = build_transverse_basis(kPi, 3);
  const auto pot = PotentialSpec::separable(TransverseProfile{}, gaussian_profile(-1.5, 1.0));
  const auto c = compute_coupling(pot, basis, test_grid());
  for (std::size_t j = 0; j < c.node_count(); ++j) {
    const double v = gaussian_profile(-1.5, 1.0)(c.grid().at(j));
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        CHECK(std::abs(c.at_node(j)(a, b) - (a == b ? v : 0.0)) < 1e-14);
  }
}

TEST_CASE("transverse profile symmetric about L/2 decouples opposite parities") {
  const double L = kPi;
  const auto basis = build_transverse_basis(L, 4);
  TransverseProfile u;
  u.kind = TransverseProfile::Kind::gaussian_bump;
  u.center = L / 2.0;
  u.width = 0.4;
  const auto pot = PotentialSpec::separable(u, gaussian_profile(1.0, 1.0));
  const auto c = compute_coupling(pot, basis, test_grid());

  // Parity oracle: chi_a(L - y) = (-1)^(a+1) chi_a(y), so integrals with a
  // symmetric weight vanish for odd a+b.
  const std::size_t mid = c.node_count() / 2;
  for (int a = 1; a <= 4; ++a)
    for (int b = 1; b <= 4; ++b)
      if ((a + b) % 2 == 1) CHECK(std::abs(c.at_node(mid)(a - 1, b - 1)) < 1e-14);

  // Nonzero entries cross-checked against a dense trapezoid quadrature.
  const double x = c.grid().at(mid);
  for (int a = 1; a <= 4; ++a) {
    for (int b = a; b <= 4; ++b) {
      if ((a + b) % 2 == 1) continue;
      const std::size_t n = 20001;
      const double h = L / double(n - 1);
      std::vector<double> f(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double y = h * double(i);
        f[i] = basis.eigenfunction(a, y) * u(y) * basis.eigenfunction(b, y);
      }
      const double brute = simpson(f, h) * gaussian_profile(1.0, 1.0)(x);
      CHECK(std::abs(c.at_node(mid)(a - 1, b - 1) - brute) < 1e-10);
    }
  }
}

TEST_CASE("grid-sampled potential agrees with the separable original") {
  const double L = kPi;
  const auto basis = build_transverse_basis(L, 3);
  TransverseProfile u;
  u.kind = TransverseProfile::Kind::gaussian_bump;
  u.center = 0.4 * L;
  u.width = 0.5;
  const auto v = gaussian_profile(-0.7, 1.3);
  const auto pot = PotentialSpec::separable(u, v);

  GridSampledPotential g;
  g.y_grid = UniformGrid::over(0.0, L, 2049);
  g.x_grid = UniformGrid::over(-8.5, 8.5, 2801);
  g.values.resize(g.y_grid.n);
  for (std::size_t i = 0; i < g.y_grid.n; ++i) {
    g.values[i].resize(g.x_grid.n);
    for (std::size_t j = 0; j < g.x_grid.n; ++j)
      g.values[i][j] = u(g.y_grid.at(i)) * v(g.x_grid.at(j));
  }
  const auto pot_grid = PotentialSpec::sampled(std::move(g));

  const auto ca = compute_coupling(pot, basis, test_grid());
  const auto cb = compute_coupling(pot_grid, basis, test_grid());
  double dev = 0.0;
  for (std::size_t j = 0; j < ca.node_count(); ++j)
    dev = std::max(dev, (ca.at_node(j) - cb.at_node(j)).cwiseAbs().maxCoeff());
  CHECK(dev < 1e-10);
}

TEST_CASE("coupling symmetry is exact and tails decay below the cutoff") {
  const auto basis = build_transverse_basis(kPi, 4);
  TransverseProfile u;
  u.kind = TransverseProfile::Kind::gaussian_bump;
  u.center = 1.1;
  u.width = 0.35;

  LongitudinalProfile box;
  box.kind = LongitudinalProfile::Kind::box;
  box.strength = -2.0;
  box.width = 1.0;

  LongitudinalProfile sech;
  sech.kind = LongitudinalProfile::Kind::sech2;
  sech.strength = 0.8;
  sech.width = 0.7;

  for (const auto& prof : {gaussian_profile(-1.0, 1.2), box, sech}) {
    const auto pot = PotentialSpec::separable(u, prof);
    const double ext = std::ceil(pot.support_radius(1e-16)) + 1.0;
    const auto grid = UniformGrid::over(-ext, ext, std::size_t(std::lround(ext * 40)) + 1);
    const auto c = compute_coupling(pot, basis, grid);
    for (std::size_t j = 0; j < c.node_count(); ++j) {
      const auto& m = c.at_node(j);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) CHECK(m(a, b) == m(b, a));  // bitwise
    }
    CHECK(c.tail_magnitude() < 1e-12 * c.peak());
    CHECK(c.matching_radius() > 0.0);
    CHECK(c.matching_radius() <= ext);
  }
}

TEST_CASE("zero potential has zero matching radius") {
  const auto basis = build_transverse_basis(kPi, 2);
  const auto c = compute_coupling(PotentialSpec::zero(), basis, test_grid());
  CHECK(c.peak() == 0.0);
  CHECK(c.matching_radius() == 0.0);
}

TEST_CASE("grid-sampled potential must cover the requested grid") {
  const auto basis = build_transverse_basis(kPi, 2);
  GridSampledPotential g;
  g.y_grid = UniformGrid::over(0.0, kPi, 65);
  g.x_grid = UniformGrid::over(-2.0, 2.0, 65);
  g.values.assign(65, std::vector<double>(65, 0.0));
  const auto pot = PotentialSpec::sampled(std::move(g));
  CHECK_THROWS_AS(compute_coupling(pot, basis, test_grid()), Error);
  try {
    compute_coupling(pot, basis, test_grid());
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::out_of_domain);
  }
}

TEST_CASE("evaluator matches node samples and box keeps sharp edges") {
  const auto basis = build_transverse_basis(kPi, 2);
  LongitudinalProfile box;
  box.kind = LongitudinalProfile::Kind::box;
  box.strength = -2.0;
  box.width = 1.0;
  const auto c =
      compute_coupling(PotentialSpec::separable(TransverseProfile{}, box), basis, test_grid());
  for (std::size_t j = 0; j < c.node_count(); j += 7)
    CHECK((c.at(c.grid().at(j)) - c.at_node(j)).cwiseAbs().maxCoeff() < 1e-14);
  // Half-value convention exactly on the jump, full value just inside.
  CHECK(c.at(1.0)(0, 0) == Catch::Approx(-1.0));
  CHECK(c.at(1.0 - 1e-9)(0, 0) == Catch::Approx(-2.0));
  CHECK(c.at(1.0 + 1e-9)(0, 0) == 0.0);
}
