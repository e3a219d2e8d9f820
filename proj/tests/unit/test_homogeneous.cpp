#include <cmath>

#include <gtest/gtest.h>

#include "hsbe/errors.hpp"
#include "hsbe/homogeneous.hpp"

using namespace hsbe;

namespace {

const CollisionOperator& op() {
  static const CollisionOperator o(VelocityGrid(4.5, 8), [] {
    CollisionParams p;
    p.angular = AngularQuadrature::product(4, 4);
    return p;
  }());
  return o;
}

std::vector<double> matched_bimodal() {
  const auto& g = op().grid();
  auto b = bimodal_profile(g);
  const auto [m, e] = mass_energy(g, op().maxwellian());
  match_moments(g, b, m, e);
  return radial_symmetrize(g, b).g;
}

}  // namespace

TEST(Homogeneous, RadialSymmetrizeIsIdempotent) {
  const auto& g = op().grid();
  std::vector<double> f(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) f[i] = std::exp(-g.node(i).x() * g.node(i).x());
  const auto once = radial_symmetrize(g, f);
  EXPECT_GT(once.residual, 0.0);
  const auto twice = radial_symmetrize(g, once.g);
  EXPECT_LT(twice.residual, 1e-15);
}

TEST(Homogeneous, MatchMomentsHitsTargets) {
  const auto& g = op().grid();
  auto b = bimodal_profile(g, 0.3, 0.5, 1.2);
  ASSERT_TRUE(match_moments(g, b, 1.0, 3.0));
  const auto [m, e] = mass_energy(g, b);
  EXPECT_NEAR(m, 1.0, 1e-13);
  EXPECT_NEAR(e, 3.0, 1e-12);
}

TEST(Homogeneous, MaxwellianIsFixedPointWhenWellBalanced) {
  const HomogeneousSolver solver(op());
  HomogeneousState s{op().maxwellian(), 0.0, true, 0.0};
  for (int n = 0; n < 5; ++n) s = solver.step(s, 0.02);
  double d = 0.0;
  for (std::size_t i = 0; i < s.g.size(); ++i) {
    d = std::max(d, std::abs(s.g[i] - op().maxwellian()[i]));
  }
  EXPECT_LT(d, 1e-14);
}

TEST(Homogeneous, RelaxationConservesAndDecreasesH) {
  const HomogeneousSolver solver(op());
  const auto traj = solver.solve(matched_bimodal(), 0.5, 0.02);
  const auto& first = traj.records.front();
  for (const auto& r : traj.records) {
    EXPECT_NEAR(r.mass, first.mass, 1e-12);
    EXPECT_NEAR(r.energy, first.energy, 1e-11);
    EXPECT_GE(r.min_value, 0.0);
  }
  EXPECT_LE(traj.max_h_increase, 10.0 * op().certified_tolerance());
  EXPECT_LT(traj.records.back().distance_l0, first.distance_l0);
  EXPECT_LT(traj.max_radial_residual, 1e-10);
}

TEST(Homogeneous, StepSizeGuard) {
  const HomogeneousSolver solver(op());
  HomogeneousState s{op().maxwellian(), 0.0, true, 0.0};
  EXPECT_THROW(solver.step(s, 1.0), StepSizeError);
}

TEST(Homogeneous, RejectsNegativeOrNonRadialData) {
  const HomogeneousSolver solver(op());
  auto g = op().maxwellian();
  g[0] = -1.0;
  EXPECT_THROW(solver.solve(g, 0.1, 0.02), DataError);
  auto h = op().maxwellian();
  h[3] *= 2.0;
  EXPECT_THROW(solver.solve(h, 0.1, 0.02), DataError);
}

TEST(Homogeneous, Nu0PositiveForStockProfiles) {
  EXPECT_GT(estimate_nu0(op(), op().maxwellian()).value, 0.0);
  EXPECT_FALSE(estimate_nu0(op(), matched_bimodal()).degenerate);
  std::vector<double> zero(op().grid().size(), 0.0);
  EXPECT_TRUE(estimate_nu0(op(), zero).degenerate);
}

TEST(Homogeneous, HFunctionalMinimisedByMaxwellianAtFixedMoments) {
  const auto& g = op().grid();
  EXPECT_LT(h_functional(g, op().maxwellian()), h_functional(g, matched_bimodal()));
}
