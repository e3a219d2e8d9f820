#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hsbe/errors.hpp"
#include "hsbe/linearized.hpp"
#include "hsbe/pipeline.hpp"

using namespace hsbe;

namespace {

struct Rig {
  Domain domain;
  VelocityGrid vg{4.5, 8};
  PhaseGrid grid;
  CollisionOperator op;
  LinearizedCollision lin;

  Rig(Domain d, int lattice)
      : domain(std::move(d)), grid(domain, vg, lattice), op(vg, [] {
          CollisionParams p;
          p.angular = AngularQuadrature::product(4, 4);
          return p;
        }()),
        lin(op) {}
};

const Rig& ball() {
  static const Rig s(make_domain(std::make_shared<Ball>(), Axis{}), 6);
  return s;
}

Field random_field(const PhaseGrid& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Field f = grid.zeros();
  for (double& x : f.data()) x = n(rng);
  return f;
}

}  // namespace

TEST(ConservationBasis, OrthonormalWithAxis) {
  const auto& s = ball();
  const ConservationBasis basis(s.grid, s.domain.axis);
  ASSERT_EQ(basis.size(), 3u);
  EXPECT_TRUE(basis.has_axis());
  for (std::size_t i = 0; i < basis.size(); ++i) {
    for (std::size_t j = 0; j < basis.size(); ++j) {
      EXPECT_NEAR(basis.inner(basis[i], basis[j]), i == j ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(ConservationBasis, TwoFieldsWithoutAxis) {
  const Rig s(make_domain(std::make_shared<Ellipsoid>(Vec3(1.0, 0.8, 0.6))), 5);
  const ConservationBasis basis(s.grid, s.domain.axis);
  EXPECT_EQ(basis.size(), 2u);
  EXPECT_FALSE(basis.has_axis());
}

TEST(Projection, IdempotentProperty) {
  const auto& s = ball();
  const ConservationBasis basis(s.grid, s.domain.axis);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Field f = random_field(s.grid, seed);
    const Field p = project_P(f, basis);
    const Field pp = project_P(p, basis);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(pp.data()[i], p.data()[i], 1e-12);
    const Field r = f - p;
    for (double c : basis.coefficients(r)) EXPECT_NEAR(c, 0.0, 1e-10);
  }
}

TEST(ConservationConstraints, CorrectionMakesDataAdmissible) {
  const auto& s = ball();
  const ConservationBasis basis(s.grid, s.domain.axis);
  Field h = random_field(s.grid, 42);
  for (std::size_t x = 0; x < h.spatial(); ++x) {
    for (std::size_t v = 0; v < s.vg.size(); ++v) h(x, v) *= s.op.maxwellian()[v];
  }
  const auto raw = check_conservation_constraints(s.grid, h, basis, s.domain.axis);
  EXPECT_FALSE(raw.passes);
  const auto fixed = check_conservation_constraints(s.grid, h, basis, s.domain.axis, true);
  EXPECT_TRUE(fixed.passes);
  const auto again = check_conservation_constraints(s.grid, fixed.corrected, basis, s.domain.axis);
  EXPECT_TRUE(again.passes);
  ASSERT_TRUE(fixed.angular.has_value());
}

TEST(DecayFit, RecoversExponentialRate) {
  std::vector<double> t, n;
  for (int i = 0; i <= 100; ++i) {
    t.push_back(0.05 * i);
    n.push_back(3.0 * std::exp(-1.7 * t.back()));
  }
  const auto fit = estimate_decay_rate(t, n);
  EXPECT_NEAR(fit.lambda, 1.7, 1e-10);
  EXPECT_NEAR(fit.prefactor, 3.0, 1e-9);
  EXPECT_LT(fit.residual, 1e-10);
}

TEST(DecayFit, RejectsBadSeries) {
  std::vector<double> t{0.0, 1.0, 2.0}, n{1.0, 0.5, 0.25};
  EXPECT_THROW(estimate_decay_rate(t, n), DataError);
  std::vector<double> t2, n2;
  for (int i = 0; i < 40; ++i) {
    t2.push_back(i);
    n2.push_back(i == 30 ? -1.0 : 1.0);
  }
  EXPECT_THROW(estimate_decay_rate(t2, n2), DataError);
}

TEST(LinearizedSolver, ZeroDataGivesZeroSolution) {
  const auto& s = ball();
  const LinearizedSolver solver(s.grid, s.lin, s.domain.axis);
  const auto traj = solver.solve(s.grid.zeros(), 0.1, 0.02);
  EXPECT_TRUE(traj.zero_solution);
  EXPECT_FALSE(traj.fit.has_value());
  for (double n : traj.norm) EXPECT_EQ(n, 0.0);
}

TEST(LinearizedSolver, StepSizeGuard) {
  const auto& s = ball();
  const LinearizedSolver solver(s.grid, s.lin, s.domain.axis);
  EXPECT_THROW(solver.step_unsplit(s.grid.zeros(), 1.0), StepSizeError);
}

TEST(LinearizedSolver, SplitMatchesUnsplitAndKeepsProjection) {
  const auto& s = ball();
  LinearizedOptions o;
  o.nonlinear = false;
  const LinearizedSolver solver(s.grid, s.lin, s.domain.axis, o);
  Field h0 = s.grid.zeros();
  const auto psi = neutral_profile(s.vg);
  for (std::size_t x = 0; x < h0.spatial(); ++x) {
    const double r2 = s.grid.space().positions[x].squaredNorm();
    for (std::size_t v = 0; v < s.vg.size(); ++v) h0(x, v) = (1.0 - r2) * psi[v];
  }
  h0 = check_conservation_constraints(s.grid, h0, solver.basis(), s.domain.axis, true).corrected;
  h0 *= 1e-3 / weighted_sup_norm(s.vg, h0, 7.0);
  SplitState split{h0, s.grid.zeros(), 0.0};
  Field whole = h0;
  for (int n = 0; n < 10; ++n) {
    split = solver.step_split(split, 0.02);
    whole = solver.step_unsplit(whole, 0.02);
    EXPECT_LT(solver.projection_residual(split), 1e-8);
  }
  const Field diff = solver.combine(split) - whole;
  for (double d : diff.data()) EXPECT_LT(std::abs(d), 1e-15);
  EXPECT_LT(weighted_sup_norm(s.vg, whole, 7.0), weighted_sup_norm(s.vg, h0, 7.0));
}
