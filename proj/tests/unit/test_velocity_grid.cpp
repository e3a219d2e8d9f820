#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hsbe/errors.hpp"
#include "hsbe/snapshot.hpp"
#include "hsbe/velocity_grid.hpp"

using namespace hsbe;

TEST(VelocityGrid, NodesArePointSymmetric) {
  const VelocityGrid g(4.5, 8);
  ASSERT_EQ(g.size(), 512u);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(g.node(g.mirror(i)), -g.node(i));
  }
}

TEST(VelocityGrid, ShellsPartitionNodesBySpeed) {
  const VelocityGrid g(6.0, 12);
  std::size_t total = 0;
  double last = -1.0;
  for (std::size_t s = 0; s < g.shells().size(); ++s) {
    const auto& shell = g.shells()[s];
    total += shell.size();
    const double r = g.speed(shell.front());
    EXPECT_GT(r, last);
    last = r;
    for (auto idx : shell) {
      EXPECT_NEAR(g.speed(idx), r, 1e-12);
      EXPECT_EQ(g.shell_of(idx), s);
    }
  }
  EXPECT_EQ(total, g.size());
}

TEST(VelocityGrid, MaxwellianMomentsMatchUpToTail) {
  const VelocityGrid g(6.0, 24);
  const auto mu = Field::homogeneous(sample_maxwellian(g));
  const auto m = moments(g, mu);
  EXPECT_NEAR(m.mass, 1.0, 1e-6);
  EXPECT_NEAR(m.energy, 3.0, 1e-5);
  EXPECT_LT(m.momentum.norm(), 1e-15);
  EXPECT_GT(maxwellian_tail_mass(g), 0.0);
  EXPECT_LT(maxwellian_tail_mass(g), 1e-6);
}

TEST(VelocityGrid, WeightedNormScalesAndTriangle) {
  const VelocityGrid g(4.5, 8);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(g.size()), b(g.size()), s(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      a[i] = n(rng);
      b[i] = n(rng);
      s[i] = a[i] + b[i];
    }
    const double na = weighted_sup_norm(g, a, 7.0);
    const double nb = weighted_sup_norm(g, b, 7.0);
    EXPECT_LE(weighted_sup_norm(g, s, 7.0), na + nb + 1e-12 * (na + nb));
    for (double& x : a) x *= -3.0;
    EXPECT_NEAR(weighted_sup_norm(g, a, 7.0), 3.0 * na, 1e-12 * na);
  }
}

TEST(VelocityGrid, AngularMomentumNeedsAxis) {
  const VelocityGrid g(4.5, 4);
  SpatialNodes space{{Vec3(0.1, 0.2, 0.0)}, 1.0};
  const Field f(1, g.size(), 1.0);
  EXPECT_THROW(angular_momentum(g, f, space, std::nullopt), NoAxisError);
  EXPECT_NO_THROW(angular_momentum(g, f, space, Axis{}));
}

TEST(Field, Arithmetic) {
  Field a(2, 3, 1.0), b(2, 3, 2.0);
  const Field c = a + 2.0 * b;
  for (double x : c.data()) EXPECT_EQ(x, 5.0);
  EXPECT_EQ((c - a - b - b), Field(2, 3, 0.0));
}

TEST(Snapshot, RoundTripIsExact) {
  const VelocityGrid g(4.5, 4);
  Field f(3, g.size());
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (double& x : f.data()) x = n(rng);
  const auto path = std::filesystem::temp_directory_path() / "hsbe_snapshot_roundtrip.bin";
  write_snapshot(path, g, f, {3, 1, 1}, 7.0);
  const auto s = read_snapshot(path);
  EXPECT_EQ(s.header.n_v, 4);
  EXPECT_EQ(s.header.v_max, 4.5);
  EXPECT_EQ(s.header.l, 7.0);
  EXPECT_EQ(s.field, f);
  std::filesystem::remove(path);
}
