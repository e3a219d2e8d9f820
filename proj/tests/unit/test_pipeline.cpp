#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "hsbe/errors.hpp"
#include "hsbe/pipeline.hpp"

using namespace hsbe;
namespace fs = std::filesystem;

namespace {

Config with_out(const std::string& dir, std::initializer_list<std::pair<const char*, const char*>> kv) {
  Config c;
  for (const auto& [k, v] : kv) c.set(k, v);
  c.set("output.dir", (fs::temp_directory_path() / ("hsbe_unit_" + dir)).string());
  return c;
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST(Scenarios, ListAndUnknownNames) {
  const auto& list = scenario_list();
  ASSERT_EQ(list.size(), 5u);
  for (const auto& info : list) EXPECT_NO_THROW(scenario_defaults(info.name));
  EXPECT_THROW(scenario_defaults("nope"), ConfigError);
  EXPECT_THROW(run_named_scenario("nope", Config{}), ConfigError);
}

TEST(Pipeline, TrivialDataPassesWithZeroHandoffTime) {
  const auto r = run_named_scenario(
      "weakly-inhomogeneous",
      with_out("trivial", {{"initial.f0", "zero"}, {"initial.g0", "maxwellian"},
                           {"grid.lattice", "5"}, {"linear.t_end", "0.1"}}));
  EXPECT_TRUE(r.passed()) << r.to_json();
  EXPECT_EQ(r.scalars.at("t_star_star"), 0.0);
  EXPECT_EQ(r.scalars.at("final_norm"), 0.0);
}

TEST(Pipeline, LargeAmplitudeFailsInStageB) {
  const auto r = run_named_scenario(
      "weakly-inhomogeneous",
      with_out("large", {{"initial.amplitude", "1"},
                         {"pipeline.delta0", "0.5"},
                         {"grid.lattice", "5"}}));
  EXPECT_FALSE(r.passed());
  ASSERT_TRUE(r.failed_stage.has_value());
  EXPECT_EQ(*r.failed_stage, "b");
  const auto json = read(fs::temp_directory_path() / "hsbe_unit_large" / "run.json");
  EXPECT_NE(json.find("\"failed_stage\": \"b\""), std::string::npos);
}

TEST(Pipeline, UnreachableThresholdFailsInStageA) {
  const auto r = run_named_scenario(
      "weakly-inhomogeneous",
      with_out("stage_a", {{"homogeneous.t_max", "0.1"}, {"grid.lattice", "5"}}));
  ASSERT_TRUE(r.failed_stage.has_value());
  EXPECT_EQ(*r.failed_stage, "a");
  EXPECT_FALSE(fs::exists(fs::temp_directory_path() / "hsbe_unit_stage_a" / "stage_b_f.bin"));
}

TEST(Scenarios, LinearDecayWithZeroDataReportsZeroSolution) {
  const auto r = run_named_scenario(
      "linear-decay", with_out("zero", {{"initial.f0", "zero"}, {"grid.lattice", "5"},
                                        {"linear.t_end", "0.2"}}));
  EXPECT_TRUE(r.passed()) << r.to_json();
  EXPECT_EQ(r.scalars.at("zero_solution"), 1.0);
}

TEST(Scenarios, HomogeneousRelaxationCsvHasNonincreasingH) {
  const auto r = run_named_scenario("homogeneous-relaxation",
                                    with_out("relax", {{"homogeneous.t_max", "1"}}));
  EXPECT_TRUE(r.passed()) << r.to_json();
  std::ifstream in(fs::temp_directory_path() / "hsbe_unit_relax" / "homogeneous.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("t,mass,energy,H,", 0), 0u);
  double last = INFINITY;
  const double slack = 10.0 * r.scalars.at("certified_tolerance");
  int rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    for (int k = 0; k < 4; ++k) std::getline(ss, cell, ',');
    const double h = std::stod(cell);
    EXPECT_LE(h, last + slack);
    last = h;
    ++rows;
  }
  EXPECT_EQ(rows, 51);
}

TEST(Scenarios, GeometryOracleIsDeterministic) {
  const auto a = run_named_scenario("geometry-oracle",
                                    with_out("geo_a", {{"geometry.samples", "100"}, {"seed", "5"}}));
  const auto b = run_named_scenario("geometry-oracle",
                                    with_out("geo_b", {{"geometry.samples", "100"}, {"seed", "5"}}));
  EXPECT_TRUE(a.passed());
  EXPECT_EQ(read(fs::temp_directory_path() / "hsbe_unit_geo_a" / "run.json"),
            read(fs::temp_directory_path() / "hsbe_unit_geo_b" / "run.json"));
}

TEST(Pipeline, DomainFromConfigCertifiesAxis) {
  ScenarioConfig c;
  c.shape = "ellipsoid";
  c.semi_axes = Vec3(0.7, 1.0, 1.0);
  const auto d = build_domain(c);
  ASSERT_TRUE(d.axis.has_value());
  EXPECT_NEAR(std::abs(d.axis->direction.x()), 1.0, 1e-15);
  c.semi_axes = Vec3(0.6, 0.8, 1.0);
  EXPECT_FALSE(build_domain(c).axis.has_value());
  c.axis = "explicit";
  c.axis_direction = Vec3::UnitZ();
  EXPECT_THROW(build_domain(c), GeometryError);
}

TEST(Pipeline, NeutralProfileHasNoMassOrEnergy) {
  const VelocityGrid g(4.5, 8);
  const auto psi = neutral_profile(g);
  double m = 0.0, e = 0.0, m_abs = 0.0, e_abs = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r2 = g.node(i).squaredNorm();
    m += psi[i];
    e += psi[i] * r2;
    m_abs += std::abs(psi[i]);
    e_abs += std::abs(psi[i]) * r2;
  }
  EXPECT_LT(std::abs(m), 1e-13 * m_abs);
  EXPECT_LT(std::abs(e), 1e-13 * e_abs);
}
