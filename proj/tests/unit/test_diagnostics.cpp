#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "hsbe/diagnostics.hpp"
#include "hsbe/errors.hpp"

using namespace hsbe;

namespace {

std::filesystem::path temp(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("hsbe_unit_" + name);
}

DecayReport sample_report() {
  DecayReport r;
  for (int i = 0; i < 5; ++i) {
    r.series.push_back({0.1 * i, {{"norm", std::exp(-0.1 * i)}, {"mass", 1.0 + 1e-3 * i}}});
  }
  r.fits["linear"] = FitEntry{1.0, 1.0, 1e-3};
  r.scalars["t_star_star"] = 0.52;
  r.fingerprint = {{"grid.n_v", "8"}, {"grid.v_max", "4.5"}};
  return r;
}

RegressionBaseline baseline() {
  RegressionBaseline b;
  b.fingerprint = {{"grid.n_v", "8"}};
  b.values["tolerance"] = {1.25e-3, false};
  b.values["lambda"] = {1.02, true};
  return b;
}

}  // namespace

TEST(Fingerprint, HashIsStableAndSensitive) {
  const Fingerprint a{{"grid.n_v", "8"}, {"grid.v_max", "4.5"}};
  Fingerprint b = a;
  EXPECT_EQ(fingerprint_hash(a), fingerprint_hash(b));
  EXPECT_EQ(fingerprint_hash(a).size(), 16u);
  b["grid.n_v"] = "12";
  EXPECT_NE(fingerprint_hash(a), fingerprint_hash(b));
}

TEST(DecayReport, JsonRoundTripIsExact) {
  const auto r = sample_report();
  const auto back = DecayReport::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  ASSERT_EQ(back.series.size(), r.series.size());
  EXPECT_EQ(back.series[3].values.at("norm"), r.series[3].values.at("norm"));
  EXPECT_EQ(back.fingerprint, r.fingerprint);
}

TEST(DecayReport, ValidateRejectsBadSeries) {
  auto r = sample_report();
  EXPECT_NO_THROW(r.validate());
  r.series[2].t = r.series[1].t;
  EXPECT_THROW(r.validate(), DataError);
  r = sample_report();
  r.series[2].values["norm_h1"] = -1.0;
  EXPECT_THROW(r.validate(), DataError);
  EXPECT_THROW(DecayReport::from_json("{not json"), DataError);
}

TEST(RefinementSweep, FirstOrderQuantityHasOrderOne) {
  const auto table = refinement_sweep("dt", {0.02, 0.01, 0.005}, [](double dt) {
    return std::map<std::string, double>{{"q", 1.0 + 3.0 * dt}};
  });
  ASSERT_EQ(table.rows.size(), 3u);
  EXPECT_NEAR(table.ratios.at("q").front(), 2.0, 1e-9);
  EXPECT_NEAR(table.orders.at("q").front(), 1.0, 1e-9);
}

TEST(RefinementSweep, SingleValueAndErrors) {
  const auto one = refinement_sweep("n_v", {8}, [](double) {
    return std::map<std::string, double>{{"q", 1.0}};
  });
  EXPECT_EQ(one.rows.size(), 1u);
  EXPECT_TRUE(one.orders.empty());
  EXPECT_THROW(refinement_sweep("dt", {0.1, 0.2, 0.15}, [](double) {
    return std::map<std::string, double>{};
  }), std::invalid_argument);
  try {
    refinement_sweep("n_v", {8, 12}, [](double v) -> std::map<std::string, double> {
      if (v > 10) throw DataError("boom");
      return {};
    });
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("n_v = 12"), std::string::npos);
  }
}

TEST(Regression, CompareAgainstSelfPasses) {
  const auto path = temp("self.json");
  freeze_regression(baseline(), path);
  EXPECT_TRUE(compare_regression(baseline(), path).pass);
  const auto loaded = load_regression(path);
  EXPECT_EQ(loaded.values.at("tolerance").value, 1.25e-3);
  EXPECT_TRUE(loaded.values.at("lambda").fitted);
  std::filesystem::remove(path);
}

TEST(Regression, PerturbedValueFailsNamingKey) {
  const auto path = temp("perturbed.json");
  freeze_regression(baseline(), path);
  auto current = baseline();
  current.values["lambda"].value *= 1.1;
  const auto r = compare_regression(current, path, 0.05);
  EXPECT_FALSE(r.pass);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures.front().key, "lambda");
  current = baseline();
  current.values["lambda"].value *= 1.04;
  EXPECT_TRUE(compare_regression(current, path).pass);
  current.values["tolerance"].value *= 1.0 + 1e-6;
  EXPECT_FALSE(compare_regression(current, path).pass);
  std::filesystem::remove(path);
}

TEST(Regression, DifferentResolutionIsIncomparable) {
  const auto path = temp("incomparable.json");
  freeze_regression(baseline(), path);
  auto current = baseline();
  current.fingerprint["grid.n_v"] = "12";
  EXPECT_THROW(compare_regression(current, path), IncomparableError);
  std::filesystem::remove(path);
}
