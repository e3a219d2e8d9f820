#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hsbe {

/// Resolution parameters identifying a configuration; output paths never belong here.
using Fingerprint = std::map<std::string, std::string>;

/// Stable 64-bit FNV-1a hash of the sorted key=value pairs, as 16 hex digits.
std::string fingerprint_hash(const Fingerprint& params);

struct FitEntry {
  double rate = 0.0;
  double prefactor = 0.0;
  double residual = 0.0;
};

struct SeriesPoint {
  double t = 0.0;
  std::map<std::string, double> values;
};

/// Time series, fitted rates and the configuration fingerprint of one run.
struct DecayReport {
  std::vector<SeriesPoint> series;
  std::map<std::string, FitEntry> fits;
  std::map<std::string, double> scalars;
  Fingerprint fingerprint;

  /// Throws DataError unless t strictly increases and every value named "norm*" is >= 0.
  void validate() const;
  std::string to_json() const;
  static DecayReport from_json(const std::string& text);
  void write_json(const std::filesystem::path& path) const;
  void write_series_csv(const std::filesystem::path& path) const;
};

struct SweepRow {
  double value = 0.0;
  std::map<std::string, double> outputs;
};

struct ConvergenceTable {
  std::string parameter;
  std::vector<SweepRow> rows;
  /// Per output: successive-difference ratios (q_i - q_{i+1}) / (q_{i+1} - q_{i+2}).
  std::map<std::string, std::vector<double>> ratios;
  /// Per output: observed orders log(ratio) / log(value_i / value_{i+1}).
  std::map<std::string, std::vector<double>> orders;

  void write_csv(const std::filesystem::path& path) const;
};

using SweepRunner = std::function<std::map<std::string, double>(double value)>;

/// Runs `run` once per value. Values must be monotone; failures name the offending value.
ConvergenceTable refinement_sweep(const std::string& parameter, const std::vector<double>& values,
                                  const SweepRunner& run);

struct RegressionValue {
  double value = 0.0;
  bool fitted = false;  ///< fitted rates compare at 5%, everything else at 1e-9
};

struct RegressionBaseline {
  Fingerprint fingerprint;
  std::map<std::string, RegressionValue> values;
};

struct RegressionFailure {
  std::string key;
  double baseline = 0.0;
  double actual = 0.0;
  double relative = 0.0;
};

struct RegressionResult {
  bool pass = true;
  std::vector<RegressionFailure> failures;
};

void freeze_regression(const RegressionBaseline& baseline, const std::filesystem::path& path);
RegressionBaseline load_regression(const std::filesystem::path& path);

/// Throws IncomparableError when fingerprints differ. Missing keys fail.
/// `rtol` overrides the per-class default tolerance for every key.
RegressionResult compare_regression(const RegressionBaseline& current,
                                    const std::filesystem::path& path,
                                    std::optional<double> rtol = std::nullopt);

}  // namespace hsbe
