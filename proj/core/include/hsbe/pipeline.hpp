#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hsbe/config.hpp"
#include "hsbe/diagnostics.hpp"
#include "hsbe/geometry.hpp"
#include "hsbe/velocity_grid.hpp"

namespace hsbe {

/// Every tunable of a scenario. Config keys are "section.key"; see `to_config`.
struct ScenarioConfig {
  std::string scenario = "weakly-inhomogeneous";
  std::uint64_t seed = 0;

  // [domain]
  std::string shape = "ball";  ///< ball | ellipsoid | superquadric
  double radius = 1.0;
  Vec3 semi_axes = Vec3(1.0, 1.0, 0.7);
  double exponent = 4.0;
  std::string axis = "auto";  ///< none | auto | explicit
  Vec3 axis_origin = Vec3::Zero();
  Vec3 axis_direction = Vec3::UnitZ();

  // [grid]
  double v_max = 4.5;
  int n_v = 8;
  int n_theta = 4;
  int n_phi = 4;
  int lattice = 6;

  // [norms]
  double l0 = 7.0;
  double l1 = 8.0;

  // [initial]
  std::string g0 = "bimodal";  ///< bimodal | maxwellian
  double g0_weight = 0.5;
  double g0_t1 = 0.7;
  double g0_t2 = 1.3;
  std::string f0 = "bump";  ///< bump | isotropic | zero
  double amplitude = 1e-3;  ///< ||w_l0 f0||_inf
  double f0_radius = 0.8;

  // [pipeline]
  double delta0 = 0.05;

  // [homogeneous]
  double homogeneous_dt = 0.02;
  double homogeneous_t_max = 5.0;
  bool well_balanced = true;

  // [picard]
  double picard_dt = 0.02;
  double picard_window = 0.02;
  int picard_max_iters = 8;
  double picard_tol = 1e-8;

  // [linear]
  double linear_dt = 0.02;
  double linear_t_end = 2.0;
  bool nonlinear = true;
  int sweeps = 1;
  double cutoff = -1.0;

  // [transport]
  bool clip = false;

  // [geometry]
  int samples = 1000;

  // [output]
  std::filesystem::path out = "out";

  /// Throws ConfigError on unknown keys, malformed values or violated invariants.
  static ScenarioConfig from_config(const Config& config);
  Config to_config() const;
  /// Throws ConfigError when an invariant fails.
  void validate() const;
  /// Resolution parameters and seed; excludes output paths.
  Fingerprint fingerprint() const;
};

/// Every key understood by ScenarioConfig::from_config.
const std::vector<std::string>& known_config_keys();

struct Check {
  std::string stage;
  std::string name;
  double measured = 0.0;
  double required = 0.0;
  std::string relation;  ///< "<=", "<", ">", ">=" or "=="
  bool pass = false;
};

struct ScenarioReport {
  std::string scenario;
  std::vector<Check> checks;
  std::map<std::string, double> scalars;
  std::map<std::string, FitEntry> fits;
  Fingerprint fingerprint;
  std::optional<std::string> failed_stage;  ///< first stage with a failed check or error
  std::string error;                        ///< message of the error that stopped a stage

  bool passed() const;
  /// Appends a check; the first failing check names failed_stage.
  const Check& check(const std::string& stage, const std::string& name, double measured,
                     const std::string& relation, double required);
  void fail(const std::string& stage, const std::string& message);
  std::string to_json() const;
  void write_json(const std::filesystem::path& path) const;
};

struct ScenarioInfo {
  std::string name;
  std::string description;
};

const std::vector<ScenarioInfo>& scenario_list();

/// Preset keys of a named scenario, applied beneath user configuration.
/// Throws ConfigError for unknown names.
Config scenario_defaults(const std::string& name);

/// Homogeneous run, Picard local solve on [0, t**], handoff checks and linearized
/// continuation. Stages communicate through snapshot files in config.out.
ScenarioReport run_weakly_inhomogeneous(const ScenarioConfig& config);

/// Runs `name` with its presets under `overrides` (overrides win). Writes run.json and the
/// per-stage series into the output directory. Throws ConfigError for unknown names.
ScenarioReport run_named_scenario(const std::string& name, const Config& overrides);

/// Runs the scenario named in config.scenario.
ScenarioReport run_scenario(const ScenarioConfig& config);

/// Domain described by the [domain] keys.
Domain build_domain(const ScenarioConfig& config);

/// G0 on the velocity grid, radially symmetrized and rescaled to the discrete mass and
/// energy of mu.
std::vector<double> initial_background(const ScenarioConfig& config, const VelocityGrid& grid);

/// Radial velocity profile exp(-|v|^2) with its discrete mass and energy removed.
std::vector<double> neutral_profile(const VelocityGrid& grid);

struct GeometryOracleResult {
  int samples = 0;
  double chord_time_error = 0.0;   ///< max |t_k - t_k^exact| over bounces
  double chord_point_error = 0.0;  ///< max |x_k - x_k^exact|
  double speed_error = 0.0;        ///< max ||v_k| - |v|| / |v|
  double axis_residual = 0.0;      ///< spheroid axis certificate
  double angular_momentum_error = 0.0;  ///< max per-bounce change of (x x w) . v on the spheroid
  int bounces = 0;
};

/// Random phase points in the unit ball checked against the closed-form chord recursion,
/// plus axis and angular-momentum checks on the spheroid with semi-axes (1, 1, c).
GeometryOracleResult geometry_oracle(std::uint64_t seed, int samples, double spheroid_c = 0.7);

}  // namespace hsbe
