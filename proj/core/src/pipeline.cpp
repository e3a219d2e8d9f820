#include "hsbe/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "hsbe/collision.hpp"
#include "hsbe/errors.hpp"
#include "hsbe/homogeneous.hpp"
#include "hsbe/linearized.hpp"
#include "hsbe/snapshot.hpp"
#include "hsbe/transport.hpp"

namespace hsbe {

namespace {

std::string format(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string format(const Vec3& v) {
  return format(v[0]) + ", " + format(v[1]) + ", " + format(v[2]);
}

std::string format(bool b) { return b ? "true" : "false"; }

std::uint64_t parse_seed(const Config& c, std::uint64_t fallback) {
  if (!c.has("seed")) return fallback;
  const std::string s = c.get_string("seed", "");
  std::uint64_t out = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("config: 'seed' expects a nonnegative integer, got '" + s + "'");
  }
  return out;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError("config: " + message);
}

bool is_multiple(double big, double small) {
  const double k = std::round(big / small);
  return k >= 1.0 && std::abs(k * small - big) <= 1e-9 * big;
}

}  // namespace

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "scenario",           "seed",
      "domain.shape",       "domain.radius",
      "domain.semi_axes",   "domain.exponent",
      "domain.axis",        "domain.axis_origin",
      "domain.axis_direction",
      "grid.v_max",         "grid.n_v",
      "grid.n_theta",       "grid.n_phi",
      "grid.lattice",
      "norms.l0",           "norms.l1",
      "initial.g0",         "initial.g0_weight",
      "initial.g0_t1",      "initial.g0_t2",
      "initial.f0",         "initial.amplitude",
      "initial.f0_radius",
      "pipeline.delta0",
      "homogeneous.dt",     "homogeneous.t_max",
      "homogeneous.well_balanced",
      "picard.dt",          "picard.window",
      "picard.max_iters",   "picard.tol",
      "linear.dt",          "linear.t_end",
      "linear.nonlinear",   "linear.sweeps",
      "linear.cutoff",
      "transport.clip",
      "geometry.samples",
      "output.dir",
  };
  return keys;
}

ScenarioConfig ScenarioConfig::from_config(const Config& c) {
  const auto& known = known_config_keys();
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : c.values()) {
    if (!allowed.count(key)) throw ConfigError("config: unknown key '" + key + "'");
  }
  ScenarioConfig s;
  s.scenario = c.get_string("scenario", s.scenario);
  s.seed = parse_seed(c, s.seed);
  s.shape = c.get_string("domain.shape", s.shape);
  s.radius = c.get_double("domain.radius", s.radius);
  s.semi_axes = c.get_vec3("domain.semi_axes", s.semi_axes);
  s.exponent = c.get_double("domain.exponent", s.exponent);
  s.axis = c.get_string("domain.axis", s.axis);
  s.axis_origin = c.get_vec3("domain.axis_origin", s.axis_origin);
  s.axis_direction = c.get_vec3("domain.axis_direction", s.axis_direction);
  s.v_max = c.get_double("grid.v_max", s.v_max);
  s.n_v = c.get_int("grid.n_v", s.n_v);
  s.n_theta = c.get_int("grid.n_theta", s.n_theta);
  s.n_phi = c.get_int("grid.n_phi", s.n_phi);
  s.lattice = c.get_int("grid.lattice", s.lattice);
  s.l0 = c.get_double("norms.l0", s.l0);
  s.l1 = c.get_double("norms.l1", s.l1);
  s.g0 = c.get_string("initial.g0", s.g0);
  s.g0_weight = c.get_double("initial.g0_weight", s.g0_weight);
  s.g0_t1 = c.get_double("initial.g0_t1", s.g0_t1);
  s.g0_t2 = c.get_double("initial.g0_t2", s.g0_t2);
  s.f0 = c.get_string("initial.f0", s.f0);
  s.amplitude = c.get_double("initial.amplitude", s.amplitude);
  s.f0_radius = c.get_double("initial.f0_radius", s.f0_radius);
  s.delta0 = c.get_double("pipeline.delta0", s.delta0);
  s.homogeneous_dt = c.get_double("homogeneous.dt", s.homogeneous_dt);
  s.homogeneous_t_max = c.get_double("homogeneous.t_max", s.homogeneous_t_max);
  s.well_balanced = c.get_bool("homogeneous.well_balanced", s.well_balanced);
  s.picard_dt = c.get_double("picard.dt", s.picard_dt);
  s.picard_window = c.get_double("picard.window", s.picard_window);
  s.picard_max_iters = c.get_int("picard.max_iters", s.picard_max_iters);
  s.picard_tol = c.get_double("picard.tol", s.picard_tol);
  s.linear_dt = c.get_double("linear.dt", s.linear_dt);
  s.linear_t_end = c.get_double("linear.t_end", s.linear_t_end);
  s.nonlinear = c.get_bool("linear.nonlinear", s.nonlinear);
  s.sweeps = c.get_int("linear.sweeps", s.sweeps);
  s.cutoff = c.get_double("linear.cutoff", s.cutoff);
  s.clip = c.get_bool("transport.clip", s.clip);
  s.samples = c.get_int("geometry.samples", s.samples);
  s.out = c.get_string("output.dir", s.out.string());
  s.validate();
  return s;
}

Config ScenarioConfig::to_config() const {
  Config c;
  c.set("scenario", scenario);
  c.set("seed", std::to_string(seed));
  c.set("domain.shape", shape);
  c.set("domain.radius", format(radius));
  c.set("domain.semi_axes", format(semi_axes));
  c.set("domain.exponent", format(exponent));
  c.set("domain.axis", axis);
  c.set("domain.axis_origin", format(axis_origin));
  c.set("domain.axis_direction", format(axis_direction));
  c.set("grid.v_max", format(v_max));
  c.set("grid.n_v", std::to_string(n_v));
  c.set("grid.n_theta", std::to_string(n_theta));
  c.set("grid.n_phi", std::to_string(n_phi));
  c.set("grid.lattice", std::to_string(lattice));
  c.set("norms.l0", format(l0));
  c.set("norms.l1", format(l1));
  c.set("initial.g0", g0);
  c.set("initial.g0_weight", format(g0_weight));
  c.set("initial.g0_t1", format(g0_t1));
  c.set("initial.g0_t2", format(g0_t2));
  c.set("initial.f0", f0);
  c.set("initial.amplitude", format(amplitude));
  c.set("initial.f0_radius", format(f0_radius));
  c.set("pipeline.delta0", format(delta0));
  c.set("homogeneous.dt", format(homogeneous_dt));
  c.set("homogeneous.t_max", format(homogeneous_t_max));
  c.set("homogeneous.well_balanced", format(well_balanced));
  c.set("picard.dt", format(picard_dt));
  c.set("picard.window", format(picard_window));
  c.set("picard.max_iters", std::to_string(picard_max_iters));
  c.set("picard.tol", format(picard_tol));
  c.set("linear.dt", format(linear_dt));
  c.set("linear.t_end", format(linear_t_end));
  c.set("linear.nonlinear", format(nonlinear));
  c.set("linear.sweeps", std::to_string(sweeps));
  c.set("linear.cutoff", format(cutoff));
  c.set("transport.clip", format(clip));
  c.set("geometry.samples", std::to_string(samples));
  c.set("output.dir", out.string());
  return c;
}

void ScenarioConfig::validate() const {
  const auto& names = scenario_list();
  require(std::any_of(names.begin(), names.end(),
                      [&](const ScenarioInfo& i) { return i.name == scenario; }),
          "unknown scenario '" + scenario + "'");
  require(shape == "ball" || shape == "ellipsoid" || shape == "superquadric",
          "domain.shape must be ball, ellipsoid or superquadric, got '" + shape + "'");
  require(radius > 0.0, "domain.radius must be positive");
  require(semi_axes.minCoeff() > 0.0, "domain.semi_axes must be positive");
  require(exponent >= 2.0, "domain.exponent must be >= 2");
  require(axis == "none" || axis == "auto" || axis == "explicit",
          "domain.axis must be none, auto or explicit, got '" + axis + "'");
  require(axis_direction.norm() > 0.0, "domain.axis_direction must be nonzero");
  require(v_max > 0.0, "grid.v_max must be positive");
  require(n_v >= 2 && n_v % 2 == 0, "grid.n_v must be even and >= 2");
  require(n_theta >= 2 && n_theta % 2 == 0, "grid.n_theta must be even and >= 2");
  require(n_phi >= 1, "grid.n_phi must be >= 1");
  require(lattice >= 3, "grid.lattice must be >= 3");
  require(l0 > 6.0, "norms.l0 must exceed 6");
  require(l1 > l0, "norms.l1 must exceed norms.l0");
  require(g0 == "bimodal" || g0 == "maxwellian",
          "initial.g0 must be bimodal or maxwellian, got '" + g0 + "'");
  require(g0_weight >= 0.0 && g0_weight <= 1.0, "initial.g0_weight must lie in [0, 1]");
  require(g0_t1 > 0.0 && g0_t2 > 0.0, "initial.g0 temperatures must be positive");
  require(f0 == "bump" || f0 == "isotropic" || f0 == "zero",
          "initial.f0 must be bump, isotropic or zero, got '" + f0 + "'");
  require(amplitude >= 0.0, "initial.amplitude must be >= 0");
  require(f0_radius > 0.0, "initial.f0_radius must be positive");
  require(delta0 > 0.0, "pipeline.delta0 must be positive");
  require(homogeneous_dt > 0.0 && homogeneous_t_max >= 0.0, "homogeneous time grid invalid");
  require(picard_dt > 0.0 && picard_window > 0.0, "picard time grid invalid");
  require(is_multiple(picard_dt, homogeneous_dt),
          "picard.dt must be a multiple of homogeneous.dt");
  require(picard_max_iters >= 1, "picard.max_iters must be >= 1");
  require(picard_tol > 0.0, "picard.tol must be positive");
  require(linear_dt > 0.0 && linear_t_end >= 0.0, "linear time grid invalid");
  require(sweeps >= 0, "linear.sweeps must be >= 0");
  require(samples >= 1, "geometry.samples must be >= 1");
}

Fingerprint ScenarioConfig::fingerprint() const {
  Config c = to_config();
  Fingerprint f;
  for (const auto& [key, value] : c.values()) {
    if (key.rfind("output.", 0) == 0) continue;
    f[key] = value;
  }
  return f;
}

bool ScenarioReport::passed() const {
  if (!error.empty() || failed_stage) return false;
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

const Check& ScenarioReport::check(const std::string& stage, const std::string& name,
                                   double measured, const std::string& relation,
                                   double required) {
  Check c{stage, name, measured, required, relation, false};
  if (relation == "<=") c.pass = measured <= required;
  else if (relation == "<") c.pass = measured < required;
  else if (relation == ">=") c.pass = measured >= required;
  else if (relation == ">") c.pass = measured > required;
  else if (relation == "==") c.pass = measured == required;
  else throw std::invalid_argument("check: unknown relation '" + relation + "'");
  if (!c.pass && !failed_stage) failed_stage = stage;
  checks.push_back(std::move(c));
  return checks.back();
}

void ScenarioReport::fail(const std::string& stage, const std::string& message) {
  if (!failed_stage) failed_stage = stage;
  if (!error.empty()) error += "; ";
  error += stage + ": " + message;
}

std::string ScenarioReport::to_json() const {
  using nlohmann::ordered_json;
  auto number = [](double x) -> ordered_json {
    if (std::isfinite(x)) return x;
    return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  };
  ordered_json j;
  j["scenario"] = scenario;
  j["passed"] = passed();
  j["failed_stage"] = failed_stage ? ordered_json(*failed_stage) : ordered_json(nullptr);
  j["error"] = error;
  ordered_json cs = ordered_json::array();
  for (const auto& c : checks) {
    cs.push_back({{"stage", c.stage},
                  {"name", c.name},
                  {"measured", number(c.measured)},
                  {"relation", c.relation},
                  {"required", number(c.required)},
                  {"pass", c.pass}});
  }
  j["checks"] = cs;
  ordered_json sc = ordered_json::object();
  for (const auto& [k, v] : scalars) sc[k] = number(v);
  j["scalars"] = sc;
  ordered_json fs = ordered_json::object();
  for (const auto& [k, f] : fits) {
    fs[k] = {{"rate", number(f.rate)},
             {"prefactor", number(f.prefactor)},
             {"residual", number(f.residual)}};
  }
  j["fits"] = fs;
  ordered_json fp = ordered_json::object();
  for (const auto& [k, v] : fingerprint) fp[k] = v;
  j["fingerprint"] = fp;
  j["fingerprint_hash"] = fingerprint_hash(fingerprint);
  return j.dump(2) + "\n";
}

void ScenarioReport::write_json(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string());
  os << to_json();
}

const std::vector<ScenarioInfo>& scenario_list() {
  static const std::vector<ScenarioInfo> list = {
      {"homogeneous-relaxation",
       "space-homogeneous relaxation of the bimodal G0: conservation, H decay, distance to mu"},
      {"linear-decay",
       "linearized perturbation of mu on the phase grid: decay of ||w_l h|| and fitted rate"},
      {"split-consistency",
       "h1 + sqrt(mu) h2 from the split scheme against the unsplit scheme on x-homogeneous data"},
      {"weakly-inhomogeneous",
       "homogeneous run to t**, Picard local solve, handoff checks, linearized continuation"},
      {"geometry-oracle",
       "specular cycles in the unit ball against closed-form chords; spheroid axis checks"},
  };
  return list;
}

Config scenario_defaults(const std::string& name) {
  Config c;
  c.set("scenario", name);
  if (name == "homogeneous-relaxation") {
    c.set("homogeneous.t_max", "5");
  } else if (name == "linear-decay") {
    c.set("grid.lattice", "9");
    c.set("initial.f0", "isotropic");
    c.set("linear.nonlinear", "false");
    c.set("linear.t_end", "5");
  } else if (name == "split-consistency") {
    c.set("grid.lattice", "9");
    c.set("initial.f0", "isotropic");
    c.set("linear.t_end", "0.5");
  } else if (name == "weakly-inhomogeneous") {
    c.set("grid.lattice", "6");
  } else if (name == "geometry-oracle") {
    c.set("geometry.samples", "1000");
  } else {
    throw ConfigError("unknown scenario '" + name + "'");
  }
  return c;
}

Domain build_domain(const ScenarioConfig& config) {
  std::shared_ptr<const LevelSet> xi;
  std::vector<Axis> candidates;
  if (config.shape == "ball") {
    xi = std::make_shared<Ball>(config.radius);
    candidates.push_back(Axis{Vec3::Zero(), Vec3::UnitZ()});
  } else if (config.shape == "ellipsoid") {
    xi = std::make_shared<Ellipsoid>(config.semi_axes);
    const Vec3& a = config.semi_axes;
    for (int d = 0; d < 3; ++d) {
      if (a[(d + 1) % 3] == a[(d + 2) % 3]) candidates.push_back(Axis{Vec3::Zero(), Vec3::Unit(d)});
    }
  } else {
    xi = std::make_shared<Superquadric>(config.exponent);
  }

  if (config.axis == "explicit") {
    return make_domain(xi, Axis{config.axis_origin, config.axis_direction.normalized()});
  }
  Domain domain = make_domain(xi);
  if (config.axis == "auto") {
    for (const auto& a : candidates) {
      if (certify_axis(domain, a.origin, a.direction, 4096).holds) {
        domain.axis = a;
        break;
      }
    }
  }
  return domain;
}

std::vector<double> initial_background(const ScenarioConfig& config, const VelocityGrid& grid) {
  const auto mu = sample_maxwellian(grid);
  if (config.g0 == "maxwellian") return mu;
  auto g = bimodal_profile(grid, config.g0_weight, config.g0_t1, config.g0_t2);
  const auto [m, e] = mass_energy(grid, mu);
  match_moments(grid, g, m, e);
  return radial_symmetrize(grid, g).g;
}

std::vector<double> neutral_profile(const VelocityGrid& grid) {
  const auto mu = sample_maxwellian(grid);
  std::vector<double> psi(grid.size());
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r2 = grid.node(i).squaredNorm();
    psi[i] = std::exp(-r2);
    a(0, 0) += mu[i];
    a(0, 1) += mu[i] * r2;
    a(1, 1) += mu[i] * r2 * r2;
    b[0] += psi[i];
    b[1] += psi[i] * r2;
  }
  a(1, 0) = a(0, 1);
  const Eigen::Vector2d c = a.ldlt().solve(b);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    psi[i] -= (c[0] + c[1] * grid.node(i).squaredNorm()) * mu[i];
  }
  return radial_symmetrize(grid, psi).g;
}

namespace {

CollisionParams collision_params(const ScenarioConfig& c) {
  CollisionParams p;
  p.angular = AngularQuadrature::product(c.n_theta, c.n_phi);
  return p;
}

/// f0 on the phase grid scaled to ||w_l0 f0|| = amplitude.
Field initial_perturbation(const ScenarioConfig& c, const PhaseGrid& grid) {
  Field f = grid.zeros();
  if (c.f0 == "zero" || c.amplitude == 0.0) return f;
  const auto& vg = grid.velocity();
  const auto psi = neutral_profile(vg);
  const Vec3 center = grid.domain().bbox.center();
  for (std::size_t x = 0; x < grid.spatial_size(); ++x) {
    double b = 1.0;
    if (c.f0 == "bump") {
      const double s = 1.0 - (grid.space().positions[x] - center).squaredNorm() /
                                 (c.f0_radius * c.f0_radius);
      b = s > 0.0 ? s * s * s : 0.0;
    }
    for (std::size_t v = 0; v < vg.size(); ++v) f(x, v) = b * psi[v];
  }
  const double n = weighted_sup_norm(vg, f, c.l0);
  if (n > 0.0) f *= c.amplitude / n;
  return f;
}

std::array<std::int64_t, 3> lattice_dims(const ScenarioConfig& c) {
  return {c.lattice, c.lattice, c.lattice};
}

void check_snapshot_grid(const Snapshot& s, const VelocityGrid& grid, const std::string& what) {
  if (s.header.v_max != grid.v_max() || s.header.n_v != grid.n() ||
      s.field.velocity() != grid.size()) {
    throw DataError(what + ": snapshot was written on a different velocity grid");
  }
}

double weighted_distance(const VelocityGrid& grid, std::span<const double> a,
                         std::span<const double> b, double l) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i % b.size()];
  return weighted_sup_norm(grid, d, l);
}

double sup_abs(const Field& f) {
  double m = 0.0;
  for (double x : f.data()) m = std::max(m, std::abs(x));
  return m;
}

// ---------------------------------------------------------------------------------------

void run_homogeneous_relaxation(const ScenarioConfig& c, ScenarioReport& report) {
  const VelocityGrid vg(c.v_max, c.n_v);
  const CollisionOperator op(vg, collision_params(c));
  HomogeneousOptions ho;
  ho.l0 = c.l0;
  ho.l1 = c.l1;
  ho.well_balanced = c.well_balanced;
  const HomogeneousSolver solver(op, ho);
  const auto g0 = initial_background(c, vg);
  const auto traj = solver.solve(g0, c.homogeneous_t_max, c.homogeneous_dt);
  traj.write_csv(c.out / "homogeneous.csv");

  const auto& first = traj.records.front();
  const auto& last = traj.records.back();
  const double horizon = std::max(last.t, c.homogeneous_dt);
  double mass_drift = 0.0, energy_drift = 0.0;
  for (const auto& r : traj.records) {
    mass_drift = std::max(mass_drift, std::abs(r.mass - first.mass) / first.mass);
    energy_drift = std::max(energy_drift, std::abs(r.energy - first.energy) / first.energy);
  }
  const double tol = op.certified_tolerance();
  report.scalars["certified_tolerance"] = tol;
  report.scalars["measured_c0"] = traj.measured_c0;
  report.scalars["distance_initial"] = first.distance_l0;
  report.scalars["distance_final"] = last.distance_l0;
  report.scalars["nu0_initial"] = first.nu0;
  report.scalars["max_momentum"] = traj.max_momentum;
  for (const auto& r : traj.records) {
    if (r.distance_l0 <= 0.5 * c.delta0) {
      report.scalars["first_time_below_half_delta0"] = r.t;
      break;
    }
  }
  report.check("homogeneous", "mass drift per unit time", mass_drift / horizon, "<=", 1e-6);
  report.check("homogeneous", "energy drift per unit time", energy_drift / horizon, "<=", 1e-6);
  report.check("homogeneous", "max per-step increase of H", traj.max_h_increase, "<=", 10.0 * tol);
  report.check("homogeneous", "distance to mu at t_end", last.distance_l0, "<", first.distance_l0);
  report.check("homogeneous", "max radial residual", traj.max_radial_residual, "<=", 1e-10);
  report.check("homogeneous", "min R G / <v> at t = 0", first.nu0, ">", 0.0);
}

void run_linear_decay(const ScenarioConfig& c, ScenarioReport& report) {
  const VelocityGrid vg(c.v_max, c.n_v);
  const CollisionOperator op(vg, collision_params(c));
  const LinearizedCollision lin(op);
  const Domain domain = build_domain(c);
  const PhaseGrid grid(domain, vg, c.lattice);
  LinearizedOptions lo;
  lo.cutoff_n = c.cutoff;
  lo.sweeps = c.sweeps;
  lo.nonlinear = c.nonlinear;
  lo.l = c.l0;
  const LinearizedSolver solver(grid, lin, domain.axis, lo);

  Field h0 = initial_perturbation(c, grid);
  const auto res = check_conservation_constraints(grid, h0, solver.basis(), domain.axis, true);
  report.scalars["h0_mass_residual"] = res.mass;
  report.scalars["h0_energy_residual"] = res.energy;
  if (res.angular) report.scalars["h0_angular_residual"] = *res.angular;
  h0 = res.corrected;
  const double n0 = weighted_sup_norm(vg, h0, c.l0);
  if (n0 > 0.0) h0 *= c.amplitude / n0;

  const auto traj = solver.solve(h0, c.linear_t_end, c.linear_dt);
  traj.write_csv(c.out / "linear.csv");
  write_snapshot(c.out / "linear_final.bin", vg, solver.combine(traj.final_state),
                 lattice_dims(c), c.l0);

  const double initial = traj.norm.front();
  const double final = traj.norm.back();
  double projection = 0.0;
  for (double p : traj.projection) projection = std::max(projection, p);
  report.scalars["norm_initial"] = initial;
  report.scalars["norm_final"] = final;
  report.scalars["spatial_nodes"] = static_cast<double>(grid.spatial_size());
  report.check("linear", "max |P(h2 + mu^-1/2 h1)|", projection, "<=", 1e-8);
  if (traj.zero_solution) {
    report.scalars["zero_solution"] = 1.0;
    report.check("linear", "zero data stays zero", final, "==", 0.0);
    return;
  }
  report.check("linear", "norm at t_end below initial", final, "<", initial);
  if (!traj.fit) {
    report.fail("linear", "decay fit unavailable (too few positive samples)");
    return;
  }
  report.fits["linear"] = FitEntry{traj.fit->lambda, traj.fit->prefactor, traj.fit->residual};
  report.check("linear", "fitted decay rate", traj.fit->lambda, ">", 0.0);
  report.check("linear", "fit residual (log space)", traj.fit->residual, "<=", 0.1);
}

void run_split_consistency(const ScenarioConfig& c, ScenarioReport& report) {
  const VelocityGrid vg(c.v_max, c.n_v);
  const CollisionOperator op(vg, collision_params(c));
  const LinearizedCollision lin(op);
  const Domain domain = build_domain(c);
  const PhaseGrid grid(domain, vg, c.lattice);
  LinearizedOptions lo;
  lo.cutoff_n = c.cutoff;
  lo.sweeps = c.sweeps;
  lo.nonlinear = c.nonlinear;
  lo.l = c.l0;
  const LinearizedSolver solver(grid, lin, domain.axis, lo);

  Field h0 = initial_perturbation(c, grid);
  h0 = check_conservation_constraints(grid, h0, solver.basis(), domain.axis, true).corrected;
  const double n0 = weighted_sup_norm(vg, h0, c.l0);
  if (n0 > 0.0) h0 *= c.amplitude / n0;

  const long steps = std::lround(c.linear_t_end / c.linear_dt);
  SplitState split{h0, grid.zeros(), 0.0};
  Field unsplit = h0;
  for (long n = 0; n < steps; ++n) {
    split = solver.step_split(split, c.linear_dt);
    unsplit = solver.step_unsplit(unsplit, c.linear_dt);
  }
  Field fine = h0;
  for (long n = 0; n < 2 * steps; ++n) fine = solver.step_unsplit(fine, 0.5 * c.linear_dt);

  const double discrepancy = sup_abs(solver.combine(split) - unsplit);
  const double scheme_tolerance = sup_abs(unsplit - fine);
  report.scalars["discrepancy"] = discrepancy;
  report.scalars["scheme_tolerance"] = scheme_tolerance;
  report.scalars["norm_initial"] = sup_abs(h0);
  report.scalars["projection_residual"] = solver.projection_residual(split);
  write_snapshot(c.out / "split_final.bin", vg, solver.combine(split), lattice_dims(c), c.l0);
  write_snapshot(c.out / "unsplit_final.bin", vg, unsplit, lattice_dims(c), c.l0);
  report.check("split", "sup |h1 + sqrt(mu) h2 - h|", discrepancy, "<=", 5.0 * scheme_tolerance);
}

void run_geometry_oracle(const ScenarioConfig& c, ScenarioReport& report) {
  const auto r = geometry_oracle(c.seed, c.samples, c.semi_axes[2]);
  report.scalars["samples"] = r.samples;
  report.scalars["bounces"] = r.bounces;
  report.check("geometry", "chord bounce-time error", r.chord_time_error, "<=", 1e-9);
  report.check("geometry", "chord bounce-point error", r.chord_point_error, "<=", 1e-9);
  report.check("geometry", "relative speed change", r.speed_error, "<=", 1e-12);
  report.check("geometry", "spheroid axis residual", r.axis_residual, "<=", 1e-9);
  report.check("geometry", "per-bounce angular momentum change", r.angular_momentum_error, "<=",
               1e-9);
}

}  // namespace

ScenarioReport run_weakly_inhomogeneous(const ScenarioConfig& c) {
  ScenarioReport report;
  report.scenario = "weakly-inhomogeneous";
  report.fingerprint = c.fingerprint();
  std::filesystem::create_directories(c.out);

  const VelocityGrid vg(c.v_max, c.n_v);
  const CollisionOperator op(vg, collision_params(c));
  const auto& mu = op.maxwellian();
  const double half = 0.5 * c.delta0;
  const auto background_path = c.out / "stage_a_background.bin";
  const auto f_path = c.out / "stage_b_f.bin";

  // (a) homogeneous run until ||w_l0 (G - mu)|| <= delta0 / 2 on the Picard time grid.
  {
    HomogeneousOptions ho;
    ho.l0 = c.l0;
    ho.l1 = c.l1;
    ho.well_balanced = c.well_balanced;
    const HomogeneousSolver solver(op, ho);
    const long stride = std::lround(c.picard_dt / c.homogeneous_dt);
    const long max_steps = std::lround(c.homogeneous_t_max / c.homogeneous_dt);

    HomogeneousState state;
    state.g = initial_background(c, vg);
    state.radially_symmetric = true;
    HomogeneousTrajectory traj;
    std::vector<std::vector<double>> levels;
    std::optional<long> found;
    double best = std::numeric_limits<double>::infinity();
    for (long n = 0;; ++n) {
      traj.records.push_back(solver.record(state));
      levels.push_back(state.g);
      const double d = traj.records.back().distance_l0;
      best = std::min(best, d);
      if (n % stride == 0 && d <= half) {
        found = n;
        break;
      }
      if (n >= max_steps) break;
      state = solver.step(state, c.homogeneous_dt);
      state.t = static_cast<double>(n + 1) * c.homogeneous_dt;
    }
    traj.write_csv(c.out / "stage_a.csv");
    report.scalars["stage_a_initial_distance"] = traj.records.front().distance_l0;
    if (!found) {
      report.check("a", "||w_l0 (G(t) - mu)|| reaches delta0/2 by homogeneous.t_max", best, "<=",
                   half);
      return report;
    }
    const double t_star = static_cast<double>(*found) * c.homogeneous_dt;
    report.scalars["t_star_star"] = t_star;
    report.check("a", "||w_l0 (G(t**) - mu)||", traj.records.back().distance_l0, "<=", half);

    Field stored(levels.size(), vg.size());
    for (std::size_t k = 0; k < levels.size(); ++k) {
      std::copy(levels[k].begin(), levels[k].end(), stored.row(k).begin());
    }
    write_snapshot(background_path, vg, stored,
                   {static_cast<std::int64_t>(levels.size()), 1, 1}, c.l0);
  }

  const Domain domain = build_domain(c);
  const PhaseGrid grid(domain, vg, c.lattice);
  report.scalars["spatial_nodes"] = static_cast<double>(grid.spatial_size());

  // (b) Picard local solve of f on [0, t**].
  {
    const auto snap = read_snapshot(background_path);
    check_snapshot_grid(snap, vg, "stage b");
    std::vector<double> times;
    std::vector<std::vector<double>> states;
    for (std::size_t k = 0; k < snap.field.spatial(); ++k) {
      times.push_back(static_cast<double>(k) * c.homogeneous_dt);
      const auto row = snap.field.row(k);
      states.emplace_back(row.begin(), row.end());
    }
    const double t_star = times.back();
    const Background background = Background::trajectory(times, states);
    const TransportSolver solver(grid, op, TransportOptions{true, c.clip});
    const Field f0 = initial_perturbation(c, grid);
    report.scalars["f0_norm"] = weighted_sup_norm(vg, f0, c.l0);

    Field f = f0;
    if (t_star > 0.0) {
      PicardOptions po;
      po.window = c.picard_window;
      po.max_iters = c.picard_max_iters;
      po.tol = c.picard_tol;
      po.l = c.l0;
      try {
        const auto result = picard_local_solve(solver, f0, background, t_star, c.picard_dt, po);
        result.write_csv(c.out / "stage_b.csv");
        double worst_gap = 0.0, worst_ratio = 0.0;
        for (const auto& w : result.windows) {
          worst_gap = std::max(worst_gap, w.gaps.back());
          for (double r : w.ratios) worst_ratio = std::max(worst_ratio, r);
        }
        report.scalars["picard_max_ratio"] = worst_ratio;
        report.scalars["picard_max_iterations"] = result.max_iterations;
        report.check("b", "Picard final gap in every window", worst_gap, "<=", c.picard_tol);
        f = result.final_field;
      } catch (const NonContractionError& e) {
        report.scalars["picard_last_ratio"] = e.ratios.empty() ? 0.0 : e.ratios.back();
        report.fail("b", e.what());
        return report;
      }
    }
    const double handoff = weighted_sup_norm(vg, f, c.l0);
    report.scalars["stage_b_distance"] = handoff;
    report.check("b", "||w_l0 (F(t**) - G(t**))||", handoff, "<=", half);
    write_snapshot(f_path, vg, f, lattice_dims(c), c.l0);
    if (report.failed_stage) return report;
  }

  // (c) handoff ||w_l0 (F(t**) - mu)|| <= delta0.
  Field h0;
  {
    const auto bg = read_snapshot(background_path);
    const auto fs = read_snapshot(f_path);
    check_snapshot_grid(bg, vg, "stage c");
    check_snapshot_grid(fs, vg, "stage c");
    const auto g = bg.field.row(bg.field.spatial() - 1);
    h0 = fs.field;
    for (std::size_t x = 0; x < h0.spatial(); ++x) {
      auto row = h0.row(x);
      for (std::size_t v = 0; v < vg.size(); ++v) row[v] += g[v] - mu[v];
    }
    const double dist_g = weighted_distance(vg, g, mu, c.l0);
    report.scalars["stage_c_triangle_bound"] = dist_g + weighted_sup_norm(vg, fs.field, c.l0);
    report.check("c", "||w_l0 (F(t**) - mu)||", weighted_sup_norm(vg, h0, c.l0), "<=", c.delta0);
    if (report.failed_stage) return report;
  }

  // (d) linearized continuation from h0 = F(t**) - mu.
  {
    const LinearizedCollision lin(op);
    LinearizedOptions lo;
    lo.cutoff_n = c.cutoff;
    lo.sweeps = c.sweeps;
    lo.nonlinear = c.nonlinear;
    lo.l = c.l0;
    const LinearizedSolver solver(grid, lin, domain.axis, lo);
    const auto res = check_conservation_constraints(grid, h0, solver.basis(), domain.axis, true);
    report.scalars["stage_d_mass_residual"] = res.mass;
    report.scalars["stage_d_energy_residual"] = res.energy;
    if (res.angular) report.scalars["stage_d_angular_residual"] = *res.angular;
    try {
      const auto traj = solver.solve(res.corrected, c.linear_t_end, c.linear_dt);
      traj.write_csv(c.out / "stage_d.csv");
      write_snapshot(c.out / "stage_d_final.bin", vg, solver.combine(traj.final_state),
                     lattice_dims(c), c.l0);
      report.scalars["stage_d_initial_norm"] = traj.norm.front();
      report.scalars["final_norm"] = traj.norm.back();
      if (traj.fit) {
        report.fits["stage_d"] = FitEntry{traj.fit->lambda, traj.fit->prefactor, traj.fit->residual};
      }
      if (traj.zero_solution) {
        report.check("d", "zero perturbation stays zero", traj.norm.back(), "==", 0.0);
      } else {
        report.check("d", "||w_l0 (F(t_end) - mu)|| below its value at t**", traj.norm.back(),
                     "<", traj.norm.front());
      }
    } catch (const InstabilityError& e) {
      report.fail("d", e.what());
    }
  }
  return report;
}

ScenarioReport run_scenario(const ScenarioConfig& config) {
  config.validate();
  ScenarioReport report;
  report.scenario = config.scenario;
  report.fingerprint = config.fingerprint();
  std::filesystem::create_directories(config.out);
  try {
    if (config.scenario == "weakly-inhomogeneous") {
      report = run_weakly_inhomogeneous(config);
    } else if (config.scenario == "homogeneous-relaxation") {
      run_homogeneous_relaxation(config, report);
    } else if (config.scenario == "linear-decay") {
      run_linear_decay(config, report);
    } else if (config.scenario == "split-consistency") {
      run_split_consistency(config, report);
    } else {
      run_geometry_oracle(config, report);
    }
  } catch (const Error& e) {
    report.fail(config.scenario, e.what());
  }
  report.write_json(config.out / "run.json");
  return report;
}

ScenarioReport run_named_scenario(const std::string& name, const Config& overrides) {
  Config merged = scenario_defaults(name);
  for (const auto& [key, value] : overrides.values()) merged.set(key, value);
  merged.set("scenario", name);
  return run_scenario(ScenarioConfig::from_config(merged));
}

GeometryOracleResult geometry_oracle(std::uint64_t seed, int samples, double spheroid_c) {
  GeometryOracleResult out;
  out.samples = samples;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> speed(0.5, 3.0);
  std::uniform_real_distribution<double> horizon(0.5, 4.0);
  auto in_ball = [&] {
    for (;;) {
      const Vec3 x(unit(rng), unit(rng), unit(rng));
      if (x.squaredNorm() < 0.98) return x;
    }
  };
  auto direction = [&] {
    for (;;) {
      const Vec3 d(unit(rng), unit(rng), unit(rng));
      const double n = d.norm();
      if (n > 1e-3 && n <= 1.0) return Vec3(d / n);
    }
  };

  const Domain ball = make_domain(std::make_shared<Ball>());
  for (int s = 0; s < samples; ++s) {
    const Vec3 x = in_ball();
    const Vec3 v = speed(rng) * direction();
    const auto cycle = build_cycle(ball, horizon(rng), x, v);
    for (std::size_t k = 0; k + 1 < cycle.entries.size(); ++k) {
      const auto& e = cycle.entries[k];
      const auto& next = cycle.entries[k + 1];
      // Closed-form chord: |x - tau v| = 1 with tau > 0.
      const double vv = e.v.squaredNorm();
      const double xv = e.x.dot(e.v);
      const double tau = (xv + std::sqrt(std::max(0.0, xv * xv + vv * (1.0 - e.x.squaredNorm())))) / vv;
      const Vec3 hit = e.x - tau * e.v;
      out.chord_time_error = std::max(out.chord_time_error, std::abs((e.t - next.t) - tau));
      out.chord_point_error = std::max(out.chord_point_error, (next.x - hit).norm());
      out.speed_error = std::max(out.speed_error, std::abs(next.v.norm() - v.norm()) / v.norm());
      ++out.bounces;
    }
  }

  const Vec3 axes(1.0, 1.0, spheroid_c);
  const Axis axis{Vec3::Zero(), Vec3::UnitZ()};
  const Domain spheroid = make_domain(std::make_shared<Ellipsoid>(axes), axis);
  out.axis_residual = certify_axis(spheroid, axis.origin, axis.direction, 4096).residual;
  for (int s = 0; s < samples; ++s) {
    const Vec3 x = in_ball().cwiseProduct(axes);
    const Vec3 v = speed(rng) * direction();
    const auto cycle = build_cycle(spheroid, horizon(rng), x, v);
    for (std::size_t k = 0; k + 1 < cycle.entries.size(); ++k) {
      const auto& e = cycle.entries[k];
      const auto& next = cycle.entries[k + 1];
      // Across a bounce the position is shared and only the velocity changes.
      const Vec3 lever = next.x.cross(axis.direction);
      const double before = lever.dot(e.v);
      const double after = lever.dot(next.v);
      out.angular_momentum_error = std::max(out.angular_momentum_error, std::abs(after - before));
      out.speed_error = std::max(out.speed_error, std::abs(next.v.norm() - v.norm()) / v.norm());
    }
  }
  return out;
}

}  // namespace hsbe
