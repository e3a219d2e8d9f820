#include "hsbe/homogeneous.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

#include <Eigen/Dense>

#include "hsbe/errors.hpp"

namespace hsbe {

Symmetrized radial_symmetrize(const VelocityGrid& grid, std::span<const double> g) {
  if (g.size() != grid.size()) throw std::invalid_argument("radial_symmetrize: grid mismatch");
  Symmetrized out;
  out.g.resize(g.size());
  for (const auto& shell : grid.shells()) {
    double s = 0.0;
    for (auto idx : shell) s += g[idx];
    const double mean = s / static_cast<double>(shell.size());
    for (auto idx : shell) {
      out.g[idx] = mean;
      out.residual = std::max(out.residual, std::abs(g[idx] - mean));
    }
  }
  return out;
}

double h_functional(const VelocityGrid& grid, std::span<const double> g) {
  double top = 0.0;
  for (double x : g) top = std::max(top, x);
  const double floor = 1e-16 * top;
  double h = 0.0;
  for (double x : g) {
    if (x > 0.0) h += x * std::log(x + floor);
  }
  return grid.cell_weight() * h;
}

Nu0Estimate estimate_nu0(const CollisionOperator& op, std::span<const double> g) {
  const auto r = op.frequency(g);
  const auto& grid = op.grid();
  Nu0Estimate est;
  est.value = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r.size(); ++i) {
    est.value = std::min(est.value, r[i] / weight(grid.node(i), 1.0));
  }
  est.degenerate = !(est.value > 0.0);
  return est;
}

std::vector<double> bimodal_profile(const VelocityGrid& grid, double a, double t1, double t2) {
  auto gaussian = [](double r2, double temp) {
    return std::pow(2.0 * std::numbers::pi * temp, -1.5) * std::exp(-0.5 * r2 / temp);
  };
  std::vector<double> g(grid.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r2 = grid.node(i).squaredNorm();
    g[i] = a * gaussian(r2, t1) + (1.0 - a) * gaussian(r2, t2);
  }
  return g;
}

std::pair<double, double> mass_energy(const VelocityGrid& grid, std::span<const double> g) {
  double m = 0.0, e = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    m += g[i];
    e += g[i] * grid.node(i).squaredNorm();
  }
  return {grid.cell_weight() * m, grid.cell_weight() * e};
}

bool match_moments(const VelocityGrid& grid, std::span<double> g, double mass, double energy) {
  double s0 = 0.0, s2 = 0.0, s4 = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r2 = grid.node(i).squaredNorm();
    s0 += g[i];
    s2 += g[i] * r2;
    s4 += g[i] * r2 * r2;
  }
  s0 *= grid.cell_weight();
  s2 *= grid.cell_weight();
  s4 *= grid.cell_weight();
  const double det = s0 * s4 - s2 * s2;
  if (!(det > 0.0)) return false;
  const double a = (mass * s4 - energy * s2) / det;
  const double b = (s0 * energy - s2 * mass) / det;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= a + b * grid.node(i).squaredNorm();
  return true;
}

HomogeneousSolver::HomogeneousSolver(const CollisionOperator& op, HomogeneousOptions options)
    : op_(&op),
      options_(options),
      w_l0_(weight_table(op.grid(), options.l0)),
      w_l1_(weight_table(op.grid(), options.l1)),
      residual_(op.grid().size(), 0.0) {
  if (options_.well_balanced) {
    const auto& mu = op.maxwellian();
    residual_ = op.collide_raw(mu, mu);
  }
}

HomogeneousState HomogeneousSolver::step(const HomogeneousState& state, double dt) const {
  const auto& grid = op_->grid();
  if (!(dt > 0.0)) throw std::invalid_argument("step_homogeneous: dt must be positive");
  const auto rg = op_->frequency(state.g);
  const double max_rate = *std::max_element(rg.begin(), rg.end());
  if (dt * max_rate > 1.0) throw StepSizeError(dt, max_rate);

  const auto gain = op_->gain(state.g, state.g);
  std::vector<double> next(state.g.size());
  for (std::size_t i = 0; i < next.size(); ++i) {
    const double a = rg[i] * dt;
    const double decay = std::exp(-a);
    // (1 - e^{-a}) / RG, continuous at RG = 0
    const double factor = a > 1e-12 ? -std::expm1(-a) / rg[i] : dt;
    // The prefiltered gain can dip below zero far in the tail; clip to keep G >= 0.
    next[i] = decay * state.g[i] + factor * std::max(gain[i] - residual_[i], 0.0);
  }

  auto sym = radial_symmetrize(grid, next);
  HomogeneousState out;
  out.g = std::move(sym.g);
  out.t = state.t + dt;
  out.radial_residual = radial_symmetrize(grid, out.g).residual;

  if (options_.moment_rescale) {
    const auto [m0, e0] = mass_energy(grid, state.g);
    match_moments(grid, out.g, m0, e0);
  }
  out.radially_symmetric = out.radial_residual <= 1e-10;
  return out;
}

HomogeneousRecord HomogeneousSolver::record(const HomogeneousState& state) const {
  const auto& grid = op_->grid();
  const auto& mu = op_->maxwellian();
  HomogeneousRecord r;
  r.t = state.t;
  std::tie(r.mass, r.energy) = mass_energy(grid, state.g);
  r.h = h_functional(grid, state.g);
  r.min_value = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < state.g.size(); ++i) {
    r.distance_l0 = std::max(r.distance_l0, std::abs(w_l0_[i] * (state.g[i] - mu[i])));
    r.norm_l1 = std::max(r.norm_l1, std::abs(w_l1_[i] * state.g[i]));
    r.min_value = std::min(r.min_value, state.g[i]);
  }
  r.nu0 = estimate_nu0(*op_, state.g).value;
  r.radial_residual = state.radial_residual;
  return r;
}

HomogeneousTrajectory HomogeneousSolver::solve(std::span<const double> g0, double t_end,
                                               double dt) const {
  const auto& grid = op_->grid();
  if (g0.size() != grid.size()) throw DataError("solve_homogeneous: initial data off the grid");
  double top = 0.0;
  for (double x : g0) {
    if (x < 0.0 || !std::isfinite(x)) throw DataError("solve_homogeneous: negative initial data");
    top = std::max(top, x);
  }
  const auto sym = radial_symmetrize(grid, g0);
  if (sym.residual > 1e-10 * std::max(top, 1.0)) {
    throw DataError("solve_homogeneous: initial data is not radially symmetric");
  }
  if (!(dt > 0.0) || t_end < 0.0) throw std::invalid_argument("solve_homogeneous: bad time grid");

  HomogeneousTrajectory traj;
  HomogeneousState state;
  state.g.assign(g0.begin(), g0.end());
  state.radial_residual = sym.residual;
  state.radially_symmetric = true;

  auto push = [&](const HomogeneousState& s) {
    traj.records.push_back(record(s));
    if (options_.keep_states) traj.states.push_back(s.g);
    const auto& r = traj.records.back();
    traj.measured_c0 = std::max(traj.measured_c0, r.norm_l1);
    traj.max_radial_residual = std::max(traj.max_radial_residual, r.radial_residual);
    double p = 0.0;
    for (int d = 0; d < 3; ++d) {
      double s_d = 0.0;
      for (std::size_t i = 0; i < s.g.size(); ++i) s_d += s.g[i] * grid.node(i)[d];
      p = std::max(p, std::abs(grid.cell_weight() * s_d));
    }
    traj.max_momentum = std::max(traj.max_momentum, p);
    if (traj.records.size() > 1) {
      const double dh = r.h - traj.records[traj.records.size() - 2].h;
      traj.max_h_increase = std::max(traj.max_h_increase, dh);
    }
  };

  push(state);
  const auto steps = static_cast<long>(std::llround(t_end / dt));
  for (long k = 0; k < steps; ++k) {
    state = step(state, dt);
    state.t = static_cast<double>(k + 1) * dt;
    push(state);
  }
  return traj;
}

void HomogeneousTrajectory::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string());
  os << "t,mass,energy,H,dist_l0,norm_l1,nu0,radial_residual,min_g\n" << std::setprecision(17);
  for (const auto& r : records) {
    os << r.t << ',' << r.mass << ',' << r.energy << ',' << r.h << ',' << r.distance_l0 << ','
       << r.norm_l1 << ',' << r.nu0 << ',' << r.radial_residual << ',' << r.min_value << '\n';
  }
}

}  // namespace hsbe
