#include "hsbe/transport.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "hsbe/errors.hpp"

namespace hsbe {

PhaseGrid::PhaseGrid(Domain domain, VelocityGrid velocity, int lattice)
    : domain_(std::move(domain)), velocity_(std::move(velocity)), lattice_(lattice) {
  if (lattice < 3) throw std::invalid_argument("phase grid: lattice must be >= 3");
  const Box& b = domain_.bbox;
  const Vec3 step = (b.upper - b.lower) / (lattice - 1);
  spacing_ = step.maxCoeff();
  double max_grad = 0.0;
  for (const auto& x : boundary_samples(domain_, 256)) {
    max_grad = std::max(max_grad, domain_.gradient(x).norm());
  }
  margin_ = 0.5 * spacing_ * max_grad;

  std::vector<Vec3> lattice_points;
  std::vector<std::uint32_t> interior_of;
  for (int i = 0; i < lattice; ++i) {
    for (int j = 0; j < lattice; ++j) {
      for (int k = 0; k < lattice; ++k) {
        const Vec3 x = b.lower + Vec3(i, j, k).cwiseProduct(step);
        lattice_points.push_back(x);
        if (domain_.value(x) < -margin_) {
          interior_of.push_back(static_cast<std::uint32_t>(space_.positions.size()));
          space_.positions.push_back(x);
        } else {
          interior_of.push_back(std::numeric_limits<std::uint32_t>::max());
        }
      }
    }
  }
  if (space_.positions.empty()) throw GeometryError("phase grid: no interior lattice nodes");
  space_.cell_volume = step.prod();

  nearest_.resize(lattice_points.size());
  mirror_.resize(lattice_points.size());
  for (std::size_t n = 0; n < lattice_points.size(); ++n) {
    if (interior_of[n] != std::numeric_limits<std::uint32_t>::max()) {
      nearest_[n] = {interior_of[n]};
      continue;
    }
    const Vec3 grad = domain_.gradient(lattice_points[n]);
    auto& mirror = mirror_[n];
    mirror.resize(velocity_.size());
    for (std::size_t v = 0; v < velocity_.size(); ++v) {
      mirror[v] = static_cast<std::uint32_t>(
          grad.norm() > 1e-12 ? snap(v, specular_reflect(grad.normalized(), velocity_.node(v)))
                              : v);
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : space_.positions) best = std::min(best, (p - lattice_points[n]).squaredNorm());
    for (std::size_t x = 0; x < space_.positions.size(); ++x) {
      const double d = (space_.positions[x] - lattice_points[n]).squaredNorm();
      if (d <= best * (1.0 + 1e-9)) nearest_[n].push_back(static_cast<std::uint32_t>(x));
    }
  }
}

Field PhaseGrid::extend(const Field& f) const {
  const std::size_t nv = f.velocity();
  Field out(nearest_.size(), nv);
  for (std::size_t n = 0; n < nearest_.size(); ++n) {
    auto dst = out.row(n);
    const auto& src = nearest_[n];
    const auto& mirror = mirror_[n];
    if (mirror.empty()) {
      const auto row = f.row(src.front());
      std::copy(row.begin(), row.end(), dst.begin());
      continue;
    }
    for (auto x : src) {
      const auto row = f.row(x);
      for (std::size_t v = 0; v < nv; ++v) dst[v] += row[mirror[v]];
    }
    const double inv = 1.0 / static_cast<double>(src.size());
    for (std::size_t v = 0; v < nv; ++v) dst[v] *= inv;
  }
  return out;
}

SpatialStencil PhaseGrid::stencil(const Vec3& x) const {
  const Box& b = domain_.bbox;
  const Vec3 step = (b.upper - b.lower) / (lattice_ - 1);
  std::array<int, 3> cell{};
  std::array<double, 3> frac{};
  for (int d = 0; d < 3; ++d) {
    const double u = (x[d] - b.lower[d]) / step[d];
    cell[d] = std::clamp(static_cast<int>(std::floor(u)), 0, lattice_ - 2);
    frac[d] = std::clamp(u - cell[d], 0.0, 1.0);
  }
  SpatialStencil s;
  int c = 0;
  for (int di = 0; di < 2; ++di) {
    for (int dj = 0; dj < 2; ++dj) {
      for (int dk = 0; dk < 2; ++dk, ++c) {
        const std::size_t n =
            (static_cast<std::size_t>(cell[0] + di) * lattice_ + (cell[1] + dj)) * lattice_ +
            (cell[2] + dk);
        s.node[c] = static_cast<std::uint32_t>(n);
        s.weight[c] = (di ? frac[0] : 1.0 - frac[0]) * (dj ? frac[1] : 1.0 - frac[1]) *
                      (dk ? frac[2] : 1.0 - frac[2]);
      }
    }
  }
  return s;
}

namespace {

// Written relative to the first corner so spatially constant data is reproduced exactly.
inline double apply(const SpatialStencil& s, const Field& f, std::size_t v) {
  const double base = f(s.node[0], v);
  double sum = 0.0;
  for (int c = 1; c < 8; ++c) sum += s.weight[c] * (f(s.node[c], v) - base);
  return base + sum;
}

}  // namespace

double PhaseGrid::interpolate(const Field& f, const Vec3& x, std::size_t v) const {
  const SpatialStencil s = stencil(x);
  auto value = [&](std::uint32_t n) {
    const std::size_t w = mirror_[n].empty() ? v : mirror_[n][v];
    double sum = 0.0;
    for (auto i : nearest_[n]) sum += f(i, w);
    return sum / static_cast<double>(nearest_[n].size());
  };
  const double base = value(s.node[0]);
  double sum = 0.0;
  for (int c = 1; c < 8; ++c) sum += s.weight[c] * (value(s.node[c]) - base);
  return base + sum;
}

std::size_t PhaseGrid::snap(std::size_t shell_of, const Vec3& v) const {
  const auto& shell = velocity_.shells()[velocity_.shell_of(shell_of)];
  std::size_t best = shell.front();
  double best_dot = -std::numeric_limits<double>::infinity();
  for (auto idx : shell) {
    const double d = velocity_.node(idx).dot(v);
    if (d > best_dot) {
      best_dot = d;
      best = idx;
    }
  }
  return best;
}

const SlabPaths& PhaseGrid::paths(double dt) const {
  auto it = cache_.find(dt);
  if (it == cache_.end()) {
    it = cache_.emplace(dt, std::make_shared<SlabPaths>(build_paths(dt))).first;
  }
  return *it->second;
}

SlabPaths PhaseGrid::build_paths(double dt) const {
  if (!(dt > 0.0)) throw std::invalid_argument("phase grid: slab length must be positive");
  const std::size_t nv = velocity_.size();
  SlabPaths out;
  out.dt = dt;
  out.paths.resize(spatial_size() * nv);
  for (std::size_t x = 0; x < spatial_size(); ++x) {
    for (std::size_t v = 0; v < nv; ++v) {
      SlabPath& p = out.paths[x * nv + v];
      const auto cycle = build_cycle(domain_, dt, space_.positions[x], velocity_.node(v));
      if (cycle.grazing) {
        p.grazing = true;
        ++out.grazing_count;
        continue;
      }
      out.max_bounces = std::max(out.max_bounces, cycle.m);
      p.first_segment = static_cast<std::uint32_t>(out.segments.size());
      p.segment_count = static_cast<std::uint32_t>(cycle.m + 1);
      for (int k = 0; k <= cycle.m; ++k) {
        const auto& e = cycle.entries[k];
        SlabSegment seg;
        seg.start = std::max(cycle.entries[k + 1].t, 0.0);
        seg.end = e.t;
        const double mid = 0.5 * (seg.start + seg.end);
        seg.midpoint = stencil(e.x - (e.t - mid) * e.v);
        seg.v = static_cast<std::uint32_t>(k == 0 ? v : snap(v, e.v));
        out.segments.push_back(seg);
      }
      const auto& last = cycle.entries[cycle.m];
      p.origin = stencil(last.x - last.t * last.v);
      p.origin_v = static_cast<std::uint32_t>(cycle.m == 0 ? v : snap(v, last.v));
    }
  }
  // Grazing nodes borrow the nearest non-grazing velocity at the same point.
  for (std::size_t x = 0; x < spatial_size(); ++x) {
    for (std::size_t v = 0; v < nv; ++v) {
      SlabPath& p = out.paths[x * nv + v];
      if (!p.grazing) continue;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t u = 0; u < nv; ++u) {
        if (out.paths[x * nv + u].grazing) continue;
        const double d = (velocity_.node(u) - velocity_.node(v)).squaredNorm();
        if (d < best) {
          best = d;
          p.fill_from = static_cast<std::uint32_t>(u);
        }
      }
      if (!std::isfinite(best)) throw GeometryError("phase grid: every velocity grazes at a node");
    }
  }
  return out;
}

Background Background::constant(std::vector<double> g) {
  Background b;
  b.states_.push_back(std::move(g));
  return b;
}

Background Background::trajectory(std::vector<double> times,
                                  std::vector<std::vector<double>> states) {
  if (times.size() != states.size() || times.empty()) {
    throw std::invalid_argument("background: times and states differ in length");
  }
  if (!std::is_sorted(times.begin(), times.end())) {
    throw std::invalid_argument("background: times must increase");
  }
  Background b;
  b.times_ = std::move(times);
  b.states_ = std::move(states);
  return b;
}

const std::vector<double>& Background::at(double t) const {
  if (times_.empty()) return states_.front();
  const auto it = std::lower_bound(times_.begin(), times_.end(), t - 1e-9);
  if (it == times_.end() || std::abs(*it - t) > 1e-9) {
    throw std::invalid_argument("background: no state stored at t = " + std::to_string(t));
  }
  return states_[static_cast<std::size_t>(it - times_.begin())];
}

namespace {

std::vector<double> shell_average(const VelocityGrid& grid, const std::vector<double>& r) {
  std::vector<double> out(r.size());
  for (const auto& shell : grid.shells()) {
    double s = 0.0;
    for (auto idx : shell) s += r[idx];
    s /= static_cast<double>(shell.size());
    for (auto idx : shell) out[idx] = s;
  }
  return out;
}

}  // namespace

Field duhamel_source(const CollisionOperator& op, const Field& f, std::span<const double> g) {
  const auto& grid = op.grid();
  if (f.velocity() != grid.size() || g.size() != grid.size()) {
    throw std::invalid_argument("duhamel_source: grid mismatch");
  }
  const auto gain_gg = op.gain(g, g);
  const auto rate = op.frequency(g);
  const auto rate_shell = shell_average(grid, rate);
  Field phi(f.spatial(), f.velocity());
  std::vector<double> big(grid.size());
  std::vector<double> q(grid.size());
  for (std::size_t x = 0; x < f.spatial(); ++x) {
    const auto row = f.row(x);
    bool zero = true;
    for (double value : row) zero = zero && value == 0.0;
    if (zero) continue;
    for (std::size_t i = 0; i < big.size(); ++i) big[i] = g[i] + row[i];
    const auto gain_ff = op.gain(big, big);
    const auto rf = op.frequency(row);
    // Total collision term Q(F,F) - Q(G,G) and its split against the shell-averaged rate.
    for (std::size_t i = 0; i < q.size(); ++i) {
      q[i] = gain_ff[i] - gain_gg[i] - big[i] * rf[i] - row[i] * rate[i];
    }
    if (op.params().conservative_fix) op.conservative_correction(q);
    auto out = phi.row(x);
    for (std::size_t i = 0; i < q.size(); ++i) out[i] = q[i] + row[i] * rate_shell[i];
  }
  return phi;
}

double duhamel_rhs(const PhaseGrid& grid, const Field& phi, const Vec3& x, const Vec3& v) {
  const auto& nodes = grid.velocity().nodes();
  std::size_t best = 0;
  double d_best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double d = (nodes[i] - v).squaredNorm();
    if (d < d_best) {
      d_best = d;
      best = i;
    }
  }
  return grid.interpolate(phi, x, best);
}

TransportSolver::TransportSolver(const PhaseGrid& grid, const CollisionOperator& op,
                                 TransportOptions options)
    : grid_(&grid), op_(&op), options_(options) {
  if (!(grid.velocity() == op.grid())) {
    throw std::invalid_argument("transport: phase and collision velocity grids differ");
  }
}

std::vector<double> TransportSolver::shell_rate(std::span<const double> g) const {
  if (!options_.collisions) return std::vector<double>(g.size(), 0.0);
  return shell_average(op_->grid(), op_->frequency(g));
}

Field TransportSolver::source(const Field& f, std::span<const double> g) const {
  if (!options_.collisions) return Field(f.spatial(), f.velocity());
  return duhamel_source(*op_, f, g);
}

Field TransportSolver::slab(const Field& f, const Field& phi_start, const Field& phi_end,
                            std::span<const double> rate_start, std::span<const double> rate_end,
                            double dt) const {
  const auto& paths = grid_->paths(dt);
  const std::size_t nv = grid_->velocity().size();
  if (f.spatial() != grid_->spatial_size() || f.velocity() != nv) {
    throw std::invalid_argument("transport slab: field does not match the phase grid");
  }
  const bool with_source = options_.collisions && phi_start.size() == f.size();
  const Field ef = grid_->extend(f);
  const Field es = with_source ? grid_->extend(phi_start) : Field();
  const Field ee = with_source ? grid_->extend(phi_end) : Field();
  Field out(f.spatial(), nv);
  for (std::size_t x = 0; x < f.spatial(); ++x) {
    for (std::size_t v = 0; v < nv; ++v) {
      const SlabPath& p = paths.paths[x * nv + v];
      if (p.grazing) continue;
      const double rate = 0.5 * (rate_start[v] + rate_end[v]);
      double value = std::exp(-rate * dt) * apply(p.origin, ef, p.origin_v);
      if (with_source) {
        for (std::uint32_t s = 0; s < p.segment_count; ++s) {
          const SlabSegment& seg = paths.segments[p.first_segment + s];
          const double mid = 0.5 * (seg.start + seg.end);
          const double a = mid / dt;
          const double phi = (1.0 - a) * apply(seg.midpoint, es, seg.v) +
                             a * apply(seg.midpoint, ee, seg.v);
          value += (seg.end - seg.start) * std::exp(-rate * (dt - mid)) * phi;
        }
      }
      out(x, v) = value;
    }
    for (std::size_t v = 0; v < nv; ++v) {
      const SlabPath& p = paths.paths[x * nv + v];
      if (p.grazing) out(x, v) = out(x, p.fill_from);
    }
  }
  return out;
}

namespace {

void clip_density(Field& f, std::span<const double> g) {
  for (std::size_t x = 0; x < f.spatial(); ++x) {
    auto row = f.row(x);
    for (std::size_t v = 0; v < row.size(); ++v) row[v] = std::max(row[v], -g[v]);
  }
}

}  // namespace

InhomogeneousState TransportSolver::mild_step(const InhomogeneousState& state,
                                              const Background& background, double dt) const {
  const auto& g0 = background.at(state.t);
  const auto& g1 = background.at(state.t + dt);
  const Field phi = source(state.f, g0);
  InhomogeneousState next;
  next.f = slab(state.f, phi, phi, shell_rate(g0), shell_rate(g1), dt);
  next.t = state.t + dt;
  if (options_.clip) clip_density(next.f, g1);
  return next;
}

namespace {

struct Totals {
  double mass = 0.0;
  double energy = 0.0;
};

Totals totals(const PhaseGrid& grid, const Field& f, std::span<const double> g) {
  const auto& vg = grid.velocity();
  const auto m = moments(vg, f, grid.space());
  double gm = 0.0, ge = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    gm += g[i];
    ge += g[i] * vg.node(i).squaredNorm();
  }
  const double volume = grid.space().cell_volume * static_cast<double>(grid.spatial_size());
  return {m.mass + vg.cell_weight() * gm * volume, m.energy + vg.cell_weight() * ge * volume};
}

double min_density(const Field& f, std::span<const double> g) {
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t x = 0; x < f.spatial(); ++x) {
    const auto row = f.row(x);
    for (std::size_t v = 0; v < row.size(); ++v) lo = std::min(lo, g[v] + row[v]);
  }
  return lo;
}

}  // namespace

PicardResult picard_local_solve(const TransportSolver& solver, const Field& f0,
                                const Background& background, double t_end, double dt,
                                const PicardOptions& options) {
  if (!(dt > 0.0) || t_end < 0.0) throw std::invalid_argument("picard: bad time grid");
  if (options.max_iters < 1) throw std::invalid_argument("picard: max_iters must be >= 1");
  const auto& grid = solver.grid();
  const auto& vg = grid.velocity();
  const long slabs = std::lround(t_end / dt);
  const long per_window = std::max(1L, std::lround(options.window / dt));

  PicardResult result;
  result.converged = true;
  const Totals start = totals(grid, f0, background.at(0.0));
  auto record = [&](double t, const Field& f) {
    const auto& g = background.at(t);
    const Totals now = totals(grid, f, g);
    result.times.push_back(t);
    result.norms.push_back(weighted_sup_norm(vg, f, options.l));
    result.mass_drift.push_back(now.mass - start.mass);
    result.energy_drift.push_back(now.energy - start.energy);
    result.min_density.push_back(min_density(f, g));
  };

  Field current = f0;
  record(0.0, current);
  for (long w0 = 0; w0 < slabs; w0 += per_window) {
    const long count = std::min(per_window, slabs - w0);
    PicardWindow window;
    window.t_start = static_cast<double>(w0) * dt;
    window.t_end = static_cast<double>(w0 + count) * dt;

    std::vector<std::vector<double>> rates(count + 1);
    for (long j = 0; j <= count; ++j) {
      rates[j] = solver.shell_rate(background.at(static_cast<double>(w0 + j) * dt));
    }
    std::vector<Field> iterate(count + 1, current);
    std::vector<Field> phi(count + 1);
    for (int n = 0; n < options.max_iters; ++n) {
      for (long j = 0; j <= count; ++j) {
        phi[j] = solver.source(iterate[j], background.at(static_cast<double>(w0 + j) * dt));
      }
      std::vector<Field> next(count + 1);
      next[0] = current;
      double gap = 0.0;
      for (long j = 0; j < count; ++j) {
        next[j + 1] = solver.slab(next[j], phi[j], phi[j + 1], rates[j], rates[j + 1], dt);
        if (solver.options().clip) {
          clip_density(next[j + 1], background.at(static_cast<double>(w0 + j + 1) * dt));
        }
        const double d = weighted_sup_norm(vg, next[j + 1] - iterate[j + 1], options.l);
        gap = std::max(gap, std::isfinite(d) ? d : std::numeric_limits<double>::infinity());
      }
      iterate = std::move(next);
      window.gaps.push_back(gap);
      result.max_iterations = std::max(result.max_iterations, n + 1);
      if (window.gaps.size() > 1) {
        const double prev = window.gaps[window.gaps.size() - 2];
        window.ratios.push_back(prev > 0.0 ? gap / prev : 0.0);
        const auto& r = window.ratios;
        if (r.size() >= 3 && r[r.size() - 1] >= 1.0 && r[r.size() - 2] >= 1.0 &&
            r[r.size() - 3] >= 1.0) {
          throw NonContractionError(window.ratios, window.gaps);
        }
      }
      if (gap <= options.tol) {
        window.converged = true;
        break;
      }
    }
    result.converged = result.converged && window.converged;
    result.final_gap = window.gaps.back();
    for (long j = 1; j <= count; ++j) record(static_cast<double>(w0 + j) * dt, iterate[j]);
    current = std::move(iterate[count]);
    result.windows.push_back(std::move(window));
  }
  result.final_field = std::move(current);
  return result;
}

void PicardResult::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string());
  os << "t,norm,mass_drift,energy_drift,min_density,window_ratios\n" << std::setprecision(17);
  std::size_t w = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    os << times[i] << ',' << norms[i] << ',' << mass_drift[i] << ',' << energy_drift[i] << ','
       << min_density[i] << ',';
    // Ratios are listed on the last level of their window.
    while (w < windows.size() && windows[w].t_end < times[i] - 1e-12) ++w;
    if (w < windows.size() && std::abs(windows[w].t_end - times[i]) <= 1e-12) {
      for (std::size_t k = 0; k < windows[w].ratios.size(); ++k) {
        os << (k ? ";" : "") << windows[w].ratios[k];
      }
    }
    os << '\n';
  }
}

GrowthBound local_solution_bound(std::span<const double> times, std::span<const double> norms) {
  if (times.size() != norms.size() || times.empty()) {
    throw std::invalid_argument("local_solution_bound: series lengths differ");
  }
  GrowthBound b;
  b.initial = norms[0];
  const bool all_zero = std::all_of(norms.begin(), norms.end(), [](double n) { return n == 0.0; });
  if (all_zero) {
    b.zero_solution = true;
    return b;
  }
  if (!(b.initial > 0.0)) {
    b.beta = std::numeric_limits<double>::infinity();
    b.holds = false;
    return b;
  }
  b.beta = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double dt = times[i] - times[0];
    if (dt <= 0.0) continue;
    b.beta = std::max(b.beta, (std::log(norms[i]) - std::log(b.initial)) / dt);
  }
  if (!std::isfinite(b.beta)) b.beta = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double bound = std::log(b.initial) + b.beta * (times[i] - times[0]);
    b.holds = b.holds && std::log(norms[i]) <= bound + 1e-12;
  }
  return b;
}

}  // namespace hsbe
