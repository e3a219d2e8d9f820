#include "hsbe/linearized.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "hsbe/errors.hpp"

namespace hsbe {

namespace {

using ColMap = Eigen::Map<const Eigen::MatrixXd>;
using MutColMap = Eigen::Map<Eigen::MatrixXd>;

double lever(const Vec3& x, const Axis& axis, const Vec3& v) {
  return (x - axis.origin).cross(axis.direction).dot(v);
}

}  // namespace

ConservationBasis::ConservationBasis(const PhaseGrid& grid, const std::optional<Axis>& axis)
    : grid_(&grid), has_axis_(axis.has_value()) {
  const auto& vg = grid.velocity();
  const auto& pos = grid.space().positions;
  std::vector<Field> raw;
  auto make = [&](auto&& fn) {
    Field f(grid.spatial_size(), vg.size());
    for (std::size_t x = 0; x < f.spatial(); ++x) {
      for (std::size_t v = 0; v < vg.size(); ++v) {
        f(x, v) = fn(pos[x], vg.node(v)) * std::sqrt(maxwellian(vg.node(v)));
      }
    }
    raw.push_back(std::move(f));
  };
  make([](const Vec3&, const Vec3&) { return 1.0; });
  if (axis) {
    Axis a = *axis;
    a.direction.normalize();
    make([a](const Vec3& x, const Vec3& v) { return lever(x, a, v); });
  }
  make([](const Vec3&, const Vec3& v) { return v.squaredNorm(); });

  // Modified Gram-Schmidt, two passes.
  for (auto& f : raw) {
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& e : fields_) {
        const double c = inner(f, e);
        for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] -= c * e.data()[i];
      }
    }
    const double norm = std::sqrt(inner(f, f));
    if (!(norm > 0.0)) throw GeometryError("conservation basis: degenerate invariant field");
    f *= 1.0 / norm;
    fields_.push_back(std::move(f));
  }
}

double ConservationBasis::inner(const Field& a, const Field& b) const {
  if (a.size() != b.size()) throw std::invalid_argument("conservation basis: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s * grid_->velocity().cell_weight() * grid_->space().cell_volume;
}

std::vector<double> ConservationBasis::coefficients(const Field& f) const {
  std::vector<double> c;
  for (const auto& e : fields_) c.push_back(inner(f, e));
  return c;
}

Field project_P(const Field& f, const ConservationBasis& basis) {
  Field out(f.spatial(), f.velocity());
  const auto c = basis.coefficients(f);
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const auto& e = basis[i].data();
    for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] += c[i] * e[k];
  }
  return out;
}

ConservationResiduals check_conservation_constraints(const PhaseGrid& grid, const Field& h0,
                                                     const ConservationBasis& basis,
                                                     const std::optional<Axis>& axis,
                                                     bool correct) {
  const auto& vg = grid.velocity();
  const auto& pos = grid.space().positions;
  std::vector<double> sqrt_mu(vg.size());
  for (std::size_t v = 0; v < vg.size(); ++v) sqrt_mu[v] = std::sqrt(maxwellian(vg.node(v)));

  ConservationResiduals r;
  Field h = h0;
  if (correct) {
    Field scaled = h0;
    for (std::size_t x = 0; x < h.spatial(); ++x) {
      for (std::size_t v = 0; v < vg.size(); ++v) scaled(x, v) /= sqrt_mu[v];
    }
    const Field p = project_P(scaled, basis);
    for (std::size_t x = 0; x < h.spatial(); ++x) {
      for (std::size_t v = 0; v < vg.size(); ++v) h(x, v) -= p(x, v) * sqrt_mu[v];
    }
    r.corrected = h;
  }
  const double volume = grid.space().cell_volume * static_cast<double>(grid.spatial_size());
  const double scale = vg.cell_weight() * grid.space().cell_volume / volume;
  double mass = 0.0, energy = 0.0, ang = 0.0;
  Axis a;
  if (axis) {
    a = *axis;
    a.direction.normalize();
  }
  for (std::size_t x = 0; x < h.spatial(); ++x) {
    for (std::size_t v = 0; v < vg.size(); ++v) {
      mass += h(x, v);
      energy += h(x, v) * vg.node(v).squaredNorm();
      if (axis) ang += h(x, v) * lever(pos[x], a, vg.node(v));
    }
  }
  r.mass = mass * scale;
  r.energy = energy * scale;
  if (axis) r.angular = ang * scale;
  r.passes = std::abs(r.mass) <= 1e-8 && std::abs(r.energy) <= 1e-8 &&
             (!r.angular || std::abs(*r.angular) <= 1e-8);
  return r;
}

DecayFit estimate_decay_rate(std::span<const double> times, std::span<const double> norms,
                             double skip_fraction) {
  if (times.size() != norms.size()) throw DataError("decay fit: series lengths differ");
  if (times.empty()) throw DataError("decay fit: empty series");
  for (double n : norms) {
    if (!(n > 0.0)) throw DataError("decay fit: non-positive norm in series");
  }
  const double t0 = times.front();
  const double cut = t0 + skip_fraction * (times.back() - t0);
  std::vector<double> ts, ys;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] >= cut - 1e-12) {
      ts.push_back(times[i]);
      ys.push_back(std::log(norms[i]));
    }
  }
  if (ts.size() < 10) throw DataError("decay fit: fewer than 10 samples past the transient");
  const double n = static_cast<double>(ts.size());
  double st = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sy += ys[i];
  }
  const double tm = st / n, ym = sy / n;
  double stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    stt += (ts[i] - tm) * (ts[i] - tm);
    sty += (ts[i] - tm) * (ys[i] - ym);
  }
  const double slope = stt > 0.0 ? sty / stt : 0.0;
  const double intercept = ym - slope * tm;
  double ss = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double e = ys[i] - (intercept + slope * ts[i]);
    ss += e * e;
  }
  DecayFit fit;
  fit.lambda = -slope;
  fit.prefactor = std::exp(intercept);
  fit.residual = std::sqrt(ss / n);
  fit.samples = ts.size();
  return fit;
}

LinearizedSolver::LinearizedSolver(const PhaseGrid& grid, const LinearizedCollision& lin,
                                   const std::optional<Axis>& axis, LinearizedOptions options)
    : grid_(&grid),
      lin_(&lin),
      transport_(grid, lin.op()),
      options_(options),
      basis_(grid, axis) {
  const auto& vg = grid.velocity();
  if (options_.sweeps < 1) throw std::invalid_argument("linearized: sweeps must be >= 1");
  cutoff_ = options_.cutoff_n < 0.0 ? 0.5 * vg.v_max() : options_.cutoff_n;
  const auto& nu = lin.nu();
  rate_.assign(vg.size(), 0.0);
  for (const auto& shell : vg.shells()) {
    double s = 0.0;
    for (auto idx : shell) s += nu[idx];
    s /= static_cast<double>(shell.size());
    for (auto idx : shell) rate_[idx] = s;
  }
  k_ = lin.k_matrix();
  for (std::size_t v = 0; v < vg.size(); ++v) k_(v, v) += rate_[v] - nu[v];
  sqrt_mu_ = lin.sqrt_mu();
  inv_sqrt_mu_.resize(vg.size());
  low_.resize(vg.size());
  for (std::size_t v = 0; v < vg.size(); ++v) {
    inv_sqrt_mu_[v] = 1.0 / sqrt_mu_[v];
    low_[v] = vg.speed(v) < cutoff_;
  }
}

Field LinearizedSolver::apply_k(const Field& h) const {
  Field out(h.spatial(), h.velocity());
  const auto nv = static_cast<Eigen::Index>(h.velocity());
  const auto nx = static_cast<Eigen::Index>(h.spatial());
  MutColMap(out.data().data(), nv, nx).noalias() = k_ * ColMap(h.data().data(), nv, nx);
  return out;
}

Field LinearizedSolver::nonlinear(const Field& h) const {
  Field out(h.spatial(), h.velocity());
  if (!options_.nonlinear) return out;
  const auto& op = lin_->op();
  std::size_t last = std::numeric_limits<std::size_t>::max();
  for (std::size_t x = 0; x < h.spatial(); ++x) {
    const auto row = h.row(x);
    if (std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; })) continue;
    auto dst = out.row(x);
    // Spatially homogeneous data repeats rows; reuse the previous evaluation.
    if (last != std::numeric_limits<std::size_t>::max() &&
        std::equal(row.begin(), row.end(), h.row(last).begin())) {
      const auto src = out.row(last);
      std::copy(src.begin(), src.end(), dst.begin());
      continue;
    }
    const auto q = op.collide(row, row);
    std::copy(q.begin(), q.end(), dst.begin());
    last = x;
  }
  return out;
}

Field LinearizedSolver::combine(const SplitState& s) const {
  Field h = s.h1;
  for (std::size_t x = 0; x < h.spatial(); ++x) {
    for (std::size_t v = 0; v < h.velocity(); ++v) h(x, v) += sqrt_mu_[v] * s.h2(x, v);
  }
  return h;
}

double LinearizedSolver::projection_residual(const SplitState& s) const {
  Field m = s.h2;
  for (std::size_t x = 0; x < m.spatial(); ++x) {
    for (std::size_t v = 0; v < m.velocity(); ++v) m(x, v) += inv_sqrt_mu_[v] * s.h1(x, v);
  }
  double sum = 0.0;
  for (double c : basis_.coefficients(m)) sum += c * c;
  return std::sqrt(sum);
}

void LinearizedSolver::check_step(double dt) const {
  const double max_rate = *std::max_element(lin_->nu().begin(), lin_->nu().end());
  if (!(dt > 0.0) || dt * max_rate > 1.0) throw StepSizeError(dt, max_rate);
}

void LinearizedSolver::fix_moments(const Field& before, const Field& after, Field& target,
                                   double dt) const {
  if (!options_.local_moment_fix) return;
  const std::vector<double> zero(rate_.size(), 0.0);
  const Field moved = transport_.slab(before, Field(), Field(), zero, zero, dt);
  const auto& op = lin_->op();
  std::vector<double> q(after.velocity());
  for (std::size_t x = 0; x < after.spatial(); ++x) {
    for (std::size_t v = 0; v < q.size(); ++v) q[v] = after(x, v) - moved(x, v);
    std::vector<double> kept = q;
    op.conservative_correction(kept);
    for (std::size_t v = 0; v < q.size(); ++v) target(x, v) -= q[v] - kept[v];
  }
}

void LinearizedSolver::fix_invariants(const Field& before, const Field& after,
                                      Field& target) const {
  if (!options_.global_moment_fix) return;
  auto scaled = [&](const Field& h) {
    Field m = h;
    for (std::size_t x = 0; x < m.spatial(); ++x) {
      for (std::size_t v = 0; v < m.velocity(); ++v) m(x, v) *= inv_sqrt_mu_[v];
    }
    return m;
  };
  const auto c0 = basis_.coefficients(scaled(before));
  const auto c1 = basis_.coefficients(scaled(after));
  for (std::size_t i = 0; i < basis_.size(); ++i) {
    const double d = c1[i] - c0[i];
    const Field& e = basis_[i];
    for (std::size_t x = 0; x < target.spatial(); ++x) {
      for (std::size_t v = 0; v < target.velocity(); ++v) target(x, v) -= d * sqrt_mu_[v] * e(x, v);
    }
  }
}

SplitState LinearizedSolver::step_split(const SplitState& state, double dt) const {
  check_step(dt);
  const std::size_t nv = state.h1.velocity();
  const Field h = combine(state);
  const Field q = nonlinear(h);
  const Field kh1 = apply_k(state.h1);

  Field mu_h2 = state.h2;
  for (std::size_t x = 0; x < mu_h2.spatial(); ++x) {
    for (std::size_t v = 0; v < nv; ++v) mu_h2(x, v) *= sqrt_mu_[v];
  }
  const Field k_mu_h2 = apply_k(mu_h2);

  // h1 source: chi_N^c K h1 + Q(h, h).
  auto h1_source = [&](const Field& kh, const Field& qh) {
    Field s(kh.spatial(), nv);
    for (std::size_t x = 0; x < s.spatial(); ++x) {
      for (std::size_t v = 0; v < nv; ++v) s(x, v) = (low_[v] ? 0.0 : kh(x, v)) + qh(x, v);
    }
    return s;
  };
  const Field s1 = h1_source(kh1, q);
  Field h1 = transport_.slab(state.h1, s1, s1, rate_, rate_, dt);
  for (int sweep = 1; sweep < options_.sweeps; ++sweep) {
    SplitState trial{h1, state.h2, state.t + dt};
    const Field s1_end = h1_source(apply_k(h1), nonlinear(combine(trial)));
    h1 = transport_.slab(state.h1, s1, s1_end, rate_, rate_, dt);
  }

  // h2 source: mu^{-1/2} K(sqrt(mu) h2) + mu^{-1/2} chi_N K h1.
  Field s2(state.h2.spatial(), nv);
  for (std::size_t x = 0; x < s2.spatial(); ++x) {
    for (std::size_t v = 0; v < nv; ++v) {
      s2(x, v) = inv_sqrt_mu_[v] * (k_mu_h2(x, v) + (low_[v] ? kh1(x, v) : 0.0));
    }
  }
  SplitState next;
  next.h2 = transport_.slab(state.h2, s2, s2, rate_, rate_, dt);
  next.h1 = std::move(h1);
  next.t = state.t + dt;
  fix_moments(h, combine(next), next.h1, dt);
  fix_invariants(h, combine(next), next.h1);
  return next;
}

Field LinearizedSolver::step_unsplit(const Field& h, double dt) const {
  check_step(dt);
  Field s = apply_k(h);
  s += nonlinear(h);
  Field next = transport_.slab(h, s, s, rate_, rate_, dt);
  const Field after = next;
  fix_moments(h, after, next, dt);
  fix_invariants(h, Field(next), next);
  return next;
}

PerturbationTrajectory LinearizedSolver::solve(const Field& h0, double t_end, double dt) const {
  check_step(dt);
  const auto& vg = grid_->velocity();
  PerturbationTrajectory traj;
  SplitState state{h0, Field(h0.spatial(), h0.velocity()), 0.0};
  auto record = [&](const SplitState& s) {
    traj.times.push_back(s.t);
    traj.norm.push_back(weighted_sup_norm(vg, combine(s), options_.l));
    traj.norm_h1.push_back(weighted_sup_norm(vg, s.h1, options_.l));
    traj.norm_h2.push_back(weighted_sup_norm(vg, s.h2, options_.l));
    traj.projection.push_back(projection_residual(s));
  };
  record(state);
  const double initial = traj.norm.front();
  const long steps = std::lround(t_end / dt);
  for (long n = 0; n < steps; ++n) {
    state = step_split(state, dt);
    state.t = static_cast<double>(n + 1) * dt;
    record(state);
    if (traj.norm.back() > 10.0 * initial && initial > 0.0) {
      throw InstabilityError(state.t, traj.norm.back(), initial);
    }
    if (!std::isfinite(traj.norm.back())) throw InstabilityError(state.t, traj.norm.back(), initial);
  }
  traj.zero_solution =
      std::all_of(traj.norm.begin(), traj.norm.end(), [](double n) { return n == 0.0; });
  if (!traj.zero_solution) {
    try {
      traj.fit = estimate_decay_rate(traj.times, traj.norm);
    } catch (const DataError&) {
      // Too short or vanishing series: no fit reported.
    }
  }
  traj.final_state = std::move(state);
  return traj;
}

void PerturbationTrajectory::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string());
  os << "t,norm,norm_h1,norm_h2,projection\n" << std::setprecision(17);
  for (std::size_t i = 0; i < times.size(); ++i) {
    os << times[i] << ',' << norm[i] << ',' << norm_h1[i] << ',' << norm_h2[i] << ','
       << projection[i] << '\n';
  }
}

}  // namespace hsbe
