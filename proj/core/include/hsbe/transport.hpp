#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "hsbe/collision.hpp"
#include "hsbe/geometry.hpp"
#include "hsbe/velocity_grid.hpp"

namespace hsbe {

/// Trilinear stencil over bounding-box lattice nodes.
struct SpatialStencil {
  std::array<std::uint32_t, 8> node{};
  std::array<double, 8> weight{};
};

/// Back-trajectory of one phase node over a slab of length dt, in lattice form.
struct SlabPath {
  SpatialStencil origin;       ///< X_cl at the start of the slab
  std::uint32_t origin_v = 0;  ///< V_cl at the start of the slab, snapped to the speed shell
  std::uint32_t first_segment = 0;
  std::uint32_t segment_count = 0;
  bool grazing = false;
  std::uint32_t fill_from = 0;  ///< velocity node copied into a grazing node
};

/// One cycle segment: relative times [start, end] within the slab.
struct SlabSegment {
  double start = 0.0;
  double end = 0.0;
  SpatialStencil midpoint;
  std::uint32_t v = 0;
};

struct SlabPaths {
  double dt = 0.0;
  std::vector<SlabPath> paths;  ///< index x * Nv + v
  std::vector<SlabSegment> segments;
  std::size_t grazing_count = 0;
  int max_bounces = 0;
};

/// Interior lattice of Omega times the velocity grid, with a cache of slab paths per dt.
class PhaseGrid {
 public:
  /// `lattice` points per axis on the bounding box; nodes with xi >= -margin are masked out.
  PhaseGrid(Domain domain, VelocityGrid velocity, int lattice);

  const Domain& domain() const { return domain_; }
  const VelocityGrid& velocity() const { return velocity_; }
  std::size_t spatial_size() const { return space_.positions.size(); }
  std::size_t size() const { return spatial_size() * velocity_.size(); }
  const SpatialNodes& space() const { return space_; }
  int lattice() const { return lattice_; }
  double spacing() const { return spacing_; }
  double margin() const { return margin_; }

  Field zeros() const { return Field(spatial_size(), velocity_.size()); }

  SpatialStencil stencil(const Vec3& x) const;
  double interpolate(const Field& f, const Vec3& x, std::size_t v) const;
  /// Values on every bounding-box lattice node. Interior nodes keep theirs; a masked
  /// node y takes the mean over its equidistant nearest interior nodes of f(x, R v),
  /// with R the specular reflection about grad xi(y) snapped to the speed shell of v.
  Field extend(const Field& f) const;
  /// Node of the speed shell of `shell_of` closest in direction to `v`.
  std::size_t snap(std::size_t shell_of, const Vec3& v) const;

  /// Paths for slab length dt, built on first use.
  const SlabPaths& paths(double dt) const;

 private:
  SlabPaths build_paths(double dt) const;

  Domain domain_;
  VelocityGrid velocity_;
  int lattice_;
  double spacing_ = 0.0;
  double margin_ = 0.0;
  SpatialNodes space_;
  std::vector<std::vector<std::uint32_t>> nearest_;  // lattice node -> nearest interior nodes
  std::vector<std::vector<std::uint32_t>> mirror_;   // masked lattice node -> reflected velocity
  mutable std::map<double, std::shared_ptr<SlabPaths>> cache_;
};

/// Spatially homogeneous background G(t) sampled at slab levels.
class Background {
 public:
  /// Time-independent background.
  static Background constant(std::vector<double> g);
  /// States at times t_0 < t_1 < ...
  static Background trajectory(std::vector<double> times, std::vector<std::vector<double>> states);

  const std::vector<double>& at(double t) const;
  bool is_constant() const { return times_.empty(); }

 private:
  std::vector<double> times_;
  std::vector<std::vector<double>> states_;
};

/// Duhamel source phi = Q(f, G) + Q_gain(G, f) + Q(f, f) on every phase node.
/// With conservative_fix the invariant moments of phi - f RG vanish at each node.
Field duhamel_source(const CollisionOperator& op, const Field& f, std::span<const double> g);

/// phi at an arbitrary interior point, velocity taken at the grid node nearest v.
double duhamel_rhs(const PhaseGrid& grid, const Field& phi, const Vec3& x, const Vec3& v);

struct InhomogeneousState {
  Field f;
  double t = 0.0;
};

struct TransportOptions {
  bool collisions = true;  ///< off: pure transport with RG := 0 and phi := 0
  bool clip = false;       ///< clip F = G + f to nonnegative after each slab
};

/// Slab update of the mild form along specular back-trajectories.
class TransportSolver {
 public:
  TransportSolver(const PhaseGrid& grid, const CollisionOperator& op, TransportOptions options = {});

  const PhaseGrid& grid() const { return *grid_; }
  const CollisionOperator& op() const { return *op_; }
  const TransportOptions& options() const { return options_; }

  /// RG averaged over each speed shell, indexed by velocity node.
  std::vector<double> shell_rate(std::span<const double> g) const;

  /// f(t + dt) from f(t) with the source phi linear in time between phi_start and phi_end.
  Field slab(const Field& f, const Field& phi_start, const Field& phi_end,
             std::span<const double> rate_start, std::span<const double> rate_end, double dt) const;

  /// Explicit step: phi frozen at f(t).
  InhomogeneousState mild_step(const InhomogeneousState& state, const Background& background,
                               double dt) const;

  Field source(const Field& f, std::span<const double> g) const;

 private:
  const PhaseGrid* grid_;
  const CollisionOperator* op_;
  TransportOptions options_;
};

struct PicardOptions {
  double window = 0.02;  ///< iteration window length
  int max_iters = 8;
  double tol = 1e-8;
  double l = 7.0;  ///< weight exponent of the gap norm
};

struct PicardWindow {
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<double> gaps;    ///< sup_t ||w_l (f^{n+1} - f^n)||
  std::vector<double> ratios;  ///< gaps[n] / gaps[n-1]
  bool converged = false;
};

struct PicardResult {
  std::vector<double> times;
  std::vector<double> norms;          ///< ||w_l f(t)||_inf
  std::vector<double> mass_drift;     ///< mass of F(t) - mass of F(0)
  std::vector<double> energy_drift;
  std::vector<double> min_density;    ///< min of G + f
  std::vector<PicardWindow> windows;
  Field final_field;
  int max_iterations = 0;
  double final_gap = 0.0;
  bool converged = false;

  void write_csv(const std::filesystem::path& path) const;
};

/// Picard scheme on consecutive windows. Throws NonContractionError after three
/// consecutive ratios >= 1.
PicardResult picard_local_solve(const TransportSolver& solver, const Field& f0,
                                const Background& background, double t_end, double dt,
                                const PicardOptions& options = {});

struct GrowthBound {
  bool zero_solution = false;
  double beta = 0.0;  ///< smallest beta with log N(t) <= log N(0) + beta t
  double initial = 0.0;
  bool holds = true;
};

GrowthBound local_solution_bound(std::span<const double> times, std::span<const double> norms);

}  // namespace hsbe
