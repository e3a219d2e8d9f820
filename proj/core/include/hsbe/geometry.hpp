#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hsbe/velocity_grid.hpp"

namespace hsbe {

using Mat3 = Eigen::Matrix3d;

struct Box {
  Vec3 lower = Vec3::Constant(-1.0);
  Vec3 upper = Vec3::Constant(1.0);

  Vec3 center() const { return 0.5 * (lower + upper); }
  double diameter() const { return (upper - lower).norm(); }
};

/// Smooth level-set function xi with its first and second derivatives.
/// Plugin shapes derive from this class.
class LevelSet {
 public:
  virtual ~LevelSet() = default;
  virtual double value(const Vec3& x) const = 0;
  virtual Vec3 gradient(const Vec3& x) const = 0;
  virtual Mat3 hessian(const Vec3& x) const = 0;
  /// Box containing {xi <= 0}.
  virtual Box bounds() const = 0;
  virtual std::string name() const = 0;
};

/// xi = |x - c|^2 - r^2.
class Ball final : public LevelSet {
 public:
  explicit Ball(double radius = 1.0, Vec3 center = Vec3::Zero());
  double value(const Vec3& x) const override;
  Vec3 gradient(const Vec3& x) const override;
  Mat3 hessian(const Vec3& x) const override;
  Box bounds() const override;
  std::string name() const override { return "ball"; }

 private:
  double radius_;
  Vec3 center_;
};

/// xi = sum_i x_i^2 / a_i^2 - 1.
class Ellipsoid final : public LevelSet {
 public:
  explicit Ellipsoid(Vec3 semi_axes);
  double value(const Vec3& x) const override;
  Vec3 gradient(const Vec3& x) const override;
  Mat3 hessian(const Vec3& x) const override;
  Box bounds() const override;
  std::string name() const override { return "ellipsoid"; }

 private:
  Vec3 semi_axes_;
  Vec3 inv2_;
};

/// xi = sum_i |x_i|^p - 1 with p >= 2.
class Superquadric final : public LevelSet {
 public:
  explicit Superquadric(double exponent = 4.0);
  double value(const Vec3& x) const override;
  Vec3 gradient(const Vec3& x) const override;
  Mat3 hessian(const Vec3& x) const override;
  Box bounds() const override;
  std::string name() const override { return "superquadric"; }

 private:
  double p_;
};

struct AxisCertificate {
  bool holds = false;
  double residual = 0.0;
};

/// Omega = {xi < 0} with its certified constants.
struct Domain {
  std::shared_ptr<const LevelSet> xi;
  double c_xi = 0.0;
  std::optional<Axis> axis;
  Box bbox;

  double value(const Vec3& x) const { return xi->value(x); }
  Vec3 gradient(const Vec3& x) const { return xi->gradient(x); }
  bool strictly_convex() const { return c_xi > 0.0; }
};

inline constexpr double kBoundaryTolerance = 1e-10;
inline constexpr double kAxisTolerance = 1e-9;
inline constexpr double kGrazingEpsilon = 1e-8;
inline constexpr int kBounceCap = 10000;

/// Builds a domain, certifying convexity and (when given) the axis.
/// Throws GeometryError when a given axis fails certification.
Domain make_domain(std::shared_ptr<const LevelSet> xi, std::optional<Axis> axis = std::nullopt,
                   int samples = 4096);

/// Outward unit normal at a boundary point.
Vec3 normal(const Domain& domain, const Vec3& x);

/// Minimum over sampled points of closure(Omega) of the smallest Hessian eigenvalue.
double certify_convexity(const Domain& domain, int samples);

/// max |((x - x0) x w) . n(x)| over boundary samples; holds iff <= 1e-9.
AxisCertificate certify_axis(const Domain& domain, const Vec3& x0, const Vec3& omega_axis,
                             int samples);

/// Deterministic boundary points: rays from the bbox center along Fibonacci directions.
std::vector<Vec3> boundary_samples(const Domain& domain, int samples);

struct Exit {
  double t_b = 0.0;
  Vec3 x_b = Vec3::Zero();
};

/// Smallest t > 0 with x - t v on the boundary. x may lie on the boundary
/// provided -v points inward there.
Exit backward_exit(const Domain& domain, const Vec3& x, const Vec3& v);

/// R_x v = v - 2 (v . n) n.
Vec3 specular_reflect(const Vec3& n, const Vec3& v);

struct CycleEntry {
  double t = 0.0;
  Vec3 x = Vec3::Zero();
  Vec3 v = Vec3::Zero();
};

/// Back-time specular cycle: entries k = 0..m+1 with t_{m+1} <= 0 < t_m.
/// Segment k covers s in [max(t_{k+1}, 0), t_k] with X(s) = x_k - (t_k - s) v_k.
struct SpecularCycle {
  std::vector<CycleEntry> entries;
  int m = 0;
  bool grazing = false;

  Vec3 position(double s) const;
  Vec3 velocity(double s) const;
  /// Segment index containing time s.
  int segment(double s) const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Throws GeometryError past `bounce_cap` bounces.
SpecularCycle build_cycle(const Domain& domain, double t, const Vec3& x, const Vec3& v,
                          double eps_graze = kGrazingEpsilon, int bounce_cap = kBounceCap);

}  // namespace hsbe
