#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace hsbe {

using Vec3 = Eigen::Vector3d;

/// Rotation axis through `origin` with direction `direction`.
struct Axis {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
};

/// Cell-centered uniform lattice on [-v_max, v_max]^3.
///
/// Node (i, j, k) sits at -v_max + (i + 1/2) h on each axis with h = 2 v_max / n.
/// Because n is even the node set is point-symmetric, so odd moments of even
/// functions vanish exactly in the discrete sums.
class VelocityGrid {
 public:
  VelocityGrid(double v_max, int n_v);

  double v_max() const { return v_max_; }
  int n() const { return n_; }
  double spacing() const { return h_; }
  double cell_weight() const { return cell_weight_; }
  std::size_t size() const { return nodes_.size(); }

  double coordinate(int i) const { return -v_max_ + (i + 0.5) * h_; }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n_ + j) * n_ + k;
  }
  std::array<int, 3> coords(std::size_t idx) const;

  const Vec3& node(std::size_t idx) const { return nodes_[idx]; }
  const std::vector<Vec3>& nodes() const { return nodes_; }
  double speed(std::size_t idx) const { return speeds_[idx]; }
  /// Index of the node -v.
  std::size_t mirror(std::size_t idx) const { return size() - 1 - idx; }

  /// Node indices sharing a speed shell, shells sorted by radius.
  const std::vector<std::vector<std::size_t>>& shells() const { return shells_; }
  /// Shell id of a node.
  std::size_t shell_of(std::size_t idx) const { return shell_of_[idx]; }

  bool operator==(const VelocityGrid& other) const {
    return v_max_ == other.v_max_ && n_ == other.n_;
  }

 private:
  double v_max_;
  int n_;
  double h_;
  double cell_weight_;
  std::vector<Vec3> nodes_;
  std::vector<double> speeds_;
  std::vector<std::vector<std::size_t>> shells_;
  std::vector<std::size_t> shell_of_;
};

/// Global Maxwellian (2 pi)^{-3/2} exp(-|v|^2 / 2).
double maxwellian(const Vec3& v);

/// Polynomial weight <v>^l = (1 + |v|^2)^{l/2}.
double weight(const Vec3& v, double l);

/// Maxwellian sampled on every node.
std::vector<double> sample_maxwellian(const VelocityGrid& grid);

/// Values of a density on (spatial node x velocity node), row-major with the
/// velocity index fastest. Velocity-only data uses a single spatial row.
class Field {
 public:
  Field() = default;
  Field(std::size_t spatial, std::size_t velocity, double value = 0.0)
      : spatial_(spatial), velocity_(velocity), data_(spatial * velocity, value) {}
  /// Single-row field holding `values`.
  static Field homogeneous(std::vector<double> values);

  std::size_t spatial() const { return spatial_; }
  std::size_t velocity() const { return velocity_; }
  std::size_t size() const { return data_.size(); }

  std::span<double> row(std::size_t x) { return {data_.data() + x * velocity_, velocity_}; }
  std::span<const double> row(std::size_t x) const {
    return {data_.data() + x * velocity_, velocity_};
  }
  double& operator()(std::size_t x, std::size_t v) { return data_[x * velocity_ + v]; }
  double operator()(std::size_t x, std::size_t v) const { return data_[x * velocity_ + v]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Field& operator+=(const Field& other);
  Field& operator-=(const Field& other);
  Field& operator*=(double s);

  bool operator==(const Field& other) const = default;

 private:
  std::size_t spatial_ = 0;
  std::size_t velocity_ = 0;
  std::vector<double> data_;
};

Field operator+(Field a, const Field& b);
Field operator-(Field a, const Field& b);
Field operator*(double s, Field a);

/// max over all nodes of |<v>^l f(x, v)|.
double weighted_sup_norm(const VelocityGrid& grid, const Field& f, double l);
double weighted_sup_norm(const VelocityGrid& grid, std::span<const double> values, double l);

/// Precomputed <v>^l on the grid nodes.
std::vector<double> weight_table(const VelocityGrid& grid, double l);

/// Spatial quadrature support for phase-space fields.
struct SpatialNodes {
  std::vector<Vec3> positions;
  double cell_volume = 1.0;
};

struct Moments {
  double mass = 0.0;
  Vec3 momentum = Vec3::Zero();
  double energy = 0.0;
  std::optional<double> angular_momentum;
};

/// Quadrature sums of f against {1, v, |v|^2} over every row (rows weighted by 1).
Moments moments(const VelocityGrid& grid, const Field& f);

/// Phase-space moments; the angular momentum ((x - x0) x w) . v is added when an
/// axis is given.
Moments moments(const VelocityGrid& grid, const Field& f, const SpatialNodes& space,
                const std::optional<Axis>& axis = std::nullopt);

/// Angular momentum about `axis`; throws NoAxisError when the axis is absent.
double angular_momentum(const VelocityGrid& grid, const Field& f, const SpatialNodes& space,
                        const std::optional<Axis>& axis);

/// Tail mass of the Maxwellian outside the truncated velocity box.
double maxwellian_tail_mass(const VelocityGrid& grid);

}  // namespace hsbe
