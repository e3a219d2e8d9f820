#include "hsbe/velocity_grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Geometry>

#include "hsbe/errors.hpp"

namespace hsbe {

VelocityGrid::VelocityGrid(double v_max, int n_v) : v_max_(v_max), n_(n_v) {
  if (!(v_max > 0.0) || !std::isfinite(v_max)) {
    throw std::invalid_argument("velocity grid: v_max must be positive, got " +
                                std::to_string(v_max));
  }
  if (n_v < 2 || n_v % 2 != 0) {
    throw std::invalid_argument("velocity grid: n_v must be even and >= 2, got " +
                                std::to_string(n_v));
  }
  h_ = 2.0 * v_max / n_v;
  cell_weight_ = h_ * h_ * h_;

  const std::size_t total = static_cast<std::size_t>(n_v) * n_v * n_v;
  nodes_.reserve(total);
  speeds_.reserve(total);
  // Squared radius in units of (h/2)^2 is a sum of three odd squares: an exact shell key.
  std::vector<long> keys;
  keys.reserve(total);
  for (int i = 0; i < n_v; ++i) {
    for (int j = 0; j < n_v; ++j) {
      for (int k = 0; k < n_v; ++k) {
        Vec3 v(coordinate(i), coordinate(j), coordinate(k));
        nodes_.push_back(v);
        speeds_.push_back(v.norm());
        const long a = 2 * i + 1 - n_v;
        const long b = 2 * j + 1 - n_v;
        const long c = 2 * k + 1 - n_v;
        keys.push_back(a * a + b * b + c * c);
      }
    }
  }

  std::map<long, std::vector<std::size_t>> by_key;
  for (std::size_t idx = 0; idx < total; ++idx) by_key[keys[idx]].push_back(idx);
  shells_.reserve(by_key.size());
  shell_of_.assign(total, 0);
  for (auto& [key, members] : by_key) {
    for (auto idx : members) shell_of_[idx] = shells_.size();
    shells_.push_back(std::move(members));
  }
}

std::array<int, 3> VelocityGrid::coords(std::size_t idx) const {
  const int k = static_cast<int>(idx % n_);
  const int j = static_cast<int>((idx / n_) % n_);
  const int i = static_cast<int>(idx / (static_cast<std::size_t>(n_) * n_));
  return {i, j, k};
}

double maxwellian(const Vec3& v) {
  static const double norm = std::pow(2.0 * std::numbers::pi, -1.5);
  return norm * std::exp(-0.5 * v.squaredNorm());
}

double weight(const Vec3& v, double l) {
  if (l == 0.0) return 1.0;
  return std::pow(1.0 + v.squaredNorm(), 0.5 * l);
}

std::vector<double> sample_maxwellian(const VelocityGrid& grid) {
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = maxwellian(grid.node(i));
  return out;
}

Field Field::homogeneous(std::vector<double> values) {
  Field f;
  f.spatial_ = 1;
  f.velocity_ = values.size();
  f.data_ = std::move(values);
  return f;
}

Field& Field::operator+=(const Field& other) {
  if (other.size() != size()) throw std::invalid_argument("field shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Field& Field::operator-=(const Field& other) {
  if (other.size() != size()) throw std::invalid_argument("field shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Field& Field::operator*=(double s) {
  for (auto& x : data_) x *= s;
  return *this;
}

Field operator+(Field a, const Field& b) { return a += b; }
Field operator-(Field a, const Field& b) { return a -= b; }
Field operator*(double s, Field a) { return a *= s; }

std::vector<double> weight_table(const VelocityGrid& grid, double l) {
  std::vector<double> w(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) w[i] = weight(grid.node(i), l);
  return w;
}

double weighted_sup_norm(const VelocityGrid& grid, std::span<const double> values, double l) {
  if (values.size() % grid.size() != 0) {
    throw std::invalid_argument("weighted_sup_norm: values do not match the velocity grid");
  }
  const auto w = weight_table(grid, l);
  double best = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    best = std::max(best, std::abs(w[i % w.size()] * values[i]));
  }
  return best;
}

double weighted_sup_norm(const VelocityGrid& grid, const Field& f, double l) {
  return weighted_sup_norm(grid, std::span<const double>(f.data()), l);
}

namespace {

void accumulate_row(const VelocityGrid& grid, std::span<const double> row, double scale,
                    Moments& m) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    const double fw = scale * row[i];
    const Vec3& v = grid.node(i);
    m.mass += fw;
    m.momentum += fw * v;
    m.energy += fw * v.squaredNorm();
  }
}

}  // namespace

Moments moments(const VelocityGrid& grid, const Field& f) {
  if (f.velocity() != grid.size()) throw std::invalid_argument("moments: grid mismatch");
  Moments m;
  for (std::size_t x = 0; x < f.spatial(); ++x) accumulate_row(grid, f.row(x), grid.cell_weight(), m);
  return m;
}

double angular_momentum(const VelocityGrid& grid, const Field& f, const SpatialNodes& space,
                        const std::optional<Axis>& axis) {
  if (!axis) throw NoAxisError();
  if (f.spatial() != space.positions.size()) {
    throw std::invalid_argument("angular_momentum: spatial nodes do not match field rows");
  }
  double total = 0.0;
  for (std::size_t x = 0; x < f.spatial(); ++x) {
    const Vec3 lever = (space.positions[x] - axis->origin).cross(axis->direction);
    const auto row = f.row(x);
    double s = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) s += row[i] * lever.dot(grid.node(i));
    total += s;
  }
  return total * grid.cell_weight() * space.cell_volume;
}

Moments moments(const VelocityGrid& grid, const Field& f, const SpatialNodes& space,
                const std::optional<Axis>& axis) {
  if (f.velocity() != grid.size()) throw std::invalid_argument("moments: grid mismatch");
  if (f.spatial() != space.positions.size()) {
    throw std::invalid_argument("moments: spatial nodes do not match field rows");
  }
  Moments m;
  for (std::size_t x = 0; x < f.spatial(); ++x) {
    accumulate_row(grid, f.row(x), grid.cell_weight() * space.cell_volume, m);
  }
  if (axis) m.angular_momentum = angular_momentum(grid, f, space, axis);
  return m;
}

double maxwellian_tail_mass(const VelocityGrid& grid) {
  const double inside = std::erf(grid.v_max() / std::numbers::sqrt2);
  return 1.0 - inside * inside * inside;
}

}  // namespace hsbe
