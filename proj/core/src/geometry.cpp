#include "hsbe/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "hsbe/errors.hpp"

namespace hsbe {

Ball::Ball(double radius, Vec3 center) : radius_(radius), center_(std::move(center)) {
  if (!(radius > 0.0)) throw std::invalid_argument("ball: radius must be positive");
}
double Ball::value(const Vec3& x) const { return (x - center_).squaredNorm() - radius_ * radius_; }
Vec3 Ball::gradient(const Vec3& x) const { return 2.0 * (x - center_); }
Mat3 Ball::hessian(const Vec3&) const { return 2.0 * Mat3::Identity(); }
Box Ball::bounds() const {
  return {center_ - Vec3::Constant(radius_), center_ + Vec3::Constant(radius_)};
}

Ellipsoid::Ellipsoid(Vec3 semi_axes) : semi_axes_(std::move(semi_axes)) {
  if (!(semi_axes_.minCoeff() > 0.0)) {
    throw std::invalid_argument("ellipsoid: semi-axes must be positive");
  }
  inv2_ = semi_axes_.cwiseProduct(semi_axes_).cwiseInverse();
}
double Ellipsoid::value(const Vec3& x) const { return x.cwiseProduct(x).dot(inv2_) - 1.0; }
Vec3 Ellipsoid::gradient(const Vec3& x) const { return 2.0 * x.cwiseProduct(inv2_); }
Mat3 Ellipsoid::hessian(const Vec3&) const { return (2.0 * inv2_).asDiagonal(); }
Box Ellipsoid::bounds() const { return {-semi_axes_, semi_axes_}; }

Superquadric::Superquadric(double exponent) : p_(exponent) {
  if (!(exponent >= 2.0)) throw std::invalid_argument("superquadric: exponent must be >= 2");
}
double Superquadric::value(const Vec3& x) const {
  double s = -1.0;
  for (int i = 0; i < 3; ++i) s += std::pow(std::abs(x[i]), p_);
  return s;
}
Vec3 Superquadric::gradient(const Vec3& x) const {
  Vec3 g;
  for (int i = 0; i < 3; ++i) g[i] = p_ * std::copysign(std::pow(std::abs(x[i]), p_ - 1.0), x[i]);
  return g;
}
Mat3 Superquadric::hessian(const Vec3& x) const {
  Mat3 h = Mat3::Zero();
  for (int i = 0; i < 3; ++i) h(i, i) = p_ * (p_ - 1.0) * std::pow(std::abs(x[i]), p_ - 2.0);
  return h;
}
Box Superquadric::bounds() const { return {Vec3::Constant(-1.0), Vec3::Constant(1.0)}; }

Domain make_domain(std::shared_ptr<const LevelSet> xi, std::optional<Axis> axis, int samples) {
  if (!xi) throw std::invalid_argument("make_domain: missing level set");
  Domain d;
  d.xi = std::move(xi);
  d.bbox = d.xi->bounds();
  if (!(d.value(d.bbox.center()) < 0.0)) {
    throw GeometryError("make_domain: bounding-box center is not interior");
  }
  for (const auto& x : boundary_samples(d, std::max(16, samples / 16))) {
    if (d.gradient(x).norm() < 1e-12) throw GeometryError("make_domain: degenerate boundary normal");
  }
  d.c_xi = certify_convexity(d, samples);
  if (axis) {
    const auto cert = certify_axis(d, axis->origin, axis->direction, std::max(64, samples / 16));
    if (!cert.holds) {
      throw GeometryError("make_domain: axis certification failed, residual " +
                          std::to_string(cert.residual));
    }
    axis->direction.normalize();
    d.axis = axis;
  }
  return d;
}

Vec3 normal(const Domain& domain, const Vec3& x) {
  const double scale = std::max(1.0, domain.bbox.diameter());
  if (std::abs(domain.value(x)) > 1e-6 * scale) {
    throw GeometryError("normal: point is not on the boundary");
  }
  const Vec3 g = domain.gradient(x);
  const double len = g.norm();
  if (len < 1e-12) throw GeometryError("normal: degenerate boundary gradient");
  return g / len;
}

double certify_convexity(const Domain& domain, int samples) {
  if (samples < 1) throw std::invalid_argument("certify_convexity: samples must be >= 1");
  // Odd lattice per axis so the bbox center is always sampled.
  int k = std::max(3, static_cast<int>(std::ceil(std::cbrt(static_cast<double>(samples)))));
  if (k % 2 == 0) ++k;
  const Box& b = domain.bbox;
  double best = std::numeric_limits<double>::infinity();
  auto visit = [&](const Vec3& x) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(domain.xi->hessian(x), Eigen::EigenvaluesOnly);
    best = std::min(best, es.eigenvalues()[0]);
  };
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      for (int l = 0; l < k; ++l) {
        const Vec3 t(i, j, l);
        const Vec3 x = b.lower + (b.upper - b.lower).cwiseProduct(t / (k - 1));
        if (domain.value(x) <= 0.0) visit(x);
      }
    }
  }
  for (const auto& x : boundary_samples(domain, std::max(8, samples / 8))) visit(x);
  return best;
}

std::vector<Vec3> boundary_samples(const Domain& domain, int samples) {
  std::vector<Vec3> out;
  out.reserve(samples);
  const Vec3 c = domain.bbox.center();
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < samples; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / samples;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    const Vec3 d(r * std::cos(phi), r * std::sin(phi), z);
    out.push_back(backward_exit(domain, c, -d).x_b);
  }
  return out;
}

AxisCertificate certify_axis(const Domain& domain, const Vec3& x0, const Vec3& omega_axis,
                             int samples) {
  if (!(omega_axis.norm() > 0.0)) throw std::invalid_argument("certify_axis: zero axis");
  const Vec3 w = omega_axis.normalized();
  AxisCertificate cert;
  for (const auto& x : boundary_samples(domain, samples)) {
    cert.residual = std::max(cert.residual, std::abs((x - x0).cross(w).dot(normal(domain, x))));
  }
  cert.holds = cert.residual <= kAxisTolerance;
  return cert;
}

Exit backward_exit(const Domain& domain, const Vec3& x, const Vec3& v) {
  const double speed = v.norm();
  if (!(speed > 0.0)) throw std::invalid_argument("backward_exit: zero velocity");
  auto xi_at = [&](double s) { return domain.value(x - s * v); };
  const double diameter = domain.bbox.diameter();
  const double horizon = 4.0 * diameter / speed;
  double step = diameter / 256.0 / speed;

  // From a boundary start xi dips below zero first; shrink the step until it does.
  if (!(domain.value(x) < -kBoundaryTolerance)) {
    while (step > 1e-18 * horizon && !(xi_at(step) < 0.0)) step *= 0.5;
    if (!(xi_at(step) < 0.0)) throw GeometryError("backward_exit: ray leaves the domain at once");
  }

  double lo = domain.value(x) < -kBoundaryTolerance ? 0.0 : step;
  double hi = lo + step;
  while (xi_at(hi) < 0.0) {
    lo = hi;
    hi += step;
    if (hi > horizon) throw GeometryError("backward_exit: no exit within the bounding box");
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (xi_at(mid) < 0.0 ? lo : hi) = mid;
  }
  double s = 0.5 * (lo + hi);
  for (int it = 0; it < 3; ++it) {
    const double slope = -domain.gradient(x - s * v).dot(v);
    if (slope == 0.0) break;
    const double next = s - xi_at(s) / slope;
    if (next >= lo - step && next <= hi + step) s = next;
  }
  if (std::abs(xi_at(s)) > kBoundaryTolerance) {
    throw GeometryError("backward_exit: root polish failed, xi = " + std::to_string(xi_at(s)));
  }
  return {s, x - s * v};
}

Vec3 specular_reflect(const Vec3& n, const Vec3& v) { return v - 2.0 * v.dot(n) * n; }

int SpecularCycle::segment(double s) const {
  const int last = static_cast<int>(entries.size()) - 2;
  for (int k = 0; k < last; ++k) {
    if (s >= entries[k + 1].t) return k;
  }
  return std::max(last, 0);
}

Vec3 SpecularCycle::position(double s) const {
  const auto& e = entries[segment(s)];
  return e.x - (e.t - s) * e.v;
}

Vec3 SpecularCycle::velocity(double s) const { return entries[segment(s)].v; }

void SpecularCycle::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string());
  os << "k,t,x1,x2,x3,v1,v2,v3\n" << std::setprecision(17);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    os << k << ',' << e.t << ',' << e.x[0] << ',' << e.x[1] << ',' << e.x[2] << ',' << e.v[0]
       << ',' << e.v[1] << ',' << e.v[2] << '\n';
  }
}

SpecularCycle build_cycle(const Domain& domain, double t, const Vec3& x, const Vec3& v,
                          double eps_graze, int bounce_cap) {
  SpecularCycle cycle;
  cycle.entries.push_back({t, x, v});
  if (t <= 0.0) {
    // Degenerate horizon: the single entry doubles as the terminal one.
    cycle.entries.push_back({t, x, v});
    return cycle;
  }
  const double speed = v.norm();
  for (int k = 0;; ++k) {
    if (k > bounce_cap) throw GeometryError("build_cycle: bounce cap exceeded");
    const CycleEntry cur = cycle.entries.back();
    const Exit exit = backward_exit(domain, cur.x, cur.v);
    const double t_next = cur.t - exit.t_b;
    const Vec3 n = normal(domain, exit.x_b);
    const Vec3 v_next = specular_reflect(n, cur.v);
    cycle.entries.push_back({t_next, exit.x_b, v_next});
    if (t_next <= 0.0) {
      cycle.m = k;
      return cycle;
    }
    if (std::abs(n.dot(cur.v)) < eps_graze * speed) {
      cycle.grazing = true;
      cycle.m = k;
      return cycle;
    }
  }
}

}  // namespace hsbe
