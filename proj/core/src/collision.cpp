#include "hsbe/collision.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

namespace hsbe {

namespace {

constexpr double kPi = std::numbers::pi;

// Gauss-Legendre nodes and weights on [0, 1].
void gauss_legendre_unit(int m, std::vector<double>& x, std::vector<double>& w) {
  x.resize(m);
  w.resize(m);
  for (int i = 0; i < m; ++i) {
    double t = std::cos(kPi * (i + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      const double p = std::legendre(m, t);
      const double p1 = std::legendre(m - 1, t);
      dp = m * (t * p - p1) / (t * t - 1.0);
      const double dt = p / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    const double p1 = std::legendre(m - 1, t);
    dp = m * (t * std::legendre(m, t) - p1) / (t * t - 1.0);
    x[i] = 0.5 * (t + 1.0);
    w[i] = 1.0 / ((1.0 - t * t) * dp * dp);  // 2 / ((1-t^2) P'^2) scaled by 1/2
  }
  std::vector<std::size_t> order(m);
  for (int i = 0; i < m; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> xs(m), ws(m);
  for (int i = 0; i < m; ++i) {
    xs[i] = x[order[i]];
    ws[i] = w[order[i]];
  }
  x = std::move(xs);
  w = std::move(ws);
}

// Two unit vectors completing n to an orthonormal frame.
std::pair<Vec3, Vec3> frame(const Vec3& n) {
  const Vec3 seed = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  Vec3 e1 = n.cross(seed).normalized();
  Vec3 e2 = n.cross(e1);
  return {e1, e2};
}

std::array<double, 4> cubic_weights(double t) {
  return {-t * (t - 1.0) * (t - 2.0) / 6.0, (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
          -(t + 1.0) * t * (t - 2.0) / 2.0, (t + 1.0) * t * (t - 1.0) / 6.0};
}

}  // namespace

AngularQuadrature AngularQuadrature::product(int n_theta, int n_phi) {
  if (n_theta < 2 || n_theta % 2 != 0) {
    throw std::invalid_argument("angular quadrature: n_theta must be even and >= 2");
  }
  if (n_phi < 1) throw std::invalid_argument("angular quadrature: n_phi must be >= 1");
  AngularQuadrature q;
  q.n_theta = n_theta;
  q.n_phi = n_phi;
  gauss_legendre_unit(n_theta / 2, q.cos_theta, q.cos_weights);
  const double dphi = 2.0 * kPi / n_phi;
  for (int sign : {-1, 1}) {
    for (std::size_t a = 0; a < q.cos_theta.size(); ++a) {
      const double c = sign * q.cos_theta[a];
      const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
      for (int b = 0; b < n_phi; ++b) {
        const double phi = (b + 0.5) * dphi;
        q.directions.emplace_back(s * std::cos(phi), s * std::sin(phi), c);
        q.weights.push_back(q.cos_weights[a] * dphi);
      }
    }
  }
  return q;
}

std::pair<Vec3, Vec3> post_collision(const Vec3& u, const Vec3& v, const Vec3& omega) {
  const double p = (u - v).dot(omega);
  return {u - p * omega, v + p * omega};
}

// One (lattice relative velocity, direction) pair. Offsets are in padded storage
// relative to the output node; t holds the trilinear fractions (x, y, z).
struct CollisionOperator::Stencil {
  int a, b, c;
  double kernel;
  std::ptrdiff_t off_u, off_v;
  double tu[3], tv[3];
};

CollisionOperator::CollisionOperator(const VelocityGrid& grid, CollisionParams params)
    : grid_(grid), params_(std::move(params)) {
  const int n = grid_.n();
  const double h = grid_.spacing();
  const double cell = grid_.cell_weight();
  if (!(params_.cutoff_n > 0.0)) throw std::invalid_argument("collision: cutoff_n must be > 0");

  // Post-collision points lie on the sphere with diameter [u, v], so they stay
  // within sqrt(3) n / 2 cells of the box.
  pad_ = static_cast<int>(std::ceil(std::sqrt(3.0) * n / 2.0)) + 2;
  dim_ = n + 2 * pad_;

  const int m = 2 * n - 1;
  frequency_kernel_.assign(static_cast<std::size_t>(m) * m * m, 0.0);
  for (int a = -(n - 1); a < n; ++a) {
    for (int b = -(n - 1); b < n; ++b) {
      for (int c = -(n - 1); c < n; ++c) {
        const double g = h * std::sqrt(double(a * a + b * b + c * c));
        frequency_kernel_[(static_cast<std::size_t>(a + n - 1) * m + (b + n - 1)) * m +
                          (c + n - 1)] = cell * 2.0 * kPi * g;
      }
    }
  }

  kappa_ = kink_at(grid_.node(0));

  mu_ = sample_maxwellian(grid_);
  nu_ = frequency(mu_);
  nu0_ = frequency_at(mu_, Vec3::Zero());

  const std::size_t total = grid_.size();
  psi_.resize(static_cast<Eigen::Index>(total), 5);
  for (std::size_t i = 0; i < total; ++i) {
    const Vec3& v = grid_.node(i);
    psi_.row(static_cast<Eigen::Index>(i)) << 1.0, v.x(), v.y(), v.z(), v.squaredNorm();
  }
  Eigen::Matrix<double, 5, 5> gram = Eigen::Matrix<double, 5, 5>::Zero();
  for (std::size_t i = 0; i < total; ++i) {
    const Eigen::Matrix<double, 5, 1> p = psi_.row(static_cast<Eigen::Index>(i)).transpose();
    gram += cell * mu_[i] * p * p.transpose();
  }
  gram_inverse_ = gram.inverse();
}

template <class Fn>
void CollisionOperator::for_each_stencil(Fn&& fn) const {
  const int n = grid_.n();
  const auto& q = params_.angular;
  const std::size_t half = q.cos_theta.size();
  const double dphi = 2.0 * kPi / q.n_phi;
  const double cell = grid_.cell_weight();
  const double h = grid_.spacing();
  const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(dim_) * dim_;
  const std::ptrdiff_t sy = dim_;

  auto locate = [&](const Vec3& d, std::ptrdiff_t& off, double* t) {
    const double fx = std::floor(d.x()), fy = std::floor(d.y()), fz = std::floor(d.z());
    t[0] = d.x() - fx;
    t[1] = d.y() - fy;
    t[2] = d.z() - fz;
    off = static_cast<std::ptrdiff_t>(fx) * sx + static_cast<std::ptrdiff_t>(fy) * sy +
          static_cast<std::ptrdiff_t>(fz);
  };

  std::vector<Stencil> group;
  group.reserve(half * q.n_phi);
  Stencil st{};
  for (int a = -(n - 1); a < n; ++a) {
    for (int b = -(n - 1); b < n; ++b) {
      for (int c = -(n - 1); c < n; ++c) {
        if (a == 0 && b == 0 && c == 0) continue;
        const Vec3 g(a, b, c);  // lattice units
        const double gnorm = g.norm();
        const Vec3 axis = g / gnorm;
        const auto [e1, e2] = frame(axis);
        st.a = a;
        st.b = b;
        st.c = c;
        group.clear();
        for (std::size_t i = 0; i < half; ++i) {
          const double ct = q.cos_theta[i];
          const double stheta = std::sqrt(std::max(0.0, 1.0 - ct * ct));
          // omega and -omega give the same pair; the upper hemisphere carries both.
          st.kernel = 2.0 * q.cos_weights[i] * dphi * cell * h * gnorm * ct;
          for (int k = 0; k < q.n_phi; ++k) {
            const double phi = (k + 0.5) * dphi;
            const Vec3 omega = ct * axis + stheta * (std::cos(phi) * e1 + std::sin(phi) * e2);
            const Vec3 dv = (gnorm * ct) * omega;
            const Vec3 du = g - dv;
            locate(du, st.off_u, st.tu);
            locate(dv, st.off_v, st.tv);
            group.push_back(st);
          }
        }
        fn(std::span<const Stencil>(group));
      }
    }
  }
}

std::vector<double> CollisionOperator::padded(std::span<const double> f) const {
  if (f.size() != grid_.size()) throw std::invalid_argument("collision: field/grid mismatch");
  const int n = grid_.n();
  std::vector<double> p(static_cast<std::size_t>(dim_) * dim_ * dim_, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      std::copy_n(f.data() + grid_.index(i, j, 0), n, p.data() + padded_index(i, j, 0));
    }
  }
  if (params_.prefilter) {
    // Trilinear interpolation over a uniformly distributed offset overestimates by
    // (h^2 / 12) times the Laplacian on average; interpolate f - (h^2 / 12) lap_h f.
    std::vector<double> q = p;
    const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(dim_) * dim_;
    const std::ptrdiff_t sy = dim_;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
          const auto x = static_cast<std::ptrdiff_t>(padded_index(i, j, k));
          const double lap =
              p[x + sx] + p[x - sx] + p[x + sy] + p[x - sy] + p[x + 1] + p[x - 1] - 6.0 * p[x];
          q[x] = p[x] - lap / 12.0;
        }
      }
    }
    return q;
  }
  return p;
}

namespace {

inline double trilinear(const double* p, const double* t, std::ptrdiff_t sx, std::ptrdiff_t sy) {
  const double c00 = p[0] + t[2] * (p[1] - p[0]);
  const double c01 = p[sy] + t[2] * (p[sy + 1] - p[sy]);
  const double c10 = p[sx] + t[2] * (p[sx + 1] - p[sx]);
  const double c11 = p[sx + sy] + t[2] * (p[sx + sy + 1] - p[sx + sy]);
  const double c0 = c00 + t[1] * (c01 - c00);
  const double c1 = c10 + t[1] * (c11 - c10);
  return c0 + t[0] * (c1 - c0);
}

struct Range {
  int lo, hi;
};

inline Range overlap(int n, int a) { return {std::max(0, -a), std::min(n, n - a)}; }

}  // namespace

std::vector<double> CollisionOperator::gain(std::span<const double> f1,
                                            std::span<const double> f2) const {
  const auto p1 = padded(f1);
  const auto p2 = padded(f2);
  const int n = grid_.n();
  const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(dim_) * dim_;
  const std::ptrdiff_t sy = dim_;
  std::vector<double> out(grid_.size(), 0.0);

  for_each_stencil([&](std::span<const Stencil> group) {
    for (const Stencil& st : group) {
    const Range ri = overlap(n, st.a), rj = overlap(n, st.b), rk = overlap(n, st.c);
    const int len = rk.hi - rk.lo;
    const double tu0 = st.tu[0], tu1 = st.tu[1], tu2 = st.tu[2];
    const double tv0 = st.tv[0], tv1 = st.tv[1], tv2 = st.tv[2];
    const double kern = st.kernel;
    for (int i = ri.lo; i < ri.hi; ++i) {
      for (int j = rj.lo; j < rj.hi; ++j) {
        const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(padded_index(i, j, rk.lo));
        const double* u = p1.data() + base + st.off_u;
        const double* v = p2.data() + base + st.off_v;
        double* o = out.data() + grid_.index(i, j, rk.lo);
#pragma omp simd
        for (int k = 0; k < len; ++k) {
          const double* pu = u + k;
          const double* pv = v + k;
          const double a00 = pu[0] + tu2 * (pu[1] - pu[0]);
          const double a01 = pu[sy] + tu2 * (pu[sy + 1] - pu[sy]);
          const double a10 = pu[sx] + tu2 * (pu[sx + 1] - pu[sx]);
          const double a11 = pu[sx + sy] + tu2 * (pu[sx + sy + 1] - pu[sx + sy]);
          const double a0 = a00 + tu1 * (a01 - a00);
          const double a1 = a10 + tu1 * (a11 - a10);
          const double fu = a0 + tu0 * (a1 - a0);
          const double b00 = pv[0] + tv2 * (pv[1] - pv[0]);
          const double b01 = pv[sy] + tv2 * (pv[sy + 1] - pv[sy]);
          const double b10 = pv[sx] + tv2 * (pv[sx + 1] - pv[sx]);
          const double b11 = pv[sx + sy] + tv2 * (pv[sx + sy + 1] - pv[sx + sy]);
          const double b0 = b00 + tv1 * (b01 - b00);
          const double b1 = b10 + tv1 * (b11 - b10);
          const double fv = b0 + tv0 * (b1 - b0);
          o[k] += kern * fu * fv;
        }
      }
    }
    }
  });

  for (std::size_t i = 0; i < out.size(); ++i) out[i] += kappa_ * f1[i] * f2[i];
  return out;
}

std::vector<double> CollisionOperator::frequency(std::span<const double> f) const {
  if (f.size() != grid_.size()) throw std::invalid_argument("collision: field/grid mismatch");
  const int n = grid_.n();
  const int m = 2 * n - 1;
  std::vector<double> out(grid_.size(), 0.0);
  for (std::size_t idx = 0; idx < grid_.size(); ++idx) {
    const auto [vi, vj, vk] = grid_.coords(idx);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double* kern = frequency_kernel_.data() +
                             (static_cast<std::size_t>(i - vi + n - 1) * m + (j - vj + n - 1)) * m +
                             (n - 1 - vk);
        const double* row = f.data() + grid_.index(i, j, 0);
        for (int k = 0; k < n; ++k) s += kern[k] * row[k];
      }
    }
    out[idx] = s + kappa_ * f[idx];
  }
  return out;
}

double CollisionOperator::interpolate_cubic(std::span<const double> f, const Vec3& v) const {
  const int n = grid_.n();
  const double h = grid_.spacing();
  int base[3];
  std::array<double, 4> w[3];
  for (int d = 0; d < 3; ++d) {
    const double x = (v[d] + grid_.v_max()) / h - 0.5;
    const double fl = std::floor(x);
    base[d] = static_cast<int>(fl) - 1;
    w[d] = cubic_weights(x - fl);
  }
  double s = 0.0;
  for (int a = 0; a < 4; ++a) {
    const int i = base[0] + a;
    if (i < 0 || i >= n) continue;
    for (int b = 0; b < 4; ++b) {
      const int j = base[1] + b;
      if (j < 0 || j >= n) continue;
      for (int c = 0; c < 4; ++c) {
        const int k = base[2] + c;
        if (k < 0 || k >= n) continue;
        s += w[0][a] * w[1][b] * w[2][c] * f[grid_.index(i, j, k)];
      }
    }
  }
  return s;
}

double CollisionOperator::kink_at(const Vec3& v) const {
  // Exact integral 16 pi^2 s^4 of 2 pi |g| exp(-|g|^2 / 2 s^2), s = h, minus its
  // sum over the lattice shifted to v.
  const double h = grid_.spacing();
  const double s = h;
  Vec3 shift;
  for (int d = 0; d < 3; ++d) {
    const double x = (v[d] + grid_.v_max()) / h - 0.5;
    shift[d] = h * (std::round(x) - x);
  }
  const int reach = 9;
  double lattice = 0.0;
  for (int a = -reach; a <= reach; ++a) {
    for (int b = -reach; b <= reach; ++b) {
      for (int c = -reach; c <= reach; ++c) {
        const double g2 = (shift + h * Vec3(a, b, c)).squaredNorm();
        lattice += 2.0 * kPi * std::sqrt(g2) * std::exp(-0.5 * g2 / (s * s));
      }
    }
  }
  return 16.0 * kPi * kPi * s * s * s * s - grid_.cell_weight() * lattice;
}

double CollisionOperator::frequency_at(std::span<const double> f, const Vec3& v) const {
  if (f.size() != grid_.size()) throw std::invalid_argument("collision: field/grid mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < grid_.size(); ++i) s += (grid_.node(i) - v).norm() * f[i];
  return grid_.cell_weight() * 2.0 * kPi * s + kink_at(v) * interpolate_cubic(f, v);
}

std::vector<double> CollisionOperator::loss(std::span<const double> f1,
                                            std::span<const double> f2) const {
  auto r = frequency(f1);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] *= f2[i];
  return r;
}

std::vector<double> CollisionOperator::collide_raw(std::span<const double> f1,
                                                   std::span<const double> f2) const {
  auto q = gain(f1, f2);
  const auto l = loss(f1, f2);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] -= l[i];
  return q;
}

std::vector<double> CollisionOperator::collide(std::span<const double> f1,
                                               std::span<const double> f2) const {
  auto q = collide_raw(f1, f2);
  if (params_.conservative_fix) conservative_correction(q);
  return q;
}

Eigen::Matrix<double, 5, 1> CollisionOperator::invariant_moments(std::span<const double> q) const {
  if (q.size() != grid_.size()) throw std::invalid_argument("collision: field/grid mismatch");
  const Eigen::Map<const Eigen::VectorXd> qv(q.data(), static_cast<Eigen::Index>(q.size()));
  return grid_.cell_weight() * (psi_.transpose() * qv);
}

double CollisionOperator::conservative_correction(std::span<double> q) const {
  const Eigen::Matrix<double, 5, 1> c = gram_inverse_ * invariant_moments(q);
  double removed = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double d = mu_[i] * psi_.row(static_cast<Eigen::Index>(i)).dot(c);
    q[i] -= d;
    removed = std::max(removed, std::abs(d));
  }
  return removed;
}

double CollisionOperator::certified_tolerance() const {
  if (certified_tolerance_ < 0.0) {
    const auto q = collide_raw(mu_, mu_);
    double m = 0.0;
    for (double x : q) m = std::max(m, std::abs(x));
    certified_tolerance_ = m / nu0_;
  }
  return certified_tolerance_;
}

Eigen::MatrixXd CollisionOperator::linearization(std::span<const double> g) const {
  const auto pg = padded(g);
  const int n = grid_.n();
  const auto total = static_cast<Eigen::Index>(grid_.size());
  const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(dim_) * dim_;
  const std::ptrdiff_t sy = dim_;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(total, total);

  // padded storage position -> grid node, -1 in the padding
  std::vector<std::ptrdiff_t> node_of(pg.size(), -1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        node_of[padded_index(i, j, k)] = static_cast<std::ptrdiff_t>(grid_.index(i, j, k));
      }
    }
  }
  // Rows are accumulated in the columns of `out` and transposed at the end.
  const std::ptrdiff_t corner[8] = {0, 1, sy, sy + 1, sx, sx + 1, sx + sy, sx + sy + 1};
  auto corner_weights = [](const double* t, double* w) {
    for (int q = 0; q < 8; ++q) {
      const double wx = (q & 4) ? t[0] : 1.0 - t[0];
      const double wy = (q & 2) ? t[1] : 1.0 - t[1];
      const double wz = (q & 1) ? t[2] : 1.0 - t[2];
      w[q] = wx * wy * wz;
    }
  };

  struct Weights {
    double wu[8], wv[8];
  };
  std::vector<Weights> weights;
  for_each_stencil([&](std::span<const Stencil> group) {
    const Stencil& g0 = group.front();
    const Range ri = overlap(n, g0.a), rj = overlap(n, g0.b), rk = overlap(n, g0.c);
    weights.resize(group.size());
    for (std::size_t s = 0; s < group.size(); ++s) {
      corner_weights(group[s].tu, weights[s].wu);
      corner_weights(group[s].tv, weights[s].wv);
    }
    for (int i = ri.lo; i < ri.hi; ++i) {
      for (int j = rj.lo; j < rj.hi; ++j) {
        for (int k = rk.lo; k < rk.hi; ++k) {
          const auto base = static_cast<std::ptrdiff_t>(padded_index(i, j, k));
          double* row = out.data() + static_cast<std::ptrdiff_t>(grid_.index(i, j, k)) * total;
          for (std::size_t s = 0; s < group.size(); ++s) {
            const Stencil& st = group[s];
            const double gu = trilinear(pg.data() + base + st.off_u, st.tu, sx, sy);
            const double gv = trilinear(pg.data() + base + st.off_v, st.tv, sx, sy);
            // Q_gain(f, G): f at u', G at v'; Q_gain(G, f): G at u', f at v'.
            const double au = st.kernel * gv, av = st.kernel * gu;
            for (int q = 0; q < 8; ++q) {
              const auto cu = node_of[base + st.off_u + corner[q]];
              if (cu >= 0) row[cu] += au * weights[s].wu[q];
              const auto cv = node_of[base + st.off_v + corner[q]];
              if (cv >= 0) row[cv] += av * weights[s].wv[q];
            }
          }
        }
      }
    }
  });
  out.transposeInPlace();

  if (params_.prefilter) {
    // Columns so far act on the prefiltered field; compose with f -> f - lap_h f / 12.
    Eigen::MatrixXd raw = std::move(out);
    out = 1.5 * raw;
    for (Eigen::Index c = 0; c < total; ++c) {
      const auto [i, j, k] = grid_.coords(static_cast<std::size_t>(c));
      const int nb[6][3] = {{i - 1, j, k}, {i + 1, j, k}, {i, j - 1, k},
                            {i, j + 1, k}, {i, j, k - 1}, {i, j, k + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[0] >= n || q[1] < 0 || q[1] >= n || q[2] < 0 || q[2] >= n) continue;
        out.col(c) -= raw.col(static_cast<Eigen::Index>(grid_.index(q[0], q[1], q[2]))) / 12.0;
      }
    }
  }

  // Kink terms: 2 kappa G from the two gains, -kappa G from the loss.
  const int m = 2 * n - 1;
  for (Eigen::Index r = 0; r < total; ++r) {
    const auto [vi, vj, vk] = grid_.coords(static_cast<std::size_t>(r));
    const double gv = g[static_cast<std::size_t>(r)];
    out(r, r) += kappa_ * gv;
    for (Eigen::Index c = 0; c < total; ++c) {
      const auto [ui, uj, uk] = grid_.coords(static_cast<std::size_t>(c));
      out(r, c) -= gv * frequency_kernel_[(static_cast<std::size_t>(ui - vi + n - 1) * m +
                                           (uj - vj + n - 1)) *
                                              m +
                                          (uk - vk + n - 1)];
    }
  }
  return out;
}

LinearizedCollision::LinearizedCollision(const CollisionOperator& op) : op_(&op) {
  const auto& mu = op.maxwellian();
  const auto& nu = op.nu();
  const auto total = static_cast<Eigen::Index>(mu.size());
  k_ = op.linearization(mu);
  if (op.params().conservative_fix) {
    // K := M + Pi (nu - M), Pi the mu-weighted projection onto the invariants.
    Eigen::MatrixXd lraw = -k_;
    lraw.diagonal() += Eigen::Map<const Eigen::VectorXd>(nu.data(), total);
    const Eigen::MatrixXd& psi = op.invariants();
    Eigen::Matrix<double, 5, 5> gram = Eigen::Matrix<double, 5, 5>::Zero();
    for (Eigen::Index i = 0; i < total; ++i) {
      gram += op.grid().cell_weight() * mu[static_cast<std::size_t>(i)] *
              psi.row(i).transpose() * psi.row(i);
    }
    const Eigen::MatrixXd coeff =
        gram.inverse() * (op.grid().cell_weight() * (psi.transpose() * lraw));
    Eigen::MatrixXd mu_psi = psi;
    for (Eigen::Index i = 0; i < total; ++i) mu_psi.row(i) *= mu[static_cast<std::size_t>(i)];
    k_.noalias() += mu_psi * coeff;
  }
  sqrt_mu_.resize(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) sqrt_mu_[i] = std::sqrt(mu[i]);
}

std::vector<double> LinearizedCollision::k(std::span<const double> h) const {
  if (h.size() != sqrt_mu_.size()) throw std::invalid_argument("linearized: field/grid mismatch");
  std::vector<double> out(h.size());
  Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())).noalias() =
      k_ * Eigen::Map<const Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
  return out;
}

std::vector<double> LinearizedCollision::l(std::span<const double> h) const {
  auto out = k(h);
  const auto& nu = op_->nu();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = nu[i] * h[i] - out[i];
  return out;
}

Field LinearizedCollision::k_rows(const Field& h) const {
  const auto nv = static_cast<Eigen::Index>(h.velocity());
  const auto nx = static_cast<Eigen::Index>(h.spatial());
  if (h.velocity() != sqrt_mu_.size()) throw std::invalid_argument("linearized: field/grid mismatch");
  Field out(h.spatial(), h.velocity());
  Eigen::Map<Eigen::MatrixXd>(out.data().data(), nv, nx).noalias() =
      k_ * Eigen::Map<const Eigen::MatrixXd>(h.data().data(), nv, nx);
  return out;
}

std::pair<std::vector<double>, std::vector<double>> LinearizedCollision::split_k(
    std::span<const double> h, double cutoff_n) const {
  auto low = k(h);
  std::vector<double> high(low.size(), 0.0);
  const auto& grid = op_->grid();
  for (std::size_t i = 0; i < low.size(); ++i) {
    if (!(grid.speed(i) < cutoff_n)) std::swap(low[i], high[i]);
  }
  return {std::move(low), std::move(high)};
}

std::vector<double> LinearizedCollision::symmetrized_l(std::span<const double> h2) const {
  std::vector<double> a(h2.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = sqrt_mu_[i] * h2[i];
  auto ka = k(a);
  const auto& nu = op_->nu();
  for (std::size_t i = 0; i < ka.size(); ++i) ka[i] = nu[i] * h2[i] - ka[i] / sqrt_mu_[i];
  return ka;
}

namespace {

// Sum of three random Gaussian bumps with signed amplitudes.
std::vector<double> random_smooth_field(const VelocityGrid& grid, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> amp(-1.0, 1.0), centre(-2.0, 2.0), width(0.7, 1.5);
  std::vector<double> f(grid.size(), 0.0);
  for (int b = 0; b < 3; ++b) {
    const double a = amp(rng);
    const Vec3 c(centre(rng), centre(rng), centre(rng));
    const double s = width(rng);
    for (std::size_t i = 0; i < f.size(); ++i) {
      f[i] += a * std::exp(-0.5 * (grid.node(i) - c).squaredNorm() / (s * s));
    }
  }
  return f;
}

}  // namespace

BilinearBoundFit verify_bilinear_bound(const CollisionOperator& op, int trials, double l,
                                       std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("verify_bilinear_bound: trials must be >= 1");
  const auto& grid = op.grid();
  const auto wl = weight_table(grid, l);
  std::mt19937_64 rng(seed);

  struct Sample {
    double q, split, n1, n2, n2_next, bracket;
  };
  std::vector<Sample> samples;
  BilinearBoundFit fit;
  fit.trials = trials;
  for (int t = 0; t < trials; ++t) {
    const auto f1 = random_smooth_field(grid, rng);
    const auto f2 = random_smooth_field(grid, rng);
    const double n1 = weighted_sup_norm(grid, f1, l);
    const double n2 = weighted_sup_norm(grid, f2, l);
    const double n2_next = weighted_sup_norm(grid, f2, l + 1.0);
    if (n1 == 0.0 || n2 == 0.0) continue;
    const auto g12 = op.gain(f1, f2);
    const auto g21 = op.gain(f2, f1);
    const auto l12 = op.loss(f1, f2);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double bracket = weight(grid.node(i), 1.0);
      const double q = std::abs(wl[i] * (g12[i] - l12[i]));
      const double split =
          std::abs(wl[i] * g12[i]) + std::abs(wl[i] * l12[i]) + std::abs(wl[i] * g21[i]);
      fit.c_fit = std::max(fit.c_fit, q / (n1 * n2 * bracket));
      samples.push_back({q, split, n1, n2, n2_next, bracket});
    }
  }
  for (const auto& s : samples) {
    const double excess = s.split / s.n1 - fit.c_fit * s.n2_next;
    fit.eps_fit = std::max(fit.eps_fit, excess / (s.n2 * s.bracket));
  }
  return fit;
}

}  // namespace hsbe
