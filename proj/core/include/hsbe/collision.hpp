#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hsbe/velocity_grid.hpp"

namespace hsbe {

/// Product rule on the unit sphere: Gauss-Legendre in cos(theta), uniform in phi.
///
/// The cos(theta) nodes are Gauss-Legendre on each hemisphere separately
/// (n_theta / 2 nodes on (0, 1), mirrored), so |cos(theta)| is integrated exactly.
struct AngularQuadrature {
  int n_theta = 8;
  int n_phi = 16;
  std::vector<Vec3> directions;   ///< full sphere, polar axis e_z
  std::vector<double> weights;    ///< sums to 4 pi
  std::vector<double> cos_theta;  ///< upper-hemisphere nodes in (0, 1)
  std::vector<double> cos_weights;  ///< Gauss-Legendre weights on [0, 1], sum 1

  static AngularQuadrature product(int n_theta = 8, int n_phi = 16);
};

struct CollisionParams {
  AngularQuadrature angular = AngularQuadrature::product();
  double cutoff_n = 3.0;  ///< high/low velocity threshold N
  bool conservative_fix = true;
  /// Interpolate the field with its mean trilinear bias removed. Off gives plain
  /// trilinear interpolation, which keeps Q_gain >= 0 for F >= 0.
  bool prefilter = true;
};

/// Hard-sphere collision rule: v' = v + ((u - v).w) w, u' = u - ((u - v).w) w.
/// Returns (u', v').
std::pair<Vec3, Vec3> post_collision(const Vec3& u, const Vec3& v, const Vec3& omega);

/// Discrete hard-sphere collision operator on a VelocityGrid.
///
/// The u-integral is the cell-centered lattice sum; post-collision values use
/// trilinear interpolation with zero extension outside the box, applied to the
/// prefiltered field f - (h^2 / 12) lap_h f when params.prefilter is set. For each lattice
/// relative velocity g = u - v the angular rule is rotated so its polar axis is g,
/// which makes sum_w |g.w| = 2 pi |g| exact and removes angular error from the
/// collision frequency. The kink of |u - v| at u = v is corrected by a
/// Gaussian-subtraction term kappa F1(v) F2(v) added to both gain and loss, so
/// it cancels in Q.
class CollisionOperator {
 public:
  CollisionOperator(const VelocityGrid& grid, CollisionParams params = {});

  const VelocityGrid& grid() const { return grid_; }
  const CollisionParams& params() const { return params_; }

  /// Q_gain(F1, F2) on every node.
  std::vector<double> gain(std::span<const double> f1, std::span<const double> f2) const;
  /// R F on every node.
  std::vector<double> frequency(std::span<const double> f) const;
  /// R F at an arbitrary velocity.
  double frequency_at(std::span<const double> f, const Vec3& v) const;
  /// Q_loss(F1, F2) = F2 R F1.
  std::vector<double> loss(std::span<const double> f1, std::span<const double> f2) const;
  /// Q = gain - loss; conservative correction applied when enabled in params.
  std::vector<double> collide(std::span<const double> f1, std::span<const double> f2) const;
  /// Q = gain - loss without the conservative correction.
  std::vector<double> collide_raw(std::span<const double> f1, std::span<const double> f2) const;

  /// Removes the {1, v, |v|^2} moments of q by subtracting a combination of
  /// {1, v, |v|^2} mu. Returns the sup norm of the removed part.
  double conservative_correction(std::span<double> q) const;

  /// Matrix of f -> Q(f, G) + Q_gain(G, f) (no conservative correction).
  Eigen::MatrixXd linearization(std::span<const double> g) const;

  const std::vector<double>& maxwellian() const { return mu_; }
  /// nu = R mu on the nodes.
  const std::vector<double>& nu() const { return nu_; }
  /// nu(0) = R mu at v = 0.
  double nu_at_origin() const { return nu0_; }
  /// ||Q(mu, mu)||_inf / nu(0), the quadrature noise floor of this grid.
  double certified_tolerance() const;

  /// Kink correction coefficient kappa.
  double kink_correction() const { return kappa_; }

  /// Basis {1, v1, v2, v3, |v|^2} on the nodes (N x 5).
  const Eigen::MatrixXd& invariants() const { return psi_; }
  /// Moments of q against the collision invariants.
  Eigen::Matrix<double, 5, 1> invariant_moments(std::span<const double> q) const;

 private:
  struct Stencil;
  template <class Fn>
  void for_each_stencil(Fn&& fn) const;

  std::vector<double> padded(std::span<const double> f) const;
  std::size_t padded_index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i + pad_) * dim_ + (j + pad_)) * dim_ + (k + pad_);
  }
  double kink_at(const Vec3& v) const;
  double interpolate_cubic(std::span<const double> f, const Vec3& v) const;

  VelocityGrid grid_;
  CollisionParams params_;
  int pad_ = 0;
  int dim_ = 0;
  std::vector<double> frequency_kernel_;  // cell * 2 pi |g| indexed by lattice difference
  double kappa_ = 0.0;
  std::vector<double> mu_;
  std::vector<double> nu_;
  double nu0_ = 0.0;
  Eigen::MatrixXd psi_;
  Eigen::Matrix<double, 5, 5> gram_inverse_;
  mutable double certified_tolerance_ = -1.0;
};

/// Linearized operators around the global Maxwellian:
/// nu = R mu, K h = Q(h, mu) + Q_gain(mu, h), L = nu - K.
///
/// With the conservative fix enabled L h is projected so that its
/// {1, v, |v|^2} moments vanish exactly, and K := nu - L.
class LinearizedCollision {
 public:
  explicit LinearizedCollision(const CollisionOperator& op);

  const CollisionOperator& op() const { return *op_; }
  const Eigen::MatrixXd& k_matrix() const { return k_; }
  const std::vector<double>& nu() const { return op_->nu(); }
  const std::vector<double>& sqrt_mu() const { return sqrt_mu_; }

  std::vector<double> k(std::span<const double> h) const;
  std::vector<double> l(std::span<const double> h) const;
  /// Applies K to every row of a field.
  Field k_rows(const Field& h) const;

  /// (chi_N K h, chi_N^c K h); the two parts sum to K h exactly.
  std::pair<std::vector<double>, std::vector<double>> split_k(std::span<const double> h,
                                                              double cutoff_n) const;

  /// L~ h2 = nu h2 - mu^{-1/2} K(sqrt(mu) h2).
  std::vector<double> symmetrized_l(std::span<const double> h2) const;

 private:
  const CollisionOperator* op_;
  Eigen::MatrixXd k_;
  std::vector<double> sqrt_mu_;
};

struct BilinearBoundFit {
  double c_fit = 0.0;    ///< smallest C with |w_l Q(F1,F2)| <= C ||w_l F1|| ||w_l F2|| <v>
  double eps_fit = 0.0;  ///< smallest eps completing the gain/loss bound with C = c_fit
  int trials = 0;
};

/// Empirical constants of the weighted bilinear bounds over random smooth field pairs.
BilinearBoundFit verify_bilinear_bound(const CollisionOperator& op, int trials, double l,
                                       std::uint64_t seed = 7);

}  // namespace hsbe
