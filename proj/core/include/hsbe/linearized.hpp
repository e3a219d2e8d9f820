#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hsbe/collision.hpp"
#include "hsbe/transport.hpp"

namespace hsbe {

/// Orthonormal fields spanning {1, ((x - x0) x w) . v, |v|^2} sqrt(mu) in the
/// cell-weighted inner product over the phase grid; two fields when there is no axis.
class ConservationBasis {
 public:
  ConservationBasis(const PhaseGrid& grid, const std::optional<Axis>& axis);

  std::size_t size() const { return fields_.size(); }
  const Field& operator[](std::size_t i) const { return fields_[i]; }
  bool has_axis() const { return has_axis_; }

  double inner(const Field& a, const Field& b) const;
  /// Coefficients (f, e_i).
  std::vector<double> coefficients(const Field& f) const;

 private:
  const PhaseGrid* grid_;
  std::vector<Field> fields_;
  bool has_axis_ = false;
};

/// P f = sum_i (f, e_i) e_i.
Field project_P(const Field& f, const ConservationBasis& basis);

struct ConservationResiduals {
  double mass = 0.0;    ///< integral of h0 over the phase grid, per unit spatial volume
  double energy = 0.0;  ///< same against |v|^2
  std::optional<double> angular;  ///< same against ((x - x0) x w) . v
  bool passes = false;  ///< all residuals <= 1e-8
  Field corrected;      ///< h0 - sqrt(mu) P(mu^{-1/2} h0), filled when correction is requested
};

ConservationResiduals check_conservation_constraints(const PhaseGrid& grid, const Field& h0,
                                                     const ConservationBasis& basis,
                                                     const std::optional<Axis>& axis,
                                                     bool correct = false);

struct SplitState {
  Field h1;
  Field h2;
  double t = 0.0;
};

struct LinearizedOptions {
  double cutoff_n = -1.0;  ///< high/low velocity threshold; negative means v_max / 2
  int sweeps = 1;          ///< frozen-coefficient sweeps for the h1 source
  bool nonlinear = true;   ///< include Q(h, h)
  /// Match the local {1, v, |v|^2} moments of each update to those of the transported field.
  bool local_moment_fix = true;
  /// Restore the coefficients of mu^{-1/2} h on the conservation basis after each step.
  bool global_moment_fix = true;
  double l = 7.0;
};

struct DecayFit {
  double lambda = 0.0;
  double prefactor = 0.0;  ///< C ||w_l h0|| in norm(t) ~ C exp(-lambda t)
  double residual = 0.0;   ///< RMS of the log-space residuals
  std::size_t samples = 0;
};

/// Least-squares fit of log norm against t over the run past `skip_fraction` of the
/// horizon; the default keeps the second half, where the slowest mode dominates.
/// Throws DataError on non-positive norms or fewer than 10 fitted samples.
DecayFit estimate_decay_rate(std::span<const double> times, std::span<const double> norms,
                             double skip_fraction = 0.5);

struct PerturbationTrajectory {
  std::vector<double> times;
  std::vector<double> norm;     ///< ||w_l (h1 + sqrt(mu) h2)||
  std::vector<double> norm_h1;  ///< ||w_l h1||
  std::vector<double> norm_h2;  ///< ||w_l h2||
  std::vector<double> projection;  ///< |P(h2 + mu^{-1/2} h1)|
  std::optional<DecayFit> fit;     ///< empty for the zero solution
  bool zero_solution = false;
  SplitState final_state;

  void write_csv(const std::filesystem::path& path) const;
};

/// Coupled h1/h2 scheme for dh/dt + v.grad h + L h = Q(h, h) on the phase grid.
class LinearizedSolver {
 public:
  LinearizedSolver(const PhaseGrid& grid, const LinearizedCollision& lin,
                   const std::optional<Axis>& axis, LinearizedOptions options = {});

  const PhaseGrid& grid() const { return *grid_; }
  const ConservationBasis& basis() const { return basis_; }
  const LinearizedOptions& options() const { return options_; }
  double cutoff() const { return cutoff_; }
  /// nu averaged over speed shells; the attenuation rate of both components.
  const std::vector<double>& rate() const { return rate_; }
  const std::vector<double>& sqrt_mu() const { return sqrt_mu_; }

  /// K h with K shifted so that L = rate - K.
  Field apply_k(const Field& h) const;
  /// Q(h, h) on every node.
  Field nonlinear(const Field& h) const;

  Field combine(const SplitState& s) const;  ///< h1 + sqrt(mu) h2
  /// |P(h2 + mu^{-1/2} h1)|.
  double projection_residual(const SplitState& s) const;

  /// Throws StepSizeError when dt * max nu > 1.
  SplitState step_split(const SplitState& state, double dt) const;
  /// The same update applied to h without splitting.
  Field step_unsplit(const Field& h, double dt) const;

  /// h1(0) = h0, h2(0) = 0. Throws InstabilityError past 10x the initial norm.
  PerturbationTrajectory solve(const Field& h0, double t_end, double dt) const;

 private:
  void check_step(double dt) const;
  void fix_moments(const Field& before, const Field& after, Field& target, double dt) const;
  void fix_invariants(const Field& before, const Field& after, Field& target) const;

  const PhaseGrid* grid_;
  const LinearizedCollision* lin_;
  TransportSolver transport_;
  LinearizedOptions options_;
  ConservationBasis basis_;
  double cutoff_ = 0.0;
  Eigen::MatrixXd k_;
  std::vector<double> rate_;
  std::vector<double> sqrt_mu_;
  std::vector<double> inv_sqrt_mu_;
  std::vector<char> low_;
};

}  // namespace hsbe
