#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "hsbe/collision.hpp"

namespace hsbe {

struct HomogeneousState {
  std::vector<double> g;
  double t = 0.0;
  bool radially_symmetric = false;
  double radial_residual = 0.0;
};

struct Symmetrized {
  std::vector<double> g;
  double residual = 0.0;  ///< ||g - symmetrized||_inf
};

/// Averages g over every exact speed shell of the grid.
Symmetrized radial_symmetrize(const VelocityGrid& grid, std::span<const double> g);

/// Sum of cell * G ln(G + floor), floor = 1e-16 max(G).
double h_functional(const VelocityGrid& grid, std::span<const double> g);

struct Nu0Estimate {
  double value = 0.0;
  bool degenerate = false;  ///< set when min RG / <v> <= 0
};

/// min over nodes of RG(v) / <v>.
Nu0Estimate estimate_nu0(const CollisionOperator& op, std::span<const double> g);

/// Two isotropic Gaussians with weights (a, 1 - a) and temperatures (t1, t2);
/// mass 1 and energy 3 when a t1 + (1 - a) t2 = 1.
std::vector<double> bimodal_profile(const VelocityGrid& grid, double a = 0.5, double t1 = 0.7,
                                    double t2 = 1.3);

/// Discrete mass and energy of a velocity density.
std::pair<double, double> mass_energy(const VelocityGrid& grid, std::span<const double> g);

/// Multiplies g by (a + b |v|^2) so that its discrete mass and energy become (mass, energy).
/// Returns false, leaving g unchanged, when the 2x2 system is singular.
bool match_moments(const VelocityGrid& grid, std::span<double> g, double mass, double energy);

struct HomogeneousOptions {
  bool moment_rescale = true;
  /// Subtract the fixed residual Q(mu, mu) from the gain so that mu is an exact
  /// fixed point of the step.
  bool well_balanced = true;
  double l0 = 7.0;
  double l1 = 8.0;
  bool keep_states = false;
};

struct HomogeneousRecord {
  double t = 0.0;
  double mass = 0.0;
  double energy = 0.0;
  double h = 0.0;
  double distance_l0 = 0.0;  ///< ||w_l0 (G - mu)||_inf
  double norm_l1 = 0.0;      ///< ||w_l1 G||_inf
  double nu0 = 0.0;
  double radial_residual = 0.0;
  double min_value = 0.0;
};

struct HomogeneousTrajectory {
  std::vector<HomogeneousRecord> records;
  std::vector<std::vector<double>> states;  ///< filled when keep_states is set
  double measured_c0 = 0.0;                 ///< sup_t ||w_l1 G(t)||_inf
  double max_h_increase = 0.0;              ///< largest per-step increase of H
  double max_radial_residual = 0.0;
  double max_momentum = 0.0;

  void write_csv(const std::filesystem::path& path) const;
};

/// Exponential Euler for dG/dt = Q(G, G) with the loss treated exactly:
/// G <- exp(-RG dt) G + (1 - exp(-RG dt)) / RG * Q_gain(G, G),
/// followed by shell averaging and a G (a + b |v|^2) rescale restoring mass and energy.
class HomogeneousSolver {
 public:
  explicit HomogeneousSolver(const CollisionOperator& op, HomogeneousOptions options = {});

  const CollisionOperator& op() const { return *op_; }
  const HomogeneousOptions& options() const { return options_; }

  /// Throws StepSizeError when dt * max RG > 1.
  HomogeneousState step(const HomogeneousState& state, double dt) const;

  /// Throws DataError for negative or non-radial g0.
  HomogeneousTrajectory solve(std::span<const double> g0, double t_end, double dt) const;

  HomogeneousRecord record(const HomogeneousState& state) const;

 private:
  const CollisionOperator* op_;
  HomogeneousOptions options_;
  std::vector<double> w_l0_;
  std::vector<double> w_l1_;
  std::vector<double> residual_;  ///< Q(mu, mu), zero unless well_balanced
};

}  // namespace hsbe
