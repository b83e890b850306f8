#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qrs/estimator.hpp"

namespace qrs {

// iid standard exponential weights (mean 1, variance 1).
Eigen::VectorXd draw_weights(std::size_t n, std::uint64_t seed);

struct BootstrapDraw {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool valid = false;
  std::string error;
  double theta_star = 0.0;
  std::vector<double> candidates;  // refined variant only
  Eigen::MatrixXd beta_star;       // Q x K on the fine grid
  Eigen::VectorXd gamma_star;
  double seconds = 0.0;
};

enum class BootstrapVariant { Reduced, Refined };

struct BootstrapOptions {
  std::size_t draws = 100;
  BootstrapVariant variant = BootstrapVariant::Reduced;
  std::size_t p = 3;
  std::uint64_t seed = 1;
  // Replaces the exponential draws by W = 1 (degeneracy check).
  bool unit_weights = false;
  EstimatorOptions estimator;
  // Draws run concurrently; each draw is solved on one thread.
  int threads = 0;
};

struct BootstrapRun {
  std::vector<BootstrapDraw> draws;
  std::size_t invalid = 0;
  double seconds_total = 0.0;
};

// A single draw with the given weights: weighted propensity re-fit, every
// coarse (tau, theta) cell warm-started from the stored point estimate, then
// the fine-grid process at the selected copula parameter.
BootstrapDraw bootstrap_draw(const Dataset& data, const QrsFit& fit, const CopulaParamGrid& copula_grid,
                             const QuantileGrid& fine_grid, const QuantileGrid& coarse_grid,
                             const Eigen::VectorXd& weights, const BootstrapOptions& options);

// Throws when more than 10% of the draws are invalid.
BootstrapRun bootstrap_qrs(const Dataset& data, const QrsFit& fit, const CopulaParamGrid& copula_grid,
                           const QuantileGrid& fine_grid, const QuantileGrid& coarse_grid,
                           const BootstrapOptions& options);

struct BandRow {
  double tau = 0.0;  // NaN for the copula parameter row
  std::string coef;  // "theta" or "beta_k"
  double lo = 0.0;
  double hi = 0.0;
};

struct Bands {
  std::vector<BandRow> rows;
  std::size_t valid = 0;
  std::size_t invalid = 0;
};

// Pointwise order-statistic intervals: with n valid draws the endpoints are
// the ceil(n (1 - level) / 2)-th and floor(n (1 + level) / 2)-th smallest.
Bands confidence_bands(const std::vector<BootstrapDraw>& draws, const std::vector<double>& fine_grid, double level);

}  // namespace qrs
