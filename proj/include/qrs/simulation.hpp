#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qrs/estimator.hpp"

namespace qrs {

struct DgpConfig {
  std::size_t n = 10000;
  int k = 2;  // columns of X, intercept included
  double theta_true = 0.5;
  std::uint64_t seed = 1;
  // Seed for the model constants b_k, g_k; shared by all reps of an experiment.
  std::uint64_t constants_seed = 20240601;

  void validate() const;
};

struct TruthRecord {
  double theta_true = 0.0;
  std::vector<double> b;      // slope multipliers, one per non-intercept column
  std::vector<double> g;      // propensity multipliers
  Eigen::VectorXd gamma;      // (intercept, z1, x_2..x_K)
  std::size_t n = 0;
  int k = 0;
  std::uint64_t seed = 0;
  std::uint64_t constants_seed = 0;

  // beta(tau) = (Phi^{-1}(tau), tau b_2, ..., tau b_K).
  Eigen::VectorXd beta(double tau) const;
};

struct Simulation {
  Dataset data;
  TruthRecord truth;
  Eigen::VectorXd u;  // latent rank of the outcome
  Eigen::VectorXd v;  // latent rank of the participation equation
};

Simulation simulate_dgp(const DgpConfig& cfg);

enum class Algorithm { Baseline, Alg1Repeated, Alg2, Alg3 };
std::string algorithm_name(Algorithm a);
Algorithm parse_algorithm(const std::string& name);

struct BenchmarkConfig {
  std::vector<std::pair<std::size_t, int>> sizes;  // (n, k)
  std::vector<Algorithm> algorithms;
  std::size_t reps = 1;
  std::uint64_t seed = 1;
  double theta_true = 0.5;
  std::size_t p = 3;
  std::vector<double> copula_grid = CopulaParamGrid::standard().values();
  std::vector<double> fine_grid = QuantileGrid::percentiles().values();
  std::vector<double> coarse_grid = QuantileGrid::deciles().values();
  double epsilon = 0.01;
  EstimatorOptions estimator;
  // Reps running at the same time; each estimation then uses estimator.threads.
  int rep_threads = 1;
};

struct RepRecord {
  std::size_t n = 0;
  int k = 0;
  Algorithm algorithm = Algorithm::Alg2;
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double theta_hat = 0.0;
  double seconds = 0.0;
  std::size_t unconverged = 0;
};

struct BenchRow {
  std::size_t n = 0;
  int k = 0;
  Algorithm algorithm = Algorithm::Alg2;
  std::size_t reps = 0;
  std::size_t failed = 0;
  double mean_seconds = 0.0;
  double mean_theta = 0.0;
  double mse_theta = 0.0;
};

struct ExperimentReport {
  double theta_true = 0.0;
  std::vector<BenchRow> rows;
  std::vector<RepRecord> reps;
};

// One dataset per (n, k, rep), shared by all algorithms; only the estimation
// call is timed.
ExperimentReport run_benchmark(const BenchmarkConfig& cfg);

// Estimator entry point by algorithm.
QrsFit run_algorithm(Algorithm algorithm, const Dataset& data, const CopulaParamGrid& copula_grid,
                     const QuantileGrid& fine_grid, const QuantileGrid& coarse_grid, std::size_t p,
                     const EstimatorOptions& options);

struct DiagnosticsConfig {
  DgpConfig dgp;  // n = 10^4, one covariate besides the intercept
  std::vector<double> copula_grid = CopulaParamGrid::standard().values();
  std::vector<double> fine_grid = QuantileGrid::percentiles().values();
  double epsilon = 0.01;
  InstrumentConfig instrument;
  SolverConfig solver;                  // preprocessing implementation
  int restricted_iterations = 50;
  int unrestricted_iterations = 100;
  double threshold = 1e-3;              // "strictly larger" objective cutoff
  int threads = 0;
};

enum Implementation : int { kPreprocessing = 0, kRestricted = 1, kUnrestricted = 2 };
const char* implementation_name(int impl);

struct DiagCell {
  std::size_t a = 0;
  std::size_t q = 0;
  double objective[3] = {0.0, 0.0, 0.0};
  bool converged[3] = {false, false, false};
  int iterations[3] = {0, 0, 0};
};

struct DiagSummary {
  std::size_t suboptimal = 0;           // cold objective exceeds preprocessing by > threshold
  std::size_t equal = 0;                // within the threshold either way
  std::size_t preprocessing_worse = 0;  // preprocessing exceeds cold by > threshold
  std::size_t outer_decile = 0;         // suboptimal cells with tau <= 0.1 or tau >= 0.9
  std::size_t middle_decile = 0;        // suboptimal cells with 0.4 < tau <= 0.6
  std::size_t extreme_theta = 0;        // suboptimal cells with |theta| >= 0.7
  std::size_t modest_theta = 0;         // suboptimal cells with |theta| <= 0.2
  double min_ratio = 0.0;
  std::size_t unconverged = 0;
};

struct DiagnosticsReport {
  std::vector<double> copula_grid;
  std::vector<double> fine_grid;
  std::vector<DiagCell> cells;                 // a-major, A x Q
  std::vector<double> profile[3];              // criterion per theta
  std::size_t theta_index[3] = {0, 0, 0};
  std::vector<Eigen::MatrixXd> betas[3];       // A entries of Q x K
  DiagSummary summary[3];                      // [kRestricted], [kUnrestricted] are filled
  TruthRecord truth;
  double seconds[3] = {0.0, 0.0, 0.0};

  const DiagCell& cell(std::size_t a, std::size_t q) const { return cells[a * fine_grid.size() + q]; }
};

DiagnosticsReport numerical_diagnostics(const DiagnosticsConfig& cfg);

}  // namespace qrs
