#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qrs/model_types.hpp"
#include "qrs/preprocess.hpp"
#include "qrs/propensity.hpp"
#include "qrs/sample.hpp"

namespace qrs {

// phi(z) = scale * (1, p, p^2, ..., p^degree) with p the propensity score.
struct InstrumentConfig {
  int degree = 3;
  double scale = 1.0;
};

Eigen::MatrixXd instrument_matrix(const ParticipantSample& sample, const InstrumentConfig& instr);

// Norm of the discretised moment vector
//   v(t) = (1 - 2 eps) / (N Q) sum_q sum_i W_i D_i phi_i [1(y_i <= x_i'b_q) - G(tau_q, pi_i; t)]
// for the coefficient rows b_q aligned with the grid.
double qrs_objective(const ParticipantSample& sample, const Eigen::MatrixXd& beta_rows, double t,
                     const QuantileGrid& grid, const InstrumentConfig& instr);
double qrs_objective(const Dataset& data, const Eigen::MatrixXd& beta_rows, double t, const Eigen::VectorXd& pscore,
                     const QuantileGrid& grid, const InstrumentConfig& instr);

struct QrsDiagnostics {
  std::size_t cells = 0;
  std::size_t cold_cells = 0;
  std::size_t preprocessed_cells = 0;
  std::size_t unconverged = 0;  // cells without a converged/certified solution
  std::size_t fallbacks = 0;    // preprocessing gave up and solved the full sample
  std::vector<std::string> flagged;
  double seconds_propensity = 0.0;
  double seconds_search = 0.0;  // copula-parameter search
  double seconds_final = 0.0;   // fine-grid coefficient process
  double seconds_total = 0.0;

  void record(const CellReport& cell, const std::string& where);
};

struct QrsFit {
  std::string algorithm;
  std::vector<double> theta_grid;
  // Criterion value per theta on the grid used for the search (coarse grid
  // for alg2/alg3, fine grid for baseline / alg1).
  std::vector<double> objective_profile;
  double theta_hat = 0.0;
  std::size_t theta_index = 0;
  std::vector<double> candidates;            // alg3 only, ascending
  std::vector<double> candidate_objectives;  // fine-grid criterion per candidate
  std::vector<double> fine_grid;
  std::vector<double> coarse_grid;
  double epsilon = 0.01;
  Eigen::MatrixXd beta;                      // Q x K at theta_hat
  std::vector<Eigen::MatrixXd> coarse_betas; // A entries of R x K (alg2/alg3)
  PropensityModel propensity;
  InstrumentConfig instrument;
  std::uint64_t data_hash = 0;
  QrsDiagnostics diagnostics;
};

struct EstimatorOptions {
  InstrumentConfig instrument;
  SolverConfig solver;
  int threads = 0;
};

// Reduced-grid estimator: copula parameter from the coarse grid, warm
// starting every (tau, theta) cell from the neighbouring theta.
QrsFit estimate_qrs_reduced(const Dataset& data, const CopulaParamGrid& copula_grid, const QuantileGrid& fine_grid,
                            const QuantileGrid& coarse_grid, const EstimatorOptions& options = {});

// As above, then refines the P best coarse-grid candidates on the fine grid.
QrsFit estimate_qrs_refined(const Dataset& data, const CopulaParamGrid& copula_grid, const QuantileGrid& fine_grid,
                            const QuantileGrid& coarse_grid, std::size_t p, const EstimatorOptions& options = {});

// Every (tau, theta) cell solved cold on the fine grid.
QrsFit estimate_qrs_baseline(const Dataset& data, const CopulaParamGrid& copula_grid, const QuantileGrid& fine_grid,
                             const EstimatorOptions& options = {});

// The warm-started quantile process repeated for every theta on the fine grid.
QrsFit estimate_qrs_process_per_theta(const Dataset& data, const CopulaParamGrid& copula_grid,
                                      const QuantileGrid& fine_grid, const EstimatorOptions& options = {});

// Building blocks shared with the bootstrap.
std::size_t argmin_first(const std::vector<double>& values);
std::vector<std::size_t> smallest_indices(const std::vector<double>& values, std::size_t p);

// Preliminary vector for a fine grid built from coarse-grid rows at the same
// quantile (entries stay empty where no coarse quantile matches).
std::vector<std::optional<Eigen::VectorXd>> coarse_preliminaries(const QuantileGrid& fine_grid,
                                                                 const QuantileGrid& coarse_grid,
                                                                 const Eigen::MatrixXd& coarse_beta);

}  // namespace qrs
