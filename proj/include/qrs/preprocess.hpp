#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qrs/model_types.hpp"
#include "qrs/rqr_solver.hpp"
#include "qrs/sample.hpp"

namespace qrs {

// Observations whose residual sign is predicted from a preliminary fit are
// collapsed into two pseudo-observations ("globs"); the rest are kept.
struct PreprocessState {
  std::vector<Eigen::Index> j_low;   // predicted negative residuals
  std::vector<Eigen::Index> j_high;  // predicted positive residuals
  std::vector<Eigen::Index> kept;
  Eigen::VectorXd x_low;
  Eigen::VectorXd x_high;
  double y_low = 0.0;
  double y_high = 0.0;
  double tau_bar = 0.5;     // quantile index shared by both globs
  double m = 0.5;
  double band = 0.0;        // M = m (K N)^{1/2}
  bool clamped_low = false;   // lower cutoff level fell below 0
  bool clamped_high = false;  // upper cutoff level exceeded 1
};

PreprocessState build_globs(const RqrProblem& problem, const Eigen::VectorXd& beta_prelim, double m);

// Recomputes the glob rows for the current j_low / j_high sets. The glob
// rows reproduce the subgradient of the collapsed observations:
//   (1 - tau_bar) x_low  = sum_{j_low}  w_i (1 - u_i) x_i
//   tau_bar       x_high = sum_{j_high} w_i u_i x_i
void assemble_globs(const RqrProblem& problem, const Eigen::VectorXd& beta_prelim, PreprocessState& state);

// Kept observations followed by the non-empty globs (low, then high).
RqrProblem reduced_problem(const RqrProblem& problem, const PreprocessState& state);

struct PreprocessedSolution {
  RqrSolution solution;   // beta and objective refer to the full problem
  int rounds = 0;         // reduced solves performed
  int m_doublings = 0;
  bool fell_back = false; // full-sample solve after too many rounds
  std::size_t kept = 0;   // size of the last reduced problem (without globs)
  double final_m = 0.0;
};

// Solves the full problem through reduced problems, verifying predicted
// residual signs and growing the kept band until the reduced optimum is
// also optimal for the full problem.
PreprocessedSolution solve_preprocessed(const RqrProblem& problem, const Eigen::VectorXd& beta_prelim, double m0,
                                        const SolverConfig& config);

struct CellReport {
  bool converged = false;
  bool vertex = false;
  bool fell_back = false;
  bool cold = false;
  int rounds = 0;
  int iterations = 0;
};

struct ProcessOptions {
  // First quantile solved; defaults to the grid median.
  std::optional<std::size_t> start_at;
  // Optional preliminary coefficients per grid index (e.g. coarse-grid
  // solutions at the same quantile). An entry replaces the adjacent-quantile
  // warm start, and the start quantile is not solved cold when it has one.
  const std::vector<std::optional<Eigen::VectorXd>>* preliminary = nullptr;
  double m0 = 0.5;
};

struct ProcessResult {
  Eigen::MatrixXd beta;  // one row per grid quantile
  std::vector<CellReport> cells;
};

// Quantile process at a fixed copula parameter: one cold solve, then
// preprocessing solves sweeping outward from the start quantile.
ProcessResult rqr_process(const ParticipantSample& sample, double theta, const QuantileGrid& grid,
                          const SolverConfig& config, const ProcessOptions& options = {});

// Wraps a solution into a CellReport.
CellReport report_cold(const RqrSolution& sol);
CellReport report_preprocessed(const PreprocessedSolution& sol);

}  // namespace qrs
