#pragma once

#include <vector>

#include <Eigen/Dense>

#include "qrs/model_types.hpp"

namespace qrs {

// Weighted quantile regression where observation i carries its own
// quantile index u_i:  min_b  sum_i w_i rho_{u_i}(y_i - x_i'b).
struct RqrProblem {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
  Eigen::VectorXd u;
  Eigen::VectorXd w;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index k() const { return x.cols(); }
  // Throws ValidationError on dimension mismatch, u outside (0,1), w <= 0.
  void validate() const;
};

struct RqrSolution {
  Eigen::VectorXd beta;
  double objective = 0.0;
  int iterations = 0;
  double duality_gap = 0.0;
  bool converged = false;
  // Set when the crossover certified beta as an exact optimal vertex; the
  // basis holds the K observations (ascending) that beta interpolates.
  bool vertex = false;
  std::vector<Eigen::Index> basis;
  int pivots = 0;
  // Objective of the best iterate after each interior-point iteration.
  std::vector<double> objective_trace;
};

// rho_u(x) = x u for x >= 0 and -(1-u) x for x < 0.
inline double rotated_check_loss(double residual, double u) {
  return residual >= 0.0 ? residual * u : -(1.0 - u) * residual;
}

double rqr_objective(const RqrProblem& problem, const Eigen::VectorXd& beta);

// Primal-dual (Frisch-Newton, Mehrotra predictor-corrector) solve. A warm
// start replaces the least-squares starting coefficients. Non-convergence is
// reported through the flag, never thrown; rank deficiency throws.
RqrSolution solve_interior_point(const RqrProblem& problem, const SolverConfig& config,
                                 const Eigen::VectorXd* warm_start = nullptr);

struct VertexResult {
  bool certified = false;
  Eigen::VectorXd beta;
  std::vector<Eigen::Index> basis;
  double objective = 0.0;
  int pivots = 0;
};

// Moves from an approximate solution to an optimal basic solution: picks the
// K smallest residuals as a basis and exchanges basis members along descent
// edges until no edge direction decreases the objective.
VertexResult crossover_to_vertex(const RqrProblem& problem, const Eigen::VectorXd& beta, int max_pivots);

// Exact fit through the rows listed in `basis` (ascending order).
Eigen::VectorXd solve_basis(const RqrProblem& problem, const std::vector<Eigen::Index>& basis);

}  // namespace qrs
