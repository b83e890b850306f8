#pragma once

#include <cstddef>

#include <Eigen/Dense>

#include "qrs/model_types.hpp"
#include "qrs/rqr_solver.hpp"

namespace qrs {

// The participant subsample that enters every rotated regression, together
// with the estimated propensity of each participant.
struct ParticipantSample {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
  Eigen::VectorXd pscore;
  Eigen::VectorXd pscore_quantile;  // Phi^{-1}(pscore), cached for G
  Eigen::VectorXd weights;          // 1 outside the bootstrap
  std::size_t n_total = 0;          // N including non-participants

  // pscore and weights are full-length (N) vectors.
  static ParticipantSample from(const Dataset& data, const Eigen::VectorXd& pscore,
                                const Eigen::VectorXd* weights = nullptr);
  Eigen::Index n() const { return y.size(); }
};

// Quantile indices are kept this far inside (0, 1) so the solver's box
// stays non-degenerate.
inline constexpr double kIndexFloor = 1e-10;

// u_i = G(tau, pscore_i; theta) for every participant.
Eigen::VectorXd rotated_indices(const ParticipantSample& sample, double tau, double theta);

RqrProblem make_problem(const ParticipantSample& sample, double tau, double theta);

}  // namespace qrs
