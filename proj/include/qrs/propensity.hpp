#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "qrs/model_types.hpp"

namespace qrs {

struct PropensityModel {
  Eigen::VectorXd gamma;  // (intercept, z1..., x_2..x_K)
  bool converged = false;
  double log_likelihood = 0.0;
  int iterations = 0;
  double score_norm = 0.0;  // max-abs weighted score at gamma
  std::string message;
};

struct LogitOptions {
  int max_iterations = 100;
  double score_tolerance = 1e-8;
  double ridge = 1e-10;
  std::optional<Eigen::VectorXd> start;  // warm start (bootstrap re-fits)
};

// Weighted Bernoulli maximum likelihood for D on (1, Z1, X) by Newton-Raphson
// with step halving. A constant D throws NumericalError; separation found
// during the iterations is reported through converged = false.
PropensityModel fit_logit(const Dataset& data, const Eigen::VectorXd* weights = nullptr,
                          const LogitOptions& options = {});

inline constexpr double kPropensityFloor = 1e-10;

double logistic(double index);

// Lambda(z'gamma) clamped to [1e-10, 1 - 1e-10].
Eigen::VectorXd predict_propensity(const PropensityModel& model, const Dataset& data);

}  // namespace qrs
