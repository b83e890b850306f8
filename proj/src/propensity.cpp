#include "qrs/propensity.hpp"

#include <algorithm>
#include <cmath>

#include "qrs/error.hpp"

namespace qrs {

namespace {

// log(1 + exp(t)) without overflow.
double log1p_exp(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double log_likelihood(const Eigen::MatrixXd& z, const std::vector<int>& d, const Eigen::VectorXd& w,
                      const Eigen::VectorXd& gamma) {
  const Eigen::VectorXd index = z * gamma;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < index.size(); ++i) {
    const double t = index(i);
    ll += w(i) * (d[static_cast<std::size_t>(i)] == 1 ? -log1p_exp(-t) : -log1p_exp(t));
  }
  return ll;
}

// Fitted probabilities collapsing onto the observed 0/1 outcomes leave a
// vanishing likelihood: the maximum is only reached at infinity.
bool separated(double ll, const Eigen::VectorXd& w) { return ll > -1e-6 * w.sum(); }

}  // namespace

double logistic(double index) {
  if (index >= 0.0) return 1.0 / (1.0 + std::exp(-index));
  const double e = std::exp(index);
  return e / (1.0 + e);
}

PropensityModel fit_logit(const Dataset& data, const Eigen::VectorXd* weights, const LogitOptions& options) {
  const Eigen::MatrixXd z = data.propensity_design();
  const Eigen::Index n = z.rows();
  const Eigen::Index p = z.cols();
  if (!z.allFinite()) throw ValidationError("propensity: non-finite regressors");

  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  if (weights != nullptr) {
    if (weights->size() != n) throw ValidationError("propensity: weight vector has wrong length");
    if (!weights->allFinite() || (weights->array() <= 0.0).any()) {
      throw ValidationError("propensity: weights must be finite and positive");
    }
    w = *weights;
  }
  const auto participants = std::count(data.d.begin(), data.d.end(), 1);
  if (participants == 0 || static_cast<std::size_t>(participants) == data.n()) {
    throw NumericalError("propensity: participation is constant, the logit likelihood has no maximum (perfect separation)");
  }

  PropensityModel model;
  model.gamma = Eigen::VectorXd::Zero(p);
  if (options.start) {
    if (options.start->size() != p) throw ValidationError("propensity: warm start has wrong length");
    model.gamma = *options.start;
  }
  Eigen::VectorXd dvec(n);
  for (Eigen::Index i = 0; i < n; ++i) dvec(i) = data.d[static_cast<std::size_t>(i)];

  double ll = log_likelihood(z, data.d, w, model.gamma);
  for (int iter = 0;; ++iter) {
    Eigen::VectorXd prob(n);
    const Eigen::VectorXd index = z * model.gamma;
    for (Eigen::Index i = 0; i < n; ++i) prob(i) = logistic(index(i));
    const Eigen::VectorXd score = z.transpose() * (w.array() * (dvec - prob).array()).matrix();
    model.score_norm = score.cwiseAbs().maxCoeff();
    model.iterations = iter;
    model.log_likelihood = ll;
    if (separated(ll, w)) {
      model.message = "perfect separation detected";
      break;
    }
    if (model.score_norm <= options.score_tolerance) {
      model.converged = true;
      break;
    }
    const Eigen::VectorXd curv = w.array() * prob.array() * (1.0 - prob.array());
    Eigen::MatrixXd info = z.transpose() * curv.asDiagonal() * z;
    info.diagonal().array() += options.ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) {
      model.message = "information matrix is singular";
      break;
    }
    const Eigen::VectorXd step = ldlt.solve(score);
    // Half the Newton decrement bounds the remaining likelihood gain. Below
    // rounding level of the likelihood the full step is taken unchecked.
    const bool quadratic_region = 0.5 * score.dot(step) <= 1e-10 * std::max(1.0, std::abs(ll));
    if (iter >= options.max_iterations) {
      model.message = "iteration limit reached";
      break;
    }

    double scale = 1.0;
    Eigen::VectorXd candidate = model.gamma + step;
    double ll_new = log_likelihood(z, data.d, w, candidate);
    int halvings = 0;
    while (!quadratic_region && !(ll_new >= ll) && halvings < 40) {
      scale *= 0.5;
      candidate = model.gamma + scale * step;
      ll_new = log_likelihood(z, data.d, w, candidate);
      ++halvings;
    }
    if (!quadratic_region && !(ll_new >= ll)) {
      model.message = "step halving failed to increase the likelihood";
      break;
    }
    model.gamma = candidate;
    ll = ll_new;
    if (model.gamma.cwiseAbs().maxCoeff() > 1e6) {
      model.log_likelihood = ll;
      model.message = "perfect separation detected";
      break;
    }
  }
  return model;
}

Eigen::VectorXd predict_propensity(const PropensityModel& model, const Dataset& data) {
  const Eigen::VectorXd index = data.propensity_design() * model.gamma;
  Eigen::VectorXd p(index.size());
  for (Eigen::Index i = 0; i < index.size(); ++i) {
    p(i) = std::clamp(logistic(index(i)), kPropensityFloor, 1.0 - kPropensityFloor);
  }
  return p;
}

}  // namespace qrs
