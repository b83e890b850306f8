#include "qrs/sample.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#include "qrs/copula.hpp"
#include "qrs/error.hpp"
#include "qrs/parallel.hpp"

namespace qrs {

int default_thread_count() {
  if (const char* env = std::getenv("QRS_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

ParticipantSample ParticipantSample::from(const Dataset& data, const Eigen::VectorXd& pscore,
                                          const Eigen::VectorXd* weights) {
  if (static_cast<std::size_t>(pscore.size()) != data.n()) {
    throw ValidationError("participant sample: propensity vector has wrong length");
  }
  if (weights != nullptr && static_cast<std::size_t>(weights->size()) != data.n()) {
    throw ValidationError("participant sample: weight vector has wrong length");
  }
  const auto idx = data.participant_indices();
  const auto np = static_cast<Eigen::Index>(idx.size());
  ParticipantSample s;
  s.n_total = data.n();
  s.y.resize(np);
  s.x.resize(np, data.x.cols());
  s.pscore.resize(np);
  s.pscore_quantile.resize(np);
  s.weights.resize(np);
  for (Eigen::Index r = 0; r < np; ++r) {
    const auto i = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]);
    s.y(r) = data.y(i);
    s.x.row(r) = data.x.row(i);
    s.pscore(r) = pscore(i);
    s.pscore_quantile(r) = norm_quantile(pscore(i));
    s.weights(r) = weights == nullptr ? 1.0 : (*weights)(i);
  }
  return s;
}

Eigen::VectorXd rotated_indices(const ParticipantSample& sample, double tau, double theta) {
  const ConditionalCopula g(tau, theta);
  Eigen::VectorXd u(sample.n());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    u(i) = std::clamp(g(sample.pscore(i), sample.pscore_quantile(i)), kIndexFloor, 1.0 - kIndexFloor);
  }
  return u;
}

RqrProblem make_problem(const ParticipantSample& sample, double tau, double theta) {
  return RqrProblem{sample.y, sample.x, rotated_indices(sample, tau, theta), sample.weights};
}

}  // namespace qrs
