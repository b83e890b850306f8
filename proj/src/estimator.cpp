#include "qrs/estimator.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <sstream>

#include "qrs/error.hpp"
#include "qrs/parallel.hpp"

namespace qrs {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Prepared {
  PropensityModel model;
  Eigen::VectorXd pscore;
  ParticipantSample sample;
};

Prepared prepare(const Dataset& data, QrsDiagnostics& diag) {
  const auto t0 = Clock::now();
  Prepared prep;
  prep.model = fit_logit(data);
  if (!prep.model.converged) {
    throw NumericalError("propensity score estimation failed: " + prep.model.message);
  }
  prep.pscore = predict_propensity(prep.model, data);
  prep.sample = ParticipantSample::from(data, prep.pscore);
  diag.seconds_propensity = seconds_since(t0);
  return prep;
}

std::string cell_label(double tau, double theta) {
  std::ostringstream s;
  s << "tau=" << tau << ",theta=" << theta;
  return s.str();
}

// Coarse-grid sweep over the copula grid: a quantile process at the first
// theta, then every (r, a) cell warm-started from (r, a - 1).
std::vector<Eigen::MatrixXd> coarse_sweep(const ParticipantSample& sample, const CopulaParamGrid& copula_grid,
                                          const QuantileGrid& coarse, const EstimatorOptions& options,
                                          QrsDiagnostics& diag) {
  const std::size_t a_count = copula_grid.size();
  const std::size_t r_count = coarse.size();
  std::vector<Eigen::MatrixXd> betas(a_count);

  ProcessOptions first;
  first.m0 = options.solver.m_init_estimation;
  const ProcessResult head = rqr_process(sample, copula_grid[0], coarse, options.solver, first);
  betas[0] = head.beta;
  for (std::size_t r = 0; r < r_count; ++r) diag.record(head.cells[r], cell_label(coarse[r], copula_grid[0]));

  std::vector<CellReport> reports(r_count);
  for (std::size_t a = 1; a < a_count; ++a) {
    betas[a].resize(static_cast<Eigen::Index>(r_count), sample.x.cols());
    parallel_for(r_count, options.threads, [&](std::size_t r) {
      try {
        const RqrProblem problem = make_problem(sample, coarse[r], copula_grid[a]);
        const Eigen::VectorXd prelim = betas[a - 1].row(static_cast<Eigen::Index>(r)).transpose();
        const PreprocessedSolution sol = solve_preprocessed(problem, prelim, options.solver.m_init_estimation, options.solver);
        betas[a].row(static_cast<Eigen::Index>(r)) = sol.solution.beta.transpose();
        reports[r] = report_preprocessed(sol);
      } catch (const Error& e) {
        std::ostringstream msg;
        msg << "cell (r=" << r << ", a=" << a << "): " << e.what();
        throw NumericalError(msg.str());
      }
    });
    for (std::size_t r = 0; r < r_count; ++r) diag.record(reports[r], cell_label(coarse[r], copula_grid[a]));
  }
  return betas;
}

std::vector<double> profile_of(const ParticipantSample& sample, const std::vector<Eigen::MatrixXd>& betas,
                               const CopulaParamGrid& copula_grid, const QuantileGrid& grid,
                               const InstrumentConfig& instr, int threads) {
  std::vector<double> profile(betas.size());
  parallel_for(betas.size(), threads, [&](std::size_t a) {
    profile[a] = qrs_objective(sample, betas[a], copula_grid[a], grid, instr);
  });
  return profile;
}

ProcessResult fine_process(const ParticipantSample& sample, double theta, const QuantileGrid& fine,
                           const QuantileGrid& coarse, const Eigen::MatrixXd& coarse_beta,
                           const EstimatorOptions& options) {
  const auto prelims = coarse_preliminaries(fine, coarse, coarse_beta);
  ProcessOptions popt;
  popt.m0 = options.solver.m_init_estimation;
  popt.preliminary = &prelims;
  return rqr_process(sample, theta, fine, options.solver, popt);
}

QrsFit start_fit(const std::string& algorithm, const Dataset& data, const CopulaParamGrid& copula_grid,
                 const QuantileGrid& fine, const EstimatorOptions& options) {
  options.solver.validate();
  if (options.instrument.degree < 0) throw ValidationError("instrument degree must be non-negative");
  QrsFit fit;
  fit.algorithm = algorithm;
  fit.theta_grid = copula_grid.values();
  fit.fine_grid = fine.values();
  fit.epsilon = fine.epsilon();
  fit.instrument = options.instrument;
  fit.data_hash = dataset_hash(data);
  return fit;
}

void check_coarse(const QuantileGrid& fine, const QuantileGrid& coarse) {
  if (coarse.values().front() < fine.values().front() || coarse.values().back() > fine.values().back()) {
    throw ValidationError("coarse quantile grid must lie within the fine grid range");
  }
}

}  // namespace

void QrsDiagnostics::record(const CellReport& cell, const std::string& where) {
  ++cells;
  if (cell.cold) {
    ++cold_cells;
  } else {
    ++preprocessed_cells;
  }
  if (cell.fell_back) {
    ++fallbacks;
    flagged.push_back("fallback " + where);
  }
  if (!cell.converged) {
    ++unconverged;
    flagged.push_back("unconverged " + where);
  }
}

Eigen::MatrixXd instrument_matrix(const ParticipantSample& sample, const InstrumentConfig& instr) {
  if (instr.degree < 0) throw ValidationError("instrument degree must be non-negative");
  Eigen::MatrixXd phi(sample.n(), instr.degree + 1);
  for (Eigen::Index i = 0; i < sample.n(); ++i) {
    double power = instr.scale;
    for (int l = 0; l <= instr.degree; ++l) {
      phi(i, l) = power;
      power *= sample.pscore(i);
    }
  }
  return phi;
}

double qrs_objective(const ParticipantSample& sample, const Eigen::MatrixXd& beta_rows, double t,
                     const QuantileGrid& grid, const InstrumentConfig& instr) {
  if (beta_rows.rows() != static_cast<Eigen::Index>(grid.size()) || beta_rows.cols() != sample.x.cols()) {
    throw ValidationError("qrs objective: coefficient rows do not match the grid and design");
  }
  const Eigen::MatrixXd phi = instrument_matrix(sample, instr);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(phi.cols());
  Eigen::VectorXd term(sample.n());
  for (std::size_t q = 0; q < grid.size(); ++q) {
    const Eigen::VectorXd u = rotated_indices(sample, grid[q], t);
    const Eigen::VectorXd fitted = sample.x * beta_rows.row(static_cast<Eigen::Index>(q)).transpose();
    for (Eigen::Index i = 0; i < sample.n(); ++i) {
      const double hit = sample.y(i) <= fitted(i) ? 1.0 : 0.0;
      term(i) = sample.weights(i) * (hit - u(i));
    }
    total += phi.transpose() * term;
  }
  const double scale =
      (1.0 - 2.0 * grid.epsilon()) / (static_cast<double>(sample.n_total) * static_cast<double>(grid.size()));
  return (scale * total).norm();
}

double qrs_objective(const Dataset& data, const Eigen::MatrixXd& beta_rows, double t, const Eigen::VectorXd& pscore,
                     const QuantileGrid& grid, const InstrumentConfig& instr) {
  return qrs_objective(ParticipantSample::from(data, pscore), beta_rows, t, grid, instr);
}

std::size_t argmin_first(const std::vector<double>& values) {
  if (values.empty()) throw ValidationError("argmin of an empty profile");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[best]) best = i;
  }
  return best;
}

std::vector<std::size_t> smallest_indices(const std::vector<double>& values, std::size_t p) {
  if (p == 0 || p > values.size()) throw ValidationError("number of candidates must lie in [1, A]");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  order.resize(p);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::optional<Eigen::VectorXd>> coarse_preliminaries(const QuantileGrid& fine_grid,
                                                                 const QuantileGrid& coarse_grid,
                                                                 const Eigen::MatrixXd& coarse_beta) {
  std::vector<std::optional<Eigen::VectorXd>> prelims(fine_grid.size());
  for (std::size_t r = 0; r < coarse_grid.size(); ++r) {
    const std::size_t q = fine_grid.find(coarse_grid[r]);
    if (q < fine_grid.size()) prelims[q] = coarse_beta.row(static_cast<Eigen::Index>(r)).transpose();
  }
  return prelims;
}

QrsFit estimate_qrs_reduced(const Dataset& data, const CopulaParamGrid& copula_grid, const QuantileGrid& fine_grid,
                            const QuantileGrid& coarse_grid, const EstimatorOptions& options) {
  const auto t0 = Clock::now();
  check_coarse(fine_grid, coarse_grid);
  QrsFit fit = start_fit("alg2", data, copula_grid, fine_grid, options);
  fit.coarse_grid = coarse_grid.values();
  Prepared prep = prepare(data, fit.diagnostics);
  fit.propensity = prep.model;

  const auto t1 = Clock::now();
  fit.coarse_betas = coarse_sweep(prep.sample, copula_grid, coarse_grid, options, fit.diagnostics);
  fit.objective_profile =
      profile_of(prep.sample, fit.coarse_betas, copula_grid, coarse_grid, options.instrument, options.threads);
  fit.theta_index = argmin_first(fit.objective_profile);
  fit.theta_hat = copula_grid[fit.theta_index];
  fit.diagnostics.seconds_search = seconds_since(t1);

  const auto t2 = Clock::now();
  const ProcessResult fine =
      fine_process(prep.sample, fit.theta_hat, fine_grid, coarse_grid, fit.coarse_betas[fit.theta_index], options);
  fit.beta = fine.beta;
  for (std::size_t q = 0; q < fine_grid.size(); ++q) fit.diagnostics.record(fine.cells[q], cell_label(fine_grid[q], fit.theta_hat));
  fit.diagnostics.seconds_final = seconds_since(t2);
  fit.diagnostics.seconds_total = seconds_since(t0);
  return fit;
}

QrsFit estimate_qrs_refined(const Dataset& data, const CopulaParamGrid& copula_grid, const QuantileGrid& fine_grid,
                            const QuantileGrid& coarse_grid, std::size_t p, const EstimatorOptions& options) {
  const auto t0 = Clock::now();
  check_coarse(fine_grid, coarse_grid);
  if (p == 0 || p > copula_grid.size()) throw ValidationError("P must lie in [1, A]");
  QrsFit fit = start_fit("alg3", data, copula_grid, fine_grid, options);
  fit.coarse_grid = coarse_grid.values();
  Prepared prep = prepare(data, fit.diagnostics);
  fit.propensity = prep.model;

  const auto t1 = Clock::now();
  fit.coarse_betas = coarse_sweep(prep.sample, copula_grid, coarse_grid, options, fit.diagnostics);
  fit.objective_profile =
      profile_of(prep.sample, fit.coarse_betas, copula_grid, coarse_grid, options.instrument, options.threads);
  const std::vector<std::size_t> chosen = smallest_indices(fit.objective_profile, p);

  std::vector<ProcessResult> processes(chosen.size());
  std::vector<double> objectives(chosen.size());
  parallel_for(chosen.size(), options.threads, [&](std::size_t c) {
    const std::size_t a = chosen[c];
    processes[c] = fine_process(prep.sample, copula_grid[a], fine_grid, coarse_grid, fit.coarse_betas[a], options);
    objectives[c] = qrs_objective(prep.sample, processes[c].beta, copula_grid[a], fine_grid, options.instrument);
  });
  const std::size_t best = argmin_first(objectives);
  for (std::size_t c = 0; c < chosen.size(); ++c) {
    fit.candidates.push_back(copula_grid[chosen[c]]);
    for (std::size_t q = 0; q < fine_grid.size(); ++q) {
      fit.diagnostics.record(processes[c].cells[q], cell_label(fine_grid[q], copula_grid[chosen[c]]));
    }
  }
  fit.candidate_objectives = objectives;
  fit.theta_index = chosen[best];
  fit.theta_hat = copula_grid[fit.theta_index];
  fit.beta = processes[best].beta;
  fit.diagnostics.seconds_search = seconds_since(t1);
  fit.diagnostics.seconds_total = seconds_since(t0);
  return fit;
}

QrsFit estimate_qrs_baseline(const Dataset& data, const CopulaParamGrid& copula_grid, const QuantileGrid& fine_grid,
                             const EstimatorOptions& options) {
  const auto t0 = Clock::now();
  QrsFit fit = start_fit("baseline", data, copula_grid, fine_grid, options);
  Prepared prep = prepare(data, fit.diagnostics);
  fit.propensity = prep.model;

  const auto t1 = Clock::now();
  const std::size_t q_count = fine_grid.size();
  Eigen::MatrixXd betas(static_cast<Eigen::Index>(q_count), prep.sample.x.cols());
  std::vector<CellReport> reports(q_count);
  fit.objective_profile.resize(copula_grid.size());
  for (std::size_t a = 0; a < copula_grid.size(); ++a) {
    parallel_for(q_count, options.threads, [&](std::size_t q) {
      try {
        const RqrSolution sol = solve_interior_point(make_problem(prep.sample, fine_grid[q], copula_grid[a]), options.solver);
        betas.row(static_cast<Eigen::Index>(q)) = sol.beta.transpose();
        reports[q] = report_cold(sol);
      } catch (const Error& e) {
        std::ostringstream msg;
        msg << "cell (q=" << q << ", a=" << a << "): " << e.what();
        throw NumericalError(msg.str());
      }
    });
    for (std::size_t q = 0; q < q_count; ++q) fit.diagnostics.record(reports[q], cell_label(fine_grid[q], copula_grid[a]));
    fit.objective_profile[a] = qrs_objective(prep.sample, betas, copula_grid[a], fine_grid, options.instrument);
    if (a == 0 || fit.objective_profile[a] < fit.objective_profile[fit.theta_index]) {
      fit.theta_index = a;
      fit.beta = betas;
    }
  }
  fit.theta_hat = copula_grid[fit.theta_index];
  fit.diagnostics.seconds_search = seconds_since(t1);
  fit.diagnostics.seconds_total = seconds_since(t0);
  return fit;
}

QrsFit estimate_qrs_process_per_theta(const Dataset& data, const CopulaParamGrid& copula_grid,
                                      const QuantileGrid& fine_grid, const EstimatorOptions& options) {
  const auto t0 = Clock::now();
  QrsFit fit = start_fit("alg1-repeated", data, copula_grid, fine_grid, options);
  Prepared prep = prepare(data, fit.diagnostics);
  fit.propensity = prep.model;

  const auto t1 = Clock::now();
  std::vector<ProcessResult> processes(copula_grid.size());
  ProcessOptions popt;
  popt.m0 = options.solver.m_init_estimation;
  parallel_for(copula_grid.size(), options.threads, [&](std::size_t a) {
    processes[a] = rqr_process(prep.sample, copula_grid[a], fine_grid, options.solver, popt);
  });
  fit.objective_profile.resize(copula_grid.size());
  for (std::size_t a = 0; a < copula_grid.size(); ++a) {
    for (std::size_t q = 0; q < fine_grid.size(); ++q) {
      fit.diagnostics.record(processes[a].cells[q], cell_label(fine_grid[q], copula_grid[a]));
    }
    fit.objective_profile[a] = qrs_objective(prep.sample, processes[a].beta, copula_grid[a], fine_grid, options.instrument);
  }
  fit.theta_index = argmin_first(fit.objective_profile);
  fit.theta_hat = copula_grid[fit.theta_index];
  fit.beta = processes[fit.theta_index].beta;
  fit.diagnostics.seconds_search = seconds_since(t1);
  fit.diagnostics.seconds_total = seconds_since(t0);
  return fit;
}

}  // namespace qrs
