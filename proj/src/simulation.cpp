#include "qrs/simulation.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "qrs/copula.hpp"
#include "qrs/error.hpp"
#include "qrs/parallel.hpp"
#include "qrs/random.hpp"

namespace qrs {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

void DgpConfig::validate() const {
  if (n < 100) throw ValidationError("simulation needs n >= 100");
  if (k < 1) throw ValidationError("simulation needs k >= 1");
  if (!(theta_true > -1.0 && theta_true < 1.0)) {
    throw ValidationError("copula parameter must lie in (-1, 1) for the Gaussian family");
  }
}

Eigen::VectorXd TruthRecord::beta(double tau) const {
  Eigen::VectorXd out(k);
  out(0) = norm_quantile(tau);
  for (int j = 1; j < k; ++j) out(j) = tau * b[static_cast<std::size_t>(j - 1)];
  return out;
}

Simulation simulate_dgp(const DgpConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(cfg.n);
  const int k = cfg.k;
  const double rho = cfg.theta_true;

  Simulation sim;
  TruthRecord& truth = sim.truth;
  truth.theta_true = rho;
  truth.n = cfg.n;
  truth.k = k;
  truth.seed = cfg.seed;
  truth.constants_seed = cfg.constants_seed;
  {
    std::mt19937_64 rng(cfg.constants_seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int j = 1; j < k; ++j) truth.b.push_back(unit(rng));
    for (int j = 1; j < k; ++j) truth.g.push_back(unit(rng));
  }
  truth.gamma.resize(k + 1);
  truth.gamma(0) = -1.5;
  truth.gamma(1) = 2.0;
  for (int j = 1; j < k; ++j) truth.gamma(j + 1) = 0.1 * truth.g[static_cast<std::size_t>(j - 1)];

  Dataset& data = sim.data;
  data.y.resize(n);
  data.d.resize(cfg.n);
  data.x.resize(n, k);
  data.z1.resize(n, 1);
  data.z1_names = {"z1"};
  for (int j = 1; j < k; ++j) data.x_names.push_back("x" + std::to_string(j + 1));
  sim.u.resize(n);
  sim.v.resize(n);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> covariate(2.0, 3.0);
  const double spread = std::sqrt(1.0 - rho * rho);
  std::size_t participants = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e1 = normal(rng);
    const double e2 = normal(rng);
    const double z1 = normal(rng);
    const double u = norm_cdf(e1);
    const double v = norm_cdf(rho * e1 + spread * e2);
    data.x(i, 0) = 1.0;
    for (int j = 1; j < k; ++j) data.x(i, j) = covariate(rng);
    data.z1(i, 0) = z1;

    double index = truth.gamma(0) + truth.gamma(1) * z1;
    double outcome = e1;  // Phi^{-1}(U)
    for (int j = 1; j < k; ++j) {
      index += truth.gamma(j + 1) * data.x(i, j);
      outcome += u * truth.b[static_cast<std::size_t>(j - 1)] * data.x(i, j);
    }
    const int d = v <= logistic(index) ? 1 : 0;
    data.d[static_cast<std::size_t>(i)] = d;
    data.y(i) = d == 1 ? outcome : 0.0;
    participants += static_cast<std::size_t>(d);
    sim.u(i) = u;
    sim.v(i) = v;
  }
  data.n_participants = participants;
  return sim;
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::Baseline: return "baseline";
    case Algorithm::Alg1Repeated: return "alg1-repeated";
    case Algorithm::Alg2: return "alg2";
    case Algorithm::Alg3: return "alg3";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "baseline") return Algorithm::Baseline;
  if (name == "alg1-repeated" || name == "alg1") return Algorithm::Alg1Repeated;
  if (name == "alg2") return Algorithm::Alg2;
  if (name == "alg3") return Algorithm::Alg3;
  throw ValidationError("unknown algorithm '" + name + "' (expected baseline, alg1-repeated, alg2 or alg3)");
}

QrsFit run_algorithm(Algorithm algorithm, const Dataset& data, const CopulaParamGrid& copula_grid,
                     const QuantileGrid& fine_grid, const QuantileGrid& coarse_grid, std::size_t p,
                     const EstimatorOptions& options) {
  switch (algorithm) {
    case Algorithm::Baseline: return estimate_qrs_baseline(data, copula_grid, fine_grid, options);
    case Algorithm::Alg1Repeated: return estimate_qrs_process_per_theta(data, copula_grid, fine_grid, options);
    case Algorithm::Alg2: return estimate_qrs_reduced(data, copula_grid, fine_grid, coarse_grid, options);
    case Algorithm::Alg3: return estimate_qrs_refined(data, copula_grid, fine_grid, coarse_grid, p, options);
  }
  throw ValidationError("unknown algorithm");
}

ExperimentReport run_benchmark(const BenchmarkConfig& cfg) {
  if (cfg.sizes.empty() || cfg.algorithms.empty() || cfg.reps == 0) {
    throw ValidationError("benchmark needs at least one size, one algorithm and one rep");
  }
  const CopulaParamGrid copula_grid(cfg.copula_grid);
  const QuantileGrid fine(cfg.fine_grid, cfg.epsilon);
  const QuantileGrid coarse(cfg.coarse_grid, cfg.epsilon);
  const std::uint64_t constants_seed = derive_seed(cfg.seed, 0, 0xC0257);

  ExperimentReport report;
  report.theta_true = cfg.theta_true;
  for (const auto& [n, k] : cfg.sizes) {
    std::vector<std::vector<RepRecord>> per_rep(cfg.reps);
    parallel_for(cfg.reps, cfg.rep_threads, [&](std::size_t rep) {
      DgpConfig dgp;
      dgp.n = n;
      dgp.k = k;
      dgp.theta_true = cfg.theta_true;
      dgp.seed = derive_seed(cfg.seed, rep, static_cast<std::uint64_t>(n) * 1000 + static_cast<std::uint64_t>(k));
      dgp.constants_seed = constants_seed;
      const Simulation sim = simulate_dgp(dgp);
      for (Algorithm alg : cfg.algorithms) {
        RepRecord rec;
        rec.n = n;
        rec.k = k;
        rec.algorithm = alg;
        rec.rep = rep;
        rec.seed = dgp.seed;
        try {
          const auto t0 = Clock::now();
          const QrsFit fit = run_algorithm(alg, sim.data, copula_grid, fine, coarse, cfg.p, cfg.estimator);
          rec.seconds = seconds_since(t0);
          rec.theta_hat = fit.theta_hat;
          rec.unconverged = fit.diagnostics.unconverged;
          rec.ok = true;
        } catch (const std::exception& e) {
          rec.ok = false;
          rec.error = e.what();
        }
        per_rep[rep].push_back(rec);
      }
    });
    for (std::size_t ai = 0; ai < cfg.algorithms.size(); ++ai) {
      BenchRow row;
      row.n = n;
      row.k = k;
      row.algorithm = cfg.algorithms[ai];
      double sum_t = 0.0;
      double sum_theta = 0.0;
      double sum_sq = 0.0;
      for (std::size_t rep = 0; rep < cfg.reps; ++rep) {
        const RepRecord& rec = per_rep[rep][ai];
        if (!rec.ok) {
          ++row.failed;
          continue;
        }
        ++row.reps;
        sum_t += rec.seconds;
        sum_theta += rec.theta_hat;
        sum_sq += (rec.theta_hat - cfg.theta_true) * (rec.theta_hat - cfg.theta_true);
      }
      if (row.reps > 0) {
        const double r = static_cast<double>(row.reps);
        row.mean_seconds = sum_t / r;
        row.mean_theta = sum_theta / r;
        row.mse_theta = sum_sq / r;
      }
      report.rows.push_back(row);
    }
    for (auto& recs : per_rep) {
      for (auto& rec : recs) report.reps.push_back(std::move(rec));
    }
  }
  return report;
}

const char* implementation_name(int impl) {
  switch (impl) {
    case kPreprocessing: return "preprocessing";
    case kRestricted: return "restricted";
    case kUnrestricted: return "unrestricted";
  }
  return "unknown";
}

DiagnosticsReport numerical_diagnostics(const DiagnosticsConfig& cfg) {
  const CopulaParamGrid copula_grid(cfg.copula_grid);
  const QuantileGrid fine(cfg.fine_grid, cfg.epsilon);
  cfg.solver.validate();
  if (cfg.restricted_iterations < 1 || cfg.unrestricted_iterations < 1) {
    throw ValidationError("iteration limits must be positive");
  }
  const Simulation sim = simulate_dgp(cfg.dgp);
  const PropensityModel model = fit_logit(sim.data);
  if (!model.converged) throw NumericalError("propensity score estimation failed: " + model.message);
  const ParticipantSample sample = ParticipantSample::from(sim.data, predict_propensity(model, sim.data));

  const std::size_t a_count = copula_grid.size();
  const std::size_t q_count = fine.size();
  const Eigen::Index k = sample.x.cols();

  DiagnosticsReport rep;
  rep.copula_grid = copula_grid.values();
  rep.fine_grid = fine.values();
  rep.truth = sim.truth;
  rep.cells.resize(a_count * q_count);
  for (std::size_t a = 0; a < a_count; ++a) {
    for (std::size_t q = 0; q < q_count; ++q) {
      rep.cells[a * q_count + q].a = a;
      rep.cells[a * q_count + q].q = q;
    }
  }
  for (int impl = 0; impl < 3; ++impl) {
    rep.betas[impl].assign(a_count, Eigen::MatrixXd(static_cast<Eigen::Index>(q_count), k));
    rep.profile[impl].resize(a_count);
  }

  // Preprocessing implementation: the quantile process per theta with the
  // default solver settings.
  auto t0 = Clock::now();
  parallel_for(a_count, cfg.threads, [&](std::size_t a) {
    ProcessOptions popt;
    popt.m0 = cfg.solver.m_init_estimation;
    const ProcessResult proc = rqr_process(sample, copula_grid[a], fine, cfg.solver, popt);
    rep.betas[kPreprocessing][a] = proc.beta;
    for (std::size_t q = 0; q < q_count; ++q) {
      DiagCell& c = rep.cells[a * q_count + q];
      const RqrProblem problem = make_problem(sample, fine[q], copula_grid[a]);
      c.objective[kPreprocessing] = rqr_objective(problem, proc.beta.row(static_cast<Eigen::Index>(q)).transpose());
      c.converged[kPreprocessing] = proc.cells[q].converged;
      c.iterations[kPreprocessing] = proc.cells[q].iterations;
    }
  });
  rep.seconds[kPreprocessing] = seconds_since(t0);

  // Cold interior-point solves without the vertex crossover.
  for (int impl : {kRestricted, kUnrestricted}) {
    SolverConfig cold = cfg.solver;
    cold.polish = false;
    cold.max_iterations = impl == kRestricted ? cfg.restricted_iterations : cfg.unrestricted_iterations;
    t0 = Clock::now();
    parallel_for(a_count * q_count, cfg.threads, [&](std::size_t cell) {
      const std::size_t a = cell / q_count;
      const std::size_t q = cell % q_count;
      const RqrProblem problem = make_problem(sample, fine[q], copula_grid[a]);
      const RqrSolution sol = solve_interior_point(problem, cold);
      rep.betas[impl][a].row(static_cast<Eigen::Index>(q)) = sol.beta.transpose();
      DiagCell& c = rep.cells[cell];
      c.objective[impl] = rqr_objective(problem, sol.beta);
      c.converged[impl] = sol.converged;
      c.iterations[impl] = sol.iterations;
    });
    rep.seconds[impl] = seconds_since(t0);
  }

  for (int impl = 0; impl < 3; ++impl) {
    parallel_for(a_count, cfg.threads, [&](std::size_t a) {
      rep.profile[impl][a] = qrs_objective(sample, rep.betas[impl][a], copula_grid[a], fine, cfg.instrument);
    });
    rep.theta_index[impl] = argmin_first(rep.profile[impl]);
  }

  for (int impl : {kRestricted, kUnrestricted}) {
    DiagSummary& s = rep.summary[impl];
    s.min_ratio = std::numeric_limits<double>::infinity();
    for (const DiagCell& c : rep.cells) {
      const double diff = c.objective[impl] - c.objective[kPreprocessing];
      const double tau = fine[c.q];
      const double theta = copula_grid[c.a];
      if (c.objective[kPreprocessing] > 0.0) s.min_ratio = std::min(s.min_ratio, c.objective[impl] / c.objective[kPreprocessing]);
      if (!c.converged[impl]) ++s.unconverged;
      if (diff > cfg.threshold) {
        ++s.suboptimal;
        if (tau <= 0.1 + 1e-12 || tau >= 0.9 - 1e-12) ++s.outer_decile;
        if (tau > 0.4 + 1e-12 && tau <= 0.6 + 1e-12) ++s.middle_decile;
        if (std::abs(theta) >= 0.7 - 1e-12) ++s.extreme_theta;
        if (std::abs(theta) <= 0.2 + 1e-12) ++s.modest_theta;
      } else if (-diff > cfg.threshold) {
        ++s.preprocessing_worse;
      } else {
        ++s.equal;
      }
    }
  }
  return rep;
}

}  // namespace qrs
