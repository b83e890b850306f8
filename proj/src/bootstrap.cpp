#include "qrs/bootstrap.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "qrs/error.hpp"
#include "qrs/parallel.hpp"
#include "qrs/random.hpp"

namespace qrs {

namespace {

using Clock = std::chrono::steady_clock;

void check_fit(const QrsFit& fit, const CopulaParamGrid& copula_grid, const QuantileGrid& fine_grid,
               const QuantileGrid& coarse_grid) {
  if (fit.coarse_betas.empty()) {
    throw ValidationError("bootstrap needs a fit with stored coarse-grid estimates (alg2 or alg3)");
  }
  if (fit.theta_grid != copula_grid.values() || fit.coarse_grid != coarse_grid.values() ||
      fit.fine_grid != fine_grid.values()) {
    throw ValidationError("bootstrap grids differ from the grids used for the fit");
  }
  if (fit.coarse_betas.size() != copula_grid.size()) {
    throw ValidationError("fit holds coarse estimates for a different copula grid");
  }
  for (const auto& b : fit.coarse_betas) {
    if (b.rows() != static_cast<Eigen::Index>(coarse_grid.size())) {
      throw ValidationError("fit holds coarse estimates for a different quantile grid");
    }
  }
}

}  // namespace

Eigen::VectorXd draw_weights(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    double v = 0.0;
    while (!(v > 0.0)) v = expo(rng);
    w(i) = v;
  }
  return w;
}

BootstrapDraw bootstrap_draw(const Dataset& data, const QrsFit& fit, const CopulaParamGrid& copula_grid,
                             const QuantileGrid& fine_grid, const QuantileGrid& coarse_grid,
                             const Eigen::VectorXd& weights, const BootstrapOptions& options) {
  const auto t0 = Clock::now();
  const SolverConfig& solver = options.estimator.solver;
  const InstrumentConfig& instr = options.estimator.instrument;
  BootstrapDraw draw;

  LogitOptions logit;
  logit.start = fit.propensity.gamma;
  const PropensityModel model = fit_logit(data, &weights, logit);
  if (!model.converged) throw NumericalError("weighted propensity fit did not converge: " + model.message);
  draw.gamma_star = model.gamma;
  const ParticipantSample sample = ParticipantSample::from(data, predict_propensity(model, data), &weights);

  // Coarse cells, each warm-started from the point estimate of the same cell.
  const std::size_t a_count = copula_grid.size();
  std::vector<Eigen::MatrixXd> coarse(a_count);
  std::vector<double> profile(a_count);
  for (std::size_t a = 0; a < a_count; ++a) {
    coarse[a].resize(static_cast<Eigen::Index>(coarse_grid.size()), sample.x.cols());
    for (std::size_t r = 0; r < coarse_grid.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      const RqrProblem problem = make_problem(sample, coarse_grid[r], copula_grid[a]);
      const Eigen::VectorXd prelim = fit.coarse_betas[a].row(row).transpose();
      try {
        coarse[a].row(row) = solve_preprocessed(problem, prelim, solver.m_init_bootstrap, solver).solution.beta.transpose();
      } catch (const Error& e) {
        std::ostringstream msg;
        msg << "cell (r=" << r << ", a=" << a << "): " << e.what();
        throw NumericalError(msg.str());
      }
    }
    profile[a] = qrs_objective(sample, coarse[a], copula_grid[a], coarse_grid, instr);
  }

  auto fine_at = [&](std::size_t a) {
    const auto prelims = coarse_preliminaries(fine_grid, coarse_grid, fit.coarse_betas[a]);
    ProcessOptions popt;
    popt.m0 = solver.m_init_bootstrap;
    popt.preliminary = &prelims;
    return rqr_process(sample, copula_grid[a], fine_grid, solver, popt).beta;
  };

  if (options.variant == BootstrapVariant::Reduced) {
    const std::size_t a_star = argmin_first(profile);
    draw.theta_star = copula_grid[a_star];
    draw.beta_star = fine_at(a_star);
  } else {
    const std::vector<std::size_t> chosen = smallest_indices(profile, options.p);
    std::vector<Eigen::MatrixXd> betas;
    std::vector<double> objectives;
    for (std::size_t a : chosen) {
      betas.push_back(fine_at(a));
      objectives.push_back(qrs_objective(sample, betas.back(), copula_grid[a], fine_grid, instr));
      draw.candidates.push_back(copula_grid[a]);
    }
    const std::size_t best = argmin_first(objectives);
    draw.theta_star = copula_grid[chosen[best]];
    draw.beta_star = std::move(betas[best]);
  }
  draw.valid = true;
  draw.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return draw;
}

BootstrapRun bootstrap_qrs(const Dataset& data, const QrsFit& fit, const CopulaParamGrid& copula_grid,
                           const QuantileGrid& fine_grid, const QuantileGrid& coarse_grid,
                           const BootstrapOptions& options) {
  const auto t0 = Clock::now();
  check_fit(fit, copula_grid, fine_grid, coarse_grid);
  if (fit.data_hash != dataset_hash(data)) {
    throw ValidationError("dataset does not match the data the fit was estimated on (hash mismatch)");
  }
  if (options.variant == BootstrapVariant::Refined && (options.p == 0 || options.p > copula_grid.size())) {
    throw ValidationError("P must lie in [1, A]");
  }
  options.estimator.solver.validate();

  BootstrapRun run;
  run.draws.resize(options.draws);
  parallel_for(options.draws, options.threads, [&](std::size_t j) {
    const std::uint64_t seed = derive_seed(options.seed, j, 0xB0075);
    BootstrapDraw draw;
    try {
      const Eigen::VectorXd w =
          options.unit_weights ? Eigen::VectorXd::Ones(static_cast<Eigen::Index>(data.n())) : draw_weights(data.n(), seed);
      draw = bootstrap_draw(data, fit, copula_grid, fine_grid, coarse_grid, w, options);
    } catch (const std::exception& e) {
      draw = BootstrapDraw{};
      draw.valid = false;
      draw.error = e.what();
    }
    draw.index = j;
    draw.seed = seed;
    run.draws[j] = std::move(draw);
  });
  for (const auto& d : run.draws) run.invalid += d.valid ? 0 : 1;
  if (run.invalid * 10 > options.draws) {
    std::ostringstream msg;
    msg << run.invalid << " of " << options.draws << " bootstrap draws failed";
    for (const auto& d : run.draws) {
      if (!d.valid) {
        msg << "; first failure (draw " << d.index << "): " << d.error;
        break;
      }
    }
    throw NumericalError(msg.str());
  }
  run.seconds_total = std::chrono::duration<double>(Clock::now() - t0).count();
  return run;
}

Bands confidence_bands(const std::vector<BootstrapDraw>& draws, const std::vector<double>& fine_grid, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0, 1)");
  std::vector<const BootstrapDraw*> ok;
  for (const auto& d : draws) {
    if (d.valid) ok.push_back(&d);
  }
  Bands bands;
  bands.valid = ok.size();
  bands.invalid = draws.size() - ok.size();
  if (ok.empty()) throw ValidationError("no valid bootstrap draws");
  if (ok.size() < 2) throw ValidationError("confidence bands need at least two valid draws");

  const double n = static_cast<double>(ok.size());
  const auto lo_rank = static_cast<std::size_t>(std::max(1.0, std::ceil(n * (1.0 - level) / 2.0 - 1e-9)));
  const auto hi_rank = static_cast<std::size_t>(std::min(n, std::floor(n * (1.0 + level) / 2.0 + 1e-9)));
  std::vector<double> values(ok.size());
  auto interval = [&](double tau, const std::string& coef) {
    std::sort(values.begin(), values.end());
    bands.rows.push_back({tau, coef, values[lo_rank - 1], values[hi_rank - 1]});
  };

  for (std::size_t j = 0; j < ok.size(); ++j) values[j] = ok[j]->theta_star;
  interval(std::numeric_limits<double>::quiet_NaN(), "theta");

  const Eigen::Index k = ok.front()->beta_star.cols();
  for (std::size_t q = 0; q < fine_grid.size(); ++q) {
    for (Eigen::Index c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < ok.size(); ++j) values[j] = ok[j]->beta_star(static_cast<Eigen::Index>(q), c);
      interval(fine_grid[q], "beta_" + std::to_string(c));
    }
  }
  return bands;
}

}  // namespace qrs
