#include <doctest.h>

#include <cmath>

#include "oracle.hpp"
#include "qrs/bootstrap.hpp"
#include "qrs/error.hpp"
#include "qrs/simulation.hpp"

using namespace qrs;

namespace {

struct Setup {
  Dataset data;
  CopulaParamGrid copula = CopulaParamGrid::uniform(-0.3, 0.9, 0.1);
  QuantileGrid fine = QuantileGrid::percentiles();
  QuantileGrid coarse = QuantileGrid::deciles();
  QrsFit fit;
};

Setup make_setup(std::size_t n, std::uint64_t seed, bool refined = false) {
  Setup s;
  DgpConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  s.data = simulate_dgp(cfg).data;
  s.fit = refined ? estimate_qrs_refined(s.data, s.copula, s.fine, s.coarse, 3)
                  : estimate_qrs_reduced(s.data, s.copula, s.fine, s.coarse);
  return s;
}

}  // namespace

TEST_CASE("exponential weights") {
  const Eigen::VectorXd w = draw_weights(1000000, 77);
  const double mean = w.mean();
  const double var = (w.array() - mean).square().sum() / static_cast<double>(w.size() - 1);
  CHECK(std::abs(mean - 1.0) <= 0.005);
  CHECK(std::abs(var - 1.0) <= 0.01);
  CHECK(w.minCoeff() > 0.0);
  CHECK(draw_weights(1000, 5) == draw_weights(1000, 5));
  CHECK(draw_weights(1000, 5) != draw_weights(1000, 6));
  const Eigen::VectorXd small = draw_weights(20000, 3);
  CHECK(std::abs(small.mean() - 1.0) <= 3.0 * std::sqrt(1.0 / 20000.0));
}

TEST_CASE("unit weights reproduce the reduced-grid point estimates") {
  const Setup s = make_setup(1500, 21);
  BootstrapOptions opts;
  opts.draws = 2;
  opts.unit_weights = true;
  const BootstrapRun run = bootstrap_qrs(s.data, s.fit, s.copula, s.fine, s.coarse, opts);
  REQUIRE(run.invalid == 0);
  for (const auto& d : run.draws) {
    CHECK(d.theta_star == s.fit.theta_hat);
    CHECK(d.beta_star == s.fit.beta);
    CHECK(d.gamma_star == s.fit.propensity.gamma);
  }
}

TEST_CASE("unit weights reproduce the refined point estimates") {
  const Setup s = make_setup(1500, 22, true);
  BootstrapOptions opts;
  opts.draws = 1;
  opts.unit_weights = true;
  opts.variant = BootstrapVariant::Refined;
  const BootstrapRun run = bootstrap_qrs(s.data, s.fit, s.copula, s.fine, s.coarse, opts);
  REQUIRE(run.invalid == 0);
  CHECK(run.draws[0].theta_star == s.fit.theta_hat);
  CHECK(run.draws[0].beta_star == s.fit.beta);
  CHECK(run.draws[0].candidates == s.fit.candidates);
}

TEST_CASE("weighted draws: spread, determinism and schedule independence") {
  const Setup s = make_setup(1500, 23);
  BootstrapOptions opts;
  opts.draws = 6;
  opts.seed = 4;
  opts.threads = 1;
  const BootstrapRun a = bootstrap_qrs(s.data, s.fit, s.copula, s.fine, s.coarse, opts);
  opts.threads = 3;
  const BootstrapRun b = bootstrap_qrs(s.data, s.fit, s.copula, s.fine, s.coarse, opts);
  REQUIRE(a.invalid == 0);
  bool any_differs = false;
  for (std::size_t j = 0; j < opts.draws; ++j) {
    CHECK(a.draws[j].theta_star == b.draws[j].theta_star);
    CHECK(a.draws[j].beta_star == b.draws[j].beta_star);
    CHECK(a.draws[j].seed == b.draws[j].seed);
    any_differs = any_differs || a.draws[j].beta_star != s.fit.beta;
  }
  CHECK(any_differs);
}

TEST_CASE("a bootstrap cell solved through globs equals the weighted cold optimum") {
  const Setup s = make_setup(2500, 24);
  const Eigen::VectorXd w = draw_weights(s.data.n(), 9);
  const PropensityModel m = fit_logit(s.data, &w);
  const ParticipantSample sample = ParticipantSample::from(s.data, predict_propensity(m, s.data), &w);
  for (std::size_t a : {0u, 5u, 12u}) {
    for (std::size_t r : {0u, 4u, 8u}) {
      const RqrProblem p = make_problem(sample, s.coarse[r], s.copula[a]);
      const Eigen::VectorXd prelim = s.fit.coarse_betas[a].row(static_cast<Eigen::Index>(r)).transpose();
      const PreprocessedSolution pre = solve_preprocessed(p, prelim, 1.0, SolverConfig{});
      const RqrSolution cold = solve_interior_point(p, SolverConfig{});
      const double f_pre = oracle::objective(p, pre.solution.beta);
      CHECK(std::abs(f_pre - cold.objective) <= 1e-6 * cold.objective);
    }
  }
}

TEST_CASE("bands from order statistics") {
  std::vector<BootstrapDraw> draws(100);
  for (std::size_t j = 0; j < draws.size(); ++j) {
    draws[j].valid = true;
    draws[j].theta_star = static_cast<double>((j * 37) % 100 + 1);  // a permutation of 1..100
    draws[j].beta_star = Eigen::MatrixXd::Constant(2, 2, 0.25);
  }
  const Bands bands = confidence_bands(draws, {0.3, 0.7}, 0.9);
  REQUIRE(bands.rows.size() == 1 + 2 * 2);
  CHECK(bands.rows[0].coef == "theta");
  CHECK(bands.rows[0].lo == 5.0);
  CHECK(bands.rows[0].hi == 95.0);
  for (std::size_t i = 1; i < bands.rows.size(); ++i) {
    CHECK(bands.rows[i].lo == 0.25);
    CHECK(bands.rows[i].hi == 0.25);
  }
  CHECK(bands.rows[1].tau == 0.3);
  CHECK(bands.rows[4].coef == "beta_1");

  draws[0].valid = false;
  draws[1].valid = false;
  CHECK(confidence_bands(draws, {0.3, 0.7}, 0.9).invalid == 2);
  for (auto& d : draws) d.valid = false;
  CHECK_THROWS_AS(confidence_bands(draws, {0.3, 0.7}, 0.9), ValidationError);
  CHECK_THROWS_AS(confidence_bands(draws, {0.3, 0.7}, 1.0), ValidationError);
}

TEST_CASE("run-level checks") {
  const Setup s = make_setup(800, 25);
  BootstrapOptions opts;
  opts.draws = 1;
  Dataset other = s.data;
  other.z1(0, 0) += 1.0;
  CHECK_THROWS_AS(bootstrap_qrs(other, s.fit, s.copula, s.fine, s.coarse, opts), ValidationError);

  QrsFit no_coarse = s.fit;
  no_coarse.coarse_betas.clear();
  CHECK_THROWS_AS(bootstrap_qrs(s.data, no_coarse, s.copula, s.fine, s.coarse, opts), ValidationError);

  CHECK_THROWS_AS(bootstrap_qrs(s.data, s.fit, CopulaParamGrid::uniform(-0.3, 0.8, 0.1), s.fine, s.coarse, opts),
                  ValidationError);

  // Every draw fails when the fit's propensity start has the wrong length.
  QrsFit broken = s.fit;
  broken.propensity.gamma = Eigen::VectorXd::Zero(1);
  opts.draws = 3;
  CHECK_THROWS_AS(bootstrap_qrs(s.data, broken, s.copula, s.fine, s.coarse, opts), NumericalError);
}
