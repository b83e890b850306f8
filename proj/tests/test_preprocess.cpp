#include <doctest.h>

#include <cmath>
#include <random>

#include "oracle.hpp"
#include "qrs/error.hpp"
#include "qrs/copula.hpp"
#include "qrs/preprocess.hpp"
#include "qrs/propensity.hpp"
#include "qrs/sample.hpp"
#include "qrs/simulation.hpp"

using namespace qrs;

namespace {

struct Fixture {
  Simulation sim;
  ParticipantSample sample;
};

Fixture make_fixture(std::size_t n, int k, std::uint64_t seed) {
  DgpConfig cfg;
  cfg.n = n;
  cfg.k = k;
  cfg.seed = seed;
  Fixture f{simulate_dgp(cfg), {}};
  const PropensityModel m = fit_logit(f.sim.data);
  f.sample = ParticipantSample::from(f.sim.data, predict_propensity(m, f.sim.data));
  return f;
}

double rel_gap(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("rotated indices follow the conditional copula") {
  const Fixture f = make_fixture(600, 2, 1);
  const Eigen::VectorXd u = rotated_indices(f.sample, 0.3, 0.6);
  for (Eigen::Index i = 0; i < f.sample.n(); i += 37) {
    CHECK(u(i) == doctest::Approx(conditional_copula(0.3, f.sample.pscore(i), 0.6)).epsilon(1e-13));
  }
  const Eigen::VectorXd flat = rotated_indices(f.sample, 0.3, 0.0);
  CHECK((flat.array() == 0.3).all());
}

TEST_CASE("glob rows reproduce the subgradient of the collapsed observations") {
  const Fixture f = make_fixture(3000, 3, 2);
  const RqrProblem p = make_problem(f.sample, 0.4, 0.3);
  const RqrSolution sol = solve_interior_point(p, SolverConfig{});
  const PreprocessState st = build_globs(p, sol.beta, 0.5);
  REQUIRE_FALSE(st.j_low.empty());
  REQUIRE_FALSE(st.j_high.empty());
  CHECK(st.j_low.size() + st.j_high.size() + st.kept.size() == static_cast<std::size_t>(p.n()));
  CHECK(st.band == doctest::Approx(0.5 * std::sqrt(3.0 * static_cast<double>(p.n()))));
  Eigen::VectorXd lo = Eigen::VectorXd::Zero(3), hi = Eigen::VectorXd::Zero(3);
  for (auto i : st.j_low) lo += p.w(i) * (1.0 - p.u(i)) * p.x.row(i).transpose();
  for (auto i : st.j_high) hi += p.w(i) * p.u(i) * p.x.row(i).transpose();
  CHECK(((1.0 - st.tau_bar) * st.x_low - lo).norm() < 1e-9 * lo.norm());
  CHECK((st.tau_bar * st.x_high - hi).norm() < 1e-9 * hi.norm());
  CHECK(st.tau_bar == doctest::Approx(p.u.mean()));

  const RqrProblem red = reduced_problem(p, st);
  CHECK(red.n() == static_cast<Eigen::Index>(st.kept.size()) + 2);
  CHECK(red.u(red.n() - 1) == st.tau_bar);
  CHECK(red.w(red.n() - 2) == 1.0);
}

TEST_CASE("preprocessed solves equal the cold optimum") {
  const Fixture f = make_fixture(4000, 3, 3);
  const SolverConfig cfg;
  for (double tau : {0.05, 0.3, 0.5, 0.8, 0.97}) {
    for (double theta : {-0.8, 0.0, 0.55}) {
      const RqrProblem prev = make_problem(f.sample, tau, theta - 0.01);
      const RqrProblem p = make_problem(f.sample, tau, theta);
      const RqrSolution warm_src = solve_interior_point(prev, cfg);
      const RqrSolution cold = solve_interior_point(p, cfg);
      const PreprocessedSolution pre = solve_preprocessed(p, warm_src.beta, 0.5, cfg);
      CAPTURE(tau);
      CAPTURE(theta);
      CHECK(rel_gap(oracle::objective(p, pre.solution.beta), oracle::objective(p, cold.beta)) <= 1e-9);
      CHECK(pre.solution.beta == cold.beta);
      CHECK(pre.kept < static_cast<std::size_t>(p.n()));
    }
  }
}

TEST_CASE("a poor preliminary still ends at the optimum") {
  const Fixture f = make_fixture(3000, 2, 4);
  const RqrProblem p = make_problem(f.sample, 0.9, 0.7);
  const RqrSolution cold = solve_interior_point(p, SolverConfig{});
  Eigen::VectorXd bad = cold.beta;
  bad(1) += 2.0;
  SolverConfig cfg;
  const PreprocessedSolution pre = solve_preprocessed(p, bad, 0.5, cfg);
  CHECK(rel_gap(oracle::objective(p, pre.solution.beta), cold.objective) <= 1e-9);

  cfg.max_preprocess_rounds = 1;
  const PreprocessedSolution capped = solve_preprocessed(p, bad, 0.5, cfg);
  CHECK(rel_gap(oracle::objective(p, capped.solution.beta), cold.objective) <= 1e-9);
}

TEST_CASE("weighted problems") {
  Fixture f = make_fixture(3000, 2, 5);
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> expo(1.0);
  for (Eigen::Index i = 0; i < f.sample.n(); ++i) f.sample.weights(i) = expo(rng);
  const RqrProblem p = make_problem(f.sample, 0.2, -0.4);
  const RqrSolution cold = solve_interior_point(p, SolverConfig{});
  const RqrSolution near = solve_interior_point(make_problem(f.sample, 0.21, -0.4), SolverConfig{});
  const PreprocessedSolution pre = solve_preprocessed(p, near.beta, 1.0, SolverConfig{});
  CHECK(rel_gap(oracle::objective(p, pre.solution.beta), cold.objective) <= 1e-9);
}

TEST_CASE("quantile process matches cell-by-cell cold solves") {
  const Fixture f = make_fixture(2000, 2, 6);
  const QuantileGrid grid = QuantileGrid::percentiles();
  const ProcessResult proc = rqr_process(f.sample, 0.35, grid, SolverConfig{});
  REQUIRE(proc.beta.rows() == 99);
  int cold_cells = 0;
  for (std::size_t q = 0; q < grid.size(); ++q) {
    cold_cells += proc.cells[q].cold ? 1 : 0;
    CHECK(proc.cells[q].converged);
    if (q % 7 != 0) continue;
    const RqrProblem p = make_problem(f.sample, grid[q], 0.35);
    const RqrSolution cold = solve_interior_point(p, SolverConfig{});
    CHECK(rel_gap(oracle::objective(p, proc.beta.row(static_cast<Eigen::Index>(q)).transpose()), cold.objective) <= 1e-9);
  }
  CHECK(cold_cells == 1);
  CHECK(proc.cells[grid.median_index()].cold);
}

TEST_CASE("stored preliminaries replace the cold start") {
  const Fixture f = make_fixture(1500, 2, 7);
  const QuantileGrid grid = QuantileGrid::deciles();
  const ProcessResult first = rqr_process(f.sample, 0.2, grid, SolverConfig{});
  std::vector<std::optional<Eigen::VectorXd>> pre(grid.size());
  for (std::size_t r = 0; r < grid.size(); ++r) pre[r] = first.beta.row(static_cast<Eigen::Index>(r)).transpose();
  ProcessOptions opts;
  opts.preliminary = &pre;
  const ProcessResult second = rqr_process(f.sample, 0.21, grid, SolverConfig{}, opts);
  for (const auto& c : second.cells) CHECK_FALSE(c.cold);
  CHECK_THROWS_AS(rqr_process(f.sample, 0.2, grid, SolverConfig{}, ProcessOptions{std::size_t{20}, nullptr, 0.5}),
                  ValidationError);
}
