#include "qrs/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qrs/error.hpp"

namespace qrs {

namespace {

double median_in_place(std::vector<double>& v) {
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double med = v[mid];
  if (v.size() % 2 == 0) {
    med = 0.5 * (med + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return med;
}

// Empirical quantile: order statistic floor(level * n), clamped to the sample.
double order_statistic(std::vector<double> v, double level) {
  const auto n = static_cast<double>(v.size());
  auto pos = static_cast<std::size_t>(std::clamp(std::floor(level * n), 0.0, n - 1.0));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(pos), v.end());
  return v[pos];
}

}  // namespace

void assemble_globs(const RqrProblem& problem, const Eigen::VectorXd& beta_prelim, PreprocessState& state) {
  const Eigen::Index p = problem.k();
  const double span = std::max(problem.y.maxCoeff() - problem.y.minCoeff(), 1.0);

  state.x_low = Eigen::VectorXd::Zero(p);
  double mass_low = 0.0;
  for (Eigen::Index i : state.j_low) {
    const double c = problem.w(i) * (1.0 - problem.u(i));
    state.x_low += c * problem.x.row(i).transpose();
    mass_low += c;
  }
  state.x_low /= (1.0 - state.tau_bar);
  mass_low /= (1.0 - state.tau_bar);

  state.x_high = Eigen::VectorXd::Zero(p);
  double mass_high = 0.0;
  for (Eigen::Index i : state.j_high) {
    const double c = problem.w(i) * problem.u(i);
    state.x_high += c * problem.x.row(i).transpose();
    mass_high += c;
  }
  state.x_high /= state.tau_bar;
  mass_high /= state.tau_bar;

  // The glob outcome sits 10 outcome ranges (per unit of glob mass) beyond
  // the preliminary fit, so its residual keeps its sign near the optimum.
  state.y_low = state.x_low.dot(beta_prelim) - 10.0 * span * std::max(1.0, mass_low);
  state.y_high = state.x_high.dot(beta_prelim) + 10.0 * span * std::max(1.0, mass_high);
}

PreprocessState build_globs(const RqrProblem& problem, const Eigen::VectorXd& beta_prelim, double m) {
  if (!(m > 0.0)) throw ValidationError("preprocessing: m must be positive");
  if (beta_prelim.size() != problem.k() || !beta_prelim.allFinite()) {
    throw ValidationError("preprocessing: preliminary coefficients must be finite with length K");
  }
  const Eigen::Index n = problem.n();
  const double nd = static_cast<double>(n);
  const Eigen::VectorXd resid = problem.y - problem.x * beta_prelim;

  std::vector<double> work(resid.data(), resid.data() + n);
  const double center = median_in_place(work);
  for (auto& v : work) v = std::abs(v - center);
  double zeta = median_in_place(work) / 0.6745;
  if (!(zeta > 0.0) || !std::isfinite(zeta)) zeta = 1.0;

  std::vector<double> ratio(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ratio[static_cast<std::size_t>(i)] = resid(i) / zeta;

  PreprocessState state;
  state.m = m;
  state.band = m * std::sqrt(static_cast<double>(problem.k()) * nd);
  state.tau_bar = problem.u.mean();
  const double level_low = problem.u.minCoeff() - state.band / (2.0 * nd);
  const double level_high = problem.u.maxCoeff() + state.band / (2.0 * nd);
  state.clamped_low = level_low <= 0.0;
  state.clamped_high = level_high >= 1.0;
  const double cut_low = state.clamped_low ? -std::numeric_limits<double>::infinity() : order_statistic(ratio, level_low);
  const double cut_high = state.clamped_high ? std::numeric_limits<double>::infinity() : order_statistic(ratio, level_high);

  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = ratio[static_cast<std::size_t>(i)];
    if (r < cut_low) {
      state.j_low.push_back(i);
    } else if (r > cut_high) {
      state.j_high.push_back(i);
    } else {
      state.kept.push_back(i);
    }
  }
  assemble_globs(problem, beta_prelim, state);
  return state;
}

RqrProblem reduced_problem(const RqrProblem& problem, const PreprocessState& state) {
  const Eigen::Index p = problem.k();
  const bool has_low = !state.j_low.empty();
  const bool has_high = !state.j_high.empty();
  const auto rows = static_cast<Eigen::Index>(state.kept.size()) + (has_low ? 1 : 0) + (has_high ? 1 : 0);
  RqrProblem red{Eigen::VectorXd(rows), Eigen::MatrixXd(rows, p), Eigen::VectorXd(rows), Eigen::VectorXd(rows)};
  Eigen::Index r = 0;
  for (Eigen::Index i : state.kept) {
    red.y(r) = problem.y(i);
    red.x.row(r) = problem.x.row(i);
    red.u(r) = problem.u(i);
    red.w(r) = problem.w(i);
    ++r;
  }
  if (has_low) {
    red.y(r) = state.y_low;
    red.x.row(r) = state.x_low.transpose();
    red.u(r) = state.tau_bar;
    red.w(r) = 1.0;
    ++r;
  }
  if (has_high) {
    red.y(r) = state.y_high;
    red.x.row(r) = state.x_high.transpose();
    red.u(r) = state.tau_bar;
    red.w(r) = 1.0;
  }
  return red;
}

PreprocessedSolution solve_preprocessed(const RqrProblem& problem, const Eigen::VectorXd& beta_prelim, double m0,
                                        const SolverConfig& config) {
  problem.validate();
  const Eigen::Index n = problem.n();
  const Eigen::Index p = problem.k();
  const double sign_tol = 1e-10 * std::max(1.0, problem.y.cwiseAbs().maxCoeff());

  PreprocessedSolution out;
  double m = m0;
  PreprocessState state = build_globs(problem, beta_prelim, m);
  int total_iterations = 0;

  auto grow_band = [&] {
    m *= 2.0;
    ++out.m_doublings;
    state = build_globs(problem, beta_prelim, m);
  };

  while (out.rounds < config.max_preprocess_rounds) {
    if (static_cast<Eigen::Index>(state.kept.size()) < p) {
      if (state.kept.size() == static_cast<std::size_t>(n)) break;
      grow_band();
      continue;
    }
    const RqrProblem red = reduced_problem(problem, state);
    ++out.rounds;
    RqrSolution sol;
    try {
      sol = solve_interior_point(red, config, &beta_prelim);
    } catch (const ValidationError&) {
      // Kept rows alone can be rank deficient for tiny bands.
      grow_band();
      continue;
    }
    total_iterations += sol.iterations;
    const Eigen::VectorXd& beta = sol.beta;
    const auto kept_rows = static_cast<Eigen::Index>(state.kept.size());

    bool glob_broken = false;
    if (!state.j_low.empty() && state.y_low - state.x_low.dot(beta) >= -sign_tol) glob_broken = true;
    if (!state.j_high.empty() && state.y_high - state.x_high.dot(beta) <= sign_tol) glob_broken = true;
    if (sol.vertex) {
      for (Eigen::Index b : sol.basis) {
        if (b >= kept_rows) glob_broken = true;
      }
    }
    if (glob_broken) {
      grow_band();
      continue;
    }

    const Eigen::VectorXd resid = problem.y - problem.x * beta;
    std::vector<Eigen::Index> wrong_low;
    std::vector<Eigen::Index> wrong_high;
    for (Eigen::Index i : state.j_low) {
      if (resid(i) > sign_tol) wrong_low.push_back(i);
    }
    for (Eigen::Index i : state.j_high) {
      if (resid(i) < -sign_tol) wrong_high.push_back(i);
    }
    const auto bad = static_cast<double>(wrong_low.size() + wrong_high.size());

    if (bad <= config.bad_sign_allowance) {
      out.solution = std::move(sol);
      out.solution.iterations = total_iterations;
      if (out.solution.vertex) {
        std::vector<Eigen::Index> mapped;
        mapped.reserve(out.solution.basis.size());
        for (Eigen::Index b : out.solution.basis) mapped.push_back(state.kept[static_cast<std::size_t>(b)]);
        std::sort(mapped.begin(), mapped.end());
        out.solution.basis = std::move(mapped);
        out.solution.beta = solve_basis(problem, out.solution.basis);
      }
      out.solution.objective = rqr_objective(problem, out.solution.beta);
      out.kept = state.kept.size();
      out.final_m = m;
      return out;
    }
    if (bad < config.bad_sign_refactor_fraction * state.band) {
      auto drop = [](std::vector<Eigen::Index>& from, const std::vector<Eigen::Index>& which) {
        std::vector<Eigen::Index> rest;
        rest.reserve(from.size());
        std::set_difference(from.begin(), from.end(), which.begin(), which.end(), std::back_inserter(rest));
        from = std::move(rest);
      };
      drop(state.j_low, wrong_low);
      drop(state.j_high, wrong_high);
      state.kept.insert(state.kept.end(), wrong_low.begin(), wrong_low.end());
      state.kept.insert(state.kept.end(), wrong_high.begin(), wrong_high.end());
      std::sort(state.kept.begin(), state.kept.end());
      assemble_globs(problem, beta_prelim, state);
    } else {
      grow_band();
    }
  }

  out.solution = solve_interior_point(problem, config);
  out.solution.iterations += total_iterations;
  out.fell_back = true;
  out.kept = static_cast<std::size_t>(n);
  out.final_m = m;
  return out;
}

CellReport report_cold(const RqrSolution& sol) {
  CellReport r;
  r.converged = sol.converged;
  r.vertex = sol.vertex;
  r.cold = true;
  r.iterations = sol.iterations;
  return r;
}

CellReport report_preprocessed(const PreprocessedSolution& sol) {
  CellReport r = report_cold(sol.solution);
  r.cold = false;
  r.fell_back = sol.fell_back;
  r.rounds = sol.rounds;
  return r;
}

ProcessResult rqr_process(const ParticipantSample& sample, double theta, const QuantileGrid& grid,
                          const SolverConfig& config, const ProcessOptions& options) {
  const std::size_t q_count = grid.size();
  if (q_count == 0) throw ValidationError("quantile process: empty grid");
  const std::size_t start = options.start_at.value_or(grid.median_index());
  if (start >= q_count) throw ValidationError("quantile process: start index outside the grid");
  if (options.preliminary != nullptr && options.preliminary->size() != q_count) {
    throw ValidationError("quantile process: preliminary estimates do not match the grid");
  }

  ProcessResult out;
  out.beta.resize(static_cast<Eigen::Index>(q_count), sample.x.cols());
  out.cells.resize(q_count);

  auto stored = [&](std::size_t q) -> const Eigen::VectorXd* {
    if (options.preliminary == nullptr) return nullptr;
    const auto& entry = (*options.preliminary)[q];
    return entry ? &*entry : nullptr;
  };
  auto solve_cell = [&](std::size_t q, const Eigen::VectorXd* prelim) {
    try {
      const RqrProblem problem = make_problem(sample, grid[q], theta);
      if (prelim == nullptr) {
        const RqrSolution sol = solve_interior_point(problem, config);
        out.beta.row(static_cast<Eigen::Index>(q)) = sol.beta.transpose();
        out.cells[q] = report_cold(sol);
      } else {
        const PreprocessedSolution sol = solve_preprocessed(problem, *prelim, options.m0, config);
        out.beta.row(static_cast<Eigen::Index>(q)) = sol.solution.beta.transpose();
        out.cells[q] = report_preprocessed(sol);
      }
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "quantile index " << q << " (tau = " << grid[q] << ", theta = " << theta << "): " << e.what();
      throw NumericalError(msg.str());
    }
  };

  solve_cell(start, stored(start));
  Eigen::VectorXd neighbour;
  for (std::size_t q = start + 1; q < q_count; ++q) {
    const Eigen::VectorXd* prelim = stored(q);
    if (prelim == nullptr) {
      neighbour = out.beta.row(static_cast<Eigen::Index>(q - 1)).transpose();
      prelim = &neighbour;
    }
    solve_cell(q, prelim);
  }
  for (std::size_t q = start; q-- > 0;) {
    const Eigen::VectorXd* prelim = stored(q);
    if (prelim == nullptr) {
      neighbour = out.beta.row(static_cast<Eigen::Index>(q + 1)).transpose();
      prelim = &neighbour;
    }
    solve_cell(q, prelim);
  }
  return out;
}

}  // namespace qrs
