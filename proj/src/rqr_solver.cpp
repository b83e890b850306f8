#include "qrs/rqr_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "qrs/error.hpp"

namespace qrs {

namespace {

constexpr double kStepFactor = 0.99995;
constexpr double kBig = 1e20;

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double step = kBig;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) step = std::min(step, -v(i) / dv(i));
  }
  return step;
}

// Rows picked greedily in the given order, skipping rows (numerically) in
// the span of those already accepted.
std::vector<Eigen::Index> independent_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& order) {
  const Eigen::Index p = x.cols();
  std::vector<Eigen::Index> picked;
  std::vector<Eigen::VectorXd> q;
  for (Eigen::Index i : order) {
    Eigen::VectorXd v = x.row(i).transpose();
    const double norm0 = v.norm();
    if (norm0 == 0.0) continue;
    for (const auto& qj : q) v -= qj.dot(v) * qj;
    for (const auto& qj : q) v -= qj.dot(v) * qj;
    const double norm1 = v.norm();
    if (norm1 > 1e-9 * norm0) {
      q.push_back(v / norm1);
      picked.push_back(i);
      if (static_cast<Eigen::Index>(picked.size()) == p) break;
    }
  }
  return picked;
}

}  // namespace

void RqrProblem::validate() const {
  const Eigen::Index n_obs = y.size();
  if (x.rows() != n_obs || u.size() != n_obs || w.size() != n_obs) {
    throw ValidationError("rqr problem: dimension mismatch between y, x, u and w");
  }
  if (x.cols() == 0) throw ValidationError("rqr problem: design has no columns");
  if (n_obs < x.cols()) throw ValidationError("rqr problem: fewer observations than coefficients");
  for (Eigen::Index i = 0; i < n_obs; ++i) {
    if (!(u(i) > 0.0 && u(i) < 1.0)) {
      std::ostringstream msg;
      msg << "rqr problem: quantile index u[" << i << "] = " << u(i) << " outside (0, 1)";
      throw ValidationError(msg.str());
    }
    if (!(w(i) > 0.0) || !std::isfinite(w(i))) throw ValidationError("rqr problem: weights must be positive");
  }
  if (!y.allFinite() || !x.allFinite()) throw ValidationError("rqr problem: non-finite data");
}

double rqr_objective(const RqrProblem& problem, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd r = problem.y - problem.x * beta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) total += problem.w(i) * rotated_check_loss(r(i), problem.u(i));
  return total;
}

Eigen::VectorXd solve_basis(const RqrProblem& problem, const std::vector<Eigen::Index>& basis) {
  const Eigen::Index p = problem.k();
  Eigen::MatrixXd xh(p, p);
  Eigen::VectorXd yh(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    xh.row(j) = problem.x.row(basis[static_cast<std::size_t>(j)]);
    yh(j) = problem.y(basis[static_cast<std::size_t>(j)]);
  }
  return Eigen::PartialPivLU<Eigen::MatrixXd>(xh).solve(yh);
}

VertexResult crossover_to_vertex(const RqrProblem& problem, const Eigen::VectorXd& beta, int max_pivots) {
  const Eigen::Index n = problem.n();
  const Eigen::Index p = problem.k();
  const auto& y = problem.y;
  const auto& x = problem.x;
  const auto& u = problem.u;
  const auto& w = problem.w;
  const double rtol = 1e-11 * std::max(1.0, y.cwiseAbs().maxCoeff());

  VertexResult out;
  {
    const Eigen::VectorXd r = y - x * beta;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    auto by_abs = [&r](Eigen::Index a, Eigen::Index b) {
      const double ra = std::abs(r(a));
      const double rb = std::abs(r(b));
      return ra < rb || (ra == rb && a < b);
    };
    const auto head = std::min<std::size_t>(order.size(), static_cast<std::size_t>(4 * p + 8));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(head), order.end(), by_abs);
    std::vector<Eigen::Index> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(head));
    out.basis = independent_rows(x, first);
    if (static_cast<Eigen::Index>(out.basis.size()) < p) {
      std::sort(order.begin(), order.end(), by_abs);
      out.basis = independent_rows(x, order);
    }
    if (static_cast<Eigen::Index>(out.basis.size()) < p) {
      throw ValidationError("rqr problem: design matrix is rank deficient");
    }
  }

  Eigen::VectorXd coef(n);
  std::vector<Eigen::Index> zero_resid;
  std::vector<std::pair<double, Eigen::Index>> breaks;
  std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
  for (;;) {
    std::sort(out.basis.begin(), out.basis.end());
    std::fill(in_basis.begin(), in_basis.end(), 0);
    Eigen::MatrixXd xh(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
      xh.row(j) = x.row(out.basis[static_cast<std::size_t>(j)]);
      in_basis[static_cast<std::size_t>(out.basis[static_cast<std::size_t>(j)])] = 1;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(xh);
    out.beta = solve_basis(problem, out.basis);
    Eigen::VectorXd r = y - x * out.beta;
    for (Eigen::Index j : out.basis) r(j) = 0.0;
    out.objective = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) out.objective += w(i) * rotated_check_loss(r(i), u(i));

    const Eigen::MatrixXd binv = lu.inverse();
    const Eigen::MatrixXd g = x * binv;  // row i: rate of r_i along each edge

    zero_resid.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)]) {
        coef(i) = 0.0;
      } else if (r(i) > rtol) {
        coef(i) = w(i) * u(i);
      } else if (r(i) < -rtol) {
        coef(i) = -w(i) * (1.0 - u(i));
      } else {
        coef(i) = 0.0;
        zero_resid.push_back(i);
      }
    }
    const Eigen::VectorXd lin = g.transpose() * coef;
    const Eigen::VectorXd mass = g.cwiseAbs().transpose() * w;

    double best_slope = 0.0;
    Eigen::Index best_j = -1;
    double best_sign = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const Eigen::Index bj = out.basis[static_cast<std::size_t>(j)];
      double zpos = 0.0;
      double zneg = 0.0;
      for (Eigen::Index i : zero_resid) {
        zpos += w(i) * rotated_check_loss(g(i, j), u(i));
        zneg += w(i) * rotated_check_loss(-g(i, j), u(i));
      }
      const double tol = 1e-11 * (mass(j) + w(bj));
      const double up = lin(j) + zpos + w(bj) * u(bj);
      const double down = -lin(j) + zneg + w(bj) * (1.0 - u(bj));
      if (up < -tol && up < best_slope) {
        best_slope = up;
        best_j = j;
        best_sign = 1.0;
      }
      if (down < -tol && down < best_slope) {
        best_slope = down;
        best_j = j;
        best_sign = -1.0;
      }
    }
    if (best_j < 0) {
      out.certified = true;
      return out;
    }
    if (out.pivots >= max_pivots) return out;

    breaks.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)] || std::abs(r(i)) <= rtol) continue;
      const double rate = best_sign * g(i, best_j);
      if (r(i) * rate < 0.0) breaks.emplace_back(-r(i) / rate, i);
    }
    std::sort(breaks.begin(), breaks.end());
    double slope = best_slope;
    Eigen::Index entering = -1;
    for (const auto& [t, i] : breaks) {
      slope += w(i) * std::abs(g(i, best_j));
      if (slope >= 0.0) {
        entering = i;
        break;
      }
    }
    if (entering < 0) return out;
    out.basis[static_cast<std::size_t>(best_j)] = entering;
    ++out.pivots;
  }
}

RqrSolution solve_interior_point(const RqrProblem& problem, const SolverConfig& config,
                                 const Eigen::VectorXd* warm_start) {
  problem.validate();
  const Eigen::Index n = problem.n();
  const Eigen::Index p = problem.k();
  const double eps = config.gap_tolerance;

  // Dual LP in box form:  min c'x  s.t.  A'x = b,  0 <= x <= 1, with the
  // rows of A the weighted design rows and c the negated weighted outcomes.
  // The multipliers y of the equality constraints are minus the coefficients.
  const Eigen::MatrixXd a = problem.x.array().colwise() * problem.w.array();
  const Eigen::VectorXd c = -(problem.w.array() * problem.y.array()).matrix();
  Eigen::VectorXd x = (1.0 - problem.u.array()).matrix();
  const Eigen::VectorXd b = a.transpose() * x;

  Eigen::MatrixXd ada(p, p);
  Eigen::MatrixXd scaled(n, p);
  auto factor = [&](const Eigen::VectorXd& d) {
    scaled = a.array().colwise() * d.array().sqrt();
    ada.setZero();
    ada.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(ada);
    if (llt.info() != Eigen::Success) {
      Eigen::MatrixXd jittered = ada.selfadjointView<Eigen::Lower>();
      jittered.diagonal().array() += 1e-12 * (1.0 + jittered.diagonal().cwiseAbs().maxCoeff());
      llt.compute(jittered);
      if (llt.info() != Eigen::Success) throw ValidationError("rqr problem: design matrix is rank deficient");
    }
    return llt;
  };

  Eigen::VectorXd y(p);
  if (warm_start != nullptr) {
    if (warm_start->size() != p) throw ValidationError("rqr solver: warm start has wrong length");
    y = -*warm_start;
  } else {
    y = factor(Eigen::VectorXd::Ones(n)).solve(a.transpose() * c);
  }

  Eigen::VectorXd s = c - a * y;
  Eigen::VectorXd z(n);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double nudge = std::abs(s(i)) < eps ? eps : 0.0;
    z(i) = std::max(s(i), 0.0) + nudge;
    v(i) = std::max(-s(i), 0.0) + nudge;
  }
  s = (1.0 - x.array()).matrix();
  double gap = z.dot(x) + v.dot(s);

  RqrSolution sol;
  Eigen::VectorXd best_beta = -y;
  double best_obj = rqr_objective(problem, best_beta);
  sol.objective_trace.reserve(static_cast<std::size_t>(config.max_iterations));

  Eigen::VectorXd d(n), dx(n), ds(n), dy(p), dz(n), dv(n), rhs(p), dr(n), proj(n);
  int it = 0;
  while (gap > eps && it < config.max_iterations) {
    ++it;
    d = (z.array() / x.array() + v.array() / s.array()).inverse();
    ds = z - v;
    dz = d.cwiseProduct(ds);
    dy = b - a.transpose() * x + a.transpose() * dz;
    rhs = dy;
    const auto llt = factor(d);
    dy = llt.solve(dy);
    ds = a * dy - ds;
    dx = d.cwiseProduct(ds);
    ds = -dx;
    dz = -(z.array() * (dx.array() / x.array() + 1.0)).matrix();
    dv = -(v.array() * (ds.array() / s.array() + 1.0)).matrix();
    double step_p = std::min(kStepFactor * std::min(max_step(x, dx), max_step(s, ds)), 1.0);
    double step_d = std::min(kStepFactor * std::min(max_step(z, dz), max_step(v, dv)), 1.0);

    if (std::min(step_p, step_d) < 1.0) {
      // Mehrotra corrector with centring parameter from the affine step.
      double mu = z.dot(x) + v.dot(s);
      const double g = mu + step_p * dx.dot(z) + step_d * dz.dot(x) + step_p * step_d * dx.dot(dz) +
                       step_p * ds.dot(v) + step_d * dv.dot(s) + step_p * step_d * ds.dot(dv);
      mu = mu * std::pow(g / mu, 3) / (2.0 * static_cast<double>(n));
      dr = d.array() * (mu * (s.array().inverse() - x.array().inverse()) + dx.array() * dz.array() / x.array() -
                        ds.array() * dv.array() / s.array());
      dy = llt.solve(rhs + a.transpose() * dr);
      proj = a * dy;
      const Eigen::ArrayXd dxdz = dx.array() * dz.array();
      const Eigen::ArrayXd dsdv = ds.array() * dv.array();
      dx = (d.array() * (proj.array() - z.array() + v.array()) - dr.array()).matrix();
      ds = -dx;
      dz = (-z.array() + (mu - z.array() * dx.array() - dxdz) / x.array()).matrix();
      dv = (-v.array() + (mu - v.array() * ds.array() - dsdv) / s.array()).matrix();
      step_p = std::min(kStepFactor * std::min(max_step(x, dx), max_step(s, ds)), 1.0);
      step_d = std::min(kStepFactor * std::min(max_step(z, dz), max_step(v, dv)), 1.0);
    }
    x += step_p * dx;
    s += step_p * ds;
    y += step_d * dy;
    z += step_d * dz;
    v += step_d * dv;
    gap = z.dot(x) + v.dot(s);

    const Eigen::VectorXd beta_it = -y;
    const double obj = rqr_objective(problem, beta_it);
    if (obj <= best_obj) {
      best_obj = obj;
      best_beta = beta_it;
    }
    sol.objective_trace.push_back(best_obj);
  }

  sol.iterations = it;
  sol.duality_gap = gap;
  sol.converged = gap <= eps;
  sol.beta = best_beta;
  sol.objective = best_obj;

  if (config.polish) {
    const int max_pivots = 50 + 10 * static_cast<int>(p);
    VertexResult vx = crossover_to_vertex(problem, best_beta, max_pivots);
    sol.pivots = vx.pivots;
    if (vx.certified || vx.objective <= best_obj) {
      sol.beta = std::move(vx.beta);
      sol.objective = vx.objective;
      sol.vertex = vx.certified;
      if (vx.certified) {
        sol.basis = std::move(vx.basis);
        sol.converged = true;
      }
    }
  }
  return sol;
}

}  // namespace qrs
