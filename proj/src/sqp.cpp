#include "vrp/sqp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

namespace vrp {

namespace {

using Eigen::VectorXd;

double inf_norm(const VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

double l1_infeasibility(const VectorXd& ce, const VectorXd& ci) {
  double sum = ce.cwiseAbs().sum();
  for (Eigen::Index i = 0; i < ci.size(); ++i) sum += std::max(ci(i), 0.0);
  return sum;
}

// Relaxation of a subproblem whose linearized constraints admit no point at
// all: equalities get split slacks p - q, inequalities a one-sided slack t,
// all priced at gamma. The relaxed step minimizes the linearized l1 merit,
// so it reduces infeasibility as fast as the linear model allows.
QpProblem build_elastic(const QpProblem& qp, double gamma) {
  using Triplet = Eigen::Triplet<double>;
  const int n = qp.num_vars();
  const int me = qp.num_eq();
  const int mi = qp.num_ineq();
  const int n2 = n + 2 * me + mi;
  QpProblem e;

  std::vector<Triplet> ht;
  ht.reserve(static_cast<std::size_t>(qp.H.nonZeros()));
  for (int col = 0; col < qp.H.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.H, col); it; ++it) {
      ht.emplace_back(static_cast<int>(it.row()), col, it.value());
    }
  }
  e.H.resize(n2, n2);
  e.H.setFromTriplets(ht.begin(), ht.end());

  e.g.resize(n2);
  e.g.head(n) = qp.g;
  e.g.tail(2 * me + mi).setConstant(gamma);

  std::vector<Triplet> at;
  at.reserve(static_cast<std::size_t>(qp.A.nonZeros() + 2 * me));
  for (int col = 0; col < qp.A.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.A, col); it; ++it) {
      at.emplace_back(static_cast<int>(it.row()), col, it.value());
    }
  }
  for (int i = 0; i < me; ++i) {
    at.emplace_back(i, n + i, 1.0);
    at.emplace_back(i, n + me + i, -1.0);
  }
  e.A.resize(me, n2);
  e.A.setFromTriplets(at.begin(), at.end());
  e.b = qp.b;

  std::vector<Triplet> ct;
  ct.reserve(static_cast<std::size_t>(qp.C.nonZeros() + 2 * me + 2 * mi));
  for (int col = 0; col < qp.C.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.C, col); it; ++it) {
      ct.emplace_back(static_cast<int>(it.row()), col, it.value());
    }
  }
  for (int i = 0; i < mi; ++i) ct.emplace_back(i, n + 2 * me + i, -1.0);
  for (int j = 0; j < 2 * me + mi; ++j) {
    ct.emplace_back(mi + j, n + j, -1.0);
  }
  e.C.resize(mi + 2 * me + mi, n2);
  e.C.setFromTriplets(ct.begin(), ct.end());
  e.d = VectorXd::Zero(mi + 2 * me + mi);
  e.d.head(mi) = qp.d;
  return e;
}

}  // namespace

void NlpProblem::eq_values(const VectorXd& x, VectorXd& val) const {
  Eigen::SparseMatrix<double> jac;
  eq_constraints(x, val, jac);
}

void NlpProblem::ineq_values(const VectorXd& x, VectorXd& val) const {
  Eigen::SparseMatrix<double> jac;
  ineq_constraints(x, val, jac);
}

SqpResult SqpSolver::solve(NlpProblem& problem, const VectorXd& x0,
                           const SqpOptions& options) {
  const int n = problem.num_vars();
  const int me = problem.num_eq();
  const int mi = problem.num_ineq();
  if (x0.size() != n) {
    fail(ErrorCode::invalid_argument, "sqp start point has wrong size");
  }

  VectorXd x = x0;
  VectorXd y = VectorXd::Zero(me);
  VectorXd z = VectorXd::Zero(mi);
  double penalty = 1.0;

  QpProblem qp;
  SqpResult best;
  best.x = x;
  double best_score = std::numeric_limits<double>::infinity();
  bool qp_failed = false;
  std::deque<double> merit_history;

  VectorXd grad, ce, ci;
  int iter = 0;
  for (; iter <= options.max_iterations; ++iter) {
    problem.update_iterate(x);
    const double f = problem.objective(x);
    problem.objective_gradient(x, grad);
    problem.eq_constraints(x, ce, qp.A);
    problem.ineq_constraints(x, ci, qp.C);

    // First-order optimality at (x, y, z) with multipliers from the last
    // accepted subproblem.
    VectorXd stat = grad;
    if (me > 0) stat += qp.A.transpose() * y;
    if (mi > 0) stat += qp.C.transpose() * z;
    double comp = 0.0;
    for (int i = 0; i < mi; ++i) comp = std::max(comp, std::abs(z(i) * ci(i)));
    const double viol = std::max(inf_norm(ce), mi > 0 ? ci.maxCoeff() : 0.0);
    const double score =
        std::max({inf_norm(stat) / (1.0 + inf_norm(grad)),
                  std::max(viol, 0.0), comp});

    if (score < best_score) {
      best_score = score;
      best.x = x;
      best.eq_dual = y;
      best.ineq_dual = z;
      best.iterations = iter;
      best.kkt_residual = score;
      best.objective = f;
      best.constraint_violation = std::max(viol, 0.0);
    }
    if (score <= options.tolerance) {
      best.status = SqpStatus::optimal;
      return best;
    }
    if (iter == options.max_iterations) break;

    problem.hessian(x, y, z, qp.H);
    qp.g = grad;
    qp.b = -ce;
    qp.d = -ci;
    QpSolution sub = qp_.solve(qp, options.qp);

    const double infeas0 = l1_infeasibility(ce, ci);
    bool elastic = false;
    double lin_res = 0.0;
    if (sub.status == QpStatus::infeasible) {
      // A constraint with a nearly flat gradient can linearize into a demand
      // far beyond what the linearized dynamics deliver, leaving the
      // subproblem with no feasible point even though the problem itself has
      // one. Retry in relaxed form and escalate the slack price until the
      // step buys measurable infeasibility progress; give up only when none
      // is available, which marks a genuinely stuck iterate.
      double gamma = std::max(1e3, 10.0 * penalty);
      for (int round = 0; round < 3; ++round, gamma *= 10.0) {
        QpSolution esub = qp_.solve(build_elastic(qp, gamma), options.qp);
        if (esub.status == QpStatus::infeasible) break;
        lin_res = esub.x.tail(2 * me + mi).cwiseMax(0.0).sum();
        if (infeas0 - lin_res > 1e-4 * infeas0) {
          sub.status = esub.status;
          sub.iterations = esub.iterations;
          sub.x = esub.x.head(n);
          sub.eq_dual = std::move(esub.eq_dual);
          sub.ineq_dual = esub.ineq_dual.head(mi);
          elastic = true;
          break;
        }
      }
      if (!elastic) {
        qp_failed = true;
        break;
      }
    }
    const VectorXd& d = sub.x;

    // The penalty weight must dominate the multipliers for the l1 merit to
    // be exact; it only ever grows. Multipliers from a subproblem that never
    // converged can be wild, so they do not feed the update.
    if (elastic) {
      // A relaxed step may raise the objective, so the penalty must price
      // the infeasibility it removes high enough for the merit to still see
      // a descent direction.
      const double progress = infeas0 - lin_res;
      penalty = std::min(
          std::max(penalty, 2.0 * std::abs(grad.dot(d)) / progress), 1e8);
    } else if (sub.status == QpStatus::optimal) {
      penalty = std::max(
          penalty, 1.5 * std::max(inf_norm(sub.eq_dual),
                                  inf_norm(sub.ineq_dual)));
    }

    const double merit0 = f + penalty * infeas0;
    // Directional derivative bound: the step corrects the linearized
    // constraints down to lin_res (zero unless relaxed), so the
    // infeasibility term drops at that rate.
    const double descent =
        grad.dot(d) - penalty * (elastic ? infeas0 - lin_res : infeas0);

    // Nonmonotone acceptance (Grippo): compare against the worst recent
    // merit value instead of the last one. A large penalty magnifies the
    // second-order constraint residual of a full step, and a monotone
    // search then crawls with tiny steps near the solution.
    merit_history.push_back(merit0);
    if (merit_history.size() > 5) merit_history.pop_front();
    const double merit_ref =
        *std::max_element(merit_history.begin(), merit_history.end());

    double alpha = 1.0;
    VectorXd xt, cet, cit;
    for (int ls = 0;; ++ls) {
      xt = x + alpha * d;
      problem.eq_values(xt, cet);
      problem.ineq_values(xt, cit);
      const double merit =
          problem.objective(xt) + penalty * l1_infeasibility(cet, cit);
      if (merit <= merit_ref + options.armijo * alpha * descent) break;
      if (ls >= options.line_search_max) break;
      alpha *= 0.5;
    }
    x = xt;
    y = sub.eq_dual;
    z = sub.ineq_dual;
  }

  if (qp_failed && best.constraint_violation > options.tolerance) {
    best.status = SqpStatus::infeasible;
  } else {
    best.status = SqpStatus::max_iterations;
  }
  return best;
}

}  // namespace vrp
