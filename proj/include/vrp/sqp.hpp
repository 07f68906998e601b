#pragma once

#include "vrp/qp.hpp"

namespace vrp {

// Smooth nonlinear program
//   min f(x)   s.t.   c_eq(x) = 0,   c_in(x) <= 0.
// The hessian is a positive semidefinite model of the Lagrangian (exact,
// Gauss-Newton or quasi-Newton, the solver does not care); the current
// multiplier estimates are passed in so constraint curvature can be folded
// in, and a problem whose cost curvature dominates may ignore them. A model
// that underestimates constraint curvature badly can reduce the local rate
// to slow linear, so fold it in when it is cheap. The hessian must keep a
// fixed sparsity pattern across calls, as must both Jacobians; the solver
// reuses the symbolic factorization of the subproblem KKT system.
class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual int num_vars() const = 0;
  virtual int num_eq() const = 0;
  virtual int num_ineq() const = 0;

  virtual double objective(const Eigen::VectorXd& x) const = 0;
  virtual void objective_gradient(const Eigen::VectorXd& x,
                                  Eigen::VectorXd& grad) const = 0;
  virtual void hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& eq_dual,
                       const Eigen::VectorXd& ineq_dual,
                       Eigen::SparseMatrix<double>& h) const = 0;
  virtual void eq_constraints(const Eigen::VectorXd& x, Eigen::VectorXd& val,
                              Eigen::SparseMatrix<double>& jac) const = 0;
  virtual void ineq_constraints(const Eigen::VectorXd& x, Eigen::VectorXd& val,
                                Eigen::SparseMatrix<double>& jac) const = 0;

  // Value-only evaluations used by the merit line search. Override when the
  // constraint values are much cheaper without their Jacobians.
  virtual void eq_values(const Eigen::VectorXd& x, Eigen::VectorXd& val) const;
  virtual void ineq_values(const Eigen::VectorXd& x,
                           Eigen::VectorXd& val) const;

  // Called once at the start of every major iteration, before any
  // evaluation at that iterate. Lets a problem refresh data it treats as
  // constant within the iteration (the planner re-reads road geometry at
  // the current predicted positions here). Trial points probed by the line
  // search do not trigger it.
  virtual void update_iterate(const Eigen::VectorXd& x) {}
};

enum class SqpStatus { optimal, max_iterations, infeasible };

struct SqpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd eq_dual;
  Eigen::VectorXd ineq_dual;
  SqpStatus status = SqpStatus::max_iterations;
  int iterations = 0;
  double kkt_residual = 0.0;
  double objective = 0.0;
  double constraint_violation = 0.0;  // inf norm over eq and violated ineq
};

struct SqpOptions {
  int max_iterations = 50;
  double tolerance = 1e-6;
  double armijo = 1e-4;
  int line_search_max = 25;
  QpOptions qp;
};

// Line-search SQP with an l1 exact penalty merit function. One instance
// keeps the subproblem solver, so consecutive calls on structurally
// identical problems (receding horizon steps) skip symbolic analysis.
class SqpSolver {
 public:
  SqpResult solve(NlpProblem& problem, const Eigen::VectorXd& x0,
                  const SqpOptions& options = {});

 private:
  QpSolver qp_;
};

}  // namespace vrp
