#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "vrp/types.hpp"

namespace vrp {

// Convex quadratic program
//   min 0.5 x'Hx + g'x   s.t.   A x = b,   C x <= d
// with H symmetric positive semidefinite, stored full (both triangles).
struct QpProblem {
  Eigen::SparseMatrix<double> H;
  Eigen::VectorXd g;
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b;
  Eigen::SparseMatrix<double> C;
  Eigen::VectorXd d;

  int num_vars() const { return static_cast<int>(g.size()); }
  int num_eq() const { return static_cast<int>(b.size()); }
  int num_ineq() const { return static_cast<int>(d.size()); }
  void validate() const;
};

enum class QpStatus { optimal, max_iterations, infeasible };

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd eq_dual;    // multipliers for A x = b
  Eigen::VectorXd ineq_dual;  // multipliers for C x <= d, nonnegative
  Eigen::VectorXd slack;      // d - C x at the returned iterate
  QpStatus status = QpStatus::max_iterations;
  int iterations = 0;
  double dual_residual = 0.0;     // ||Hx + g + A'y + C'z||_inf
  double primal_residual = 0.0;   // max of eq and ineq violation
  double complementarity = 0.0;   // s'z / m_ineq
};

struct QpOptions {
  int max_iterations = 50;
  double tolerance = 1e-8;
  // Static regularization of the quasi-definite KKT system; also the floor
  // added to H, so a zero Hessian still factors.
  double regularization = 1e-8;
};

// Mehrotra predictor-corrector interior-point solver. One instance caches the
// symbolic factorization of the KKT pattern, so repeated solves of problems
// with identical sparsity (SQP subproblems) skip the analysis phase.
class QpSolver {
 public:
  QpSolution solve(const QpProblem& qp, const QpOptions& options = {});

 private:
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt_;
  Eigen::SparseMatrix<double> kkt_;
  std::vector<std::ptrdiff_t> ineq_diag_slots_;
  bool analyzed_ = false;
  std::uint64_t pattern_hash_ = 0;
  int pattern_dim_ = -1;
};

}  // namespace vrp
