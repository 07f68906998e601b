#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "helpers.hpp"
#include "vrp/qp.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using vrp::QpOptions;
using vrp::QpProblem;
using vrp::QpSolution;
using vrp::QpSolver;
using vrp::QpStatus;

namespace {

Eigen::SparseMatrix<double> sparse(const MatrixXd& m) {
  return m.sparseView(1.0, 1e-300);
}

QpProblem dense_qp(const MatrixXd& h, const VectorXd& g, const MatrixXd& a,
                   const VectorXd& b, const MatrixXd& c, const VectorXd& d) {
  QpProblem qp;
  qp.H = sparse(h);
  qp.g = g;
  qp.A = sparse(a);
  qp.b = b;
  qp.C = sparse(c);
  qp.d = d;
  return qp;
}

// Independent first-order optimality check at the returned point.
void check_kkt(const QpProblem& qp, const QpSolution& sol, double tol) {
  REQUIRE(sol.status == QpStatus::optimal);
  VectorXd stat = qp.H * sol.x + qp.g;
  if (qp.num_eq() > 0) stat += qp.A.transpose() * sol.eq_dual;
  if (qp.num_ineq() > 0) stat += qp.C.transpose() * sol.ineq_dual;
  CHECK(stat.cwiseAbs().maxCoeff() < tol);
  if (qp.num_eq() > 0) {
    CHECK((qp.A * sol.x - qp.b).cwiseAbs().maxCoeff() < tol);
  }
  for (int i = 0; i < qp.num_ineq(); ++i) {
    const double gap = qp.d(i) - (qp.C.row(i) * sol.x).value();
    CHECK(gap > -tol);
    CHECK(sol.ineq_dual(i) > -tol);
    CHECK(std::abs(sol.ineq_dual(i) * gap) < tol);
  }
}

}  // namespace

TEST_CASE("unconstrained minimum matches the normal equations") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 2 + trial;
    MatrixXd m(n, n);
    for (int i = 0; i < n * n; ++i) m(i) = vrp::test::uniform(gen, -1.0, 1.0);
    const MatrixXd h = m.transpose() * m + MatrixXd::Identity(n, n);
    VectorXd g(n);
    for (int i = 0; i < n; ++i) g(i) = vrp::test::uniform(gen, -2.0, 2.0);

    QpProblem qp = dense_qp(h, g, MatrixXd(0, n), VectorXd(), MatrixXd(0, n),
                            VectorXd());
    QpSolver solver;
    const QpSolution sol = solver.solve(qp);
    REQUIRE(sol.status == QpStatus::optimal);
    const VectorXd expect = h.ldlt().solve(-g);
    CHECK((sol.x - expect).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("active scalar bound gives the textbook multiplier") {
  // min 0.5 (x - 3)^2 s.t. x <= 1: solution x = 1 with multiplier 2.
  MatrixXd h(1, 1), c(1, 1);
  h << 1.0;
  c << 1.0;
  VectorXd g(1), d(1);
  g << -3.0;
  d << 1.0;
  QpProblem qp = dense_qp(h, g, MatrixXd(0, 1), VectorXd(), c, d);
  QpSolver solver;
  const QpSolution sol = solver.solve(qp);
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.ineq_dual(0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(sol.slack(0) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("equality constrained least norm spreads mass evenly") {
  for (const int n : {2, 5, 9}) {
    const MatrixXd h = MatrixXd::Identity(n, n);
    MatrixXd a = MatrixXd::Ones(1, n);
    VectorXd b(1);
    b << 1.0;
    QpProblem qp = dense_qp(h, VectorXd::Zero(n), a, b, MatrixXd(0, n),
                            VectorXd());
    QpSolver solver;
    const QpSolution sol = solver.solve(qp);
    REQUIRE(sol.status == QpStatus::optimal);
    for (int i = 0; i < n; ++i) {
      CHECK(sol.x(i) == doctest::Approx(1.0 / n).epsilon(1e-8));
    }
    CHECK(sol.eq_dual(0) == doctest::Approx(-1.0 / n).epsilon(1e-7));
  }
}

TEST_CASE("nonnegative projection clips exactly the negative entries") {
  // min 0.5 ||x - c||^2 s.t. x >= 0 has solution max(c, 0) and multiplier
  // max(-c, 0) on each coordinate.
  const int n = 6;
  VectorXd c(n);
  c << 1.5, -0.3, 0.0, 2.0, -4.0, 0.7;
  MatrixXd cm = -MatrixXd::Identity(n, n);
  QpProblem qp = dense_qp(MatrixXd::Identity(n, n), -c, MatrixXd(0, n),
                          VectorXd(), cm, VectorXd::Zero(n));
  QpSolver solver;
  const QpSolution sol = solver.solve(qp);
  REQUIRE(sol.status == QpStatus::optimal);
  for (int i = 0; i < n; ++i) {
    // A coordinate with c == 0 lacks strict complementarity, and an interior
    // point iterate only approaches such a corner at the square root of the
    // complementarity tolerance; everywhere else the answer is tight.
    const double tol = std::abs(c(i)) > 1e-9 ? 1e-6 : 5e-3;
    CHECK(std::abs(sol.x(i) - std::max(c(i), 0.0)) < tol);
    CHECK(std::abs(sol.ineq_dual(i) - std::max(-c(i), 0.0)) < tol);
  }
}

TEST_CASE("zero hessian degenerates to a linear program over a box") {
  // min g'x over 0 <= x <= 1 picks the corner opposite to the gradient sign.
  const int n = 4;
  VectorXd g(n);
  g << 0.7, -1.2, 0.01, -3.0;
  MatrixXd cm(2 * n, n);
  cm << MatrixXd::Identity(n, n), -MatrixXd::Identity(n, n);
  VectorXd d(2 * n);
  d << VectorXd::Ones(n), VectorXd::Zero(n);
  QpProblem qp =
      dense_qp(MatrixXd::Zero(n, n), g, MatrixXd(0, n), VectorXd(), cm, d);
  QpSolver solver;
  const QpSolution sol = solver.solve(qp, {.max_iterations = 100});
  REQUIRE(sol.status == QpStatus::optimal);
  for (int i = 0; i < n; ++i) {
    CHECK(sol.x(i) == doctest::Approx(g(i) > 0.0 ? 0.0 : 1.0).epsilon(1e-6));
  }
}

TEST_CASE("random feasible problems satisfy first order optimality") {
  std::mt19937_64 gen(29);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(gen() % 10);
    const int me = static_cast<int>(gen() % std::min(4, n - 1));
    const int mi = 1 + static_cast<int>(gen() % 12);

    MatrixXd m(n, n);
    for (int i = 0; i < n * n; ++i) m(i) = vrp::test::uniform(gen, -1.0, 1.0);
    const MatrixXd h =
        m.transpose() * m + 1e-3 * MatrixXd::Identity(n, n);
    VectorXd g(n), x0(n);
    for (int i = 0; i < n; ++i) {
      g(i) = vrp::test::uniform(gen, -2.0, 2.0);
      x0(i) = vrp::test::uniform(gen, -1.0, 1.0);
    }
    MatrixXd a(me, n), c(mi, n);
    for (int i = 0; i < me * n; ++i) a(i) = vrp::test::uniform(gen, -1.0, 1.0);
    for (int i = 0; i < mi * n; ++i) c(i) = vrp::test::uniform(gen, -1.0, 1.0);
    const VectorXd b = a * x0;
    VectorXd d = c * x0;
    for (int i = 0; i < mi; ++i) d(i) += vrp::test::uniform(gen, 0.0, 2.0);

    QpProblem qp = dense_qp(h, g, a, b, c, d);
    QpSolver solver;
    const QpSolution sol = solver.solve(qp, {.max_iterations = 100});
    check_kkt(qp, sol, 1e-5);
  }
}

TEST_CASE("contradictory bounds are reported infeasible") {
  // x <= 0 together with -x <= -1 has empty feasible set.
  MatrixXd cm(2, 1);
  cm << 1.0, -1.0;
  VectorXd d(2);
  d << 0.0, -1.0;
  QpProblem qp = dense_qp(MatrixXd::Identity(1, 1), VectorXd::Zero(1),
                          MatrixXd(0, 1), VectorXd(), cm, d);
  QpSolver solver;
  const QpSolution sol = solver.solve(qp, {.max_iterations = 60});
  CHECK(sol.status == QpStatus::infeasible);
}

TEST_CASE("inconsistent equalities are reported infeasible") {
  MatrixXd a(2, 2);
  a << 1.0, 1.0, 1.0, 1.0;
  VectorXd b(2);
  b << 1.0, 2.0;
  QpProblem qp = dense_qp(MatrixXd::Identity(2, 2), VectorXd::Zero(2), a, b,
                          MatrixXd(0, 2), VectorXd());
  QpSolver solver;
  const QpSolution sol = solver.solve(qp, {.max_iterations = 60});
  CHECK(sol.status == QpStatus::infeasible);
}

TEST_CASE("one solver instance handles repeated and changed patterns") {
  QpSolver solver;

  // Same sparsity, different values: the cached analysis must still give
  // correct answers.
  MatrixXd h(2, 2), c(1, 2);
  h << 2.0, 0.0, 0.0, 1.0;
  c << 1.0, 1.0;
  VectorXd g(2), d(1);
  g << -1.0, -1.0;
  d << 10.0;  // inactive
  QpProblem qp1 = dense_qp(h, g, MatrixXd(0, 2), VectorXd(), c, d);
  const QpSolution s1 = solver.solve(qp1);
  REQUIRE(s1.status == QpStatus::optimal);
  CHECK(s1.x(0) == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(s1.x(1) == doctest::Approx(1.0).epsilon(1e-7));

  QpProblem qp2 = qp1;
  qp2.H.coeffRef(0, 0) = 4.0;
  qp2.d(0) = 0.9;  // now active: x0 + x1 <= 0.9
  const QpSolution s2 = solver.solve(qp2);
  check_kkt(qp2, s2, 1e-6);
  CHECK(s2.x.sum() == doctest::Approx(0.9).epsilon(1e-6));

  // Different dimensions and pattern force a fresh analysis.
  MatrixXd h3 = MatrixXd::Identity(3, 3);
  QpProblem qp3 = dense_qp(h3, VectorXd::Constant(3, -1.0),
                           MatrixXd::Ones(1, 3), VectorXd::Ones(1),
                           MatrixXd(0, 3), VectorXd());
  const QpSolution s3 = solver.solve(qp3);
  REQUIRE(s3.status == QpStatus::optimal);
  for (int i = 0; i < 3; ++i) {
    CHECK(s3.x(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-7));
  }

  // And back to the first problem.
  const QpSolution s4 = solver.solve(qp1);
  REQUIRE(s4.status == QpStatus::optimal);
  CHECK((s4.x - s1.x).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("shape mismatches are rejected up front") {
  QpProblem qp;
  qp.H = sparse(MatrixXd::Identity(2, 2));
  qp.g = VectorXd::Zero(3);
  QpSolver solver;
  CHECK_THROWS_AS(solver.solve(qp), vrp::Error);
}
