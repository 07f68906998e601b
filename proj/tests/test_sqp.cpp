#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "vrp/sqp.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using vrp::NlpProblem;
using vrp::SqpOptions;
using vrp::SqpResult;
using vrp::SqpSolver;
using vrp::SqpStatus;

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Keeps explicit zeros so the pattern never depends on the iterate.
SpMat dense_as_sparse(const MatrixXd& m) {
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(m.size()));
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) trips.emplace_back(r, c, m(r, c));
  }
  SpMat out(m.rows(), m.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

struct Unconstrained {
  void eq(const VectorXd&, VectorXd& val, SpMat& jac, int n) const {
    val.resize(0);
    jac.resize(0, n);
  }
};

// Rosenbrock as a nonlinear least squares problem with a Gauss-Newton
// hessian model: residuals (1 - x, 10 (y - x^2)).
class RosenbrockGn : public NlpProblem {
 public:
  int num_vars() const override { return 2; }
  int num_eq() const override { return 0; }
  int num_ineq() const override { return 0; }

  double objective(const VectorXd& v) const override {
    const double r1 = 1.0 - v(0);
    const double r2 = 10.0 * (v(1) - v(0) * v(0));
    return r1 * r1 + r2 * r2;
  }
  void objective_gradient(const VectorXd& v, VectorXd& g) const override {
    const double r1 = 1.0 - v(0);
    const double r2 = 10.0 * (v(1) - v(0) * v(0));
    g.resize(2);
    g(0) = -2.0 * r1 - 40.0 * v(0) * r2;
    g(1) = 20.0 * r2;
  }
  void hessian(const VectorXd& v, const VectorXd&, const VectorXd&,
               SpMat& h) const override {
    MatrixXd j(2, 2);
    j << -1.0, 0.0, -20.0 * v(0), 10.0;
    h = dense_as_sparse(2.0 * j.transpose() * j);
  }
  void eq_constraints(const VectorXd&, VectorXd& val,
                      SpMat& jac) const override {
    val.resize(0);
    jac.resize(0, 2);
  }
  void ineq_constraints(const VectorXd&, VectorXd& val,
                        SpMat& jac) const override {
    val.resize(0);
    jac.resize(0, 2);
  }
};

// min x + y on the unit circle, identity hessian model. The optimum sits at
// (-s, -s) with s = sqrt(1/2) and equality multiplier s.
class LinearOnCircle : public NlpProblem {
 public:
  int num_vars() const override { return 2; }
  int num_eq() const override { return 1; }
  int num_ineq() const override { return 0; }

  double objective(const VectorXd& v) const override { return v(0) + v(1); }
  void objective_gradient(const VectorXd&, VectorXd& g) const override {
    g = VectorXd::Ones(2);
  }
  void hessian(const VectorXd&, const VectorXd&, const VectorXd&,
               SpMat& h) const override {
    // Deliberately curvature-free: the solver should still get there, just
    // without the fast local rate.
    h = dense_as_sparse(MatrixXd::Identity(2, 2));
  }
  void eq_constraints(const VectorXd& v, VectorXd& val,
                      SpMat& jac) const override {
    val.resize(1);
    val(0) = v.squaredNorm() - 1.0;
    MatrixXd j(1, 2);
    j << 2.0 * v(0), 2.0 * v(1);
    jac = dense_as_sparse(j);
  }
  void ineq_constraints(const VectorXd&, VectorXd& val,
                        SpMat& jac) const override {
    val.resize(0);
    jac.resize(0, 2);
  }
};

// min (x + 1)^2 s.t. x >= 0: active bound, multiplier 2.
class ShiftedParabola : public NlpProblem {
 public:
  int num_vars() const override { return 1; }
  int num_eq() const override { return 0; }
  int num_ineq() const override { return 1; }

  double objective(const VectorXd& v) const override {
    return (v(0) + 1.0) * (v(0) + 1.0);
  }
  void objective_gradient(const VectorXd& v, VectorXd& g) const override {
    g.resize(1);
    g(0) = 2.0 * (v(0) + 1.0);
  }
  void hessian(const VectorXd&, const VectorXd&, const VectorXd&,
               SpMat& h) const override {
    h = dense_as_sparse(2.0 * MatrixXd::Identity(1, 1));
  }
  void eq_constraints(const VectorXd&, VectorXd& val,
                      SpMat& jac) const override {
    val.resize(0);
    jac.resize(0, 1);
  }
  void ineq_constraints(const VectorXd& v, VectorXd& val,
                        SpMat& jac) const override {
    val.resize(1);
    val(0) = -v(0);
    jac = dense_as_sparse(-MatrixXd::Identity(1, 1));
  }
};

// Projection of (2, 0) onto the unit disk: solution (1, 0), multiplier 1/2.
class DiskProjection : public NlpProblem {
 public:
  int num_vars() const override { return 2; }
  int num_eq() const override { return 0; }
  int num_ineq() const override { return 1; }

  double objective(const VectorXd& v) const override {
    return 0.5 * (v(0) - 2.0) * (v(0) - 2.0) + 0.5 * v(1) * v(1);
  }
  void objective_gradient(const VectorXd& v, VectorXd& g) const override {
    g.resize(2);
    g(0) = v(0) - 2.0;
    g(1) = v(1);
  }
  void hessian(const VectorXd&, const VectorXd&,
               const VectorXd& ineq_dual, SpMat& h) const override {
    // Lagrangian curvature: the constraint contributes 2 z I. Without it the
    // step in the boundary-normal direction reflects instead of contracting.
    const double z = ineq_dual.size() > 0 ? std::max(ineq_dual(0), 0.0) : 0.0;
    h = dense_as_sparse((1.0 + 2.0 * z) * MatrixXd::Identity(2, 2));
  }
  void eq_constraints(const VectorXd&, VectorXd& val,
                      SpMat& jac) const override {
    val.resize(0);
    jac.resize(0, 2);
  }
  void ineq_constraints(const VectorXd& v, VectorXd& val,
                        SpMat& jac) const override {
    val.resize(1);
    val(0) = v.squaredNorm() - 1.0;
    MatrixXd j(1, 2);
    j << 2.0 * v(0), 2.0 * v(1);
    jac = dense_as_sparse(j);
  }
};

// One variable pinned to two different values at once.
class Contradiction : public NlpProblem {
 public:
  int num_vars() const override { return 1; }
  int num_eq() const override { return 2; }
  int num_ineq() const override { return 0; }

  double objective(const VectorXd& v) const override {
    return 0.5 * v(0) * v(0);
  }
  void objective_gradient(const VectorXd& v, VectorXd& g) const override {
    g = v;
  }
  void hessian(const VectorXd&, const VectorXd&, const VectorXd&,
               SpMat& h) const override {
    h = dense_as_sparse(MatrixXd::Identity(1, 1));
  }
  void eq_constraints(const VectorXd& v, VectorXd& val,
                      SpMat& jac) const override {
    val.resize(2);
    val(0) = v(0);
    val(1) = v(0) - 1.0;
    MatrixXd j(2, 1);
    j << 1.0, 1.0;
    jac = dense_as_sparse(j);
  }
  void ineq_constraints(const VectorXd&, VectorXd& val,
                        SpMat& jac) const override {
    val.resize(0);
    jac.resize(0, 1);
  }
};

// Convex QP wrapped as an NLP; SQP must land on it in one step.
class QuadraticNlp : public NlpProblem {
 public:
  QuadraticNlp(MatrixXd h, VectorXd g, MatrixXd a, VectorXd b, MatrixXd c,
               VectorXd d)
      : h_(std::move(h)),
        g_(std::move(g)),
        a_(std::move(a)),
        b_(std::move(b)),
        c_(std::move(c)),
        d_(std::move(d)) {}

  int num_vars() const override { return static_cast<int>(g_.size()); }
  int num_eq() const override { return static_cast<int>(b_.size()); }
  int num_ineq() const override { return static_cast<int>(d_.size()); }

  double objective(const VectorXd& x) const override {
    return 0.5 * x.dot(h_ * x) + g_.dot(x);
  }
  void objective_gradient(const VectorXd& x, VectorXd& g) const override {
    g = h_ * x + g_;
  }
  void hessian(const VectorXd&, const VectorXd&, const VectorXd&,
               SpMat& h) const override {
    h = dense_as_sparse(h_);
  }
  void eq_constraints(const VectorXd& x, VectorXd& val,
                      SpMat& jac) const override {
    val = a_ * x - b_;
    jac = dense_as_sparse(a_);
  }
  void ineq_constraints(const VectorXd& x, VectorXd& val,
                        SpMat& jac) const override {
    val = c_ * x - d_;
    jac = dense_as_sparse(c_);
  }

 private:
  MatrixXd h_, a_, c_;
  VectorXd g_, b_, d_;
};

// Counts hook invocations and remembers the iterates it saw.
class HookCounter : public RosenbrockGn {
 public:
  void update_iterate(const VectorXd& x) override {
    ++calls;
    last = x;
  }
  int calls = 0;
  VectorXd last;
};

}  // namespace

TEST_CASE("gauss newton descent reaches the rosenbrock minimum") {
  RosenbrockGn problem;
  SqpSolver solver;
  VectorXd x0(2);
  x0 << -1.2, 1.0;
  const SqpResult res = solver.solve(problem, x0);
  REQUIRE(res.status == SqpStatus::optimal);
  CHECK(res.x(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(res.x(1) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(res.iterations < 50);
  CHECK(res.objective < 1e-10);
}

TEST_CASE("equality constrained optimum and multiplier match by hand") {
  LinearOnCircle problem;
  SqpSolver solver;
  VectorXd x0(2);
  x0 << 0.0, -1.0;
  const SqpResult res = solver.solve(problem, x0);
  REQUIRE(res.status == SqpStatus::optimal);
  const double s = std::sqrt(0.5);
  CHECK(res.x(0) == doctest::Approx(-s).epsilon(1e-6));
  CHECK(res.x(1) == doctest::Approx(-s).epsilon(1e-6));
  CHECK(res.eq_dual(0) == doctest::Approx(s).epsilon(1e-5));
  CHECK(res.constraint_violation < 1e-6);
}

TEST_CASE("active inequality pins the iterate at the bound") {
  ShiftedParabola problem;
  SqpSolver solver;
  const SqpResult res = solver.solve(problem, VectorXd::Constant(1, 2.0));
  REQUIRE(res.status == SqpStatus::optimal);
  CHECK(std::abs(res.x(0)) < 1e-6);
  CHECK(res.ineq_dual(0) == doctest::Approx(2.0).epsilon(1e-5));
}

TEST_CASE("disk projection activates the boundary constraint") {
  DiskProjection problem;
  SqpSolver solver;
  VectorXd x0(2);
  x0 << 0.0, 0.5;
  const SqpResult res = solver.solve(problem, x0);
  REQUIRE(res.status == SqpStatus::optimal);
  CHECK(res.x(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(res.x(1)) < 1e-6);
  CHECK(res.ineq_dual(0) == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("quadratic problems converge in very few iterations") {
  std::mt19937_64 gen(41);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 3 + static_cast<int>(gen() % 5);
    MatrixXd m(n, n);
    for (int i = 0; i < n * n; ++i) m(i) = vrp::test::uniform(gen, -1.0, 1.0);
    const MatrixXd h = m.transpose() * m + MatrixXd::Identity(n, n);
    VectorXd g(n), x0(n);
    for (int i = 0; i < n; ++i) {
      g(i) = vrp::test::uniform(gen, -1.0, 1.0);
      x0(i) = vrp::test::uniform(gen, -1.0, 1.0);
    }
    MatrixXd a = MatrixXd::Ones(1, n);
    VectorXd b = VectorXd::Zero(1);
    MatrixXd c(1, n);
    for (int i = 0; i < n; ++i) c(0, i) = vrp::test::uniform(gen, -1.0, 1.0);
    VectorXd d = VectorXd::Constant(1, 5.0);

    QuadraticNlp problem(h, g, a, b, c, d);
    SqpSolver solver;
    const SqpResult res = solver.solve(problem, x0);
    REQUIRE(res.status == SqpStatus::optimal);
    // The first step solves the problem exactly; one more pass detects it.
    CHECK(res.iterations <= 2);
    CHECK(std::abs(res.x.sum()) < 1e-6);
  }
}

TEST_CASE("iteration cap returns the best iterate seen") {
  LinearOnCircle problem;
  SqpSolver solver;
  VectorXd x0(2);
  x0 << 0.0, -1.0;
  SqpOptions options;
  options.max_iterations = 1;
  const SqpResult res = solver.solve(problem, x0, options);
  CHECK(res.status == SqpStatus::max_iterations);
  CHECK(res.iterations <= 1);
  CHECK(res.x.allFinite());
}

TEST_CASE("contradictory constraints come back infeasible") {
  Contradiction problem;
  SqpSolver solver;
  const SqpResult res = solver.solve(problem, VectorXd::Zero(1));
  CHECK(res.status == SqpStatus::infeasible);
  CHECK(res.constraint_violation > 0.1);
}

TEST_CASE("the iterate hook fires once per major iteration") {
  HookCounter problem;
  SqpSolver solver;
  VectorXd x0(2);
  x0 << -1.2, 1.0;
  const SqpResult res = solver.solve(problem, x0);
  REQUIRE(res.status == SqpStatus::optimal);
  // Called on entry of every major iteration, including the one that only
  // detects convergence; line search probes must not reach it.
  CHECK(problem.calls == res.iterations + 1);
  CHECK((problem.last - res.x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("wrong start dimension is rejected") {
  RosenbrockGn problem;
  SqpSolver solver;
  CHECK_THROWS_AS(solver.solve(problem, VectorXd::Zero(3)), vrp::Error);
}
