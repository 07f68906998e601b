#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "vrp/model.hpp"

using namespace vrp;

namespace {

const VehicleParams kParams;  // defaults

}  // namespace

TEST_CASE("straight-road dynamics hand values") {
  const Eigen::Vector4d f =
      dynamics_mpc({0.0, 0.0, 0.0, 10.0}, {0.1, 0.0}, 0.0, kParams);
  CHECK(f(0) == doctest::Approx(10.0));
  CHECK(f(1) == doctest::Approx(0.0));
  CHECK(f(2) == doctest::Approx(0.37438).epsilon(1e-4));
  CHECK(f(3) == doctest::Approx(0.0));
}

TEST_CASE("curved-road dynamics hand values") {
  const Eigen::Vector4d f =
      dynamics_mpc({0.0, 1.0, 0.0, 5.0}, {0.0, 0.0}, 0.1, kParams);
  CHECK(f(0) == doctest::Approx(5.5556).epsilon(1e-4));
  CHECK(f(2) == doctest::Approx(-0.55556).epsilon(1e-4));
}

TEST_CASE("singular curvilinear frame is rejected") {
  CHECK_THROWS_AS(dynamics_mpc({0.0, 10.0, 0.0, 5.0}, {}, 0.1, kParams),
                  Error);
  CHECK_THROWS_AS(dynamics_game({10.0, 0.0, 5.0}, {}, 0.1, kParams), Error);
  try {
    dynamics_mpc({0.0, 10.0, 0.0, 5.0}, {}, 0.1, kParams);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::singularity);
  }
}

TEST_CASE("game dynamics match the planner rows") {
  auto gen = test::rng(11);
  for (int i = 0; i < 200; ++i) {
    const double d = test::uniform(gen, -0.5, 0.5);
    const double mu = test::uniform(gen, -0.2, 0.2);
    const double v = test::uniform(gen, 0.0, 30.0);
    const double nu = test::uniform(gen, -0.1, 0.1);
    const ControlInput u{test::uniform(gen, -0.5, 0.5),
                         test::uniform(gen, -1.6, 1.6)};
    const Eigen::Vector3d g = dynamics_game({d, mu, v}, u, nu, kParams);
    const Eigen::Vector4d f = dynamics_mpc({0.0, d, mu, v}, u, nu, kParams);
    CHECK(g(0) == doctest::Approx(f(1)).epsilon(1e-14));
    CHECK(g(1) == doctest::Approx(f(2)).epsilon(1e-14));
    CHECK(g(2) == doctest::Approx(f(3)).epsilon(1e-14));
  }
}

TEST_CASE("planner Jacobians agree with finite differences") {
  auto gen = test::rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const PlanState x{test::uniform(gen, 0.0, 100.0),
                      test::uniform(gen, -0.5, 0.5),
                      test::uniform(gen, -0.2, 0.2),
                      test::uniform(gen, 0.1, 30.0)};
    const ControlInput u{test::uniform(gen, -0.5, 0.5),
                         test::uniform(gen, -1.6, 1.6)};
    const double kappa = test::uniform(gen, -0.1, 0.1);

    Eigen::Matrix4d dfdx;
    Eigen::Matrix<double, 4, 2> dfdu;
    dynamics_mpc_jacobian(x, u, kappa, kParams, dfdx, dfdu);

    Eigen::Matrix4d fd_x;
    const double h = 1e-7;
    for (int j = 0; j < 4; ++j) {
      PlanState lo = x, hi = x;
      double* fields_lo[4] = {&lo.s, &lo.d, &lo.mu, &lo.v};
      double* fields_hi[4] = {&hi.s, &hi.d, &hi.mu, &hi.v};
      *fields_lo[j] -= h;
      *fields_hi[j] += h;
      fd_x.col(j) = (dynamics_mpc(hi, u, kappa, kParams) -
                     dynamics_mpc(lo, u, kappa, kParams)) /
                    (2.0 * h);
    }
    CHECK(test::max_rel_error(dfdx, fd_x) < 1e-6);

    Eigen::Matrix<double, 4, 2> fd_u;
    for (int j = 0; j < 2; ++j) {
      ControlInput lo = u, hi = u;
      double* fields_lo[2] = {&lo.delta, &lo.accel};
      double* fields_hi[2] = {&hi.delta, &hi.accel};
      *fields_lo[j] -= h;
      *fields_hi[j] += h;
      fd_u.col(j) = (dynamics_mpc(x, hi, kappa, kParams) -
                     dynamics_mpc(x, lo, kappa, kParams)) /
                    (2.0 * h);
    }
    CHECK(test::max_rel_error(fd_u, dfdu) < 1e-6);
  }
}

TEST_CASE("rk4 with pure acceleration only moves speed") {
  const GameState z = rk4_step({0.0, 0.0, 2.0}, {0.0, 1.0}, 0.0, 0.2, kParams);
  CHECK(z.d == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(z.mu == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(z.v == doctest::Approx(2.2).epsilon(1e-14));
}

TEST_CASE("rk4 matches fine-step integration") {
  auto gen = test::rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const GameState z0{test::uniform(gen, -0.3, 0.3),
                       test::uniform(gen, -0.2, 0.2),
                       test::uniform(gen, 0.0, 10.0)};
    const ControlInput u{test::uniform(gen, -0.3, 0.3),
                         test::uniform(gen, -1.0, 1.0)};
    const double nu = test::uniform(gen, -0.1, 0.1);
    const GameState coarse = rk4_step(z0, u, nu, 0.2, kParams);
    GameState fine = z0;
    for (int i = 0; i < 100; ++i) fine = rk4_step(fine, u, nu, 0.002, kParams);
    // One 0.2 s step carries O(ts^5) truncation; a coefficient bug would err
    // at the 1e-3 level.
    CHECK(std::abs(coarse.d - fine.d) < 5e-5);
    CHECK(std::abs(coarse.mu - fine.mu) < 5e-5);
    CHECK(std::abs(coarse.v - fine.v) < 5e-5);
  }
}

TEST_CASE("stationary curvature-following states are rk4 fixed points") {
  auto gen = test::rng(37);
  for (int trial = 0; trial < 200; ++trial) {
    const double nu = test::uniform(gen, -0.1, 0.1);
    const double d = test::uniform(gen, -0.59, 0.59);
    const double v = test::uniform(gen, 0.0, 4.0);
    // Steering that exactly tracks curvature nu at offset d.
    const double delta =
        std::atan(nu * kParams.wheelbase / (1.0 - d * nu));
    const GameState z1 = rk4_step({d, 0.0, v}, {delta, 0.0}, nu, 0.2, kParams);
    CHECK(std::abs(z1.d - d) < 1e-12);
    CHECK(std::abs(z1.mu) < 1e-12);
    CHECK(std::abs(z1.v - v) < 1e-12);
  }
}

TEST_CASE("trapezoidal defect vanishes on an exact trapezoidal pair") {
  const PlanState xk{0.0, 0.0, 0.0, 2.0};
  const PlanState xk1{0.42, 0.0, 0.0, 2.2};
  const Eigen::Vector4d r =
      trapezoidal_residual(xk, xk1, {0.0, 1.0}, 0.0, 0.0, 0.2, kParams);
  CHECK(r.cwiseAbs().maxCoeff() < 1e-14);
  // Perturbing the endpoint shows up in the defect.
  const PlanState bad{0.5, 0.0, 0.0, 2.2};
  const Eigen::Vector4d r2 =
      trapezoidal_residual(xk, bad, {0.0, 1.0}, 0.0, 0.0, 0.2, kParams);
  CHECK(r2(0) == doctest::Approx(0.08));
}

TEST_CASE("combined acceleration constraint hand values") {
  CHECK(acc_constraint_value(4.0, {0.1, 1.0}, kParams) ==
        doctest::Approx(-1.20118).epsilon(1e-4));
  // Full lateral budget: v^2 tan(delta)/L == a_max exactly.
  const double delta = std::atan(kParams.a_max * kParams.wheelbase / 16.0);
  CHECK(acc_constraint_value(4.0, {delta, 0.0}, kParams) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("combined acceleration constraint symmetry and gradient") {
  auto gen = test::rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const double v = test::uniform(gen, 0.0, 20.0);
    const ControlInput u{test::uniform(gen, -0.5, 0.5),
                         test::uniform(gen, -1.6, 1.6)};
    const double val = acc_constraint_value(v, u, kParams);
    CHECK(acc_constraint_value(v, {-u.delta, u.accel}, kParams) ==
          doctest::Approx(val).epsilon(1e-14));
    CHECK(acc_constraint_value(v, {u.delta, -u.accel}, kParams) ==
          doctest::Approx(val).epsilon(1e-14));

    const Eigen::Vector3d g = acc_constraint_gradient(v, u, kParams);
    const double h = 1e-6;
    const double fd_v = (acc_constraint_value(v + h, u, kParams) -
                         acc_constraint_value(v - h, u, kParams)) /
                        (2.0 * h);
    const double fd_delta =
        (acc_constraint_value(v, {u.delta + h, u.accel}, kParams) -
         acc_constraint_value(v, {u.delta - h, u.accel}, kParams)) /
        (2.0 * h);
    const double fd_accel =
        (acc_constraint_value(v, {u.delta, u.accel + h}, kParams) -
         acc_constraint_value(v, {u.delta, u.accel - h}, kParams)) /
        (2.0 * h);
    CHECK(test::rel_error(g(0), fd_v) < 1e-6);
    CHECK(test::rel_error(g(1), fd_delta) < 1e-6);
    CHECK(test::rel_error(g(2), fd_accel) < 1e-6);
  }
}

TEST_CASE("road clearance hand values") {
  const auto center = road_constraint_values(0.0, 0.0, -1.5, 1.5, kParams);
  for (double g : center) CHECK(g == doctest::Approx(-0.5915).epsilon(1e-12));

  const auto heading = road_constraint_values(0.0, 0.2, -1.5, 1.5, kParams);
  double tightest = heading[0];
  for (double g : heading) tightest = std::max(tightest, g);
  CHECK(tightest == doctest::Approx(0.10560).epsilon(1e-4));

  const auto edge = road_constraint_values(0.5915, 0.0, -1.5, 1.5, kParams);
  CHECK(edge[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(edge[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("road clearances agree with the folded |mu| form") {
  auto gen = test::rng(43);
  const double lr = kParams.rear_to_center;
  const double hw = kParams.car_width / 2.0;
  const double hl = kParams.car_length / 2.0;
  for (int trial = 0; trial < 300; ++trial) {
    const double d = test::uniform(gen, -1.0, 1.0);
    const double mu = test::uniform(gen, -0.3, 0.3);
    const auto vals = road_constraint_values(d, mu, -1.5, 1.5, kParams);
    double worst = vals[0];
    for (double g : vals) worst = std::max(worst, g);
    // Independent form: widest diagonal uses |sin(mu)|.
    const double d_ref = d + lr * std::sin(mu);
    const double cw = hw * std::cos(mu) + hl * std::abs(std::sin(mu));
    const double folded = std::max(d_ref + cw - 1.5, -d_ref + cw + (-1.5));
    CHECK(worst == doctest::Approx(folded).epsilon(1e-12));
  }
}

TEST_CASE("road clearance mirror symmetry on a symmetric road") {
  auto gen = test::rng(47);
  for (int trial = 0; trial < 200; ++trial) {
    const double d = test::uniform(gen, -1.0, 1.0);
    const double mu = test::uniform(gen, -0.3, 0.3);
    const auto a = road_constraint_values(d, mu, -1.5, 1.5, kParams);
    const auto b = road_constraint_values(-d, -mu, -1.5, 1.5, kParams);
    CHECK(a[0] == doctest::Approx(b[3]).epsilon(1e-13));
    CHECK(a[1] == doctest::Approx(b[2]).epsilon(1e-13));
  }
}

TEST_CASE("road clearance Jacobian agrees with finite differences") {
  auto gen = test::rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    const double d = test::uniform(gen, -1.0, 1.0);
    const double mu = test::uniform(gen, -0.3, 0.3);
    const auto jac = road_constraint_jacobian(mu, -1.5, 1.5, kParams);
    const double h = 1e-7;
    const auto hi_d = road_constraint_values(d + h, mu, -1.5, 1.5, kParams);
    const auto lo_d = road_constraint_values(d - h, mu, -1.5, 1.5, kParams);
    const auto hi_mu = road_constraint_values(d, mu + h, -1.5, 1.5, kParams);
    const auto lo_mu = road_constraint_values(d, mu - h, -1.5, 1.5, kParams);
    for (int i = 0; i < 4; ++i) {
      CHECK(test::rel_error(jac(i, 0), (hi_d[i] - lo_d[i]) / (2.0 * h)) <
            1e-6);
      CHECK(test::rel_error(jac(i, 1), (hi_mu[i] - lo_mu[i]) / (2.0 * h)) <
            1e-6);
    }
  }
}

TEST_CASE("pointwise feasibility") {
  CHECK(state_feasible({0.0, 0.0, 4.0}, -1.5, 1.5, kParams, 4.0));
  CHECK_FALSE(state_feasible({0.0, 0.2, 0.0}, -1.5, 1.5, kParams, 4.0));
  CHECK_FALSE(state_feasible({0.0, 0.0, 4.1}, -1.5, 1.5, kParams, 4.0));
  CHECK_FALSE(state_feasible({0.0, 0.0, -0.1}, -1.5, 1.5, kParams, 4.0));
  CHECK_FALSE(state_feasible({0.0, 0.25, 1.0}, -1.5, 1.5, kParams, 4.0));
  CHECK_FALSE(state_feasible({0.6, 0.0, 1.0}, -1.5, 1.5, kParams, 4.0));
  CHECK(state_feasible({0.59, 0.0, 1.0}, -1.5, 1.5, kParams, 4.0));
}

TEST_CASE("widest zero-heading offset") {
  CHECK(d_max_at_zero_heading(-1.5, 1.5, kParams) ==
        doctest::Approx(0.5915).epsilon(1e-12));
  CHECK(d_max_at_zero_heading(-2.0, 1.5, kParams) ==
        doctest::Approx(2.0 - 0.9085).epsilon(1e-12));
}

TEST_CASE("vehicle params validation") {
  VehicleParams p;
  CHECK_NOTHROW(p.validate());
  p.wheelbase = -1.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = VehicleParams{};
  p.accel_min = 2.0;
  CHECK_THROWS_AS(p.validate(), Error);
}
