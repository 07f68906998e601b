#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "helpers.hpp"
#include "vrp/model.hpp"
#include "vrp/sim.hpp"

using namespace vrp;

namespace {

RoadPath straight_road(double length = 200.0, double limit = 5.0) {
  return RoadPath({{length, 0.0}}, -1.5, 1.5, {{0.0, limit}});
}

SimVehicleState rolling_state(double vx) {
  SimVehicleState z;
  z.vx = vx;
  return z;
}

}  // namespace

TEST_CASE("plant parameters are validated against the planning wheelbase") {
  const VehicleParams vehicle;
  SimParams p;
  CHECK_NOTHROW(p.validate(vehicle));

  p.lf = 1.5;  // lf + lr != wheelbase
  CHECK_THROWS_AS(p.validate(vehicle), Error);
  p = SimParams{};
  p.blend_v_lo = 3.0;
  p.blend_v_hi = 0.5;
  CHECK_THROWS_AS(p.validate(vehicle), Error);
  p = SimParams{};
  p.plant_step = 0.0;
  CHECK_THROWS_AS(p.validate(vehicle), Error);
  p = SimParams{};
  p.mass = -1.0;
  CHECK_THROWS_AS(p.validate(vehicle), Error);
}

TEST_CASE("symmetric straight-line motion is an equilibrium of the tire model") {
  const VehicleParams vehicle;
  const SimParams p;
  const SimVehicleState z = rolling_state(10.0);
  const SimVehicleState dz =
      dynamic_bicycle_derivative(z, {0.0, 0.7}, p, vehicle);
  CHECK(dz.vy == 0.0);
  CHECK(dz.r == 0.0);
  CHECK(dz.psi == 0.0);
  CHECK(dz.vx == doctest::Approx(0.7));
  CHECK(dz.x == doctest::Approx(10.0));
  CHECK(dz.y == 0.0);
}

TEST_CASE("positive steering at speed yields positive initial yaw acceleration") {
  const VehicleParams vehicle;
  const SimParams p;
  const SimVehicleState dz =
      dynamic_bicycle_derivative(rolling_state(10.0), {0.05, 0.0}, p, vehicle);
  CHECK(dz.r > 0.0);
  CHECK(dz.vy > 0.0);
}

TEST_CASE("steady-state cornering matches the linear single-track gains") {
  const VehicleParams vehicle;
  const SimParams p;
  const double v = 10.0;
  const double delta = 0.002;

  // Relax the lateral subsystem at frozen v_x until it settles.
  SimVehicleState z = rolling_state(v);
  const double dt = 0.002;
  for (int i = 0; i < 5000; ++i) {
    const SimVehicleState dz =
        dynamic_bicycle_derivative(z, {delta, 0.0}, p, vehicle);
    z.vy += dt * dz.vy;
    z.r += dt * dz.r;
  }

  // Small-angle slip: the converged point solves a 2x2 linear system.
  Eigen::Matrix2d a;
  a << -(p.cf + p.cr) / (p.mass * v),
      (-p.lf * p.cf + p.lr * p.cr) / (p.mass * v) - v,
      (-p.lf * p.cf + p.lr * p.cr) / (p.inertia * v),
      -(p.lf * p.lf * p.cf + p.lr * p.lr * p.cr) / (p.inertia * v);
  Eigen::Vector2d b(p.cf * delta / p.mass, p.lf * p.cf * delta / p.inertia);
  const Eigen::Vector2d w = a.fullPivLu().solve(-b);

  CHECK(std::abs(z.vy - w(0)) < 1e-6);
  CHECK(std::abs(z.r - w(1)) < 1e-6);
}

TEST_CASE("a stationary car with zero commands stays put") {
  const VehicleParams vehicle;
  const SimParams p;
  SimVehicleState z;
  z.psi = 0.4;
  const SimVehicleState next = blended_plant_step(z, {0.3, 0.0}, p, vehicle, 0.01);
  CHECK(next.x == 0.0);
  CHECK(next.y == 0.0);
  CHECK(next.psi == doctest::Approx(0.4));
  CHECK(next.vx == 0.0);
  CHECK(next.vy == 0.0);
  CHECK(next.r == 0.0);
}

TEST_CASE("above the upper blend speed the plant is the pure tire model") {
  const VehicleParams vehicle;
  const SimParams p;
  SimVehicleState z = rolling_state(8.0);
  z.vy = 0.1;
  z.r = 0.05;
  const ControlInput u{0.03, 0.5};
  const double dt = 0.01;

  const SimVehicleState got = blended_plant_step(z, u, p, vehicle, dt);

  const auto f = [&](const SimVehicleState& s) {
    return dynamic_bicycle_derivative(s, u, p, vehicle);
  };
  const auto shift = [](const SimVehicleState& s, const SimVehicleState& d,
                        double h) {
    SimVehicleState out = s;
    out.x += h * d.x;
    out.y += h * d.y;
    out.psi += h * d.psi;
    out.vx += h * d.vx;
    out.vy += h * d.vy;
    out.r += h * d.r;
    return out;
  };
  const SimVehicleState k1 = f(z);
  const SimVehicleState k2 = f(shift(z, k1, dt / 2));
  const SimVehicleState k3 = f(shift(z, k2, dt / 2));
  const SimVehicleState k4 = f(shift(z, k3, dt));
  SimVehicleState want = z;
  want.x += dt / 6 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x);
  want.y += dt / 6 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y);
  want.psi += dt / 6 * (k1.psi + 2 * k2.psi + 2 * k3.psi + k4.psi);
  want.vx += dt / 6 * (k1.vx + 2 * k2.vx + 2 * k3.vx + k4.vx);
  want.vy += dt / 6 * (k1.vy + 2 * k2.vy + 2 * k3.vy + k4.vy);
  want.r += dt / 6 * (k1.r + 2 * k2.r + 2 * k3.r + k4.r);

  CHECK(got.x == doctest::Approx(want.x).epsilon(1e-14));
  CHECK(got.y == doctest::Approx(want.y).epsilon(1e-14));
  CHECK(got.psi == doctest::Approx(want.psi).epsilon(1e-14));
  CHECK(got.vx == doctest::Approx(want.vx).epsilon(1e-14));
  CHECK(got.vy == doctest::Approx(want.vy).epsilon(1e-14));
  CHECK(got.r == doctest::Approx(want.r).epsilon(1e-14));
}

TEST_CASE("the blend is continuous at both edges") {
  const VehicleParams vehicle;
  const SimParams p;
  const ControlInput u{0.1, 0.3};
  const double eps = 1e-12;
  for (double edge : {p.blend_v_lo, p.blend_v_hi}) {
    SimVehicleState lo = rolling_state(edge - eps);
    SimVehicleState hi = rolling_state(edge + eps);
    lo.vy = hi.vy = 0.02;
    lo.r = hi.r = 0.01;
    const SimVehicleState a = blended_plant_step(lo, u, p, vehicle, 1e-4);
    const SimVehicleState b = blended_plant_step(hi, u, p, vehicle, 1e-4);
    CHECK(std::abs(a.x - b.x) < 1e-9);
    CHECK(std::abs(a.y - b.y) < 1e-9);
    CHECK(std::abs(a.psi - b.psi) < 1e-9);
    CHECK(std::abs(a.vx - b.vx) < 1e-9);
    CHECK(std::abs(a.vy - b.vy) < 1e-9);
    CHECK(std::abs(a.r - b.r) < 1e-9);
  }
}

TEST_CASE("the kinematic branch reproduces the planning model on an arc") {
  const VehicleParams vehicle;
  SimParams p;
  p.blend_v_lo = 1e5;  // force the kinematic branch at driving speed
  p.blend_v_hi = 2e5;
  const double kappa = 0.01;
  const RoadPath road({{300.0, kappa}}, -2.0, 2.0, {{0.0, 40.0}});
  const PlanState start{20.0, 0.3, 0.05, 5.0};
  const ControlInput u{0.2, 0.4};

  const Pose rear = road.global_pose(start.s, start.d, start.mu);
  SimVehicleState veh;
  veh.psi = rear.psi;
  veh.x = rear.x + p.lr * std::cos(rear.psi);
  veh.y = rear.y + p.lr * std::sin(rear.psi);
  veh.vx = start.v;

  GameState game{start.d, start.mu, start.v};
  const double ts = 0.05;
  double s_hint = start.s;
  for (int step = 0; step < 20; ++step) {
    for (int i = 0; i < 5; ++i) {
      veh = blended_plant_step(veh, u, p, vehicle, ts / 5.0);
    }
    game = rk4_step(game, u, kappa, ts, vehicle);
  }
  const double xr = veh.x - p.lr * std::cos(veh.psi);
  const double yr = veh.y - p.lr * std::sin(veh.psi);
  const Curvilinear cur = road.project_to_path(xr, yr, veh.psi, s_hint);

  CHECK(std::abs(cur.d - game.d) < 1e-6);
  CHECK(std::abs(cur.mu - game.mu) < 1e-6);
  CHECK(std::abs(veh.vx - game.v) < 1e-8);
}

TEST_CASE("closed loop on a straight road reaches and holds the speed limit") {
  const RoadPath road = straight_road(200.0, 5.0);
  SimOptions opt;
  opt.start = {0.0, 0.02, 0.0, 3.0};
  opt.s_goal = 60.0;
  opt.controller.horizon = 40;

  const SimTrace trace = run_closed_loop(road, opt);
  REQUIRE(trace.completed);
  CHECK_FALSE(trace.degraded);
  CHECK_FALSE(trace.aborted);
  REQUIRE(trace.samples.size() > 100);

  double v_max_seen = 0.0;
  for (const SimSample& s : trace.samples) {
    for (double field :
         {s.vehicle.x, s.vehicle.y, s.vehicle.psi, s.vehicle.vx, s.vehicle.vy,
          s.vehicle.r, s.plan.s, s.plan.d, s.plan.mu, s.plan.v, s.input.delta,
          s.input.accel, s.kappa_max, s.solve_time, s.slack_max}) {
      REQUIRE(std::isfinite(field));
    }
    CHECK(std::abs(s.plan.d) <= 0.05);
    CHECK(s.slack_max < 1e-6);
    CHECK_FALSE(s.degraded);
    v_max_seen = std::max(v_max_seen, s.plan.v);
  }
  CHECK(v_max_seen <= 5.0 + 1e-3);
  CHECK(trace.samples.back().plan.v > 4.9);

  const SimMetrics metrics = compute_metrics(trace, road, VehicleParams{});
  CHECK(metrics.completed);
  CHECK(metrics.max_violation < 1e-6);
  CHECK(metrics.violation_count == 0);
  CHECK(metrics.max_abs_d <= 0.05);
  CHECK(metrics.final_s >= 60.0);
}

TEST_CASE("closed-loop runs are deterministic") {
  const RoadPath road = straight_road(120.0, 4.0);
  SimOptions opt;
  opt.start = {0.0, 0.1, 0.02, 2.0};
  opt.s_goal = 15.0;

  const SimTrace a = run_closed_loop(road, opt);
  const SimTrace b = run_closed_loop(road, opt);
  REQUIRE(a.samples.size() == b.samples.size());
  REQUIRE(a.completed == b.completed);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const SimSample& x = a.samples[i];
    const SimSample& y = b.samples[i];
    CHECK(x.vehicle.x == y.vehicle.x);
    CHECK(x.vehicle.y == y.vehicle.y);
    CHECK(x.vehicle.psi == y.vehicle.psi);
    CHECK(x.vehicle.vx == y.vehicle.vx);
    CHECK(x.vehicle.vy == y.vehicle.vy);
    CHECK(x.vehicle.r == y.vehicle.r);
    CHECK(x.input.delta == y.input.delta);
    CHECK(x.input.accel == y.input.accel);
    CHECK(x.status == y.status);
    // solve_time is wall clock and legitimately differs between runs
  }
}

TEST_CASE("metric formulas on hand-built traces") {
  const RoadPath road = straight_road();
  const VehicleParams vehicle;

  SimTrace stationary;
  for (int i = 0; i < 3; ++i) {
    SimSample s;
    s.t = 0.05 * i;
    s.solve_time = 0.002;
    stationary.samples.push_back(s);
  }
  const SimMetrics rest = compute_metrics(stationary, road, vehicle);
  CHECK(rest.mean_comb_accel == 0.0);
  CHECK(rest.mean_solve_time == doctest::Approx(0.002));
  CHECK(rest.violation_count == 0);

  // Constant-speed arc: combined acceleration is exactly v^2 tan(delta) / L.
  SimTrace circle;
  for (int i = 0; i < 10; ++i) {
    SimSample s;
    s.t = 0.05 * i;
    s.plan.v = 8.0;
    s.input.delta = 0.05;
    circle.samples.push_back(s);
  }
  const double want = 64.0 * std::tan(0.05) / vehicle.wheelbase;
  const SimMetrics arc = compute_metrics(circle, road, vehicle);
  CHECK(arc.mean_comb_accel == doctest::Approx(want).epsilon(1e-12));

  SimTrace off;
  SimSample bad;
  bad.plan.d = 1.4;  // front corner pokes out of the 1.5 m half width
  off.samples.push_back(bad);
  const SimMetrics viol = compute_metrics(off, road, vehicle);
  CHECK(viol.max_violation > 0.5);
  CHECK(viol.violation_count == 1);

  CHECK_THROWS_AS(compute_metrics(SimTrace{}, road, vehicle), Error);
}

TEST_CASE("trace export uses the fixed column set") {
  SimTrace trace;
  SimSample s;
  s.t = 0.05;
  s.plan = {1.0, 0.1, 0.02, 3.0};
  s.input = {0.01, 0.5};
  trace.samples.push_back(s);
  s.degraded = true;
  trace.samples.push_back(s);

  std::ostringstream out;
  write_trace_csv(trace, out);
  std::istringstream lines(out.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "t,X,Y,psi,vx,vy,r,s,d,mu,v,delta,acc,kappa_max,status,solve_time,"
        "slack_max");
  std::string row;
  int rows = 0;
  while (std::getline(lines, row)) {
    CHECK(std::count(row.begin(), row.end(), ',') == 16);
    ++rows;
  }
  CHECK(rows == 2);
  CHECK(out.str().find("degraded") != std::string::npos);
  CHECK(out.str().find("optimal") != std::string::npos);
}

TEST_CASE("the default goal leaves room for the look-ahead window") {
  MpcConfig c;
  c.horizon = 40;
  c.ts = 0.05;
  const RoadPath long_road = straight_road(1000.0, 10.0);
  CHECK(default_s_goal(long_road, c) == doctest::Approx(950.0));

  const RoadPath short_road = straight_road(40.0, 10.0);
  CHECK_THROWS_AS(default_s_goal(short_road, c), Error);
}
