#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "vrp/planner.hpp"
#include "vrp/road.hpp"
#include "vrp/types.hpp"

namespace vrp {

// Plant state in the global frame. (X, Y) locate the geometric center, psi
// is the heading, velocities are body-fixed at the center, r is the yaw
// rate. v_x never goes negative; the scenarios have no reverse driving.
struct SimVehicleState {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double r = 0.0;
};

// Single-track plant with linear tire forces, blended into the kinematic
// model at low speed where the slip angles are undefined.
struct SimParams {
  double mass = 1500.0;     // kg
  double inertia = 2500.0;  // I_z, kg m^2
  double lf = 1.34;         // center to front axle, m
  double lr = 1.34;         // center to rear axle, m
  double cf = 80000.0;      // front cornering stiffness, N/rad
  double cr = 80000.0;      // rear cornering stiffness, N/rad
  double blend_v_lo = 0.5;  // pure kinematic at or below, m/s
  double blend_v_hi = 3.0;  // pure dynamic at or above, m/s
  double plant_step = 0.01; // integration step, s

  // The axle split must reproduce the planning model's wheelbase or the two
  // models disagree about the same car.
  void validate(const VehicleParams& vehicle) const;
};

// Time derivative of the dynamic branch. Valid for v_x well above zero;
// blended_plant_step never evaluates it below blend_v_lo.
SimVehicleState dynamic_bicycle_derivative(const SimVehicleState& state,
                                           const ControlInput& u,
                                           const SimParams& p,
                                           const VehicleParams& vehicle);

// One RK4 step of the blended plant: the derivative is the convex
// combination lambda * dynamic + (1 - lambda) * kinematic with
// lambda = clamp((v_x - blend_v_lo) / (blend_v_hi - blend_v_lo), 0, 1),
// so the right-hand side is continuous in v_x. v_x is clamped at zero
// afterwards.
SimVehicleState blended_plant_step(const SimVehicleState& state,
                                   const ControlInput& u, const SimParams& p,
                                   const VehicleParams& vehicle, double dt);

// One controller-period sample of a closed-loop run.
struct SimSample {
  double t = 0.0;
  SimVehicleState vehicle;
  PlanState plan;       // rear-axle projection, v = v_x
  ControlInput input;   // applied over the following period
  double kappa_max = 0.0;
  MpcStatus status = MpcStatus::optimal;
  bool degraded = false;
  double solve_time = 0.0;
  double slack_max = 0.0;
};

struct SimTrace {
  std::vector<SimSample> samples;
  bool completed = false;  // reached the arc-length goal
  bool degraded = false;   // stopped because the solver gave up
  bool aborted = false;    // projection lost, partial trace
  double final_s = 0.0;
};

struct SimOptions {
  SimParams plant;
  MpcConfig controller;
  VehicleParams vehicle;
  PlanState start;
  // Negative: road length minus the horizon's look-ahead plus margin, so
  // the prediction and the adaptive curvature scan stay on the path.
  double s_goal = -1.0;
  double duration = 300.0;  // simulated seconds before giving up
  bool abort_on_violation = false;
};

double default_s_goal(const RoadPath& road, const MpcConfig& controller);

// Runs the controller at its period with zero-order-held inputs while the
// plant integrates at the finer plant step. Terminates on the goal, the
// duration cap, a degraded solver step, or (only when abort_on_violation)
// a hard road-constraint violation; violations are otherwise recorded and
// the run continues so baseline metrics exist. A lost projection aborts
// with the partial trace.
SimTrace run_closed_loop(const RoadPath& road, const SimOptions& options);

struct SimMetrics {
  double mean_solve_time = 0.0;
  double mean_comb_accel = 0.0;  // sqrt(a_lat^2 + a_long^2), planner model
  double max_violation = 0.0;    // road corner constraints, plant state
  double mean_abs_d = 0.0;
  double max_abs_d = 0.0;
  double duration = 0.0;
  double final_s = 0.0;
  bool completed = false;
  bool degraded = false;
  int violation_count = 0;  // samples with violation above tolerance

  std::string to_json() const;
};

SimMetrics compute_metrics(const SimTrace& trace, const RoadPath& road,
                           const VehicleParams& vehicle);

const char* mpc_status_name(MpcStatus status);

// Header row then one line per sample:
// t,X,Y,psi,vx,vy,r,s,d,mu,v,delta,acc,kappa_max,status,solve_time,slack_max
void write_trace_csv(const SimTrace& trace, std::ostream& out);

}  // namespace vrp
