#include "vrp/sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <nlohmann/json.hpp>

#include "vrp/model.hpp"

namespace vrp {

namespace {

SimVehicleState kinematic_derivative(const SimVehicleState& z,
                                     const ControlInput& u, const SimParams& p,
                                     const VehicleParams& vehicle) {
  // The kinematic model has no lateral states: yaw rate and lateral
  // velocity are tied algebraically to speed and steering, which keeps the
  // rear axle slip-free. The stored (v_y, r) are ignored here; their rates
  // track the tie so an on-manifold state stays on it.
  const double tan_d = std::tan(u.delta);
  const double yaw_rate = z.vx * tan_d / vehicle.wheelbase;
  const double vy = p.lr * yaw_rate;
  SimVehicleState dz;
  dz.x = z.vx * std::cos(z.psi) - vy * std::sin(z.psi);
  dz.y = z.vx * std::sin(z.psi) + vy * std::cos(z.psi);
  dz.psi = yaw_rate;
  dz.vx = u.accel;
  dz.r = u.accel * tan_d / vehicle.wheelbase;
  dz.vy = p.lr * dz.r;
  return dz;
}

SimVehicleState blended_derivative(const SimVehicleState& z,
                                   const ControlInput& u, const SimParams& p,
                                   const VehicleParams& vehicle) {
  const double lambda =
      std::clamp((z.vx - p.blend_v_lo) / (p.blend_v_hi - p.blend_v_lo), 0.0,
                 1.0);
  SimVehicleState dz;
  if (lambda < 1.0) {
    dz = kinematic_derivative(z, u, p, vehicle);
  }
  if (lambda > 0.0) {
    const SimVehicleState dyn = dynamic_bicycle_derivative(z, u, p, vehicle);
    dz.x = (1.0 - lambda) * dz.x + lambda * dyn.x;
    dz.y = (1.0 - lambda) * dz.y + lambda * dyn.y;
    dz.psi = (1.0 - lambda) * dz.psi + lambda * dyn.psi;
    dz.vx = (1.0 - lambda) * dz.vx + lambda * dyn.vx;
    dz.vy = (1.0 - lambda) * dz.vy + lambda * dyn.vy;
    dz.r = (1.0 - lambda) * dz.r + lambda * dyn.r;
  }
  return dz;
}

SimVehicleState advance(const SimVehicleState& z, const SimVehicleState& dz,
                        double h) {
  SimVehicleState out;
  out.x = z.x + h * dz.x;
  out.y = z.y + h * dz.y;
  out.psi = z.psi + h * dz.psi;
  out.vx = z.vx + h * dz.vx;
  out.vy = z.vy + h * dz.vy;
  out.r = z.r + h * dz.r;
  return out;
}

double road_violation(const PlanState& plan, const RoadPath& road,
                      const VehicleParams& vehicle) {
  const auto corners = road_constraint_values(
      plan.d, plan.mu, road.width_left(), road.width_right(), vehicle);
  double worst = 0.0;
  for (double c : corners) worst = std::max(worst, c);
  return worst;
}

}  // namespace

void SimParams::validate(const VehicleParams& vehicle) const {
  if (!(mass > 0.0) || !(inertia > 0.0) || !(cf > 0.0) || !(cr > 0.0)) {
    fail(ErrorCode::invalid_argument, "plant masses and stiffnesses must be positive");
  }
  if (!(lf > 0.0) || !(lr > 0.0)) {
    fail(ErrorCode::invalid_argument, "axle distances must be positive");
  }
  if (std::abs(lf + lr - vehicle.wheelbase) > 1e-9) {
    fail(ErrorCode::invalid_argument,
         "axle split must add up to the planning wheelbase");
  }
  if (!(blend_v_lo < blend_v_hi)) {
    fail(ErrorCode::invalid_argument, "blend bounds must be ordered");
  }
  if (!(plant_step > 0.0)) {
    fail(ErrorCode::invalid_argument, "plant step must be positive");
  }
}

SimVehicleState dynamic_bicycle_derivative(const SimVehicleState& z,
                                           const ControlInput& u,
                                           const SimParams& p,
                                           const VehicleParams& vehicle) {
  (void)vehicle;
  // Slip angles need forward motion; the blend keeps v_x above blend_v_lo
  // on this branch, the floor only guards direct callers.
  const double vx = std::max(z.vx, 1e-3);
  const double alpha_f = u.delta - std::atan((z.vy + p.lf * z.r) / vx);
  const double alpha_r = -std::atan((z.vy - p.lr * z.r) / vx);
  const double force_f = p.cf * alpha_f;
  const double force_r = p.cr * alpha_r;
  SimVehicleState dz;
  dz.x = z.vx * std::cos(z.psi) - z.vy * std::sin(z.psi);
  dz.y = z.vx * std::sin(z.psi) + z.vy * std::cos(z.psi);
  dz.psi = z.r;
  dz.vx = u.accel + z.vy * z.r - force_f * std::sin(u.delta) / p.mass;
  dz.vy = (force_f * std::cos(u.delta) + force_r) / p.mass - z.vx * z.r;
  dz.r = (p.lf * force_f * std::cos(u.delta) - p.lr * force_r) / p.inertia;
  return dz;
}

SimVehicleState blended_plant_step(const SimVehicleState& z,
                                   const ControlInput& u, const SimParams& p,
                                   const VehicleParams& vehicle, double dt) {
  if (!(dt > 0.0)) fail(ErrorCode::invalid_argument, "plant step must be positive");
  const SimVehicleState k1 = blended_derivative(z, u, p, vehicle);
  const SimVehicleState k2 =
      blended_derivative(advance(z, k1, 0.5 * dt), u, p, vehicle);
  const SimVehicleState k3 =
      blended_derivative(advance(z, k2, 0.5 * dt), u, p, vehicle);
  const SimVehicleState k4 =
      blended_derivative(advance(z, k3, dt), u, p, vehicle);
  SimVehicleState out = z;
  const double w = dt / 6.0;
  out.x += w * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
  out.y += w * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y);
  out.psi += w * (k1.psi + 2.0 * k2.psi + 2.0 * k3.psi + k4.psi);
  out.vx += w * (k1.vx + 2.0 * k2.vx + 2.0 * k3.vx + k4.vx);
  out.vy += w * (k1.vy + 2.0 * k2.vy + 2.0 * k3.vy + k4.vy);
  out.r += w * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r);
  out.vx = std::max(out.vx, 0.0);
  return out;
}

double default_s_goal(const RoadPath& road, const MpcConfig& controller) {
  const double look_ahead =
      controller.horizon * controller.ts * road.max_speed_limit() + 30.0;
  const double goal = road.total_length() - look_ahead;
  if (goal <= 0.0) {
    fail(ErrorCode::domain, "road too short for the horizon look-ahead");
  }
  return goal;
}

SimTrace run_closed_loop(const RoadPath& road, const SimOptions& options) {
  options.controller.validate();
  options.vehicle.validate();
  options.plant.validate(options.vehicle);
  if (options.plant.plant_step > options.controller.ts + 1e-12) {
    fail(ErrorCode::invalid_argument,
         "plant step must not exceed the controller period");
  }
  const double s_goal = options.s_goal >= 0.0
                            ? options.s_goal
                            : default_s_goal(road, options.controller);
  const double ts = options.controller.ts;
  const int substeps =
      std::max(1, static_cast<int>(std::lround(ts / options.plant.plant_step)));
  const double dt = ts / substeps;

  MpcPlanner planner(road, options.controller, options.vehicle);
  const Pose rear = road.global_pose(options.start.s, options.start.d,
                                     options.start.mu);
  SimVehicleState veh;
  veh.psi = rear.psi;
  veh.x = rear.x + options.plant.lr * std::cos(rear.psi);
  veh.y = rear.y + options.plant.lr * std::sin(rear.psi);
  veh.vx = options.start.v;

  SimTrace trace;
  double t = 0.0;
  double s_hint = options.start.s;
  for (;;) {
    const double xr = veh.x - options.plant.lr * std::cos(veh.psi);
    const double yr = veh.y - options.plant.lr * std::sin(veh.psi);
    Curvilinear cur;
    try {
      cur = road.project_to_path(xr, yr, veh.psi, s_hint);
    } catch (const Error&) {
      trace.aborted = true;
      break;
    }
    trace.final_s = cur.s;
    s_hint = cur.s;
    if (cur.s >= s_goal) {
      trace.completed = true;
      break;
    }
    if (t > options.duration + 1e-9) break;

    const PlanState plan{cur.s, cur.d, cur.mu, veh.vx};
    const MpcPlanner::StepResult step = planner.step(plan);

    SimSample sample;
    sample.t = t;
    sample.vehicle = veh;
    sample.plan = plan;
    sample.input = step.input;
    sample.kappa_max = step.kappa_max;
    sample.status = step.solution.status;
    sample.degraded = step.degraded;
    sample.solve_time = step.solution.solve_time;
    sample.slack_max = step.solution.max_slack;
    trace.samples.push_back(sample);

    if (step.degraded) {
      trace.degraded = true;
      break;
    }
    if (options.abort_on_violation &&
        road_violation(plan, road, options.vehicle) > 1e-6) {
      break;
    }
    for (int i = 0; i < substeps; ++i) {
      veh = blended_plant_step(veh, step.input, options.plant,
                               options.vehicle, dt);
    }
    t += ts;
  }
  return trace;
}

SimMetrics compute_metrics(const SimTrace& trace, const RoadPath& road,
                           const VehicleParams& vehicle) {
  if (trace.samples.empty()) {
    fail(ErrorCode::invalid_argument, "metrics need a nonempty trace");
  }
  SimMetrics m;
  m.completed = trace.completed;
  m.degraded = trace.degraded;
  m.final_s = trace.final_s;
  m.duration = trace.samples.back().t;
  for (const SimSample& sample : trace.samples) {
    m.mean_solve_time += sample.solve_time;
    const double a_lat = sample.plan.v * sample.plan.v *
                         std::tan(sample.input.delta) / vehicle.wheelbase;
    m.mean_comb_accel += std::hypot(a_lat, sample.input.accel);
    const double viol = road_violation(sample.plan, road, vehicle);
    m.max_violation = std::max(m.max_violation, viol);
    if (viol > 1e-6) ++m.violation_count;
    m.mean_abs_d += std::abs(sample.plan.d);
    m.max_abs_d = std::max(m.max_abs_d, std::abs(sample.plan.d));
  }
  const double n = static_cast<double>(trace.samples.size());
  m.mean_solve_time /= n;
  m.mean_comb_accel /= n;
  m.mean_abs_d /= n;
  return m;
}

std::string SimMetrics::to_json() const {
  nlohmann::json j;
  j["mean_solve_time"] = mean_solve_time;
  j["mean_comb_accel"] = mean_comb_accel;
  j["max_violation"] = max_violation;
  j["mean_abs_d"] = mean_abs_d;
  j["max_abs_d"] = max_abs_d;
  j["duration"] = duration;
  j["final_s"] = final_s;
  j["completed"] = completed;
  j["degraded"] = degraded;
  j["violation_count"] = violation_count;
  return j.dump(2);
}

const char* mpc_status_name(MpcStatus status) {
  switch (status) {
    case MpcStatus::optimal:
      return "optimal";
    case MpcStatus::max_iter:
      return "max_iter";
    case MpcStatus::infeasible:
      return "infeasible";
  }
  return "unknown";
}

void write_trace_csv(const SimTrace& trace, std::ostream& out) {
  out << "t,X,Y,psi,vx,vy,r,s,d,mu,v,delta,acc,kappa_max,status,solve_time,"
         "slack_max\n";
  const auto stream_flags = out.flags();
  const auto stream_precision = out.precision();
  out.precision(12);
  for (const SimSample& s : trace.samples) {
    out << s.t << ',' << s.vehicle.x << ',' << s.vehicle.y << ','
        << s.vehicle.psi << ',' << s.vehicle.vx << ',' << s.vehicle.vy << ','
        << s.vehicle.r << ',' << s.plan.s << ',' << s.plan.d << ','
        << s.plan.mu << ',' << s.plan.v << ',' << s.input.delta << ','
        << s.input.accel << ',' << s.kappa_max << ','
        << (s.degraded ? "degraded" : mpc_status_name(s.status)) << ','
        << s.solve_time << ',' << s.slack_max << '\n';
  }
  out.flags(stream_flags);
  out.precision(stream_precision);
}

}  // namespace vrp
