#pragma once

#include <stdexcept>
#include <string>

namespace vrp {

enum class ErrorCode {
  invalid_argument,
  io,
  domain,
  singularity,
  projection,
  no_convergence,
  internal,
};

// All recoverable failures in the library throw this; the C boundary maps
// code() onto vrp_status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

// Geometry and limits of the car. Defaults describe a compact passenger car;
// lengths in meters, accelerations in m/s^2, angles in radians.
struct VehicleParams {
  double wheelbase = 2.68;       // L, rear to front axle
  double rear_to_center = 1.34;  // l_r, rear axle to geometric center
  double car_length = 4.52;      // L_c, bumper to bumper
  double car_width = 1.817;      // W_c
  double a_max = 1.6;            // combined lateral/longitudinal budget
  double delta_max = 0.6;        // steering box [-delta_max, delta_max]
  double accel_min = -1.6;
  double accel_max = 1.6;
  double mu_min = -0.2;  // heading-error box
  double mu_max = 0.2;
  double v_bar = 40.0;  // global speed cap

  void validate() const;
};

// Planner state in curvilinear coordinates: progress along the path, lateral
// offset (positive left), heading error, speed.
struct PlanState {
  double s = 0.0;
  double d = 0.0;
  double mu = 0.0;
  double v = 0.0;
};

// Reduced game state (d, mu, v); progress is a spectator in the safety game.
struct GameState {
  double d = 0.0;
  double mu = 0.0;
  double v = 0.0;
};

struct ControlInput {
  double delta = 0.0;  // steering angle
  double accel = 0.0;  // longitudinal acceleration
};

// Widest |d| reachable at zero heading error given road widths; used in the
// stationary-policy validity condition and the curvature-rate bound.
double d_max_at_zero_heading(double width_left, double width_right,
                             const VehicleParams& params);

}  // namespace vrp
