#include "vrp/model.hpp"

#include <cmath>

namespace vrp {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSingularTol = 1e-6;

double denominator(double d, double kappa) {
  const double den = 1.0 - d * kappa;
  if (den <= kSingularTol) {
    fail(ErrorCode::singularity,
         "curvilinear dynamics singular: 1 - d*kappa <= 1e-6");
  }
  return den;
}

}  // namespace

void VehicleParams::validate() const {
  if (!(wheelbase > 0.0) || !(rear_to_center > 0.0) || !(car_length > 0.0) ||
      !(car_width > 0.0)) {
    fail(ErrorCode::invalid_argument, "vehicle geometry must be positive");
  }
  if (!(a_max > 0.0) || !(delta_max > 0.0) || !(delta_max < kPi / 2.0)) {
    fail(ErrorCode::invalid_argument, "vehicle limits must be positive");
  }
  if (!(accel_min < accel_max) || !(mu_min < mu_max) || !(v_bar > 0.0)) {
    fail(ErrorCode::invalid_argument, "vehicle bounds are inverted");
  }
  if (!(mu_max < kPi / 2.0) || !(-mu_min < kPi / 2.0)) {
    fail(ErrorCode::invalid_argument, "heading-error box must stay acute");
  }
}

double d_max_at_zero_heading(double width_left, double width_right,
                             const VehicleParams& params) {
  const double half = params.car_width / 2.0;
  return std::max(std::abs(width_left + half), std::abs(width_right - half));
}

Eigen::Vector4d dynamics_mpc(const PlanState& x, const ControlInput& u,
                             double kappa, const VehicleParams& params) {
  const double den = denominator(x.d, kappa);
  const double cmu = std::cos(x.mu);
  const double s_dot = x.v * cmu / den;
  Eigen::Vector4d f;
  f(0) = s_dot;
  f(1) = x.v * std::sin(x.mu);
  f(2) = x.v * std::tan(u.delta) / params.wheelbase - kappa * s_dot;
  f(3) = u.accel;
  return f;
}

void dynamics_mpc_jacobian(const PlanState& x, const ControlInput& u,
                           double kappa, const VehicleParams& params,
                           Eigen::Matrix4d& dfdx,
                           Eigen::Matrix<double, 4, 2>& dfdu) {
  const double den = denominator(x.d, kappa);
  const double cmu = std::cos(x.mu);
  const double smu = std::sin(x.mu);
  const double cd = std::cos(u.delta);

  const double ds_dd = x.v * cmu * kappa / (den * den);
  const double ds_dmu = -x.v * smu / den;
  const double ds_dv = cmu / den;

  dfdx.setZero();
  dfdu.setZero();
  // row 0: s'
  dfdx(0, 1) = ds_dd;
  dfdx(0, 2) = ds_dmu;
  dfdx(0, 3) = ds_dv;
  // row 1: d'
  dfdx(1, 2) = x.v * cmu;
  dfdx(1, 3) = smu;
  // row 2: mu'
  dfdx(2, 1) = -kappa * ds_dd;
  dfdx(2, 2) = -kappa * ds_dmu;
  dfdx(2, 3) = std::tan(u.delta) / params.wheelbase - kappa * ds_dv;
  dfdu(2, 0) = x.v / (params.wheelbase * cd * cd);
  // row 3: v'
  dfdu(3, 1) = 1.0;
}

Eigen::Vector3d dynamics_game(const GameState& z, const ControlInput& u,
                              double nu, const VehicleParams& params) {
  const double den = denominator(z.d, nu);
  const double cmu = std::cos(z.mu);
  Eigen::Vector3d f;
  f(0) = z.v * std::sin(z.mu);
  f(1) = z.v * std::tan(u.delta) / params.wheelbase - nu * z.v * cmu / den;
  f(2) = u.accel;
  return f;
}

GameState rk4_step(const GameState& z, const ControlInput& u, double nu,
                   double ts, const VehicleParams& params) {
  const auto eval = [&](const GameState& at) {
    return dynamics_game(at, u, nu, params);
  };
  const auto advance = [](const GameState& at, const Eigen::Vector3d& k,
                          double h) {
    return GameState{at.d + h * k(0), at.mu + h * k(1), at.v + h * k(2)};
  };
  const Eigen::Vector3d k1 = eval(z);
  const Eigen::Vector3d k2 = eval(advance(z, k1, ts / 2.0));
  const Eigen::Vector3d k3 = eval(advance(z, k2, ts / 2.0));
  const Eigen::Vector3d k4 = eval(advance(z, k3, ts));
  const Eigen::Vector3d total = (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
  return advance(z, total, ts);
}

Eigen::Vector4d trapezoidal_residual(const PlanState& xk, const PlanState& xk1,
                                     const ControlInput& uk, double kappa_k,
                                     double kappa_k1, double ts,
                                     const VehicleParams& params) {
  const Eigen::Vector4d fk = dynamics_mpc(xk, uk, kappa_k, params);
  const Eigen::Vector4d fk1 = dynamics_mpc(xk1, uk, kappa_k1, params);
  Eigen::Vector4d r;
  r(0) = xk1.s - xk.s;
  r(1) = xk1.d - xk.d;
  r(2) = xk1.mu - xk.mu;
  r(3) = xk1.v - xk.v;
  return r - (ts / 2.0) * (fk + fk1);
}

double acc_constraint_value(double v, const ControlInput& u,
                            const VehicleParams& params) {
  const double a_lat = v * v * std::tan(u.delta) / params.wheelbase;
  return a_lat * a_lat + u.accel * u.accel - params.a_max * params.a_max;
}

Eigen::Vector3d acc_constraint_gradient(double v, const ControlInput& u,
                                        const VehicleParams& params) {
  const double t = std::tan(u.delta);
  const double cd = std::cos(u.delta);
  const double a_lat = v * v * t / params.wheelbase;
  Eigen::Vector3d g;
  g(0) = 2.0 * a_lat * 2.0 * v * t / params.wheelbase;
  g(1) = 2.0 * a_lat * v * v / (params.wheelbase * cd * cd);
  g(2) = 2.0 * u.accel;
  return g;
}

std::array<double, 4> road_constraint_values(double d, double mu,
                                             double width_left,
                                             double width_right,
                                             const VehicleParams& params) {
  const double smu = std::sin(mu);
  const double half_w = params.car_width / 2.0;
  const double half_l = params.car_length / 2.0;
  const double cw_plus = half_w * std::cos(mu) + half_l * smu;
  const double cw_minus = half_w * std::cos(mu) - half_l * smu;
  const double d_ref = d + params.rear_to_center * smu;
  return {
      d_ref + cw_plus - width_right,
      d_ref + cw_minus - width_right,
      -d_ref + cw_plus + width_left,
      -d_ref + cw_minus + width_left,
  };
}

Eigen::Matrix<double, 4, 2> road_constraint_jacobian(
    double mu, double width_left, double width_right,
    const VehicleParams& params) {
  (void)width_left;
  (void)width_right;
  const double cmu = std::cos(mu);
  const double smu = std::sin(mu);
  const double half_w = params.car_width / 2.0;
  const double half_l = params.car_length / 2.0;
  const double dcw_plus = -half_w * smu + half_l * cmu;
  const double dcw_minus = -half_w * smu - half_l * cmu;
  const double dref_dmu = params.rear_to_center * cmu;
  Eigen::Matrix<double, 4, 2> grad;
  grad(0, 0) = 1.0;
  grad(0, 1) = dref_dmu + dcw_plus;
  grad(1, 0) = 1.0;
  grad(1, 1) = dref_dmu + dcw_minus;
  grad(2, 0) = -1.0;
  grad(2, 1) = -dref_dmu + dcw_plus;
  grad(3, 0) = -1.0;
  grad(3, 1) = -dref_dmu + dcw_minus;
  return grad;
}

bool state_feasible(const GameState& z, double width_left, double width_right,
                    const VehicleParams& params, double v_cap) {
  if (z.mu < params.mu_min || z.mu > params.mu_max) return false;
  if (z.v < 0.0 || z.v > v_cap) return false;
  const auto road =
      road_constraint_values(z.d, z.mu, width_left, width_right, params);
  for (double g : road) {
    if (g > 0.0) return false;
  }
  return true;
}

}  // namespace vrp
