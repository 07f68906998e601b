#pragma once

#include <array>

#include <Eigen/Core>

#include "vrp/types.hpp"

namespace vrp {

// Curvilinear kinematic bicycle, planner variant. State (s, d, mu, v), input
// (delta, accel), kappa is the path curvature at s. Throws
// ErrorCode::singularity when 1 - d*kappa <= 1e-6.
//   s'  = v cos(mu) / (1 - d kappa)
//   d'  = v sin(mu)
//   mu' = v tan(delta)/L - kappa v cos(mu)/(1 - d kappa)
//   v'  = accel
Eigen::Vector4d dynamics_mpc(const PlanState& x, const ControlInput& u,
                             double kappa, const VehicleParams& params);

// Jacobians of dynamics_mpc w.r.t. state and input at fixed kappa. The s
// column is structurally zero (curvature is held constant within a segment).
void dynamics_mpc_jacobian(const PlanState& x, const ControlInput& u,
                           double kappa, const VehicleParams& params,
                           Eigen::Matrix4d& dfdx,
                           Eigen::Matrix<double, 4, 2>& dfdu);

// Reduced safety-game dynamics over (d, mu, v); the adversary plays the
// curvature nu.
Eigen::Vector3d dynamics_game(const GameState& z, const ControlInput& u,
                              double nu, const VehicleParams& params);

// Classic RK4 step of the game dynamics with zero-order-held input and
// adversary curvature.
GameState rk4_step(const GameState& z, const ControlInput& u, double nu,
                   double ts, const VehicleParams& params);

// Trapezoidal defect for direct collocation:
//   x_{k+1} - x_k - ts/2 (f(x_k, u_k, kappa_k) + f(x_{k+1}, u_k, kappa_k1)).
Eigen::Vector4d trapezoidal_residual(const PlanState& xk, const PlanState& xk1,
                                     const ControlInput& uk, double kappa_k,
                                     double kappa_k1, double ts,
                                     const VehicleParams& params);

// Combined acceleration constraint, negative when satisfied:
//   (v^2 tan(delta)/L)^2 + accel^2 - a_max^2.
double acc_constraint_value(double v, const ControlInput& u,
                            const VehicleParams& params);

// Gradient of acc_constraint_value w.r.t. (v, delta, accel).
Eigen::Vector3d acc_constraint_gradient(double v, const ControlInput& u,
                                        const VehicleParams& params);

// Four smooth road-edge clearances, negative when the whole car body stays
// inside [width_left, width_right]. Order: {right front-corner, right
// rear-corner, left front-corner, left rear-corner}, where "front/rear" pick
// the +/- branch of the half-diagonal term
//   C_w(mu) = (W_c/2) cos(mu) +/- (L_c/2) sin(mu).
std::array<double, 4> road_constraint_values(double d, double mu,
                                             double width_left,
                                             double width_right,
                                             const VehicleParams& params);

// Jacobian of road_constraint_values w.r.t. (d, mu), rows in the same order.
Eigen::Matrix<double, 4, 2> road_constraint_jacobian(
    double mu, double width_left, double width_right,
    const VehicleParams& params);

// Pointwise feasibility of a game state: heading-error box, 0 <= v <= v_cap,
// and all four road clearances.
bool state_feasible(const GameState& z, double width_left, double width_right,
                    const VehicleParams& params, double v_cap);

}  // namespace vrp
