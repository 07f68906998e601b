#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vrp/nnkernel.hpp"
#include "vrp/road.hpp"
#include "vrp/sqp.hpp"
#include "vrp/types.hpp"

namespace vrp {

// How the end of the prediction horizon is tied down. The safety variants
// confine the terminal state to a set the car can stay inside forever; the
// first two are the usual baselines.
enum class TerminalKind {
  none,           // no terminal condition
  zero_velocity,  // full stop at the end of the horizon
  dd_fixed,       // invariant-set membership at a fixed curvature bound
  dd_adaptive,    // same set, curvature bound tracked from the road ahead
  nn_adaptive,    // learned kernel membership, adaptive curvature bound
};

const char* terminal_kind_name(TerminalKind kind);
TerminalKind terminal_kind_from_name(const std::string& name);

struct TerminalStrategy {
  TerminalKind kind = TerminalKind::none;
  // dd_fixed only: curvature bound baked into the terminal set.
  double kappa_max = 0.0;
  // nn_adaptive only: minimum accepted membership value.
  double cutoff = 0.25;
  // nn_adaptive only: borrowed classifier, must outlive the planner.
  const MlpModel* model = nullptr;
};

struct MpcConfig {
  int horizon = 40;  // N: inputs u_0..u_N, states x_0..x_{N+1}
  double ts = 0.05;

  double q_d = 0.5;
  double q_mu = 1.0;
  double q_p = 1.0;  // terminal progress reward
  double q_lat = 0.2;
  double q_long = 0.2;
  double q_ddelta = 50.0;
  double q_da = 5.0;
  double q_d_term = 5.0;
  double q_mu_term = 10.0;

  double slack_penalty = 1000.0;  // l1 weight on road slack
  double kkt_tolerance = 1e-6;
  int max_iterations = 50;

  // Adaptive curvature bound: raw window maximum is floored here, increases
  // apply at once, decreases shrink by at most this fraction per step.
  double kappa_floor = 0.001;
  double kappa_decrease_rate = 0.1;

  TerminalStrategy terminal;

  void validate() const;
  // Round trip of everything except the borrowed model pointer.
  static MpcConfig from_json(const std::string& text);
  std::string to_json() const;
};

enum class MpcStatus { optimal, max_iter, infeasible };

struct MpcSolution {
  std::vector<PlanState> states;      // x_0 .. x_{N+1}
  std::vector<ControlInput> inputs;   // u_0 .. u_N
  std::vector<double> slack_pos;      // per stage, width_right side
  std::vector<double> slack_neg;      // per stage, width_left side
  MpcStatus status = MpcStatus::infeasible;
  double objective = 0.0;
  double kkt_residual = 0.0;
  double max_slack = 0.0;
  double solve_time = 0.0;  // seconds
  int iterations = 0;
};

// k, s, d, mu, v, delta, a, slack_pos, slack_neg per row; the terminal row
// leaves the input columns empty.
void dump_solution_csv(const MpcSolution& solution, std::ostream& out);

double stage_cost(const PlanState& x, const ControlInput& u,
                  const ControlInput& u_prev, const MpcConfig& config,
                  const VehicleParams& params);
double terminal_cost(const PlanState& x, const MpcConfig& config);

// Path-following optimal control problem over the fixed horizon:
// variables per stage are state, input and the two road slacks, the
// dynamics enter as trapezoidal collocation defects with the input held
// across each interval, and the road constraints are slack-softened while
// input, heading, speed and terminal-safety constraints stay hard.
// Curvature and speed limit along the horizon are sampled at the current
// iterate's arc positions once per solver iteration and held constant
// within it.
class MpcProblem : public NlpProblem {
 public:
  MpcProblem(const PlanState& x0, const ControlInput& u_prev,
             const RoadPath& path, const MpcConfig& config,
             const VehicleParams& params, double kappa_max);

  int num_vars() const override;
  int num_eq() const override;
  int num_ineq() const override;
  double objective(const Eigen::VectorXd& x) const override;
  void objective_gradient(const Eigen::VectorXd& x,
                          Eigen::VectorXd& grad) const override;
  void hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& eq_dual,
               const Eigen::VectorXd& ineq_dual,
               Eigen::SparseMatrix<double>& h) const override;
  void eq_constraints(const Eigen::VectorXd& x, Eigen::VectorXd& val,
                      Eigen::SparseMatrix<double>& jac) const override;
  void ineq_constraints(const Eigen::VectorXd& x, Eigen::VectorXd& val,
                        Eigen::SparseMatrix<double>& jac) const override;
  void eq_values(const Eigen::VectorXd& x,
                 Eigen::VectorXd& val) const override;
  void ineq_values(const Eigen::VectorXd& x,
                   Eigen::VectorXd& val) const override;
  void update_iterate(const Eigen::VectorXd& x) override;

  // Variable packing, also used to build warm starts.
  int stage_offset(int k) const;  // k in [0, N+1]; x at +0, u at +4, sl at +6
  Eigen::VectorXd pack(const std::vector<PlanState>& states,
                       const std::vector<ControlInput>& inputs) const;
  MpcSolution unpack(const Eigen::VectorXd& x) const;

  double kappa_at_stage(int k) const { return kappa_[k]; }
  double vmax_at_stage(int k) const { return vmax_[k]; }

 private:
  void refresh_samples(const Eigen::VectorXd& x);

  PlanState x0_;
  ControlInput u_prev_;
  const RoadPath* path_;
  MpcConfig config_;
  VehicleParams params_;
  double kappa_max_;
  std::vector<double> kappa_;  // per stage, frozen within an iteration
  std::vector<double> vmax_;
};

struct AdaptiveKappaState {
  double previous = 0.0;
  bool initialized = false;
};

// Curvature bound from the road ahead of the horizon end: scan a window
// sized by the distance needed to come to rest from v_terminal (with a 1.5
// safety factor), take the largest curvature magnitude, floor it, and
// rate-limit decreases so the terminal set never shrinks abruptly between
// steps. s_terminal beyond the path end is a domain error.
double adaptive_kappa_max(AdaptiveKappaState& state, double v_terminal,
                          double s_terminal, const RoadPath& path,
                          const MpcConfig& config);

// Receding-horizon controller. Owns the warm start, the previous input and
// the adaptive curvature state; one instance per control loop.
class MpcPlanner {
 public:
  MpcPlanner(const RoadPath& path, MpcConfig config,
             VehicleParams params = {});

  struct StepResult {
    ControlInput input;
    MpcSolution solution;
    bool degraded = false;   // solver failed, input is the previous one
    double kappa_max = 0.0;  // bound used by the terminal set, 0 if unused
  };

  StepResult step(const PlanState& x0);
  void reset();

  const MpcConfig& config() const { return config_; }
  const VehicleParams& params() const { return params_; }

 private:
  const RoadPath* path_;
  MpcConfig config_;
  VehicleParams params_;
  SqpSolver sqp_;
  std::optional<MpcSolution> previous_;
  ControlInput last_input_{0.0, 0.0};
  AdaptiveKappaState kappa_state_;
};

}  // namespace vrp
