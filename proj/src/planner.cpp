#include "vrp/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include <nlohmann/json.hpp>

#include "vrp/model.hpp"

namespace vrp {

namespace {

using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr int kStageIneq = 15;
constexpr int kTerminalIneqBase = 10;

bool has_terminal_equality(TerminalKind kind) {
  return kind == TerminalKind::zero_velocity ||
         kind == TerminalKind::dd_fixed || kind == TerminalKind::dd_adaptive;
}

int terminal_ineq_extras(TerminalKind kind) {
  switch (kind) {
    case TerminalKind::dd_fixed:
    case TerminalKind::dd_adaptive:
      return 4;  // d range pair and speed-bound pair
    case TerminalKind::nn_adaptive:
      return 1;  // membership value above the cutoff
    default:
      return 0;
  }
}

}  // namespace

const char* terminal_kind_name(TerminalKind kind) {
  switch (kind) {
    case TerminalKind::none:
      return "none";
    case TerminalKind::zero_velocity:
      return "zero-velocity";
    case TerminalKind::dd_fixed:
      return "dd-fixed";
    case TerminalKind::dd_adaptive:
      return "dd-adaptive";
    case TerminalKind::nn_adaptive:
      return "nndk-adaptive";
  }
  fail(ErrorCode::internal, "unknown terminal kind");
}

TerminalKind terminal_kind_from_name(const std::string& name) {
  for (TerminalKind kind :
       {TerminalKind::none, TerminalKind::zero_velocity, TerminalKind::dd_fixed,
        TerminalKind::dd_adaptive, TerminalKind::nn_adaptive}) {
    if (name == terminal_kind_name(kind)) return kind;
  }
  fail(ErrorCode::invalid_argument, "unknown terminal strategy: " + name);
}

void MpcConfig::validate() const {
  if (horizon < 1) fail(ErrorCode::invalid_argument, "horizon must be >= 1");
  if (!(ts > 0.0)) fail(ErrorCode::invalid_argument, "ts must be positive");
  for (double w : {q_d, q_mu, q_p, q_lat, q_long, q_ddelta, q_da, q_d_term,
                   q_mu_term}) {
    if (!(w >= 0.0)) {
      fail(ErrorCode::invalid_argument, "cost weights must be nonnegative");
    }
  }
  if (q_d_term < q_d || q_mu_term < q_mu) {
    fail(ErrorCode::invalid_argument,
         "terminal weights must not be below the stage weights");
  }
  if (!(slack_penalty > 0.0)) {
    fail(ErrorCode::invalid_argument, "slack penalty must be positive");
  }
  if (!(kkt_tolerance > 0.0) || max_iterations < 1) {
    fail(ErrorCode::invalid_argument, "solver tolerances out of range");
  }
  if (!(kappa_floor > 0.0)) {
    fail(ErrorCode::invalid_argument, "kappa floor must be positive");
  }
  if (!(kappa_decrease_rate > 0.0) || kappa_decrease_rate > 1.0) {
    fail(ErrorCode::invalid_argument, "kappa decrease rate must be in (0, 1]");
  }
  if (terminal.kind == TerminalKind::dd_fixed && !(terminal.kappa_max > 0.0)) {
    fail(ErrorCode::invalid_argument,
         "dd-fixed terminal strategy needs a positive curvature bound");
  }
  if (terminal.kind == TerminalKind::nn_adaptive &&
      !(terminal.cutoff > 0.0 && terminal.cutoff < 1.0)) {
    fail(ErrorCode::invalid_argument, "membership cutoff must be in (0, 1)");
  }
}

MpcConfig MpcConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::io, std::string("bad planner config: ") + e.what());
  }
  MpcConfig c;
  try {
    c.horizon = j.value("horizon", c.horizon);
    c.ts = j.value("ts", c.ts);
    c.q_d = j.value("q_d", c.q_d);
    c.q_mu = j.value("q_mu", c.q_mu);
    c.q_p = j.value("q_p", c.q_p);
    c.q_lat = j.value("q_lat", c.q_lat);
    c.q_long = j.value("q_long", c.q_long);
    c.q_ddelta = j.value("q_ddelta", c.q_ddelta);
    c.q_da = j.value("q_da", c.q_da);
    c.q_d_term = j.value("q_d_term", c.q_d_term);
    c.q_mu_term = j.value("q_mu_term", c.q_mu_term);
    c.slack_penalty = j.value("slack_penalty", c.slack_penalty);
    c.kkt_tolerance = j.value("kkt_tolerance", c.kkt_tolerance);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.kappa_floor = j.value("kappa_floor", c.kappa_floor);
    c.kappa_decrease_rate =
        j.value("kappa_decrease_rate", c.kappa_decrease_rate);
    if (j.contains("terminal")) {
      const auto& t = j.at("terminal");
      c.terminal.kind =
          terminal_kind_from_name(t.value("kind", std::string("none")));
      c.terminal.kappa_max = t.value("kappa_max", c.terminal.kappa_max);
      c.terminal.cutoff = t.value("cutoff", c.terminal.cutoff);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::io, std::string("bad planner config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string MpcConfig::to_json() const {
  nlohmann::json j{
      {"horizon", horizon},
      {"ts", ts},
      {"q_d", q_d},
      {"q_mu", q_mu},
      {"q_p", q_p},
      {"q_lat", q_lat},
      {"q_long", q_long},
      {"q_ddelta", q_ddelta},
      {"q_da", q_da},
      {"q_d_term", q_d_term},
      {"q_mu_term", q_mu_term},
      {"slack_penalty", slack_penalty},
      {"kkt_tolerance", kkt_tolerance},
      {"max_iterations", max_iterations},
      {"kappa_floor", kappa_floor},
      {"kappa_decrease_rate", kappa_decrease_rate},
      {"terminal",
       {{"kind", terminal_kind_name(terminal.kind)},
        {"kappa_max", terminal.kappa_max},
        {"cutoff", terminal.cutoff}}},
  };
  return j.dump(2);
}

double stage_cost(const PlanState& x, const ControlInput& u,
                  const ControlInput& u_prev, const MpcConfig& config,
                  const VehicleParams& params) {
  const double lat = x.v * x.v * std::tan(u.delta) / params.wheelbase;
  const double dd = u.delta - u_prev.delta;
  const double da = u.accel - u_prev.accel;
  return config.q_d * x.d * x.d + config.q_mu * x.mu * x.mu +
         config.q_lat * lat * lat + config.q_long * u.accel * u.accel +
         config.q_ddelta * dd * dd + config.q_da * da * da;
}

double terminal_cost(const PlanState& x, const MpcConfig& config) {
  return -config.q_p * x.s + config.q_d_term * x.d * x.d +
         config.q_mu_term * x.mu * x.mu;
}

MpcProblem::MpcProblem(const PlanState& x0, const ControlInput& u_prev,
                       const RoadPath& path, const MpcConfig& config,
                       const VehicleParams& params, double kappa_max)
    : x0_(x0),
      u_prev_(u_prev),
      path_(&path),
      config_(config),
      params_(params),
      kappa_max_(kappa_max) {
  config_.validate();
  params_.validate();
  switch (config_.terminal.kind) {
    case TerminalKind::dd_fixed:
      kappa_max_ = config_.terminal.kappa_max;
      break;
    case TerminalKind::dd_adaptive:
    case TerminalKind::nn_adaptive:
      if (!(kappa_max_ > 0.0)) {
        fail(ErrorCode::invalid_argument,
             "adaptive terminal strategy needs a positive curvature bound");
      }
      break;
    default:
      break;
  }
  if (config_.terminal.kind == TerminalKind::nn_adaptive) {
    if (config_.terminal.model == nullptr) {
      fail(ErrorCode::invalid_argument,
           "learned terminal strategy needs a loaded model");
    }
    config_.terminal.model->validate();
  }

  // Nominal curvature samples until the first solver iteration refreshes
  // them at the actual iterate.
  const int stages = config_.horizon + 2;
  kappa_.resize(stages);
  vmax_.resize(stages);
  for (int k = 0; k < stages; ++k) {
    const double s = std::clamp(x0_.s + k * config_.ts * std::max(x0_.v, 0.0),
                                0.0, path_->total_length());
    kappa_[k] = path_->curvature_at(s);
    vmax_[k] = std::min(path_->speed_limit_at(s), params_.v_bar);
  }
}

int MpcProblem::stage_offset(int k) const { return 8 * k; }

int MpcProblem::num_vars() const { return 8 * (config_.horizon + 1) + 6; }

int MpcProblem::num_eq() const {
  return 4 + 4 * (config_.horizon + 1) +
         (has_terminal_equality(config_.terminal.kind) ? 1 : 0);
}

int MpcProblem::num_ineq() const {
  return kStageIneq * (config_.horizon + 1) + kTerminalIneqBase +
         terminal_ineq_extras(config_.terminal.kind);
}

void MpcProblem::refresh_samples(const VectorXd& x) {
  const int stages = config_.horizon + 2;
  for (int k = 0; k < stages; ++k) {
    const double s =
        std::clamp(x(stage_offset(k) + 0), 0.0, path_->total_length());
    kappa_[k] = path_->curvature_at(s);
    vmax_[k] = std::min(path_->speed_limit_at(s), params_.v_bar);
  }
}

void MpcProblem::update_iterate(const VectorXd& x) { refresh_samples(x); }

double MpcProblem::objective(const VectorXd& x) const {
  const int n_stages = config_.horizon + 1;
  double total = 0.0;
  ControlInput prev = u_prev_;
  for (int k = 0; k < n_stages; ++k) {
    const int o = stage_offset(k);
    const PlanState xs{x(o + 0), x(o + 1), x(o + 2), x(o + 3)};
    const ControlInput u{x(o + 4), x(o + 5)};
    total += stage_cost(xs, u, prev, config_, params_);
    total += config_.slack_penalty * (x(o + 6) + x(o + 7));
    prev = u;
  }
  const int ot = stage_offset(n_stages);
  const PlanState xt{x(ot + 0), x(ot + 1), x(ot + 2), x(ot + 3)};
  total += terminal_cost(xt, config_);
  total += config_.slack_penalty * (x(ot + 4) + x(ot + 5));
  return total;
}

void MpcProblem::objective_gradient(const VectorXd& x, VectorXd& grad) const {
  const int n_stages = config_.horizon + 1;
  grad = VectorXd::Zero(num_vars());
  for (int k = 0; k < n_stages; ++k) {
    const int o = stage_offset(k);
    const double v = x(o + 3);
    const double delta = x(o + 4);
    const double accel = x(o + 5);
    grad(o + 1) += 2.0 * config_.q_d * x(o + 1);
    grad(o + 2) += 2.0 * config_.q_mu * x(o + 2);

    const double tan_d = std::tan(delta);
    const double sec2 = 1.0 + tan_d * tan_d;
    const double r = v * v * tan_d / params_.wheelbase;
    const double rv = 2.0 * v * tan_d / params_.wheelbase;
    const double rd = v * v * sec2 / params_.wheelbase;
    grad(o + 3) += 2.0 * config_.q_lat * r * rv;
    grad(o + 4) += 2.0 * config_.q_lat * r * rd;
    grad(o + 5) += 2.0 * config_.q_long * accel;

    const double prev_delta = k == 0 ? u_prev_.delta : x(o - 4);
    const double prev_accel = k == 0 ? u_prev_.accel : x(o - 3);
    const double ed = delta - prev_delta;
    const double ea = accel - prev_accel;
    grad(o + 4) += 2.0 * config_.q_ddelta * ed;
    grad(o + 5) += 2.0 * config_.q_da * ea;
    if (k > 0) {
      grad(o - 4) -= 2.0 * config_.q_ddelta * ed;
      grad(o - 3) -= 2.0 * config_.q_da * ea;
    }
    grad(o + 6) += config_.slack_penalty;
    grad(o + 7) += config_.slack_penalty;
  }
  const int ot = stage_offset(n_stages);
  grad(ot + 0) -= config_.q_p;
  grad(ot + 1) += 2.0 * config_.q_d_term * x(ot + 1);
  grad(ot + 2) += 2.0 * config_.q_mu_term * x(ot + 2);
  grad(ot + 4) += config_.slack_penalty;
  grad(ot + 5) += config_.slack_penalty;
}

void MpcProblem::hessian(const VectorXd& x, const VectorXd&, const VectorXd&,
                         SpMat& h) const {
  // Gauss-Newton model of the cost; constraint curvature is left out, the
  // tracking and input-rate weights dominate on this problem.
  const int n_stages = config_.horizon + 1;
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(12 * n_stages + 2));
  for (int k = 0; k < n_stages; ++k) {
    const int o = stage_offset(k);
    const double v = x(o + 3);
    const double delta = x(o + 4);
    trips.emplace_back(o + 1, o + 1, 2.0 * config_.q_d);
    trips.emplace_back(o + 2, o + 2, 2.0 * config_.q_mu);

    const double tan_d = std::tan(delta);
    const double sec2 = 1.0 + tan_d * tan_d;
    const double rv = 2.0 * v * tan_d / params_.wheelbase;
    const double rd = v * v * sec2 / params_.wheelbase;
    const double w = 2.0 * config_.q_lat;
    trips.emplace_back(o + 3, o + 3, w * rv * rv);
    trips.emplace_back(o + 3, o + 4, w * rv * rd);
    trips.emplace_back(o + 4, o + 3, w * rv * rd);

    const double extra = k < n_stages - 1 ? 1.0 : 0.0;
    trips.emplace_back(o + 4, o + 4,
                       w * rd * rd + 2.0 * config_.q_ddelta * (1.0 + extra));
    trips.emplace_back(o + 5, o + 5,
                       2.0 * config_.q_long + 2.0 * config_.q_da *
                                                  (1.0 + extra));
    if (k < n_stages - 1) {
      trips.emplace_back(o + 4, o + 12, -2.0 * config_.q_ddelta);
      trips.emplace_back(o + 12, o + 4, -2.0 * config_.q_ddelta);
      trips.emplace_back(o + 5, o + 13, -2.0 * config_.q_da);
      trips.emplace_back(o + 13, o + 5, -2.0 * config_.q_da);
    }
  }
  const int ot = stage_offset(n_stages);
  trips.emplace_back(ot + 1, ot + 1, 2.0 * config_.q_d_term);
  trips.emplace_back(ot + 2, ot + 2, 2.0 * config_.q_mu_term);
  h.resize(num_vars(), num_vars());
  h.setFromTriplets(trips.begin(), trips.end());
}

void MpcProblem::eq_values(const VectorXd& x, VectorXd& val) const {
  const int n_stages = config_.horizon + 1;
  val.resize(num_eq());
  const int o0 = stage_offset(0);
  val(0) = x(o0 + 0) - x0_.s;
  val(1) = x(o0 + 1) - x0_.d;
  val(2) = x(o0 + 2) - x0_.mu;
  val(3) = x(o0 + 3) - x0_.v;
  for (int k = 0; k < n_stages; ++k) {
    const int o = stage_offset(k);
    const int o1 = stage_offset(k + 1);
    const PlanState xk{x(o + 0), x(o + 1), x(o + 2), x(o + 3)};
    const PlanState xk1{x(o1 + 0), x(o1 + 1), x(o1 + 2), x(o1 + 3)};
    const ControlInput u{x(o + 4), x(o + 5)};
    val.segment<4>(4 + 4 * k) = trapezoidal_residual(
        xk, xk1, u, kappa_[k], kappa_[k + 1], config_.ts, params_);
  }
  if (has_terminal_equality(config_.terminal.kind)) {
    const int ot = stage_offset(n_stages);
    val(num_eq() - 1) = config_.terminal.kind == TerminalKind::zero_velocity
                            ? x(ot + 3)
                            : x(ot + 2);
  }
}

void MpcProblem::eq_constraints(const VectorXd& x, VectorXd& val,
                                SpMat& jac) const {
  eq_values(x, val);
  const int n_stages = config_.horizon + 1;
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(4 + 40 * n_stages + 1));
  const int o0 = stage_offset(0);
  for (int i = 0; i < 4; ++i) trips.emplace_back(i, o0 + i, 1.0);

  Eigen::Matrix4d ak, ak1;
  Eigen::Matrix<double, 4, 2> bk, bk1;
  for (int k = 0; k < n_stages; ++k) {
    const int o = stage_offset(k);
    const int o1 = stage_offset(k + 1);
    const int row = 4 + 4 * k;
    const PlanState xk{x(o + 0), x(o + 1), x(o + 2), x(o + 3)};
    const PlanState xk1{x(o1 + 0), x(o1 + 1), x(o1 + 2), x(o1 + 3)};
    const ControlInput u{x(o + 4), x(o + 5)};
    dynamics_mpc_jacobian(xk, u, kappa_[k], params_, ak, bk);
    dynamics_mpc_jacobian(xk1, u, kappa_[k + 1], params_, ak1, bk1);
    const double half = 0.5 * config_.ts;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        const double eye = r == c ? 1.0 : 0.0;
        trips.emplace_back(row + r, o + c, -eye - half * ak(r, c));
        trips.emplace_back(row + r, o1 + c, eye - half * ak1(r, c));
      }
      for (int c = 0; c < 2; ++c) {
        trips.emplace_back(row + r, o + 4 + c,
                           -half * (bk(r, c) + bk1(r, c)));
      }
    }
  }
  if (has_terminal_equality(config_.terminal.kind)) {
    const int ot = stage_offset(n_stages);
    const int col = config_.terminal.kind == TerminalKind::zero_velocity
                        ? ot + 3
                        : ot + 2;
    trips.emplace_back(num_eq() - 1, col, 1.0);
  }
  jac.resize(num_eq(), num_vars());
  jac.setFromTriplets(trips.begin(), trips.end());
}

void MpcProblem::ineq_values(const VectorXd& x, VectorXd& val) const {
  const int n_stages = config_.horizon + 1;
  val.resize(num_ineq());
  const double wl = path_->width_left();
  const double wr = path_->width_right();
  for (int k = 0; k < n_stages; ++k) {
    const int o = stage_offset(k);
    const int row = kStageIneq * k;
    const double mu = x(o + 2);
    const double v = x(o + 3);
    const ControlInput u{x(o + 4), x(o + 5)};
    val(row + 0) = acc_constraint_value(v, u, params_);
    const auto road = road_constraint_values(x(o + 1), mu, wl, wr, params_);
    val(row + 1) = road[0] - x(o + 6);
    val(row + 2) = road[1] - x(o + 6);
    val(row + 3) = road[2] - x(o + 7);
    val(row + 4) = road[3] - x(o + 7);
    val(row + 5) = -x(o + 6);
    val(row + 6) = -x(o + 7);
    val(row + 7) = mu - params_.mu_max;
    val(row + 8) = params_.mu_min - mu;
    val(row + 9) = -v;
    val(row + 10) = v - vmax_[k];
    val(row + 11) = u.delta - params_.delta_max;
    val(row + 12) = -u.delta - params_.delta_max;
    val(row + 13) = u.accel - params_.accel_max;
    val(row + 14) = params_.accel_min - u.accel;
  }

  const int ot = stage_offset(n_stages);
  const int row = kStageIneq * n_stages;
  const double d = x(ot + 1);
  const double mu = x(ot + 2);
  const double v = x(ot + 3);
  const auto road = road_constraint_values(d, mu, wl, wr, params_);
  val(row + 0) = road[0] - x(ot + 4);
  val(row + 1) = road[1] - x(ot + 4);
  val(row + 2) = road[2] - x(ot + 5);
  val(row + 3) = road[3] - x(ot + 5);
  val(row + 4) = -x(ot + 4);
  val(row + 5) = -x(ot + 5);
  val(row + 6) = mu - params_.mu_max;
  val(row + 7) = params_.mu_min - mu;
  val(row + 8) = -v;
  val(row + 9) = v - vmax_[n_stages];

  switch (config_.terminal.kind) {
    case TerminalKind::dd_fixed:
    case TerminalKind::dd_adaptive: {
      const double hi = wr - 0.5 * params_.car_width;
      const double lo = wl + 0.5 * params_.car_width;
      val(row + 10) = d - hi;
      val(row + 11) = lo - d;
      const double q = v * v * kappa_max_ / params_.a_max;
      val(row + 12) = q + kappa_max_ * d - 1.0;
      val(row + 13) = q - kappa_max_ * d - 1.0;
      break;
    }
    case TerminalKind::nn_adaptive: {
      // Pre-sigmoid form of membership >= cutoff. Same feasible set, but
      // the sigmoid's flat tails would make the linearization useless far
      // from the boundary.
      const double c = config_.terminal.cutoff;
      val(row + 10) = std::log(c / (1.0 - c)) -
                      config_.terminal.model->logit(
                          {d, mu, v, kappa_max_});
      break;
    }
    default:
      break;
  }
}

void MpcProblem::ineq_constraints(const VectorXd& x, VectorXd& val,
                                  SpMat& jac) const {
  ineq_values(x, val);
  const int n_stages = config_.horizon + 1;
  const double wl = path_->width_left();
  const double wr = path_->width_right();
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(23 * n_stages + 20));
  for (int k = 0; k < n_stages; ++k) {
    const int o = stage_offset(k);
    const int row = kStageIneq * k;
    const double v = x(o + 3);
    const ControlInput u{x(o + 4), x(o + 5)};
    const Eigen::Vector3d ag = acc_constraint_gradient(v, u, params_);
    trips.emplace_back(row + 0, o + 3, ag(0));
    trips.emplace_back(row + 0, o + 4, ag(1));
    trips.emplace_back(row + 0, o + 5, ag(2));
    const auto rj = road_constraint_jacobian(x(o + 2), wl, wr, params_);
    for (int r = 0; r < 4; ++r) {
      trips.emplace_back(row + 1 + r, o + 1, rj(r, 0));
      trips.emplace_back(row + 1 + r, o + 2, rj(r, 1));
      trips.emplace_back(row + 1 + r, o + 6 + (r < 2 ? 0 : 1), -1.0);
    }
    trips.emplace_back(row + 5, o + 6, -1.0);
    trips.emplace_back(row + 6, o + 7, -1.0);
    trips.emplace_back(row + 7, o + 2, 1.0);
    trips.emplace_back(row + 8, o + 2, -1.0);
    trips.emplace_back(row + 9, o + 3, -1.0);
    trips.emplace_back(row + 10, o + 3, 1.0);
    trips.emplace_back(row + 11, o + 4, 1.0);
    trips.emplace_back(row + 12, o + 4, -1.0);
    trips.emplace_back(row + 13, o + 5, 1.0);
    trips.emplace_back(row + 14, o + 5, -1.0);
  }

  const int ot = stage_offset(n_stages);
  const int row = kStageIneq * n_stages;
  const auto rj = road_constraint_jacobian(x(ot + 2), wl, wr, params_);
  for (int r = 0; r < 4; ++r) {
    trips.emplace_back(row + r, ot + 1, rj(r, 0));
    trips.emplace_back(row + r, ot + 2, rj(r, 1));
    trips.emplace_back(row + r, ot + 4 + (r < 2 ? 0 : 1), -1.0);
  }
  trips.emplace_back(row + 4, ot + 4, -1.0);
  trips.emplace_back(row + 5, ot + 5, -1.0);
  trips.emplace_back(row + 6, ot + 2, 1.0);
  trips.emplace_back(row + 7, ot + 2, -1.0);
  trips.emplace_back(row + 8, ot + 3, -1.0);
  trips.emplace_back(row + 9, ot + 3, 1.0);

  switch (config_.terminal.kind) {
    case TerminalKind::dd_fixed:
    case TerminalKind::dd_adaptive: {
      trips.emplace_back(row + 10, ot + 1, 1.0);
      trips.emplace_back(row + 11, ot + 1, -1.0);
      const double v = x(ot + 3);
      trips.emplace_back(row + 12, ot + 1, kappa_max_);
      trips.emplace_back(row + 12, ot + 3,
                         2.0 * v * kappa_max_ / params_.a_max);
      trips.emplace_back(row + 13, ot + 1, -kappa_max_);
      trips.emplace_back(row + 13, ot + 3,
                         2.0 * v * kappa_max_ / params_.a_max);
      break;
    }
    case TerminalKind::nn_adaptive: {
      const GameState z{x(ot + 1), x(ot + 2), x(ot + 3)};
      const Eigen::Vector4d g =
          config_.terminal.model->logit_gradient(z, kappa_max_);
      trips.emplace_back(row + 10, ot + 1, -g(0));
      trips.emplace_back(row + 10, ot + 2, -g(1));
      trips.emplace_back(row + 10, ot + 3, -g(2));
      break;
    }
    default:
      break;
  }
  jac.resize(num_ineq(), num_vars());
  jac.setFromTriplets(trips.begin(), trips.end());
}

VectorXd MpcProblem::pack(const std::vector<PlanState>& states,
                          const std::vector<ControlInput>& inputs) const {
  const int n_stages = config_.horizon + 1;
  if (static_cast<int>(states.size()) != n_stages + 1 ||
      static_cast<int>(inputs.size()) != n_stages) {
    fail(ErrorCode::invalid_argument, "warm start has wrong length");
  }
  VectorXd x = VectorXd::Zero(num_vars());
  for (int k = 0; k <= n_stages; ++k) {
    const int o = stage_offset(k);
    x(o + 0) = states[static_cast<std::size_t>(k)].s;
    x(o + 1) = states[static_cast<std::size_t>(k)].d;
    x(o + 2) = states[static_cast<std::size_t>(k)].mu;
    x(o + 3) = states[static_cast<std::size_t>(k)].v;
    if (k < n_stages) {
      x(o + 4) = inputs[static_cast<std::size_t>(k)].delta;
      x(o + 5) = inputs[static_cast<std::size_t>(k)].accel;
    }
  }
  return x;
}

MpcSolution MpcProblem::unpack(const VectorXd& x) const {
  const int n_stages = config_.horizon + 1;
  MpcSolution sol;
  sol.states.resize(static_cast<std::size_t>(n_stages + 1));
  sol.inputs.resize(static_cast<std::size_t>(n_stages));
  sol.slack_pos.resize(static_cast<std::size_t>(n_stages + 1));
  sol.slack_neg.resize(static_cast<std::size_t>(n_stages + 1));
  for (int k = 0; k <= n_stages; ++k) {
    const int o = stage_offset(k);
    sol.states[static_cast<std::size_t>(k)] = {x(o + 0), x(o + 1), x(o + 2),
                                               x(o + 3)};
    if (k < n_stages) {
      sol.inputs[static_cast<std::size_t>(k)] = {x(o + 4), x(o + 5)};
    }
    const int so = k < n_stages ? o + 6 : o + 4;
    sol.slack_pos[static_cast<std::size_t>(k)] = std::max(x(so + 0), 0.0);
    sol.slack_neg[static_cast<std::size_t>(k)] = std::max(x(so + 1), 0.0);
    sol.max_slack = std::max({sol.max_slack,
                              sol.slack_pos[static_cast<std::size_t>(k)],
                              sol.slack_neg[static_cast<std::size_t>(k)]});
  }
  return sol;
}

void dump_solution_csv(const MpcSolution& solution, std::ostream& out) {
  out << "k,s,d,mu,v,delta,a,slack_pos,slack_neg\n";
  char line[256];
  for (std::size_t k = 0; k < solution.states.size(); ++k) {
    const PlanState& x = solution.states[k];
    if (k < solution.inputs.size()) {
      const ControlInput& u = solution.inputs[k];
      std::snprintf(line, sizeof line,
                    "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", k, x.s,
                    x.d, x.mu, x.v, u.delta, u.accel, solution.slack_pos[k],
                    solution.slack_neg[k]);
    } else {
      std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.9g,,,%.9g,%.9g\n",
                    k, x.s, x.d, x.mu, x.v, solution.slack_pos[k],
                    solution.slack_neg[k]);
    }
    out << line;
  }
}

double adaptive_kappa_max(AdaptiveKappaState& state, double v_terminal,
                          double s_terminal, const RoadPath& path,
                          const MpcConfig& config) {
  if (s_terminal > path.total_length() + 1e-9) {
    fail(ErrorCode::domain, "window start beyond the end of the path");
  }
  const double s0 = std::clamp(s_terminal, 0.0, path.total_length());
  const double v = std::max(v_terminal, 0.0);
  VehicleParams params;  // a_max only
  const double t_stop = v / params.a_max;
  const double s_stop = 0.5 * params.a_max * t_stop * t_stop + v * t_stop;
  const double s1 = std::min(s0 + 1.5 * s_stop, path.total_length());
  const double raw = std::max(path.max_curvature_window(s0, s1),
                              config.kappa_floor);

  double adopted = raw;
  if (state.initialized && raw < state.previous) {
    // Shrinking the safe set is fine, growing it back is fine, but a sudden
    // large growth of the allowed speed envelope (smaller bound) is not;
    // decreases are rate limited.
    adopted =
        std::max(raw, state.previous * (1.0 - config.kappa_decrease_rate));
  }
  state.previous = adopted;
  state.initialized = true;
  return adopted;
}

MpcPlanner::MpcPlanner(const RoadPath& path, MpcConfig config,
                       VehicleParams params)
    : path_(&path), config_(std::move(config)), params_(params) {
  config_.validate();
  params_.validate();
}

void MpcPlanner::reset() {
  previous_.reset();
  last_input_ = {0.0, 0.0};
  kappa_state_ = {};
}

MpcPlanner::StepResult MpcPlanner::step(const PlanState& x0) {
  const auto t0 = std::chrono::steady_clock::now();

  double kappa_max = 0.0;
  const TerminalKind kind = config_.terminal.kind;
  if (kind == TerminalKind::dd_fixed) {
    kappa_max = config_.terminal.kappa_max;
  } else if (kind == TerminalKind::dd_adaptive ||
             kind == TerminalKind::nn_adaptive) {
    double v_t = x0.v, s_t = x0.s;
    if (previous_.has_value()) {
      const PlanState& last = previous_->states.back();
      v_t = last.v;
      s_t = std::min(last.s, path_->total_length());
    }
    kappa_max = adaptive_kappa_max(kappa_state_, v_t, s_t, *path_, config_);
    if (kind == TerminalKind::nn_adaptive) {
      // The classifier was fitted on curvature bounds inside this range;
      // extrapolating past it is not meaningful.
      kappa_max = std::clamp(kappa_max, 0.001, 0.1);
    }
  }

  MpcProblem problem(x0, last_input_, *path_, config_, params_, kappa_max);

  const int n_stages = config_.horizon + 1;
  std::vector<PlanState> states;
  std::vector<ControlInput> inputs;
  if (previous_.has_value() &&
      static_cast<int>(previous_->states.size()) == n_stages + 1) {
    // Shift the previous solution by one interval and extend the tail.
    states.assign(previous_->states.begin() + 1, previous_->states.end());
    PlanState tail = states.back();
    const ControlInput u_tail = previous_->inputs.back();
    try {
      const Eigen::Vector4d f = dynamics_mpc(
          tail, u_tail, path_->curvature_at(std::min(tail.s, path_->total_length())),
          params_);
      tail.s += config_.ts * f(0);
      tail.d += config_.ts * f(1);
      tail.mu += config_.ts * f(2);
      tail.v = std::max(tail.v + config_.ts * f(3), 0.0);
    } catch (const Error&) {
      // Keep the duplicated tail state.
    }
    states.push_back(tail);
    inputs.assign(previous_->inputs.begin() + 1, previous_->inputs.end());
    inputs.push_back(u_tail);
  } else {
    // Coasting rollout from the measured state.
    states.resize(static_cast<std::size_t>(n_stages + 1));
    inputs.assign(static_cast<std::size_t>(n_stages), ControlInput{0.0, 0.0});
    states[0] = x0;
    for (int k = 0; k < n_stages; ++k) {
      PlanState next = states[static_cast<std::size_t>(k)];
      try {
        const Eigen::Vector4d f = dynamics_mpc(
            next, ControlInput{0.0, 0.0},
            path_->curvature_at(std::min(next.s, path_->total_length())), params_);
        next.s += config_.ts * f(0);
        next.d += config_.ts * f(1);
        next.mu += config_.ts * f(2);
      } catch (const Error&) {
      }
      states[static_cast<std::size_t>(k + 1)] = next;
    }
  }

  SqpOptions options;
  options.max_iterations = config_.max_iterations;
  options.tolerance = config_.kkt_tolerance;
  const SqpResult result =
      sqp_.solve(problem, problem.pack(states, inputs), options);

  StepResult out;
  out.solution = problem.unpack(result.x);
  out.solution.objective = result.objective;
  out.solution.kkt_residual = result.kkt_residual;
  out.solution.iterations = result.iterations;
  switch (result.status) {
    case SqpStatus::optimal:
      out.solution.status = MpcStatus::optimal;
      break;
    case SqpStatus::max_iterations:
      out.solution.status = MpcStatus::max_iter;
      break;
    case SqpStatus::infeasible:
      out.solution.status = MpcStatus::infeasible;
      break;
  }
  out.kappa_max = kappa_max;
  out.degraded = out.solution.status == MpcStatus::infeasible;
  if (out.degraded) {
    out.input = last_input_;
  } else {
    out.input = out.solution.inputs.front();
    previous_ = out.solution;
    last_input_ = out.input;
  }
  out.solution.solve_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return out;
}

}  // namespace vrp
