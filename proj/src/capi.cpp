#include "vrp.h"

#include <cstdint>
#include <exception>
#include <fstream>
#include <memory>
#include <new>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include "vrp/nnkernel.hpp"
#include "vrp/planner.hpp"
#include "vrp/road.hpp"
#include "vrp/sim.hpp"
#include "vrp/types.hpp"
#include "vrp/viability.hpp"

// Handle bodies. Creation functions copy their inputs, so a handle never
// borrows from another one; vrp_planner carries its own road and model and
// points the planner at those members (stable: handles live on the heap and
// are never moved).

struct vrp_road {
  vrp::RoadPath path;
};

struct vrp_kernel {
  vrp::KernelGrid kernel;
};

struct vrp_model {
  vrp::MlpModel model;
};

struct vrp_planner {
  vrp::RoadPath road;
  std::unique_ptr<vrp::MlpModel> model;  // only for the learned terminal set
  vrp::MpcPlanner planner;

  vrp_planner(vrp::RoadPath r, vrp::MpcConfig config,
              const vrp::VehicleParams& vehicle,
              std::unique_ptr<vrp::MlpModel> m)
      : road(std::move(r)),
        model(std::move(m)),
        planner(road, with_model(std::move(config), model.get()), vehicle) {}

  static vrp::MpcConfig with_model(vrp::MpcConfig config,
                                   const vrp::MlpModel* m) {
    config.terminal.model = m;
    return config;
  }
};

struct vrp_trace {
  vrp::SimTrace trace;
  vrp::VehicleParams vehicle;  // parameters the run used, for metrics
};

namespace {

thread_local std::string t_last_error;

vrp_status map_code(vrp::ErrorCode code) {
  switch (code) {
    case vrp::ErrorCode::invalid_argument:
      return VRP_ERROR_INVALID_ARGUMENT;
    case vrp::ErrorCode::io:
      return VRP_ERROR_IO;
    case vrp::ErrorCode::domain:
      return VRP_ERROR_DOMAIN;
    case vrp::ErrorCode::singularity:
      return VRP_ERROR_SINGULARITY;
    case vrp::ErrorCode::projection:
      return VRP_ERROR_PROJECTION;
    case vrp::ErrorCode::no_convergence:
      return VRP_ERROR_NO_CONVERGENCE;
    case vrp::ErrorCode::internal:
      return VRP_ERROR_INTERNAL;
  }
  return VRP_ERROR_INTERNAL;
}

template <typename Fn>
vrp_status guarded(Fn&& fn) noexcept {
  try {
    fn();
    return VRP_OK;
  } catch (const vrp::Error& e) {
    t_last_error = e.what();
    return map_code(e.code());
  } catch (const std::bad_alloc&) {
    t_last_error = "out of memory";
    return VRP_ERROR_INTERNAL;
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return VRP_ERROR_INTERNAL;
  } catch (...) {
    t_last_error = "unknown error";
    return VRP_ERROR_INTERNAL;
  }
}

void require(const void* ptr, const char* name) {
  if (ptr == nullptr) {
    vrp::fail(vrp::ErrorCode::invalid_argument,
              std::string(name) + " must not be NULL");
  }
}

vrp::VehicleParams vehicle_or_default(const vrp_vehicle_params* p) {
  if (p == nullptr) return {};
  vrp::VehicleParams v;
  v.wheelbase = p->wheelbase;
  v.rear_to_center = p->rear_to_center;
  v.car_length = p->car_length;
  v.car_width = p->car_width;
  v.a_max = p->a_max;
  v.delta_max = p->delta_max;
  v.accel_min = p->accel_min;
  v.accel_max = p->accel_max;
  v.mu_min = p->mu_min;
  v.mu_max = p->mu_max;
  v.v_bar = p->v_bar;
  return v;
}

vrp::GridSpec to_grid(const vrp_grid_spec& s) {
  vrp::GridSpec g;
  g.d_min = s.d_min;
  g.d_max = s.d_max;
  g.d_count = s.d_count;
  g.mu_min = s.mu_min;
  g.mu_max = s.mu_max;
  g.mu_count = s.mu_count;
  g.v_min = s.v_min;
  g.v_max = s.v_max;
  g.v_count = s.v_count;
  g.nu_count = s.nu_count;
  g.delta_count = s.delta_count;
  g.accel_count = s.accel_count;
  g.ts = s.ts;
  return g;
}

void from_grid(const vrp::GridSpec& g, vrp_grid_spec& s) {
  s.d_min = g.d_min;
  s.d_max = g.d_max;
  s.d_count = g.d_count;
  s.mu_min = g.mu_min;
  s.mu_max = g.mu_max;
  s.mu_count = g.mu_count;
  s.v_min = g.v_min;
  s.v_max = g.v_max;
  s.v_count = g.v_count;
  s.nu_count = g.nu_count;
  s.delta_count = g.delta_count;
  s.accel_count = g.accel_count;
  s.ts = g.ts;
}

vrp::TrainConfig to_train_config(const vrp_train_config& c) {
  vrp::TrainConfig t;
  t.hidden_layers = c.hidden_layers;
  t.hidden_width = c.hidden_width;
  require(c.activation, "activation");
  t.activation = vrp::activation_from_name(c.activation);
  t.epochs = c.epochs;
  t.lr_initial = c.lr_initial;
  t.lr_decay = c.lr_decay;
  t.lr_step_epochs = c.lr_step_epochs;
  t.batch_size = c.batch_size;
  t.cutoff = c.cutoff;
  t.seed = c.seed;
  return t;
}

vrp::MpcConfig to_mpc_config(const vrp_mpc_config& c) {
  vrp::MpcConfig m;
  m.horizon = c.horizon;
  m.ts = c.ts;
  m.q_d = c.q_d;
  m.q_mu = c.q_mu;
  m.q_p = c.q_p;
  m.q_lat = c.q_lat;
  m.q_long = c.q_long;
  m.q_ddelta = c.q_ddelta;
  m.q_da = c.q_da;
  m.q_d_term = c.q_d_term;
  m.q_mu_term = c.q_mu_term;
  m.slack_penalty = c.slack_penalty;
  m.kkt_tolerance = c.kkt_tolerance;
  m.max_iterations = c.max_iterations;
  m.kappa_floor = c.kappa_floor;
  m.kappa_decrease_rate = c.kappa_decrease_rate;
  if (c.terminal_kind < 0 || c.terminal_kind > VRP_TERMINAL_NN_ADAPTIVE) {
    vrp::fail(vrp::ErrorCode::invalid_argument,
              "terminal_kind out of range: " + std::to_string(c.terminal_kind));
  }
  m.terminal.kind = static_cast<vrp::TerminalKind>(c.terminal_kind);
  m.terminal.kappa_max = c.terminal_kappa_max;
  m.terminal.cutoff = c.terminal_cutoff;
  return m;
}

vrp::SimParams to_sim_params(const vrp_sim_params* p) {
  if (p == nullptr) return {};
  vrp::SimParams s;
  s.mass = p->mass;
  s.inertia = p->inertia;
  s.lf = p->lf;
  s.lr = p->lr;
  s.cf = p->cf;
  s.cr = p->cr;
  s.blend_v_lo = p->blend_v_lo;
  s.blend_v_hi = p->blend_v_hi;
  s.plant_step = p->plant_step;
  return s;
}

void from_eval(const vrp::EvalMetrics& e, vrp_eval_metrics& m) {
  m.accuracy = e.accuracy;
  m.false_negative_rate = e.false_negative_rate;
  m.false_positive_rate = e.false_positive_rate;
  m.sample_count = e.sample_count;
}

int32_t from_status(vrp::MpcStatus status) {
  switch (status) {
    case vrp::MpcStatus::optimal:
      return VRP_PLAN_OPTIMAL;
    case vrp::MpcStatus::max_iter:
      return VRP_PLAN_MAX_ITERATIONS;
    case vrp::MpcStatus::infeasible:
      return VRP_PLAN_INFEASIBLE;
  }
  return VRP_PLAN_INFEASIBLE;
}

std::vector<vrp::KernelGrid> collect_kernels(const vrp_kernel* const* kernels,
                                             int32_t count) {
  require(kernels, "kernels");
  if (count <= 0) {
    vrp::fail(vrp::ErrorCode::invalid_argument,
              "kernel count must be positive");
  }
  std::vector<vrp::KernelGrid> family;
  family.reserve(static_cast<std::size_t>(count));
  for (int32_t i = 0; i < count; ++i) {
    require(kernels[i], "kernels[i]");
    family.push_back(kernels[i]->kernel);
  }
  return family;
}

}  // namespace

extern "C" {

const char* vrp_version(void) {
#ifdef VRP_VERSION_STRING
  return VRP_VERSION_STRING;
#else
  return "unknown";
#endif
}

const char* vrp_status_name(vrp_status status) {
  switch (status) {
    case VRP_OK:
      return "ok";
    case VRP_ERROR_INVALID_ARGUMENT:
      return "invalid_argument";
    case VRP_ERROR_IO:
      return "io";
    case VRP_ERROR_DOMAIN:
      return "domain";
    case VRP_ERROR_SINGULARITY:
      return "singularity";
    case VRP_ERROR_PROJECTION:
      return "projection";
    case VRP_ERROR_NO_CONVERGENCE:
      return "no_convergence";
    case VRP_ERROR_INTERNAL:
      return "internal";
  }
  return "unknown";
}

const char* vrp_last_error(void) { return t_last_error.c_str(); }

vrp_status vrp_crc32_file(const char* path, uint32_t* crc) {
  return guarded([&] {
    require(path, "path");
    require(crc, "crc");
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      vrp::fail(vrp::ErrorCode::io, std::string("cannot open ") + path);
    }
    uLong running = crc32(0L, Z_NULL, 0);
    char buffer[1 << 16];
    while (in) {
      in.read(buffer, sizeof(buffer));
      const std::streamsize got = in.gcount();
      if (got > 0) {
        running = crc32(running, reinterpret_cast<const Bytef*>(buffer),
                        static_cast<uInt>(got));
      }
    }
    if (in.bad()) {
      vrp::fail(vrp::ErrorCode::io, std::string("read failed on ") + path);
    }
    *crc = static_cast<uint32_t>(running);
  });
}

/* ---------------------------------------------------------------------- */

void vrp_vehicle_params_init(vrp_vehicle_params* params) {
  if (params == nullptr) return;
  const vrp::VehicleParams v;
  params->wheelbase = v.wheelbase;
  params->rear_to_center = v.rear_to_center;
  params->car_length = v.car_length;
  params->car_width = v.car_width;
  params->a_max = v.a_max;
  params->delta_max = v.delta_max;
  params->accel_min = v.accel_min;
  params->accel_max = v.accel_max;
  params->mu_min = v.mu_min;
  params->mu_max = v.mu_max;
  params->v_bar = v.v_bar;
}

/* ---------------------------------------------------------------------- */

vrp_status vrp_road_from_json(const char* text, vrp_road** road) {
  return guarded([&] {
    require(text, "text");
    require(road, "road");
    *road = new vrp_road{vrp::RoadPath::from_json(text)};
  });
}

vrp_status vrp_road_load(const char* path, vrp_road** road) {
  return guarded([&] {
    require(path, "path");
    require(road, "road");
    *road = new vrp_road{vrp::RoadPath::from_json_file(path)};
  });
}

void vrp_road_free(vrp_road* road) { delete road; }

double vrp_road_length(const vrp_road* road) {
  return road->path.total_length();
}

double vrp_road_width_left(const vrp_road* road) {
  return road->path.width_left();
}

double vrp_road_width_right(const vrp_road* road) {
  return road->path.width_right();
}

double vrp_road_max_speed_limit(const vrp_road* road) {
  return road->path.max_speed_limit();
}

double vrp_road_max_abs_curvature(const vrp_road* road) {
  return road->path.max_abs_curvature();
}

vrp_status vrp_road_curvature_at(const vrp_road* road, double s,
                                 double* curvature) {
  return guarded([&] {
    require(road, "road");
    require(curvature, "curvature");
    *curvature = road->path.curvature_at(s);
  });
}

vrp_status vrp_road_speed_limit_at(const vrp_road* road, double s,
                                   double* v_max) {
  return guarded([&] {
    require(road, "road");
    require(v_max, "v_max");
    *v_max = road->path.speed_limit_at(s);
  });
}

vrp_status vrp_road_global_pose(const vrp_road* road, double s, double d,
                                double mu, double* x, double* y, double* psi) {
  return guarded([&] {
    require(road, "road");
    const vrp::Pose pose = road->path.global_pose(s, d, mu);
    if (x != nullptr) *x = pose.x;
    if (y != nullptr) *y = pose.y;
    if (psi != nullptr) *psi = pose.psi;
  });
}

/* ---------------------------------------------------------------------- */

vrp_status vrp_grid_spec_init(vrp_grid_spec* spec, double kappa_max,
                              const vrp_vehicle_params* vehicle) {
  return guarded([&] {
    require(spec, "spec");
    from_grid(vrp::GridSpec::table_defaults(kappa_max,
                                            vehicle_or_default(vehicle)),
              *spec);
  });
}

vrp_status vrp_grid_spec_refine(vrp_grid_spec* spec, double factor) {
  return guarded([&] {
    require(spec, "spec");
    from_grid(to_grid(*spec).refined(factor), *spec);
  });
}

int32_t vrp_default_kappa_family(double* values, int32_t capacity) {
  const std::vector<double>& family = vrp::default_kappa_family();
  const int32_t count = static_cast<int32_t>(family.size());
  if (values != nullptr) {
    const int32_t n = capacity < count ? capacity : count;
    for (int32_t i = 0; i < n; ++i) values[i] = family[i];
  }
  return count;
}

vrp_status vrp_kernel_compute(const vrp_grid_spec* spec, double kappa_max,
                              const vrp_vehicle_params* vehicle,
                              double width_left, double width_right,
                              vrp_kernel** kernel) {
  return guarded([&] {
    require(spec, "spec");
    require(kernel, "kernel");
    *kernel = new vrp_kernel{
        vrp::compute_kernel(to_grid(*spec), kappa_max,
                            vehicle_or_default(vehicle), width_left,
                            width_right)};
  });
}

vrp_status vrp_kernel_load(const char* path, vrp_kernel** kernel) {
  return guarded([&] {
    require(path, "path");
    require(kernel, "kernel");
    *kernel = new vrp_kernel{vrp::load_kernel(path)};
  });
}

vrp_status vrp_kernel_save(const vrp_kernel* kernel, const char* path) {
  return guarded([&] {
    require(kernel, "kernel");
    require(path, "path");
    vrp::save_kernel(kernel->kernel, path);
  });
}

vrp_status vrp_kernel_export_csv(const vrp_kernel* kernel, const char* path) {
  return guarded([&] {
    require(kernel, "kernel");
    require(path, "path");
    vrp::export_kernel_csv(kernel->kernel, path);
  });
}

void vrp_kernel_free(vrp_kernel* kernel) { delete kernel; }

void vrp_kernel_grid(const vrp_kernel* kernel, vrp_grid_spec* spec) {
  if (kernel == nullptr || spec == nullptr) return;
  from_grid(kernel->kernel.spec(), *spec);
}

double vrp_kernel_kappa_max(const vrp_kernel* kernel) {
  return kernel->kernel.kappa_max();
}

int64_t vrp_kernel_cell_count(const vrp_kernel* kernel) {
  return kernel->kernel.cell_count();
}

int64_t vrp_kernel_marked_count(const vrp_kernel* kernel) {
  return kernel->kernel.marked_count();
}

int32_t vrp_kernel_contains(const vrp_kernel* kernel, double d, double mu,
                            double v) {
  return kernel->kernel.contains({d, mu, v}) ? 1 : 0;
}

/* ---------------------------------------------------------------------- */

void vrp_train_config_init(vrp_train_config* config) {
  if (config == nullptr) return;
  const vrp::TrainConfig t;
  config->hidden_layers = t.hidden_layers;
  config->hidden_width = t.hidden_width;
  config->activation = vrp::activation_name(t.activation);
  config->epochs = t.epochs;
  config->lr_initial = t.lr_initial;
  config->lr_decay = t.lr_decay;
  config->lr_step_epochs = t.lr_step_epochs;
  config->batch_size = t.batch_size;
  config->cutoff = t.cutoff;
  config->validation_fraction = 0.05;
  config->seed = t.seed;
}

vrp_status vrp_model_train(const vrp_kernel* const* kernels, int32_t count,
                           const vrp_train_config* config, vrp_model** model,
                           vrp_eval_metrics* validation) {
  return guarded([&] {
    require(model, "model");
    vrp_train_config defaults;
    vrp_train_config_init(&defaults);
    const vrp_train_config& c = config != nullptr ? *config : defaults;
    const vrp::TrainConfig train = to_train_config(c);
    const std::vector<vrp::KernelGrid> family = collect_kernels(kernels, count);
    const vrp::LabeledDataset data =
        vrp::LabeledDataset::build(family, train.seed, c.validation_fraction);
    vrp::TrainResult result = vrp::train_model(data, train);
    if (validation != nullptr) from_eval(result.validation, *validation);
    *model = new vrp_model{std::move(result.model)};
  });
}

vrp_status vrp_model_load(const char* path, vrp_model** model) {
  return guarded([&] {
    require(path, "path");
    require(model, "model");
    *model = new vrp_model{vrp::load_model(path)};
  });
}

vrp_status vrp_model_save(const vrp_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    vrp::save_model(model->model, path);
  });
}

void vrp_model_free(vrp_model* model) { delete model; }

double vrp_model_cutoff(const vrp_model* model) { return model->model.cutoff; }

double vrp_model_predict(const vrp_model* model, double d, double mu, double v,
                         double kappa_max) {
  return model->model.predict({d, mu, v}, kappa_max);
}

vrp_status vrp_model_evaluate(const vrp_model* model,
                              const vrp_kernel* const* kernels, int32_t count,
                              double cutoff, vrp_eval_metrics* metrics) {
  return guarded([&] {
    require(model, "model");
    require(metrics, "metrics");
    const std::vector<vrp::KernelGrid> family = collect_kernels(kernels, count);
    from_eval(vrp::evaluate_model(model->model, family, cutoff), *metrics);
  });
}

/* ---------------------------------------------------------------------- */

void vrp_mpc_config_init(vrp_mpc_config* config) {
  if (config == nullptr) return;
  const vrp::MpcConfig m;
  config->horizon = m.horizon;
  config->ts = m.ts;
  config->q_d = m.q_d;
  config->q_mu = m.q_mu;
  config->q_p = m.q_p;
  config->q_lat = m.q_lat;
  config->q_long = m.q_long;
  config->q_ddelta = m.q_ddelta;
  config->q_da = m.q_da;
  config->q_d_term = m.q_d_term;
  config->q_mu_term = m.q_mu_term;
  config->slack_penalty = m.slack_penalty;
  config->kkt_tolerance = m.kkt_tolerance;
  config->max_iterations = m.max_iterations;
  config->kappa_floor = m.kappa_floor;
  config->kappa_decrease_rate = m.kappa_decrease_rate;
  config->terminal_kind = VRP_TERMINAL_NONE;
  config->terminal_kappa_max = m.terminal.kappa_max;
  config->terminal_cutoff = m.terminal.cutoff;
}

vrp_status vrp_planner_create(const vrp_road* road,
                              const vrp_mpc_config* config,
                              const vrp_vehicle_params* vehicle,
                              const vrp_model* model, vrp_planner** planner) {
  return guarded([&] {
    require(road, "road");
    require(config, "config");
    require(planner, "planner");
    const vrp::MpcConfig mpc = to_mpc_config(*config);
    std::unique_ptr<vrp::MlpModel> copy;
    if (mpc.terminal.kind == vrp::TerminalKind::nn_adaptive) {
      require(model, "model");
      copy = std::make_unique<vrp::MlpModel>(model->model);
    }
    *planner = new vrp_planner(road->path, mpc, vehicle_or_default(vehicle),
                               std::move(copy));
  });
}

void vrp_planner_free(vrp_planner* planner) { delete planner; }

void vrp_planner_reset(vrp_planner* planner) {
  if (planner != nullptr) planner->planner.reset();
}

vrp_status vrp_planner_step(vrp_planner* planner, double s, double d,
                            double mu, double v, vrp_plan_step* step) {
  return guarded([&] {
    require(planner, "planner");
    require(step, "step");
    const vrp::MpcPlanner::StepResult result =
        planner->planner.step({s, d, mu, v});
    step->delta = result.input.delta;
    step->accel = result.input.accel;
    step->status = from_status(result.solution.status);
    step->degraded = result.degraded ? 1 : 0;
    step->iterations = result.solution.iterations;
    step->objective = result.solution.objective;
    step->kkt_residual = result.solution.kkt_residual;
    step->max_slack = result.solution.max_slack;
    step->solve_time = result.solution.solve_time;
    step->kappa_max = result.kappa_max;
  });
}

/* ---------------------------------------------------------------------- */

void vrp_sim_params_init(vrp_sim_params* params) {
  if (params == nullptr) return;
  const vrp::SimParams s;
  params->mass = s.mass;
  params->inertia = s.inertia;
  params->lf = s.lf;
  params->lr = s.lr;
  params->cf = s.cf;
  params->cr = s.cr;
  params->blend_v_lo = s.blend_v_lo;
  params->blend_v_hi = s.blend_v_hi;
  params->plant_step = s.plant_step;
}

void vrp_sim_options_init(vrp_sim_options* options) {
  if (options == nullptr) return;
  const vrp::SimOptions o;
  options->start_s = o.start.s;
  options->start_d = o.start.d;
  options->start_mu = o.start.mu;
  options->start_v = o.start.v;
  options->s_goal = o.s_goal;
  options->duration = o.duration;
  options->abort_on_violation = o.abort_on_violation ? 1 : 0;
}

vrp_status vrp_sim_run(const vrp_road* road, const vrp_mpc_config* config,
                       const vrp_vehicle_params* vehicle,
                       const vrp_model* model, const vrp_sim_params* plant,
                       const vrp_sim_options* options, vrp_trace** trace) {
  return guarded([&] {
    require(road, "road");
    require(config, "config");
    require(trace, "trace");
    vrp::SimOptions run;
    run.controller = to_mpc_config(*config);
    if (run.controller.terminal.kind == vrp::TerminalKind::nn_adaptive) {
      require(model, "model");
      run.controller.terminal.model = &model->model;
    }
    run.vehicle = vehicle_or_default(vehicle);
    run.plant = to_sim_params(plant);
    if (options != nullptr) {
      run.start = {options->start_s, options->start_d, options->start_mu,
                   options->start_v};
      run.s_goal = options->s_goal;
      run.duration = options->duration;
      run.abort_on_violation = options->abort_on_violation != 0;
    }
    *trace = new vrp_trace{vrp::run_closed_loop(road->path, run), run.vehicle};
  });
}

void vrp_trace_free(vrp_trace* trace) { delete trace; }

int64_t vrp_trace_sample_count(const vrp_trace* trace) {
  return static_cast<int64_t>(trace->trace.samples.size());
}

int32_t vrp_trace_completed(const vrp_trace* trace) {
  return trace->trace.completed ? 1 : 0;
}

int32_t vrp_trace_degraded(const vrp_trace* trace) {
  return trace->trace.degraded ? 1 : 0;
}

int32_t vrp_trace_aborted(const vrp_trace* trace) {
  return trace->trace.aborted ? 1 : 0;
}

double vrp_trace_final_s(const vrp_trace* trace) {
  return trace->trace.final_s;
}

vrp_status vrp_trace_sample_at(const vrp_trace* trace, int64_t index,
                               vrp_trace_sample* sample) {
  return guarded([&] {
    require(trace, "trace");
    require(sample, "sample");
    const int64_t count = static_cast<int64_t>(trace->trace.samples.size());
    if (index < 0 || index >= count) {
      vrp::fail(vrp::ErrorCode::invalid_argument,
                "sample index " + std::to_string(index) + " out of range");
    }
    const vrp::SimSample& s =
        trace->trace.samples[static_cast<std::size_t>(index)];
    sample->t = s.t;
    sample->x = s.vehicle.x;
    sample->y = s.vehicle.y;
    sample->psi = s.vehicle.psi;
    sample->vx = s.vehicle.vx;
    sample->vy = s.vehicle.vy;
    sample->r = s.vehicle.r;
    sample->s = s.plan.s;
    sample->d = s.plan.d;
    sample->mu = s.plan.mu;
    sample->v = s.plan.v;
    sample->delta = s.input.delta;
    sample->accel = s.input.accel;
    sample->kappa_max = s.kappa_max;
    sample->status = from_status(s.status);
    sample->degraded = s.degraded ? 1 : 0;
    sample->solve_time = s.solve_time;
    sample->slack_max = s.slack_max;
  });
}

vrp_status vrp_trace_write_csv(const vrp_trace* trace, const char* path) {
  return guarded([&] {
    require(trace, "trace");
    require(path, "path");
    std::ofstream out(path);
    if (!out) {
      vrp::fail(vrp::ErrorCode::io, std::string("cannot open ") + path);
    }
    vrp::write_trace_csv(trace->trace, out);
    out.flush();
    if (!out) {
      vrp::fail(vrp::ErrorCode::io, std::string("write failed on ") + path);
    }
  });
}

vrp_status vrp_trace_metrics(const vrp_trace* trace, const vrp_road* road,
                             const vrp_vehicle_params* vehicle,
                             vrp_sim_metrics* metrics) {
  return guarded([&] {
    require(trace, "trace");
    require(road, "road");
    require(metrics, "metrics");
    const vrp::VehicleParams params =
        vehicle != nullptr ? vehicle_or_default(vehicle) : trace->vehicle;
    const vrp::SimMetrics m =
        vrp::compute_metrics(trace->trace, road->path, params);
    metrics->mean_solve_time = m.mean_solve_time;
    metrics->mean_comb_accel = m.mean_comb_accel;
    metrics->max_violation = m.max_violation;
    metrics->mean_abs_d = m.mean_abs_d;
    metrics->max_abs_d = m.max_abs_d;
    metrics->duration = m.duration;
    metrics->final_s = m.final_s;
    metrics->completed = m.completed ? 1 : 0;
    metrics->degraded = m.degraded ? 1 : 0;
    metrics->violation_count = m.violation_count;
  });
}

}  // extern "C"
