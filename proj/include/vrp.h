/* C interface to the road-safety planning library.
 *
 * Every object lives behind an opaque handle created by a vrp_*_load /
 * vrp_*_compute / vrp_*_create call and released by the matching vrp_*_free.
 * Functions that can fail return a vrp_status; on failure a human-readable
 * message is kept per thread and can be read with vrp_last_error(). Handles
 * passed as inputs must be valid and non-NULL unless a parameter is
 * documented as optional; creation functions copy what they need, so input
 * handles can be freed afterwards in any order.
 *
 * Config structs are plain data. Always initialize them with the matching
 * vrp_*_init before overriding fields, so newly added fields pick up sane
 * defaults instead of garbage.
 */

#ifndef VRP_H
#define VRP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vrp_status {
  VRP_OK = 0,
  VRP_ERROR_INVALID_ARGUMENT = 1,
  VRP_ERROR_IO = 2,
  VRP_ERROR_DOMAIN = 3,      /* query outside the defined range */
  VRP_ERROR_SINGULARITY = 4, /* geometry degenerates, e.g. 1 - d*kappa = 0 */
  VRP_ERROR_PROJECTION = 5,  /* no curvilinear match for a global pose */
  VRP_ERROR_NO_CONVERGENCE = 6,
  VRP_ERROR_INTERNAL = 7,
} vrp_status;

/* Library version, e.g. "0.1.0". Static storage, do not free. */
const char* vrp_version(void);

/* Stable name of a status code, e.g. "invalid_argument". */
const char* vrp_status_name(vrp_status status);

/* Message of the most recent failing call on the calling thread, or an empty
 * string. Valid until that thread's next failing call. */
const char* vrp_last_error(void);

/* CRC-32 of a file's raw bytes, for artifact checksums. */
vrp_status vrp_crc32_file(const char* path, uint32_t* crc);

/* ---------------------------------------------------------------------- */
/* Vehicle                                                                */

typedef struct vrp_vehicle_params {
  double wheelbase;      /* rear to front axle, m */
  double rear_to_center; /* rear axle to geometric center, m */
  double car_length;     /* bumper to bumper, m */
  double car_width;      /* m */
  double a_max;          /* combined lateral/longitudinal budget, m/s^2 */
  double delta_max;      /* steering box [-delta_max, delta_max], rad */
  double accel_min;      /* m/s^2 */
  double accel_max;      /* m/s^2 */
  double mu_min;         /* heading-error box, rad */
  double mu_max;
  double v_bar; /* global speed cap, m/s */
} vrp_vehicle_params;

/* Fills the defaults of a compact passenger car. */
void vrp_vehicle_params_init(vrp_vehicle_params* params);

/* ---------------------------------------------------------------------- */
/* Road                                                                   */

/* A road is a center line of constant-curvature segments with signed lateral
 * bounds (width_left <= 0 <= width_right, d > 0 left of the path) and
 * piecewise-constant speed limits. The JSON form is
 *
 *   {"segments": [[length, curvature], ...],
 *    "width_left": -1.5, "width_right": 1.5,
 *    "speed_limits": [[start_s, v_max], ...],
 *    "origin": [x, y, psi]}
 */
typedef struct vrp_road vrp_road;

vrp_status vrp_road_from_json(const char* text, vrp_road** road);
vrp_status vrp_road_load(const char* path, vrp_road** road);
void vrp_road_free(vrp_road* road);

double vrp_road_length(const vrp_road* road);
double vrp_road_width_left(const vrp_road* road);
double vrp_road_width_right(const vrp_road* road);
double vrp_road_max_speed_limit(const vrp_road* road);
double vrp_road_max_abs_curvature(const vrp_road* road);

/* Point queries; s outside [0, length] is a domain error. */
vrp_status vrp_road_curvature_at(const vrp_road* road, double s,
                                 double* curvature);
vrp_status vrp_road_speed_limit_at(const vrp_road* road, double s,
                                   double* v_max);

/* Global pose of the point at arc length s, lateral offset d, heading
 * offset mu. Any output pointer may be NULL. */
vrp_status vrp_road_global_pose(const vrp_road* road, double s, double d,
                                double mu, double* x, double* y, double* psi);

/* ---------------------------------------------------------------------- */
/* Safe-set kernels                                                       */

/* Lattice over the game state (d, mu, v) plus the sampled input and
 * adversary grids used when the kernel is computed. */
typedef struct vrp_grid_spec {
  double d_min;
  double d_max;
  int32_t d_count;
  double mu_min;
  double mu_max;
  int32_t mu_count;
  double v_min;
  double v_max;
  int32_t v_count;
  int32_t nu_count;    /* adversary curvature samples */
  int32_t delta_count; /* steering samples */
  int32_t accel_count; /* acceleration samples */
  double ts;           /* game sampling period, s */
} vrp_grid_spec;

/* Reference resolution for a curvature bound: the speed range is capped
 * where cornering at kappa_max exhausts the acceleration budget. vehicle
 * may be NULL for defaults. */
vrp_status vrp_grid_spec_init(vrp_grid_spec* spec, double kappa_max,
                              const vrp_vehicle_params* vehicle);

/* Scales the three state counts by factor (> 0); input grids are untouched. */
vrp_status vrp_grid_spec_refine(vrp_grid_spec* spec, double factor);

/* Descending curvature-bound family the shipped classifier is trained on.
 * Writes up to capacity values and returns the full count. */
int32_t vrp_default_kappa_family(double* values, int32_t capacity);

typedef struct vrp_kernel vrp_kernel;

/* Runs the discriminating-kernel iteration to its fixed point. width_left
 * and width_right are the signed road bounds; vehicle may be NULL for
 * defaults. Honors the VRP_THREADS environment variable. */
vrp_status vrp_kernel_compute(const vrp_grid_spec* spec, double kappa_max,
                              const vrp_vehicle_params* vehicle,
                              double width_left, double width_right,
                              vrp_kernel** kernel);

vrp_status vrp_kernel_load(const char* path, vrp_kernel** kernel);
vrp_status vrp_kernel_save(const vrp_kernel* kernel, const char* path);
vrp_status vrp_kernel_export_csv(const vrp_kernel* kernel, const char* path);
void vrp_kernel_free(vrp_kernel* kernel);

void vrp_kernel_grid(const vrp_kernel* kernel, vrp_grid_spec* spec);
double vrp_kernel_kappa_max(const vrp_kernel* kernel);
int64_t vrp_kernel_cell_count(const vrp_kernel* kernel);
int64_t vrp_kernel_marked_count(const vrp_kernel* kernel);

/* 1 if the cell nearest (d, mu, v) is in the kernel, 0 otherwise (including
 * states outside the grid box). */
int32_t vrp_kernel_contains(const vrp_kernel* kernel, double d, double mu,
                            double v);

/* ---------------------------------------------------------------------- */
/* Membership classifier                                                  */

typedef struct vrp_train_config {
  int32_t hidden_layers;
  int32_t hidden_width;
  const char* activation; /* "elu", "relu", "softplus" or "tanh" */
  int32_t epochs;
  double lr_initial; /* multiplied by lr_decay every lr_step_epochs */
  double lr_decay;
  int32_t lr_step_epochs;
  int32_t batch_size;
  double cutoff;              /* membership threshold in (0, 1) */
  double validation_fraction; /* held out of training */
  uint64_t seed;              /* fixes init, shuffling and the split */
} vrp_train_config;

void vrp_train_config_init(vrp_train_config* config);

/* Percentages over all evaluated lattice points; accuracy is defined as
 * 100 - false_negative_rate - false_positive_rate. A false negative calls a
 * state unsafe that the kernel marks safe. */
typedef struct vrp_eval_metrics {
  double accuracy;
  double false_negative_rate;
  double false_positive_rate;
  int64_t sample_count;
} vrp_eval_metrics;

typedef struct vrp_model vrp_model;

/* Trains a fresh classifier on the pooled lattices of the given kernels.
 * config may be NULL for defaults; validation (metrics on the held-out
 * split) may be NULL. Equal seeds give bit-identical models. */
vrp_status vrp_model_train(const vrp_kernel* const* kernels, int32_t count,
                           const vrp_train_config* config, vrp_model** model,
                           vrp_eval_metrics* validation);

vrp_status vrp_model_load(const char* path, vrp_model** model);
vrp_status vrp_model_save(const vrp_model* model, const char* path);
void vrp_model_free(vrp_model* model);

double vrp_model_cutoff(const vrp_model* model);

/* Membership value in (0, 1); values >= cutoff count as safe. */
double vrp_model_predict(const vrp_model* model, double d, double mu, double v,
                         double kappa_max);

/* Classification rates against reference kernels, thresholded at cutoff. */
vrp_status vrp_model_evaluate(const vrp_model* model,
                              const vrp_kernel* const* kernels, int32_t count,
                              double cutoff, vrp_eval_metrics* metrics);

/* ---------------------------------------------------------------------- */
/* Planner                                                                */

typedef enum vrp_terminal_kind {
  VRP_TERMINAL_NONE = 0,          /* no terminal condition */
  VRP_TERMINAL_ZERO_VELOCITY = 1, /* full stop at the end of the horizon */
  VRP_TERMINAL_DD_FIXED = 2,      /* invariant set at a fixed bound */
  VRP_TERMINAL_DD_ADAPTIVE = 3,   /* invariant set, bound from the road */
  VRP_TERMINAL_NN_ADAPTIVE = 4,   /* learned kernel, bound from the road */
} vrp_terminal_kind;

typedef struct vrp_mpc_config {
  int32_t horizon; /* N: inputs u_0..u_N, states x_0..x_{N+1} */
  double ts;       /* controller period, s */

  double q_d;
  double q_mu;
  double q_p; /* terminal progress reward */
  double q_lat;
  double q_long;
  double q_ddelta;
  double q_da;
  double q_d_term;
  double q_mu_term;

  double slack_penalty; /* l1 weight on road-constraint slack */
  double kkt_tolerance;
  int32_t max_iterations;

  /* Adaptive curvature bound: floor and maximum fractional decrease per
   * step. */
  double kappa_floor;
  double kappa_decrease_rate;

  int32_t terminal_kind;     /* a vrp_terminal_kind value */
  double terminal_kappa_max; /* VRP_TERMINAL_DD_FIXED only */
  double terminal_cutoff;    /* VRP_TERMINAL_NN_ADAPTIVE only */
} vrp_mpc_config;

void vrp_mpc_config_init(vrp_mpc_config* config);

typedef struct vrp_planner vrp_planner;

/* Builds a receding-horizon controller for the road. vehicle may be NULL
 * for defaults; model is required exactly for VRP_TERMINAL_NN_ADAPTIVE.
 * The planner keeps private copies of road and model. */
vrp_status vrp_planner_create(const vrp_road* road,
                              const vrp_mpc_config* config,
                              const vrp_vehicle_params* vehicle,
                              const vrp_model* model, vrp_planner** planner);
void vrp_planner_free(vrp_planner* planner);

/* Drops warm start, input memory and the adaptive curvature state. */
void vrp_planner_reset(vrp_planner* planner);

typedef struct vrp_plan_step {
  double delta; /* commanded steering, rad */
  double accel; /* commanded acceleration, m/s^2 */
  int32_t status;
  int32_t degraded; /* 1: solver failed, input repeats the previous one */
  int32_t iterations;
  double objective;
  double kkt_residual;
  double max_slack;
  double solve_time; /* seconds */
  double kappa_max;  /* bound used by the terminal set, 0 if unused */
} vrp_plan_step;

/* Solver outcome in vrp_plan_step.status. */
#define VRP_PLAN_OPTIMAL 0
#define VRP_PLAN_MAX_ITERATIONS 1
#define VRP_PLAN_INFEASIBLE 2

/* One receding-horizon step from state (s, d, mu, v). A failed solve is not
 * an error at this level: the call succeeds with degraded = 1 and the
 * previous input held. */
vrp_status vrp_planner_step(vrp_planner* planner, double s, double d,
                            double mu, double v, vrp_plan_step* step);

/* ---------------------------------------------------------------------- */
/* Closed-loop simulation                                                 */

/* Single-track plant with linear tires, blended into a kinematic model at
 * low speed. */
typedef struct vrp_sim_params {
  double mass;    /* kg */
  double inertia; /* yaw inertia, kg m^2 */
  double lf;      /* center of gravity to front axle, m */
  double lr;      /* center of gravity to rear axle, m */
  double cf;      /* front cornering stiffness, N/rad */
  double cr;      /* rear cornering stiffness, N/rad */
  double blend_v_lo;
  double blend_v_hi;
  double plant_step; /* integrator step, s; must divide the period */
} vrp_sim_params;

void vrp_sim_params_init(vrp_sim_params* params);

typedef struct vrp_sim_options {
  double start_s;
  double start_d;
  double start_mu;
  double start_v;
  double s_goal;   /* < 0: derived from road length and horizon look-ahead */
  double duration; /* simulated-time budget, s */
  int32_t abort_on_violation; /* stop at the first road violation */
} vrp_sim_options;

void vrp_sim_options_init(vrp_sim_options* options);

typedef struct vrp_trace vrp_trace;

/* Runs the closed loop until the goal, the duration budget, a solver
 * failure, or (if requested) a violation. vehicle, plant and options may be
 * NULL for defaults; model is required exactly for VRP_TERMINAL_NN_ADAPTIVE.
 * A run that stops early is still a successful call; inspect the trace. */
vrp_status vrp_sim_run(const vrp_road* road, const vrp_mpc_config* config,
                       const vrp_vehicle_params* vehicle,
                       const vrp_model* model, const vrp_sim_params* plant,
                       const vrp_sim_options* options, vrp_trace** trace);
void vrp_trace_free(vrp_trace* trace);

int64_t vrp_trace_sample_count(const vrp_trace* trace);
int32_t vrp_trace_completed(const vrp_trace* trace);
int32_t vrp_trace_degraded(const vrp_trace* trace);
int32_t vrp_trace_aborted(const vrp_trace* trace);
double vrp_trace_final_s(const vrp_trace* trace);

/* One controller period: plant state at the solve, planner view of it, and
 * the input applied over the period. */
typedef struct vrp_trace_sample {
  double t;
  double x; /* plant pose and velocities at the center of gravity */
  double y;
  double psi;
  double vx;
  double vy;
  double r;
  double s; /* planner view: rear-axle curvilinear state */
  double d;
  double mu;
  double v;
  double delta; /* applied input */
  double accel;
  double kappa_max;
  int32_t status; /* VRP_PLAN_* */
  int32_t degraded;
  double solve_time;
  double slack_max;
} vrp_trace_sample;

vrp_status vrp_trace_sample_at(const vrp_trace* trace, int64_t index,
                               vrp_trace_sample* sample);

/* Writes the trace as CSV, one row per controller period. */
vrp_status vrp_trace_write_csv(const vrp_trace* trace, const char* path);

typedef struct vrp_sim_metrics {
  double mean_solve_time;
  double mean_comb_accel; /* mean of sqrt(a_lat^2 + a_long^2) */
  double max_violation;   /* worst road-constraint violation, m */
  double mean_abs_d;
  double max_abs_d;
  double duration; /* simulated seconds covered by the trace */
  double final_s;
  int32_t completed;
  int32_t degraded;
  int64_t violation_count;
} vrp_sim_metrics;

/* Aggregates a trace against the road it was driven on. vehicle may be NULL
 * to reuse the parameters the simulation ran with. */
vrp_status vrp_trace_metrics(const vrp_trace* trace, const vrp_road* road,
                             const vrp_vehicle_params* vehicle,
                             vrp_sim_metrics* metrics);

#ifdef __cplusplus
}
#endif

#endif /* VRP_H */
