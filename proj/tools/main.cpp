// Command-line front end over the shared-library C interface. Subcommands:
//
//   kernel    compute safe-set kernels for one or more curvature bounds
//   train     fit the membership classifier on kernel files
//   eval      score a classifier against kernel files
//   sim       one closed-loop run on a scenario
//   compare   run a set of terminal-constraint variants and tabulate them
//
// Every command writes a manifest next to its outputs: the exact command
// line, the resolved configuration and its hash, seeds, inputs, outputs with
// CRC-32 checksums, tool version and wall time. Exit codes: 0 on success
// (including runs whose outcome is an expected failure, e.g. a baseline that
// does not complete a scenario), 1 for internal errors, 2 for bad input.

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <vrp.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliError : std::runtime_error {
  CliError(int code, const std::string& message)
      : std::runtime_error(message), exit_code(code) {}
  int exit_code;
};

int exit_code_for(vrp_status status) {
  switch (status) {
    case VRP_ERROR_INVALID_ARGUMENT:
    case VRP_ERROR_IO:
    case VRP_ERROR_DOMAIN:
      return 2;
    default:
      return 1;
  }
}

void check(vrp_status status, const std::string& what) {
  if (status != VRP_OK) {
    throw CliError(exit_code_for(status),
                   what + ": " + vrp_last_error() + " (" +
                       vrp_status_name(status) + ")");
  }
}

struct RoadDelete {
  void operator()(vrp_road* p) const { vrp_road_free(p); }
};
struct KernelDelete {
  void operator()(vrp_kernel* p) const { vrp_kernel_free(p); }
};
struct ModelDelete {
  void operator()(vrp_model* p) const { vrp_model_free(p); }
};
struct TraceDelete {
  void operator()(vrp_trace* p) const { vrp_trace_free(p); }
};
using RoadPtr = std::unique_ptr<vrp_road, RoadDelete>;
using KernelPtr = std::unique_ptr<vrp_kernel, KernelDelete>;
using ModelPtr = std::unique_ptr<vrp_model, ModelDelete>;
using TracePtr = std::unique_ptr<vrp_trace, TraceDelete>;

RoadPtr load_road(const std::string& path) {
  vrp_road* road = nullptr;
  check(vrp_road_load(path.c_str(), &road), "loading scenario " + path);
  return RoadPtr(road);
}

KernelPtr load_kernel_file(const std::string& path) {
  vrp_kernel* kernel = nullptr;
  check(vrp_kernel_load(path.c_str(), &kernel), "loading kernel " + path);
  return KernelPtr(kernel);
}

ModelPtr load_model_file(const std::string& path) {
  vrp_model* model = nullptr;
  check(vrp_model_load(path.c_str(), &model), "loading model " + path);
  return ModelPtr(model);
}

// ---------------------------------------------------------------------
// Manifest plumbing

std::string g_command_line;

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::string hash_of(const json& config) {
  char buffer[20];
  std::snprintf(buffer, sizeof buffer, "%016" PRIx64, fnv1a(config.dump()));
  return buffer;
}

void write_json_atomic(const json& doc, const fs::path& path) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw CliError(2, "cannot write " + tmp.string());
    out << doc.dump(2) << '\n';
    if (!out) throw CliError(1, "write failed on " + tmp.string());
  }
  fs::rename(tmp, path);
}

json checksummed(const std::vector<std::string>& paths) {
  json out = json::array();
  for (const std::string& p : paths) {
    uint32_t crc = 0;
    check(vrp_crc32_file(p.c_str(), &crc), "checksumming " + p);
    out.push_back({{"path", p}, {"crc32", crc}});
  }
  return out;
}

void write_manifest(const fs::path& path, const json& config,
                    const json& seeds, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    const Stopwatch& watch) {
  json doc;
  doc["command"] = g_command_line;
  doc["config"] = config;
  doc["config_hash"] = hash_of(config);
  doc["seeds"] = seeds;
  doc["inputs"] = inputs;
  doc["outputs"] = checksummed(outputs);
  doc["version"] = vrp_version();
  doc["wall_time_seconds"] = watch.seconds();
  write_json_atomic(doc, path);
}

// ---------------------------------------------------------------------
// Shared helpers

std::string format_kappa(double kappa) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%g", kappa);
  return buffer;
}

int32_t strategy_from_name(std::string name) {
  std::replace(name.begin(), name.end(), '-', '_');
  static const std::map<std::string, int32_t> kinds = {
      {"none", VRP_TERMINAL_NONE},
      {"zero_velocity", VRP_TERMINAL_ZERO_VELOCITY},
      {"dd_fixed", VRP_TERMINAL_DD_FIXED},
      {"dd_adaptive", VRP_TERMINAL_DD_ADAPTIVE},
      {"nn_adaptive", VRP_TERMINAL_NN_ADAPTIVE}};
  auto it = kinds.find(name);
  if (it == kinds.end()) throw CliError(2, "unknown strategy: " + name);
  return it->second;
}

std::vector<std::string> gather_kernel_paths(
    const std::string& dir, const std::vector<std::string>& files) {
  std::vector<std::string> paths = files;
  if (!dir.empty()) {
    if (!fs::is_directory(dir)) {
      throw CliError(2, "kernel directory not found: " + dir);
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".krn") {
        paths.push_back(entry.path().string());
      }
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw CliError(2, "no kernel files given");
  return paths;
}

struct KernelSet {
  std::vector<KernelPtr> owned;
  std::vector<const vrp_kernel*> raw;
};

KernelSet load_kernels(const std::vector<std::string>& paths) {
  KernelSet set;
  for (const std::string& p : paths) {
    set.owned.push_back(load_kernel_file(p));
    set.raw.push_back(set.owned.back().get());
  }
  return set;
}

json metrics_to_json(const vrp_eval_metrics& m) {
  return {{"accuracy", m.accuracy},
          {"false_negative_rate", m.false_negative_rate},
          {"false_positive_rate", m.false_positive_rate},
          {"samples", m.sample_count}};
}

json sim_metrics_to_json(const vrp_sim_metrics& m) {
  return {{"mean_solve_time", m.mean_solve_time},
          {"mean_comb_accel", m.mean_comb_accel},
          {"max_violation", m.max_violation},
          {"mean_abs_d", m.mean_abs_d},
          {"max_abs_d", m.max_abs_d},
          {"duration", m.duration},
          {"final_s", m.final_s},
          {"completed", m.completed != 0},
          {"degraded", m.degraded != 0},
          {"violation_count", m.violation_count}};
}

// ---------------------------------------------------------------------
// kernel

struct KernelArgs {
  std::vector<double> kappas;
  std::string family;
  double refine = 1.0;
  std::string out = ".";
  double width_left = -1.5;
  double width_right = 1.5;
};

int cmd_kernel(const KernelArgs& args) {
  Stopwatch watch;
  std::vector<double> kappas = args.kappas;
  if (!args.family.empty()) {
    if (args.family != "default") {
      throw CliError(2, "unknown family: " + args.family);
    }
    double values[32];
    const int32_t count = vrp_default_kappa_family(values, 32);
    kappas.insert(kappas.end(), values, values + count);
  }
  if (kappas.empty()) {
    throw CliError(2, "no curvature bounds: give --kappa or --family default");
  }
  fs::create_directories(args.out);

  std::vector<std::string> outputs;
  for (double kappa : kappas) {
    vrp_grid_spec spec;
    check(vrp_grid_spec_init(&spec, kappa, nullptr), "grid spec");
    if (args.refine != 1.0) {
      check(vrp_grid_spec_refine(&spec, args.refine), "grid refinement");
    }
    vrp_kernel* raw = nullptr;
    check(vrp_kernel_compute(&spec, kappa, nullptr, args.width_left,
                             args.width_right, &raw),
          "kernel computation for kappa " + format_kappa(kappa));
    KernelPtr kernel(raw);
    const fs::path file =
        fs::path(args.out) / ("kernel_" + format_kappa(kappa) + ".krn");
    check(vrp_kernel_save(kernel.get(), file.string().c_str()),
          "saving " + file.string());
    outputs.push_back(file.string());
    std::printf("kappa %-8s grid %dx%dx%d marked %" PRId64 "/%" PRId64
                " (%.1f%%)\n",
                format_kappa(kappa).c_str(), spec.d_count, spec.mu_count,
                spec.v_count, vrp_kernel_marked_count(kernel.get()),
                vrp_kernel_cell_count(kernel.get()),
                100.0 * double(vrp_kernel_marked_count(kernel.get())) /
                    double(vrp_kernel_cell_count(kernel.get())));
  }

  json config = {{"kappas", kappas},
                 {"refine", args.refine},
                 {"width_left", args.width_left},
                 {"width_right", args.width_right}};
  write_manifest(fs::path(args.out) / "kernel_manifest.json", config,
                 json::object(), {}, outputs, watch);
  return 0;
}

// ---------------------------------------------------------------------
// train

struct TrainArgs {
  std::string kernel_dir;
  std::vector<std::string> kernel_files;
  std::vector<std::string> eval_kernels;  // held-out test kernels
  std::string out = "model.json";
  std::string ablate;
  int32_t layers = 3;
  int32_t width = 16;
  std::string activation = "elu";
  int32_t epochs = 9;
  double lr = 0.01;
  double lr_decay = 0.1;
  int32_t lr_step = 3;
  int32_t batch = 1500;
  double cutoff = 0.25;
  double validation_fraction = 0.05;
  std::uint64_t seed = 1;
};

vrp_train_config resolve_train_config(const TrainArgs& args) {
  vrp_train_config config;
  vrp_train_config_init(&config);
  config.hidden_layers = args.layers;
  config.hidden_width = args.width;
  config.activation = args.activation.c_str();
  config.epochs = args.epochs;
  config.lr_initial = args.lr;
  config.lr_decay = args.lr_decay;
  config.lr_step_epochs = args.lr_step;
  config.batch_size = args.batch;
  config.cutoff = args.cutoff;
  config.validation_fraction = args.validation_fraction;
  config.seed = args.seed;
  return config;
}

void print_metrics_row(const std::string& label, const vrp_eval_metrics* test,
                       const vrp_eval_metrics& val) {
  if (test != nullptr) {
    std::printf("%-10s %6.2f/%-6.2f %5.2f/%-5.2f %5.2f/%-5.2f\n",
                label.c_str(), test->accuracy, val.accuracy,
                test->false_negative_rate, val.false_negative_rate,
                test->false_positive_rate, val.false_positive_rate);
  } else {
    std::printf("%-10s %6.2f %5.2f %5.2f\n", label.c_str(), val.accuracy,
                val.false_negative_rate, val.false_positive_rate);
  }
}

int cmd_train(const TrainArgs& args) {
  Stopwatch watch;
  const std::vector<std::string> paths =
      gather_kernel_paths(args.kernel_dir, args.kernel_files);
  KernelSet kernels = load_kernels(paths);
  KernelSet test = args.eval_kernels.empty()
                       ? KernelSet{}
                       : load_kernels(args.eval_kernels);
  const bool have_test = !test.raw.empty();

  std::vector<std::string> activations = {args.activation};
  if (!args.ablate.empty()) {
    if (args.ablate != "activations") {
      throw CliError(2, "unknown ablation: " + args.ablate);
    }
    activations = {"elu", "relu", "softplus", "tanh"};
  }

  json ablation = json::array();
  ModelPtr chosen;
  vrp_eval_metrics chosen_validation{};
  if (activations.size() > 1) {
    std::printf("%-10s %-13s %-11s %-11s\n", "activation",
                have_test ? "acc test/val" : "acc", "fn", "fp");
  }
  for (const std::string& activation : activations) {
    TrainArgs variant = args;
    variant.activation = activation;
    const vrp_train_config config = resolve_train_config(variant);
    vrp_model* raw = nullptr;
    vrp_eval_metrics validation{};
    check(vrp_model_train(kernels.raw.data(),
                          static_cast<int32_t>(kernels.raw.size()), &config,
                          &raw, &validation),
          "training (" + activation + ")");
    ModelPtr model(raw);

    vrp_eval_metrics test_metrics{};
    if (have_test) {
      check(vrp_model_evaluate(model.get(), test.raw.data(),
                               static_cast<int32_t>(test.raw.size()),
                               args.cutoff, &test_metrics),
            "evaluating on test kernels");
    }
    if (activations.size() > 1) {
      print_metrics_row(activation, have_test ? &test_metrics : nullptr,
                        validation);
      json row = {{"activation", activation},
                  {"validation", metrics_to_json(validation)}};
      if (have_test) row["test"] = metrics_to_json(test_metrics);
      ablation.push_back(row);
    } else {
      std::printf("validation: acc %.2f%% fn %.2f%% fp %.2f%% (%" PRId64
                  " samples)\n",
                  validation.accuracy, validation.false_negative_rate,
                  validation.false_positive_rate, validation.sample_count);
      if (have_test) {
        std::printf("test:       acc %.2f%% fn %.2f%% fp %.2f%% (%" PRId64
                    " samples)\n",
                    test_metrics.accuracy, test_metrics.false_negative_rate,
                    test_metrics.false_positive_rate,
                    test_metrics.sample_count);
      }
    }
    if (activation == args.activation) {
      chosen = std::move(model);
      chosen_validation = validation;
    }
  }

  if (!chosen) {
    // --ablate with an --activation outside the swept set; keep the request
    // honest instead of silently saving an unrelated network.
    throw CliError(2, "--activation " + args.activation +
                          " is not part of the ablation sweep");
  }
  const fs::path out_dir = fs::path(args.out).parent_path();
  if (!out_dir.empty()) fs::create_directories(out_dir);
  check(vrp_model_save(chosen.get(), args.out.c_str()),
        "saving model " + args.out);

  fs::path metrics_path = fs::path(args.out);
  metrics_path.replace_extension();
  metrics_path += "_metrics.json";
  json metrics_doc = {{"validation", metrics_to_json(chosen_validation)},
                      {"cutoff", args.cutoff}};
  if (have_test) {
    vrp_eval_metrics test_metrics{};
    check(vrp_model_evaluate(chosen.get(), test.raw.data(),
                             static_cast<int32_t>(test.raw.size()),
                             args.cutoff, &test_metrics),
          "evaluating on test kernels");
    metrics_doc["test"] = metrics_to_json(test_metrics);
    metrics_doc["test_kernels"] = args.eval_kernels;
  }
  if (!ablation.empty()) metrics_doc["ablation"] = ablation;
  write_json_atomic(metrics_doc, metrics_path);

  json config_echo = {{"layers", args.layers},
                      {"width", args.width},
                      {"activation", args.activation},
                      {"epochs", args.epochs},
                      {"lr", args.lr},
                      {"lr_decay", args.lr_decay},
                      {"lr_step", args.lr_step},
                      {"batch", args.batch},
                      {"cutoff", args.cutoff},
                      {"validation_fraction", args.validation_fraction},
                      {"ablate", args.ablate}};
  std::vector<std::string> inputs = paths;
  inputs.insert(inputs.end(), args.eval_kernels.begin(),
                args.eval_kernels.end());
  fs::path manifest = fs::path(args.out).parent_path() / "train_manifest.json";
  write_manifest(manifest, config_echo, {{"train", args.seed}}, inputs,
                 {args.out, metrics_path.string()}, watch);
  return 0;
}

// ---------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string model;
  std::string kernel_dir;
  std::vector<std::string> kernel_files;
  std::string out = "eval_metrics.json";
  double cutoff = -1.0;  // default: the model's own
};

int cmd_eval(const EvalArgs& args) {
  Stopwatch watch;
  ModelPtr model = load_model_file(args.model);
  const std::vector<std::string> paths =
      gather_kernel_paths(args.kernel_dir, args.kernel_files);
  KernelSet kernels = load_kernels(paths);
  const double cutoff =
      args.cutoff >= 0.0 ? args.cutoff : vrp_model_cutoff(model.get());

  std::printf("%-28s %-9s %7s %6s %6s\n", "kernel", "kappa", "acc", "fn",
              "fp");
  json per_kernel = json::array();
  for (std::size_t i = 0; i < kernels.raw.size(); ++i) {
    vrp_eval_metrics m{};
    check(vrp_model_evaluate(model.get(), &kernels.raw[i], 1, cutoff, &m),
          "evaluating " + paths[i]);
    const double kappa = vrp_kernel_kappa_max(kernels.raw[i]);
    std::printf("%-28s %-9s %7.2f %6.2f %6.2f\n",
                fs::path(paths[i]).filename().string().c_str(),
                format_kappa(kappa).c_str(), m.accuracy,
                m.false_negative_rate, m.false_positive_rate);
    json row = metrics_to_json(m);
    row["path"] = paths[i];
    row["kappa_max"] = kappa;
    per_kernel.push_back(row);
  }
  vrp_eval_metrics pooled{};
  check(vrp_model_evaluate(model.get(), kernels.raw.data(),
                           static_cast<int32_t>(kernels.raw.size()), cutoff,
                           &pooled),
        "pooled evaluation");
  std::printf("%-28s %-9s %7.2f %6.2f %6.2f\n", "pooled", "-", pooled.accuracy,
              pooled.false_negative_rate, pooled.false_positive_rate);

  json doc = {{"cutoff", cutoff},
              {"per_kernel", per_kernel},
              {"pooled", metrics_to_json(pooled)}};
  const fs::path out_dir = fs::path(args.out).parent_path();
  if (!out_dir.empty()) fs::create_directories(out_dir);
  write_json_atomic(doc, args.out);

  std::vector<std::string> inputs = paths;
  inputs.push_back(args.model);
  fs::path manifest = fs::path(args.out).parent_path() / "eval_manifest.json";
  write_manifest(manifest, json{{"cutoff", cutoff}}, json::object(), inputs,
                 {args.out}, watch);
  return 0;
}

// ---------------------------------------------------------------------
// sim

struct SimArgs {
  std::string scenario;
  std::string strategy = "dd-adaptive";
  std::string model;
  int32_t horizon = 40;
  double ts = 0.05;
  double kappa = -1.0;  // dd-fixed bound; default: worst road curvature
  double cutoff = 0.25;
  double start_s = 0.0;
  double start_d = 0.0;
  double start_mu = 0.0;
  double start_v = 0.0;
  double s_goal = -1.0;
  double duration = 300.0;
  bool abort_on_violation = false;
  std::string out = ".";
  double q_p = -1.0;  // optional progress-weight override
};

struct RunOutcome {
  vrp_sim_metrics metrics;
  TracePtr trace;
};

RunOutcome run_one(const vrp_road* road, const SimArgs& args,
                   const vrp_model* model) {
  vrp_mpc_config config;
  vrp_mpc_config_init(&config);
  config.horizon = args.horizon;
  config.ts = args.ts;
  config.terminal_kind = strategy_from_name(args.strategy);
  config.terminal_cutoff = args.cutoff;
  if (args.q_p >= 0.0) config.q_p = args.q_p;
  if (config.terminal_kind == VRP_TERMINAL_DD_FIXED) {
    config.terminal_kappa_max =
        args.kappa > 0.0 ? args.kappa : vrp_road_max_abs_curvature(road);
  }
  if (config.terminal_kind == VRP_TERMINAL_NN_ADAPTIVE && model == nullptr) {
    throw CliError(2, "strategy nn-adaptive needs --model");
  }

  vrp_sim_options options;
  vrp_sim_options_init(&options);
  options.start_s = args.start_s;
  options.start_d = args.start_d;
  options.start_mu = args.start_mu;
  options.start_v = args.start_v;
  options.s_goal = args.s_goal;
  options.duration = args.duration;
  options.abort_on_violation = args.abort_on_violation ? 1 : 0;

  vrp_trace* raw = nullptr;
  check(vrp_sim_run(road, &config, nullptr, model, nullptr, &options, &raw),
        "simulation (" + args.strategy + ")");
  RunOutcome outcome;
  outcome.trace = TracePtr(raw);
  check(vrp_trace_metrics(outcome.trace.get(), road, nullptr,
                          &outcome.metrics),
        "trace metrics");
  return outcome;
}

json sim_config_echo(const SimArgs& args) {
  return {{"scenario", args.scenario},
          {"strategy", args.strategy},
          {"horizon", args.horizon},
          {"ts", args.ts},
          {"kappa", args.kappa},
          {"cutoff", args.cutoff},
          {"start", {args.start_s, args.start_d, args.start_mu, args.start_v}},
          {"s_goal", args.s_goal},
          {"duration", args.duration},
          {"abort_on_violation", args.abort_on_violation}};
}

int cmd_sim(const SimArgs& args) {
  Stopwatch watch;
  RoadPtr road = load_road(args.scenario);
  ModelPtr model;
  if (!args.model.empty()) model = load_model_file(args.model);
  fs::create_directories(args.out);

  RunOutcome outcome = run_one(road.get(), args, model.get());
  const fs::path trace_path = fs::path(args.out) / "trace.csv";
  const fs::path metrics_path = fs::path(args.out) / "metrics.json";
  check(vrp_trace_write_csv(outcome.trace.get(), trace_path.string().c_str()),
        "writing trace");
  json doc = sim_metrics_to_json(outcome.metrics);
  doc["strategy"] = args.strategy;
  doc["horizon"] = args.horizon;
  doc["aborted"] = vrp_trace_aborted(outcome.trace.get()) != 0;
  doc["samples"] = vrp_trace_sample_count(outcome.trace.get());
  write_json_atomic(doc, metrics_path);

  std::printf(
      "%s N=%d: %s, final_s %.1f m in %.1f s, mean solve %.4f s, "
      "comb accel %.4f, max violation %.2e\n",
      args.strategy.c_str(), args.horizon,
      outcome.metrics.completed ? "completed" : "did not complete",
      outcome.metrics.final_s, outcome.metrics.duration,
      outcome.metrics.mean_solve_time, outcome.metrics.mean_comb_accel,
      outcome.metrics.max_violation);

  std::vector<std::string> inputs = {args.scenario};
  if (!args.model.empty()) inputs.push_back(args.model);
  write_manifest(fs::path(args.out) / "sim_manifest.json",
                 sim_config_echo(args), json::object(), inputs,
                 {trace_path.string(), metrics_path.string()}, watch);
  return 0;
}

// ---------------------------------------------------------------------
// compare

struct CompareArgs {
  std::string scenario;
  std::string model;
  std::string out = ".";
  bool with_long = false;
  int32_t horizon_short = 40;
  double ts = 0.05;
  double duration = 300.0;
  double s_goal = -1.0;  // default: common goal from the longest horizon
};

struct Variant {
  std::string name;
  std::string strategy;
  int32_t horizon;
};

int cmd_compare(const CompareArgs& args) {
  Stopwatch watch;
  RoadPtr road = load_road(args.scenario);
  ModelPtr model;
  if (!args.model.empty()) model = load_model_file(args.model);
  fs::create_directories(args.out);

  // Long horizon sized so the car can stop from the top speed limit within
  // the prediction window, rounded up to tens of steps.
  vrp_vehicle_params vehicle;
  vrp_vehicle_params_init(&vehicle);
  const double v_top = vrp_road_max_speed_limit(road.get());
  const int32_t horizon_long = static_cast<int32_t>(
      10.0 * std::ceil(v_top / (vehicle.a_max * args.ts) / 10.0));

  std::vector<Variant> variants;
  if (args.with_long) {
    variants.push_back({"none_long", "none", horizon_long});
    variants.push_back({"zero_velocity_long", "zero-velocity", horizon_long});
    variants.push_back({"dd_adaptive_long", "dd-adaptive", horizon_long});
    variants.push_back({"dd_fixed_long", "dd-fixed", horizon_long});
  }
  variants.push_back({"dd_adaptive_short", "dd-adaptive", args.horizon_short});
  if (model) {
    variants.push_back(
        {"nn_adaptive_short", "nn-adaptive", args.horizon_short});
  }

  // One goal for every variant, reachable by the longest horizon, so the
  // metrics aggregate the same stretch of road.
  int32_t max_horizon = args.horizon_short;
  for (const Variant& v : variants) max_horizon = std::max(max_horizon, v.horizon);
  const double s_goal =
      args.s_goal >= 0.0
          ? args.s_goal
          : vrp_road_length(road.get()) -
                (max_horizon * args.ts * v_top + 30.0);
  if (s_goal <= 0.0) {
    throw CliError(2, "scenario too short for the requested horizons");
  }

  std::vector<std::string> outputs;
  json summary = json::object();
  std::ofstream plot_v(fs::path(args.out) / "plot_v_of_s.csv");
  std::ofstream plot_d(fs::path(args.out) / "plot_d_of_s.csv");
  plot_v << "variant,s,v\n";
  plot_d << "variant,s,d\n";

  for (const Variant& variant : variants) {
    SimArgs run;
    run.scenario = args.scenario;
    run.strategy = variant.strategy;
    run.horizon = variant.horizon;
    run.ts = args.ts;
    run.s_goal = s_goal;
    run.duration = args.duration;
    RunOutcome outcome =
        run_one(road.get(), run, variant.strategy == "nn-adaptive"
                                     ? model.get()
                                     : nullptr);

    const fs::path trace_path =
        fs::path(args.out) / (variant.name + "_trace.csv");
    check(vrp_trace_write_csv(outcome.trace.get(),
                              trace_path.string().c_str()),
          "writing trace for " + variant.name);
    outputs.push_back(trace_path.string());

    for (int64_t i = 0; i < vrp_trace_sample_count(outcome.trace.get());
         ++i) {
      vrp_trace_sample s;
      check(vrp_trace_sample_at(outcome.trace.get(), i, &s), "trace sample");
      plot_v << variant.name << ',' << s.s << ',' << s.v << '\n';
      plot_d << variant.name << ',' << s.s << ',' << s.d << '\n';
    }

    json entry = sim_metrics_to_json(outcome.metrics);
    entry["strategy"] = variant.strategy;
    entry["horizon"] = variant.horizon;
    summary[variant.name] = entry;
    std::printf("ran %-20s N=%-4d %s final_s %.1f\n", variant.name.c_str(),
                variant.horizon,
                outcome.metrics.completed ? "completed " : "incomplete",
                outcome.metrics.final_s);
  }
  plot_v.close();
  plot_d.close();
  outputs.push_back((fs::path(args.out) / "plot_v_of_s.csv").string());
  outputs.push_back((fs::path(args.out) / "plot_d_of_s.csv").string());

  // Quantitative table, one column per variant.
  std::printf("\n%-12s", "");
  for (const Variant& v : variants) std::printf(" %-19s", v.name.c_str());
  std::printf("\n%-12s", "mean time");
  for (const Variant& v : variants) {
    std::printf(" %-19.4f",
                summary[v.name]["mean_solve_time"].get<double>());
  }
  std::printf("\n%-12s", "comb acc");
  for (const Variant& v : variants) {
    std::printf(" %-19.4f",
                summary[v.name]["mean_comb_accel"].get<double>());
  }
  std::printf("\n%-12s", "completed");
  for (const Variant& v : variants) {
    std::printf(" %-19s",
                summary[v.name]["completed"].get<bool>() ? "yes" : "no");
  }
  std::printf("\n");

  const fs::path summary_path = fs::path(args.out) / "summary.json";
  json doc = {{"scenario", args.scenario},
              {"s_goal", s_goal},
              {"horizon_long", args.with_long ? horizon_long : 0},
              {"horizon_short", args.horizon_short},
              {"variants", summary}};
  write_json_atomic(doc, summary_path);
  outputs.push_back(summary_path.string());

  json config = {{"scenario", args.scenario},
                 {"long", args.with_long},
                 {"horizon_short", args.horizon_short},
                 {"ts", args.ts},
                 {"duration", args.duration},
                 {"s_goal", s_goal}};
  std::vector<std::string> inputs = {args.scenario};
  if (!args.model.empty()) inputs.push_back(args.model);
  write_manifest(fs::path(args.out) / "compare_manifest.json", config,
                 json::object(), inputs, outputs, watch);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) {
    if (i > 0) g_command_line += ' ';
    g_command_line += argv[i];
  }

  CLI::App app{"Safe path-following toolkit: safe-set kernels, a learned "
               "membership classifier, and closed-loop planner evaluation"};
  app.require_subcommand(1);
  argv = app.ensure_utf8(argv);

  KernelArgs kernel_args;
  CLI::App* kernel = app.add_subcommand(
      "kernel", "Compute safe-set kernels for curvature bounds");
  kernel->add_option("--kappa", kernel_args.kappas,
                     "Curvature bound, repeatable");
  kernel->add_option("--family", kernel_args.family,
                     "Named bound family ('default': the 13 shipped values)");
  kernel->add_option("--refine", kernel_args.refine,
                     "Scale factor for the state-grid resolution");
  kernel->add_option("--out", kernel_args.out, "Output directory");
  kernel->add_option("--width-left", kernel_args.width_left,
                     "Signed left road bound (<= 0)");
  kernel->add_option("--width-right", kernel_args.width_right,
                     "Signed right road bound (>= 0)");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand(
      "train", "Train the membership classifier on kernel files");
  train->add_option("--kernels", train_args.kernel_dir,
                    "Directory holding .krn files");
  train->add_option("--kernel", train_args.kernel_files,
                    "Kernel file, repeatable");
  train->add_option("--eval-kernel", train_args.eval_kernels,
                    "Held-out kernel evaluated after training, repeatable");
  train->add_option("--out", train_args.out, "Model output path");
  train->add_option("--ablate", train_args.ablate,
                    "Sweep a design axis ('activations')");
  train->add_option("--layers", train_args.layers, "Hidden layers");
  train->add_option("--width", train_args.width, "Hidden width");
  train->add_option("--activation", train_args.activation,
                    "elu, relu, softplus or tanh");
  train->add_option("--epochs", train_args.epochs, "Training epochs");
  train->add_option("--lr", train_args.lr, "Initial learning rate");
  train->add_option("--lr-decay", train_args.lr_decay, "Learning-rate decay");
  train->add_option("--lr-step", train_args.lr_step,
                    "Epochs between decays");
  train->add_option("--batch", train_args.batch, "Batch size");
  train->add_option("--cutoff", train_args.cutoff, "Membership threshold");
  train->add_option("--validation-fraction", train_args.validation_fraction,
                    "Held-out fraction");
  train->add_option("--seed", train_args.seed, "Seed for init and shuffling");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand(
      "eval", "Score a classifier against kernel files");
  eval->add_option("--model", eval_args.model, "Model file")->required();
  eval->add_option("--kernels", eval_args.kernel_dir,
                   "Directory holding .krn files");
  eval->add_option("--kernel", eval_args.kernel_files,
                   "Kernel file, repeatable");
  eval->add_option("--out", eval_args.out, "Metrics JSON path");
  eval->add_option("--cutoff", eval_args.cutoff,
                   "Membership threshold (default: the model's)");

  SimArgs sim_args;
  CLI::App* sim =
      app.add_subcommand("sim", "One closed-loop run on a scenario");
  sim->add_option("--scenario", sim_args.scenario, "Scenario JSON")
      ->required();
  sim->add_option("--strategy", sim_args.strategy,
                  "none, zero-velocity, dd-fixed, dd-adaptive, nn-adaptive");
  sim->add_option("--model", sim_args.model,
                  "Classifier file (nn-adaptive)");
  sim->add_option("--horizon", sim_args.horizon, "Prediction horizon steps");
  sim->add_option("--ts", sim_args.ts, "Controller period");
  sim->add_option("--kappa", sim_args.kappa,
                  "Fixed curvature bound (dd-fixed; default: road worst)");
  sim->add_option("--cutoff", sim_args.cutoff,
                  "Membership threshold (nn-adaptive)");
  sim->add_option("--start-s", sim_args.start_s, "Initial arc length");
  sim->add_option("--start-d", sim_args.start_d, "Initial lateral offset");
  sim->add_option("--start-mu", sim_args.start_mu, "Initial heading error");
  sim->add_option("--start-v", sim_args.start_v, "Initial speed");
  sim->add_option("--s-goal", sim_args.s_goal,
                  "Goal arc length (< 0: derived from the road)");
  sim->add_option("--duration", sim_args.duration, "Simulated-time budget");
  sim->add_flag("--abort-on-violation", sim_args.abort_on_violation,
                "Stop at the first road violation");
  sim->add_option("--q-p", sim_args.q_p, "Progress-weight override");
  sim->add_option("--out", sim_args.out, "Output directory");

  CompareArgs compare_args;
  CLI::App* compare = app.add_subcommand(
      "compare", "Run terminal-constraint variants and tabulate them");
  compare->add_option("--scenario", compare_args.scenario, "Scenario JSON")
      ->required();
  compare->add_option("--model", compare_args.model,
                      "Classifier file; adds the nn-adaptive variant");
  compare->add_option("--out", compare_args.out, "Output directory");
  compare->add_flag("--long", compare_args.with_long,
                    "Also run the long-horizon baseline variants");
  compare->add_option("--horizon-short", compare_args.horizon_short,
                      "Short prediction horizon");
  compare->add_option("--ts", compare_args.ts, "Controller period");
  compare->add_option("--duration", compare_args.duration,
                      "Simulated-time budget per run");
  compare->add_option("--s-goal", compare_args.s_goal,
                      "Common goal (< 0: derived from the longest horizon)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*kernel) return cmd_kernel(kernel_args);
    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_args);
    if (*sim) return cmd_sim(sim_args);
    if (*compare) return cmd_compare(compare_args);
  } catch (const CliError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 2;
}
