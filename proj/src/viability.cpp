#include "vrp/viability.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "vrp/model.hpp"
#include "vrp/parallel.hpp"

namespace vrp {

namespace {

constexpr std::uint32_t kNoSuccessor = 0xffffffffu;

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = (lo + hi) / 2.0;
    return out;
  }
  const double step = (hi - lo) / (count - 1);
  for (int i = 0; i < count; ++i) out[i] = lo + i * step;
  return out;
}

// Steering box shrunk by the lateral half of the acceleration budget:
// delta_bar(v) = min(atan(a_max L / v^2), delta_max).
double delta_bar(double v, const VehicleParams& p) {
  if (v * v < 1e-12) return p.delta_max;
  return std::min(std::atan(p.a_max * p.wheelbase / (v * v)), p.delta_max);
}

struct Axis {
  double min, step, inv_step;
  int count;
};

Axis make_axis(double min, double max, int count) {
  const double step = (max - min) / (count - 1);
  return {min, step, 1.0 / step, count};
}

inline int nearest_index(const Axis& ax, double x) {
  const long i = std::lrint((x - ax.min) * ax.inv_step);
  if (i < 0 || i >= ax.count) return -1;
  return static_cast<int>(i);
}

// Input grids and acceleration-feasible (delta, accel) pairs per v level,
// each with a per-adversary scan order that starts near the curvature
// tracking steering (first tries usually hit, which keeps the successor cache
// warm).
struct InputTables {
  std::vector<double> accel;                    // accel_count
  std::vector<double> nu;                       // nu_count, canonical order
  std::vector<int> nu_order;                    // extremes first
  std::vector<double> tan_over_L;               // v_count * delta_count
  std::vector<double> delta;                    // v_count * delta_count
  std::vector<std::vector<std::uint16_t>> feasible;  // per v: packed pairs
  // per (nu, v): scan order into feasible[v]
  std::vector<std::vector<std::uint16_t>> order;
  int delta_count = 0;
  int accel_count = 0;
};

InputTables build_input_tables(const GridSpec& spec, double kappa_max,
                               const VehicleParams& params) {
  InputTables t;
  t.delta_count = spec.delta_count;
  t.accel_count = spec.accel_count;
  t.accel = linspace(params.accel_min, params.accel_max, spec.accel_count);
  t.nu = linspace(-kappa_max, kappa_max, spec.nu_count);
  t.nu_order.resize(spec.nu_count);
  std::iota(t.nu_order.begin(), t.nu_order.end(), 0);
  std::sort(t.nu_order.begin(), t.nu_order.end(), [&](int a, int b) {
    return std::abs(t.nu[a]) > std::abs(t.nu[b]);
  });

  t.tan_over_L.resize(static_cast<std::size_t>(spec.v_count) *
                      spec.delta_count);
  t.delta.resize(t.tan_over_L.size());
  t.feasible.resize(spec.v_count);
  for (int iv = 0; iv < spec.v_count; ++iv) {
    const double v = spec.v_value(iv);
    const auto deltas = linspace(-delta_bar(v, params), delta_bar(v, params),
                                 spec.delta_count);
    auto& feas = t.feasible[iv];
    for (int k = 0; k < spec.delta_count; ++k) {
      const std::size_t at =
          static_cast<std::size_t>(iv) * spec.delta_count + k;
      t.delta[at] = deltas[k];
      t.tan_over_L[at] = std::tan(deltas[k]) / params.wheelbase;
      for (int j = 0; j < spec.accel_count; ++j) {
        // 1e-12 slack absorbs the tan(atan(...)) roundtrip at the
        // lateral-saturation endpoint.
        if (acc_constraint_value(v, {deltas[k], t.accel[j]}, params) <=
            1e-12) {
          feas.push_back(static_cast<std::uint16_t>(k * spec.accel_count + j));
        }
      }
    }
  }

  const int a_center_idx = static_cast<int>(
      std::min_element(t.accel.begin(), t.accel.end(),
                       [](double a, double b) {
                         return std::abs(a) < std::abs(b);
                       }) -
      t.accel.begin());
  t.order.resize(static_cast<std::size_t>(spec.nu_count) * spec.v_count);
  for (int inu = 0; inu < spec.nu_count; ++inu) {
    const double want = std::atan(t.nu[inu] * params.wheelbase);
    for (int iv = 0; iv < spec.v_count; ++iv) {
      const auto& feas = t.feasible[iv];
      auto& ord = t.order[static_cast<std::size_t>(inu) * spec.v_count + iv];
      ord.resize(feas.size());
      std::iota(ord.begin(), ord.end(), 0);
      const double* deltas =
          t.delta.data() + static_cast<std::size_t>(iv) * spec.delta_count;
      std::stable_sort(ord.begin(), ord.end(),
                       [&](std::uint16_t a, std::uint16_t b) {
                         const auto pa = feas[a], pb = feas[b];
                         const double da =
                             std::abs(deltas[pa / t.accel_count] - want);
                         const double db =
                             std::abs(deltas[pb / t.accel_count] - want);
                         if (da != db) return da < db;
                         return std::abs(pa % t.accel_count - a_center_idx) <
                                std::abs(pb % t.accel_count - a_center_idx);
                       });
    }
  }
  return t;
}

struct SweepContext {
  GridSpec spec;
  Axis d_ax, mu_ax, v_ax;
  InputTables inputs;
  double ts;
  bool conservative;
  // per (cell * nu_count + nu): last successor cell that worked
  std::vector<std::uint32_t> succ_cache;
};

SweepContext make_context(const GridSpec& spec, double kappa_max,
                          const VehicleParams& params,
                          const KernelComputeOptions& options) {
  SweepContext ctx;
  ctx.spec = spec;
  ctx.d_ax = make_axis(spec.d_min, spec.d_max, spec.d_count);
  ctx.mu_ax = make_axis(spec.mu_min, spec.mu_max, spec.mu_count);
  ctx.v_ax = make_axis(spec.v_min, spec.v_max, spec.v_count);
  ctx.inputs = build_input_tables(spec, kappa_max, params);
  ctx.ts = spec.ts;
  ctx.conservative = options.conservative;
  ctx.succ_cache.assign(
      static_cast<std::size_t>(spec.cell_count()) * spec.nu_count,
      kNoSuccessor);
  return ctx;
}

// RK4 step of (d', mu', v') = (v sin mu, v T - nu v cos mu / (1 - d nu), a)
// with T = tan(delta)/L. Returns false if the frame degenerates mid-step.
inline bool rk4_game(double d, double mu, double v, double T, double a,
                     double nu, double ts, double& d1, double& mu1,
                     double& v1) {
  double kd[4], kmu[4], kv[4];
  double cd = d, cmu = mu, cv = v;
  for (int stage = 0; stage < 4; ++stage) {
    const double den = 1.0 - cd * nu;
    if (den <= 1e-6) return false;
    const double smu = std::sin(cmu);
    const double co = std::cos(cmu);
    kd[stage] = cv * smu;
    kmu[stage] = cv * T - nu * cv * co / den;
    kv[stage] = a;
    if (stage < 3) {
      const double h = stage == 2 ? ts : ts / 2.0;
      cd = d + h * kd[stage];
      cmu = mu + h * kmu[stage];
      cv = v + h * kv[stage];
    }
  }
  d1 = d + ts / 6.0 * (kd[0] + 2.0 * kd[1] + 2.0 * kd[2] + kd[3]);
  mu1 = mu + ts / 6.0 * (kmu[0] + 2.0 * kmu[1] + 2.0 * kmu[2] + kmu[3]);
  v1 = v + ts / 6.0 * (kv[0] + 2.0 * kv[1] + 2.0 * kv[2] + kv[3]);
  return true;
}

// Nearest-cell membership of a successor; -1 when it leaves the box.
inline std::int64_t round_cell(const SweepContext& ctx, double d, double mu,
                               double v) {
  const int id = nearest_index(ctx.d_ax, d);
  if (id < 0) return -1;
  const int imu = nearest_index(ctx.mu_ax, mu);
  if (imu < 0) return -1;
  const int iv = nearest_index(ctx.v_ax, v);
  if (iv < 0) return -1;
  return ctx.spec.cell_index(id, imu, iv);
}

inline bool corners_marked(const SweepContext& ctx,
                           const std::vector<std::uint8_t>& in, double d,
                           double mu, double v) {
  const auto corner_range = [](const Axis& ax, double x, int& lo, int& hi) {
    const double f = (x - ax.min) * ax.inv_step;
    lo = static_cast<int>(std::floor(f));
    hi = static_cast<int>(std::ceil(f));
    return lo >= 0 && hi < ax.count;
  };
  int dlo, dhi, mlo, mhi, vlo, vhi;
  if (!corner_range(ctx.d_ax, d, dlo, dhi) ||
      !corner_range(ctx.mu_ax, mu, mlo, mhi) ||
      !corner_range(ctx.v_ax, v, vlo, vhi)) {
    return false;
  }
  for (int id = dlo; id <= dhi; ++id) {
    for (int imu = mlo; imu <= mhi; ++imu) {
      for (int iv = vlo; iv <= vhi; ++iv) {
        if (!in[ctx.spec.cell_index(id, imu, iv)]) return false;
      }
    }
  }
  return true;
}

// One Jacobi sweep: out[cell] = survives(cell, in). Returns removals.
std::int64_t sweep(SweepContext& ctx, const std::vector<std::uint8_t>& in,
                   std::vector<std::uint8_t>& out) {
  const GridSpec& spec = ctx.spec;
  const int nu_count = spec.nu_count;
  const InputTables& t = ctx.inputs;
  std::vector<std::int64_t> removals_per_slab(spec.d_count, 0);

  parallel_for(spec.d_count, [&](std::size_t d_begin, std::size_t d_end) {
    for (std::size_t id = d_begin; id < d_end; ++id) {
      const double d = spec.d_value(static_cast<int>(id));
      std::int64_t removals = 0;
      for (int imu = 0; imu < spec.mu_count; ++imu) {
        const double mu = spec.mu_value(imu);
        std::int64_t cell = spec.cell_index(static_cast<int>(id), imu, 0);
        for (int iv = 0; iv < spec.v_count; ++iv, ++cell) {
          if (!in[cell]) {
            out[cell] = 0;
            continue;
          }
          const double v = spec.v_value(iv);
          const double* tanL =
              t.tan_over_L.data() +
              static_cast<std::size_t>(iv) * spec.delta_count;
          const auto& feas = t.feasible[iv];
          bool survive = true;
          for (int oi = 0; oi < nu_count && survive; ++oi) {
            const int inu = t.nu_order[oi];
            const double nu = t.nu[inu];
            const std::size_t slot =
                static_cast<std::size_t>(cell) * nu_count + inu;
            if (!ctx.conservative) {
              const std::uint32_t cached = ctx.succ_cache[slot];
              if (cached != kNoSuccessor && in[cached]) continue;
            }
            const auto& order =
                t.order[static_cast<std::size_t>(inu) * spec.v_count + iv];
            bool ok = false;
            for (std::uint16_t pos : order) {
              const std::uint16_t pair = feas[pos];
              const double T = tanL[pair / t.accel_count];
              const double a = t.accel[pair % t.accel_count];
              double d1, mu1, v1;
              if (!rk4_game(d, mu, v, T, a, nu, ctx.ts, d1, mu1, v1)) {
                continue;
              }
              if (ctx.conservative) {
                if (corners_marked(ctx, in, d1, mu1, v1)) {
                  ok = true;
                  break;
                }
              } else {
                const std::int64_t succ = round_cell(ctx, d1, mu1, v1);
                if (succ >= 0 && in[succ]) {
                  ctx.succ_cache[slot] = static_cast<std::uint32_t>(succ);
                  ok = true;
                  break;
                }
              }
            }
            survive = ok;
          }
          out[cell] = survive ? 1 : 0;
          if (!survive) ++removals;
        }
      }
      removals_per_slab[id] += removals;
    }
  });
  return std::accumulate(removals_per_slab.begin(), removals_per_slab.end(),
                         std::int64_t{0});
}

std::vector<std::uint8_t> unpack_bits(const KernelGrid& kernel) {
  const std::int64_t n = kernel.cell_count();
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) bytes[i] = kernel.bit(i) ? 1 : 0;
  return bytes;
}

std::vector<std::uint64_t> pack_bits(const std::vector<std::uint8_t>& bytes) {
  std::vector<std::uint64_t> words((bytes.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i]) words[i >> 6] |= std::uint64_t{1} << (i & 63);
  }
  return words;
}

}  // namespace

GridSpec GridSpec::table_defaults(double kappa_max,
                                  const VehicleParams& params) {
  if (!(kappa_max > 0.0)) {
    fail(ErrorCode::invalid_argument, "kappa_max must be positive");
  }
  GridSpec spec;
  spec.v_max = std::min(std::sqrt(params.a_max / kappa_max), params.v_bar);
  spec.mu_min = params.mu_min;
  spec.mu_max = params.mu_max;
  return spec;
}

GridSpec GridSpec::refined(double factor) const {
  if (!(factor > 0.0)) {
    fail(ErrorCode::invalid_argument, "refine factor must be positive");
  }
  GridSpec out = *this;
  const auto scale = [factor](int count) {
    return std::max(2, static_cast<int>(std::lround(count * factor)));
  };
  out.d_count = scale(d_count);
  out.mu_count = scale(mu_count);
  out.v_count = scale(v_count);
  return out;
}

void GridSpec::validate() const {
  if (d_count < 2 || mu_count < 2 || v_count < 2) {
    fail(ErrorCode::invalid_argument, "state grids need at least 2 points");
  }
  if (nu_count < 1 || delta_count < 1 || accel_count < 1) {
    fail(ErrorCode::invalid_argument, "input grids need at least 1 point");
  }
  if (delta_count * accel_count > 65535) {
    fail(ErrorCode::invalid_argument, "input grid too large");
  }
  if (!(d_min < d_max) || !(mu_min < mu_max) || !(v_min < v_max)) {
    fail(ErrorCode::invalid_argument, "grid ranges are inverted");
  }
  if (!(v_min >= 0.0)) {
    fail(ErrorCode::invalid_argument, "v grid must be nonnegative");
  }
  if (!(ts > 0.0)) {
    fail(ErrorCode::invalid_argument, "ts must be positive");
  }
  if (cell_count() > std::int64_t{1} << 31) {
    fail(ErrorCode::invalid_argument, "grid exceeds 2^31 cells");
  }
}

KernelGrid::KernelGrid(GridSpec spec, double kappa_max,
                       std::vector<std::uint64_t> bits, int iterations)
    : spec_(spec),
      kappa_max_(kappa_max),
      bits_(std::move(bits)),
      iterations_(iterations) {
  spec_.validate();
  if (!(kappa_max_ > 0.0)) {
    fail(ErrorCode::invalid_argument, "kappa_max must be positive");
  }
  const std::size_t words =
      static_cast<std::size_t>((spec_.cell_count() + 63) / 64);
  if (bits_.size() != words) {
    fail(ErrorCode::invalid_argument, "occupancy size mismatch");
  }
  // Mask tail bits so popcounts and comparisons stay well-defined.
  const int tail = static_cast<int>(spec_.cell_count() & 63);
  if (tail != 0 && !bits_.empty()) {
    bits_.back() &= (std::uint64_t{1} << tail) - 1;
  }
  marked_count_ = 0;
  for (std::uint64_t w : bits_) marked_count_ += std::popcount(w);
}

bool KernelGrid::contains(const GameState& z) const {
  const Axis d_ax = make_axis(spec_.d_min, spec_.d_max, spec_.d_count);
  const Axis mu_ax = make_axis(spec_.mu_min, spec_.mu_max, spec_.mu_count);
  const Axis v_ax = make_axis(spec_.v_min, spec_.v_max, spec_.v_count);
  const int id = nearest_index(d_ax, z.d);
  const int imu = nearest_index(mu_ax, z.mu);
  const int iv = nearest_index(v_ax, z.v);
  if (id < 0 || imu < 0 || iv < 0) return false;
  return cell(id, imu, iv);
}

KernelGrid initialize_k0(const GridSpec& spec, double kappa_max,
                         const VehicleParams& params, double width_left,
                         double width_right) {
  spec.validate();
  params.validate();
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(spec.cell_count()));
  parallel_for(spec.d_count, [&](std::size_t d_begin, std::size_t d_end) {
    for (std::size_t id = d_begin; id < d_end; ++id) {
      for (int imu = 0; imu < spec.mu_count; ++imu) {
        // Road clearance is v-independent: evaluate once per (d, mu) row.
        const GameState probe{spec.d_value(static_cast<int>(id)),
                              spec.mu_value(imu), spec.v_min};
        const bool row_ok = state_feasible(probe, width_left, width_right,
                                           params, spec.v_max);
        std::int64_t cell = spec.cell_index(static_cast<int>(id), imu, 0);
        for (int iv = 0; iv < spec.v_count; ++iv, ++cell) {
          bytes[cell] = row_ok ? 1 : 0;
        }
      }
    }
  });
  return KernelGrid(spec, kappa_max, pack_bits(bytes), 0);
}

KernelGrid kernel_iterate(const KernelGrid& kernel, const VehicleParams& params,
                          const KernelComputeOptions& options) {
  params.validate();
  SweepContext ctx =
      make_context(kernel.spec(), kernel.kappa_max(), params, options);
  const auto in = unpack_bits(kernel);
  std::vector<std::uint8_t> out(in.size());
  sweep(ctx, in, out);
  return KernelGrid(kernel.spec(), kernel.kappa_max(), pack_bits(out),
                    kernel.iterations() + 1);
}

KernelGrid compute_kernel(const GridSpec& spec, double kappa_max,
                          const VehicleParams& params, double width_left,
                          double width_right,
                          const KernelComputeOptions& options) {
  const KernelGrid k0 =
      initialize_k0(spec, kappa_max, params, width_left, width_right);
  SweepContext ctx = make_context(spec, kappa_max, params, options);
  std::vector<std::uint8_t> in = unpack_bits(k0);
  std::vector<std::uint8_t> out(in.size());
  int iterations = 0;
  for (;;) {
    if (iterations >= options.max_sweeps) {
      fail(ErrorCode::no_convergence, "kernel iteration exceeded max_sweeps");
    }
    const std::int64_t removed = sweep(ctx, in, out);
    ++iterations;
    in.swap(out);
    if (removed == 0) break;
  }
  return KernelGrid(spec, kappa_max, pack_bits(in), iterations);
}

double dd_velocity_bound(double d, double kappa_max,
                         const VehicleParams& params) {
  if (!(kappa_max >= 0.0)) {
    fail(ErrorCode::invalid_argument, "kappa_max must be nonnegative");
  }
  if (kappa_max == 0.0) return params.v_bar;
  const double margin = 1.0 - std::abs(d * kappa_max);
  if (margin <= 0.0) return 0.0;
  return std::min(params.v_bar, std::sqrt(params.a_max * margin / kappa_max));
}

bool dd_policy_valid(double kappa_max, const VehicleParams& params,
                     double width_left, double width_right) {
  const double d_max = d_max_at_zero_heading(width_left, width_right, params);
  const double t = std::tan(params.delta_max);
  return kappa_max <= t / (params.wheelbase + d_max * t);
}

bool dd_contains(const GameState& z, double kappa_max,
                 const VehicleParams& params, double width_left,
                 double width_right) {
  if (!dd_policy_valid(kappa_max, params, width_left, width_right)) {
    fail(ErrorCode::invalid_argument,
         "stationary policy invalid: kappa_max exceeds the steering box");
  }
  const double half = params.car_width / 2.0;
  if (z.d < width_left + half || z.d > width_right - half) return false;
  if (std::abs(z.mu) > 1e-9) return false;
  if (z.v < 0.0 || z.v > dd_velocity_bound(z.d, kappa_max, params)) {
    return false;
  }
  return true;
}

ControlInput stationary_policy(const GameState& z, double nu,
                               const VehicleParams& params) {
  const double den = 1.0 - z.d * nu;
  if (den <= 1e-6) {
    fail(ErrorCode::singularity, "stationary_policy: 1 - d*nu <= 1e-6");
  }
  return {std::atan(nu * params.wheelbase / den), 0.0};
}

double max_curvature_rate(double delta_rate_bound, double kappa_max,
                          const VehicleParams& params, double width_left,
                          double width_right) {
  const double d_max = d_max_at_zero_heading(width_left, width_right, params);
  return std::tan(delta_rate_bound) * (1.0 - d_max * kappa_max) /
         params.wheelbase;
}

const std::vector<double>& default_kappa_family() {
  static const std::vector<double> family = {
      0.1,   0.05,  0.04,  0.03,   0.02,    0.01,  0.005,
      0.004, 0.003, 0.002, 0.0015, 0.00125, 0.001};
  return family;
}

}  // namespace vrp
