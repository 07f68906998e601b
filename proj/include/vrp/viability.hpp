#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vrp/types.hpp"

namespace vrp {

// Lattice over the reduced game state (d, mu, v) plus the input/adversary
// grids used by the kernel iteration. State axes are inclusive linspaces;
// defaults mirror the reference parameterization for a given kappa_max.
struct GridSpec {
  double d_min = -0.3415, d_max = 0.3415;
  int d_count = 101;
  double mu_min = -0.2, mu_max = 0.2;
  int mu_count = 81;
  double v_min = 0.0, v_max = 4.0;
  int v_count = 135;
  int nu_count = 5;
  int delta_count = 9;
  int accel_count = 9;
  double ts = 0.2;

  // v-range [0, min(sqrt(a_max/kappa_max), v_bar)], everything else as above.
  static GridSpec table_defaults(double kappa_max, const VehicleParams& params);

  // Scales the three state counts by factor (numbers of points, not spacing);
  // input grids are untouched.
  GridSpec refined(double factor) const;

  void validate() const;

  double d_step() const { return (d_max - d_min) / (d_count - 1); }
  double mu_step() const { return (mu_max - mu_min) / (mu_count - 1); }
  double v_step() const { return (v_max - v_min) / (v_count - 1); }
  double d_value(int i) const { return d_min + i * d_step(); }
  double mu_value(int i) const { return mu_min + i * mu_step(); }
  double v_value(int i) const { return v_min + i * v_step(); }
  std::int64_t cell_count() const {
    return static_cast<std::int64_t>(d_count) * mu_count * v_count;
  }
  std::int64_t cell_index(int id, int imu, int iv) const {
    return (static_cast<std::int64_t>(id) * mu_count + imu) * v_count + iv;
  }

  bool operator==(const GridSpec&) const = default;
};

// Bit-packed occupancy over a GridSpec lattice: the set of game states from
// which the car can keep satisfying constraints against worst-case road
// curvature |nu| <= kappa_max.
class KernelGrid {
 public:
  KernelGrid(GridSpec spec, double kappa_max, std::vector<std::uint64_t> bits,
             int iterations);

  const GridSpec& spec() const { return spec_; }
  double kappa_max() const { return kappa_max_; }
  int iterations() const { return iterations_; }
  std::int64_t cell_count() const { return spec_.cell_count(); }
  std::int64_t marked_count() const { return marked_count_; }
  const std::vector<std::uint64_t>& bits() const { return bits_; }

  bool cell(int id, int imu, int iv) const {
    return bit(spec_.cell_index(id, imu, iv));
  }
  bool bit(std::int64_t idx) const {
    return (bits_[static_cast<std::size_t>(idx >> 6)] >> (idx & 63)) & 1u;
  }

  // Membership by nearest lattice cell; states rounding outside the box are
  // out.
  bool contains(const GameState& z) const;

 private:
  GridSpec spec_;
  double kappa_max_;
  std::vector<std::uint64_t> bits_;
  int iterations_;
  std::int64_t marked_count_;
};

struct KernelComputeOptions {
  // Conservative membership: every lattice corner around a successor must be
  // marked, instead of the nearest cell. Slower, for sensitivity studies.
  bool conservative = false;
  int max_sweeps = 100000;
};

// K0: every lattice state that satisfies the pointwise constraints (heading
// box, 0 <= v <= grid v-max, road clearances).
KernelGrid initialize_k0(const GridSpec& spec, double kappa_max,
                         const VehicleParams& params, double width_left,
                         double width_right);

// One removal sweep: keeps a cell iff for every adversary curvature on the nu
// grid some feasible input lands the RK4 successor in a marked cell. Road
// widths do not appear: the initial set already encodes them and sweeps only
// remove.
KernelGrid kernel_iterate(const KernelGrid& kernel, const VehicleParams& params,
                          const KernelComputeOptions& options = {});

// Full fixed-point computation: sweeps until nothing is removed. The result
// is independent of sweep internals (caching only affects speed).
KernelGrid compute_kernel(const GridSpec& spec, double kappa_max,
                          const VehicleParams& params, double width_left,
                          double width_right,
                          const KernelComputeOptions& options = {});

// Top speed of the analytic stationary set at offset d:
//   min(v_bar, sqrt(a_max (1 - |d kappa_max|) / kappa_max)).
double dd_velocity_bound(double d, double kappa_max,
                         const VehicleParams& params);

// True when the stationary policy's steering stays within the box for every
// |nu| <= kappa_max at every reachable offset:
//   kappa_max <= tan(delta_max) / (L + d_max tan(delta_max)).
bool dd_policy_valid(double kappa_max, const VehicleParams& params,
                     double width_left, double width_right);

// Membership in the analytic discriminating domain: centered-body offsets,
// mu = 0 (1e-9 tolerance), v under dd_velocity_bound. Throws
// ErrorCode::invalid_argument when dd_policy_valid fails.
bool dd_contains(const GameState& z, double kappa_max,
                 const VehicleParams& params, double width_left,
                 double width_right);

// Curvature-tracking input delta = atan(nu L / (1 - d nu)), accel = 0; makes
// (d, 0, v) an exact fixed point of the game dynamics under adversary nu.
ControlInput stationary_policy(const GameState& z, double nu,
                               const VehicleParams& params);

// Largest per-step curvature change that keeps the stationary policy's
// steering change under delta_rate_bound:
//   tan(delta_rate_bound) (1 - d_max kappa_max) / L.
double max_curvature_rate(double delta_rate_bound, double kappa_max,
                          const VehicleParams& params, double width_left,
                          double width_right);

// The 13 curvature bounds of the default kernel family, descending.
const std::vector<double>& default_kappa_family();

// Binary kernel file ("DKRN", little-endian, CRC-checked). The file records
// kappa_max, the state axes, and ts; input-grid counts and the iteration
// counter are not part of the format, so loaded kernels report iterations()
// == 0 and default input counts.
void save_kernel(const KernelGrid& kernel, const std::string& path);
KernelGrid load_kernel(const std::string& path);

// One "d,mu,v" row per marked lattice cell, for plotting the set.
void export_kernel_csv(const KernelGrid& kernel, const std::string& path);

}  // namespace vrp
