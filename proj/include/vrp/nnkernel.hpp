#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vrp/types.hpp"
#include "vrp/viability.hpp"

namespace vrp {

// Hidden-layer nonlinearities for the membership classifier. The default is
// ELU with alpha = 1, which keeps the network C1 so its output can serve as a
// differentiable constraint.
enum class Activation { elu, relu, softplus, tanh_unit };

double activation_value(Activation act, double x);
// Derivative with respect to the pre-activation.
double activation_derivative(Activation act, double x);
Activation activation_from_name(const std::string& name);
const char* activation_name(Activation act);

struct TrainConfig {
  int hidden_layers = 3;
  int hidden_width = 16;
  Activation activation = Activation::elu;
  int epochs = 9;
  // Step size starts at lr_initial and is multiplied by lr_decay every
  // lr_step_epochs epochs (0.01 -> 0.001 -> 0.0001 over nine epochs).
  double lr_initial = 0.01;
  double lr_decay = 0.1;
  int lr_step_epochs = 3;
  int batch_size = 1500;
  double cutoff = 0.25;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;

  void validate() const;
};

// Lattice samples (d, mu, v, kappa_max) -> {0, 1} pooled from a family of
// kernels. Stores labels as bit planes and a shuffled sample order instead of
// materialized feature rows; features are reconstructed from the grid axes on
// demand. Normalization statistics cover the full set (computed before the
// split), and the first train_count() entries of the shuffled order form the
// training split.
class LabeledDataset {
 public:
  static LabeledDataset build(const std::vector<KernelGrid>& family,
                              std::uint64_t seed,
                              double validation_fraction = 0.05);

  std::int64_t size() const { return total_; }
  std::int64_t train_count() const { return train_count_; }
  std::int64_t validation_count() const { return total_ - train_count_; }
  std::uint64_t seed() const { return seed_; }

  // Raw (unnormalized) features and label of the sample at a position in the
  // shuffled order.
  void fetch(std::int64_t ordered_pos, std::array<double, 4>& features,
             double& label) const {
    fetch_global(order_[static_cast<std::size_t>(ordered_pos)], features,
                 label);
  }
  // Same, addressed by the unshuffled global sample index.
  void fetch_global(std::uint32_t global_idx, std::array<double, 4>& features,
                    double& label) const;

  // Per-feature z-score statistics over the full set (population std; a
  // constant feature gets std 1 so normalization stays a no-op for it).
  const std::array<double, 4>& feature_mean() const { return mean_; }
  const std::array<double, 4>& feature_std() const { return stddev_; }

  // Fraction of label-1 samples, for imbalance logging.
  double positive_fraction() const;

  const std::vector<std::uint32_t>& order() const { return order_; }

 private:
  struct Source {
    GridSpec spec;
    double kappa_max;
    std::vector<std::uint64_t> labels;
    std::int64_t offset;  // global index of this source's first cell
  };

  std::vector<Source> sources_;
  std::vector<std::uint32_t> order_;
  std::int64_t total_ = 0;
  std::int64_t train_count_ = 0;
  std::int64_t positive_count_ = 0;
  std::array<double, 4> mean_{0.0, 0.0, 0.0, 0.0};
  std::array<double, 4> stddev_{1.0, 1.0, 1.0, 1.0};
  std::uint64_t seed_ = 0;
};

// Fully connected classifier [4, w, ..., w, 1] with sigmoid output. Holds its
// own normalization so prediction is self-contained.
struct MlpModel {
  std::vector<Eigen::MatrixXd> weights;  // layer l: (fan_out x fan_in)
  std::vector<Eigen::VectorXd> biases;
  Activation activation = Activation::elu;
  std::array<double, 4> mean{0.0, 0.0, 0.0, 0.0};
  std::array<double, 4> stddev{1.0, 1.0, 1.0, 1.0};
  double cutoff = 0.25;
  std::uint64_t seed = 0;
  TrainConfig config;

  std::vector<int> layer_sizes() const;
  void validate() const;

  // Pre-sigmoid output on raw (unnormalized) features.
  double logit(const std::array<double, 4>& features) const;
  // Membership value in (0, 1); the planner treats value >= cutoff as safe.
  double predict(const GameState& z, double kappa_max) const;
  // Exact reverse-mode gradient of predict with respect to
  // (d, mu, v, kappa_max), normalization chain included.
  Eigen::Vector4d predict_gradient(const GameState& z, double kappa_max) const;
  // Gradient of the pre-sigmoid output. Optimizers should constrain the
  // logit rather than the sigmoid value: the feasible sets are identical,
  // but the sigmoid gradient vanishes in the tails and its linearization
  // then demands absurd steps.
  Eigen::Vector4d logit_gradient(const GameState& z, double kappa_max) const;

 private:
  Eigen::Vector4d backward(const GameState& z, double kappa_max,
                           bool through_sigmoid) const;
};

// Classification rates as percentages of all evaluated samples. The positive
// class is "inside the kernel"; false negatives call a safe state unsafe.
// accuracy is derived as 100 - fn - fp so the three always sum to 100.
struct EvalMetrics {
  double accuracy = 0.0;
  double false_negative_rate = 0.0;
  double false_positive_rate = 0.0;
  std::int64_t sample_count = 0;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> epoch_loss;  // mean training BCE per epoch
  EvalMetrics validation;          // on the held-out split, at config.cutoff
};

// Fresh network with uniform fan-in initialization, U(-1/sqrt(n), 1/sqrt(n))
// for both weights and biases, seeded from config.seed.
MlpModel initialize_model(const TrainConfig& config,
                          const std::array<double, 4>& mean,
                          const std::array<double, 4>& stddev);

// Adam on logit-form binary cross-entropy over the training split; the
// training order is reshuffled every epoch from a seeded generator, so equal
// seeds give bit-identical weights. Throws ErrorCode::no_convergence if the
// loss goes non-finite.
TrainResult train_model(const LabeledDataset& data, const TrainConfig& config);

// Point-weighted rates over every lattice cell of every kernel, thresholded
// at cutoff.
EvalMetrics evaluate_model(const MlpModel& model,
                           const std::vector<KernelGrid>& kernels,
                           double cutoff);

// Model file (JSON): layer sizes, activation, flat row-major weights, biases,
// normalization, cutoff, seed, and the training config echo.
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace vrp
