#include "vrp/nnkernel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace vrp {

namespace {

using json = nlohmann::json;

// Lemire multiply-shift bounded draw: deterministic across standard
// libraries, unlike uniform_int_distribution.
inline std::uint64_t bounded(std::mt19937_64& gen, std::uint64_t n) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(gen()) * n) >> 64);
}

void fisher_yates(std::vector<std::uint32_t>& v, std::mt19937_64& gen) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[bounded(gen, i)]);
  }
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

// log(1 + e^l) - y l, evaluated without overflow for large |l|.
inline double bce_from_logit(double logit, double y) {
  return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
}

Eigen::VectorXd batch_logits(const MlpModel& model, Eigen::MatrixXd h) {
  const std::size_t layers = model.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = h * model.weights[l].transpose();
    z.rowwise() += model.biases[l].transpose();
    if (l + 1 == layers) return z.col(0);
    const Activation act = model.activation;
    h = z.unaryExpr([act](double x) { return activation_value(act, x); });
  }
  return h.col(0);  // unreachable; weights.size() >= 1 after validate
}

struct RateCounts {
  std::int64_t total = 0;
  std::int64_t false_neg = 0;
  std::int64_t false_pos = 0;
};

EvalMetrics metrics_from_counts(const RateCounts& c) {
  EvalMetrics m;
  m.sample_count = c.total;
  if (c.total == 0) {
    m.accuracy = 100.0;
    return m;
  }
  m.false_negative_rate = 100.0 * static_cast<double>(c.false_neg) / c.total;
  m.false_positive_rate = 100.0 * static_cast<double>(c.false_pos) / c.total;
  m.accuracy = 100.0 - m.false_negative_rate - m.false_positive_rate;
  return m;
}

}  // namespace

double activation_value(Activation act, double x) {
  switch (act) {
    case Activation::elu:
      return x > 0.0 ? x : std::expm1(x);
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::softplus:
      return x > 30.0 ? x : std::log1p(std::exp(x));
    case Activation::tanh_unit:
      return std::tanh(x);
  }
  fail(ErrorCode::internal, "unknown activation");
}

double activation_derivative(Activation act, double x) {
  switch (act) {
    case Activation::elu:
      return x > 0.0 ? 1.0 : std::exp(x);
    case Activation::relu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::softplus:
      return sigmoid(x);
    case Activation::tanh_unit: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  fail(ErrorCode::internal, "unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "elu") return Activation::elu;
  if (name == "relu") return Activation::relu;
  if (name == "softplus") return Activation::softplus;
  if (name == "tanh") return Activation::tanh_unit;
  fail(ErrorCode::invalid_argument, "unknown activation: " + name);
}

const char* activation_name(Activation act) {
  switch (act) {
    case Activation::elu:
      return "elu";
    case Activation::relu:
      return "relu";
    case Activation::softplus:
      return "softplus";
    case Activation::tanh_unit:
      return "tanh";
  }
  fail(ErrorCode::internal, "unknown activation");
}

void TrainConfig::validate() const {
  if (hidden_layers < 1 || hidden_width < 1) {
    fail(ErrorCode::invalid_argument, "network needs hidden layers and width");
  }
  if (epochs < 1 || batch_size < 1 || lr_step_epochs < 1) {
    fail(ErrorCode::invalid_argument, "epochs, batch size, lr step must be positive");
  }
  if (!(lr_initial > 0.0) || !(lr_decay > 0.0)) {
    fail(ErrorCode::invalid_argument, "learning rates must be positive");
  }
  if (!(cutoff > 0.0) || !(cutoff < 1.0)) {
    fail(ErrorCode::invalid_argument, "cutoff must lie in (0, 1)");
  }
  if (!(adam_beta1 >= 0.0) || adam_beta1 >= 1.0 || !(adam_beta2 >= 0.0) ||
      adam_beta2 >= 1.0 || !(adam_eps > 0.0)) {
    fail(ErrorCode::invalid_argument, "adam parameters out of range");
  }
}

LabeledDataset LabeledDataset::build(const std::vector<KernelGrid>& family,
                                     std::uint64_t seed,
                                     double validation_fraction) {
  if (family.empty()) {
    fail(ErrorCode::invalid_argument, "dataset needs at least one kernel");
  }
  if (!(validation_fraction >= 0.0) || validation_fraction >= 1.0) {
    fail(ErrorCode::invalid_argument, "validation fraction must be in [0, 1)");
  }
  LabeledDataset data;
  data.seed_ = seed;
  std::int64_t offset = 0;
  for (const KernelGrid& kernel : family) {
    data.sources_.push_back(
        {kernel.spec(), kernel.kappa_max(), kernel.bits(), offset});
    offset += kernel.cell_count();
    data.positive_count_ += kernel.marked_count();
  }
  data.total_ = offset;
  if (data.total_ > static_cast<std::int64_t>(0xffffffffu)) {
    fail(ErrorCode::invalid_argument, "dataset exceeds 2^32 samples");
  }

  // Exact two-pass z-score statistics. Each axis value repeats over the other
  // two axes, so the sums collapse to per-axis sums with multiplicities.
  std::array<double, 4> sum{0.0, 0.0, 0.0, 0.0};
  for (const Source& src : data.sources_) {
    const GridSpec& g = src.spec;
    const double d_cells = static_cast<double>(g.cell_count());
    for (int i = 0; i < g.d_count; ++i) {
      sum[0] += g.d_value(i) * g.mu_count * g.v_count;
    }
    for (int i = 0; i < g.mu_count; ++i) {
      sum[1] += g.mu_value(i) * g.d_count * g.v_count;
    }
    for (int i = 0; i < g.v_count; ++i) {
      sum[2] += g.v_value(i) * g.d_count * g.mu_count;
    }
    sum[3] += src.kappa_max * d_cells;
  }
  for (int f = 0; f < 4; ++f) data.mean_[f] = sum[f] / data.total_;

  std::array<double, 4> ssq{0.0, 0.0, 0.0, 0.0};
  for (const Source& src : data.sources_) {
    const GridSpec& g = src.spec;
    const auto sq = [](double x) { return x * x; };
    for (int i = 0; i < g.d_count; ++i) {
      ssq[0] += sq(g.d_value(i) - data.mean_[0]) * g.mu_count * g.v_count;
    }
    for (int i = 0; i < g.mu_count; ++i) {
      ssq[1] += sq(g.mu_value(i) - data.mean_[1]) * g.d_count * g.v_count;
    }
    for (int i = 0; i < g.v_count; ++i) {
      ssq[2] += sq(g.v_value(i) - data.mean_[2]) * g.d_count * g.mu_count;
    }
    ssq[3] += sq(src.kappa_max - data.mean_[3]) *
              static_cast<double>(g.cell_count());
  }
  for (int f = 0; f < 4; ++f) {
    const double s = std::sqrt(ssq[f] / data.total_);
    data.stddev_[f] = s > 1e-12 ? s : 1.0;
  }

  data.order_.resize(static_cast<std::size_t>(data.total_));
  for (std::int64_t i = 0; i < data.total_; ++i) {
    data.order_[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i);
  }
  std::mt19937_64 gen(seed);
  fisher_yates(data.order_, gen);
  data.train_count_ = std::clamp<std::int64_t>(
      std::llround((1.0 - validation_fraction) * data.total_), 0, data.total_);
  return data;
}

void LabeledDataset::fetch_global(std::uint32_t global_idx,
                                  std::array<double, 4>& features,
                                  double& label) const {
  auto it = std::upper_bound(sources_.begin(), sources_.end(),
                             static_cast<std::int64_t>(global_idx),
                             [](std::int64_t idx, const Source& s) {
                               return idx < s.offset;
                             });
  const Source& src = *(it - 1);
  const std::int64_t cell = global_idx - src.offset;
  const GridSpec& g = src.spec;
  const int iv = static_cast<int>(cell % g.v_count);
  const int imu = static_cast<int>((cell / g.v_count) % g.mu_count);
  const int id = static_cast<int>(cell / g.v_count / g.mu_count);
  features[0] = g.d_value(id);
  features[1] = g.mu_value(imu);
  features[2] = g.v_value(iv);
  features[3] = src.kappa_max;
  label = (src.labels[static_cast<std::size_t>(cell >> 6)] >> (cell & 63)) & 1u
              ? 1.0
              : 0.0;
}

double LabeledDataset::positive_fraction() const {
  return total_ == 0 ? 0.0
                     : static_cast<double>(positive_count_) / total_;
}

std::vector<int> MlpModel::layer_sizes() const {
  std::vector<int> sizes;
  sizes.push_back(weights.empty() ? 0 : static_cast<int>(weights[0].cols()));
  for (const auto& w : weights) sizes.push_back(static_cast<int>(w.rows()));
  return sizes;
}

void MlpModel::validate() const {
  if (weights.empty() || weights.size() != biases.size()) {
    fail(ErrorCode::invalid_argument, "model has no layers");
  }
  if (weights.front().cols() != 4 || weights.back().rows() != 1) {
    fail(ErrorCode::invalid_argument, "model must map 4 features to 1 output");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (biases[l].size() != weights[l].rows()) {
      fail(ErrorCode::invalid_argument, "bias size mismatch");
    }
    if (l + 1 < weights.size() &&
        weights[l + 1].cols() != weights[l].rows()) {
      fail(ErrorCode::invalid_argument, "layer size mismatch");
    }
  }
  for (double s : stddev) {
    if (!(s > 0.0)) {
      fail(ErrorCode::invalid_argument, "normalization std must be positive");
    }
  }
  if (!(cutoff > 0.0) || !(cutoff < 1.0)) {
    fail(ErrorCode::invalid_argument, "cutoff must lie in (0, 1)");
  }
}

double MlpModel::logit(const std::array<double, 4>& features) const {
  Eigen::VectorXd h(4);
  for (int f = 0; f < 4; ++f) h(f) = (features[f] - mean[f]) / stddev[f];
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Eigen::VectorXd z = weights[l] * h + biases[l];
    if (l + 1 == weights.size()) return z(0);
    h = z.unaryExpr(
        [this](double x) { return activation_value(activation, x); });
  }
  return h(0);  // unreachable for a validated model
}

double MlpModel::predict(const GameState& z, double kappa_max) const {
  return sigmoid(logit({z.d, z.mu, z.v, kappa_max}));
}

Eigen::Vector4d MlpModel::predict_gradient(const GameState& z,
                                           double kappa_max) const {
  return backward(z, kappa_max, true);
}

Eigen::Vector4d MlpModel::logit_gradient(const GameState& z,
                                         double kappa_max) const {
  return backward(z, kappa_max, false);
}

Eigen::Vector4d MlpModel::backward(const GameState& z, double kappa_max,
                                   bool through_sigmoid) const {
  const std::array<double, 4> features{z.d, z.mu, z.v, kappa_max};
  const std::size_t layers = weights.size();
  std::vector<Eigen::VectorXd> pre(layers);
  Eigen::VectorXd h(4);
  for (int f = 0; f < 4; ++f) h(f) = (features[f] - mean[f]) / stddev[f];
  for (std::size_t l = 0; l < layers; ++l) {
    pre[l] = weights[l] * h + biases[l];
    if (l + 1 < layers) {
      h = pre[l].unaryExpr(
          [this](double x) { return activation_value(activation, x); });
    }
  }
  // Seed with d(sigmoid)/d(logit) or 1, then back through the layers.
  double seed = 1.0;
  if (through_sigmoid) {
    const double s = sigmoid(pre[layers - 1](0));
    seed = s * (1.0 - s);
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(1, seed);
  for (std::size_t l = layers; l-- > 0;) {
    grad = weights[l].transpose() * grad;
    if (l > 0) {
      grad.array() *= pre[l - 1]
                          .unaryExpr([this](double x) {
                            return activation_derivative(activation, x);
                          })
                          .array();
    }
  }
  Eigen::Vector4d out;
  for (int f = 0; f < 4; ++f) out(f) = grad(f) / stddev[f];
  return out;
}

MlpModel initialize_model(const TrainConfig& config,
                          const std::array<double, 4>& mean,
                          const std::array<double, 4>& stddev) {
  config.validate();
  MlpModel model;
  model.activation = config.activation;
  model.mean = mean;
  model.stddev = stddev;
  model.cutoff = config.cutoff;
  model.seed = config.seed;
  model.config = config;

  std::vector<int> sizes;
  sizes.push_back(4);
  for (int l = 0; l < config.hidden_layers; ++l) {
    sizes.push_back(config.hidden_width);
  }
  sizes.push_back(1);

  std::mt19937_64 gen(config.seed);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd w(fan_out, fan_in);
    Eigen::VectorXd b(fan_out);
    // Row-major fill so the draw order matches the serialized layout.
    for (int i = 0; i < fan_out; ++i) {
      for (int j = 0; j < fan_in; ++j) w(i, j) = dist(gen);
    }
    for (int i = 0; i < fan_out; ++i) b(i) = dist(gen);
    model.weights.push_back(std::move(w));
    model.biases.push_back(std::move(b));
  }
  model.validate();
  return model;
}

TrainResult train_model(const LabeledDataset& data, const TrainConfig& config) {
  config.validate();
  if (data.train_count() < 1) {
    fail(ErrorCode::invalid_argument, "dataset has no training samples");
  }
  TrainResult result;
  result.model = initialize_model(config, data.feature_mean(),
                                  data.feature_std());
  MlpModel& model = result.model;
  const std::size_t layers = model.weights.size();

  std::vector<Eigen::MatrixXd> mw(layers), vw(layers);
  std::vector<Eigen::VectorXd> mb(layers), vb(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    mw[l] = Eigen::MatrixXd::Zero(model.weights[l].rows(),
                                  model.weights[l].cols());
    vw[l] = mw[l];
    mb[l] = Eigen::VectorXd::Zero(model.biases[l].size());
    vb[l] = mb[l];
  }

  const std::int64_t n_train = data.train_count();
  std::vector<std::uint32_t> train_idx(
      data.order().begin(), data.order().begin() + n_train);
  // Distinct stream from the split shuffle, so epoch order is not a replay.
  std::mt19937_64 epoch_gen(data.seed() ^ 0x9e3779b97f4a7c15ull);

  const Activation act = model.activation;
  std::array<double, 4> inv_std;
  for (int f = 0; f < 4; ++f) inv_std[f] = 1.0 / model.stddev[f];

  std::int64_t step = 0;
  std::vector<Eigen::MatrixXd> pre(layers), post(layers);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr =
        config.lr_initial *
        std::pow(config.lr_decay, epoch / config.lr_step_epochs);
    fisher_yates(train_idx, epoch_gen);

    double loss_sum = 0.0;
    for (std::int64_t start = 0; start < n_train;
         start += config.batch_size) {
      const int rows = static_cast<int>(
          std::min<std::int64_t>(config.batch_size, n_train - start));
      Eigen::MatrixXd x(rows, 4);
      Eigen::VectorXd y(rows);
      std::array<double, 4> f;
      double label;
      for (int r = 0; r < rows; ++r) {
        data.fetch_global(train_idx[static_cast<std::size_t>(start + r)], f,
                          label);
        for (int c = 0; c < 4; ++c) {
          x(r, c) = (f[c] - model.mean[c]) * inv_std[c];
        }
        y(r) = label;
      }

      const Eigen::MatrixXd* input = &x;
      for (std::size_t l = 0; l < layers; ++l) {
        pre[l].noalias() = *input * model.weights[l].transpose();
        pre[l].rowwise() += model.biases[l].transpose();
        if (l + 1 < layers) {
          post[l] = pre[l].unaryExpr(
              [act](double v) { return activation_value(act, v); });
          input = &post[l];
        }
      }

      const auto logits = pre[layers - 1].col(0);
      double batch_loss = 0.0;
      Eigen::MatrixXd delta(rows, 1);
      for (int r = 0; r < rows; ++r) {
        batch_loss += bce_from_logit(logits(r), y(r));
        delta(r, 0) = (sigmoid(logits(r)) - y(r)) / rows;
      }
      loss_sum += batch_loss;
      if (!std::isfinite(batch_loss)) {
        fail(ErrorCode::no_convergence,
             "non-finite training loss at epoch " + std::to_string(epoch) +
                 ", step " + std::to_string(step));
      }

      ++step;
      const double bc1 = 1.0 - std::pow(config.adam_beta1, step);
      const double bc2 = 1.0 - std::pow(config.adam_beta2, step);
      for (std::size_t l = layers; l-- > 0;) {
        const Eigen::MatrixXd& below = l == 0 ? x : post[l - 1];
        const Eigen::MatrixXd gw = delta.transpose() * below;
        const Eigen::VectorXd gb = delta.colwise().sum().transpose();
        if (l > 0) {
          Eigen::MatrixXd up = delta * model.weights[l];
          up.array() *= pre[l - 1]
                            .unaryExpr([act](double v) {
                              return activation_derivative(act, v);
                            })
                            .array();
          delta.swap(up);
        }
        mw[l] = config.adam_beta1 * mw[l] + (1.0 - config.adam_beta1) * gw;
        vw[l].array() = config.adam_beta2 * vw[l].array() +
                        (1.0 - config.adam_beta2) * gw.array().square();
        model.weights[l].array() -=
            lr * (mw[l].array() / bc1) /
            ((vw[l].array() / bc2).sqrt() + config.adam_eps);
        mb[l] = config.adam_beta1 * mb[l] + (1.0 - config.adam_beta1) * gb;
        vb[l].array() = config.adam_beta2 * vb[l].array() +
                        (1.0 - config.adam_beta2) * gb.array().square();
        model.biases[l].array() -=
            lr * (mb[l].array() / bc1) /
            ((vb[l].array() / bc2).sqrt() + config.adam_eps);
      }
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(n_train));
  }

  // Held-out metrics at the configured cutoff.
  const double logit_cut =
      std::log(config.cutoff / (1.0 - config.cutoff));
  RateCounts counts;
  const std::int64_t n_val = data.validation_count();
  constexpr int kChunk = 8192;
  for (std::int64_t start = 0; start < n_val; start += kChunk) {
    const int rows =
        static_cast<int>(std::min<std::int64_t>(kChunk, n_val - start));
    Eigen::MatrixXd x(rows, 4);
    Eigen::VectorXd y(rows);
    std::array<double, 4> f;
    double label;
    for (int r = 0; r < rows; ++r) {
      data.fetch(n_train + start + r, f, label);
      for (int c = 0; c < 4; ++c) {
        x(r, c) = (f[c] - model.mean[c]) * inv_std[c];
      }
      y(r) = label;
    }
    const Eigen::VectorXd logits = batch_logits(model, std::move(x));
    for (int r = 0; r < rows; ++r) {
      const bool safe = logits(r) >= logit_cut;
      counts.total += 1;
      if (y(r) > 0.5 && !safe) counts.false_neg += 1;
      if (y(r) < 0.5 && safe) counts.false_pos += 1;
    }
  }
  result.validation = metrics_from_counts(counts);
  return result;
}

EvalMetrics evaluate_model(const MlpModel& model,
                           const std::vector<KernelGrid>& kernels,
                           double cutoff) {
  model.validate();
  if (!(cutoff > 0.0) || !(cutoff < 1.0)) {
    fail(ErrorCode::invalid_argument, "cutoff must lie in (0, 1)");
  }
  const double logit_cut = std::log(cutoff / (1.0 - cutoff));
  std::array<double, 4> inv_std;
  for (int f = 0; f < 4; ++f) inv_std[f] = 1.0 / model.stddev[f];

  RateCounts counts;
  constexpr int kChunk = 8192;
  Eigen::MatrixXd x(kChunk, 4);
  std::vector<std::uint8_t> labels(kChunk);
  for (const KernelGrid& kernel : kernels) {
    const GridSpec& g = kernel.spec();
    const std::int64_t cells = g.cell_count();
    std::int64_t start = 0;
    while (start < cells) {
      const int rows =
          static_cast<int>(std::min<std::int64_t>(kChunk, cells - start));
      for (int r = 0; r < rows; ++r) {
        const std::int64_t cell = start + r;
        const int iv = static_cast<int>(cell % g.v_count);
        const int imu = static_cast<int>((cell / g.v_count) % g.mu_count);
        const int id = static_cast<int>(cell / g.v_count / g.mu_count);
        x(r, 0) = (g.d_value(id) - model.mean[0]) * inv_std[0];
        x(r, 1) = (g.mu_value(imu) - model.mean[1]) * inv_std[1];
        x(r, 2) = (g.v_value(iv) - model.mean[2]) * inv_std[2];
        x(r, 3) = (kernel.kappa_max() - model.mean[3]) * inv_std[3];
        labels[static_cast<std::size_t>(r)] = kernel.bit(cell) ? 1 : 0;
      }
      const Eigen::VectorXd logits = batch_logits(model, x.topRows(rows));
      for (int r = 0; r < rows; ++r) {
        const bool safe = logits(r) >= logit_cut;
        counts.total += 1;
        if (labels[static_cast<std::size_t>(r)] && !safe) {
          counts.false_neg += 1;
        }
        if (!labels[static_cast<std::size_t>(r)] && safe) {
          counts.false_pos += 1;
        }
      }
      start += rows;
    }
  }
  return metrics_from_counts(counts);
}

void save_model(const MlpModel& model, const std::string& path) {
  model.validate();
  json doc;
  doc["layer_sizes"] = model.layer_sizes();
  doc["activation"] = activation_name(model.activation);
  json weights = json::array();
  json biases = json::array();
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const Eigen::MatrixXd& w = model.weights[l];
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) flat.push_back(w(i, j));
    }
    weights.push_back(flat);
    biases.push_back(std::vector<double>(
        model.biases[l].data(), model.biases[l].data() + model.biases[l].size()));
  }
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  doc["normalization"] = {{"mean", model.mean}, {"std", model.stddev}};
  doc["cutoff"] = model.cutoff;
  doc["seed"] = model.seed;
  doc["config"] = {{"hidden_layers", model.config.hidden_layers},
                   {"hidden_width", model.config.hidden_width},
                   {"activation", activation_name(model.config.activation)},
                   {"epochs", model.config.epochs},
                   {"lr_initial", model.config.lr_initial},
                   {"lr_decay", model.config.lr_decay},
                   {"lr_step_epochs", model.config.lr_step_epochs},
                   {"batch_size", model.config.batch_size},
                   {"cutoff", model.config.cutoff},
                   {"adam_beta1", model.config.adam_beta1},
                   {"adam_beta2", model.config.adam_beta2},
                   {"adam_eps", model.config.adam_eps},
                   {"seed", model.config.seed}};

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot open for writing: " + tmp);
    out << doc.dump(2) << "\n";
    if (!out) fail(ErrorCode::io, "write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    fail(ErrorCode::io, "cannot replace: " + path);
  }
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    fail(ErrorCode::io, "model file is not valid JSON: " + std::string(e.what()));
  }

  MlpModel model;
  try {
    const auto sizes = doc.at("layer_sizes").get<std::vector<int>>();
    if (sizes.size() < 2) fail(ErrorCode::io, "model has no layers");
    model.activation =
        activation_from_name(doc.at("activation").get<std::string>());
    const auto& weights = doc.at("weights");
    const auto& biases = doc.at("biases");
    if (weights.size() + 1 != sizes.size() || biases.size() != weights.size()) {
      fail(ErrorCode::io, "layer counts disagree");
    }
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const int rows = sizes[l + 1];
      const int cols = sizes[l];
      const auto flat = weights.at(l).get<std::vector<double>>();
      const auto bias = biases.at(l).get<std::vector<double>>();
      if (flat.size() != static_cast<std::size_t>(rows) * cols ||
          bias.size() != static_cast<std::size_t>(rows)) {
        fail(ErrorCode::io, "weight array size mismatch");
      }
      Eigen::MatrixXd w(rows, cols);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
          w(i, j) = flat[static_cast<std::size_t>(i) * cols + j];
        }
      }
      model.weights.push_back(std::move(w));
      model.biases.push_back(Eigen::Map<const Eigen::VectorXd>(
          bias.data(), static_cast<Eigen::Index>(bias.size())));
    }
    const auto& norm = doc.at("normalization");
    const auto mean = norm.at("mean").get<std::vector<double>>();
    const auto stddev = norm.at("std").get<std::vector<double>>();
    if (mean.size() != 4 || stddev.size() != 4) {
      fail(ErrorCode::io, "normalization must cover 4 features");
    }
    std::copy(mean.begin(), mean.end(), model.mean.begin());
    std::copy(stddev.begin(), stddev.end(), model.stddev.begin());
    model.cutoff = doc.at("cutoff").get<double>();
    model.seed = doc.value("seed", std::uint64_t{0});
    if (doc.contains("config")) {
      const auto& c = doc["config"];
      model.config.hidden_layers = c.value("hidden_layers", sizes.size() > 2 ? static_cast<int>(sizes.size()) - 2 : 1);
      model.config.hidden_width = c.value("hidden_width", sizes.size() > 2 ? sizes[1] : 1);
      model.config.activation = activation_from_name(
          c.value("activation", std::string(activation_name(model.activation))));
      model.config.epochs = c.value("epochs", model.config.epochs);
      model.config.lr_initial = c.value("lr_initial", model.config.lr_initial);
      model.config.lr_decay = c.value("lr_decay", model.config.lr_decay);
      model.config.lr_step_epochs =
          c.value("lr_step_epochs", model.config.lr_step_epochs);
      model.config.batch_size = c.value("batch_size", model.config.batch_size);
      model.config.cutoff = c.value("cutoff", model.cutoff);
      model.config.adam_beta1 = c.value("adam_beta1", model.config.adam_beta1);
      model.config.adam_beta2 = c.value("adam_beta2", model.config.adam_beta2);
      model.config.adam_eps = c.value("adam_eps", model.config.adam_eps);
      model.config.seed = c.value("seed", model.seed);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::io, "model file malformed: " + std::string(e.what()));
  }
  model.validate();
  return model;
}

}  // namespace vrp
