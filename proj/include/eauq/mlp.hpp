#pragma once

// Minimal feedforward binary classifier: ReLU hidden layers, sigmoid output,
// inverted dropout, exact backpropagation, SGD with per-step L2 weight decay
// and per-epoch learning-rate schedules, epoch-indexed checkpointing, and a
// bit-faithful text serialization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "eauq/errors.hpp"
#include "eauq/rng.hpp"

namespace eauq {

enum class LossKind { BinaryCrossEntropy, MeanSquaredError };
enum class LrSchedule { Constant, LinearDecay, ExponentialDecay };
enum class HiddenActivation { ReLU };

inline std::string loss_name(LossKind loss) {
  return loss == LossKind::BinaryCrossEntropy ? "binary_cross_entropy"
                                              : "mean_squared_error";
}

inline std::string schedule_name(LrSchedule s) {
  switch (s) {
    case LrSchedule::Constant: return "constant";
    case LrSchedule::LinearDecay: return "linear_decay";
    case LrSchedule::ExponentialDecay: return "exponential_decay";
  }
  return "constant";
}

struct TrainConfig {
  int epochs = 800;
  double initial_lr = 1e-4;
  LrSchedule lr_schedule = LrSchedule::LinearDecay;
  double lr_decay_factor = 0.99;  // ExponentialDecay only
  double weight_decay = 5e-5;
  int batch_size = 32;
  std::uint64_t seed = 0;
  std::optional<int> checkpoint_interval_epochs;
  LossKind loss = LossKind::BinaryCrossEntropy;

  void validate() const {
    if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
    if (!(initial_lr > 0.0))
      throw ConfigError("TrainConfig: initial_lr must be positive");
    if (lr_schedule == LrSchedule::ExponentialDecay &&
        !(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
      throw ConfigError("TrainConfig: exponential decay factor must be in (0,1]");
    if (weight_decay < 0.0)
      throw ConfigError("TrainConfig: weight_decay must be non-negative");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (checkpoint_interval_epochs) {
      if (*checkpoint_interval_epochs < 1)
        throw ConfigError("TrainConfig: checkpoint interval must be >= 1");
      if (*checkpoint_interval_epochs > epochs)
        throw ConfigError("TrainConfig: checkpoint interval exceeds epoch count");
    }
  }
};

// Learning rate used for epoch `epoch` (0-based).
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  switch (cfg.lr_schedule) {
    case LrSchedule::Constant:
      return cfg.initial_lr;
    case LrSchedule::LinearDecay:
      // initial_lr down to 0.1 * initial_lr across the run.
      if (cfg.epochs <= 1) return cfg.initial_lr;
      return cfg.initial_lr *
             (1.0 - 0.9 * static_cast<double>(epoch) /
                        static_cast<double>(cfg.epochs - 1));
    case LrSchedule::ExponentialDecay:
      return cfg.initial_lr * std::pow(cfg.lr_decay_factor, epoch);
  }
  return cfg.initial_lr;
}

// Weight matrices are stored flat, row-major: weights[l] has
// layer_sizes[l+1] rows and layer_sizes[l] columns.
struct MlpModel {
  std::vector<int> layer_sizes;  // input dim ... 1
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  double dropout_rate = 0.0;
  HiddenActivation hidden_activation = HiddenActivation::ReLU;

  int input_dim() const { return layer_sizes.empty() ? 0 : layer_sizes.front(); }
  std::size_t layer_count() const { return weights.size(); }

  bool same_shape_as(const MlpModel& other) const {
    return layer_sizes == other.layer_sizes;
  }

  void validate() const {
    if (layer_sizes.size() < 2)
      throw ConfigError("MlpModel: need at least input and output layers");
    for (int n : layer_sizes)
      if (n < 1) throw ConfigError("MlpModel: layer sizes must be positive");
    if (layer_sizes.back() != 1)
      throw ConfigError("MlpModel: output layer must have a single unit");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw ConfigError("MlpModel: dropout_rate must lie in [0,1)");
    if (weights.size() != layer_sizes.size() - 1 ||
        biases.size() != layer_sizes.size() - 1)
      throw ConfigError("MlpModel: layer count mismatch");
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
      const std::size_t rows = static_cast<std::size_t>(layer_sizes[l + 1]);
      const std::size_t cols = static_cast<std::size_t>(layer_sizes[l]);
      if (weights[l].size() != rows * cols)
        throw ConfigError("MlpModel: weight shape does not chain with layer_sizes");
      if (biases[l].size() != rows)
        throw ConfigError("MlpModel: bias shape does not chain with layer_sizes");
    }
  }
};

// Glorot-uniform weights, zero biases.
inline MlpModel make_mlp(std::vector<int> layer_sizes, double dropout_rate,
                         std::uint64_t seed) {
  MlpModel model;
  model.layer_sizes = std::move(layer_sizes);
  model.dropout_rate = dropout_rate;
  model.weights.resize(model.layer_sizes.size() - 1);
  model.biases.resize(model.layer_sizes.size() - 1);
  for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
    const int fan_in = model.layer_sizes[l];
    const int fan_out = model.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    RandomStream rs(derive_seed(seed, "mlp-init-layer", l));
    model.weights[l].resize(static_cast<std::size_t>(fan_in) * fan_out);
    for (double& w : model.weights[l]) w = rs.uniform(-limit, limit);
    model.biases[l].assign(static_cast<std::size_t>(fan_out), 0.0);
  }
  model.validate();
  return model;
}

struct ForwardMode {
  bool dropout_active = false;
  std::uint64_t seed = 0;

  static ForwardMode deterministic() { return {}; }
  static ForwardMode dropout(std::uint64_t seed) { return {true, seed}; }
};

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double clamp_prob(double p) {
  return std::min(std::max(p, 1e-15), 1.0 - 1e-15);
}

// Per-example activations kept for backpropagation. inputs[l] is what feeds
// layer l (post-dropout); preacts[l] its pre-activation; scales[l] the
// inverted-dropout factor applied after the hidden activation of layer l.
struct ForwardTrace {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> preacts;
  std::vector<std::vector<double>> scales;
  double output_preact = 0.0;
};

// Runs the net, recording the trace when `trace` is non-null. Dropout masks
// depend only on (mode.seed, layer), never on parameter values.
inline double forward_impl(const MlpModel& model, std::span<const double> x,
                           const ForwardMode& mode, ForwardTrace* trace) {
  if (static_cast<int>(x.size()) != model.input_dim())
    throw InputError("forward: feature vector has length " +
                     std::to_string(x.size()) + ", model expects " +
                     std::to_string(model.input_dim()));

  const std::size_t n_layers = model.layer_count();
  std::vector<double> current(x.begin(), x.end());
  if (trace) {
    trace->inputs.assign(n_layers, {});
    trace->preacts.assign(n_layers, {});
    trace->scales.assign(n_layers, {});
  }

  const bool use_dropout = mode.dropout_active && model.dropout_rate > 0.0;
  const double keep = 1.0 - model.dropout_rate;

  for (std::size_t l = 0; l < n_layers; ++l) {
    if (trace) trace->inputs[l] = current;
    const std::size_t rows = model.biases[l].size();
    const std::size_t cols = current.size();
    std::vector<double> z(rows);
    const double* w = model.weights[l].data();
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = model.biases[l][r];
      const double* wrow = w + r * cols;
      for (std::size_t c = 0; c < cols; ++c) acc += wrow[c] * current[c];
      z[r] = acc;
    }
    if (l + 1 == n_layers) {
      if (trace) trace->output_preact = z[0];
      return clamp_prob(sigmoid(z[0]));
    }
    if (trace) trace->preacts[l] = z;
    std::vector<double> h(rows);
    for (std::size_t r = 0; r < rows; ++r) h[r] = z[r] > 0.0 ? z[r] : 0.0;
    if (use_dropout) {
      RandomStream rs(derive_seed(mode.seed, "dropout-layer", l));
      std::vector<double> scale(rows);
      for (std::size_t r = 0; r < rows; ++r)
        scale[r] = rs.bernoulli(keep) ? 1.0 / keep : 0.0;
      for (std::size_t r = 0; r < rows; ++r) h[r] *= scale[r];
      if (trace) trace->scales[l] = std::move(scale);
    } else if (trace) {
      trace->scales[l].assign(rows, 1.0);
    }
    current = std::move(h);
  }
  throw ConfigError("forward: model has no layers");
}

}  // namespace detail

// Class-one probability for feature vector x, always strictly inside (0,1).
inline double forward(const MlpModel& model, std::span<const double> x,
                      const ForwardMode& mode = ForwardMode::deterministic()) {
  return detail::forward_impl(model, x, mode, nullptr);
}

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static Gradients zeros_like(const MlpModel& model) {
    Gradients g;
    g.weights.reserve(model.weights.size());
    g.biases.reserve(model.biases.size());
    for (const auto& w : model.weights) g.weights.emplace_back(w.size(), 0.0);
    for (const auto& b : model.biases) g.biases.emplace_back(b.size(), 0.0);
    return g;
  }

  bool all_finite() const {
    for (const auto& layer : weights)
      for (double v : layer)
        if (!std::isfinite(v)) return false;
    for (const auto& layer : biases)
      for (double v : layer)
        if (!std::isfinite(v)) return false;
    return true;
  }
};

// Feature rows with regression targets in [0,1] (hard labels or expert means).
struct TrainingSet {
  std::vector<std::vector<double>> features;
  std::vector<double> targets;

  std::size_t size() const { return features.size(); }

  void validate() const {
    if (features.size() != targets.size())
      throw InputError("TrainingSet: feature/target count mismatch");
    for (double t : targets)
      if (!(t >= 0.0 && t <= 1.0))
        throw InputError("TrainingSet: target outside [0,1]");
  }
};

struct LossAndGradient {
  double loss = 0.0;
  Gradients gradients;
};

namespace detail {

inline double loss_from_preact(double z, double target, LossKind loss) {
  if (loss == LossKind::BinaryCrossEntropy) return softplus(z) - target * z;
  const double p = sigmoid(z);
  const double d = p - target;
  return d * d;
}

inline double dloss_dpreact(double z, double target, LossKind loss) {
  const double p = sigmoid(z);
  if (loss == LossKind::BinaryCrossEntropy) return p - target;
  return 2.0 * (p - target) * p * (1.0 - p);
}

// Backpropagates one example into `acc` (scaled later by 1/batch).
inline double backprop_example(const MlpModel& model,
                               std::span<const double> x, double target,
                               LossKind loss, const ForwardMode& mode,
                               Gradients& acc) {
  ForwardTrace trace;
  forward_impl(model, x, mode, &trace);

  const std::size_t n_layers = model.layer_count();
  const double loss_value = loss_from_preact(trace.output_preact, target, loss);

  // delta = dLoss/dz for the layer being processed.
  std::vector<double> delta{dloss_dpreact(trace.output_preact, target, loss)};
  for (std::size_t li = n_layers; li-- > 0;) {
    const std::vector<double>& input = trace.inputs[li];
    const std::size_t rows = model.biases[li].size();
    const std::size_t cols = input.size();
    double* gw = acc.weights[li].data();
    for (std::size_t r = 0; r < rows; ++r) {
      acc.biases[li][r] += delta[r];
      double* grow = gw + r * cols;
      for (std::size_t c = 0; c < cols; ++c) grow[c] += delta[r] * input[c];
    }
    if (li == 0) break;
    // dLoss/d(input of layer li) = W^T delta, then through dropout scale
    // and the ReLU derivative of the previous layer.
    std::vector<double> prev(cols, 0.0);
    const double* w = model.weights[li].data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* wrow = w + r * cols;
      for (std::size_t c = 0; c < cols; ++c) prev[c] += wrow[c] * delta[r];
    }
    const std::vector<double>& z = trace.preacts[li - 1];
    const std::vector<double>& scale = trace.scales[li - 1];
    for (std::size_t c = 0; c < cols; ++c)
      prev[c] *= scale[c] * (z[c] > 0.0 ? 1.0 : 0.0);
    delta = std::move(prev);
  }
  return loss_value;
}

inline LossAndGradient loss_and_gradient_indexed(
    const MlpModel& model, const TrainingSet& data,
    std::span<const std::size_t> indices, LossKind loss,
    const ForwardMode& mode) {
  if (indices.empty())
    throw InputError("loss_and_gradient: batch must be non-empty");
  LossAndGradient out;
  out.gradients = Gradients::zeros_like(model);
  double total = 0.0;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const std::size_t i = indices[j];
    ForwardMode example_mode = mode;
    if (mode.dropout_active)
      example_mode.seed = derive_seed(mode.seed, "example", j);
    total += backprop_example(model, data.features[i], data.targets[i], loss,
                              example_mode, out.gradients);
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  out.loss = total * inv;
  for (auto& layer : out.gradients.weights)
    for (double& v : layer) v *= inv;
  for (auto& layer : out.gradients.biases)
    for (double& v : layer) v *= inv;
  return out;
}

}  // namespace detail

// Mean loss over the batch and its exact gradient, shaped like the model
// parameters. With dropout active, per-example masks derive from mode.seed
// and the example's position in the batch.
inline LossAndGradient loss_and_gradient(
    const MlpModel& model, const TrainingSet& batch, LossKind loss,
    const ForwardMode& mode = ForwardMode::deterministic()) {
  batch.validate();
  if (batch.size() == 0)
    throw InputError("loss_and_gradient: batch must be non-empty");
  std::vector<std::size_t> indices(batch.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  return detail::loss_and_gradient_indexed(model, batch, indices, loss, mode);
}

struct Checkpoint {
  int epoch = 0;
  MlpModel model;
};

struct TrainResult {
  MlpModel model;
  std::vector<Checkpoint> checkpoints;
};

// Mini-batch SGD. Reproducible from (initial model, dataset order, seed);
// weight decay is applied as per-step L2 shrinkage; checkpoints are emitted
// after every checkpoint_interval_epochs-th epoch.
inline TrainResult train(const MlpModel& initial, const TrainingSet& data,
                         const TrainConfig& cfg) {
  cfg.validate();
  initial.validate();
  data.validate();
  if (data.size() == 0) throw InputError("train: dataset must be non-empty");

  TrainResult result;
  result.model = initial;
  MlpModel& model = result.model;

  const std::size_t n = data.size();
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n_batches = (n + batch - 1) / batch;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    RandomStream(derive_seed(cfg.seed, "epoch-order", epoch)).shuffle(order);
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t begin = b * batch;
      const std::size_t end = std::min(n, begin + batch);
      std::span<const std::size_t> slice(order.data() + begin, end - begin);
      ForwardMode mode = ForwardMode::deterministic();
      if (model.dropout_rate > 0.0) {
        const std::uint64_t step =
            static_cast<std::uint64_t>(epoch) * n_batches + b;
        mode = ForwardMode::dropout(derive_seed(cfg.seed, "step-mask", step));
      }
      LossAndGradient lg =
          detail::loss_and_gradient_indexed(model, data, slice, cfg.loss, mode);
      if (!std::isfinite(lg.loss) || !lg.gradients.all_finite())
        throw TrainingDivergedError(
            "train: non-finite loss or gradient at epoch " +
                std::to_string(epoch + 1),
            epoch + 1);
      for (std::size_t l = 0; l < model.weights.size(); ++l) {
        double* w = model.weights[l].data();
        const double* g = lg.gradients.weights[l].data();
        for (std::size_t i = 0; i < model.weights[l].size(); ++i)
          w[i] -= lr * (g[i] + cfg.weight_decay * w[i]);
        double* bb = model.biases[l].data();
        const double* gb = lg.gradients.biases[l].data();
        for (std::size_t i = 0; i < model.biases[l].size(); ++i)
          bb[i] -= lr * (gb[i] + cfg.weight_decay * bb[i]);
      }
    }
    if (cfg.checkpoint_interval_epochs &&
        (epoch + 1) % *cfg.checkpoint_interval_epochs == 0)
      result.checkpoints.push_back({epoch + 1, model});
  }
  return result;
}

// Defaults for regressing the mean expert vote: 40 epochs at 1e-5 with a
// 0.99 exponential decay, same loss family as classification training.
inline TrainConfig default_finetune_config() {
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.initial_lr = 1e-5;
  cfg.lr_schedule = LrSchedule::ExponentialDecay;
  cfg.lr_decay_factor = 0.99;
  cfg.weight_decay = 5e-5;
  cfg.batch_size = 32;
  cfg.loss = LossKind::BinaryCrossEntropy;
  return cfg;
}

// Fine-tunes a copy of `model` against expert-mean targets. The input model
// is untouched; checkpointing is not used here.
inline MlpModel finetune_to_experts(const MlpModel& model,
                                    const TrainingSet& expert_targets,
                                    const TrainConfig& cfg) {
  if (expert_targets.size() == 0)
    throw InputError("finetune_to_experts: no expert-labeled examples");
  TrainConfig ft = cfg;
  ft.checkpoint_interval_epochs.reset();
  return train(model, expert_targets, ft).model;
}

// --- serialization ---------------------------------------------------------
//
// Versioned text format; weights are written row-major with 17 significant
// digits so that save/load round-trips bit-exactly.

namespace detail {

inline void write_double(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

}  // namespace detail

inline void save_model(const MlpModel& model, std::ostream& os) {
  model.validate();
  os << "eauq-mlp 1\n";
  os << "layers " << model.layer_sizes.size();
  for (int n : model.layer_sizes) os << ' ' << n;
  os << '\n';
  os << "dropout_rate ";
  detail::write_double(os, model.dropout_rate);
  os << "\nhidden_activation relu\noutput_activation sigmoid\n";
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const std::size_t rows = model.biases[l].size();
    const std::size_t cols = model.weights[l].size() / rows;
    os << "weights " << l << ' ' << rows << ' ' << cols << '\n';
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        if (c) os << ' ';
        detail::write_double(os, model.weights[l][r * cols + c]);
      }
      os << '\n';
    }
    os << "biases " << l << '\n';
    for (std::size_t r = 0; r < rows; ++r) {
      if (r) os << ' ';
      detail::write_double(os, model.biases[l][r]);
    }
    os << '\n';
  }
  os << "end\n";
}

inline MlpModel load_model(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "eauq-mlp" || version != 1)
    throw ParseError("load_model: not an eauq-mlp v1 file");
  std::string key;
  std::size_t n_layers = 0;
  if (!(is >> key >> n_layers) || key != "layers" || n_layers < 2)
    throw ParseError("load_model: bad layers header");
  MlpModel model;
  model.layer_sizes.resize(n_layers);
  for (auto& n : model.layer_sizes)
    if (!(is >> n)) throw ParseError("load_model: truncated layer sizes");
  if (!(is >> key >> model.dropout_rate) || key != "dropout_rate")
    throw ParseError("load_model: bad dropout_rate");
  std::string act;
  if (!(is >> key >> act) || key != "hidden_activation" || act != "relu")
    throw ParseError("load_model: unsupported hidden activation");
  if (!(is >> key >> act) || key != "output_activation" || act != "sigmoid")
    throw ParseError("load_model: unsupported output activation");
  model.weights.resize(n_layers - 1);
  model.biases.resize(n_layers - 1);
  for (std::size_t l = 0; l + 1 < n_layers; ++l) {
    std::size_t idx = 0, rows = 0, cols = 0;
    if (!(is >> key >> idx >> rows >> cols) || key != "weights" || idx != l)
      throw ParseError("load_model: bad weights header for layer " +
                       std::to_string(l));
    model.weights[l].resize(rows * cols);
    for (double& v : model.weights[l])
      if (!(is >> v)) throw ParseError("load_model: truncated weights");
    if (!(is >> key >> idx) || key != "biases" || idx != l)
      throw ParseError("load_model: bad biases header for layer " +
                       std::to_string(l));
    model.biases[l].resize(rows);
    for (double& v : model.biases[l])
      if (!(is >> v)) throw ParseError("load_model: truncated biases");
  }
  if (!(is >> key) || key != "end")
    throw ParseError("load_model: missing end marker");
  model.validate();
  return model;
}

inline void save_model_file(const MlpModel& model, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("save_model_file: cannot open " + path);
  save_model(model, os);
  if (!os) throw IoError("save_model_file: write failed for " + path);
}

inline MlpModel load_model_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_model_file: cannot open " + path);
  return load_model(is);
}

}  // namespace eauq
