#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "windgrid/models.hpp"
#include "windgrid/nn/optim.hpp"

namespace windgrid {

enum class OptimizerKind { Adam, Sgd };

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw Error(ErrorKind::InvalidConfig, "unknown optimizer '" + std::string(s) + "' (expected adam or sgd)");
}

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;  // shuffling; network init uses its own seed
  std::size_t patience = 20;
  std::size_t max_steps = 0;  // 0 = unlimited
  double lr_decay = 1.0;      // learning rate is multiplied by this after every epoch
  bool restore_best = true;   // false keeps the final weights

  void validate() const {
    if (batch_size == 0) throw Error(ErrorKind::InvalidConfig, "batch_size must be positive");
    if (!(learning_rate > 0)) throw Error(ErrorKind::InvalidConfig, "learning_rate must be positive");
    if (!(lr_decay > 0 && lr_decay <= 1)) throw Error(ErrorKind::InvalidConfig, "lr_decay must be in (0, 1]");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::size_t steps = 0;  // cumulative
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<EpochRecord> curve;
  std::vector<double> step_losses;
  std::size_t best_epoch = 0;  // 0 = initialization
  std::size_t steps = 0;
  bool early_stopped = false;
  double seconds = 0.0;
};

namespace detail {

struct Batch {
  Tensor inputs;
  Tensor targets;
};

inline Batch make_batch(const std::vector<const Sample*>& samples, const std::size_t* order, std::size_t count,
                        std::size_t channels, std::size_t rows, std::size_t cols) {
  const std::size_t in = channels * rows * cols, plane = rows * cols;
  Batch b{Tensor({count, channels, rows, cols}), Tensor({count, 1, rows, cols})};
  for (std::size_t k = 0; k < count; ++k) {
    const Sample& s = *samples[order ? order[k] : k];
    std::copy(s.input.data.begin(), s.input.data.end(), b.inputs.data() + k * in);
    std::copy(s.target.values.begin(), s.target.values.end(), b.targets.data() + k * plane);
  }
  return b;
}

}  // namespace detail

/// Masked MSE of `net` over the given samples (normalized units), evaluated in batches.
inline double evaluate_loss(Network& net, const std::vector<const Sample*>& samples, const std::vector<bool>& mask,
                            std::size_t batch_size = 64) {
  if (samples.empty()) throw Error(ErrorKind::EmptyTrainSet, "no samples to evaluate");
  const auto& s = net.input_shape();
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); i += batch_size) {
    const std::size_t n = std::min(batch_size, samples.size() - i);
    std::vector<const Sample*> chunk(samples.begin() + std::ptrdiff_t(i), samples.begin() + std::ptrdiff_t(i + n));
    auto b = detail::make_batch(chunk, nullptr, n, s.channels, s.rows, s.cols);
    total += nn::masked_mse(net.forward(b.inputs), b.targets, mask).loss * double(n);
  }
  return total / double(samples.size());
}

/// Mini-batch training on the train split of a normalized set with early stopping on the val split.
inline TrainResult train(Network& net, const SampleSet& set, const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (!set.norm) throw Error(ErrorKind::InvalidConfig, "train expects a normalized sample set");
  const auto train_set = set.of_split(Split::Train), val_set = set.of_split(Split::Val);
  if (train_set.empty()) throw Error(ErrorKind::EmptyTrainSet, "train split is empty");
  if (val_set.empty()) throw Error(ErrorKind::EmptyTrainSet, "val split is empty");
  const InputShape expect{set.channels(), set.rows, set.cols};
  if (!(net.input_shape() == expect))
    throw Error(ErrorKind::ShapeError, "network input shape does not match the sample set");

  const auto t0 = std::chrono::steady_clock::now();
  std::unique_ptr<nn::Optimizer> opt;
  if (cfg.optimizer == OptimizerKind::Adam)
    opt = std::make_unique<nn::Adam>(nn::AdamConfig{cfg.learning_rate});
  else
    opt = std::make_unique<nn::Sgd>(cfg.learning_rate);

  TrainResult res;
  auto params = net.parameters();
  auto best = snapshot_params(net);
  double best_val = INFINITY;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::size_t last_finite = 0;
  bool out_of_steps = false;

  for (std::size_t epoch = 1; epoch <= cfg.epochs && !out_of_steps; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      if (cfg.max_steps && res.steps >= cfg.max_steps) {
        out_of_steps = true;
        break;
      }
      const std::size_t n = std::min(cfg.batch_size, order.size() - i);
      auto b = detail::make_batch(train_set, order.data() + i, n, expect.channels, expect.rows, expect.cols);
      net.zero_grad();
      auto loss = nn::masked_mse(net.forward(b.inputs), b.targets, set.mask);
      if (!std::isfinite(loss.loss))
        throw Error(ErrorKind::DivergenceError, "training loss became non-finite in epoch " + std::to_string(epoch) +
                                                    "; last finite epoch " + std::to_string(last_finite));
      net.backward(loss.grad);
      opt->step(params);
      res.step_losses.push_back(loss.loss);
      sum += loss.loss * double(n);
      seen += n;
      ++res.steps;
    }
    if (seen == 0) break;
    EpochRecord rec{epoch, sum / double(seen), evaluate_loss(net, val_set, set.mask), res.steps};
    if (!std::isfinite(rec.val_loss))
      throw Error(ErrorKind::DivergenceError, "validation loss became non-finite in epoch " + std::to_string(epoch) +
                                                  "; last finite epoch " + std::to_string(last_finite));
    last_finite = epoch;
    opt->set_learning_rate(opt->learning_rate() * cfg.lr_decay);
    res.curve.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      res.best_epoch = epoch;
      best = snapshot_params(net);
    } else if (epoch - res.best_epoch >= cfg.patience) {
      res.early_stopped = true;
      break;
    }
  }

  if (cfg.restore_best) load_params(net, best);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::json meta = {{"epochs", res.curve.size()},
                         {"best_epoch", res.best_epoch},
                         {"steps", res.steps},
                         {"seed", cfg.seed},
                         {"batch_size", cfg.batch_size},
                         {"learning_rate", cfg.learning_rate},
                         {"lr_decay", cfg.lr_decay},
                         {"optimizer", cfg.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
                         {"restore_best", cfg.restore_best},
                         {"fingerprint", set.fingerprint}};
  if (!res.curve.empty()) {
    meta["final_val_loss"] = res.curve.back().val_loss;
    meta["best_val_loss"] = best_val;
  }
  res.checkpoint = make_checkpoint(net, set, std::move(meta));
  return res;
}

// Inference ------------------------------------------------------------------------------------

namespace detail {

inline void check_inputs(const ModelCheckpoint& c, const std::vector<StfTensor>& inputs) {
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& x = inputs[i];
    if (x.channels != c.shape.channels || x.rows != c.shape.rows || x.cols != c.shape.cols)
      throw Error(ErrorKind::CheckpointMismatch,
                  "input " + std::to_string(i) + " is " + std::to_string(x.channels) + "x" + std::to_string(x.rows) +
                      "x" + std::to_string(x.cols) + ", checkpoint expects " + std::to_string(c.shape.channels) + "x" +
                      std::to_string(c.shape.rows) + "x" + std::to_string(c.shape.cols));
    if (!x.channel_spec.empty() && x.channel_spec != c.channel_spec)
      throw Error(ErrorKind::CheckpointMismatch, "input " + std::to_string(i) + " channel layout differs from checkpoint");
    if (x.data.size() != x.channels * x.rows * x.cols)
      throw Error(ErrorKind::ShapeError, "input " + std::to_string(i) + " data length is inconsistent");
  }
  for (const auto& s : c.channel_spec) c.norm.range(s.variable);
  c.norm.range(c.target);
}

}  // namespace detail

/// Forward pass on raw-unit inputs with a live network; outputs are denormalized, mask-false cells are 0.
inline std::vector<Scene> predict(Network& net, const ModelCheckpoint& c, const std::vector<StfTensor>& inputs,
                                  std::size_t batch_size = 64) {
  detail::check_inputs(c, inputs);
  const std::size_t C = c.shape.channels, plane = c.shape.rows * c.shape.cols;
  std::vector<Scene> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); i += batch_size) {
    const std::size_t n = std::min(batch_size, inputs.size() - i);
    Tensor x({n, C, c.shape.rows, c.shape.cols});
    for (std::size_t k = 0; k < n; ++k) {
      const auto& in = inputs[i + k];
      for (std::size_t ch = 0; ch < C; ++ch) {
        const auto& r = c.norm.range(c.channel_spec[ch].variable);
        for (std::size_t p = 0; p < plane; ++p)
          if (c.mask[p]) x[(k * C + ch) * plane + p] = (in.data[ch * plane + p] - r.min) / (r.max - r.min);
      }
    }
    const Tensor y = net.forward(x);
    for (std::size_t k = 0; k < n; ++k) {
      Scene s;
      s.rows = c.shape.rows;
      s.cols = c.shape.cols;
      s.mask = c.mask;
      s.variable = c.target;
      s.timestamp = inputs[i + k].base_time + std::int64_t(c.horizon) * c.sampling_period;
      s.values.assign(plane, 0.0);
      for (std::size_t p = 0; p < plane; ++p)
        if (c.mask[p]) s.values[p] = c.norm.denormalize(c.target, y[k * plane + p]);
      out.push_back(std::move(s));
    }
  }
  return out;
}

inline std::vector<Scene> predict(const ModelCheckpoint& c, const std::vector<StfTensor>& inputs,
                                  std::size_t batch_size = 64) {
  auto net = restore_network(c);
  return predict(*net, c, inputs, batch_size);
}

/// Unweighted per-cell mean of the members' denormalized predictions.
inline std::vector<Scene> ensemble_predict(const std::vector<ModelCheckpoint>& members,
                                           const std::vector<StfTensor>& inputs) {
  if (members.empty()) throw Error(ErrorKind::CheckpointMismatch, "ensemble needs at least one checkpoint");
  const auto& a = members.front();
  for (std::size_t m = 1; m < members.size(); ++m) {
    const auto& b = members[m];
    if (!(b.shape == a.shape) || b.mask != a.mask || b.target != a.target || b.horizon != a.horizon ||
        b.channel_spec != a.channel_spec || b.sampling_period != a.sampling_period)
      throw Error(ErrorKind::CheckpointMismatch,
                  "ensemble member " + std::to_string(m) + " (" + b.arch + ") is incompatible with member 0");
  }
  std::vector<Scene> sum;
  for (const auto& m : members) {
    auto p = predict(m, inputs);
    if (sum.empty()) {
      sum = std::move(p);
      continue;
    }
    for (std::size_t i = 0; i < sum.size(); ++i)
      for (std::size_t k = 0; k < sum[i].values.size(); ++k) sum[i].values[k] += p[i].values[k];
  }
  const double n = double(members.size());
  for (auto& s : sum)
    for (auto& v : s.values) v /= n;
  return sum;
}

}  // namespace windgrid
