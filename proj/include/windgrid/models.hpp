#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "windgrid/nn/grad_check.hpp"
#include "windgrid/nn/layers.hpp"
#include "windgrid/nn/loss.hpp"
#include "windgrid/scene_stf.hpp"

namespace windgrid {

using nn::Tensor;

struct InputShape {
  std::size_t channels = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool operator==(const InputShape&) const = default;
};

/// Encoder-decoder that maps a C x H x W stack straight to a 1 x H x W scene.
struct E2EConfig {
  std::size_t depth = 3;
  std::size_t base_channels = 16;  // conv width of stage s is base * 2^s
  bool dense = true;               // stage output = concat(stage input, conv branch)

  nlohmann::json to_json() const { return {{"depth", depth}, {"base_channels", base_channels}, {"dense", dense}}; }
  static E2EConfig from_json(const nlohmann::json& j) {
    E2EConfig c;
    c.depth = j.value("depth", c.depth);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.dense = j.value("dense", c.dense);
    if (c.depth == 0 || c.depth > 8) throw Error(ErrorKind::InvalidConfig, "e2e.depth must be in 1..8");
    if (c.base_channels == 0) throw Error(ErrorKind::InvalidConfig, "e2e.base_channels must be positive");
    return c;
  }
};

/// Conv/pool stack flattened into a fully connected head whose output is reshaped to H x W.
struct FcCnnConfig {
  std::size_t stages = 4;
  std::size_t base_channels = 16;
  std::size_t hidden = 512;
  bool dense = true;

  nlohmann::json to_json() const {
    return {{"stages", stages}, {"base_channels", base_channels}, {"hidden", hidden}, {"dense", dense}};
  }
  static FcCnnConfig from_json(const nlohmann::json& j) {
    FcCnnConfig c;
    c.stages = j.value("stages", c.stages);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.hidden = j.value("hidden", c.hidden);
    c.dense = j.value("dense", c.dense);
    if (c.stages == 0 || c.stages > 8) throw Error(ErrorKind::InvalidConfig, "fc_cnn.stages must be in 1..8");
    if (c.base_channels == 0) throw Error(ErrorKind::InvalidConfig, "fc_cnn.base_channels must be positive");
    if (c.hidden == 0) throw Error(ErrorKind::InvalidConfig, "fc_cnn.hidden must be positive");
    return c;
  }
};

class Network {
 public:
  virtual ~Network() = default;
  /// (N, C, H, W) -> (N, 1, H, W)
  virtual Tensor forward(const Tensor& input) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<nn::Parameter*> parameters() = 0;
  virtual std::string arch() const = 0;
  virtual nlohmann::json config_json() const = 0;

  const InputShape& input_shape() const { return shape_; }
  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }
  void zero_grad() { nn::zero_grads(parameters()); }

 protected:
  void check_input(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != shape_.channels || x.dim(2) != shape_.rows || x.dim(3) != shape_.cols)
      throw Error(ErrorKind::ShapeError, arch() + ": expected (N," + std::to_string(shape_.channels) + "," +
                                             std::to_string(shape_.rows) + "," + std::to_string(shape_.cols) +
                                             ") input, got " + x.shape_string());
  }
  InputShape shape_;
};

namespace detail {

/// pool(concat(z, relu(conv3x3(z)))) when dense, pool(relu(conv3x3(z))) otherwise.
class DenseStage {
 public:
  DenseStage(const std::string& name, std::size_t in_channels, std::size_t conv_channels, bool dense)
      : conv_(name + ".conv", in_channels, conv_channels, 3, 1, 1), in_channels_(in_channels), dense_(dense) {}

  void init(std::mt19937_64& rng) { conv_.init(rng); }
  std::size_t out_channels() const { return dense_ ? in_channels_ + conv_.out_channels() : conv_.out_channels(); }

  Tensor forward(const Tensor& z) {
    Tensor y = relu_.forward(conv_.forward(z));
    return pool_.forward(dense_ ? nn::concat_channels_forward(z, y) : y);
  }
  Tensor backward(const Tensor& g) {
    Tensor gc = pool_.backward(g);
    if (!dense_) return conv_.backward(relu_.backward(gc));
    auto [gz, gy] = nn::concat_channels_backward(in_channels_, gc);
    gz += conv_.backward(relu_.backward(gy));
    return std::move(gz);
  }
  void collect(std::vector<nn::Parameter*>& out) {
    for (auto* p : conv_.parameters()) out.push_back(p);
  }

 private:
  nn::Conv2d conv_;
  nn::ReLU relu_;
  nn::MaxPool2x2 pool_;
  std::size_t in_channels_;
  bool dense_;
};

inline std::size_t round_up_pow2(std::size_t n, std::size_t depth) {
  const std::size_t m = std::size_t{1} << depth;
  return (n + m - 1) / m * m;
}

/// Copies the top-left h x w window of x into a zero tensor of shape (N, C, H, W).
inline Tensor place(const Tensor& x, std::size_t H, std::size_t W) {
  const std::size_t N = x.dim(0), C = x.dim(1), h = std::min(x.dim(2), H), w = std::min(x.dim(3), W);
  Tensor out({N, C, H, W});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) out(n, c, i, j) = x(n, c, i, j);
  return out;
}

inline void require_grid(const std::string& arch, const InputShape& s, std::size_t levels) {
  const std::size_t m = std::size_t{1} << levels;
  if (s.channels == 0) throw Error(ErrorKind::ShapeError, arch + ": input needs at least one channel");
  if (s.rows < m || s.cols < m)
    throw Error(ErrorKind::ShapeError, arch + ": grid " + std::to_string(s.rows) + "x" + std::to_string(s.cols) +
                                           " is smaller than 2^" + std::to_string(levels) + " = " + std::to_string(m));
}

}  // namespace detail

/// Input is zero-padded to a multiple of 2^depth, encoded by `depth` dense stages, decoded by `depth`
/// stride-2 transposed convolutions (k=4, pad=1) with shrinking channels, then cropped to H x W.
/// Every decoder layer but the last is followed by ReLU; the last is linear.
class E2ENet : public Network {
 public:
  E2ENet(const E2EConfig& cfg, const InputShape& shape, std::uint64_t seed) : cfg_(cfg) {
    shape_ = shape;
    detail::require_grid(arch(), shape, cfg.depth);
    padded_rows_ = detail::round_up_pow2(shape.rows, cfg.depth);
    padded_cols_ = detail::round_up_pow2(shape.cols, cfg.depth);
    std::size_t ch = shape.channels;
    for (std::size_t s = 0; s < cfg.depth; ++s) {
      encoder_.emplace_back("enc" + std::to_string(s), ch, cfg.base_channels << s, cfg.dense);
      ch = encoder_.back().out_channels();
    }
    for (std::size_t j = 0; j < cfg.depth; ++j) {
      const std::size_t out = j + 1 == cfg.depth ? 1 : cfg.base_channels << (cfg.depth - 2 - j);
      decoder_.emplace_back("dec" + std::to_string(j), ch, out, 4, 2, 1);
      ch = out;
    }
    decoder_relu_.resize(cfg.depth > 0 ? cfg.depth - 1 : 0);
    std::mt19937_64 rng(seed);
    for (auto& s : encoder_) s.init(rng);
    for (auto& d : decoder_) d.init(rng);
  }

  Tensor forward(const Tensor& input) override {
    check_input(input);
    Tensor z = detail::place(input, padded_rows_, padded_cols_);
    for (auto& s : encoder_) z = s.forward(z);
    for (std::size_t j = 0; j < decoder_.size(); ++j) {
      z = decoder_[j].forward(z);
      if (j < decoder_relu_.size()) z = decoder_relu_[j].forward(z);
    }
    return detail::place(z, shape_.rows, shape_.cols);
  }

  Tensor backward(const Tensor& grad_out) override {
    Tensor g = detail::place(grad_out, padded_rows_, padded_cols_);
    for (std::size_t j = decoder_.size(); j-- > 0;) {
      if (j < decoder_relu_.size()) g = decoder_relu_[j].backward(g);
      g = decoder_[j].backward(g);
    }
    for (std::size_t s = encoder_.size(); s-- > 0;) g = encoder_[s].backward(g);
    return detail::place(g, shape_.rows, shape_.cols);
  }

  std::vector<nn::Parameter*> parameters() override {
    std::vector<nn::Parameter*> out;
    for (auto& s : encoder_) s.collect(out);
    for (auto& d : decoder_)
      for (auto* p : d.parameters()) out.push_back(p);
    return out;
  }
  std::string arch() const override { return "e2e"; }
  nlohmann::json config_json() const override { return cfg_.to_json(); }

 private:
  E2EConfig cfg_;
  std::size_t padded_rows_ = 0, padded_cols_ = 0;
  std::vector<detail::DenseStage> encoder_;
  std::vector<nn::ConvTranspose2d> decoder_;
  std::vector<nn::ReLU> decoder_relu_;
};

/// Dense conv stages (odd sizes zero-padded before pooling), flatten, dense(hidden), ReLU,
/// dense(H*W), reshape to (1, H, W).
class FcCnnNet : public Network {
 public:
  FcCnnNet(const FcCnnConfig& cfg, const InputShape& shape, std::uint64_t seed) : cfg_(cfg) {
    shape_ = shape;
    detail::require_grid(arch(), shape, cfg.stages);
    std::size_t ch = shape.channels, h = shape.rows, w = shape.cols;
    for (std::size_t s = 0; s < cfg.stages; ++s) {
      stages_.emplace_back("stage" + std::to_string(s), ch, cfg.base_channels << s, cfg.dense);
      ch = stages_.back().out_channels();
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
    flat_ = ch * h * w;
    hidden_ = std::make_unique<nn::Dense>("fc_hidden", flat_, cfg.hidden);
    out_ = std::make_unique<nn::Dense>("fc_out", cfg.hidden, shape.rows * shape.cols);
    std::mt19937_64 rng(seed);
    for (auto& s : stages_) s.init(rng);
    hidden_->init(rng);
    out_->init(rng);
  }

  Tensor forward(const Tensor& input) override {
    check_input(input);
    Tensor z = input;
    for (auto& s : stages_) z = s.forward(z);
    feature_shape_ = z.shape();
    const std::size_t N = z.dim(0);
    z.reshape({N, flat_});
    z = out_->forward(relu_.forward(hidden_->forward(z)));
    return std::move(z).reshaped({N, 1, shape_.rows, shape_.cols});
  }

  Tensor backward(const Tensor& grad_out) override {
    const std::size_t N = grad_out.dim(0);
    Tensor g = grad_out.reshaped({N, shape_.rows * shape_.cols});
    g = hidden_->backward(relu_.backward(out_->backward(g)));
    g.reshape(feature_shape_);
    for (std::size_t s = stages_.size(); s-- > 0;) g = stages_[s].backward(g);
    return g;
  }

  std::vector<nn::Parameter*> parameters() override {
    std::vector<nn::Parameter*> out;
    for (auto& s : stages_) s.collect(out);
    for (auto* p : hidden_->parameters()) out.push_back(p);
    for (auto* p : out_->parameters()) out.push_back(p);
    return out;
  }
  std::string arch() const override { return "fc_cnn"; }
  nlohmann::json config_json() const override { return cfg_.to_json(); }

 private:
  FcCnnConfig cfg_;
  std::vector<detail::DenseStage> stages_;
  std::size_t flat_ = 0;
  std::unique_ptr<nn::Dense> hidden_, out_;
  nn::ReLU relu_;
  Tensor::Shape feature_shape_;
};

inline std::unique_ptr<Network> build_e2e(const E2EConfig& cfg, const InputShape& shape, std::uint64_t seed = 0) {
  return std::make_unique<E2ENet>(cfg, shape, seed);
}

inline std::unique_ptr<Network> build_fc_cnn(const FcCnnConfig& cfg, const InputShape& shape, std::uint64_t seed = 0) {
  return std::make_unique<FcCnnNet>(cfg, shape, seed);
}

inline std::unique_ptr<Network> build_network(const std::string& arch, const nlohmann::json& config,
                                              const InputShape& shape, std::uint64_t seed = 0) {
  if (arch == "e2e") return build_e2e(E2EConfig::from_json(config), shape, seed);
  if (arch == "fc_cnn") return build_fc_cnn(FcCnnConfig::from_json(config), shape, seed);
  throw Error(ErrorKind::InvalidConfig, "unknown architecture '" + arch + "' (expected e2e or fc_cnn)");
}

/// Whole-network gradient check on the masked MSE objective; covers parameters and the input.
inline nn::GradCheckReport grad_check_network(Network& net, const Tensor& input, const Tensor& target,
                                              const std::vector<bool>& mask, const nn::GradCheckOptions& opt = {}) {
  Tensor x = input;
  net.zero_grad();
  auto loss = nn::masked_mse(net.forward(x), target, mask);
  std::vector<nn::GradTarget> targets;
  targets.push_back({"input", &x, net.backward(loss.grad)});
  for (auto* p : net.parameters()) targets.push_back({p->name, &p->value, p->grad});
  return nn::grad_check([&] { return nn::masked_mse(net.forward(x), target, mask).loss; }, targets, opt);
}

// Checkpoint ----------------------------------------------------------------------------------

struct ModelCheckpoint {
  std::string arch;
  nlohmann::json config;
  InputShape shape;
  std::vector<std::pair<std::string, Tensor>> params;
  NormStats norm;
  std::vector<ChannelSpec> channel_spec;
  Variable target = Variable::Power;
  std::size_t horizon = 1;
  std::int64_t sampling_period = 600;
  std::vector<bool> mask;
  nlohmann::json metadata = nlohmann::json::object();  // epochs, seed, final val loss, ...
};

inline std::vector<std::pair<std::string, Tensor>> snapshot_params(Network& net) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto* p : net.parameters()) out.emplace_back(p->name, p->value);
  return out;
}

inline void load_params(Network& net, const std::vector<std::pair<std::string, Tensor>>& params) {
  auto mine = net.parameters();
  if (mine.size() != params.size())
    throw Error(ErrorKind::CheckpointMismatch, "checkpoint has " + std::to_string(params.size()) +
                                                   " parameter tensors, network has " + std::to_string(mine.size()));
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i]->name != params[i].first || mine[i]->value.shape() != params[i].second.shape())
      throw Error(ErrorKind::CheckpointMismatch, "parameter " + std::to_string(i) + ": checkpoint has " +
                                                     params[i].first + params[i].second.shape_string() +
                                                     ", network has " + mine[i]->name +
                                                     mine[i]->value.shape_string());
    mine[i]->value = params[i].second;
  }
}

/// Checkpoint of `net` with the data contract of a normalized sample set.
inline ModelCheckpoint make_checkpoint(Network& net, const SampleSet& set, nlohmann::json metadata = {}) {
  if (!set.norm) throw Error(ErrorKind::InvalidConfig, "checkpoint needs a normalized sample set");
  ModelCheckpoint c;
  c.arch = net.arch();
  c.config = net.config_json();
  c.shape = net.input_shape();
  c.params = snapshot_params(net);
  c.norm = *set.norm;
  c.channel_spec = make_channel_spec(set.variables, set.window);
  c.target = set.target_variable;
  c.horizon = set.horizon;
  c.sampling_period = set.sampling_period;
  c.mask = set.mask;
  c.metadata = metadata.is_null() ? nlohmann::json::object() : std::move(metadata);
  return c;
}

inline std::unique_ptr<Network> restore_network(const ModelCheckpoint& c) {
  auto net = build_network(c.arch, c.config, c.shape, 0);
  load_params(*net, c.params);
  return net;
}

inline std::string encode_checkpoint(const ModelCheckpoint& c) {
  nlohmann::json h;
  h["arch"] = c.arch;
  h["config"] = c.config;
  h["input_shape"] = {c.shape.channels, c.shape.rows, c.shape.cols};
  nlohmann::json params = nlohmann::json::array();
  for (const auto& [name, t] : c.params) params.push_back({{"name", name}, {"shape", t.shape()}});
  h["params"] = params;
  nlohmann::json norm = nlohmann::json::array();
  for (const auto& r : c.norm.ranges)
    norm.push_back({{"variable", std::string(to_string(r.variable))}, {"min", r.min}, {"max", r.max}});
  h["norm"] = norm;
  nlohmann::json spec = nlohmann::json::array();
  for (const auto& s : c.channel_spec) spec.push_back({{"variable", std::string(to_string(s.variable))}, {"lag", s.lag}});
  h["channels"] = spec;
  h["target"] = std::string(to_string(c.target));
  h["horizon"] = c.horizon;
  h["sampling_period"] = c.sampling_period;
  std::string mask;
  for (bool b : c.mask) mask += b ? '1' : '0';
  h["mask"] = mask;
  h["metadata"] = c.metadata;
  const std::string header = h.dump();

  std::string out = "WGCKPT1";
  detail::put_le(out, static_cast<std::uint64_t>(header.size()));
  out += header;
  for (const auto& [name, t] : c.params)
    for (double v : t.values()) detail::put_le(out, v);
  return out;
}

inline ModelCheckpoint decode_checkpoint(std::string bytes) {
  if (bytes.size() < 7 || bytes.compare(0, 7, "WGCKPT1") != 0)
    throw Error(ErrorKind::FormatError, "missing WGCKPT1 magic");
  detail::ByteReader in(std::move(bytes));
  in.take(7);
  const auto len = in.get<std::uint64_t>();
  ModelCheckpoint c;
  try {
    const auto h = nlohmann::json::parse(in.take(len));
    c.arch = h.at("arch").get<std::string>();
    c.config = h.at("config");
    const auto shape = h.at("input_shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) throw Error(ErrorKind::FormatError, "input_shape must have 3 entries");
    c.shape = {shape[0], shape[1], shape[2]};
    for (const auto& r : h.at("norm"))
      c.norm.ranges.push_back({parse_variable(r.at("variable").get<std::string>()), r.at("min").get<double>(),
                               r.at("max").get<double>()});
    for (const auto& s : h.at("channels"))
      c.channel_spec.push_back({parse_variable(s.at("variable").get<std::string>()), s.at("lag").get<std::size_t>()});
    c.target = parse_variable(h.at("target").get<std::string>());
    c.horizon = h.at("horizon").get<std::size_t>();
    c.sampling_period = h.at("sampling_period").get<std::int64_t>();
    for (char ch : h.at("mask").get<std::string>()) c.mask.push_back(ch == '1');
    c.metadata = h.value("metadata", nlohmann::json::object());
    for (const auto& p : h.at("params")) {
      Tensor t(p.at("shape").get<Tensor::Shape>());
      for (auto& v : t.values()) v = in.get<double>();
      c.params.emplace_back(p.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("checkpoint header: ") + e.what());
  }
  if (!in.done()) throw Error(ErrorKind::FormatError, "trailing bytes after parameter block");
  if (c.mask.size() != c.shape.rows * c.shape.cols)
    throw Error(ErrorKind::FormatError, "mask length does not match input shape");
  return c;
}

inline void save_checkpoint(const std::string& path, const ModelCheckpoint& c) {
  detail::write_text(path, encode_checkpoint(c));
}

inline ModelCheckpoint load_checkpoint(const std::string& path) { return decode_checkpoint(detail::read_binary(path)); }

}  // namespace windgrid
