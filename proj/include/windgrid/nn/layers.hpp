#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "windgrid/nn/kernels.hpp"

namespace windgrid::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(0.0); }
};

/// He-uniform: U(-b, b) with b = sqrt(6 / fan_in).
inline void he_uniform(Tensor& t, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in > 0 ? fan_in : 1));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : t.values()) v = u(rng);
}

/// Single-input layer. Parameter gradients accumulate across backward calls until zero_grad.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& input) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual std::string kind() const = 0;

 protected:
  const Tensor& cached(const std::optional<Tensor>& c) const {
    if (!c) throw std::logic_error(kind() + ": backward called before forward");
    return *c;
  }
};

class Conv2d : public Layer {
 public:
  Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t pad)
      : weight_(name + ".weight", Tensor({out_channels, in_channels, kernel, kernel})),
        bias_(name + ".bias", Tensor({out_channels})),
        stride_(stride),
        pad_(pad) {}

  void init(std::mt19937_64& rng) {
    he_uniform(weight_.value, weight_.value.dim(1) * weight_.value.dim(2) * weight_.value.dim(3), rng);
    bias_.value.fill(0.0);
  }

  Tensor forward(const Tensor& input) override {
    input_ = input;
    return conv2d_forward(input, weight_.value, bias_.value, stride_, pad_);
  }
  Tensor backward(const Tensor& grad_out) override {
    auto g = conv2d_backward(cached(input_), weight_.value, grad_out, stride_, pad_);
    weight_.grad += g.weight;
    bias_.grad += g.bias;
    return std::move(g.input);
  }
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "conv2d"; }
  std::size_t out_channels() const { return weight_.value.dim(0); }

 private:
  Parameter weight_, bias_;
  std::size_t stride_, pad_;
  std::optional<Tensor> input_;
};

class ConvTranspose2d : public Layer {
 public:
  ConvTranspose2d(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  std::size_t stride, std::size_t pad)
      : weight_(name + ".weight", Tensor({in_channels, out_channels, kernel, kernel})),
        bias_(name + ".bias", Tensor({out_channels})),
        stride_(stride),
        pad_(pad) {}

  // each output pixel sees in_channels * (k / stride)^2 inputs
  void init(std::mt19937_64& rng) {
    const std::size_t k = weight_.value.dim(2);
    const std::size_t per_axis = std::max<std::size_t>(1, k / stride_);
    he_uniform(weight_.value, weight_.value.dim(0) * per_axis * per_axis, rng);
    bias_.value.fill(0.0);
  }

  Tensor forward(const Tensor& input) override {
    input_ = input;
    return conv2d_transpose_forward(input, weight_.value, bias_.value, stride_, pad_);
  }
  Tensor backward(const Tensor& grad_out) override {
    auto g = conv2d_transpose_backward(cached(input_), weight_.value, grad_out, stride_, pad_);
    weight_.grad += g.weight;
    bias_.grad += g.bias;
    return std::move(g.input);
  }
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "conv2d_transpose"; }

 private:
  Parameter weight_, bias_;
  std::size_t stride_, pad_;
  std::optional<Tensor> input_;
};

class Dense : public Layer {
 public:
  Dense(const std::string& name, std::size_t in_features, std::size_t out_features)
      : weight_(name + ".weight", Tensor({out_features, in_features})), bias_(name + ".bias", Tensor({out_features})) {}

  void init(std::mt19937_64& rng) {
    he_uniform(weight_.value, weight_.value.dim(1), rng);
    bias_.value.fill(0.0);
  }

  Tensor forward(const Tensor& input) override {
    input_ = input;
    return dense_forward(input, weight_.value, bias_.value);
  }
  Tensor backward(const Tensor& grad_out) override {
    auto g = dense_backward(cached(input_), weight_.value, grad_out);
    weight_.grad += g.weight;
    bias_.grad += g.bias;
    return std::move(g.input);
  }
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "dense"; }

 private:
  Parameter weight_, bias_;
  std::optional<Tensor> input_;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& input) override {
    input_ = input;
    return relu_forward(input);
  }
  Tensor backward(const Tensor& grad_out) override { return relu_backward(cached(input_), grad_out); }
  std::string kind() const override { return "relu"; }

 private:
  std::optional<Tensor> input_;
};

class MaxPool2x2 : public Layer {
 public:
  Tensor forward(const Tensor& input) override {
    auto r = maxpool2x2_forward(input);
    input_shape_ = input.shape();
    argmax_ = std::move(r.argmax);
    return std::move(r.output);
  }
  Tensor backward(const Tensor& grad_out) override {
    if (!input_shape_) throw std::logic_error("maxpool2x2: backward called before forward");
    return maxpool2x2_backward(*input_shape_, argmax_, grad_out);
  }
  std::string kind() const override { return "maxpool2x2"; }

 private:
  std::optional<Tensor::Shape> input_shape_;
  std::vector<std::int64_t> argmax_;
};

inline void zero_grads(const std::vector<Parameter*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace windgrid::nn
