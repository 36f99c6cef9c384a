#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "windgrid/nn/layers.hpp"

namespace windgrid::nn {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(const std::vector<Parameter*>& params) = 0;
  virtual std::string name() const = 0;
  virtual double learning_rate() const = 0;
  virtual void set_learning_rate(double lr) = 0;
};

class Sgd : public Optimizer {
 public:
  explicit Sgd(double lr = 1e-2) : lr_(lr) {}
  void step(const std::vector<Parameter*>& params) override {
    for (auto* p : params) {
      p->value.require_same_shape(p->grad, "sgd");
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr_ * p->grad[i];
    }
  }
  std::string name() const override { return "sgd"; }
  double learning_rate() const override { return lr_; }
  void set_learning_rate(double lr) override { lr_ = lr; }

 private:
  double lr_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam : public Optimizer {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Parameter*>& params) override {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
      }
    }
    if (m_.size() != params.size())
      throw Error(ErrorKind::ShapeError, "adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_)), c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k];
      m_[k].require_same_shape(p.value, "adam moments");
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g;
        v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g * g;
        p.value[i] -= cfg_.lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + cfg_.eps);
      }
    }
  }
  std::string name() const override { return "adam"; }
  double learning_rate() const override { return cfg_.lr; }
  void set_learning_rate(double lr) override { cfg_.lr = lr; }
  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace windgrid::nn
