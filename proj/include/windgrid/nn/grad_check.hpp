#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "windgrid/nn/layers.hpp"

namespace windgrid::nn {

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t coordinates = 200;  // sampled without replacement; all of them when fewer exist
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
  double floor = 1e-7;           // denominator floor for near-zero gradients
  double kink_tolerance = 1e-2;  // forward vs backward slope disagreement that marks a non-smooth point
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_nonsmooth = 0;
  std::string worst;  // "name[index]" of the worst coordinate
  bool passed = false;
};

/// A tensor being perturbed and the analytic gradient of the objective with respect to it.
struct GradTarget {
  std::string name;
  Tensor* value;
  Tensor analytic;
};

/// Central differences of `objective` at sampled coordinates of the targets.
inline GradCheckReport grad_check(const std::function<double()>& objective, std::vector<GradTarget>& targets,
                                  const GradCheckOptions& opt = {}) {
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    targets[t].value->require_same_shape(targets[t].analytic, "grad_check");
    for (std::size_t i = 0; i < targets[t].value->size(); ++i) coords.emplace_back(t, i);
  }
  if (coords.size() > opt.coordinates) {
    std::mt19937_64 rng(opt.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opt.coordinates);
  }

  GradCheckReport rep;
  const double h = opt.step;
  for (auto [t, i] : coords) {
    double& x = (*targets[t].value)[i];
    const double x0 = x;
    const double mid = objective();
    x = x0 + h;
    const double up = objective();
    x = x0 - h;
    const double down = objective();
    x = x0;
    // one-sided slopes disagree by O(1) at a ReLU kink or pool tie, by O(h) elsewhere
    const double fwd = (up - mid) / h, bwd = (mid - down) / h;
    if (std::abs(fwd - bwd) > opt.kink_tolerance * std::max({std::abs(fwd), std::abs(bwd), opt.floor})) {
      ++rep.skipped_nonsmooth;
      continue;
    }
    const double fd = (up - down) / (2.0 * h);
    const double a = targets[t].analytic[i];
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), opt.floor});
    ++rep.checked;
    if (rel > rep.max_relative_error || rep.worst.empty()) {
      rep.max_relative_error = rel;
      rep.worst = targets[t].name + "[" + std::to_string(i) + "]";
    }
  }
  objective();  // leave layer caches consistent with the unperturbed point
  rep.passed = rep.checked > 0 && rep.max_relative_error < opt.tolerance;
  return rep;
}

inline Tensor random_like(const Tensor::Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

/// Checks a layer's input and parameter gradients using the scalar objective <layer(x), R> with random R.
inline GradCheckReport grad_check_layer(Layer& layer, const Tensor& input, const GradCheckOptions& opt = {}) {
  Tensor x = input;
  const Tensor out = layer.forward(x);
  const Tensor R = random_like(out.shape(), opt.seed + 1);
  auto params = layer.parameters();
  zero_grads(params);
  std::vector<GradTarget> targets;
  targets.push_back({"input", &x, layer.backward(R)});
  for (auto* p : params) targets.push_back({p->name, &p->value, p->grad});
  return grad_check([&] { return dot(layer.forward(x), R); }, targets, opt);
}

}  // namespace windgrid::nn
