#pragma once

#include <string>
#include <vector>

#include "windgrid/nn/tensor.hpp"

namespace windgrid::nn {

struct LossResult {
  double loss = 0.0;
  Tensor grad;
};

/// Mean squared error over mask-true cells. prediction/target are (N,1,H,W); mask has H*W entries.
/// loss = sum (p - t)^2 / (N * m), grad = 2 (p - t) / (N * m) on masked cells, 0 elsewhere.
inline LossResult masked_mse(const Tensor& prediction, const Tensor& target, const std::vector<bool>& mask) {
  prediction.require_same_shape(target, "masked_mse");
  if (prediction.rank() != 4 || prediction.dim(1) != 1)
    throw Error(ErrorKind::ShapeError, "masked_mse: expected (N,1,H,W), got " + prediction.shape_string());
  const std::size_t N = prediction.dim(0), plane = prediction.dim(2) * prediction.dim(3);
  if (mask.size() != plane)
    throw Error(ErrorKind::ShapeError,
                "masked_mse: mask has " + std::to_string(mask.size()) + " cells, grid has " + std::to_string(plane));
  std::size_t m = 0;
  for (bool b : mask) m += b;
  if (m == 0) throw Error(ErrorKind::EmptyMask, "masked_mse: mask has no valid cells");
  if (N == 0) throw Error(ErrorKind::ShapeError, "masked_mse: empty batch");

  const double denom = static_cast<double>(N * m);
  LossResult r{0.0, Tensor(prediction.shape())};
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      if (!mask[i]) continue;
      const std::size_t k = n * plane + i;
      const double d = prediction[k] - target[k];
      r.loss += d * d;
      r.grad[k] = 2.0 * d / denom;
    }
  r.loss /= denom;
  return r;
}

}  // namespace windgrid::nn
