#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "windgrid/nn/tensor.hpp"

namespace windgrid::nn {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

inline void check_finite([[maybe_unused]] const Tensor& t, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  if (!t.all_finite()) throw Error(ErrorKind::DivergenceError, std::string(op) + " produced NaN/Inf");
#endif
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank)
    throw Error(ErrorKind::ShapeError, std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                                           ", got " + t.shape_string());
}

inline void require_dim(std::size_t got, std::size_t want, const char* op, const char* dim) {
  if (got != want)
    throw Error(ErrorKind::ShapeError,
                std::string(op) + ": " + dim + " is " + std::to_string(got) + ", expected " + std::to_string(want));
}

struct Geometry {
  std::size_t channels, height, width, k, stride, pad, out_h, out_w;
  std::size_t patch() const { return channels * k * k; }
  std::size_t positions() const { return out_h * out_w; }
};

inline std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const char* op,
                            const char* dim) {
  if (stride == 0) throw Error(ErrorKind::ShapeError, std::string(op) + ": stride must be positive");
  if (in + 2 * pad < k)
    throw Error(ErrorKind::ShapeError, std::string(op) + ": " + dim + " " + std::to_string(in) + " with padding " +
                                           std::to_string(pad) + " is smaller than kernel " + std::to_string(k));
  return (in + 2 * pad - k) / stride + 1;
}

/// cols is (C*k*k) x (out_h*out_w), row-major.
inline void im2col(const double* img, const Geometry& g, double* cols) {
  const std::size_t P = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = cols + ((c * g.k + ki) * g.k + kj) * P;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = std::ptrdiff_t(oh * g.stride + ki) - std::ptrdiff_t(g.pad);
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw = std::ptrdiff_t(ow * g.stride + kj) - std::ptrdiff_t(g.pad);
            const bool inside = ih >= 0 && iw >= 0 && ih < std::ptrdiff_t(g.height) && iw < std::ptrdiff_t(g.width);
            row[oh * g.out_w + ow] = inside ? img[(c * g.height + std::size_t(ih)) * g.width + std::size_t(iw)] : 0.0;
          }
        }
      }
}

/// Scatter-add of im2col's layout back into an image (img must be zeroed by the caller).
inline void col2im(const double* cols, const Geometry& g, double* img) {
  const std::size_t P = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = cols + ((c * g.k + ki) * g.k + kj) * P;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = std::ptrdiff_t(oh * g.stride + ki) - std::ptrdiff_t(g.pad);
          if (ih < 0 || ih >= std::ptrdiff_t(g.height)) continue;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw = std::ptrdiff_t(ow * g.stride + kj) - std::ptrdiff_t(g.pad);
            if (iw < 0 || iw >= std::ptrdiff_t(g.width)) continue;
            img[(c * g.height + std::size_t(ih)) * g.width + std::size_t(iw)] += row[oh * g.out_w + ow];
          }
        }
      }
}

/// Input gradient of a convolution with weights (OC, C, k, k): img += col2im(W^T * grad).
/// Also serves as the forward pass of the transposed convolution.
inline void conv_input_adjoint(const Tensor& weight, const double* grad, std::size_t out_channels, const Geometry& g,
                               std::vector<double>& scratch, double* img) {
  scratch.resize(g.patch() * g.positions());
  ConstMapMat W(weight.data(), Eigen::Index(out_channels), Eigen::Index(g.patch()));
  ConstMapMat G(grad, Eigen::Index(out_channels), Eigen::Index(g.positions()));
  MapMat cols(scratch.data(), Eigen::Index(g.patch()), Eigen::Index(g.positions()));
  cols.noalias() = W.transpose() * G;
  col2im(scratch.data(), g, img);
}

}  // namespace detail

struct ConvGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

/// Cross-correlation. input (N,C,H,W), weight (OC,C,k,k), bias (OC) or empty.
inline Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
                             std::size_t pad) {
  constexpr const char* op = "conv2d";
  detail::require_rank(input, 4, op, "input");
  detail::require_rank(weight, 4, op, "kernels");
  detail::require_dim(weight.dim(1), input.dim(1), op, "kernel in-channels");
  if (weight.dim(2) != weight.dim(3)) throw Error(ErrorKind::ShapeError, "conv2d: kernels must be square");
  const std::size_t N = input.dim(0), OC = weight.dim(0), k = weight.dim(2);
  if (!bias.empty()) detail::require_dim(bias.size(), OC, op, "bias length");
  detail::Geometry g{input.dim(1), input.dim(2), input.dim(3), k, stride, pad, 0, 0};
  g.out_h = detail::conv_out(g.height, k, stride, pad, op, "height");
  g.out_w = detail::conv_out(g.width, k, stride, pad, op, "width");

  Tensor out({N, OC, g.out_h, g.out_w});
  std::vector<double> cols(g.patch() * g.positions());
  detail::ConstMapMat W(weight.data(), Eigen::Index(OC), Eigen::Index(g.patch()));
  const std::size_t in_stride = g.channels * g.height * g.width, out_stride = OC * g.positions();
  for (std::size_t n = 0; n < N; ++n) {
    detail::im2col(input.data() + n * in_stride, g, cols.data());
    detail::ConstMapMat C(cols.data(), Eigen::Index(g.patch()), Eigen::Index(g.positions()));
    detail::MapMat O(out.data() + n * out_stride, Eigen::Index(OC), Eigen::Index(g.positions()));
    O.noalias() = W * C;
    if (!bias.empty())
      for (std::size_t o = 0; o < OC; ++o) O.row(Eigen::Index(o)).array() += bias[o];
  }
  detail::check_finite(out, op);
  return out;
}

inline ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out, std::size_t stride,
                                 std::size_t pad) {
  constexpr const char* op = "conv2d backward";
  detail::require_rank(grad_out, 4, op, "output gradient");
  const std::size_t N = input.dim(0), OC = weight.dim(0), k = weight.dim(2);
  detail::Geometry g{input.dim(1), input.dim(2), input.dim(3), k, stride, pad, 0, 0};
  g.out_h = detail::conv_out(g.height, k, stride, pad, op, "height");
  g.out_w = detail::conv_out(g.width, k, stride, pad, op, "width");
  detail::require_dim(grad_out.dim(0), N, op, "batch");
  detail::require_dim(grad_out.dim(1), OC, op, "channels");
  detail::require_dim(grad_out.dim(2), g.out_h, op, "height");
  detail::require_dim(grad_out.dim(3), g.out_w, op, "width");

  ConvGrads grads{Tensor(input.shape()), Tensor(weight.shape()), Tensor({OC})};
  std::vector<double> cols(g.patch() * g.positions()), scratch;
  detail::MapMat GW(grads.weight.data(), Eigen::Index(OC), Eigen::Index(g.patch()));
  const std::size_t in_stride = g.channels * g.height * g.width, out_stride = OC * g.positions();
  for (std::size_t n = 0; n < N; ++n) {
    const double* go = grad_out.data() + n * out_stride;
    detail::im2col(input.data() + n * in_stride, g, cols.data());
    detail::ConstMapMat C(cols.data(), Eigen::Index(g.patch()), Eigen::Index(g.positions()));
    detail::ConstMapMat G(go, Eigen::Index(OC), Eigen::Index(g.positions()));
    GW.noalias() += G * C.transpose();
    for (std::size_t o = 0; o < OC; ++o) grads.bias[o] += G.row(Eigen::Index(o)).sum();
    detail::conv_input_adjoint(weight, go, OC, g, scratch, grads.input.data() + n * in_stride);
  }
  return grads;
}

/// Transposed convolution. input (N,Cin,H,W), weight (Cin,Cout,k,k), bias (Cout) or empty.
/// Output side = (in - 1) * stride - 2 * pad + k.
inline Tensor conv2d_transpose_forward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                                       std::size_t stride, std::size_t pad) {
  constexpr const char* op = "conv2d_transpose";
  detail::require_rank(input, 4, op, "input");
  detail::require_rank(weight, 4, op, "kernels");
  detail::require_dim(weight.dim(0), input.dim(1), op, "kernel in-channels");
  if (weight.dim(2) != weight.dim(3)) throw Error(ErrorKind::ShapeError, "conv2d_transpose: kernels must be square");
  if (stride == 0) throw Error(ErrorKind::ShapeError, "conv2d_transpose: stride must be positive");
  const std::size_t N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Cout = weight.dim(1), k = weight.dim(2);
  if (!bias.empty()) detail::require_dim(bias.size(), Cout, op, "bias length");
  if ((H - 1) * stride + k < 2 * pad + 1 || (W - 1) * stride + k < 2 * pad + 1)
    throw Error(ErrorKind::ShapeError, "conv2d_transpose: padding " + std::to_string(pad) + " too large for input " +
                                           input.shape_string());
  const std::size_t OH = (H - 1) * stride + k - 2 * pad, OW = (W - 1) * stride + k - 2 * pad;
  // geometry of the forward convolution this op is the adjoint of: (Cout, OH, OW) -> (Cin, H, W)
  const detail::Geometry g{Cout, OH, OW, k, stride, pad, H, W};
  Tensor out({N, Cout, OH, OW});
  std::vector<double> scratch;
  for (std::size_t n = 0; n < N; ++n) {
    double* o = out.data() + n * Cout * OH * OW;
    detail::conv_input_adjoint(weight, input.data() + n * Cin * H * W, Cin, g, scratch, o);
    if (!bias.empty())
      for (std::size_t c = 0; c < Cout; ++c)
        for (std::size_t i = 0; i < OH * OW; ++i) o[c * OH * OW + i] += bias[c];
  }
  detail::check_finite(out, op);
  return out;
}

inline ConvGrads conv2d_transpose_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                                           std::size_t stride, std::size_t pad) {
  constexpr const char* op = "conv2d_transpose backward";
  const std::size_t N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Cout = weight.dim(1), k = weight.dim(2);
  const std::size_t OH = (H - 1) * stride + k - 2 * pad, OW = (W - 1) * stride + k - 2 * pad;
  detail::require_rank(grad_out, 4, op, "output gradient");
  detail::require_dim(grad_out.dim(0), N, op, "batch");
  detail::require_dim(grad_out.dim(1), Cout, op, "channels");
  detail::require_dim(grad_out.dim(2), OH, op, "height");
  detail::require_dim(grad_out.dim(3), OW, op, "width");
  const detail::Geometry g{Cout, OH, OW, k, stride, pad, H, W};

  ConvGrads grads{Tensor(input.shape()), Tensor(weight.shape()), Tensor({Cout})};
  std::vector<double> cols(g.patch() * g.positions());
  detail::ConstMapMat Wm(weight.data(), Eigen::Index(Cin), Eigen::Index(g.patch()));
  detail::MapMat GW(grads.weight.data(), Eigen::Index(Cin), Eigen::Index(g.patch()));
  for (std::size_t n = 0; n < N; ++n) {
    const double* go = grad_out.data() + n * Cout * OH * OW;
    detail::im2col(go, g, cols.data());
    detail::ConstMapMat C(cols.data(), Eigen::Index(g.patch()), Eigen::Index(g.positions()));
    detail::ConstMapMat X(input.data() + n * Cin * H * W, Eigen::Index(Cin), Eigen::Index(H * W));
    detail::MapMat GX(grads.input.data() + n * Cin * H * W, Eigen::Index(Cin), Eigen::Index(H * W));
    GX.noalias() = Wm * C;
    GW.noalias() += X * C.transpose();
    for (std::size_t c = 0; c < Cout; ++c)
      for (std::size_t i = 0; i < OH * OW; ++i) grads.bias[c] += go[c * OH * OW + i];
  }
  return grads;
}

struct PoolResult {
  Tensor output;
  std::vector<std::int64_t> argmax;  // flat input index per output element, -1 when a padding zero won
};

/// 2x2 stride-2 max pooling. Odd H or W is zero-padded on the bottom/right first.
/// Ties go to the first element in row-major order within the window.
inline PoolResult maxpool2x2_forward(const Tensor& input) {
  detail::require_rank(input, 4, "maxpool2x2", "input");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t OH = (H + 1) / 2, OW = (W + 1) / 2;
  PoolResult r{Tensor({N, C, OH, OW}), std::vector<std::int64_t>(N * C * OH * OW)};
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const double* plane = input.data() + nc * H * W;
    for (std::size_t i = 0; i < OH; ++i)
      for (std::size_t j = 0; j < OW; ++j, ++o) {
        double best = 0.0;
        std::int64_t arg = -2;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t h = 2 * i + di, w = 2 * j + dj;
            const bool inside = h < H && w < W;
            const double v = inside ? plane[h * W + w] : 0.0;
            if (arg == -2 || v > best) {
              best = v;
              arg = inside ? std::int64_t(nc * H * W + h * W + w) : -1;
            }
          }
        r.output[o] = best;
        r.argmax[o] = arg;
      }
  }
  return r;
}

inline Tensor maxpool2x2_backward(const Tensor::Shape& input_shape, const std::vector<std::int64_t>& argmax,
                                  const Tensor& grad_out) {
  detail::require_dim(grad_out.size(), argmax.size(), "maxpool2x2 backward", "output gradient length");
  Tensor g(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o)
    if (argmax[o] >= 0) g[std::size_t(argmax[o])] += grad_out[o];
  return g;
}

/// input (N, F) (higher ranks are flattened per sample), weight (O, F), bias (O).
inline Tensor dense_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  constexpr const char* op = "dense";
  detail::require_rank(weight, 2, op, "weight");
  if (input.rank() == 0 || input.dim(0) == 0) throw Error(ErrorKind::ShapeError, "dense: empty batch");
  const std::size_t N = input.dim(0), F = input.size() / N, O = weight.dim(0);
  detail::require_dim(F, weight.dim(1), op, "input features");
  if (!bias.empty()) detail::require_dim(bias.size(), O, op, "bias length");
  Tensor out({N, O});
  detail::ConstMapMat X(input.data(), Eigen::Index(N), Eigen::Index(F));
  detail::ConstMapMat Wm(weight.data(), Eigen::Index(O), Eigen::Index(F));
  detail::MapMat Y(out.data(), Eigen::Index(N), Eigen::Index(O));
  Y.noalias() = X * Wm.transpose();
  if (!bias.empty())
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o) out[n * O + o] += bias[o];
  detail::check_finite(out, op);
  return out;
}

struct DenseGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

inline DenseGrads dense_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out) {
  const std::size_t N = input.dim(0), F = input.size() / N, O = weight.dim(0);
  detail::require_dim(grad_out.size(), N * O, "dense backward", "output gradient length");
  DenseGrads g{Tensor(input.shape()), Tensor(weight.shape()), Tensor({O})};
  detail::ConstMapMat X(input.data(), Eigen::Index(N), Eigen::Index(F));
  detail::ConstMapMat Wm(weight.data(), Eigen::Index(O), Eigen::Index(F));
  detail::ConstMapMat G(grad_out.data(), Eigen::Index(N), Eigen::Index(O));
  detail::MapMat(g.input.data(), Eigen::Index(N), Eigen::Index(F)).noalias() = G * Wm;
  detail::MapMat(g.weight.data(), Eigen::Index(O), Eigen::Index(F)).noalias() = G.transpose() * X;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o) g.bias[o] += grad_out[n * O + o];
  return g;
}

inline Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

inline Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  input.require_same_shape(grad_out, "relu backward");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(input[i] > 0.0)) g[i] = 0.0;
  return g;
}

inline Tensor concat_channels_forward(const Tensor& a, const Tensor& b) {
  constexpr const char* op = "concat";
  detail::require_rank(a, 4, op, "first input");
  detail::require_rank(b, 4, op, "second input");
  detail::require_dim(b.dim(0), a.dim(0), op, "batch");
  detail::require_dim(b.dim(2), a.dim(2), op, "height");
  detail::require_dim(b.dim(3), a.dim(3), op, "width");
  const std::size_t N = a.dim(0), plane = a.dim(2) * a.dim(3);
  const std::size_t sa = a.dim(1) * plane, sb = b.dim(1) * plane;
  Tensor out({N, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(a.data() + n * sa, sa, out.data() + n * (sa + sb));
    std::copy_n(b.data() + n * sb, sb, out.data() + n * (sa + sb) + sa);
  }
  return out;
}

inline std::pair<Tensor, Tensor> concat_channels_backward(std::size_t first_channels, const Tensor& grad_out) {
  detail::require_rank(grad_out, 4, "concat backward", "output gradient");
  if (first_channels > grad_out.dim(1))
    throw Error(ErrorKind::ShapeError, "concat backward: split " + std::to_string(first_channels) + " exceeds " +
                                           std::to_string(grad_out.dim(1)) + " channels");
  const std::size_t N = grad_out.dim(0), H = grad_out.dim(2), W = grad_out.dim(3), plane = H * W;
  const std::size_t ca = first_channels, cb = grad_out.dim(1) - ca;
  Tensor ga({N, ca, H, W}), gb({N, cb, H, W});
  for (std::size_t n = 0; n < N; ++n) {
    const double* src = grad_out.data() + n * (ca + cb) * plane;
    std::copy_n(src, ca * plane, ga.data() + n * ca * plane);
    std::copy_n(src + ca * plane, cb * plane, gb.data() + n * cb * plane);
  }
  return {std::move(ga), std::move(gb)};
}

}  // namespace windgrid::nn
