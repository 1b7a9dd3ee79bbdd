#pragma once

#include "keymatch3d/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace keymatch3d {

/// Trainable array with its shape, e.g. (out, in, k, k) for a conv kernel.
struct Blob {
  std::vector<int> dims;
  std::vector<double> values;

  Blob() = default;
  explicit Blob(std::vector<int> d);
  std::size_t size() const { return values.size(); }
  bool same_shape(const Blob& o) const { return dims == o.dims; }
  bool operator==(const Blob&) const = default;
};

/// Square-kernel convolution, stride 1, zero padding k/2 ("same" output).
struct ConvParams {
  Blob weight;  // (out, in, k, k)
  Blob bias;    // (out)

  ConvParams() = default;
  ConvParams(int in, int out, int k);
  int in_channels() const { return weight.dims[1]; }
  int out_channels() const { return weight.dims[0]; }
  int kernel() const { return weight.dims[2]; }
  bool operator==(const ConvParams&) const = default;
};

/// y = W x + b.
struct DenseParams {
  Blob weight;  // (out, in), row-major
  Blob bias;    // (out)

  DenseParams() = default;
  DenseParams(int in, int out);
  int in_features() const { return weight.dims[1]; }
  int out_features() const { return weight.dims[0]; }
  bool operator==(const DenseParams&) const = default;
};

Tensor conv2d_forward(const Tensor& x, const ConvParams& p);
/// Accumulates parameter gradients into `grad` and returns dL/dx (empty
/// tensor when `want_input_grad` is false).
Tensor conv2d_backward(const Tensor& x, const ConvParams& p, const Tensor& dy, ConvParams& grad,
                       bool want_input_grad = true);

Tensor relu(const Tensor& x);
/// Gradient through relu evaluated at pre-activation `x`.
Tensor relu_backward(const Tensor& x, const Tensor& dy);

struct PoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};
/// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped.
PoolResult maxpool2_forward(const Tensor& x);
Tensor maxpool2_backward(const Tensor& x_shape_like, const PoolResult& fwd, const Tensor& dy);

std::vector<double> fc_forward(std::span<const double> x, const DenseParams& p);
std::vector<double> fc_backward(std::span<const double> x, const DenseParams& p, std::span<const double> dy,
                                DenseParams& grad);

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Axis-aligned box in feature-map coordinates (cell centers at integers).
struct RoiBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

/// Bilinear RoI pooling: samples the centers of a P x P grid of sub-cells
/// of `roi`, clamping sample coordinates to the map. Output shape (C, P, P).
Tensor roi_pool_forward(const Tensor& feature, const RoiBox& roi, int pool);
/// Scatters `dy` (C, P, P) onto the four bilinear source cells of each sample.
void roi_pool_backward(const RoiBox& roi, int pool, const Tensor& dy, Tensor& dfeature);

}  // namespace keymatch3d
