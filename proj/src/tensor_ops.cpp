#include "keymatch3d/tensor_ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace keymatch3d {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;

// Column matrix of shape (C*k*k, H*W) for a "same" convolution.
RowMat im2col(const Tensor& x, int k) {
  const int C = x.channels, H = x.height, W = x.width, r = k / 2;
  RowMat col(static_cast<Eigen::Index>(C) * k * k, static_cast<Eigen::Index>(H) * W);
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = col.row((c * k + ky) * k + kx).data();
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - r;
          for (int xx = 0; xx < W; ++xx) {
            const int sx = xx + kx - r;
            row[y * W + xx] = (sy >= 0 && sy < H && sx >= 0 && sx < W) ? x(c, sy, sx) : 0.0;
          }
        }
      }
  return col;
}

void col2im_add(const RowMat& col, int k, Tensor& dx) {
  const int C = dx.channels, H = dx.height, W = dx.width, r = k / 2;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col.row((c * k + ky) * k + kx).data();
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - r;
          if (sy < 0 || sy >= H) continue;
          for (int xx = 0; xx < W; ++xx) {
            const int sx = xx + kx - r;
            if (sx >= 0 && sx < W) dx(c, sy, sx) += row[y * W + xx];
          }
        }
      }
}

void check_conv(const Tensor& x, const ConvParams& p) {
  if (p.weight.dims.size() != 4 || p.bias.dims.size() != 1 || p.bias.dims[0] != p.out_channels())
    throw std::domain_error("conv2d: malformed parameters");
  if (x.channels != p.in_channels())
    throw std::domain_error("conv2d: input has " + std::to_string(x.channels) + " channels, kernel expects " +
                            std::to_string(p.in_channels()));
}

}  // namespace

Blob::Blob(std::vector<int> d) : dims(std::move(d)) {
  std::size_t n = 1;
  for (int v : dims) {
    if (v < 0) throw std::domain_error("blob: negative dimension");
    n *= static_cast<std::size_t>(v);
  }
  values.assign(n, 0.0);
}

ConvParams::ConvParams(int in, int out, int k) : weight({out, in, k, k}), bias({out}) {
  if (k % 2 == 0) throw std::domain_error("conv2d: kernel size must be odd");
}

DenseParams::DenseParams(int in, int out) : weight({out, in}), bias({out}) {}

Tensor conv2d_forward(const Tensor& x, const ConvParams& p) {
  check_conv(x, p);
  const int k = p.kernel(), O = p.out_channels();
  Tensor y(O, x.height, x.width);
  const RowMat col = im2col(x, k);
  CMapRow w(p.weight.values.data(), O, col.rows());
  MapRow out(y.data.data(), O, col.cols());
  out.noalias() = w * col;
  for (int o = 0; o < O; ++o) out.row(o).array() += p.bias.values[o];
  return y;
}

Tensor conv2d_backward(const Tensor& x, const ConvParams& p, const Tensor& dy, ConvParams& grad,
                       bool want_input_grad) {
  check_conv(x, p);
  const int k = p.kernel(), O = p.out_channels();
  if (dy.channels != O || dy.height != x.height || dy.width != x.width)
    throw std::domain_error("conv2d_backward: upstream gradient shape " + dy.shape_string());
  if (!grad.weight.same_shape(p.weight) || !grad.bias.same_shape(p.bias))
    throw std::domain_error("conv2d_backward: gradient accumulator shape mismatch");
  const RowMat col = im2col(x, k);
  CMapRow g(dy.data.data(), O, col.cols());
  MapRow gw(grad.weight.values.data(), O, col.rows());
  gw.noalias() += g * col.transpose();
  for (int o = 0; o < O; ++o) grad.bias.values[o] += g.row(o).sum();
  if (!want_input_grad) return {};
  CMapRow w(p.weight.values.data(), O, col.rows());
  const RowMat dcol = w.transpose() * g;
  Tensor dx(x.channels, x.height, x.width);
  col2im_add(dcol, k, dx);
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  if (!x.same_shape(dy)) throw std::domain_error("relu_backward: shape mismatch");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(x.data[i] > 0.0)) dx.data[i] = 0.0;
  return dx;
}

PoolResult maxpool2_forward(const Tensor& x) {
  const int H = x.height / 2, W = x.width / 2;
  if (H < 1 || W < 1) throw std::domain_error("maxpool2: input smaller than 2x2");
  PoolResult r{Tensor(x.channels, H, W), std::vector<std::uint32_t>(static_cast<std::size_t>(x.channels) * H * W)};
  std::size_t o = 0;
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx, ++o) {
        double best = -INFINITY;
        std::uint32_t arg = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int sy = 2 * y + dy, sx = 2 * xx + dx;
            const double v = x(c, sy, sx);
            if (v > best) {
              best = v;
              arg = static_cast<std::uint32_t>((c * x.plane()) + static_cast<std::size_t>(sy) * x.width + sx);
            }
          }
        r.output.data[o] = best;
        r.argmax[o] = arg;
      }
  return r;
}

Tensor maxpool2_backward(const Tensor& x, const PoolResult& fwd, const Tensor& dy) {
  if (!dy.same_shape(fwd.output)) throw std::domain_error("maxpool2_backward: shape mismatch");
  Tensor dx(x.channels, x.height, x.width);
  for (std::size_t i = 0; i < dy.size(); ++i) dx.data[fwd.argmax[i]] += dy.data[i];
  return dx;
}

std::vector<double> fc_forward(std::span<const double> x, const DenseParams& p) {
  if (static_cast<int>(x.size()) != p.in_features())
    throw std::domain_error("fc: input size " + std::to_string(x.size()) + " != " + std::to_string(p.in_features()));
  const int O = p.out_features();
  std::vector<double> y(p.bias.values);
  CMapRow w(p.weight.values.data(), O, p.in_features());
  Eigen::Map<Eigen::VectorXd> ym(y.data(), O);
  ym.noalias() += w * Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  return y;
}

std::vector<double> fc_backward(std::span<const double> x, const DenseParams& p, std::span<const double> dy,
                                DenseParams& grad) {
  const int O = p.out_features(), I = p.in_features();
  if (static_cast<int>(x.size()) != I || static_cast<int>(dy.size()) != O)
    throw std::domain_error("fc_backward: shape mismatch");
  if (!grad.weight.same_shape(p.weight)) throw std::domain_error("fc_backward: accumulator shape mismatch");
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), I), gv(dy.data(), O);
  MapRow gw(grad.weight.values.data(), O, I);
  gw.noalias() += gv * xv.transpose();
  Eigen::Map<Eigen::VectorXd>(grad.bias.values.data(), O) += gv;
  std::vector<double> dx(static_cast<std::size_t>(I));
  CMapRow w(p.weight.values.data(), O, I);
  Eigen::Map<Eigen::VectorXd>(dx.data(), I).noalias() = w.transpose() * gv;
  return dx;
}

namespace {

struct Tap {
  int x0, y0, x1, y1;
  double wx, wy;  // weight of the (x1, y1) side
};

Tap bilinear_tap(double fx, double fy, int W, int H) {
  fx = std::clamp(fx, 0.0, static_cast<double>(W - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(H - 1));
  Tap t;
  t.x0 = static_cast<int>(std::floor(fx));
  t.y0 = static_cast<int>(std::floor(fy));
  t.x1 = std::min(t.x0 + 1, W - 1);
  t.y1 = std::min(t.y0 + 1, H - 1);
  t.wx = fx - t.x0;
  t.wy = fy - t.y0;
  return t;
}

void check_roi(const RoiBox& roi, int pool, int W, int H) {
  if (pool < 1) throw std::domain_error("roi_pool: pool size must be >= 1");
  if (!(roi.x1 > roi.x0) || !(roi.y1 > roi.y0)) throw std::domain_error("roi_pool: empty box");
  if (roi.x1 < -0.5 || roi.y1 < -0.5 || roi.x0 > W - 0.5 || roi.y0 > H - 0.5)
    throw std::domain_error("roi_pool: box does not intersect the feature map");
}

}  // namespace

Tensor roi_pool_forward(const Tensor& f, const RoiBox& roi, int pool) {
  check_roi(roi, pool, f.width, f.height);
  Tensor out(f.channels, pool, pool);
  const double sx = (roi.x1 - roi.x0) / pool, sy = (roi.y1 - roi.y0) / pool;
  for (int py = 0; py < pool; ++py)
    for (int px = 0; px < pool; ++px) {
      const Tap t = bilinear_tap(roi.x0 + (px + 0.5) * sx, roi.y0 + (py + 0.5) * sy, f.width, f.height);
      const double w00 = (1 - t.wx) * (1 - t.wy), w01 = t.wx * (1 - t.wy), w10 = (1 - t.wx) * t.wy,
                   w11 = t.wx * t.wy;
      for (int c = 0; c < f.channels; ++c)
        out(c, py, px) = w00 * f(c, t.y0, t.x0) + w01 * f(c, t.y0, t.x1) + w10 * f(c, t.y1, t.x0) +
                         w11 * f(c, t.y1, t.x1);
    }
  return out;
}

void roi_pool_backward(const RoiBox& roi, int pool, const Tensor& dy, Tensor& df) {
  check_roi(roi, pool, df.width, df.height);
  if (dy.channels != df.channels || dy.height != pool || dy.width != pool)
    throw std::domain_error("roi_pool_backward: upstream gradient shape " + dy.shape_string());
  const double sx = (roi.x1 - roi.x0) / pool, sy = (roi.y1 - roi.y0) / pool;
  for (int py = 0; py < pool; ++py)
    for (int px = 0; px < pool; ++px) {
      const Tap t = bilinear_tap(roi.x0 + (px + 0.5) * sx, roi.y0 + (py + 0.5) * sy, df.width, df.height);
      const double w00 = (1 - t.wx) * (1 - t.wy), w01 = t.wx * (1 - t.wy), w10 = (1 - t.wx) * t.wy,
                   w11 = t.wx * t.wy;
      for (int c = 0; c < df.channels; ++c) {
        const double g = dy(c, py, px);
        df(c, t.y0, t.x0) += w00 * g;
        df(c, t.y0, t.x1) += w01 * g;
        df(c, t.y1, t.x0) += w10 * g;
        df(c, t.y1, t.x1) += w11 * g;
      }
    }
}

}  // namespace keymatch3d
