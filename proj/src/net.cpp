#include "keymatch3d/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace keymatch3d {

namespace {

constexpr double kCellOffset = (kFeatureStride - 1) / 2.0;

std::mt19937_64 init_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x494E4954u};
  return std::mt19937_64(seq);
}

void glorot(Blob& w, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-a, a);
  for (double& v : w.values) v = static_cast<float>(u(rng));
}

}  // namespace

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  if (cfg.descriptor_dim < 1 || cfg.box_size < 1 || cfg.pool_size < 1)
    throw std::domain_error("model config: descriptor_dim, box_size, pool_size must be >= 1");
  ModelParams p;
  p.config = cfg;
  int in = 3;
  for (int i = 0; i < 4; ++i) {
    if (cfg.channels[i] < 1) throw std::domain_error("model config: channel widths must be >= 1");
    p.conv[i] = ConvParams(in, cfg.channels[i], 3);
    in = cfg.channels[i];
  }
  p.score = ConvParams(in, 1, 1);
  p.fc = DenseParams(in * cfg.pool_size * cfg.pool_size, cfg.descriptor_dim);
  return p;
}

ModelParams ModelParams::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = zeros(cfg);
  auto rng = init_rng(seed);
  for (auto& c : p.conv) glorot(c.weight, c.in_channels() * 9, c.out_channels() * 9, rng);
  glorot(p.score.weight, p.score.in_channels(), 1, rng);
  glorot(p.fc.weight, p.fc.in_features(), p.fc.out_features(), rng);
  return p;
}

std::vector<Blob*> ModelParams::blobs() {
  std::vector<Blob*> out;
  for (auto& c : conv) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  }
  out.insert(out.end(), {&score.weight, &score.bias, &fc.weight, &fc.bias});
  return out;
}

std::vector<const Blob*> ModelParams::blobs() const {
  auto mut = const_cast<ModelParams*>(this)->blobs();
  return {mut.begin(), mut.end()};
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Blob* b : blobs()) n += b->size();
  return n;
}

ForwardState forward(const ModelParams& params, const Tensor& input) {
  if (input.channels != 3) throw std::domain_error("forward: input must have 3 channels");
  if (input.height < kFeatureStride || input.width < kFeatureStride || input.height % kFeatureStride ||
      input.width % kFeatureStride)
    throw std::domain_error("forward: input " + input.shape_string() + " not divisible by feature stride " +
                            std::to_string(kFeatureStride));
  ForwardState s;
  s.input = input;
  s.pre[0] = conv2d_forward(input, params.conv[0]);
  s.act[0] = relu(s.pre[0]);
  s.pooled[0] = maxpool2_forward(s.act[0]);
  s.pre[1] = conv2d_forward(s.pooled[0].output, params.conv[1]);
  s.act[1] = relu(s.pre[1]);
  s.pooled[1] = maxpool2_forward(s.act[1]);
  s.pre[2] = conv2d_forward(s.pooled[1].output, params.conv[2]);
  s.pre[3] = conv2d_forward(relu(s.pre[2]), params.conv[3]);
  s.feature = relu(s.pre[3]);
  s.score_map = conv2d_forward(s.feature, params.score);
  for (double& v : s.score_map.data) v = sigmoid(v);
  return s;
}

Point2 cell_center(int cell_x, int cell_y) {
  return {cell_x * kFeatureStride + kCellOffset, cell_y * kFeatureStride + kCellOffset};
}

Keypoint make_keypoint(const ModelParams& params, const ForwardState& state, int cell) {
  const int W = state.feature.width, H = state.feature.height;
  if (cell < 0 || cell >= W * H) throw std::domain_error("make_keypoint: cell index out of range");
  const int cx = cell % W, cy = cell / W;
  Keypoint kp;
  kp.cell = cell;
  kp.x = cell_center(cx, cy);
  kp.score = state.score_map.data[cell];
  const double half = params.config.box_size / 2.0 / kFeatureStride;
  kp.roi = {cx - half, cy - half, cx + half, cy + half};
  const Tensor pooled = roi_pool_forward(state.feature, kp.roi, params.config.pool_size);
  const auto d = fc_forward(pooled.data, params.fc);
  kp.descriptor = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
  return kp;
}

KeypointSet extract_keypoints(const ModelParams& params, const ForwardState& state, int t, SelectionMode mode,
                              std::mt19937_64& rng) {
  const int W = state.feature.width, H = state.feature.height, cells = W * H;
  if (t < 1) throw std::domain_error("extract_keypoints: t must be >= 1");
  const auto& scores = state.score_map.data;
  std::vector<int> chosen;

  if (mode == SelectionMode::kTopScore) {
    std::vector<int> order(static_cast<std::size_t>(cells));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
    const double r2 = params.config.nms_radius * params.config.nms_radius;
    for (int c : order) {
      if (static_cast<int>(chosen.size()) == t) break;
      const Point2 x = cell_center(c % W, c / W);
      bool keep = true;
      if (params.config.nms_radius > 0)
        for (int a : chosen)
          if ((cell_center(a % W, a / W) - x).squaredNorm() < r2) {
            keep = false;
            break;
          }
      if (keep) chosen.push_back(c);
    }
  } else {
    std::vector<int> pool(static_cast<std::size_t>(cells));
    std::iota(pool.begin(), pool.end(), 0);
    const int n = std::min(t, cells);
    for (int i = 0; i < n; ++i) {
      std::uniform_int_distribution<int> pick(i, cells - 1);
      std::swap(pool[i], pool[pick(rng)]);
      chosen.push_back(pool[i]);
    }
    std::stable_sort(chosen.begin(), chosen.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  }

  KeypointSet out;
  out.truncated = static_cast<int>(chosen.size()) < t;
  out.keypoints.reserve(chosen.size());
  for (int c : chosen) out.keypoints.push_back(make_keypoint(params, state, c));
  return out;
}

void backward_from_keypoints(const ModelParams& params, const ForwardState& state, const KeypointSet& kps,
                             const std::vector<Eigen::VectorXd>& descriptor_grads,
                             const std::vector<double>& score_grads, ModelParams& grads) {
  if (descriptor_grads.size() != kps.size() || score_grads.size() != kps.size())
    throw std::domain_error("backward_from_keypoints: gradient lists do not align with keypoints");
  Tensor dfeat(state.feature.channels, state.feature.height, state.feature.width);
  const int P = params.config.pool_size;
  const int C = state.feature.channels;
  const std::size_t plane = state.feature.plane();
  bool any = false;

  for (std::size_t k = 0; k < kps.size(); ++k) {
    const Keypoint& kp = kps.keypoints[k];
    if (kp.cell < 0 || static_cast<std::size_t>(kp.cell) >= plane)
      throw std::domain_error("backward_from_keypoints: keypoint has no feature cell");
    const Eigen::VectorXd& gd = descriptor_grads[k];
    if (gd.size() != params.config.descriptor_dim)
      throw std::domain_error("backward_from_keypoints: descriptor gradient has wrong dimension");
    if (!gd.isZero(0.0)) {
      any = true;
      const Tensor pooled = roi_pool_forward(state.feature, kp.roi, P);
      const auto dpooled = fc_backward(pooled.data, params.fc, {gd.data(), static_cast<std::size_t>(gd.size())}, grads.fc);
      Tensor dp(C, P, P);
      dp.data = dpooled;
      roi_pool_backward(kp.roi, P, dp, dfeat);
    }
    const double gs = score_grads[k];
    if (gs != 0.0) {
      any = true;
      const double s = state.score_map.data[kp.cell];
      const double dz = gs * s * (1.0 - s);
      for (int c = 0; c < C; ++c) {
        grads.score.weight.values[c] += dz * state.feature.data[c * plane + kp.cell];
        dfeat.data[c * plane + kp.cell] += dz * params.score.weight.values[c];
      }
      grads.score.bias.values[0] += dz;
    }
  }
  if (!any) return;

  Tensor g = relu_backward(state.pre[3], dfeat);
  const Tensor h2 = relu(state.pre[2]);
  g = conv2d_backward(h2, params.conv[3], g, grads.conv[3]);
  g = relu_backward(state.pre[2], g);
  g = conv2d_backward(state.pooled[1].output, params.conv[2], g, grads.conv[2]);
  g = maxpool2_backward(state.act[1], state.pooled[1], g);
  g = relu_backward(state.pre[1], g);
  g = conv2d_backward(state.pooled[0].output, params.conv[1], g, grads.conv[1]);
  g = maxpool2_backward(state.act[0], state.pooled[0], g);
  g = relu_backward(state.pre[0], g);
  conv2d_backward(state.input, params.conv[0], g, grads.conv[0], false);
}

}  // namespace keymatch3d
