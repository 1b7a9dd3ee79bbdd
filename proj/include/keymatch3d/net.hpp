#pragma once

#include "keymatch3d/geometry.hpp"
#include "keymatch3d/tensor_ops.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <random>
#include <vector>

namespace keymatch3d {

/// Architecture of the detector/descriptor network.
///
/// Backbone: four 3x3 conv + relu layers, 2x2 max pooling after the first
/// two, so one feature cell covers `kFeatureStride` x `kFeatureStride`
/// pixels. A 1x1 conv + sigmoid scores every cell; descriptors come from
/// a dense layer over a `pool_size` x `pool_size` RoI-pooled patch.
struct ModelConfig {
  std::array<int, 4> channels{16, 32, 64, 64};
  int descriptor_dim = 128;
  int box_size = 32;  // RoI side in pixels
  int pool_size = 4;
  double nms_radius = 4.0;  // pixels; 0 disables suppression
};

inline constexpr int kFeatureStride = 4;

struct ModelParams {
  ModelConfig config;
  std::array<ConvParams, 4> conv;
  ConvParams score;  // 1x1, C -> 1
  DenseParams fc;    // C*P*P -> d

  /// Zero-valued parameters with the shapes implied by `config`.
  static ModelParams zeros(const ModelConfig& config);
  /// Zero biases, weights uniform in +-sqrt(6 / (fan_in + fan_out)),
  /// rounded to single precision.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

  /// Every trainable blob in a fixed order (conv0.w, conv0.b, ..., score.w,
  /// score.b, fc.w, fc.b).
  std::vector<Blob*> blobs();
  std::vector<const Blob*> blobs() const;
  std::size_t parameter_count() const;

  bool operator==(const ModelParams& o) const { return conv == o.conv && score == o.score && fc == o.fc; }
};

/// Intermediate activations of one forward pass, kept for backward.
struct ForwardState {
  Tensor input;
  std::array<Tensor, 4> pre;  // conv outputs before relu
  std::array<Tensor, 2> act;  // relu outputs that were pooled (layers 1, 2)
  std::array<PoolResult, 2> pooled;
  Tensor feature;     // relu(pre[3]), (C, H/4, W/4)
  Tensor score_map;   // (1, H/4, W/4), values in (0, 1)
};

/// Throws std::domain_error unless input is 3 x H x W with H, W divisible
/// by the feature stride.
ForwardState forward(const ModelParams& params, const Tensor& input);

enum class SelectionMode { kTopScore, kRandom };

struct Keypoint {
  Point2 x;           // pixel coordinates of the feature-cell center
  double score = 0.5;
  Eigen::VectorXd descriptor;
  RoiBox roi;         // feature-map coordinates
  int cell = -1;      // flat feature-cell index, -1 when not network-derived
};

struct KeypointSet {
  std::vector<Keypoint> keypoints;
  bool truncated = false;  // fewer than the requested count were available

  std::size_t size() const { return keypoints.size(); }
};

/// Pixel center of a feature cell.
Point2 cell_center(int cell_x, int cell_y);

/// Keypoint for one feature cell: score from the score map, descriptor from
/// fc(roi_pool(feature, B x B box centered on the cell)).
Keypoint make_keypoint(const ModelParams& params, const ForwardState& state, int cell);

/// Top-score mode: cells by descending score (ties to the lower index),
/// greedily suppressing cells within `nms_radius` pixels of an accepted one.
/// Random mode: `t` distinct cells drawn uniformly. Output is sorted by
/// descending score either way.
KeypointSet extract_keypoints(const ModelParams& params, const ForwardState& state, int t, SelectionMode mode,
                              std::mt19937_64& rng);

/// Backpropagates per-keypoint descriptor and score gradients into `grads`
/// (accumulating). Descriptor gradients flow fc -> roi pool -> backbone;
/// score gradients enter the score head at the keypoint cells only.
/// Keypoint locations and boxes are constants.
void backward_from_keypoints(const ModelParams& params, const ForwardState& state, const KeypointSet& keypoints,
                             const std::vector<Eigen::VectorXd>& descriptor_grads,
                             const std::vector<double>& score_grads, ModelParams& grads);

}  // namespace keymatch3d
