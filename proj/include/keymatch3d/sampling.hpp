#pragma once

#include "keymatch3d/depthsynth.hpp"
#include "keymatch3d/net.hpp"

#include <optional>
#include <vector>

namespace keymatch3d {

enum class DepthLookup { kNearest, kBilinear };

struct SamplingConfig {
  double tau_pos = 0.025;  // m
  DepthLookup depth_lookup = DepthLookup::kNearest;

  void validate() const;
};

/// World point of each keypoint, or nullopt over invalid depth.
using LiftedKeypoints = std::vector<std::optional<Point3>>;

struct KeypointPair {
  int i = -1;  // index into the first keypoint set
  int j = -1;  // index into the second keypoint set
  double distance = 0.0;  // 3D distance in meters
  int label = 0;
};

/// Output of the sampling layer.
///
/// Every keypoint appears in at most one pair. Keypoints left unpaired
/// (invalid depth, or the other side ran out) carry label 0 and count
/// towards `n_neg` but belong to no feature pair.
struct PairBatch {
  std::vector<KeypointPair> pairs;
  std::vector<int> labels0;
  std::vector<int> labels1;
  LiftedKeypoints world0;
  LiftedKeypoints world1;
  int n_pos = 0;
  int n_neg = 0;

  int n() const { return n_pos + n_neg; }
  int negative_pairs() const { return static_cast<int>(pairs.size()) - n_pos; }
  int unpaired() const { return n_neg - negative_pairs(); }
};

/// Depth at a (sub)pixel location; 0 when invalid or out of bounds.
/// Bilinear lookup requires all four neighbours to be valid.
double lookup_depth(const DepthImage& depth, const Point2& x, DepthLookup mode);

LiftedKeypoints lift_keypoints(const KeypointSet& keypoints, const DepthImage& depth, const RigidTransform& pose,
                               const CameraIntrinsics& intrinsics, const SamplingConfig& cfg);

/// Greedy one-to-one matching, smallest 3D distance first, ties to the lower
/// (i, j); label 1 iff distance < tau_pos.
PairBatch make_pairs(const LiftedKeypoints& lifted0, const LiftedKeypoints& lifted1, const SamplingConfig& cfg);

PairBatch run_sampling_layer(const KeypointSet& k0, const KeypointSet& k1, const DepthImage& d0,
                             const DepthImage& d1, const RigidTransform& g0, const RigidTransform& g1,
                             const CameraIntrinsics& intrinsics, const SamplingConfig& cfg);

/// Throws std::logic_error if the batch breaks injectivity, label
/// consistency or N = N_pos + N_neg.
void check_batch_invariants(const PairBatch& batch);

}  // namespace keymatch3d
