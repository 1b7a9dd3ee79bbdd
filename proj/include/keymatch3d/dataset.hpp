#pragma once

#include "keymatch3d/depthsynth.hpp"

#include <filesystem>
#include <vector>

namespace keymatch3d {

struct DepthRange {
  double d_min = 0.0;
  double d_max = 1.0;
};

/// Pose-annotated view: one rendered depth image with its camera pose.
struct View {
  DepthImage depth;
  RigidTransform pose;
};

/// A synthesized set of training or testing pairs plus the metadata needed
/// to reproduce the network input normalization.
struct Dataset {
  CameraIntrinsics intrinsics;
  DepthRange range;
  PairSettings settings;
  std::vector<RenderedPair> pairs;

  /// The first view of each pair, in pair order.
  std::vector<View> first_views() const;
};

/// 1st / 99th percentile of valid depths over `views` noise-free
/// calibration renders drawn from the viewpoint distribution.
DepthRange calibrate_depth_range(const TriangleMesh& mesh, const CameraIntrinsics& intrinsics,
                                 const PairSettings& settings, int views = 100);

Dataset synthesize_dataset(const TriangleMesh& mesh, const CameraIntrinsics& intrinsics,
                           const PairSettings& settings, int threads = 1);

/// Writes `manifest.txt`, `poses.txt` and one DPTH file per view into `dir`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& manifest);

}  // namespace keymatch3d
