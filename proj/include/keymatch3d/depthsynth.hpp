#pragma once

#include "keymatch3d/geometry.hpp"
#include "keymatch3d/mesh.hpp"
#include "keymatch3d/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

namespace keymatch3d {

/// Row-major metric depth raster; 0 marks an invalid pixel.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  DepthImage() = default;
  DepthImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0.0f) {}

  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  bool valid(int x, int y) const { return at(x, y) > 0.0f; }
  std::size_t valid_count() const;

  bool operator==(const DepthImage&) const = default;
};

/// Normalized 3-channel network input, values in [0, 1].
using NetworkInput = Tensor;

struct RenderedPair {
  DepthImage depth_a;
  DepthImage depth_b;
  RigidTransform pose_a;
  RigidTransform pose_b;
  CameraIntrinsics intrinsics;
};

/// Parametric sensor-noise stand-in: depth-dependent Gaussian jitter,
/// random dropout and invalidation near depth discontinuities.
struct NoiseParams {
  double sigma_base = 0.002;       // m
  double sigma_quadratic = 0.002;  // m per m^2
  double dropout_prob = 0.02;
  int edge_shadow_width = 2;       // px

  void validate() const;
};

/// Gradient magnitude (m/px) above which two neighbours form a discontinuity.
inline constexpr double kDiscontinuityThreshold = 0.05;

DepthImage render_depth(const TriangleMesh& mesh, const RigidTransform& pose,
                        const CameraIntrinsics& intrinsics);

DepthImage apply_noise(const DepthImage& depth, const NoiseParams& params, std::mt19937_64& rng);

NetworkInput normalize_depth(const DepthImage& depth, double d_min, double d_max);

/// Fraction of valid pixels of view `from` that reproject onto a consistent
/// valid pixel of view `to`.
double reprojection_overlap(const DepthImage& from, const RigidTransform& pose_from, const DepthImage& to,
                            const RigidTransform& pose_to, const CameraIntrinsics& intrinsics);

struct PairSettings {
  int count = 500;
  double max_angle = 20.0 * 3.14159265358979323846 / 180.0;  // rad
  double max_translation_frac = 0.15;  // of the mesh bounding radius
  double min_radius_frac = 1.5;
  double max_radius_frac = 2.5;
  double max_roll = 15.0 * 3.14159265358979323846 / 180.0;  // rad
  double min_overlap = 0.2;
  int max_retries = 100;
  std::optional<NoiseParams> noise;
  std::uint64_t seed = 1;
};

/// Camera looking at `target` from `eye`, rolled about its optical axis.
RigidTransform look_at(const Point3& eye, const Point3& target, double roll);

/// Samples a viewpoint on a sphere around the mesh centroid.
RigidTransform sample_viewpoint(const TriangleMesh& mesh, const PairSettings& settings, std::mt19937_64& rng);

/// Independent random stream for (seed, stream tag, index).
std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t tag, std::uint64_t index);

/// Pair `index` of the stream; depends only on (mesh, intrinsics, settings, index).
/// Throws std::runtime_error("perturbation too large ...") after
/// `max_retries` consecutive overlap rejections.
RenderedPair generate_pair(const TriangleMesh& mesh, const CameraIntrinsics& intrinsics,
                           const PairSettings& settings, int index);

std::vector<RenderedPair> generate_pairs(const TriangleMesh& mesh, const CameraIntrinsics& intrinsics,
                                         const PairSettings& settings, int threads = 1);

/// "DPTH" raster file: u32 width, u32 height, f32 depths (all little-endian).
void write_depth(const DepthImage& depth, const std::filesystem::path& path);
DepthImage read_depth(const std::filesystem::path& path);

}  // namespace keymatch3d
