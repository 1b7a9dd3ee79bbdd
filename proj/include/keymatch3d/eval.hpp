#pragma once

#include "keymatch3d/dataset.hpp"
#include "keymatch3d/net.hpp"
#include "keymatch3d/sampling.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <vector>

namespace keymatch3d {

/// Produces keypoints with descriptors for one view.
using KeypointExtractor = std::function<KeypointSet(const View& view, std::mt19937_64& rng)>;

/// Learned detector + descriptor: normalize, forward, extract.
KeypointExtractor learned_extractor(const ModelParams& params, const DepthRange& range, int t, SelectionMode mode);

/// Floor baseline: `t` distinct valid-depth pixels drawn uniformly, each
/// described by its normalized raw depth patch.
KeypointExtractor baseline_extractor(const DepthRange& range, int t, int box_size);

/// `t` distinct valid-depth pixels drawn uniformly; descriptors left empty.
/// Returns fewer (truncated) when the view has fewer valid pixels.
KeypointSet baseline_random_detector(const DepthImage& depth, int t, std::mt19937_64& rng);

/// B x B depth patch centered on `kp`, normalized to [0, 1] over `range` like
/// the network input; invalid or out-of-image pixels read as 0.
Eigen::VectorXd raw_patch_descriptor(const DepthImage& depth, const Keypoint& kp, int box_size,
                                     const DepthRange& range);

struct Repository {
  int dim = 0;
  std::vector<Eigen::VectorXf> descriptors;
  std::vector<Eigen::Vector3f> points;  // world coordinates
  std::vector<int> source_view;         // -1 when loaded from file

  std::size_t size() const { return descriptors.size(); }
  void add(const Eigen::VectorXd& descriptor, const Point3& world, int view);
};

/// Extracts keypoints from every view, lifts them to world coordinates and
/// concatenates them. Invalid-depth keypoints are skipped. View `i` draws
/// randomness from derive_rng(seed, repository stream, i).
Repository build_repository(const KeypointExtractor& extractor, const std::vector<View>& views,
                            const CameraIntrinsics& intrinsics, std::uint64_t seed = 1);

/// "KMRP" file: u32 d, u32 count, then per entry d f32 descriptor values
/// and 3 f32 world coordinates (all little-endian).
void write_repository(const Repository& repo, const std::filesystem::path& path);
Repository read_repository(const std::filesystem::path& path);

struct QueryMatch {
  Point2 x;                  // query pixel
  Point3 world;              // query world point
  int repo_index = -1;
  double descriptor_distance = 0.0;
  double distance3d = 0.0;
  bool is_true = false;
};

struct NearestNeighbor {
  int index = -1;
  double distance = 0.0;
};

/// Exact Euclidean nearest neighbor by linear scan; ties go to the lower index.
NearestNeighbor nearest_neighbor(const Repository& repo, const Eigen::VectorXd& query);

struct MatchResult {
  std::vector<QueryMatch> matches;

  int queries() const { return static_cast<int>(matches.size()); }
  int true_matches() const;
  double accuracy() const;  // 0 for no queries
};

/// Matches every valid-depth keypoint of `view` against the repository.
/// No descriptor-distance cutoff; is_true iff 3D distance < tau_eval.
MatchResult match_view(const KeypointExtractor& extractor, const View& view, const CameraIntrinsics& intrinsics,
                       const Repository& repo, double tau_eval, std::mt19937_64& rng);

struct EvalSummary {
  std::vector<MatchResult> per_view;
  int queries = 0;
  int true_matches = 0;
  double accuracy() const { return queries ? static_cast<double>(true_matches) / queries : 0.0; }
};

/// match_view over all views; view `i` draws from derive_rng(seed, eval
/// stream, i) so the result does not depend on view order. Throws
/// std::runtime_error("no test views") for an empty list.
EvalSummary evaluate(const KeypointExtractor& extractor, const std::vector<View>& views,
                     const CameraIntrinsics& intrinsics, const Repository& repo, double tau_eval,
                     std::uint64_t seed = 1);

/// CSV with header view_id,queries,true_matches,accuracy.
void write_eval_csv(const EvalSummary& summary, std::ostream& os);

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  RgbImage(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
  std::array<std::uint8_t, 3> get(int x, int y) const;
};

struct DrawnMatch {
  Point2 a;  // pixel in the first view
  Point2 b;  // pixel in the second view
  bool is_true = false;
};

/// Side-by-side grayscale depth renderings (near = bright) with one line per
/// match, green for true and red for false matches.
RgbImage render_matches(const DepthImage& view_a, const DepthImage& view_b, const std::vector<DrawnMatch>& matches);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);

}  // namespace keymatch3d
