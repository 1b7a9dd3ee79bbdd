#include "keymatch3d/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace keymatch3d {

void SamplingConfig::validate() const {
  if (!(tau_pos > 0.0)) throw std::domain_error("sampling: tau_pos must be > 0");
}

double lookup_depth(const DepthImage& depth, const Point2& x, DepthLookup mode) {
  if (mode == DepthLookup::kNearest) {
    const long px = std::lround(x.x()), py = std::lround(x.y());
    if (px < 0 || py < 0 || px >= depth.width || py >= depth.height) return 0.0;
    return depth.at(static_cast<int>(px), static_cast<int>(py));
  }
  const double fx = std::floor(x.x()), fy = std::floor(x.y());
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double ax = x.x() - fx, ay = x.y() - fy;
  if (x0 < 0 || y0 < 0 || x0 >= depth.width || y0 >= depth.height) return 0.0;
  const int x1 = std::min(x0 + 1, depth.width - 1), y1 = std::min(y0 + 1, depth.height - 1);
  const double d00 = depth.at(x0, y0), d01 = depth.at(x1, y0), d10 = depth.at(x0, y1), d11 = depth.at(x1, y1);
  if (!(d00 > 0 && d01 > 0 && d10 > 0 && d11 > 0)) return 0.0;
  return (1 - ax) * (1 - ay) * d00 + ax * (1 - ay) * d01 + (1 - ax) * ay * d10 + ax * ay * d11;
}

LiftedKeypoints lift_keypoints(const KeypointSet& keypoints, const DepthImage& depth, const RigidTransform& pose,
                               const CameraIntrinsics& intrinsics, const SamplingConfig& cfg) {
  LiftedKeypoints out;
  out.reserve(keypoints.size());
  for (const auto& kp : keypoints.keypoints) {
    const double z = lookup_depth(depth, kp.x, cfg.depth_lookup);
    if (z > 0.0)
      out.emplace_back(transform_point(pose, backproject(intrinsics, kp.x, z)));
    else
      out.emplace_back(std::nullopt);
  }
  return out;
}

PairBatch make_pairs(const LiftedKeypoints& lifted0, const LiftedKeypoints& lifted1, const SamplingConfig& cfg) {
  cfg.validate();
  PairBatch b;
  b.world0 = lifted0;
  b.world1 = lifted1;
  b.labels0.assign(lifted0.size(), 0);
  b.labels1.assign(lifted1.size(), 0);

  struct Candidate {
    double distance;
    int i, j;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < lifted0.size(); ++i) {
    if (!lifted0[i]) continue;
    for (std::size_t j = 0; j < lifted1.size(); ++j) {
      if (!lifted1[j]) continue;
      cands.push_back({(*lifted0[i] - *lifted1[j]).norm(), static_cast<int>(i), static_cast<int>(j)});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });

  std::vector<char> used0(lifted0.size(), 0), used1(lifted1.size(), 0);
  for (const auto& c : cands) {
    if (used0[c.i] || used1[c.j]) continue;
    used0[c.i] = used1[c.j] = 1;
    const int label = c.distance < cfg.tau_pos ? 1 : 0;
    b.pairs.push_back({c.i, c.j, c.distance, label});
    b.labels0[c.i] = b.labels1[c.j] = label;
    if (label) ++b.n_pos;
  }
  const int unpaired = static_cast<int>(std::count(used0.begin(), used0.end(), 0) +
                                        std::count(used1.begin(), used1.end(), 0));
  b.n_neg = b.negative_pairs() + unpaired;
  return b;
}

PairBatch run_sampling_layer(const KeypointSet& k0, const KeypointSet& k1, const DepthImage& d0,
                             const DepthImage& d1, const RigidTransform& g0, const RigidTransform& g1,
                             const CameraIntrinsics& intrinsics, const SamplingConfig& cfg) {
  return make_pairs(lift_keypoints(k0, d0, g0, intrinsics, cfg), lift_keypoints(k1, d1, g1, intrinsics, cfg), cfg);
}

void check_batch_invariants(const PairBatch& b) {
  std::vector<char> seen0(b.labels0.size(), 0), seen1(b.labels1.size(), 0);
  int pos = 0;
  for (const auto& p : b.pairs) {
    if (p.i < 0 || p.j < 0 || p.i >= static_cast<int>(seen0.size()) || p.j >= static_cast<int>(seen1.size()))
      throw std::logic_error("pair batch: index out of range");
    if (seen0[p.i]++ || seen1[p.j]++) throw std::logic_error("pair batch: keypoint used in two pairs");
    if (b.labels0[p.i] != p.label || b.labels1[p.j] != p.label)
      throw std::logic_error("pair batch: keypoint label differs from its pair label");
    pos += p.label;
  }
  if (pos != b.n_pos) throw std::logic_error("pair batch: N_pos does not match labels");
  const int unpaired = static_cast<int>(std::count(seen0.begin(), seen0.end(), 0) +
                                        std::count(seen1.begin(), seen1.end(), 0));
  if (b.n_pos + b.n_neg != static_cast<int>(b.pairs.size()) + unpaired)
    throw std::logic_error("pair batch: N != N_pos + N_neg");
  for (std::size_t i = 0; i < seen0.size(); ++i)
    if (!seen0[i] && b.labels0[i] != 0) throw std::logic_error("pair batch: unpaired keypoint labeled positive");
  for (std::size_t j = 0; j < seen1.size(); ++j)
    if (!seen1[j] && b.labels1[j] != 0) throw std::logic_error("pair batch: unpaired keypoint labeled positive");
}

}  // namespace keymatch3d
