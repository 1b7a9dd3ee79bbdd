#include "keymatch3d/eval.hpp"

#include "binary_io.hpp"
#include "keymatch3d/depthsynth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace keymatch3d {

namespace {
constexpr std::uint64_t kRepositoryStream = 0x5245504F;  // "REPO"
constexpr std::uint64_t kEvalStream = 0x4556414C;        // "EVAL"
}  // namespace

KeypointExtractor learned_extractor(const ModelParams& params, const DepthRange& range, int t, SelectionMode mode) {
  return [&params, range, t, mode](const View& view, std::mt19937_64& rng) {
    const ForwardState s = forward(params, normalize_depth(view.depth, range.d_min, range.d_max));
    return extract_keypoints(params, s, t, mode, rng);
  };
}

KeypointSet baseline_random_detector(const DepthImage& depth, int t, std::mt19937_64& rng) {
  if (t < 1) throw std::domain_error("baseline detector: t must be >= 1");
  std::vector<int> valid;
  for (int i = 0; i < depth.width * depth.height; ++i)
    if (depth.data[static_cast<std::size_t>(i)] > 0.0f) valid.push_back(i);
  KeypointSet out;
  const int n = std::min<int>(t, static_cast<int>(valid.size()));
  out.truncated = n < t;
  for (int i = 0; i < n; ++i) {
    std::uniform_int_distribution<int> pick(i, static_cast<int>(valid.size()) - 1);
    std::swap(valid[static_cast<std::size_t>(i)], valid[static_cast<std::size_t>(pick(rng))]);
    Keypoint kp;
    kp.x = Point2(valid[static_cast<std::size_t>(i)] % depth.width, valid[static_cast<std::size_t>(i)] / depth.width);
    kp.score = 0.5;
    out.keypoints.push_back(std::move(kp));
  }
  return out;
}

Eigen::VectorXd raw_patch_descriptor(const DepthImage& depth, const Keypoint& kp, int box_size,
                                     const DepthRange& range) {
  if (box_size < 1) throw std::domain_error("raw patch: box size must be >= 1");
  if (!(range.d_max > range.d_min)) throw std::domain_error("raw patch: d_max must exceed d_min");
  const int cx = static_cast<int>(std::lround(kp.x.x())), cy = static_cast<int>(std::lround(kp.x.y()));
  const double scale = 1.0 / (range.d_max - range.d_min);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(box_size) * box_size);
  const int x0 = cx - box_size / 2, y0 = cy - box_size / 2;
  for (int y = 0; y < box_size; ++y)
    for (int x = 0; x < box_size; ++x) {
      const int px = x0 + x, py = y0 + y;
      if (px < 0 || py < 0 || px >= depth.width || py >= depth.height || !depth.valid(px, py)) continue;
      d(y * box_size + x) = std::clamp((depth.at(px, py) - range.d_min) * scale, 0.0, 1.0);
    }
  return d;
}

KeypointExtractor baseline_extractor(const DepthRange& range, int t, int box_size) {
  return [range, t, box_size](const View& view, std::mt19937_64& rng) {
    KeypointSet k = baseline_random_detector(view.depth, t, rng);
    for (auto& kp : k.keypoints) kp.descriptor = raw_patch_descriptor(view.depth, kp, box_size, range);
    return k;
  };
}

void Repository::add(const Eigen::VectorXd& descriptor, const Point3& world, int view) {
  if (descriptors.empty() && dim == 0) dim = static_cast<int>(descriptor.size());
  if (descriptor.size() != dim) throw std::domain_error("repository: descriptor dimension mismatch");
  descriptors.push_back(descriptor.cast<float>());
  points.push_back(world.cast<float>());
  source_view.push_back(view);
}

Repository build_repository(const KeypointExtractor& extractor, const std::vector<View>& views,
                            const CameraIntrinsics& intrinsics, std::uint64_t seed) {
  if (views.empty()) throw std::domain_error("build_repository: no views");
  Repository repo;
  const SamplingConfig lift_cfg;
  for (std::size_t v = 0; v < views.size(); ++v) {
    auto rng = derive_rng(seed, kRepositoryStream, v);
    const KeypointSet kps = extractor(views[v], rng);
    const auto world = lift_keypoints(kps, views[v].depth, views[v].pose, intrinsics, lift_cfg);
    for (std::size_t k = 0; k < kps.size(); ++k)
      if (world[k]) repo.add(kps.keypoints[k].descriptor, *world[k], static_cast<int>(v));
  }
  return repo;
}

void write_repository(const Repository& repo, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write repository " + path.string());
  os.write("KMRP", 4);
  detail::write_u32(os, static_cast<std::uint32_t>(repo.dim));
  detail::write_u32(os, static_cast<std::uint32_t>(repo.size()));
  for (std::size_t i = 0; i < repo.size(); ++i) {
    for (int k = 0; k < repo.dim; ++k) detail::write_f32(os, repo.descriptors[i](k));
    for (int k = 0; k < 3; ++k) detail::write_f32(os, repo.points[i](k));
  }
  if (!os) throw std::runtime_error("error writing repository " + path.string());
}

Repository read_repository(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  const std::string what = "repository " + path.string();
  if (!is) throw std::runtime_error("cannot open " + what);
  detail::expect_magic(is, "KMRP", what);
  Repository repo;
  repo.dim = static_cast<int>(detail::read_u32(is, what));
  const auto count = detail::read_u32(is, what);
  if (repo.dim < 1 || repo.dim > (1 << 20) || count > (1u << 26)) throw std::runtime_error(what + ": implausible header");
  for (std::uint32_t i = 0; i < count; ++i) {
    Eigen::VectorXf d(repo.dim);
    for (int k = 0; k < repo.dim; ++k) d(k) = detail::read_f32(is, what);
    Eigen::Vector3f p;
    for (int k = 0; k < 3; ++k) p(k) = detail::read_f32(is, what);
    repo.descriptors.push_back(std::move(d));
    repo.points.push_back(p);
    repo.source_view.push_back(-1);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error(what + ": trailing bytes");
  return repo;
}

NearestNeighbor nearest_neighbor(const Repository& repo, const Eigen::VectorXd& query) {
  if (repo.size() == 0) throw std::domain_error("nearest_neighbor: empty repository");
  if (query.size() != repo.dim) throw std::domain_error("nearest_neighbor: query dimension mismatch");
  NearestNeighbor best{-1, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < repo.size(); ++i) {
    const double d2 = (repo.descriptors[i].cast<double>() - query).squaredNorm();
    if (d2 < best.distance) best = {static_cast<int>(i), d2};
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

int MatchResult::true_matches() const {
  return static_cast<int>(std::count_if(matches.begin(), matches.end(), [](const QueryMatch& m) { return m.is_true; }));
}

double MatchResult::accuracy() const {
  return matches.empty() ? 0.0 : static_cast<double>(true_matches()) / static_cast<double>(matches.size());
}

MatchResult match_view(const KeypointExtractor& extractor, const View& view, const CameraIntrinsics& intrinsics,
                       const Repository& repo, double tau_eval, std::mt19937_64& rng) {
  if (repo.size() == 0) throw std::domain_error("match_view: empty repository");
  const KeypointSet kps = extractor(view, rng);
  const auto world = lift_keypoints(kps, view.depth, view.pose, intrinsics, SamplingConfig{});
  MatchResult r;
  for (std::size_t k = 0; k < kps.size(); ++k) {
    if (!world[k]) continue;
    const auto nn = nearest_neighbor(repo, kps.keypoints[k].descriptor);
    QueryMatch m;
    m.x = kps.keypoints[k].x;
    m.world = *world[k];
    m.repo_index = nn.index;
    m.descriptor_distance = nn.distance;
    m.distance3d = (repo.points[static_cast<std::size_t>(nn.index)].cast<double>() - m.world).norm();
    m.is_true = m.distance3d < tau_eval;
    r.matches.push_back(m);
  }
  return r;
}

EvalSummary evaluate(const KeypointExtractor& extractor, const std::vector<View>& views,
                     const CameraIntrinsics& intrinsics, const Repository& repo, double tau_eval,
                     std::uint64_t seed) {
  if (views.empty()) throw std::runtime_error("no test views");
  EvalSummary s;
  for (std::size_t v = 0; v < views.size(); ++v) {
    auto rng = derive_rng(seed, kEvalStream, v);
    s.per_view.push_back(match_view(extractor, views[v], intrinsics, repo, tau_eval, rng));
    s.queries += s.per_view.back().queries();
    s.true_matches += s.per_view.back().true_matches();
  }
  return s;
}

void write_eval_csv(const EvalSummary& summary, std::ostream& os) {
  os << "view_id,queries,true_matches,accuracy\n";
  char buf[128];
  for (std::size_t v = 0; v < summary.per_view.size(); ++v) {
    const auto& r = summary.per_view[v];
    std::snprintf(buf, sizeof buf, "%zu,%d,%d,%.6f\n", v, r.queries(), r.true_matches(), r.accuracy());
    os << buf;
  }
}

void RgbImage::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  auto* p = &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

std::array<std::uint8_t, 3> RgbImage::get(int x, int y) const {
  const auto* p = &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
  return {p[0], p[1], p[2]};
}

namespace {

void blit_depth(RgbImage& img, const DepthImage& d, int x_offset) {
  float lo = std::numeric_limits<float>::max(), hi = 0.0f;
  for (float v : d.data)
    if (v > 0.0f) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const float span = hi > lo ? hi - lo : 1.0f;
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      if (!d.valid(x, y)) continue;
      const auto g = static_cast<std::uint8_t>(std::lround(55.0f + 200.0f * (hi - d.at(x, y)) / span));
      img.set(x + x_offset, y, g, g, g);
    }
}

void draw_line(RgbImage& img, int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> c) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    img.set(x0, y0, c[0], c[1], c[2]);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

RgbImage render_matches(const DepthImage& a, const DepthImage& b, const std::vector<DrawnMatch>& matches) {
  RgbImage img(a.width + b.width, std::max(a.height, b.height));
  blit_depth(img, a, 0);
  blit_depth(img, b, a.width);
  for (const auto& m : matches) {
    const std::array<std::uint8_t, 3> color = m.is_true ? std::array<std::uint8_t, 3>{0, 220, 0}
                                                        : std::array<std::uint8_t, 3>{230, 0, 0};
    draw_line(img, static_cast<int>(std::lround(m.a.x())), static_cast<int>(std::lround(m.a.y())),
              static_cast<int>(std::lround(m.b.x())) + a.width, static_cast<int>(std::lround(m.b.y())), color);
  }
  return img;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write image " + path.string());
  os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
}

}  // namespace keymatch3d
