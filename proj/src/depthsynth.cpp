#include "keymatch3d/depthsynth.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

namespace keymatch3d {

std::size_t DepthImage::valid_count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](float d) { return d > 0.0f; }));
}

void NoiseParams::validate() const {
  if (sigma_base < 0 || sigma_quadratic < 0 || dropout_prob < 0 || dropout_prob > 1 || edge_shadow_width < 0)
    throw std::domain_error("noise parameters must be >= 0 and dropout_prob <= 1");
}

DepthImage render_depth(const TriangleMesh& mesh, const RigidTransform& pose,
                        const CameraIntrinsics& intrinsics) {
  intrinsics.validate();
  mesh.validate();
  const int W = intrinsics.width, H = intrinsics.height;
  std::vector<double> zbuf(static_cast<std::size_t>(W) * H, std::numeric_limits<double>::infinity());

  const RigidTransform world_to_cam = invert(pose);
  std::vector<Point3> cam(mesh.vertices.size());
  for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = world_to_cam(mesh.vertices[i]);

  constexpr double kNear = 1e-6;
  for (const auto& tri : mesh.triangles) {
    const Point3& p0 = cam[tri[0]];
    const Point3& p1 = cam[tri[1]];
    const Point3& p2 = cam[tri[2]];
    if (p0.z() <= kNear && p1.z() <= kNear && p2.z() <= kNear) continue;

    int x0 = 0, x1 = W - 1, y0 = 0, y1 = H - 1;
    if (p0.z() > kNear && p1.z() > kNear && p2.z() > kNear) {
      double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
      for (const Point3* p : {&p0, &p1, &p2}) {
        const Point2 u = project(intrinsics, *p);
        umin = std::min(umin, u.x());
        umax = std::max(umax, u.x());
        vmin = std::min(vmin, u.y());
        vmax = std::max(vmax, u.y());
      }
      if (umax < -1 || vmax < -1 || umin > W || vmin > H) continue;
      x0 = std::max(0, static_cast<int>(std::floor(umin)) - 1);
      x1 = std::min(W - 1, static_cast<int>(std::ceil(umax)) + 1);
      y0 = std::max(0, static_cast<int>(std::floor(vmin)) - 1);
      y1 = std::min(H - 1, static_cast<int>(std::ceil(vmax)) + 1);
    }

    // Moller-Trumbore with the ray origin at the camera center and ray
    // direction (.., .., 1), so the ray parameter equals the z depth.
    const Point3 e1 = p1 - p0;
    const Point3 e2 = p2 - p0;
    const Point3 s = -p0;
    const Point3 q = s.cross(e1);
    for (int y = y0; y <= y1; ++y) {
      const double dy = (y - intrinsics.cy) / intrinsics.fy;
      for (int x = x0; x <= x1; ++x) {
        const Point3 d((x - intrinsics.cx) / intrinsics.fx, dy, 1.0);
        const Point3 pvec = d.cross(e2);
        const double det = e1.dot(pvec);
        if (std::abs(det) < 1e-15) continue;
        const double inv = 1.0 / det;
        const double bu = s.dot(pvec) * inv;
        if (bu < 0.0 || bu > 1.0) continue;
        const double bv = d.dot(q) * inv;
        if (bv < 0.0 || bu + bv > 1.0) continue;
        const double z = e2.dot(q) * inv;
        if (z <= kNear) continue;
        double& zb = zbuf[static_cast<std::size_t>(y) * W + x];
        if (z < zb) zb = z;
      }
    }
  }

  DepthImage out(W, H);
  for (std::size_t i = 0; i < zbuf.size(); ++i)
    out.data[i] = std::isfinite(zbuf[i]) ? static_cast<float>(zbuf[i]) : 0.0f;
  return out;
}

DepthImage apply_noise(const DepthImage& depth, const NoiseParams& params, std::mt19937_64& rng) {
  params.validate();
  DepthImage out = depth;
  const int W = depth.width, H = depth.height;

  if (params.edge_shadow_width > 0) {
    std::vector<char> edge(out.data.size(), 0);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        if (!depth.valid(x, y)) continue;
        const double d = depth.at(x, y);
        const int nx[4] = {x - 1, x + 1, x, x};
        const int ny[4] = {y, y, y - 1, y + 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || ny[k] < 0 || nx[k] >= W || ny[k] >= H) continue;
          if (std::abs(depth.at(nx[k], ny[k]) - d) > kDiscontinuityThreshold) {
            edge[static_cast<std::size_t>(y) * W + x] = 1;
            break;
          }
        }
      }
    }
    const int r = params.edge_shadow_width;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (!edge[static_cast<std::size_t>(y) * W + x]) continue;
        for (int yy = std::max(0, y - r); yy <= std::min(H - 1, y + r); ++yy)
          for (int xx = std::max(0, x - r); xx <= std::min(W - 1, x + r); ++xx) out.at(xx, yy) = 0.0f;
      }
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (float& d : out.data) {
    if (!(d > 0.0f)) continue;
    if (params.dropout_prob > 0.0 && unit(rng) < params.dropout_prob) {
      d = 0.0f;
      continue;
    }
    const double sigma = params.sigma_base + params.sigma_quadratic * double(d) * double(d);
    if (sigma > 0.0) {
      const double noisy = d + sigma * gauss(rng);
      d = noisy > 0.0 ? static_cast<float>(noisy) : 0.0f;
    }
  }
  return out;
}

NetworkInput normalize_depth(const DepthImage& depth, double d_min, double d_max) {
  if (!(d_max > d_min)) throw std::domain_error("normalize_depth: d_max must exceed d_min");
  NetworkInput out(3, depth.height, depth.width);
  const double scale = 1.0 / (d_max - d_min);
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x) {
      if (!depth.valid(x, y)) continue;
      const double v = std::clamp((depth.at(x, y) - d_min) * scale, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) out(c, y, x) = v;
    }
  return out;
}

double reprojection_overlap(const DepthImage& from, const RigidTransform& pose_from, const DepthImage& to,
                            const RigidTransform& pose_to, const CameraIntrinsics& K) {
  const RigidTransform from_to = compose(invert(pose_to), pose_from);
  std::size_t valid = 0, hits = 0;
  for (int y = 0; y < from.height; ++y)
    for (int x = 0; x < from.width; ++x) {
      if (!from.valid(x, y)) continue;
      ++valid;
      const Point3 p = from_to(backproject(K, Point2(x, y), from.at(x, y)));
      if (p.z() <= 0) continue;
      const Point2 u = project(K, p);
      if (!K.contains(u)) continue;
      const int ux = static_cast<int>(std::lround(u.x())), uy = static_cast<int>(std::lround(u.y()));
      if (ux < 0 || uy < 0 || ux >= to.width || uy >= to.height || !to.valid(ux, uy)) continue;
      if (std::abs(to.at(ux, uy) - p.z()) < 0.01 + 0.01 * p.z()) ++hits;
    }
  return valid ? static_cast<double>(hits) / static_cast<double>(valid) : 0.0;
}

RigidTransform look_at(const Point3& eye, const Point3& target, double roll) {
  const Point3 z = (target - eye).normalized();
  Point3 up = Point3::UnitY();
  if (std::abs(up.dot(z)) > 0.99) up = Point3::UnitZ();
  const Point3 y = -(up - up.dot(z) * z).normalized();
  const Point3 x = y.cross(z);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  const Mat3 rolled = r * Eigen::AngleAxisd(roll, Point3::UnitZ()).toRotationMatrix();
  return RigidTransform(rolled, eye);
}

RigidTransform sample_viewpoint(const TriangleMesh& mesh, const PairSettings& settings, std::mt19937_64& rng) {
  const Point3 c = mesh.centroid();
  const double R = mesh.bounding_radius(c);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Point3 dir;
  do {
    dir = Point3(gauss(rng), gauss(rng), gauss(rng));
  } while (dir.norm() < 1e-12);
  dir.normalize();
  const double dist = R * (settings.min_radius_frac + unit(rng) * (settings.max_radius_frac - settings.min_radius_frac));
  const double roll = (2.0 * unit(rng) - 1.0) * settings.max_roll;
  return look_at(c + dist * dir, c, roll);
}

std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

namespace {
constexpr std::uint64_t kPairStream = 0x5041'4952;  // "PAIR"
}

RenderedPair generate_pair(const TriangleMesh& mesh, const CameraIntrinsics& intrinsics,
                           const PairSettings& settings, int index) {
  intrinsics.validate();
  if (settings.noise) settings.noise->validate();
  std::mt19937_64 rng = derive_rng(settings.seed, kPairStream, static_cast<std::uint64_t>(index));
  const double R = mesh.bounding_radius(mesh.centroid());
  for (int attempt = 0; attempt < settings.max_retries; ++attempt) {
    RenderedPair pair;
    pair.intrinsics = intrinsics;
    pair.pose_a = sample_viewpoint(mesh, settings, rng);
    pair.pose_b = compose(pair.pose_a, sample_perturbation(rng, settings.max_angle, settings.max_translation_frac * R));
    pair.depth_a = render_depth(mesh, pair.pose_a, intrinsics);
    pair.depth_b = render_depth(mesh, pair.pose_b, intrinsics);
    const double ab = reprojection_overlap(pair.depth_a, pair.pose_a, pair.depth_b, pair.pose_b, intrinsics);
    const double ba = reprojection_overlap(pair.depth_b, pair.pose_b, pair.depth_a, pair.pose_a, intrinsics);
    if (std::min(ab, ba) < settings.min_overlap) continue;
    if (settings.noise) {
      pair.depth_a = apply_noise(pair.depth_a, *settings.noise, rng);
      pair.depth_b = apply_noise(pair.depth_b, *settings.noise, rng);
    }
    return pair;
  }
  throw std::runtime_error("perturbation too large: " + std::to_string(settings.max_retries) +
                           " consecutive pairs below the overlap floor (pair " + std::to_string(index) + ")");
}

std::vector<RenderedPair> generate_pairs(const TriangleMesh& mesh, const CameraIntrinsics& intrinsics,
                                         const PairSettings& settings, int threads) {
  if (settings.count < 1) throw std::domain_error("generate_pairs: count must be >= 1");
  mesh.validate();
  std::vector<RenderedPair> out(settings.count);
  threads = std::max(1, std::min(threads, settings.count));
  if (threads == 1) {
    for (int i = 0; i < settings.count; ++i) out[i] = generate_pair(mesh, intrinsics, settings, i);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < settings.count; i += threads) out[i] = generate_pair(mesh, intrinsics, settings, i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

void write_depth(const DepthImage& depth, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write depth file " + path.string());
  os.write("DPTH", 4);
  detail::write_u32(os, static_cast<std::uint32_t>(depth.width));
  detail::write_u32(os, static_cast<std::uint32_t>(depth.height));
  for (float d : depth.data) detail::write_f32(os, d);
  if (!os) throw std::runtime_error("error writing depth file " + path.string());
}

DepthImage read_depth(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  const std::string what = "depth file " + path.string();
  if (!is) throw std::runtime_error("cannot open " + what);
  detail::expect_magic(is, "DPTH", what);
  const auto w = detail::read_u32(is, what);
  const auto h = detail::read_u32(is, what);
  if (w == 0 || h == 0 || w > 1u << 15 || h > 1u << 15) throw std::runtime_error(what + ": bad dimensions");
  DepthImage out(static_cast<int>(w), static_cast<int>(h));
  for (float& d : out.data) {
    d = detail::read_f32(is, what);
    if (!std::isfinite(d) || d < 0.0f) throw std::runtime_error(what + ": invalid depth value");
  }
  return out;
}

}  // namespace keymatch3d
