#include "keymatch3d/dataset.hpp"

#include "keymatch3d/kv_config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace keymatch3d {

namespace {
constexpr std::uint64_t kCalibrationStream = 0x43414C42;  // "CALB"
constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;
}  // namespace

std::vector<View> Dataset::first_views() const {
  std::vector<View> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.depth_a, p.pose_a});
  return out;
}

DepthRange calibrate_depth_range(const TriangleMesh& mesh, const CameraIntrinsics& intrinsics,
                                 const PairSettings& settings, int views) {
  std::vector<float> depths;
  for (int i = 0; i < views; ++i) {
    auto rng = derive_rng(settings.seed, kCalibrationStream, static_cast<std::uint64_t>(i));
    const DepthImage d = render_depth(mesh, sample_viewpoint(mesh, settings, rng), intrinsics);
    for (float v : d.data)
      if (v > 0.0f) depths.push_back(v);
  }
  if (depths.empty()) throw std::runtime_error("depth calibration: no valid pixels in calibration views");
  std::sort(depths.begin(), depths.end());
  auto rank = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(depths.size())));
    return static_cast<double>(depths[std::clamp<std::size_t>(k, 1, depths.size()) - 1]);
  };
  DepthRange r{rank(0.01), rank(0.99)};
  if (!(r.d_max > r.d_min)) r.d_max = r.d_min + 1e-3;
  return r;
}

Dataset synthesize_dataset(const TriangleMesh& mesh, const CameraIntrinsics& intrinsics,
                           const PairSettings& settings, int threads) {
  Dataset ds;
  ds.intrinsics = intrinsics;
  ds.settings = settings;
  ds.range = calibrate_depth_range(mesh, intrinsics, settings);
  ds.pairs = generate_pairs(mesh, intrinsics, settings, threads);
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "depth");
  KeyValues kv;
  const auto& K = ds.intrinsics;
  kv.set("format", "keymatch3d-dataset-1");
  kv.set("width", std::to_string(K.width));
  kv.set("height", std::to_string(K.height));
  kv.set("fx", format_real(K.fx));
  kv.set("fy", format_real(K.fy));
  kv.set("cx", format_real(K.cx));
  kv.set("cy", format_real(K.cy));
  kv.set("d_min", format_real(ds.range.d_min));
  kv.set("d_max", format_real(ds.range.d_max));
  kv.set("seed", std::to_string(ds.settings.seed));
  kv.set("max_angle_deg", format_real(ds.settings.max_angle * kRadToDeg));
  kv.set("max_translation_frac", format_real(ds.settings.max_translation_frac));
  kv.set("min_overlap", format_real(ds.settings.min_overlap));
  kv.set("noise", ds.settings.noise ? "1" : "0");
  if (ds.settings.noise) {
    kv.set("noise_sigma_base", format_real(ds.settings.noise->sigma_base));
    kv.set("noise_sigma_quadratic", format_real(ds.settings.noise->sigma_quadratic));
    kv.set("noise_dropout_prob", format_real(ds.settings.noise->dropout_prob));
    kv.set("noise_edge_shadow_width", std::to_string(ds.settings.noise->edge_shadow_width));
  }
  kv.set("pair_count", std::to_string(ds.pairs.size()));
  kv.set("poses", "poses.txt");

  std::vector<RigidTransform> poses;
  char name[64];
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const auto& p = ds.pairs[i];
    std::snprintf(name, sizeof name, "depth/pair_%05zu", i);
    const std::string a = std::string(name) + "_a.dpth", b = std::string(name) + "_b.dpth";
    write_depth(p.depth_a, dir / a);
    write_depth(p.depth_b, dir / b);
    poses.push_back(p.pose_a);
    poses.push_back(p.pose_b);
    kv.set("pair." + std::to_string(i), a + " " + b + " " + std::to_string(2 * i) + " " + std::to_string(2 * i + 1));
  }
  std::ofstream pf(dir / "poses.txt");
  if (!pf) throw std::runtime_error("cannot write " + (dir / "poses.txt").string());
  write_poses(pf, poses);
  kv.save(dir / "manifest.txt");
}

Dataset read_dataset(const std::filesystem::path& manifest) {
  const KeyValues kv = KeyValues::load(manifest);
  const auto dir = manifest.parent_path();
  if (kv.str("format") != "keymatch3d-dataset-1")
    throw std::runtime_error(manifest.string() + ": unsupported dataset format '" + kv.str("format") + "'");
  Dataset ds;
  auto& K = ds.intrinsics;
  K.width = static_cast<int>(kv.integer("width"));
  K.height = static_cast<int>(kv.integer("height"));
  K.fx = kv.real("fx");
  K.fy = kv.real("fy");
  K.cx = kv.real("cx");
  K.cy = kv.real("cy");
  K.validate();
  ds.range = {kv.real("d_min"), kv.real("d_max")};
  ds.settings.seed = kv.u64("seed", 1);
  ds.settings.max_angle = kv.real("max_angle_deg", 20.0) / kRadToDeg;
  ds.settings.max_translation_frac = kv.real("max_translation_frac", 0.15);
  ds.settings.min_overlap = kv.real("min_overlap", 0.2);
  if (kv.boolean("noise", false)) {
    NoiseParams n;
    n.sigma_base = kv.real("noise_sigma_base");
    n.sigma_quadratic = kv.real("noise_sigma_quadratic");
    n.dropout_prob = kv.real("noise_dropout_prob");
    n.edge_shadow_width = static_cast<int>(kv.integer("noise_edge_shadow_width"));
    ds.settings.noise = n;
  }
  const auto count = kv.integer("pair_count");
  ds.settings.count = static_cast<int>(count);

  const auto pose_path = dir / kv.str("poses");
  std::ifstream pf(pose_path);
  if (!pf) throw std::runtime_error("cannot open pose file " + pose_path.string());
  const auto poses = read_poses(pf);

  ds.pairs.resize(static_cast<std::size_t>(count));
  for (long long i = 0; i < count; ++i) {
    std::istringstream is(kv.str("pair." + std::to_string(i)));
    std::string a, b;
    std::size_t ia = 0, ib = 0;
    if (!(is >> a >> b >> ia >> ib))
      throw std::runtime_error(manifest.string() + ": malformed entry pair." + std::to_string(i));
    if (ia >= poses.size() || ib >= poses.size())
      throw std::runtime_error(manifest.string() + ": pose index out of range in pair." + std::to_string(i));
    auto& p = ds.pairs[static_cast<std::size_t>(i)];
    p.intrinsics = K;
    p.depth_a = read_depth(dir / a);
    p.depth_b = read_depth(dir / b);
    p.pose_a = poses[ia];
    p.pose_b = poses[ib];
    if (p.depth_a.width != K.width || p.depth_a.height != K.height || p.depth_b.width != K.width ||
        p.depth_b.height != K.height)
      throw std::runtime_error(manifest.string() + ": depth size does not match intrinsics in pair." +
                               std::to_string(i));
  }
  return ds;
}

}  // namespace keymatch3d
