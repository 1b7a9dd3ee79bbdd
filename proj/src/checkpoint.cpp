#include "keymatch3d/checkpoint.hpp"

#include "binary_io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace keymatch3d {

namespace {

void write_blob(std::ostream& os, const std::vector<int>& dims, const std::vector<double>& values) {
  detail::write_u32(os, static_cast<std::uint32_t>(dims.size()));
  for (int d : dims) detail::write_u32(os, static_cast<std::uint32_t>(d));
  for (double v : values) detail::write_f32(os, static_cast<float>(v));
}

Blob read_blob(std::istream& is, const std::string& what) {
  const auto rank = detail::read_u32(is, what);
  if (rank > 8) throw std::runtime_error(what + ": implausible blob rank " + std::to_string(rank));
  std::vector<int> dims;
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = detail::read_u32(is, what);
    if (d > (1u << 24)) throw std::runtime_error(what + ": implausible blob dimension");
    dims.push_back(static_cast<int>(d));
    n *= d;
  }
  if (n > (1u << 28)) throw std::runtime_error(what + ": blob too large");
  Blob b(dims);
  for (double& v : b.values) {
    v = detail::read_f32(is, what);
    if (!std::isfinite(v)) throw std::runtime_error(what + ": non-finite parameter");
  }
  return b;
}

void load_into(ModelParams& p, const std::vector<Blob>& blobs, std::size_t offset, const std::string& what) {
  auto dst = p.blobs();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!blobs[offset + i].same_shape(*dst[i]))
      throw std::runtime_error(what + ": blob " + std::to_string(offset + i) + " has unexpected shape");
    *dst[i] = blobs[offset + i];
  }
}

}  // namespace

void round_to_float(ModelParams& params) {
  for (Blob* b : params.blobs())
    for (double& v : b->values) v = static_cast<float>(v);
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  const auto& cfg = ckpt.params.config;
  const auto model = ckpt.params.blobs();
  const std::uint32_t count =
      static_cast<std::uint32_t>(1 + model.size() + (ckpt.velocity ? model.size() + 1 : 0));
  os.write("KMNP", 4);
  detail::write_u32(os, kCheckpointVersion);
  detail::write_u32(os, count);
  write_blob(os, {5}, {double(cfg.descriptor_dim), double(cfg.box_size), double(cfg.pool_size),
                       double(kFeatureStride), double(ckpt.keypoints)});
  for (const Blob* b : model) write_blob(os, b->dims, b->values);
  if (ckpt.velocity) {
    for (const Blob* b : ckpt.velocity->blobs()) write_blob(os, b->dims, b->values);
    write_blob(os, {1}, {double(ckpt.iteration)});
  }
  if (!os) throw std::runtime_error("error writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  const std::string what = "checkpoint " + path.string();
  if (!is) throw std::runtime_error("cannot open " + what);
  detail::expect_magic(is, "KMNP", what);
  const auto version = detail::read_u32(is, what);
  if (version != kCheckpointVersion) throw std::runtime_error(what + ": unsupported version " + std::to_string(version));
  const auto count = detail::read_u32(is, what);
  if (count == 0 || count > 1024) throw std::runtime_error(what + ": implausible blob count");
  std::vector<Blob> blobs;
  for (std::uint32_t i = 0; i < count; ++i) blobs.push_back(read_blob(is, what));
  if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error(what + ": trailing bytes");

  const Blob& echo = blobs[0];
  if (echo.dims != std::vector<int>{5}) throw std::runtime_error(what + ": missing config echo");
  if (static_cast<int>(echo.values[3]) != kFeatureStride)
    throw std::runtime_error(what + ": feature stride " + std::to_string(echo.values[3]) + " not supported");
  constexpr std::size_t kModelBlobs = 12;
  if (count != 1 + kModelBlobs && count != 2 + 2 * kModelBlobs)
    throw std::runtime_error(what + ": unexpected blob count " + std::to_string(count));

  ModelConfig cfg;
  cfg.descriptor_dim = static_cast<int>(echo.values[0]);
  cfg.box_size = static_cast<int>(echo.values[1]);
  cfg.pool_size = static_cast<int>(echo.values[2]);
  for (int i = 0; i < 4; ++i) cfg.channels[i] = blobs[1 + 2 * i].dims.at(0);
  cfg.nms_radius = kFeatureStride;

  Checkpoint ck;
  ck.keypoints = static_cast<int>(echo.values[4]);
  ck.params = ModelParams::zeros(cfg);
  load_into(ck.params, blobs, 1, what);
  if (count == 2 + 2 * kModelBlobs) {
    ck.velocity = ModelParams::zeros(cfg);
    load_into(*ck.velocity, blobs, 1 + kModelBlobs, what);
    const Blob& it = blobs.back();
    if (it.dims != std::vector<int>{1}) throw std::runtime_error(what + ": bad iteration blob");
    ck.iteration = static_cast<int>(it.values[0]);
  }
  return ck;
}

}  // namespace keymatch3d
