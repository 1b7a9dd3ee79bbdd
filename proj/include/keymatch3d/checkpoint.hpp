#pragma once

#include "keymatch3d/net.hpp"

#include <filesystem>
#include <optional>

namespace keymatch3d {

/// Training state stored in a "KMNP" checkpoint.
///
/// Layout (little-endian): magic "KMNP", u32 version, u32 blob count, then
/// per blob u32 rank, rank x u32 dims, f32 values. Blob 0 echoes the model
/// config (d, B, P, stride, t); then the model blobs in ModelParams::blobs()
/// order; optionally the momentum blobs in the same order and a final
/// one-element blob with the iteration count.
struct Checkpoint {
  ModelParams params;
  std::optional<ModelParams> velocity;
  int iteration = 0;
  int keypoints = 16;  // t echoed from the training config
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Rounds every value to the nearest float so the state survives a
/// checkpoint round trip unchanged.
void round_to_float(ModelParams& params);

}  // namespace keymatch3d
