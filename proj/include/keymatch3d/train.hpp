#pragma once

#include "keymatch3d/checkpoint.hpp"
#include "keymatch3d/dataset.hpp"
#include "keymatch3d/loss.hpp"
#include "keymatch3d/sampling.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace keymatch3d {

struct TrainConfig {
  int iterations = 2000;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int keypoints = 16;  // t
  SamplingConfig sampling;
  LossConfig loss;
  ModelConfig model;
  std::uint64_t seed = 1;
  int checkpoint_interval = 500;  // 0 disables intermediate checkpoints
  std::string manifest;

  void validate() const;
};

struct TrainRecord {
  int iter = 0;
  double total = 0.0;
  double lc = 0.0;
  double ls0 = 0.0;
  double ls1 = 0.0;
  int npos = 0;
  int nneg = 0;
  double mean_pos_score = 0.0;  // over both images' positive keypoints; 0 if none
};

using TrainLog = std::vector<TrainRecord>;

void write_train_log(const TrainLog& log, std::ostream& os);

struct TrainState {
  ModelParams params;
  ModelParams velocity;
  int iteration = 0;

  static TrainState fresh(const TrainConfig& cfg);
  static TrainState from_checkpoint(const Checkpoint& ckpt);
  Checkpoint checkpoint(int keypoints) const;
};

/// Everything one Siamese pass over a pair produces.
struct PairPass {
  ForwardState state0;
  ForwardState state1;
  KeypointSet keypoints0;
  KeypointSet keypoints1;
  PairBatch batch;
  LossOutput loss;
};

/// Runs both branches with shared parameters, the sampling layer and the
/// loss. Keypoints are selected by top score.
PairPass run_pair(const ModelParams& params, const RenderedPair& pair, const DepthRange& range,
                  const TrainConfig& cfg);

/// Gradient of one branch only (image 0 or 1) from a completed pass.
ModelParams branch_gradient(const ModelParams& params, const PairPass& pass, int branch);

/// Summed gradient of both branches.
ModelParams pair_gradient(const ModelParams& params, const PairPass& pass);

TrainRecord make_record(int iter, const PairPass& pass);

/// One SGD-with-momentum step (v = mu v - lr g; p += v), state rounded to
/// single precision afterwards. Throws std::runtime_error with a batch dump
/// on a non-finite loss.
TrainRecord train_step(TrainState& state, const RenderedPair& pair, const DepthRange& range,
                       const TrainConfig& cfg);

/// Pair index visited at `iteration`: pairs are reshuffled every epoch
/// from the run seed.
int pair_for_iteration(std::uint64_t seed, int iteration, int pair_count);

struct TrainResult {
  TrainState state;
  TrainLog log;
};

/// Trains until `cfg.iterations`, continuing from `state`. When `out_dir`
/// is set, writes checkpoint_<iter>.kmnp every interval and final.kmnp.
TrainResult train(const TrainConfig& cfg, const Dataset& dataset, TrainState state,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  const std::function<void(const TrainRecord&)>& on_step = {});

}  // namespace keymatch3d
