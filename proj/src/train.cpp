#include "keymatch3d/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace keymatch3d {

namespace {
constexpr std::uint64_t kShuffleStream = 0x53485546;  // "SHUF"

std::vector<double> scores_of(const KeypointSet& k) {
  std::vector<double> s;
  for (const auto& kp : k.keypoints) s.push_back(kp.score);
  return s;
}

std::vector<Eigen::VectorXd> descriptors_of(const KeypointSet& k) {
  std::vector<Eigen::VectorXd> d;
  for (const auto& kp : k.keypoints) d.push_back(kp.descriptor);
  return d;
}

std::string dump_batch(const PairPass& pass) {
  std::ostringstream os;
  os << "batch: N_pos=" << pass.batch.n_pos << " N_neg=" << pass.batch.n_neg << "\n";
  for (const auto& p : pass.batch.pairs) {
    os << "  pair (" << p.i << "," << p.j << ") dist=" << p.distance << " label=" << p.label
       << " s0=" << pass.keypoints0.keypoints[p.i].score << " s1=" << pass.keypoints1.keypoints[p.j].score
       << " |f0|=" << pass.keypoints0.keypoints[p.i].descriptor.norm()
       << " |f1|=" << pass.keypoints1.keypoints[p.j].descriptor.norm() << "\n";
  }
  return os.str();
}
}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw std::domain_error("train: learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::domain_error("train: momentum must be in [0, 1)");
  if (iterations < 0) throw std::domain_error("train: iterations must be >= 0");
  if (keypoints < 1) throw std::domain_error("train: t must be >= 1");
  if (checkpoint_interval < 0) throw std::domain_error("train: checkpoint_interval must be >= 0");
  sampling.validate();
  loss.validate();
}

void write_train_log(const TrainLog& log, std::ostream& os) {
  os << "iter,total,lc,ls0,ls1,npos,nneg,mean_pos_score\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%d,%d,%.9g\n", r.iter, r.total, r.lc, r.ls0, r.ls1,
                  r.npos, r.nneg, r.mean_pos_score);
    os << buf;
  }
}

TrainState TrainState::fresh(const TrainConfig& cfg) {
  return {ModelParams::initialize(cfg.model, cfg.seed), ModelParams::zeros(cfg.model), 0};
}

TrainState TrainState::from_checkpoint(const Checkpoint& ckpt) {
  TrainState s{ckpt.params, ckpt.velocity ? *ckpt.velocity : ModelParams::zeros(ckpt.params.config),
               ckpt.iteration};
  return s;
}

Checkpoint TrainState::checkpoint(int keypoints) const { return {params, velocity, iteration, keypoints}; }

PairPass run_pair(const ModelParams& params, const RenderedPair& pair, const DepthRange& range,
                  const TrainConfig& cfg) {
  PairPass pass;
  std::mt19937_64 unused;  // top-score selection draws nothing
  pass.state0 = forward(params, normalize_depth(pair.depth_a, range.d_min, range.d_max));
  pass.state1 = forward(params, normalize_depth(pair.depth_b, range.d_min, range.d_max));
  pass.keypoints0 = extract_keypoints(params, pass.state0, cfg.keypoints, SelectionMode::kTopScore, unused);
  pass.keypoints1 = extract_keypoints(params, pass.state1, cfg.keypoints, SelectionMode::kTopScore, unused);
  pass.batch = run_sampling_layer(pass.keypoints0, pass.keypoints1, pair.depth_a, pair.depth_b, pair.pose_a,
                                  pair.pose_b, pair.intrinsics, cfg.sampling);
  const auto d0 = descriptors_of(pass.keypoints0), d1 = descriptors_of(pass.keypoints1);
  const auto s0 = scores_of(pass.keypoints0), s1 = scores_of(pass.keypoints1);
  pass.loss = multitask_loss(pass.batch, d0, d1, s0, s1, cfg.loss);
  return pass;
}

ModelParams branch_gradient(const ModelParams& params, const PairPass& pass, int branch) {
  ModelParams g = ModelParams::zeros(params.config);
  if (branch == 0)
    backward_from_keypoints(params, pass.state0, pass.keypoints0, pass.loss.descriptor_grad0, pass.loss.score_grad0, g);
  else
    backward_from_keypoints(params, pass.state1, pass.keypoints1, pass.loss.descriptor_grad1, pass.loss.score_grad1, g);
  return g;
}

ModelParams pair_gradient(const ModelParams& params, const PairPass& pass) {
  ModelParams g = ModelParams::zeros(params.config);
  backward_from_keypoints(params, pass.state0, pass.keypoints0, pass.loss.descriptor_grad0, pass.loss.score_grad0, g);
  backward_from_keypoints(params, pass.state1, pass.keypoints1, pass.loss.descriptor_grad1, pass.loss.score_grad1, g);
  return g;
}

TrainRecord make_record(int iter, const PairPass& pass) {
  TrainRecord r;
  r.iter = iter;
  r.total = pass.loss.total;
  r.lc = pass.loss.contrastive;
  r.ls0 = pass.loss.score0;
  r.ls1 = pass.loss.score1;
  r.npos = pass.batch.n_pos;
  r.nneg = pass.batch.n_neg;
  double sum = 0.0;
  int n = 0;
  for (const auto& p : pass.batch.pairs) {
    if (!p.label) continue;
    sum += pass.keypoints0.keypoints[p.i].score + pass.keypoints1.keypoints[p.j].score;
    n += 2;
  }
  r.mean_pos_score = n ? sum / n : 0.0;
  return r;
}

TrainRecord train_step(TrainState& state, const RenderedPair& pair, const DepthRange& range,
                       const TrainConfig& cfg) {
  const PairPass pass = run_pair(state.params, pair, range, cfg);
  check_batch_invariants(pass.batch);
  if (!std::isfinite(pass.loss.total))
    throw std::runtime_error("non-finite loss at iteration " + std::to_string(state.iteration) + "\n" +
                             dump_batch(pass));
  const ModelParams grad = pair_gradient(state.params, pass);
  auto p = state.params.blobs();
  auto v = state.velocity.blobs();
  const auto g = grad.blobs();
  for (std::size_t b = 0; b < p.size(); ++b)
    for (std::size_t i = 0; i < p[b]->size(); ++i) {
      double& vi = v[b]->values[i];
      vi = static_cast<float>(cfg.momentum * vi - cfg.learning_rate * g[b]->values[i]);
      p[b]->values[i] = static_cast<float>(p[b]->values[i] + vi);
    }
  TrainRecord rec = make_record(state.iteration, pass);
  ++state.iteration;
  return rec;
}

int pair_for_iteration(std::uint64_t seed, int iteration, int pair_count) {
  if (pair_count < 1) throw std::domain_error("train: dataset has no pairs");
  const int epoch = iteration / pair_count;
  std::vector<int> order(static_cast<std::size_t>(pair_count));
  std::iota(order.begin(), order.end(), 0);
  auto rng = derive_rng(seed, kShuffleStream, static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order[static_cast<std::size_t>(iteration % pair_count)];
}

TrainResult train(const TrainConfig& cfg, const Dataset& dataset, TrainState state,
                  const std::optional<std::filesystem::path>& out_dir,
                  const std::function<void(const TrainRecord&)>& on_step) {
  cfg.validate();
  if (dataset.pairs.empty()) throw std::runtime_error("train: dataset has no pairs");
  if (out_dir) std::filesystem::create_directories(*out_dir);
  TrainResult result;
  state.params.config.nms_radius = cfg.model.nms_radius;
  const int n = static_cast<int>(dataset.pairs.size());
  std::vector<int> order;
  int order_epoch = -1;
  while (state.iteration < cfg.iterations) {
    const int epoch = state.iteration / n;
    if (epoch != order_epoch) {
      order.resize(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      auto rng = derive_rng(cfg.seed, kShuffleStream, static_cast<std::uint64_t>(epoch));
      std::shuffle(order.begin(), order.end(), rng);
      order_epoch = epoch;
    }
    const auto& pair = dataset.pairs[static_cast<std::size_t>(order[static_cast<std::size_t>(state.iteration % n)])];
    const TrainRecord rec = train_step(state, pair, dataset.range, cfg);
    result.log.push_back(rec);
    if (on_step) on_step(rec);
    if (out_dir && cfg.checkpoint_interval > 0 && state.iteration % cfg.checkpoint_interval == 0 &&
        state.iteration < cfg.iterations) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%06d.kmnp", state.iteration);
      write_checkpoint(state.checkpoint(cfg.keypoints), *out_dir / name);
    }
  }
  if (out_dir) write_checkpoint(state.checkpoint(cfg.keypoints), *out_dir / "final.kmnp");
  result.state = std::move(state);
  return result;
}

}  // namespace keymatch3d
