// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// the number of failed criteria.

#include "keymatch3d/checkpoint.hpp"
#include "keymatch3d/eval.hpp"
#include "keymatch3d/loss.hpp"
#include "keymatch3d/train.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

using namespace keymatch3d;
using namespace keymatch3d::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s [%d] %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// ---------------------------------------------------------------------------
// 1. Finite-difference gradients

CameraIntrinsics tiny_intrinsics() {
  CameraIntrinsics K;
  K.width = K.height = 16;
  K.fx = K.fy = 24;
  K.cx = K.cy = 7.5;
  return K;
}

// Loss of a pair with keypoint cells and pairing frozen.
double frozen_loss(const ModelParams& p, const PairPass& ref, const LossConfig& lc) {
  const auto s0 = forward(p, ref.state0.input), s1 = forward(p, ref.state1.input);
  std::vector<Eigen::VectorXd> d0, d1;
  std::vector<double> sc0, sc1;
  for (const auto& k : ref.keypoints0.keypoints) {
    const auto kp = make_keypoint(p, s0, k.cell);
    d0.push_back(kp.descriptor);
    sc0.push_back(kp.score);
  }
  for (const auto& k : ref.keypoints1.keypoints) {
    const auto kp = make_keypoint(p, s1, k.cell);
    d1.push_back(kp.descriptor);
    sc1.push_back(kp.score);
  }
  return multitask_loss(ref.batch, d0, d1, sc0, sc1, lc).total;
}

// Max relative error of the analytic pair gradient over `indices` of the
// flattened parameters (all when empty).
double pair_fd_error(const ModelParams& params, const PairPass& pass, const TrainConfig& cfg, int subset,
                     std::mt19937_64& rng, std::size_t* checked) {
  const ModelParams grad = pair_gradient(params, pass);
  ModelParams probe = params;
  auto pb = probe.blobs();
  const auto gb = grad.blobs();
  std::vector<std::pair<int, int>> idx;
  for (std::size_t b = 0; b < pb.size(); ++b)
    for (std::size_t i = 0; i < pb[b]->size(); ++i) idx.emplace_back(static_cast<int>(b), static_cast<int>(i));
  if (subset > 0 && subset < static_cast<int>(idx.size())) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(subset));
  }
  double worst = 0;
  for (const auto& [b, i] : idx) {
    double& x = pb[b]->values[i];
    const double num = central_difference([&] { return frozen_loss(probe, pass, cfg.loss); }, x);
    worst = std::max(worst, relative_error(gb[b]->values[i], num));
  }
  *checked = idx.size();
  return worst;
}

// A pair whose frozen batch has both classes present.
PairPass fd_pass(const ModelParams& params, const Dataset& ds, const TrainConfig& cfg) {
  for (const auto& pr : ds.pairs) {
    auto pass = run_pair(params, pr, ds.range, cfg);
    if (pass.batch.n_pos > 0 && pass.batch.negative_pairs() > 0) return pass;
  }
  throw std::runtime_error("no pair with both positive and negative pairs");
}

double loss_fd_error(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_int_distribution<int> nd(1, 8), nn(2, 20);
  double worst = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int d = nd(rng), n = nn(rng);
    std::vector<Eigen::VectorXd> f0(n), f1(n);
    for (auto* f : {&f0, &f1})
      for (auto& v : *f) {
        v.resize(d);
        for (int k = 0; k < d; ++k) v[k] = 0.4 * u(rng);
      }
    LiftedKeypoints w0, w1;
    for (int k = 0; k < n; ++k) {
      w0.emplace_back(Point3(u(rng), u(rng), u(rng)) * 0.05);
      w1.emplace_back(Point3(u(rng), u(rng), u(rng)) * 0.05);
    }
    const auto batch = make_pairs(w0, w1, {0.04});
    const auto res = contrastive_loss(batch, f0, f1, 1.0);
    for (int side = 0; side < 2; ++side) {
      auto& f = side ? f1 : f0;
      const auto& g = side ? res.grad1 : res.grad0;
      for (int k = 0; k < n; ++k)
        for (int c = 0; c < d; ++c) {
          const double num = central_difference([&] { return contrastive_loss(batch, f0, f1, 1.0).loss; }, f[k][c]);
          worst = std::max(worst, relative_error(g[k][c], num));
        }
    }
    std::vector<double> s(n);
    std::vector<int> labels(n);
    std::uniform_real_distribution<double> us(0.05, 0.95);
    for (int k = 0; k < n; ++k) {
      s[k] = us(rng);
      labels[k] = u(rng) > 0;
    }
    const int npos = static_cast<int>(std::count(labels.begin(), labels.end(), 1));
    const auto sr = score_loss(s, labels, npos, 0.7);
    for (int k = 0; k < n; ++k) {
      const double num = central_difference([&] { return score_loss(s, labels, npos, 0.7).loss; }, s[k]);
      worst = std::max(worst, relative_error(sr.grad[k], num));
    }
  }
  return worst;
}

void criterion_fd() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(11);
  PairSettings ps;
  ps.count = 40;
  ps.seed = 3;
  const auto ds = synthesize_dataset(make_engine_mesh(), tiny_intrinsics(), ps);
  TrainConfig cfg;
  cfg.keypoints = 3;
  cfg.model.nms_radius = 0;

  ModelConfig reduced;
  reduced.channels = {4, 6, 8, 8};
  reduced.descriptor_dim = 8;
  // Random biases keep pre-activations off the ReLU kink over the empty background.
  auto jitter = [&](ModelParams p) {
    for (auto& c : p.conv) fill_random(c.bias, rng, -0.1, 0.1);
    return p;
  };
  const auto small = jitter(ModelParams::initialize(reduced, 5));
  std::size_t n_small = 0, n_full = 0;
  const double e_small = pair_fd_error(small, fd_pass(small, ds, cfg), cfg, 0, rng, &n_small);
  const auto full = jitter(ModelParams::initialize(ModelConfig{}, 5));
  const double e_full = pair_fd_error(full, fd_pass(full, ds, cfg), cfg, 1500, rng, &n_full);
  const double e_loss = loss_fd_error(rng);
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "end-to-end max rel err " << fmt("%.2e", e_small) << " over all " << n_small << " params (reduced width), "
    << fmt("%.2e", e_full) << " over " << n_full << " sampled params (full width); losses " << fmt("%.2e", e_loss)
    << "; " << fmt("%.1f", secs) << " s";
  report(1, "finite-difference gradients", e_small < 1e-4 && e_full < 1e-4 && e_loss < 1e-6 && secs < 60, d.str());
}

// ---------------------------------------------------------------------------
// 2. Gradient routing

bool all_zero(const Blob& b) {
  return std::all_of(b.values.begin(), b.values.end(), [](double v) { return v == 0.0; });
}
bool any_nonzero(const Blob& b) { return !all_zero(b); }

void criterion_routing() {
  PairSettings ps;
  ps.count = 6;
  ps.seed = 4;
  const auto ds = synthesize_dataset(make_engine_mesh(), test_intrinsics(), ps);
  TrainConfig cfg;
  const auto params = ModelParams::initialize(ModelConfig{}, 9);
  bool ok = true;
  std::string why;
  for (std::size_t p = 0; p < ds.pairs.size(); ++p) {
    cfg.loss = LossConfig{};
    cfg.loss.lambda_c = 0;
    auto g = pair_gradient(params, run_pair(params, ds.pairs[p], ds.range, cfg));
    if (!all_zero(g.fc.weight) || !all_zero(g.fc.bias)) ok = false, why = "descriptor head moved with lambda_c=0";
    cfg.loss = LossConfig{};
    cfg.loss.lambda_s = 0;
    g = pair_gradient(params, run_pair(params, ds.pairs[p], ds.range, cfg));
    if (!all_zero(g.score.weight) || !all_zero(g.score.bias)) ok = false, why = "score head moved with lambda_s=0";
    if (!any_nonzero(g.fc.weight)) ok = false, why = "contrastive gradient unexpectedly empty";

    // Coordinates are constants: shifting them leaves every gradient bit-identical.
    cfg.loss = LossConfig{};
    auto pass = run_pair(params, ds.pairs[p], ds.range, cfg);
    const auto ref = pair_gradient(params, pass);
    for (auto* ks : {&pass.keypoints0, &pass.keypoints1})
      for (auto& k : ks->keypoints) k.x += Point2(3.25, -1.5);
    for (auto& w : pass.batch.world0)
      if (w) *w += Point3(0.1, 0.2, 0.3);
    if (!(pair_gradient(params, pass) == ref)) ok = false, why = "gradient depends on keypoint coordinates";
    if (ref.parameter_count() != params.parameter_count()) ok = false, why = "gradient has extra entries";
  }
  report(2, "gradient routing", ok,
         ok ? "lambda_c=0: fc grads 0; lambda_s=0: score grads 0; coordinate shifts change nothing (6 pairs)" : why);
}

// ---------------------------------------------------------------------------
// 3. Sampling layer

LiftedKeypoints random_lifted(int n, std::mt19937_64& rng, bool grid) {
  std::uniform_int_distribution<int> cell(0, 3);
  std::uniform_real_distribution<double> u(0, 0.1);
  std::bernoulli_distribution invalid(0.15);
  LiftedKeypoints out;
  for (int k = 0; k < n; ++k) {
    if (invalid(rng))
      out.emplace_back(std::nullopt);
    else if (grid)
      out.emplace_back(Point3(cell(rng), cell(rng), 0) * 0.01);
    else
      out.emplace_back(Point3(u(rng), u(rng), u(rng)));
  }
  return out;
}

// Independent recount of the batch invariants.
bool batch_ok(const PairBatch& b, std::size_t n0, std::size_t n1) {
  std::set<int> is, js;
  int pos = 0;
  for (const auto& p : b.pairs) {
    if (!is.insert(p.i).second || !js.insert(p.j).second) return false;
    pos += p.label;
  }
  const int unpaired = static_cast<int>(n0 - is.size() + n1 - js.size());
  const int n = static_cast<int>(b.pairs.size()) + unpaired;
  return pos == b.n_pos && b.n_pos + b.n_neg == n;
}

void criterion_sampling(int smoke_iterations) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> count(0, 12);
  int agree = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const bool grid = trial % 2 == 0;
    const auto a = random_lifted(count(rng), rng, grid), b = random_lifted(count(rng), rng, grid);
    const double tau = grid ? 0.015 : 0.03;
    const auto got = make_pairs(a, b, {tau});
    const auto want = greedy_pairs_oracle(a, b, tau);
    bool same = got.pairs.size() == want.size();
    for (std::size_t k = 0; same && k < want.size(); ++k)
      same = got.pairs[k].i == want[k].i && got.pairs[k].j == want[k].j && got.pairs[k].label == want[k].label;
    agree += same;
  }

  PairSettings ps;
  ps.count = 10;
  ps.seed = 6;
  const auto ds = synthesize_dataset(make_engine_mesh(), test_intrinsics(), ps);
  TrainConfig cfg;
  cfg.iterations = smoke_iterations;
  cfg.checkpoint_interval = 0;
  auto state = TrainState::fresh(cfg);
  int good = 0;
  for (int it = 0; it < smoke_iterations; ++it) {
    const auto& pair = ds.pairs[pair_for_iteration(cfg.seed, it, static_cast<int>(ds.pairs.size()))];
    const auto pass = run_pair(state.params, pair, ds.range, cfg);
    good += batch_ok(pass.batch, pass.keypoints0.size(), pass.keypoints1.size());
    train_step(state, pair, ds.range, cfg);
  }
  std::ostringstream d;
  d << "greedy == oracle on " << agree << "/200 instances; invariants held on " << good << "/" << smoke_iterations
    << " smoke iterations";
  report(3, "sampling layer", agree == 200 && good == smoke_iterations, d.str());
}

// ---------------------------------------------------------------------------
// 4. Closed-form losses

void criterion_closed_forms() {
  double worst = 0;
  auto batch_of = [](int label) {
    PairBatch b;
    b.pairs.push_back({0, 0, label ? 0.0 : 1.0, label});
    b.labels0 = b.labels1 = {label};
    b.n_pos = label;
    b.n_neg = 1 - label;
    return b;
  };
  const std::vector<Eigen::VectorXd> f{Eigen::VectorXd::Constant(4, 0.3)};
  worst = std::max(worst, std::abs(contrastive_loss(batch_of(1), f, f, 1.0).loss - 0.0));
  worst = std::max(worst, std::abs(contrastive_loss(batch_of(0), f, f, 1.0).loss - 0.5));
  const std::vector<Eigen::VectorXd> g{f[0] + Eigen::VectorXd::Unit(4, 2) * 1.0};
  worst = std::max(worst, std::abs(contrastive_loss(batch_of(0), f, g, 1.0).loss - 0.0));

  const std::vector<double> none{0.3, 0.7};
  const std::vector<int> zeros{0, 0};
  worst = std::max(worst, std::abs(score_loss(none, zeros, 0, 1.0).loss - 1.0));
  const std::vector<double> einv{std::exp(-1.0)};
  const std::vector<int> one{1};
  worst = std::max(worst, std::abs(score_loss(einv, one, 1, 1.0).loss - 1.0));
  for (int npos = 1; npos <= 6; ++npos) {
    std::vector<double> s(static_cast<std::size_t>(npos), 1.0 - 1e-15);
    std::vector<int> l(static_cast<std::size_t>(npos), 1);
    worst = std::max(worst, std::abs(score_loss(s, l, npos, 1.0).loss - 1.0 / (1 + npos)));
  }
  report(4, "closed-form losses", worst < 1e-12, "max deviation " + fmt("%.2e", worst) + " (0, 0.5, 1, 1/(1+N_pos))");
}

// ---------------------------------------------------------------------------
// 5. Geometry and rendering

void criterion_geometry() {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1, 1), z(0.2, 10);
  const auto K = test_intrinsics();
  double proj = 0, se3 = 0;
  for (int i = 0; i < 2000; ++i) {
    const Point3 p(u(rng) * 3, u(rng) * 3, z(rng));
    proj = std::max(proj, (backproject(K, project(K, p), p.z()) - p).norm());
    const auto g = sample_perturbation(rng, 3.0, 5.0), h = sample_perturbation(rng, 3.0, 5.0);
    const Point3 q(u(rng), u(rng), u(rng));
    se3 = std::max(se3, (transform_point(invert(g), transform_point(g, q)) - q).norm());
    se3 = std::max(se3, (transform_point(compose(g, h), q) - transform_point(g, transform_point(h, q))).norm());
    se3 = std::max(se3, (compose(g, invert(g)).rotation() - Mat3::Identity()).norm());
  }
  double render = 0;
  int valid_mismatch = 0, meshes = 0;
  CameraIntrinsics k2;
  k2.width = 48;
  k2.height = 40;
  k2.fx = k2.fy = 40;
  k2.cx = 23.5;
  k2.cy = 19.5;
  for (int n : {1, 5, 20, 60, 120, 200}) {
    const auto mesh = random_mesh(n, rng);
    const auto pose = sample_perturbation(rng, 0.2, 0.1);
    const auto depth = render_depth(mesh, pose, k2);
    for (int y = 0; y < k2.height; ++y)
      for (int x = 0; x < k2.width; ++x) {
        const double want = raycast_depth(mesh, pose, k2, x, y);
        const double got = depth.at(x, y);
        if ((want > 0) != (got > 0)) ++valid_mismatch;
        else if (want > 0) render = std::max(render, std::abs(got - want));
      }
    ++meshes;
  }
  std::ostringstream d;
  d << "projection " << fmt("%.1e", proj) << ", SE(3) " << fmt("%.1e", se3) << ", render vs ray cast "
    << fmt("%.1e", render) << " m on " << meshes << " meshes (<=200 tris), " << valid_mismatch << " validity mismatches";
  report(5, "geometry and rendering", proj < 1e-9 && se3 < 1e-9 && render < 1e-6 && valid_mismatch == 0, d.str());
}

// ---------------------------------------------------------------------------
// 6, 7. Desk-scale learning effect and ablations

struct DeskRun {
  double npos_first = 0, npos_last = 0;
  double acc_top = 0, acc_random = 0, acc_baseline = 0;
};

CameraIntrinsics desk_intrinsics() {
  CameraIntrinsics K;
  K.width = K.height = 64;
  K.fx = K.fy = 56;
  K.cx = K.cy = 31.5;
  return K;
}

constexpr int kDeskPairs = 500;
constexpr int kDeskIterations = 2000;
constexpr int kDeskT = 16;
constexpr int kRepoViews = 50;
constexpr int kTestViews = 50;
constexpr double kTauEval = 0.05;

struct DeskData {
  Dataset train;
  std::vector<View> repo_views;
  std::vector<View> test_views;
};

DeskData desk_data(std::uint64_t seed) {
  const auto mesh = make_engine_mesh();
  PairSettings ps;
  ps.count = kDeskPairs;
  ps.seed = seed;
  DeskData d;
  d.train = synthesize_dataset(mesh, desk_intrinsics(), ps);
  d.repo_views = d.train.first_views();
  d.repo_views.resize(kRepoViews);
  PairSettings pt = ps;
  pt.count = kTestViews;
  pt.seed = seed + 1000;
  d.test_views = synthesize_dataset(mesh, desk_intrinsics(), pt).first_views();
  return d;
}

double accuracy(const KeypointExtractor& ex, const DeskData& d, std::uint64_t seed) {
  const auto repo = build_repository(ex, d.repo_views, desk_intrinsics(), seed);
  return evaluate(ex, d.test_views, desk_intrinsics(), repo, kTauEval, seed).accuracy();
}

DeskRun desk_run(const DeskData& d, std::uint64_t seed, double lambda_s, bool with_baselines) {
  TrainConfig cfg;
  cfg.iterations = kDeskIterations;
  cfg.keypoints = kDeskT;
  cfg.seed = seed;
  cfg.checkpoint_interval = 0;
  cfg.loss.lambda_s = lambda_s;
  const auto res = train(cfg, d.train, TrainState::fresh(cfg));
  DeskRun r;
  const std::size_t k = std::max<std::size_t>(1, res.log.size() / 10);
  std::vector<double> first, last;
  for (std::size_t i = 0; i < k; ++i) {
    first.push_back(res.log[i].npos);
    last.push_back(res.log[res.log.size() - k + i].npos);
  }
  r.npos_first = median(first);
  r.npos_last = median(last);
  const auto& P = res.state.params;
  r.acc_top = accuracy(learned_extractor(P, d.train.range, kDeskT, SelectionMode::kTopScore), d, seed);
  if (with_baselines) {
    r.acc_random = accuracy(learned_extractor(P, d.train.range, kDeskT, SelectionMode::kRandom), d, seed);
    r.acc_baseline = accuracy(baseline_extractor(d.train.range, kDeskT, P.config.box_size), d, seed);
  }
  return r;
}

void criteria_desk() {
  const auto t0 = Clock::now();
  std::vector<DeskData> data;
  std::vector<DeskRun> full;
  for (std::uint64_t seed : {1, 2, 3}) {
    data.push_back(desk_data(seed));
    full.push_back(desk_run(data.back(), seed, 1.0, true));
    std::fprintf(stderr, "  seed %llu: N_pos %.1f -> %.1f, acc top %.4f random %.4f baseline %.4f\n",
                 static_cast<unsigned long long>(seed), full.back().npos_first, full.back().npos_last,
                 full.back().acc_top, full.back().acc_random, full.back().acc_baseline);
  }
  const double desk_secs = seconds_since(t0);
  std::vector<double> ratio, acc, base, rnd;
  for (const auto& r : full) {
    ratio.push_back(r.npos_last / std::max(r.npos_first, 1e-9));
    acc.push_back(r.acc_top);
    base.push_back(r.acc_baseline);
    rnd.push_back(r.acc_random);
  }
  const double m_ratio = median(ratio), m_acc = median(acc), m_base = median(base), m_rnd = median(rnd);
  const bool fast = desk_secs < 1800;
  std::ostringstream a, b;
  a << "median N_pos last/first 10% = " << fmt("%.2f", m_ratio) << " (need >= 1.5); " << fmt("%.0f", desk_secs)
    << " s for 3 seeds";
  report(6, "learning effect (a) N_pos growth", m_ratio >= 1.5 && fast, a.str());
  b << "median accuracy@5cm " << fmt("%.4f", m_acc) << " vs baseline " << fmt("%.4f", m_base) << " = "
    << fmt("%.2f", m_acc / std::max(m_base, 1e-9)) << "x (need >= 3)";
  report(6, "learning effect (b) accuracy vs baseline", m_acc >= 3 * m_base && fast, b.str());

  std::vector<double> noscore;
  for (std::size_t s = 0; s < data.size(); ++s) {
    noscore.push_back(desk_run(data[s], s + 1, 0.0, false).acc_top);
    std::fprintf(stderr, "  seed %zu lambda_s=0: acc top %.4f\n", s + 1, noscore.back());
  }
  const double m_noscore = median(noscore);
  std::ostringstream c, e;
  c << "median accuracy full " << fmt("%.4f", m_acc) << " vs lambda_s=0 " << fmt("%.4f", m_noscore);
  report(7, "ablation: score loss helps", m_acc > m_noscore, c.str());
  e << "median accuracy top-score " << fmt("%.4f", m_acc) << " vs random keypoints " << fmt("%.4f", m_rnd);
  report(7, "ablation: top-score beats random keypoints", m_acc > m_rnd, e.str());
}

// ---------------------------------------------------------------------------
// 8. Determinism and formats

void criterion_determinism() {
  const auto dir = fs::temp_directory_path() / "keymatch3d_acceptance";
  fs::remove_all(dir);
  PairSettings ps;
  ps.count = 8;
  ps.seed = 7;
  const auto ds = synthesize_dataset(make_engine_mesh(), test_intrinsics(), ps);
  const auto ds2 = synthesize_dataset(make_engine_mesh(), test_intrinsics(), ps, 3);
  bool data_same = ds.pairs.size() == ds2.pairs.size();
  for (std::size_t i = 0; data_same && i < ds.pairs.size(); ++i)
    data_same = ds.pairs[i].depth_a == ds2.pairs[i].depth_a && ds.pairs[i].depth_b == ds2.pairs[i].depth_b &&
                ds.pairs[i].pose_b == ds2.pairs[i].pose_b;

  TrainConfig cfg;
  cfg.iterations = 20;
  cfg.checkpoint_interval = 10;
  auto run = [&](const std::string& name) {
    const auto out = dir / name;
    const auto res = train(cfg, ds, TrainState::fresh(cfg), out);
    std::ofstream(out / "trainlog.csv") << [&] {
      std::ostringstream os;
      write_train_log(res.log, os);
      return os.str();
    }();
    const auto ex = learned_extractor(res.state.params, ds.range, cfg.keypoints, SelectionMode::kTopScore);
    const auto repo = build_repository(ex, ds.first_views(), ds.intrinsics);
    write_repository(repo, out / "repository.kmrp");
    std::ofstream csv(out / "results.csv");
    write_eval_csv(evaluate(ex, ds.first_views(), ds.intrinsics, repo, kTauEval), csv);
    return out;
  };
  const auto a = run("a"), b = run("b");
  bool identical = true;
  for (const char* f : {"final.kmnp", "checkpoint_000010.kmnp", "trainlog.csv", "repository.kmrp", "results.csv"})
    identical = identical && !slurp(a / f).empty() && slurp(a / f) == slurp(b / f);

  // Round trips: read then write again reproduces the bytes.
  const auto ck = read_checkpoint(a / "final.kmnp");
  write_checkpoint(ck, dir / "ck.kmnp");
  const auto repo = read_repository(a / "repository.kmrp");
  write_repository(repo, dir / "re.kmrp");
  write_depth(ds.pairs[0].depth_a, dir / "d.dpth");
  const bool trips = slurp(dir / "ck.kmnp") == slurp(a / "final.kmnp") &&
                     slurp(dir / "re.kmrp") == slurp(a / "repository.kmrp") &&
                     read_depth(dir / "d.dpth") == ds.pairs[0].depth_a;

  // Resume from the mid-run checkpoint lands on the same final state.
  const auto resumed = train(cfg, ds, TrainState::from_checkpoint(read_checkpoint(a / "checkpoint_000010.kmnp")));
  const bool resume = resumed.state.params == ck.params;
  fs::remove_all(dir);
  std::ostringstream d;
  d << "datasets " << (data_same ? "identical" : "DIFFER") << " across thread counts; checkpoints/repository/CSVs "
    << (identical ? "bit-identical" : "DIFFER") << " across runs; round trips " << (trips ? "exact" : "NOT exact")
    << "; resume " << (resume ? "identical" : "DIFFERS");
  report(8, "determinism and formats", data_same && identical && trips && resume, d.str());
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
  criterion_fd();
  criterion_routing();
  criterion_sampling(quick ? 20 : 200);
  criterion_closed_forms();
  criterion_geometry();
  if (!quick) criteria_desk();
  criterion_determinism();
  return failures;
}
