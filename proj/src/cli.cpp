#include "keymatch3d/cli.hpp"

#include "keymatch3d/checkpoint.hpp"
#include "keymatch3d/dataset.hpp"
#include "keymatch3d/eval.hpp"
#include "keymatch3d/kv_config.hpp"
#include "keymatch3d/mesh.hpp"
#include "keymatch3d/train.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace keymatch3d {

namespace {

namespace fs = std::filesystem;
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

/// Raised for configuration mistakes that map to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonArgs {
  std::string config;
  std::string out;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

/// Loads the config file, applies --set overrides and the seed precedence
/// (flag > KEYMATCH3D_SEED > file), then checks keys against `allowed`.
KeyValues resolve_config(const CommonArgs& args, const std::set<std::string>& allowed) {
  if (!fs::exists(args.config)) throw UsageError("config file not found: " + args.config);
  KeyValues kv;
  try {
    kv = KeyValues::load(args.config);
    for (const auto& s : args.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
      kv.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (const char* env = std::getenv("KEYMATCH3D_SEED"); env && *env) kv.set("seed", env);
    if (args.seed) kv.set("seed", std::to_string(*args.seed));
    kv.require_known(allowed);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return kv;
}

void prepare_out(const CommonArgs& args, const KeyValues& resolved) {
  fs::create_directories(args.out);
  resolved.save(fs::path(args.out) / "config.txt");
}

SelectionMode parse_mode(const std::string& s) {
  if (s == "top-score") return SelectionMode::kTopScore;
  if (s == "random") return SelectionMode::kRandom;
  throw UsageError("mode must be top-score or random, got '" + s + "'");
}

DepthLookup parse_lookup(const std::string& s) {
  if (s == "nearest") return DepthLookup::kNearest;
  if (s == "bilinear") return DepthLookup::kBilinear;
  throw UsageError("depth_lookup must be nearest or bilinear, got '" + s + "'");
}

// ---------------------------------------------------------------- synth-pairs

const std::set<std::string> kSynthKeys = {
    "mesh", "count", "width", "height", "fx", "fy", "cx", "cy", "seed", "max_angle_deg", "max_translation_frac",
    "min_overlap", "noise", "noise_sigma_base", "noise_sigma_quadratic", "noise_dropout_prob",
    "noise_edge_shadow_width"};

void cmd_synth(const CommonArgs& args, std::ostream& out) {
  KeyValues kv = resolve_config(args, kSynthKeys);
  KeyValues r;
  r.set("mesh", kv.str("mesh", "builtin:engine"));
  r.set("count", std::to_string(kv.integer("count", 500)));
  r.set("width", std::to_string(kv.integer("width", 64)));
  r.set("height", std::to_string(kv.integer("height", 64)));
  r.set("fx", format_real(kv.real("fx", 56.0)));
  r.set("fy", format_real(kv.real("fy", 56.0)));
  r.set("cx", format_real(kv.real("cx", (r.integer("width") - 1) / 2.0)));
  r.set("cy", format_real(kv.real("cy", (r.integer("height") - 1) / 2.0)));
  r.set("seed", std::to_string(kv.u64("seed", 1)));
  r.set("max_angle_deg", format_real(kv.real("max_angle_deg", 20.0)));
  r.set("max_translation_frac", format_real(kv.real("max_translation_frac", 0.15)));
  r.set("min_overlap", format_real(kv.real("min_overlap", 0.2)));
  const bool noisy = kv.boolean("noise", false);
  r.set("noise", noisy ? "1" : "0");
  const NoiseParams nd;
  r.set("noise_sigma_base", format_real(kv.real("noise_sigma_base", nd.sigma_base)));
  r.set("noise_sigma_quadratic", format_real(kv.real("noise_sigma_quadratic", nd.sigma_quadratic)));
  r.set("noise_dropout_prob", format_real(kv.real("noise_dropout_prob", nd.dropout_prob)));
  r.set("noise_edge_shadow_width", std::to_string(kv.integer("noise_edge_shadow_width", nd.edge_shadow_width)));

  CameraIntrinsics K;
  K.width = static_cast<int>(r.integer("width"));
  K.height = static_cast<int>(r.integer("height"));
  K.fx = r.real("fx");
  K.fy = r.real("fy");
  K.cx = r.real("cx");
  K.cy = r.real("cy");
  K.validate();
  PairSettings ps;
  ps.count = static_cast<int>(r.integer("count"));
  ps.seed = r.u64("seed", 1);
  ps.max_angle = r.real("max_angle_deg") * kDegToRad;
  ps.max_translation_frac = r.real("max_translation_frac");
  ps.min_overlap = r.real("min_overlap");
  if (noisy) {
    NoiseParams n;
    n.sigma_base = r.real("noise_sigma_base");
    n.sigma_quadratic = r.real("noise_sigma_quadratic");
    n.dropout_prob = r.real("noise_dropout_prob");
    n.edge_shadow_width = static_cast<int>(r.integer("noise_edge_shadow_width"));
    ps.noise = n;
  }
  prepare_out(args, r);
  const TriangleMesh mesh = load_mesh(r.str("mesh"));
  const Dataset ds = synthesize_dataset(mesh, K, ps, args.threads);
  write_dataset(ds, args.out);
  out << "wrote " << ds.pairs.size() << " pairs to " << (fs::path(args.out) / "manifest.txt").string()
      << " (d_min=" << ds.range.d_min << ", d_max=" << ds.range.d_max << ")\n";
}

// ---------------------------------------------------------------------- train

const std::set<std::string> kTrainKeys = {
    "manifest", "iterations", "learning_rate", "momentum", "t", "tau_pos", "depth_lookup", "lambda_c",
    "lambda_s", "margin", "gamma", "seed", "checkpoint_interval", "descriptor_dim", "box_size", "pool_size",
    "nms_radius", "resume"};

void cmd_train(const CommonArgs& args, std::ostream& out) {
  KeyValues kv = resolve_config(args, kTrainKeys);
  const TrainConfig d;
  KeyValues r;
  r.set("manifest", kv.str("manifest"));
  r.set("iterations", std::to_string(kv.integer("iterations", d.iterations)));
  r.set("learning_rate", format_real(kv.real("learning_rate", d.learning_rate)));
  r.set("momentum", format_real(kv.real("momentum", d.momentum)));
  r.set("t", std::to_string(kv.integer("t", d.keypoints)));
  r.set("tau_pos", format_real(kv.real("tau_pos", d.sampling.tau_pos)));
  r.set("depth_lookup", kv.str("depth_lookup", "nearest"));
  r.set("lambda_c", format_real(kv.real("lambda_c", d.loss.lambda_c)));
  r.set("lambda_s", format_real(kv.real("lambda_s", d.loss.lambda_s)));
  r.set("margin", format_real(kv.real("margin", d.loss.margin)));
  r.set("gamma", format_real(kv.real("gamma", d.loss.gamma)));
  r.set("seed", std::to_string(kv.u64("seed", d.seed)));
  r.set("checkpoint_interval", std::to_string(kv.integer("checkpoint_interval", d.checkpoint_interval)));
  r.set("descriptor_dim", std::to_string(kv.integer("descriptor_dim", d.model.descriptor_dim)));
  r.set("box_size", std::to_string(kv.integer("box_size", d.model.box_size)));
  r.set("pool_size", std::to_string(kv.integer("pool_size", d.model.pool_size)));
  r.set("nms_radius", format_real(kv.real("nms_radius", d.model.nms_radius)));
  if (kv.has("resume")) r.set("resume", kv.str("resume"));

  TrainConfig cfg;
  cfg.manifest = r.str("manifest");
  cfg.iterations = static_cast<int>(r.integer("iterations"));
  cfg.learning_rate = r.real("learning_rate");
  cfg.momentum = r.real("momentum");
  cfg.keypoints = static_cast<int>(r.integer("t"));
  cfg.sampling.tau_pos = r.real("tau_pos");
  cfg.sampling.depth_lookup = parse_lookup(r.str("depth_lookup"));
  cfg.loss.lambda_c = r.real("lambda_c");
  cfg.loss.lambda_s = r.real("lambda_s");
  cfg.loss.margin = r.real("margin");
  cfg.loss.gamma = r.real("gamma");
  cfg.seed = r.u64("seed", 1);
  cfg.checkpoint_interval = static_cast<int>(r.integer("checkpoint_interval"));
  cfg.model.descriptor_dim = static_cast<int>(r.integer("descriptor_dim"));
  cfg.model.box_size = static_cast<int>(r.integer("box_size"));
  cfg.model.pool_size = static_cast<int>(r.integer("pool_size"));
  cfg.model.nms_radius = r.real("nms_radius");
  cfg.validate();

  prepare_out(args, r);
  const Dataset ds = read_dataset(cfg.manifest);
  TrainState state = r.has("resume") ? TrainState::from_checkpoint(read_checkpoint(r.str("resume")))
                                     : TrainState::fresh(cfg);
  const auto result = train(cfg, ds, std::move(state), fs::path(args.out));
  std::ofstream csv(fs::path(args.out) / "trainlog.csv");
  if (!csv) throw std::runtime_error("cannot write " + (fs::path(args.out) / "trainlog.csv").string());
  write_train_log(result.log, csv);
  out << "trained " << result.log.size() << " iterations; final checkpoint "
      << (fs::path(args.out) / "final.kmnp").string() << "\n";
}

// ----------------------------------------------------- shared eval plumbing

struct Extraction {
  std::optional<Checkpoint> ckpt;
  KeypointExtractor extractor;
};

Extraction make_extraction(const KeyValues& r, const DepthRange& range, SelectionMode mode) {
  Extraction e;
  const std::string detector = r.str("detector");
  const int t = static_cast<int>(r.integer("t"));
  if (detector == "learned") {
    e.ckpt = read_checkpoint(r.str("checkpoint"));
    e.ckpt->params.config.nms_radius = r.real("nms_radius");
    e.extractor = learned_extractor(e.ckpt->params, range, t, mode);
  } else if (detector == "baseline") {
    e.extractor = baseline_extractor(range, t, static_cast<int>(r.integer("box_size")));
  } else {
    throw UsageError("detector must be learned or baseline, got '" + detector + "'");
  }
  return e;
}

void set_detector_keys(const KeyValues& kv, KeyValues& r) {
  r.set("detector", kv.str("detector", "learned"));
  if (r.str("detector") == "learned") r.set("checkpoint", kv.str("checkpoint"));
  r.set("t", std::to_string(kv.integer("t", 16)));
  r.set("nms_radius", format_real(kv.real("nms_radius", kFeatureStride)));
  r.set("box_size", std::to_string(kv.integer("box_size", 32)));
  r.set("seed", std::to_string(kv.u64("seed", 1)));
}

std::vector<View> take_views(const Dataset& ds, long long n) {
  auto views = ds.first_views();
  if (n > 0 && static_cast<std::size_t>(n) < views.size()) views.resize(static_cast<std::size_t>(n));
  return views;
}

// ----------------------------------------------------------------- build-repo

const std::set<std::string> kRepoKeys = {"checkpoint", "manifest", "views", "t", "seed", "detector", "box_size",
                                         "nms_radius"};

void cmd_build_repo(const CommonArgs& args, std::ostream& out) {
  KeyValues kv = resolve_config(args, kRepoKeys);
  KeyValues r;
  r.set("manifest", kv.str("manifest"));
  r.set("views", std::to_string(kv.integer("views", 50)));
  set_detector_keys(kv, r);
  prepare_out(args, r);
  const Dataset ds = read_dataset(r.str("manifest"));
  const Extraction ex = make_extraction(r, ds.range, SelectionMode::kTopScore);
  const Repository repo = build_repository(ex.extractor, take_views(ds, r.integer("views")), ds.intrinsics,
                                           r.u64("seed", 1));
  write_repository(repo, fs::path(args.out) / "repository.kmrp");
  out << "repository: " << repo.size() << " entries, d=" << repo.dim << "\n";
}

// ----------------------------------------------------------------------- eval

const std::set<std::string> kEvalKeys = {"checkpoint", "repository", "manifest", "tau_eval", "mode", "t", "seed",
                                         "views", "detector", "box_size", "nms_radius"};

void cmd_eval(const CommonArgs& args, std::ostream& out) {
  KeyValues kv = resolve_config(args, kEvalKeys);
  KeyValues r;
  r.set("manifest", kv.str("manifest"));
  r.set("repository", kv.str("repository"));
  r.set("mode", kv.str("mode", "top-score"));
  r.set("views", std::to_string(kv.integer("views", 0)));
  set_detector_keys(kv, r);
  const Dataset ds = read_dataset(r.str("manifest"));
  r.set("tau_eval", format_real(kv.real("tau_eval", ds.settings.noise ? 0.10 : 0.05)));
  prepare_out(args, r);
  const SelectionMode mode = parse_mode(r.str("mode"));
  const Extraction ex = make_extraction(r, ds.range, mode);
  const Repository repo = read_repository(r.str("repository"));
  const auto views = take_views(ds, r.integer("views"));
  const EvalSummary s = evaluate(ex.extractor, views, ds.intrinsics, repo, r.real("tau_eval"), r.u64("seed", 1));
  std::ofstream csv(fs::path(args.out) / "results.csv");
  if (!csv) throw std::runtime_error("cannot write results.csv");
  write_eval_csv(s, csv);
  KeyValues summary;
  summary.set("views", std::to_string(views.size()));
  summary.set("queries", std::to_string(s.queries));
  summary.set("true_matches", std::to_string(s.true_matches));
  summary.set("accuracy", format_real(s.accuracy()));
  summary.save(fs::path(args.out) / "summary.txt");
  out << "accuracy " << s.accuracy() << " (" << s.true_matches << "/" << s.queries << ")\n";
}

// ---------------------------------------------------------------------- match

const std::set<std::string> kMatchKeys = {"checkpoint", "manifest", "pair", "t", "seed", "tau_eval", "detector",
                                          "box_size", "nms_radius", "mode"};

void cmd_match(const CommonArgs& args, std::ostream& out) {
  KeyValues kv = resolve_config(args, kMatchKeys);
  KeyValues r;
  r.set("manifest", kv.str("manifest"));
  r.set("pair", std::to_string(kv.integer("pair", 0)));
  r.set("mode", kv.str("mode", "top-score"));
  set_detector_keys(kv, r);
  const Dataset ds = read_dataset(r.str("manifest"));
  r.set("tau_eval", format_real(kv.real("tau_eval", ds.settings.noise ? 0.10 : 0.05)));
  prepare_out(args, r);
  const auto idx = r.integer("pair");
  if (idx < 0 || static_cast<std::size_t>(idx) >= ds.pairs.size())
    throw std::domain_error("pair index " + std::to_string(idx) + " out of range");
  const RenderedPair& p = ds.pairs[static_cast<std::size_t>(idx)];
  const Extraction ex = make_extraction(r, ds.range, parse_mode(r.str("mode")));
  const View va{p.depth_a, p.pose_a}, vb{p.depth_b, p.pose_b};
  auto rng_b = derive_rng(r.u64("seed", 1), 0x4D415443, 1);
  const KeypointSet kb = ex.extractor(vb, rng_b);
  const auto wb = lift_keypoints(kb, vb.depth, vb.pose, ds.intrinsics, SamplingConfig{});
  Repository repo;
  std::vector<Point2> repo_pixels;
  for (std::size_t k = 0; k < kb.size(); ++k)
    if (wb[k]) {
      repo.add(kb.keypoints[k].descriptor, *wb[k], 1);
      repo_pixels.push_back(kb.keypoints[k].x);
    }
  if (repo.size() == 0) throw std::runtime_error("match: second view produced no valid keypoints");
  auto rng_a = derive_rng(r.u64("seed", 1), 0x4D415443, 0);
  const MatchResult m = match_view(ex.extractor, va, ds.intrinsics, repo, r.real("tau_eval"), rng_a);
  std::vector<DrawnMatch> drawn;
  std::ofstream csv(fs::path(args.out) / "matches.csv");
  csv << "xa,ya,xb,yb,descriptor_distance,distance3d,is_true\n";
  for (const auto& q : m.matches) {
    const Point2& xb = repo_pixels[static_cast<std::size_t>(q.repo_index)];
    drawn.push_back({q.x, xb, q.is_true});
    csv << q.x.x() << ',' << q.x.y() << ',' << xb.x() << ',' << xb.y() << ',' << q.descriptor_distance << ','
        << q.distance3d << ',' << (q.is_true ? 1 : 0) << '\n';
  }
  write_ppm(render_matches(va.depth, vb.depth, drawn), fs::path(args.out) / "matches.ppm");
  out << m.true_matches() << "/" << m.queries() << " true matches\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"keymatch3d: joint keypoint detector / descriptor learning on depth images", "keymatch3d"};
  app.require_subcommand(1);
  CommonArgs args;
  std::uint64_t seed_flag = 0;

  std::map<CLI::App*, std::function<void(const CommonArgs&, std::ostream&)>> handlers;
  auto add = [&](const char* name, const char* desc, std::function<void(const CommonArgs&, std::ostream&)> fn) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", args.config, "flat key=value config file")->required();
    sub->add_option("--out", args.out, "output directory")->required();
    sub->add_option("--set", args.sets, "override a config key (key=value), repeatable");
    sub->add_option("--seed", seed_flag, "global seed; wins over KEYMATCH3D_SEED and the config");
    sub->add_option("--threads", args.threads, "worker threads where supported")->check(CLI::PositiveNumber);
    handlers[sub] = std::move(fn);
  };
  add("synth-pairs", "render pose-annotated depth image pairs from a mesh", cmd_synth);
  add("train", "train the detector/descriptor network on a dataset", cmd_train);
  add("build-repo", "build a descriptor repository from dataset views", cmd_build_repo);
  add("eval", "match test views against a repository", cmd_eval);
  add("match", "visualize matches between the two views of a pair", cmd_match);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  for (auto& [sub, fn] : handlers) {
    if (!sub->parsed()) continue;
    if (sub->count("--seed")) args.seed = seed_flag;
    try {
      fn(args, out);
      return kExitOk;
    } catch (const UsageError& e) {
      err << "keymatch3d " << sub->get_name() << ": " << e.what() << "\n";
      return kExitUsage;
    } catch (const std::invalid_argument& e) {
      err << "keymatch3d " << sub->get_name() << ": " << e.what() << "\n";
      return kExitUsage;
    } catch (const std::exception& e) {
      err << "keymatch3d " << sub->get_name() << ": " << e.what() << "\n";
      return kExitData;
    }
  }
  return kExitUsage;
}

}  // namespace keymatch3d
