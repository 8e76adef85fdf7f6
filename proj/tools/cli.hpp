#pragma once

// agdet command-line driver. Subcommands:
//   sample   fps / attention-guided sampling of a PLY cloud (with lambda sweep)
//   eval     per-class AP and mAP of detection JSON files
//   synth    deterministic synthetic scenes
//   perturb  Gaussian coordinate noise
//   agdemo   seeded decoder forward with a chosen feature aggregation strategy
//   bench    timing of fps / ag / ag-oracle over N and k grids
//
// Exit codes: 0 success, 1 internal check failed, 2 validation error,
// 3 I/O or parse error.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "agdet/agdet.hpp"

namespace agdet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitIo = 3;

namespace fs = std::filesystem;

namespace detail {

inline std::string lambda_tag(double lambda) {
  std::ostringstream s;
  s << "_lambda" << io::format_double(lambda);
  return s.str();
}

inline PointCloud subset(const PointCloud& cloud, const SampleSet& s) {
  std::vector<Vec3> pts;
  for (std::size_t i : s.indices()) pts.push_back(cloud[i]);
  return PointCloud(std::move(pts));
}

inline AttentionField subset(const AttentionField& field, const SampleSet& s) {
  std::vector<double> w;
  for (std::size_t i : s.indices()) w.push_back(field[i]);
  return AttentionField(std::move(w));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

struct SampleOptions {
  fs::path cloud;
  std::optional<fs::path> attention;
  std::size_t k = kDefaultQueryCount;
  std::vector<double> lambdas{kDefaultLambdaDist};
  std::string method = "ag";
  double epsilon = kDefaultEpsilon;
  std::optional<std::size_t> start;
  fs::path out;
};

/// Writes `<out>[_lambda<v>].indices.txt` and `<out>[_lambda<v>].ply` per run.
/// The lambda suffix is added only when several lambdas are swept.
inline void cmd_sample(const SampleOptions& opt, std::ostream& log) {
  io::FileBundle bundle;
  bundle.cloud_path = opt.cloud;
  bundle.attention_path = opt.attention;
  io::load(bundle);
  const PointCloud& cloud = *bundle.cloud;

  if (opt.method == "fps") {
    const SampleSet s = fps(cloud, opt.k, opt.start.value_or(0));
    io::write_indices(opt.out.string() + ".indices.txt", s);
    const PointCloud sub = detail::subset(cloud, s);
    if (bundle.attention) {
      const AttentionField attn = detail::subset(*bundle.attention, s);
      io::write_ply(opt.out.string() + ".ply", sub, &attn);
    } else {
      io::write_ply(opt.out.string() + ".ply", sub);
    }
    log << "fps k=" << opt.k << " n=" << cloud.size() << " -> " << opt.out.string() << ".indices.txt\n";
    return;
  }
  if (opt.method != "ag" && opt.method != "ag-oracle") {
    throw Error(ErrorCode::InvalidArgument, "unknown method '" + opt.method + "'");
  }
  if (!bundle.attention) {
    throw Error(ErrorCode::MissingAttention, "method " + opt.method + " needs an attn column or --attn file");
  }
  for (double lambda : opt.lambdas) {
    SamplerConfig cfg;
    cfg.k = opt.k;
    cfg.lambda_dist = lambda;
    cfg.epsilon = opt.epsilon;
    if (opt.start) cfg.start_rule = FixedIndex{*opt.start};
    const SampleSet s =
        opt.method == "ag" ? ag_sample(cloud, *bundle.attention, cfg) : ag_sample_oracle(cloud, *bundle.attention, cfg);
    const std::string stem = opt.out.string() + (opt.lambdas.size() > 1 ? detail::lambda_tag(lambda) : "");
    io::write_indices(stem + ".indices.txt", s);
    const AttentionField attn = detail::subset(*bundle.attention, s);
    io::write_ply(stem + ".ply", detail::subset(cloud, s), &attn);
    log << opt.method << " k=" << opt.k << " lambda=" << lambda << " n=" << cloud.size() << " -> " << stem
        << ".indices.txt\n";
  }
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOptions {
  std::vector<fs::path> preds;
  std::vector<fs::path> gts;
  double iou = kDefaultIouThreshold;
  std::string classes = "scannet18";
  std::optional<fs::path> out;
};

inline MapResult cmd_eval(const EvalOptions& opt, std::ostream& out) {
  if (opt.preds.size() != opt.gts.size() || opt.preds.empty()) {
    throw Error(ErrorCode::InvalidArgument, "give the same positive number of --preds and --gt files");
  }
  EvalConfig cfg;
  cfg.iou_threshold = opt.iou;
  if (opt.classes == "scannet18") {
    cfg.class_names = scannet18_classes();
  } else if (opt.classes != "none") {
    throw Error(ErrorCode::InvalidArgument, "--classes must be scannet18 or none");
  }
  std::vector<DetectionSet> preds;
  std::vector<DetectionSet> gts;
  for (std::size_t i = 0; i < opt.preds.size(); ++i) {
    preds.push_back(io::read_detections(opt.preds[i]));
    gts.push_back(io::read_detections(opt.gts[i]));
  }
  const MapResult result = mean_ap(preds, gts, cfg);
  if (opt.out) {
    io::write_metrics_csv(*opt.out, result, cfg);
  } else {
    io::write_metrics_csv(out, result, cfg);
  }
  return result;
}

// ---------------------------------------------------------------------------
// synth / perturb
// ---------------------------------------------------------------------------

struct SynthOptions {
  SceneSpec spec;
  std::size_t count = 1;
  fs::path out;
};

/// Scene i uses seed (spec.seed + i). Output stems are `<out>` for a single
/// scene, `<out>_000`, `<out>_001`, ... otherwise.
inline std::vector<fs::path> cmd_synth(const SynthOptions& opt, std::ostream& log) {
  std::vector<fs::path> stems;
  for (std::size_t i = 0; i < opt.count; ++i) {
    SceneSpec spec = opt.spec;
    spec.seed = opt.spec.seed + i;
    std::string stem = opt.out.string();
    if (opt.count > 1) {
      std::ostringstream s;
      s << '_' << std::setw(3) << std::setfill('0') << i;
      stem += s.str();
    }
    const Scene scene = generate(spec);
    io::write_scene(stem, scene);
    log << stem << ": " << scene.cloud.size() << " points, " << scene.gt.size() << " objects\n";
    stems.emplace_back(stem);
  }
  return stems;
}

struct PerturbOptions {
  fs::path in;
  NoiseConfig noise;
  fs::path out;
};

inline void cmd_perturb(const PerturbOptions& opt, std::ostream& log) {
  const io::PlyData ply = io::read_ply(opt.in);
  const PointCloud noisy = perturb(ply.cloud, opt.noise);
  io::write_ply(opt.out, noisy, ply.attention ? &*ply.attention : nullptr);
  log << "sigma=" << bounding_range(ply.cloud) * opt.noise.noise_level << " -> " << opt.out.string() << '\n';
}

// ---------------------------------------------------------------------------
// agdemo
// ---------------------------------------------------------------------------

struct AgDemoOptions {
  std::uint64_t seed = 0;
  std::string strategy = "qd";
  std::size_t k = 16;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t tokens = 64;
  std::size_t num_classes = 18;
  double lambda = kDefaultLambdaDist;
  std::optional<fs::path> params;
  std::optional<fs::path> save_params;
  fs::path out;
};

/// Synthetic scene -> attention-guided queries -> decoder -> detection head.
/// Prints the per-layer level weights (query-driven strategy) as CSV.
inline DetectionSet cmd_agdemo(const AgDemoOptions& opt, std::ostream& log) {
  Aggregation strategy{};
  if (opt.strategy == "last-layer") {
    strategy = Aggregation::LastLevel;
  } else if (opt.strategy == "sequential-4") {
    strategy = Aggregation::Sequential;
  } else if (opt.strategy == "qd") {
    strategy = Aggregation::QueryDriven;
  } else {
    throw Error(ErrorCode::InvalidArgument, "--strategy must be last-layer, sequential-4 or qd");
  }

  SceneSpec spec;
  spec.seed = opt.seed;
  spec.num_points = 4000;
  const Scene scene = generate(spec);
  SamplerConfig cfg;
  cfg.k = opt.k;
  cfg.lambda_dist = opt.lambda;
  const SampleSet samples = ag_sample(scene.cloud, scene.attention, cfg);
  const Matrix q0 = init_queries(scene.cloud, samples, opt.dim);
  const FeatureLevels levels = random_feature_levels(opt.tokens, opt.dim, 4, opt.seed);

  io::ModelParams model = opt.params ? io::params_from_json(io::parse_json_file(*opt.params))
                                     : io::ModelParams{random_see_state(opt.dim, levels.count(), opt.seed),
                                                       random_decoder_params(opt.dim, opt.heads, opt.layers, opt.seed),
                                                       random_head_params(opt.dim, opt.num_classes, opt.seed)};
  if (opt.save_params) io::write_json_file(*opt.save_params, io::params_to_json(model));

  Matrix decoded;
  if (strategy == Aggregation::QueryDriven) {
    const DecoderResult result = decoder_forward(q0, levels, model.see_query, model.decoder);
    log << "layer";
    for (int id : levels.level_ids()) log << ",w_level" << id;
    log << '\n';
    for (std::size_t l = 0; l < result.layer_weights.size(); ++l) {
      log << l;
      for (double w : result.layer_weights[l]) log << ',' << io::format_double(w);
      log << '\n';
    }
    decoded = result.queries;
  } else {
    decoded = decoder_forward_fixed(q0, levels, model.decoder, strategy);
  }
  const DetectionSet dets = detection_head(decoded, model.head);
  io::write_detections(opt.out, dets);
  log << "concentration=" << io::format_double(concentration(samples, scene)) << " detections=" << dets.size()
      << " -> " << opt.out.string() << '\n';
  return dets;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchOptions {
  std::vector<std::size_t> ns{1000, 10000, 100000};
  std::vector<std::size_t> ks{256};
  std::size_t spot_n = 2000;
  double lambda = kDefaultLambdaDist;
  std::uint64_t seed = 0;
  std::optional<fs::path> out;
};

struct BenchRow {
  std::string method;
  std::size_t n = 0;
  std::size_t k = 0;
  double seconds = 0.0;
  std::string oracle_match;  // "yes", "no" or "skipped"
};

/// Uniform cloud in the unit cube with uniform attention.
inline std::pair<PointCloud, AttentionField> bench_instance(std::size_t n, std::uint64_t seed) {
  RngStream rng(seed, 20);
  std::vector<Vec3> pts(n);
  std::vector<double> attn(n);
  for (auto& p : pts) p = {rng.uniform(), rng.uniform(), rng.uniform()};
  for (auto& a : attn) a = rng.uniform();
  PointCloud cloud(std::move(pts));
  AttentionField field(cloud, std::move(attn));
  return {std::move(cloud), std::move(field)};
}

/// Checks ag against the oracle at spot_n before timing anything; returns the
/// timing rows. Throws if the spot check disagrees.
inline std::vector<BenchRow> cmd_bench(const BenchOptions& opt, std::ostream& out) {
  using Clock = std::chrono::steady_clock;
  const auto seconds_since = [](Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
  };

  std::vector<BenchRow> rows;
  const auto spot_k = std::min(opt.spot_n, *std::ranges::max_element(opt.ks));
  {
    const auto [cloud, attn] = bench_instance(opt.spot_n, opt.seed);
    SamplerConfig cfg;
    cfg.k = spot_k;
    cfg.lambda_dist = opt.lambda;
    auto t0 = Clock::now();
    const SampleSet fast = ag_sample(cloud, attn, cfg);
    const double t_fast = seconds_since(t0);
    t0 = Clock::now();
    const SampleSet slow = ag_sample_oracle(cloud, attn, cfg);
    const double t_slow = seconds_since(t0);
    const bool match = fast == slow;
    rows.push_back({"ag-spot", opt.spot_n, spot_k, t_fast, match ? "yes" : "no"});
    rows.push_back({"ag-oracle", opt.spot_n, spot_k, t_slow, match ? "yes" : "no"});
    if (!match) throw std::runtime_error("ag fast path disagrees with the oracle at the spot check");
  }

  for (std::size_t n : opt.ns) {
    const auto [cloud, attn] = bench_instance(n, opt.seed);
    for (std::size_t k : opt.ks) {
      if (k > n) continue;
      auto t0 = Clock::now();
      (void)fps(cloud, k, 0);
      rows.push_back({"fps", n, k, seconds_since(t0), "skipped"});

      SamplerConfig cfg;
      cfg.k = k;
      cfg.lambda_dist = opt.lambda;
      t0 = Clock::now();
      (void)ag_sample(cloud, attn, cfg);
      rows.push_back({"ag", n, k, seconds_since(t0), "skipped"});
    }
  }

  std::ofstream file;
  std::ostream* sink = &out;
  if (opt.out) {
    file.open(*opt.out);
    if (!file) throw Error(ErrorCode::IoError, "cannot open " + opt.out->string() + " for writing");
    sink = &file;
  }
  *sink << "method,n,k,seconds,oracle_match\n";
  for (const auto& r : rows) {
    *sink << r.method << ',' << r.n << ',' << r.k << ',' << io::format_double(r.seconds) << ',' << r.oracle_match
          << '\n';
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Attention-guided query sampling, query-driven aggregation and 3D detection evaluation"};
  app.require_subcommand(1);

  SampleOptions sample;
  auto* sc_sample = app.add_subcommand("sample", "Sample query points from a PLY cloud");
  sc_sample->add_option("cloud", sample.cloud, "Input PLY (optional attn column)")->required();
  sc_sample->add_option("--attn", sample.attention, "Attention text file, one weight per line");
  sc_sample->add_option("--k", sample.k, "Number of samples")->capture_default_str();
  sc_sample->add_option("--lambda", sample.lambdas, "lambda_dist; several values run a sweep")->capture_default_str();
  sc_sample->add_option("--method", sample.method, "fps | ag | ag-oracle")
      ->check(CLI::IsMember({"fps", "ag", "ag-oracle"}))
      ->capture_default_str();
  sc_sample->add_option("--epsilon", sample.epsilon, "Normalization epsilon")->capture_default_str();
  sc_sample->add_option("--start", sample.start, "Fixed first index (default: argmax attention, or 0 for fps)");
  sc_sample->add_option("--out", sample.out, "Output prefix")->required();

  EvalOptions eval;
  auto* sc_eval = app.add_subcommand("eval", "Per-class AP and mAP");
  sc_eval->add_option("--preds", eval.preds, "Prediction JSON, one per scene")->required();
  sc_eval->add_option("--gt", eval.gts, "Ground-truth JSON, one per scene, same order")->required();
  sc_eval->add_option("--iou", eval.iou, "IoU threshold")->capture_default_str();
  sc_eval->add_option("--classes", eval.classes, "scannet18 | none")->capture_default_str();
  sc_eval->add_option("--out", eval.out, "Metrics CSV (stdout when omitted)");

  SynthOptions synth;
  auto* sc_synth = app.add_subcommand("synth", "Generate synthetic scenes");
  sc_synth->add_option("--seed", synth.spec.seed)->capture_default_str();
  sc_synth->add_option("--count", synth.count, "Number of scenes")->capture_default_str();
  sc_synth->add_option("--points", synth.spec.num_points)->capture_default_str();
  sc_synth->add_option("--min-objects", synth.spec.min_objects)->capture_default_str();
  sc_synth->add_option("--max-objects", synth.spec.max_objects)->capture_default_str();
  sc_synth->add_option("--object-fraction", synth.spec.object_point_fraction)->capture_default_str();
  sc_synth->add_option("--attn-base", synth.spec.attn_base)->capture_default_str();
  sc_synth->add_option("--attn-bonus", synth.spec.attn_bonus)->capture_default_str();
  sc_synth->add_option("--attn-jitter", synth.spec.attn_jitter)->capture_default_str();
  sc_synth->add_option("--out", synth.out, "Output stem")->required();

  PerturbOptions pert;
  auto* sc_perturb = app.add_subcommand("perturb", "Add Gaussian noise to a PLY cloud");
  sc_perturb->add_option("cloud", pert.in)->required();
  sc_perturb->add_option("--noise-level", pert.noise.noise_level, "sigma = range * noise_level")->required();
  sc_perturb->add_option("--seed", pert.noise.seed)->capture_default_str();
  sc_perturb->add_option("--out", pert.out)->required();

  AgDemoOptions demo;
  auto* sc_demo = app.add_subcommand("agdemo", "Seeded decoder forward pass");
  sc_demo->add_option("--seed", demo.seed)->capture_default_str();
  sc_demo->add_option("--strategy", demo.strategy, "last-layer | sequential-4 | qd")
      ->check(CLI::IsMember({"last-layer", "sequential-4", "qd"}))
      ->capture_default_str();
  sc_demo->add_option("--k", demo.k)->capture_default_str();
  sc_demo->add_option("--dim", demo.dim)->capture_default_str();
  sc_demo->add_option("--heads", demo.heads)->capture_default_str();
  sc_demo->add_option("--layers", demo.layers)->capture_default_str();
  sc_demo->add_option("--tokens", demo.tokens)->capture_default_str();
  sc_demo->add_option("--lambda", demo.lambda)->capture_default_str();
  sc_demo->add_option("--params", demo.params, "Load parameters JSON");
  sc_demo->add_option("--save-params", demo.save_params, "Write the parameters used");
  sc_demo->add_option("--out", demo.out, "Detections JSON")->required();

  BenchOptions bench;
  auto* sc_bench = app.add_subcommand("bench", "Time fps / ag / ag-oracle");
  sc_bench->add_option("--n", bench.ns, "Cloud sizes")->capture_default_str();
  sc_bench->add_option("--k", bench.ks, "Sample counts")->capture_default_str();
  sc_bench->add_option("--spot-n", bench.spot_n, "Cloud size of the oracle spot check")->capture_default_str();
  sc_bench->add_option("--lambda", bench.lambda)->capture_default_str();
  sc_bench->add_option("--seed", bench.seed)->capture_default_str();
  sc_bench->add_option("--out", bench.out, "CSV path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (*sc_sample) cmd_sample(sample, out);
    if (*sc_eval) {
      const MapResult r = cmd_eval(eval, out);
      if (eval.out) out << "mAP@" << eval.iou << " = " << io::format_double(r.mean) << '\n';
    }
    if (*sc_synth) cmd_synth(synth, out);
    if (*sc_perturb) cmd_perturb(pert, out);
    if (*sc_demo) cmd_agdemo(demo, out);
    if (*sc_bench) cmd_bench(bench, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_io_error(e.code()) ? kExitIo : kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  return kExitOk;
}

}  // namespace agdet::cli
