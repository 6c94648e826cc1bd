#include "emrt/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>

#include "emrt/classforest.hpp"
#include "emrt/comparison.hpp"
#include "emrt/error.hpp"
#include "emrt/io.hpp"
#include "emrt/metrics.hpp"
#include "emrt/parallel.hpp"
#include "emrt/random.hpp"
#include "emrt/recforest.hpp"
#include "emrt/synth.hpp"

namespace emrt {
namespace {

namespace fs = std::filesystem;

struct GenFlags {
  std::string preset = "aflw-like-5view";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> m;
  std::optional<std::size_t> n;
  std::vector<double> centers;
  std::optional<double> half_width, in_noise, out_noise_slope, score_sharpness, score_noise, occlusion_rate;
  std::optional<double> yaw_min, yaw_max;
  std::optional<std::string> yaw_sampling;

  void attach(CLI::App* app) {
    app->add_option("--preset", preset, "Generator preset")->check(CLI::IsMember(synth::GenConfig::preset_names()));
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--m", m, "Sample count");
    app->add_option("--n", n, "Landmark count");
    app->add_option("--centers", centers, "Cluster yaw centers (degrees)")->delimiter(',');
    app->add_option("--half-width", half_width, "Cluster half width (degrees)");
    app->add_option("--in-noise", in_noise, "Response noise inside a cluster");
    app->add_option("--out-noise-slope", out_noise_slope, "Extra noise per degree outside a cluster");
    app->add_option("--score-sharpness", score_sharpness, "Detection score falloff");
    app->add_option("--score-noise", score_noise, "Detection score noise");
    app->add_option("--occlusion-rate", occlusion_rate, "Random dropout of visible landmarks");
    app->add_option("--yaw-min", yaw_min, "Lowest yaw (degrees)");
    app->add_option("--yaw-max", yaw_max, "Highest yaw (degrees)");
    app->add_option("--yaw-sampling", yaw_sampling, "uniform or clustered")
        ->check(CLI::IsMember({"uniform", "clustered"}));
  }

  synth::GenConfig resolve() const {
    synth::GenConfig config = synth::GenConfig::preset(preset);
    if (seed) config.seed = *seed;
    if (m) config.sample_count = *m;
    if (n) config.landmark_count = *n;
    if (!centers.empty()) config.cluster_centers = centers;
    if (half_width) config.cluster_half_width = *half_width;
    if (in_noise) config.in_noise = *in_noise;
    if (out_noise_slope) config.out_noise_slope = *out_noise_slope;
    if (score_sharpness) config.score_sharpness = *score_sharpness;
    if (score_noise) config.score_noise = *score_noise;
    if (occlusion_rate) config.occlusion_rate = *occlusion_rate;
    if (yaw_min) config.yaw_min = *yaw_min;
    if (yaw_max) config.yaw_max = *yaw_max;
    if (yaw_sampling)
      config.yaw_sampling = *yaw_sampling == "clustered" ? synth::YawSampling::Clustered : synth::YawSampling::Uniform;
    config.validate();
    return config;
  }
};

struct ForestFlags {
  TrainConfig config;
  bool no_bootstrap = false;
  bool verbose = false;

  void attach(CLI::App* app) {
    config.workers = default_worker_count();
    app->add_option("--trees", config.tree_count, "Trees per forest")->capture_default_str();
    app->add_option("--max-depth", config.max_depth, "Maximum tree depth")->capture_default_str();
    app->add_option("--min-leaf", config.min_samples_per_leaf, "Minimum samples per leaf")->capture_default_str();
    app->add_option("--features-per-node", config.candidate_feature_count, "Candidate features per node (0: sqrt F)")
        ->capture_default_str();
    app->add_option("--thresholds", config.candidate_threshold_count, "Candidate thresholds per feature")
        ->capture_default_str();
    app->add_option("--min-gain", config.min_gain, "Smallest accepted split gain")->capture_default_str();
    app->add_option("--bootstrap-fraction", config.bootstrap_fraction, "Per-tree sample fraction")
        ->capture_default_str();
    app->add_flag("--no-bootstrap", no_bootstrap, "Subsample without replacement");
    app->add_option("--workers", config.workers, "Worker threads (default from EMRT_WORKERS)");
    app->add_flag("--verbose", verbose, "Per-tree progress as JSON lines on stderr");
  }

  TrainConfig resolve(std::uint64_t seed, std::ostream& err, std::mutex& lock) const {
    TrainConfig out = config;
    out.bootstrap = !no_bootstrap;
    out.seed = seed;
    if (verbose) {
      out.on_tree_done = [&err, &lock](const TreeProgress& p) {
        io::Json line{{"tree", p.tree}, {"depth", p.depth}, {"nodes", p.nodes}, {"elapsedSeconds", p.elapsed_seconds}};
        std::lock_guard guard(lock);
        err << line.dump() << '\n';
      };
    }
    out.validate();
    return out;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_file_atomic(path, text);
}

ResponseDataset load_nonempty(const std::string& path) {
  ResponseDataset data = io::load_dataset(path);
  if (data.sample_count() == 0) throw Error(ErrorCode::InvalidArgument, "dataset '" + path + "' has no samples");
  return data;
}

io::Metadata metadata_of(const synth::Generated& gen) {
  io::Metadata meta;
  meta.cluster_centers = gen.cluster_centers;
  for (const auto& latent : gen.metadata) {
    meta.yaw.push_back(latent.yaw);
    meta.cluster_id.push_back(latent.cluster_id);
  }
  return meta;
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

int cmd_gen(const GenFlags& flags, const std::string& out_dir, std::ostream& out) {
  const synth::GenConfig config = flags.resolve();
  const synth::Generated gen = synth::generate(config);
  const std::string dataset_text = io::dump(io::dataset_to_json(gen.dataset));
  const std::string metadata_text = io::dump(io::metadata_to_json(metadata_of(gen)));
  fs::create_directories(out_dir);
  io::write_file_atomic(fs::path(out_dir) / "dataset.json", dataset_text);
  io::write_file_atomic(fs::path(out_dir) / "metadata.json", metadata_text);

  const ResponseDataset& d = gen.dataset;
  const double total = static_cast<double>(d.sample_count() * d.landmark_count());
  out << "M=" << d.sample_count() << " C=" << d.model_count() << " N=" << d.landmark_count()
      << " F=" << d.feature_count() << " visible-fraction=" << fixed(d.visible_instance_count() / total, 4) << '\n';
  return 0;
}

struct TrainArgs {
  std::string data, metadata, val, out, method = "rec";
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& args, const ForestFlags& flags, std::ostream& out, std::ostream& err) {
  std::mutex lock;
  const TrainConfig config = flags.resolve(args.seed, err, lock);
  const ResponseDataset data = load_nonempty(args.data);
  if (!(args.val_fraction >= 0.0 && args.val_fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "validation fraction must lie in [0, 1)");

  std::vector<std::size_t> train(data.sample_count());
  std::iota(train.begin(), train.end(), std::size_t{0});
  std::optional<ResponseDataset> validation;
  if (!args.val.empty()) {
    validation = load_nonempty(args.val);
  } else if (args.val_fraction > 0.0) {
    Rng rng = make_rng(args.seed, "validation", 0);
    for (std::size_t i = train.size(); i > 1; --i) std::swap(train[i - 1], train[rng() % i]);
    const auto held = static_cast<std::size_t>(std::ceil(args.val_fraction * static_cast<double>(train.size())));
    if (held >= train.size()) throw Error(ErrorCode::InvalidArgument, "validation slice leaves no training data");
    std::vector<std::size_t> val(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(held));
    train.erase(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(held));
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());
    validation = data.select(val);
  }

  Forest forest;
  if (args.method == "class") {
    std::optional<io::Metadata> meta;
    if (!args.metadata.empty()) meta = io::load_metadata(args.metadata);
    if (meta && meta->cluster_id.size() != data.sample_count())
      throw Error(ErrorCode::DimensionMismatch, "metadata sample count differs from the dataset");
    const ClassLabels labels =
        meta ? derive_labels(data, std::span<const std::size_t>(meta->cluster_id)) : derive_labels(data);
    forest = train_class_forest(data, labels, train, config);
  } else {
    forest = train_forest(data, train, config);
  }
  if (validation) calibrate_gamma(forest, *validation);
  write_text(args.out, io::dump(io::forest_to_json(forest)));

  std::size_t leaves = 0, depth = 0;
  for (const Tree& t : forest.trees) {
    leaves += t.leaf_count();
    depth = std::max(depth, t.depth());
  }
  out << "method=" << args.method << " trees=" << forest.trees.size() << " leaves=" << leaves << " depth=" << depth
      << " train-samples=" << train.size() << " validation-samples=" << (validation ? validation->sample_count() : 0)
      << " gamma=" << fixed(forest.gamma, 6) << '\n';
  return 0;
}

int cmd_predict(const std::string& forest_path, const std::string& data_path, const std::string& out_path,
                const std::string& mode, std::ostream& out) {
  const Forest forest = io::load_forest(forest_path);
  const ResponseDataset data = load_nonempty(data_path);
  if (data.protocol() != forest.protocol)
    throw Error(ErrorCode::DimensionMismatch, "dataset protocol differs from the forest protocol");
  if (mode == "topvote" && forest.kind != LeafKind::Posterior)
    throw Error(ErrorCode::InvalidArgument, "top-vote prediction needs a classification forest");
  std::vector<Prediction> predictions;
  predictions.reserve(data.sample_count());
  for (std::size_t m = 0; m < data.sample_count(); ++m) {
    predictions.push_back(mode == "topvote" ? predict_top_vote(forest, data.responses(m), data.features(m))
                                            : predict(forest, data.responses(m), data.features(m)));
  }
  write_text(out_path, io::dump(io::predictions_to_json(predictions, forest.gamma)));
  out << "predicted " << predictions.size() << " samples\n";
  return 0;
}

io::Json report_json(const EvalReport& report) {
  return io::Json{{"meanError", report.mean_error},
                  {"visibilityAccuracy", report.visibility_accuracy},
                  {"visibilityAP", report.visibility_ap ? io::Json(*report.visibility_ap) : io::Json(nullptr)},
                  {"scoredSamples", report.per_sample_errors.size()}};
}

int cmd_eval(const std::string& pred_path, const std::string& data_path, const std::string& format,
             const std::string& ced_out, const std::string& pr_out, std::ostream& out) {
  const ResponseDataset data = load_nonempty(data_path);
  const auto predictions = io::predictions_from_json(io::parse(io::read_file(pred_path), pred_path));
  const EvalReport report = evaluate(predictions, data, default_ced_thresholds());
  if (!ced_out.empty()) write_text(ced_out, ced_text(report));
  if (!pr_out.empty()) write_text(pr_out, pr_text(report));
  if (format == "json") {
    out << io::dump(report_json(report));
  } else {
    out << "mean error %      " << fixed(report.mean_error, 3) << '\n'
        << "vis. accuracy %   " << fixed(100.0 * report.visibility_accuracy, 2) << '\n'
        << "vis. AP %         " << (report.visibility_ap ? fixed(100.0 * *report.visibility_ap, 2) : "n/a") << '\n'
        << "scored samples    " << report.per_sample_errors.size() << '\n';
  }
  return 0;
}

struct CompareArgs {
  std::string data, metadata, out, format = "table";
  std::vector<std::string> strategies;
  std::size_t folds = 5;
  double pose_noise = 25.0;
  double val_fraction = 0.2;
};

int cmd_compare(const CompareArgs& args, const GenFlags& gen_flags, const ForestFlags& forest_flags,
                std::ostream& out, std::ostream& err) {
  std::mutex lock;
  ComparisonConfig config;
  config.seed = gen_flags.seed.value_or(0);
  config.forest = forest_flags.resolve(config.seed, err, lock);
  config.folds = args.folds;
  config.pose_noise_deg = args.pose_noise;
  config.validation_fraction = args.val_fraction;
  if (!args.strategies.empty()) {
    config.strategies.clear();
    for (const auto& key : args.strategies) config.strategies.push_back(parse_strategy(key));
  }
  config.validate();

  std::optional<ResponseDataset> data;
  io::Metadata meta;
  if (!args.data.empty()) {
    if (args.metadata.empty()) throw Error(ErrorCode::InvalidArgument, "--data requires --metadata");
    data = load_nonempty(args.data);
    meta = io::load_metadata(args.metadata);
  } else {
    synth::Generated gen = synth::generate(gen_flags.resolve());
    meta = metadata_of(gen);
    data = std::move(gen.dataset);
  }

  const ComparisonResult result = run_comparison(*data, meta, config);
  const std::string table = format_table(result);
  const std::string json = io::dump(comparison_to_json(result));
  if (!args.out.empty()) {
    const fs::path dir(args.out);
    fs::create_directories(dir);
    io::write_file_atomic(dir / "report.txt", table);
    io::write_file_atomic(dir / "report.json", json);
    for (const auto& row : result.rows) {
      const std::string key(strategy_key(row.strategy));
      io::write_file_atomic(dir / ("ced_" + key + ".tsv"), ced_text(row.report));
      io::write_file_atomic(dir / ("pr_" + key + ".tsv"), pr_text(row.report));
    }
  }
  out << (args.format == "json" ? json : table);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Model recommendation forests for blending landmark model pools", "emrt"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);

  GenFlags gen_flags;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset and its metadata");
  gen_flags.attach(gen);
  gen->add_option("--out", gen_out, "Output directory")->required();

  TrainArgs train_args;
  ForestFlags train_flags;
  auto* train = app.add_subcommand("train", "Train a forest and calibrate its visibility threshold");
  train->add_option("--data", train_args.data, "Training dataset")->required();
  train->add_option("--metadata", train_args.metadata, "Generator metadata (class labels for --method class)");
  train->add_option("--val", train_args.val, "Separate validation dataset");
  train->add_option("--val-fraction", train_args.val_fraction, "Held-out share of --data when --val is absent")
      ->capture_default_str();
  train->add_option("--method", train_args.method, "rec or class")->check(CLI::IsMember({"rec", "class"}));
  train->add_option("--seed", train_args.seed, "Random seed");
  train->add_option("--out", train_args.out, "Forest file")->required();
  train_flags.attach(train);

  std::string forest_path, predict_data, predict_out, mode = "rating";
  auto* pred = app.add_subcommand("predict", "Predict landmarks and visibility for a dataset");
  pred->add_option("--forest", forest_path, "Forest file")->required();
  pred->add_option("--data", predict_data, "Dataset")->required();
  pred->add_option("--out", predict_out, "Prediction file")->required();
  pred->add_option("--mode", mode, "rating or topvote")->check(CLI::IsMember({"rating", "topvote"}));

  std::string eval_pred, eval_data, eval_format = "table", ced_out, pr_out;
  auto* eval = app.add_subcommand("eval", "Score predictions against a dataset");
  eval->add_option("--pred", eval_pred, "Prediction file")->required();
  eval->add_option("--data", eval_data, "Dataset")->required();
  eval->add_option("--format", eval_format, "table or json")->check(CLI::IsMember({"table", "json"}));
  eval->add_option("--ced-out", ced_out, "CED curve file");
  eval->add_option("--pr-out", pr_out, "Precision/recall curve file");

  CompareArgs compare_args;
  GenFlags compare_gen;
  ForestFlags compare_flags;
  auto* compare = app.add_subcommand("compare", "Cross-validate the recommendation strategies");
  compare_gen.attach(compare);
  compare_flags.attach(compare);
  compare->add_option("--data", compare_args.data, "Dataset (instead of generating one)");
  compare->add_option("--metadata", compare_args.metadata, "Metadata matching --data");
  compare->add_option("--folds", compare_args.folds, "Cross-validation folds")->capture_default_str();
  compare->add_option("--strategies", compare_args.strategies, "Subset of a,b,d,e,ours")->delimiter(',');
  compare->add_option("--pose-noise", compare_args.pose_noise, "Pose error of strategy b (degrees)")
      ->capture_default_str();
  compare->add_option("--val-fraction", compare_args.val_fraction, "Held-out share of the training folds")
      ->capture_default_str();
  compare->add_option("--format", compare_args.format, "table or json")->check(CLI::IsMember({"table", "json"}));
  compare->add_option("--out", compare_args.out, "Directory for the report and curve files");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*gen) return cmd_gen(gen_flags, gen_out, out);
    if (*train) return cmd_train(train_args, train_flags, out, err);
    if (*pred) return cmd_predict(forest_path, predict_data, predict_out, mode, out);
    if (*eval) return cmd_eval(eval_pred, eval_data, eval_format, ced_out, pr_out, out);
    if (*compare) return cmd_compare(compare_args, compare_gen, compare_flags, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace emrt
