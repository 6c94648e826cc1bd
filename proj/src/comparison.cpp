#include "emrt/comparison.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "emrt/classforest.hpp"
#include "emrt/error.hpp"
#include "emrt/parallel.hpp"
#include "emrt/random.hpp"
#include "emrt/synth.hpp"

namespace emrt {

std::string_view strategy_key(Strategy strategy) {
  switch (strategy) {
    case Strategy::FixedFrontal: return "a";
    case Strategy::PriorSelection: return "b";
    case Strategy::TopVote: return "d";
    case Strategy::PosteriorRating: return "e";
    case Strategy::Recommendation: return "ours";
  }
  return "?";
}

std::string_view strategy_label(Strategy strategy) {
  switch (strategy) {
    case Strategy::FixedFrontal: return "fixed-frontal";
    case Strategy::PriorSelection: return "prior-selection";
    case Strategy::TopVote: return "top-vote";
    case Strategy::PosteriorRating: return "posterior-rating";
    case Strategy::Recommendation: return "recommendation-trees";
  }
  return "?";
}

std::vector<Strategy> all_strategies() {
  return {Strategy::FixedFrontal, Strategy::PriorSelection, Strategy::TopVote, Strategy::PosteriorRating,
          Strategy::Recommendation};
}

Strategy parse_strategy(std::string_view key) {
  for (Strategy s : all_strategies()) {
    if (key == strategy_key(s) || key == strategy_label(s)) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + std::string(key) + "'");
}

void ComparisonConfig::validate() const {
  forest.validate();
  if (folds < 2) throw Error(ErrorCode::InvalidArgument, "folds must be >= 2");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "validation fraction must lie in (0, 1)");
  if (!(std::isfinite(pose_noise_deg) && pose_noise_deg >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "pose noise must be >= 0");
  if (strategies.empty()) throw Error(ErrorCode::InvalidArgument, "no strategy selected");
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (strategies[i] == strategies[j]) throw Error(ErrorCode::InvalidArgument, "strategy listed twice");
    }
  }
  for (double t : ced_thresholds) {
    if (!std::isfinite(t)) throw Error(ErrorCode::InvalidArgument, "CED thresholds must be finite");
  }
}

std::vector<std::size_t> fold_assignment(std::size_t sample_count, std::size_t folds, std::uint64_t seed) {
  if (folds == 0) throw Error(ErrorCode::InvalidArgument, "folds must be >= 1");
  std::vector<std::size_t> order(sample_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, "folds", 0);
  for (std::size_t i = sample_count; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::size_t> fold(sample_count);
  for (std::size_t i = 0; i < sample_count; ++i) fold[order[i]] = i % folds;
  return fold;
}

namespace {

using Predictor = std::function<Prediction(std::size_t)>;

void set_flags(Prediction& p, double gamma) {
  for (std::size_t n = 0; n < p.visibility_confidence.size(); ++n)
    p.visibility_flag[n] = p.visibility_confidence[n] >= gamma ? 1 : 0;
}

double calibrate(const ResponseDataset& data, std::span<const std::size_t> validation, const Predictor& predict) {
  std::vector<double> confidence;
  std::vector<std::uint8_t> visible;
  for (std::size_t m : validation) {
    const Prediction p = predict(m);
    for (std::size_t n = 0; n < data.landmark_count(); ++n) {
      confidence.push_back(p.visibility_confidence[n]);
      visible.push_back(data.is_visible(m, n) ? 1 : 0);
    }
  }
  return select_gamma(confidence, visible);
}

}  // namespace

ComparisonResult run_comparison(const ResponseDataset& data, const io::Metadata& meta, const ComparisonConfig& config) {
  config.validate();
  const std::size_t M = data.sample_count();
  const std::size_t C = data.model_count();
  if (M < config.folds) throw Error(ErrorCode::InvalidArgument, "fewer samples than folds");
  if (meta.yaw.size() != M || meta.cluster_id.size() != M)
    throw Error(ErrorCode::DimensionMismatch, "metadata sample count differs from the dataset");
  if (meta.cluster_centers.size() != C)
    throw Error(ErrorCode::DimensionMismatch, "metadata cluster count differs from the model count");

  const ClassLabels labels = derive_labels(data, std::span<const std::size_t>(meta.cluster_id));
  const std::size_t frontal = synth::nearest_cluster(meta.cluster_centers, 0.0);

  std::vector<std::size_t> prior_choice(M);
  for (std::size_t m = 0; m < M; ++m) {
    Rng rng = make_rng(config.seed, "pose-noise", m);
    std::normal_distribution<double> gauss(0.0, 1.0);
    prior_choice[m] = synth::nearest_cluster(meta.cluster_centers, meta.yaw[m] + config.pose_noise_deg * gauss(rng));
  }

  const bool need_rec = std::find(config.strategies.begin(), config.strategies.end(), Strategy::Recommendation) !=
                        config.strategies.end();
  const bool need_class = std::any_of(config.strategies.begin(), config.strategies.end(), [](Strategy s) {
    return s == Strategy::TopVote || s == Strategy::PosteriorRating;
  });

  const std::size_t S = config.strategies.size();
  std::vector<std::vector<Prediction>> predictions(S, std::vector<Prediction>(M));
  std::vector<std::vector<double>> gammas(S);

  const auto fold = fold_assignment(M, config.folds, config.seed);
  for (std::size_t k = 0; k < config.folds; ++k) {
    std::vector<std::size_t> test, train;
    for (std::size_t m = 0; m < M; ++m) (fold[m] == k ? test : train).push_back(m);

    Rng split_rng = make_rng(config.seed, "validation", k);
    for (std::size_t i = train.size(); i > 1; --i) std::swap(train[i - 1], train[split_rng() % i]);
    const auto held = static_cast<std::size_t>(std::ceil(config.validation_fraction * static_cast<double>(train.size())));
    if (held == 0 || held >= train.size()) throw Error(ErrorCode::InvalidArgument, "validation slice leaves no training data");
    std::vector<std::size_t> validation(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(held));
    train.erase(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(held));
    std::sort(validation.begin(), validation.end());
    std::sort(train.begin(), train.end());

    TrainConfig forest_config = config.forest;
    forest_config.seed = derive_seed(config.seed, "fold-forest", k);
    std::optional<Forest> rec, cls;
    if (need_rec) rec = train_forest(data, train, forest_config);
    if (need_class) cls = train_class_forest(data, labels, train, forest_config);

    std::vector<Predictor> predictors(S);
    for (std::size_t s = 0; s < S; ++s) {
      switch (config.strategies[s]) {
        case Strategy::FixedFrontal:
          predictors[s] = [&, frontal](std::size_t m) {
            return apply_rating(data.protocol(), RatingVector::indicator(C, frontal), data.responses(m),
                                data.features(m), 0.5);
          };
          break;
        case Strategy::PriorSelection:
          predictors[s] = [&](std::size_t m) {
            return apply_rating(data.protocol(), RatingVector::indicator(C, prior_choice[m]), data.responses(m),
                                data.features(m), 0.5);
          };
          break;
        case Strategy::TopVote:
          predictors[s] = [&](std::size_t m) { return predict_top_vote(*cls, data.responses(m), data.features(m)); };
          break;
        case Strategy::PosteriorRating:
          predictors[s] = [&](std::size_t m) {
            return predict_posterior_rating(*cls, data.responses(m), data.features(m));
          };
          break;
        case Strategy::Recommendation:
          predictors[s] = [&](std::size_t m) { return predict(*rec, data.responses(m), data.features(m)); };
          break;
      }
    }

    // Strategies are independent; each writes only its own slots.
    parallel_for(S, config.forest.workers, [&](std::size_t s) {
      const double gamma = calibrate(data, validation, predictors[s]);
      gammas[s].push_back(gamma);
      for (std::size_t m : test) {
        Prediction p = predictors[s](m);
        set_flags(p, gamma);
        predictions[s][m] = std::move(p);
      }
    });
  }

  ComparisonResult result;
  result.folds = config.folds;
  result.seed = config.seed;
  for (std::size_t s = 0; s < S; ++s) {
    result.rows.push_back({config.strategies[s], evaluate(predictions[s], data, config.ced_thresholds), gammas[s]});
  }
  return result;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string format_table(const ComparisonResult& result) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %-22s %12s %14s %10s\n", "key", "strategy", "mean error %", "vis. accuracy %",
                "vis. AP %");
  out << line;
  for (const auto& row : result.rows) {
    const std::string ap = row.report.visibility_ap ? fixed(100.0 * *row.report.visibility_ap, 2) : "n/a";
    std::snprintf(line, sizeof line, "%-6s %-22s %12s %14s %10s\n", std::string(strategy_key(row.strategy)).c_str(),
                  std::string(strategy_label(row.strategy)).c_str(), fixed(row.report.mean_error, 3).c_str(),
                  fixed(100.0 * row.report.visibility_accuracy, 2).c_str(), ap.c_str());
    out << line;
  }
  return out.str();
}

io::Json comparison_to_json(const ComparisonResult& result) {
  io::Json rows = io::Json::array();
  for (const auto& row : result.rows) {
    io::Json r;
    r["strategy"] = strategy_key(row.strategy);
    r["label"] = strategy_label(row.strategy);
    r["meanError"] = row.report.mean_error;
    r["visibilityAccuracy"] = row.report.visibility_accuracy;
    r["visibilityAP"] = row.report.visibility_ap ? io::Json(*row.report.visibility_ap) : io::Json(nullptr);
    r["foldGamma"] = row.fold_gamma;
    r["scoredSamples"] = row.report.per_sample_errors.size();
    rows.push_back(std::move(r));
  }
  io::Json doc;
  doc["formatVersion"] = io::kFormatVersion;
  doc["kind"] = "emrt.comparison";
  doc["folds"] = result.folds;
  doc["seed"] = result.seed;
  doc["rows"] = std::move(rows);
  return doc;
}

namespace {

std::string two_columns(const std::vector<std::pair<double, double>>& rows) {
  std::string text;
  char line[96];
  for (const auto& [a, b] : rows) {
    std::snprintf(line, sizeof line, "%.17g\t%.17g\n", a, b);
    text += line;
  }
  return text;
}

}  // namespace

std::string ced_text(const EvalReport& report) {
  std::vector<std::pair<double, double>> rows;
  for (const auto& p : report.ced) rows.emplace_back(p.threshold, p.fraction);
  return two_columns(rows);
}

std::string pr_text(const EvalReport& report) {
  std::vector<std::pair<double, double>> rows;
  for (const auto& p : report.pr) rows.emplace_back(p.recall, p.precision);
  return two_columns(rows);
}

}  // namespace emrt
