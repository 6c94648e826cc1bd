#include "emrt/recforest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>

#include "emrt/error.hpp"
#include "emrt/parallel.hpp"

namespace emrt {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (tree_count < 1) fail("treeCount must be >= 1");
  if (min_samples_per_leaf < 1) fail("minSamplesPerLeaf must be >= 1");
  if (candidate_threshold_count < 1) fail("candidateThresholdCount must be >= 1");
  if (!(min_gain >= 0.0) || !std::isfinite(min_gain)) fail("minGain must be finite and >= 0");
  if (!(bootstrap_fraction > 0.0 && bootstrap_fraction <= 1.0)) fail("bootstrapFraction must lie in (0, 1]");
  if (workers < 1) fail("workers must be >= 1");
  if (!(solver.tolerance > 0.0)) fail("solver tolerance must be > 0");
  if (solver.max_iterations < 1) fail("solver maxIterations must be >= 1");
}

std::size_t TrainConfig::features_per_node(std::size_t feature_count) const {
  std::size_t k = candidate_feature_count;
  if (k == 0) k = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(feature_count))));
  return std::clamp<std::size_t>(k, 1, feature_count);
}

std::size_t visible_instances(const ResponseDataset& data, std::span<const std::size_t> subset) {
  std::size_t total = 0;
  for (std::size_t m : subset) total += data.visible(m).size();
  return total;
}

double node_cost(const ResponseDataset& data, std::span<const std::size_t> subset, const RatingVector& w) {
  if (subset.empty()) throw Error(ErrorCode::InvalidArgument, "node cost of an empty subset");
  const std::size_t C = data.model_count();
  if (w.size() != C) throw Error(ErrorCode::DimensionMismatch, "rating length differs from model count");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t m : subset) {
    for (std::uint32_t n : data.visible(m)) {
      double px = 0.0, py = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const Landmark& x = data.response(m, c, n);
        px += w[c] * x.x;
        py += w[c] * x.y;
      }
      const Landmark& y = data.truth(m, n);
      total += (y.x - px) * (y.x - px) + (y.y - py) * (y.y - py);
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorCode::NoVisibleLandmarks, "node subset has no visible landmark instance");
  return total / static_cast<double>(count);
}

namespace {

simplexls::NormalEquations sample_equations(const ResponseDataset& data, std::size_t m) {
  simplexls::NormalEquations eq(data.model_count());
  const auto responses = data.responses(m);
  for (std::uint32_t n : data.visible(m)) eq.add_landmark(data.truth(m, n), responses, n);
  return eq;
}

NodeFit fit_from_equations(const ResponseDataset& data, std::span<const std::size_t> subset,
                           const simplexls::NormalEquations& eq, const simplexls::Options& options) {
  if (eq.row_count() == 0) throw Error(ErrorCode::NoVisibleLandmarks, "node subset has no visible landmark instance");
  NodeFit fit;
  fit.rating = simplexls::solve(eq, options).w;
  fit.cost = node_cost(data, subset, fit.rating);
  fit.instances = eq.row_count();
  return fit;
}

}  // namespace

NodeFit fit_node_rating(const ResponseDataset& data, std::span<const std::size_t> subset,
                        const simplexls::Options& options) {
  simplexls::NormalEquations eq(data.model_count());
  for (std::size_t m : subset) eq += sample_equations(data, m);
  return fit_from_equations(data, subset, eq, options);
}

SplitEvaluation evaluate_split(const ResponseDataset& data, std::span<const std::size_t> subset,
                               const NodeFit& parent, const SplitParams& params,
                               const simplexls::Options& options) {
  if (params.feature >= data.feature_count())
    throw Error(ErrorCode::OutOfRange, "split feature " + std::to_string(params.feature) + " out of range");
  SplitEvaluation out;
  for (std::size_t m : subset) {
    (params.goes_left(data.features(m)) ? out.left_samples : out.right_samples).push_back(m);
  }
  const std::size_t left_instances = visible_instances(data, out.left_samples);
  const std::size_t right_instances = visible_instances(data, out.right_samples);
  if (left_instances == 0 || right_instances == 0) return out;

  out.left = fit_node_rating(data, out.left_samples, options);
  out.right = fit_node_rating(data, out.right_samples, options);
  const double total = static_cast<double>(left_instances + right_instances);
  out.gain = parent.cost - (static_cast<double>(left_instances) * out.left.cost +
                            static_cast<double>(right_instances) * out.right.cost) /
                               total;
  out.feasible = true;
  return out;
}

namespace {

class RecTreeBuilder {
 public:
  RecTreeBuilder(const ResponseDataset& data, const std::vector<simplexls::NormalEquations>& per_sample,
                 const TrainConfig& config, Rng& rng)
      : data_(data), per_sample_(per_sample), config_(config), rng_(rng) {
    feature_pool_.resize(data.feature_count());
    std::iota(feature_pool_.begin(), feature_pool_.end(), std::size_t{0});
  }

  Tree build(std::span<const std::size_t> samples) {
    std::vector<std::size_t> subset(samples.begin(), samples.end());
    simplexls::NormalEquations eq(data_.model_count());
    for (std::size_t m : subset) eq += per_sample_[m];
    NodeFit root = fit_from_equations(data_, subset, eq, config_.solver);
    grow(std::move(subset), std::move(root), 0);
    return Tree(std::move(nodes_));
  }

 private:
  struct Candidate {
    SplitParams params;
    double children_sse = 0.0;
  };

  std::size_t grow(std::vector<std::size_t> subset, NodeFit fit, std::size_t depth) {
    const std::size_t index = nodes_.size();
    nodes_.emplace_back();
    {
      TreeNode& node = nodes_[index];
      node.weights = fit.rating;
      node.sample_count = subset.size();
      node.cost = fit.cost;
    }

    const bool can_split = depth < config_.max_depth && subset.size() >= 2 * config_.min_samples_per_leaf &&
                           fit.cost > 0.0;
    if (!can_split) return index;

    const auto best = best_candidate(subset, fit);
    if (!best) return index;

    SplitEvaluation split = evaluate_split(data_, subset, fit, best->params, config_.solver);
    if (!split.feasible || !(split.gain > config_.min_gain)) return index;

    subset.clear();
    subset.shrink_to_fit();
    const std::size_t left = grow(std::move(split.left_samples), std::move(split.left), depth + 1);
    const std::size_t right = grow(std::move(split.right_samples), std::move(split.right), depth + 1);
    TreeNode& node = nodes_[index];
    node.leaf = false;
    node.split = best->params;
    node.left = static_cast<std::int32_t>(left);
    node.right = static_cast<std::int32_t>(right);
    node.gain = split.gain;
    return index;
  }

  // Scans the random candidates with summed normal equations; the winner is
  // re-evaluated exactly by evaluate_split.
  std::optional<Candidate> best_candidate(const std::vector<std::size_t>& subset, const NodeFit& fit) {
    const std::size_t F = data_.feature_count();
    const std::size_t k = config_.features_per_node(F);
    const std::size_t T = config_.candidate_threshold_count;
    const std::size_t C = data_.model_count();

    // Partial Fisher-Yates draw of k distinct features.
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng_() % (F - i));
      std::swap(feature_pool_[i], feature_pool_[j]);
    }
    std::vector<std::size_t> chosen(feature_pool_.begin(), feature_pool_.begin() + static_cast<std::ptrdiff_t>(k));

    simplexls::NormalEquations total(C);
    for (std::size_t m : subset) total += per_sample_[m];

    std::optional<Candidate> best;
    double best_sse = std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, std::size_t>> order(subset.size());
    std::vector<double> thresholds(T);
    std::vector<std::size_t> by_value(T);
    std::vector<simplexls::NormalEquations> left_eq(T, simplexls::NormalEquations(C));
    std::vector<std::size_t> left_count(T), left_rows(T);

    for (std::size_t feature : chosen) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t i = 0; i < subset.size(); ++i) {
        const double v = data_.features(subset[i])[feature];
        order[i] = {v, i};
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      for (double& t : thresholds) t = lo + uniform01(rng_) * (hi - lo);
      if (!(hi > lo)) continue;

      std::sort(order.begin(), order.end());
      std::iota(by_value.begin(), by_value.end(), std::size_t{0});
      std::sort(by_value.begin(), by_value.end(),
                [&](std::size_t a, std::size_t b) { return thresholds[a] < thresholds[b]; });

      // One sweep in ascending value order fills the left statistics of
      // every threshold.
      simplexls::NormalEquations running(C);
      std::size_t pos = 0;
      for (std::size_t t : by_value) {
        while (pos < order.size() && order[pos].first <= thresholds[t]) {
          running += per_sample_[subset[order[pos].second]];
          ++pos;
        }
        left_eq[t] = running;
        left_count[t] = pos;
      }

      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t n_left = left_count[t];
        const std::size_t n_right = subset.size() - n_left;
        if (n_left < config_.min_samples_per_leaf || n_right < config_.min_samples_per_leaf) continue;
        const simplexls::NormalEquations& left = left_eq[t];
        simplexls::NormalEquations right = total;
        right -= left;
        if (left.row_count() == 0 || right.row_count() == 0) continue;
        const double sse = simplexls::solve(left, config_.solver).objective +
                           simplexls::solve(right, config_.solver).objective;
        if (sse < best_sse) {
          best_sse = sse;
          best = Candidate{SplitParams{feature, thresholds[t]}, sse};
        }
      }
    }
    const double parent_sse = fit.cost * static_cast<double>(fit.instances);
    if (best && !((parent_sse - best_sse) / static_cast<double>(fit.instances) > config_.min_gain)) best.reset();
    return best;
  }

  const ResponseDataset& data_;
  const std::vector<simplexls::NormalEquations>& per_sample_;
  const TrainConfig& config_;
  Rng& rng_;
  std::vector<std::size_t> feature_pool_;
  std::vector<TreeNode> nodes_;
};

std::vector<simplexls::NormalEquations> all_sample_equations(const ResponseDataset& data) {
  std::vector<simplexls::NormalEquations> out;
  out.reserve(data.sample_count());
  for (std::size_t m = 0; m < data.sample_count(); ++m) out.push_back(sample_equations(data, m));
  return out;
}

void check_trainable(const ResponseDataset& data, std::span<const std::size_t> samples) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "training set is empty");
  for (std::size_t m : samples) {
    if (m >= data.sample_count()) throw Error(ErrorCode::OutOfRange, "training sample index out of range");
  }
  if (visible_instances(data, samples) == 0)
    throw Error(ErrorCode::NoVisibleLandmarks, "training set has no visible landmark instance");
}

Tree train_tree_with(const ResponseDataset& data, const std::vector<simplexls::NormalEquations>& per_sample,
                     std::span<const std::size_t> samples, const TrainConfig& config, Rng& rng) {
  RecTreeBuilder builder(data, per_sample, config, rng);
  return builder.build(samples);
}

}  // namespace

Tree train_tree(const ResponseDataset& data, std::span<const std::size_t> samples, const TrainConfig& config,
                Rng& rng) {
  config.validate();
  check_trainable(data, samples);
  return train_tree_with(data, all_sample_equations(data), samples, config, rng);
}

std::vector<std::size_t> draw_tree_samples(std::span<const std::size_t> samples, const TrainConfig& config,
                                           std::size_t tree) {
  const auto count =
      static_cast<std::size_t>(std::ceil(config.bootstrap_fraction * static_cast<double>(samples.size())));
  Rng rng = make_rng(config.seed, "bootstrap", tree);
  std::vector<std::size_t> out;
  out.reserve(count);
  if (config.bootstrap) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(samples[rng() % samples.size()]);
    return out;
  }
  std::vector<std::size_t> pool(samples.begin(), samples.end());
  if (count < pool.size()) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
  }
  return pool;
}

Rng tree_rng(const TrainConfig& config, std::size_t tree) { return make_rng(config.seed, "tree", tree); }

Forest train_forest(const ResponseDataset& data, std::span<const std::size_t> samples, const TrainConfig& config) {
  config.validate();
  check_trainable(data, samples);
  const auto per_sample = all_sample_equations(data);

  Forest forest;
  forest.kind = LeafKind::Rating;
  forest.protocol = data.protocol();
  forest.gamma = 0.5;
  forest.trees.resize(config.tree_count);
  const auto start = std::chrono::steady_clock::now();
  parallel_for(config.tree_count, config.workers, [&](std::size_t t) {
    const auto drawn = draw_tree_samples(samples, config, t);
    Rng rng = tree_rng(config, t);
    forest.trees[t] = train_tree_with(data, per_sample, drawn, config, rng);
    if (config.on_tree_done) {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      config.on_tree_done({t, forest.trees[t].depth(), forest.trees[t].nodes().size(), elapsed.count()});
    }
  });
  return forest;
}

Forest train_forest(const ResponseDataset& data, const TrainConfig& config) {
  std::vector<std::size_t> all(data.sample_count());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return train_forest(data, all, config);
}

Prediction predict(const Forest& forest, std::span<const Landmark> responses, std::span<const double> features) {
  check_sample_dimensions(forest.protocol, responses, features);
  return apply_rating(forest.protocol, aggregate_rating(forest, features), responses, features, forest.gamma);
}

double select_gamma(std::span<const double> confidences, std::span<const std::uint8_t> visible) {
  if (confidences.empty()) throw Error(ErrorCode::InvalidArgument, "gamma calibration needs at least one landmark");
  if (confidences.size() != visible.size())
    throw Error(ErrorCode::DimensionMismatch, "confidence and visibility lists differ in length");

  std::vector<std::pair<double, std::uint8_t>> scored(confidences.size());
  for (std::size_t i = 0; i < scored.size(); ++i) scored[i] = {confidences[i], visible[i] ? 1 : 0};
  std::sort(scored.begin(), scored.end());

  std::vector<double> candidates{0.0, 1.0};
  for (const auto& s : scored) candidates.push_back(s.first);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  // Correct = visible with conf >= gamma plus invisible with conf < gamma.
  std::size_t visible_total = 0;
  for (const auto& s : scored) visible_total += s.second;
  std::size_t below = 0, visible_below = 0;
  double best_gamma = candidates.front();
  std::size_t best_correct = 0;
  bool first = true;
  for (double gamma : candidates) {
    while (below < scored.size() && scored[below].first < gamma) {
      visible_below += scored[below].second;
      ++below;
    }
    const std::size_t invisible_below = below - visible_below;
    const std::size_t correct = (visible_total - visible_below) + invisible_below;
    if (first || correct > best_correct) {
      best_correct = correct;
      best_gamma = gamma;
      first = false;
    }
  }
  return best_gamma;
}

double calibrate_gamma(Forest& forest, const ResponseDataset& validation) {
  if (validation.sample_count() == 0) throw Error(ErrorCode::InvalidArgument, "validation set is empty");
  if (!(validation.protocol() == forest.protocol))
    throw Error(ErrorCode::DimensionMismatch, "validation protocol differs from the forest protocol");
  std::vector<double> confidences;
  std::vector<std::uint8_t> visible;
  for (std::size_t m = 0; m < validation.sample_count(); ++m) {
    const Prediction p = predict(forest, validation.responses(m), validation.features(m));
    for (std::size_t n = 0; n < validation.landmark_count(); ++n) {
      confidences.push_back(p.visibility_confidence[n]);
      visible.push_back(validation.is_visible(m, n) ? 1 : 0);
    }
  }
  forest.gamma = select_gamma(confidences, visible);
  return forest.gamma;
}

}  // namespace emrt
