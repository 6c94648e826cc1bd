#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "emrt/dataset.hpp"
#include "emrt/forest.hpp"
#include "emrt/random.hpp"
#include "emrt/simplexls.hpp"

namespace emrt {

/// Progress record emitted once per finished tree.
struct TreeProgress {
  std::size_t tree = 0;
  std::size_t depth = 0;
  std::size_t nodes = 0;
  double elapsed_seconds = 0.0;
};

/// Hyperparameters shared by the recommendation and classification forests.
struct TrainConfig {
  std::size_t tree_count = 10;
  std::size_t max_depth = 12;
  std::size_t min_samples_per_leaf = 10;
  /// 0 selects ceil(sqrt(F)).
  std::size_t candidate_feature_count = 0;
  std::size_t candidate_threshold_count = 10;
  double min_gain = 1e-9;
  double bootstrap_fraction = 1.0;
  /// With replacement (bagging) when true; a plain subsample otherwise.
  bool bootstrap = true;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  simplexls::Options solver;
  std::function<void(const TreeProgress&)> on_tree_done;

  /// Throws Error(InvalidArgument) naming the offending field.
  void validate() const;
  std::size_t features_per_node(std::size_t feature_count) const;
};

/// Rating fitted to one node subset and its mean-form cost.
struct NodeFit {
  RatingVector rating;
  /// Mean squared residual per visible landmark instance.
  double cost = 0.0;
  /// Number of visible (m, n) instances in the subset, duplicates counted.
  std::size_t instances = 0;
};

struct SplitEvaluation {
  bool feasible = false;
  double gain = -std::numeric_limits<double>::infinity();
  NodeFit left;
  NodeFit right;
  std::vector<std::size_t> left_samples;
  std::vector<std::size_t> right_samples;
};

/// Number of visible instances over the subset (duplicates counted).
std::size_t visible_instances(const ResponseDataset& data, std::span<const std::size_t> subset);

/// Mean over visible (m, n) in the subset of ||y - sum_c w_c x_c||^2.
/// Throws Error(NoVisibleLandmarks) when the subset has none.
double node_cost(const ResponseDataset& data, std::span<const std::size_t> subset, const RatingVector& w);

/// Simplex-constrained least-squares rating for the subset.
NodeFit fit_node_rating(const ResponseDataset& data, std::span<const std::size_t> subset,
                        const simplexls::Options& options = {});

/// Routes phi_k <= tau left, refits both children and returns
/// gain = cost(parent) - sum_children (|child| / |parent|) cost(child), where
/// |.| counts visible instances. Empty children (or children without a
/// visible instance) yield feasible = false and gain = -inf.
SplitEvaluation evaluate_split(const ResponseDataset& data, std::span<const std::size_t> subset,
                               const NodeFit& parent, const SplitParams& params,
                               const simplexls::Options& options = {});

/// Grows one recommendation tree on `samples` (duplicates allowed).
Tree train_tree(const ResponseDataset& data, std::span<const std::size_t> samples, const TrainConfig& config,
                Rng& rng);

/// Forest over all samples, or over a subset of them.
Forest train_forest(const ResponseDataset& data, const TrainConfig& config);
Forest train_forest(const ResponseDataset& data, std::span<const std::size_t> samples, const TrainConfig& config);

/// Training indices of tree t: ceil(fraction * |samples|) draws.
std::vector<std::size_t> draw_tree_samples(std::span<const std::size_t> samples, const TrainConfig& config,
                                           std::size_t tree);

/// RNG stream used to grow tree t.
Rng tree_rng(const TrainConfig& config, std::size_t tree);

/// Count-weighted rating blend over all trees, then the landmark/visibility
/// blend of the pool responses.
Prediction predict(const Forest& forest, std::span<const Landmark> responses, std::span<const double> features);

/// Threshold in {0, 1} u {distinct confidences} maximizing visibility
/// accuracy (confidence >= gamma means visible); ties go to the smallest.
double select_gamma(std::span<const double> confidences, std::span<const std::uint8_t> visible);

/// Scores every (m, n) of the validation set, stores the best gamma in the
/// forest and returns it.
double calibrate_gamma(Forest& forest, const ResponseDataset& validation);

}  // namespace emrt
