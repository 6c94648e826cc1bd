#include "emrt/classforest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "emrt/error.hpp"
#include "emrt/parallel.hpp"

namespace emrt {

ClassLabels derive_labels(const ResponseDataset& data, std::optional<std::span<const std::size_t>> cluster_ids) {
  const std::size_t M = data.sample_count();
  const std::size_t C = data.model_count();
  ClassLabels out;
  out.labels.resize(M);
  if (cluster_ids) {
    if (cluster_ids->size() != M)
      throw Error(ErrorCode::DimensionMismatch, "cluster ids cover " + std::to_string(cluster_ids->size()) +
                                                    " samples, dataset has " + std::to_string(M));
    for (std::size_t m = 0; m < M; ++m) {
      if ((*cluster_ids)[m] >= C) throw Error(ErrorCode::OutOfRange, "cluster id out of range");
      out.labels[m] = (*cluster_ids)[m];
    }
    return out;
  }
  for (std::size_t m = 0; m < M; ++m) {
    std::size_t best = 0;
    double best_error = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) {
      double error = 0.0;
      for (std::uint32_t n : data.visible(m)) error += squared_distance(data.truth(m, n), data.response(m, c, n));
      if (error < best_error) {
        best_error = error;
        best = c;
      }
    }
    out.labels[m] = best;
  }
  return out;
}

double entropy(std::span<const std::size_t> class_counts) {
  const double total = static_cast<double>(std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0}));
  if (total == 0.0) throw Error(ErrorCode::InvalidArgument, "entropy of an empty subset");
  double h = 0.0;
  for (std::size_t count : class_counts) {
    if (count == 0) continue;
    const double p = static_cast<double>(count) / total;
    h -= p * std::log(p);
  }
  return h;
}

double label_entropy(const ClassLabels& labels, std::span<const std::size_t> subset, std::size_t class_count) {
  std::vector<std::size_t> counts(class_count, 0);
  for (std::size_t m : subset) ++counts.at(labels.labels.at(m));
  return entropy(counts);
}

namespace {

RatingVector posterior_of(std::span<const std::size_t> counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  std::vector<double> p(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) p[c] = static_cast<double>(counts[c]) / total;
  return RatingVector(std::move(p));
}

class ClassTreeBuilder {
 public:
  ClassTreeBuilder(const ResponseDataset& data, const ClassLabels& labels, const TrainConfig& config, Rng& rng)
      : data_(data), labels_(labels), config_(config), rng_(rng), classes_(data.model_count()) {
    feature_pool_.resize(data.feature_count());
    std::iota(feature_pool_.begin(), feature_pool_.end(), std::size_t{0});
  }

  Tree build(std::span<const std::size_t> samples) {
    grow(std::vector<std::size_t>(samples.begin(), samples.end()), 0);
    return Tree(std::move(nodes_));
  }

 private:
  std::vector<std::size_t> counts_of(const std::vector<std::size_t>& subset) const {
    std::vector<std::size_t> counts(classes_, 0);
    for (std::size_t m : subset) ++counts[labels_.labels[m]];
    return counts;
  }

  std::size_t grow(std::vector<std::size_t> subset, std::size_t depth) {
    const std::size_t index = nodes_.size();
    nodes_.emplace_back();
    const auto counts = counts_of(subset);
    const double h = entropy(counts);
    nodes_[index].weights = posterior_of(counts);
    nodes_[index].sample_count = subset.size();
    nodes_[index].cost = h;

    if (depth >= config_.max_depth || subset.size() < 2 * config_.min_samples_per_leaf || h <= 0.0) return index;

    double best_gain = -std::numeric_limits<double>::infinity();
    SplitParams best;
    scan(subset, counts, h, best_gain, best);
    if (!(best_gain > config_.min_gain)) return index;

    std::vector<std::size_t> left, right;
    for (std::size_t m : subset) (best.goes_left(data_.features(m)) ? left : right).push_back(m);
    subset.clear();
    subset.shrink_to_fit();
    const std::size_t l = grow(std::move(left), depth + 1);
    const std::size_t r = grow(std::move(right), depth + 1);
    TreeNode& node = nodes_[index];
    node.leaf = false;
    node.split = best;
    node.left = static_cast<std::int32_t>(l);
    node.right = static_cast<std::int32_t>(r);
    node.gain = best_gain;
    return index;
  }

  void scan(const std::vector<std::size_t>& subset, const std::vector<std::size_t>& counts, double h,
            double& best_gain, SplitParams& best) {
    const std::size_t F = data_.feature_count();
    const std::size_t k = config_.features_per_node(F);
    const std::size_t T = config_.candidate_threshold_count;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng_() % (F - i));
      std::swap(feature_pool_[i], feature_pool_[j]);
    }
    const std::vector<std::size_t> chosen(feature_pool_.begin(), feature_pool_.begin() + static_cast<std::ptrdiff_t>(k));

    std::vector<std::pair<double, std::size_t>> order(subset.size());
    std::vector<double> thresholds(T);
    std::vector<std::size_t> by_value(T);
    std::vector<std::vector<std::size_t>> left_counts(T, std::vector<std::size_t>(classes_));
    std::vector<std::size_t> left_size(T);
    std::vector<std::size_t> right_counts(classes_);
    const double n = static_cast<double>(subset.size());

    for (std::size_t feature : chosen) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t i = 0; i < subset.size(); ++i) {
        const double v = data_.features(subset[i])[feature];
        order[i] = {v, labels_.labels[subset[i]]};
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      for (double& t : thresholds) t = lo + uniform01(rng_) * (hi - lo);
      if (!(hi > lo)) continue;
      std::sort(order.begin(), order.end());
      std::iota(by_value.begin(), by_value.end(), std::size_t{0});
      std::sort(by_value.begin(), by_value.end(),
                [&](std::size_t a, std::size_t b) { return thresholds[a] < thresholds[b]; });

      std::vector<std::size_t> running(classes_, 0);
      std::size_t pos = 0;
      for (std::size_t t : by_value) {
        while (pos < order.size() && order[pos].first <= thresholds[t]) ++running[order[pos++].second];
        left_counts[t] = running;
        left_size[t] = pos;
      }
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t nl = left_size[t];
        const std::size_t nr = subset.size() - nl;
        if (nl < config_.min_samples_per_leaf || nr < config_.min_samples_per_leaf) continue;
        for (std::size_t c = 0; c < classes_; ++c) right_counts[c] = counts[c] - left_counts[t][c];
        const double gain = h - (static_cast<double>(nl) / n) * entropy(left_counts[t]) -
                            (static_cast<double>(nr) / n) * entropy(right_counts);
        if (gain > best_gain) {
          best_gain = gain;
          best = SplitParams{feature, thresholds[t]};
        }
      }
    }
  }

  const ResponseDataset& data_;
  const ClassLabels& labels_;
  const TrainConfig& config_;
  Rng& rng_;
  std::size_t classes_;
  std::vector<std::size_t> feature_pool_;
  std::vector<TreeNode> nodes_;
};

void check_labels(const ResponseDataset& data, const ClassLabels& labels) {
  if (labels.labels.size() != data.sample_count())
    throw Error(ErrorCode::DimensionMismatch, "label count differs from sample count");
  for (std::size_t l : labels.labels) {
    if (l >= data.model_count()) throw Error(ErrorCode::OutOfRange, "class label out of range");
  }
}

}  // namespace

Tree train_class_tree(const ResponseDataset& data, const ClassLabels& labels, std::span<const std::size_t> samples,
                      const TrainConfig& config, Rng& rng) {
  config.validate();
  check_labels(data, labels);
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "training set is empty");
  ClassTreeBuilder builder(data, labels, config, rng);
  return builder.build(samples);
}

Forest train_class_forest(const ResponseDataset& data, const ClassLabels& labels,
                          std::span<const std::size_t> samples, const TrainConfig& config) {
  config.validate();
  check_labels(data, labels);
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "training set is empty");
  for (std::size_t m : samples) {
    if (m >= data.sample_count()) throw Error(ErrorCode::OutOfRange, "training sample index out of range");
  }
  Forest forest;
  forest.kind = LeafKind::Posterior;
  forest.protocol = data.protocol();
  forest.gamma = 0.5;
  forest.trees.resize(config.tree_count);
  const auto start = std::chrono::steady_clock::now();
  parallel_for(config.tree_count, config.workers, [&](std::size_t t) {
    const auto drawn = draw_tree_samples(samples, config, t);
    Rng rng = tree_rng(config, t);
    ClassTreeBuilder builder(data, labels, config, rng);
    forest.trees[t] = builder.build(drawn);
    if (config.on_tree_done) {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      config.on_tree_done({t, forest.trees[t].depth(), forest.trees[t].nodes().size(), elapsed.count()});
    }
  });
  return forest;
}

Forest train_class_forest(const ResponseDataset& data, const ClassLabels& labels, const TrainConfig& config) {
  std::vector<std::size_t> all(data.sample_count());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return train_class_forest(data, labels, all, config);
}

std::size_t top_vote(const Forest& forest, std::span<const double> features) {
  if (features.size() != forest.protocol.feature_count())
    throw Error(ErrorCode::DimensionMismatch, "feature vector length differs from the forest protocol");
  std::vector<std::size_t> votes(forest.protocol.model_count(), 0);
  for (const Tree& tree : forest.trees) ++votes[tree.route(features).weights.argmax()];
  return static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

Prediction predict_top_vote(const Forest& forest, std::span<const Landmark> responses,
                            std::span<const double> features) {
  check_sample_dimensions(forest.protocol, responses, features);
  const std::size_t winner = top_vote(forest, features);
  return apply_rating(forest.protocol, RatingVector::indicator(forest.protocol.model_count(), winner), responses,
                      features, forest.gamma);
}

Prediction predict_posterior_rating(const Forest& forest, std::span<const Landmark> responses,
                                    std::span<const double> features) {
  check_sample_dimensions(forest.protocol, responses, features);
  return apply_rating(forest.protocol, aggregate_rating(forest, features), responses, features, forest.gamma);
}

}  // namespace emrt
