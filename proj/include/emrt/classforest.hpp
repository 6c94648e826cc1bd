#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "emrt/dataset.hpp"
#include "emrt/forest.hpp"
#include "emrt/recforest.hpp"

namespace emrt {

/// Per-sample model label in [0, C).
struct ClassLabels {
  std::vector<std::size_t> labels;
};

/// Uses `cluster_ids` when given (the generator's latent cluster), otherwise
/// the model with the smallest summed squared error over the sample's
/// visible landmarks, ties to the smallest index.
ClassLabels derive_labels(const ResponseDataset& data,
                          std::optional<std::span<const std::size_t>> cluster_ids = std::nullopt);

/// Shannon entropy (natural log) of a class histogram; 0 ln 0 = 0.
double entropy(std::span<const std::size_t> class_counts);

/// Entropy of the labels of `subset` over C classes.
double label_entropy(const ClassLabels& labels, std::span<const std::size_t> subset, std::size_t class_count);

/// Entropy-gain tree; leaves hold the empirical class posterior.
Tree train_class_tree(const ResponseDataset& data, const ClassLabels& labels, std::span<const std::size_t> samples,
                      const TrainConfig& config, Rng& rng);

/// Same sampling protocol as train_forest, with posterior leaves.
Forest train_class_forest(const ResponseDataset& data, const ClassLabels& labels, const TrainConfig& config);
Forest train_class_forest(const ResponseDataset& data, const ClassLabels& labels,
                          std::span<const std::size_t> samples, const TrainConfig& config);

/// Majority vote over per-tree argmax posteriors, ties to the smallest model.
std::size_t top_vote(const Forest& forest, std::span<const double> features);

/// Returns the winning model's responses verbatim. Its own detection scores
/// give the visibility confidence; landmarks outside its protocol get 0.
Prediction predict_top_vote(const Forest& forest, std::span<const Landmark> responses,
                            std::span<const double> features);

/// Count-weighted mean posterior used as the rating.
Prediction predict_posterior_rating(const Forest& forest, std::span<const Landmark> responses,
                                    std::span<const double> features);

}  // namespace emrt
