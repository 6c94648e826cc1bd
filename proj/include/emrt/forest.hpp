#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "emrt/protocol.hpp"
#include "emrt/types.hpp"

namespace emrt {

struct SplitParams {
  std::size_t feature = 0;
  double threshold = 0.0;

  /// Samples with phi[feature] <= threshold go left.
  bool goes_left(std::span<const double> features) const { return features[feature] <= threshold; }

  friend bool operator==(const SplitParams&, const SplitParams&) = default;
};

/// Node of a flat binary tree. Leaves carry the rating (recommendation trees)
/// or class posterior (classification trees) plus the number of training
/// samples routed there. Split nodes also keep the rating fitted to their own
/// subset together with the cost and gain recorded when the split was chosen.
struct TreeNode {
  bool leaf = true;
  SplitParams split;
  std::int32_t left = -1;
  std::int32_t right = -1;
  RatingVector weights;
  std::size_t sample_count = 0;
  double cost = 0.0;
  double gain = 0.0;

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class Tree {
 public:
  Tree() = default;
  explicit Tree(std::vector<TreeNode> nodes);

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }
  const TreeNode& node(std::size_t i) const { return nodes_[i]; }

  /// Index of the leaf reached by `features`.
  std::size_t leaf_index(std::span<const double> features) const;
  const TreeNode& route(std::span<const double> features) const { return nodes_[leaf_index(features)]; }

  std::size_t leaf_count() const;
  std::size_t depth() const;

  friend bool operator==(const Tree&, const Tree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

enum class LeafKind { Rating, Posterior };

/// An ensemble of recommendation trees (rating leaves) or classification
/// trees (posterior leaves) over one model protocol.
struct Forest {
  LeafKind kind = LeafKind::Rating;
  std::vector<Tree> trees;
  ModelProtocol protocol;
  double gamma = 0.5;

  friend bool operator==(const Forest&, const Forest&) = default;
};

/// Leaf-count-weighted average of the leaf vectors reached by `features`:
/// W = sum_t s_t w_t / sum_t s_t.
RatingVector aggregate_rating(const Forest& forest, std::span<const double> features);

/// Blends pool responses with rating w: y_n = sum_c w_c x_{c,n} and
/// v_n = sum over models whose protocol shows n of w_c phi_{c,n}, clamped to
/// [0, 1] and thresholded at gamma.
Prediction apply_rating(const ModelProtocol& protocol, const RatingVector& w, std::span<const Landmark> responses,
                        std::span<const double> features, double gamma);

/// Throws Error(DimensionMismatch) unless responses is C*N and features is F.
void check_sample_dimensions(const ModelProtocol& protocol, std::span<const Landmark> responses,
                             std::span<const double> features);

/// Structural checks shared by loaders and trainers: child links in range,
/// strict binary tree, leaf vectors of length C.
void validate_forest(const Forest& forest);

}  // namespace emrt
