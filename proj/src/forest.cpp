#include "emrt/forest.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "emrt/error.hpp"

namespace emrt {

Tree::Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw Error(ErrorCode::InvalidArgument, "tree must have at least one node");
}

std::size_t Tree::leaf_index(std::span<const double> features) const {
  std::size_t i = 0;
  while (!nodes_[i].leaf) {
    const TreeNode& node = nodes_[i];
    i = static_cast<std::size_t>(node.split.goes_left(features) ? node.left : node.right);
  }
  return i;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.leaf; }));
}

std::size_t Tree::depth() const {
  std::vector<std::size_t> level(nodes_.size(), 0);
  std::size_t deepest = 0;
  // Children always follow their parent in the node array.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (!nodes_[i].leaf) {
      level[static_cast<std::size_t>(nodes_[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes_[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

void check_sample_dimensions(const ModelProtocol& protocol, std::span<const Landmark> responses,
                             std::span<const double> features) {
  const std::size_t expected = protocol.model_count() * protocol.landmark_count();
  if (responses.size() != expected)
    throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(expected) + " responses (C*N), got " +
                                                  std::to_string(responses.size()));
  if (features.size() != protocol.feature_count())
    throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(protocol.feature_count()) +
                                                  " features, got " + std::to_string(features.size()));
}

RatingVector aggregate_rating(const Forest& forest, std::span<const double> features) {
  if (features.size() != forest.protocol.feature_count())
    throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(forest.protocol.feature_count()) +
                                                  " features, got " + std::to_string(features.size()));
  const std::size_t C = forest.protocol.model_count();
  std::vector<double> sum(C, 0.0);
  double total = 0.0;
  for (const Tree& tree : forest.trees) {
    const TreeNode& leaf = tree.route(features);
    const double s = static_cast<double>(leaf.sample_count);
    for (std::size_t c = 0; c < C; ++c) sum[c] += s * leaf.weights[c];
    total += s;
  }
  for (double& v : sum) v /= total;
  return RatingVector(std::move(sum));
}

Prediction apply_rating(const ModelProtocol& protocol, const RatingVector& w, std::span<const Landmark> responses,
                        std::span<const double> features, double gamma) {
  check_sample_dimensions(protocol, responses, features);
  const std::size_t C = protocol.model_count();
  const std::size_t N = protocol.landmark_count();
  if (w.size() != C)
    throw Error(ErrorCode::DimensionMismatch, "rating has " + std::to_string(w.size()) + " entries, expected " +
                                                  std::to_string(C));
  Prediction out;
  out.landmarks.assign(N, Landmark{});
  out.visibility_confidence.assign(N, 0.0);
  out.visibility_flag.assign(N, 0);
  for (std::size_t n = 0; n < N; ++n) {
    Landmark y;
    double v = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const Landmark& x = responses[c * N + n];
      y.x += w[c] * x.x;
      y.y += w[c] * x.y;
      const std::size_t f = protocol.find_feature(c, n);
      if (f != ModelProtocol::npos) v += w[c] * features[f];
    }
    v = std::clamp(v, 0.0, 1.0);
    out.landmarks[n] = y;
    out.visibility_confidence[n] = v;
    out.visibility_flag[n] = v >= gamma ? 1 : 0;
  }
  return out;
}

void validate_forest(const Forest& forest) {
  if (forest.trees.empty()) throw Error(ErrorCode::Schema, "forest must contain at least one tree");
  if (!(forest.gamma >= 0.0 && forest.gamma <= 1.0)) throw Error(ErrorCode::Schema, "gamma must lie in [0, 1]");
  const std::size_t C = forest.protocol.model_count();
  const std::size_t F = forest.protocol.feature_count();
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const auto& nodes = forest.trees[t].nodes();
    const std::string tag = "tree " + std::to_string(t) + ": ";
    std::vector<int> parents(nodes.size(), 0);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const TreeNode& node = nodes[i];
      if (node.weights.size() != C) throw Error(ErrorCode::Schema, tag + "node vector length differs from C");
      if (node.leaf) {
        if (node.sample_count < 1) throw Error(ErrorCode::Schema, tag + "leaf sampleCount must be >= 1");
        continue;
      }
      if (node.split.feature >= F) throw Error(ErrorCode::Schema, tag + "split feature index out of range");
      if (!std::isfinite(node.split.threshold)) throw Error(ErrorCode::Schema, tag + "split threshold not finite");
      for (std::int32_t child : {node.left, node.right}) {
        if (child <= static_cast<std::int32_t>(i) || child >= static_cast<std::int32_t>(nodes.size()))
          throw Error(ErrorCode::Schema, tag + "child link out of range");
        ++parents[static_cast<std::size_t>(child)];
      }
    }
    for (std::size_t i = 1; i < nodes.size(); ++i) {
      if (parents[i] != 1) throw Error(ErrorCode::Schema, tag + "node " + std::to_string(i) + " is not a proper child");
    }
  }
}

}  // namespace emrt
