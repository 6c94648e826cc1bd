#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "emrt/protocol.hpp"
#include "emrt/types.hpp"

namespace emrt {

/// Raw per-sample arrays, filled by loaders and the generator before
/// validation. Layouts: responses [m][c][n], ground_truth [m][n],
/// features [m][f].
struct DatasetArrays {
  std::size_t sample_count = 0;
  std::vector<Landmark> responses;
  std::vector<Landmark> ground_truth;
  std::vector<std::vector<std::uint32_t>> visible;
  std::vector<double> features;
  std::vector<double> normalizer;
};

/// Pool responses, ground truth, visibility and recommendation features for
/// M samples. Immutable once constructed; every invariant is checked in the
/// constructor.
///
/// Ground-truth entries outside the visible set are stored as NaN and must
/// only be reached through visible(m).
class ResponseDataset {
 public:
  ResponseDataset() = default;
  ResponseDataset(ModelProtocol protocol, DatasetArrays arrays);

  std::size_t sample_count() const noexcept { return sample_count_; }
  std::size_t model_count() const noexcept { return protocol_.model_count(); }
  std::size_t landmark_count() const noexcept { return protocol_.landmark_count(); }
  std::size_t feature_count() const noexcept { return protocol_.feature_count(); }
  const ModelProtocol& protocol() const noexcept { return protocol_; }

  /// All C*N responses of sample m, model-major.
  std::span<const Landmark> responses(std::size_t m) const {
    const std::size_t stride = model_count() * landmark_count();
    return {responses_.data() + m * stride, stride};
  }
  const Landmark& response(std::size_t m, std::size_t c, std::size_t n) const {
    return responses_[(m * model_count() + c) * landmark_count() + n];
  }
  std::span<const Landmark> ground_truth(std::size_t m) const {
    return {ground_truth_.data() + m * landmark_count(), landmark_count()};
  }
  const Landmark& truth(std::size_t m, std::size_t n) const { return ground_truth_[m * landmark_count() + n]; }
  /// Ascending landmark indices n with (m, n) in V.
  std::span<const std::uint32_t> visible(std::size_t m) const { return visible_[m]; }
  bool is_visible(std::size_t m, std::size_t n) const;
  std::span<const double> features(std::size_t m) const {
    return {features_.data() + m * feature_count(), feature_count()};
  }
  double normalizer(std::size_t m) const { return normalizer_[m]; }

  /// Total number of visible (m, n) pairs.
  std::size_t visible_instance_count() const;

  /// New dataset holding the listed samples in the given order.
  ResponseDataset select(std::span<const std::size_t> samples) const;

 private:
  ModelProtocol protocol_;
  std::size_t sample_count_ = 0;
  std::vector<Landmark> responses_;
  std::vector<Landmark> ground_truth_;
  std::vector<std::vector<std::uint32_t>> visible_;
  std::vector<double> features_;
  std::vector<double> normalizer_;
};

}  // namespace emrt
