#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace emrt {

/// Landmark visibility protocol of every pool model, plus the bijection
/// between visible (model, landmark) slots and recommendation-feature indices.
///
/// Feature slots are laid out model-major: all visible landmarks of model 0
/// in ascending landmark order, then model 1, and so on. Each model's scores
/// therefore occupy one contiguous range.
class ModelProtocol {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  ModelProtocol() = default;

  /// masks[c][n] != 0 marks landmark n visible for model c. Requires at least
  /// one mask, equal lengths, and at least one visible landmark per mask.
  explicit ModelProtocol(std::vector<std::vector<std::uint8_t>> masks);

  std::size_t model_count() const noexcept { return masks_.size(); }
  std::size_t landmark_count() const noexcept { return landmark_count_; }
  std::size_t feature_count() const noexcept { return slots_.size(); }

  bool visible(std::size_t c, std::size_t n) const { return masks_[c][n] != 0; }
  std::span<const std::uint8_t> mask(std::size_t c) const { return masks_[c]; }
  const std::vector<std::vector<std::uint8_t>>& masks() const noexcept { return masks_; }

  /// Throws Error(OutOfRange) for out-of-range or protocol-invisible slots.
  std::size_t feature_index(std::size_t c, std::size_t n) const;

  /// Like feature_index but returns npos instead of throwing on a masked slot.
  std::size_t find_feature(std::size_t c, std::size_t n) const noexcept {
    return index_[c * landmark_count_ + n];
  }

  /// Inverse map: feature index -> (model, landmark).
  std::pair<std::size_t, std::size_t> slot(std::size_t f) const;

  /// First feature index of model c's contiguous slice.
  std::size_t model_offset(std::size_t c) const { return offsets_[c]; }

  friend bool operator==(const ModelProtocol& a, const ModelProtocol& b) { return a.masks_ == b.masks_; }

 private:
  std::vector<std::vector<std::uint8_t>> masks_;
  std::size_t landmark_count_ = 0;
  std::vector<std::size_t> index_;
  std::vector<std::size_t> offsets_;
  std::vector<std::pair<std::size_t, std::size_t>> slots_;
};

}  // namespace emrt
