#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace emrt {

struct Landmark {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Landmark&, const Landmark&) = default;
};

inline double squared_distance(const Landmark& a, const Landmark& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

/// Nonnegative weights over the C pool models that sum to one.
class RatingVector {
 public:
  static constexpr double kTolerance = 1e-9;

  RatingVector() = default;

  /// Validates the simplex constraints; entries in [-kTolerance, 0) are
  /// clamped to zero. Throws Error otherwise.
  explicit RatingVector(std::vector<double> weights);

  static RatingVector uniform(std::size_t model_count);
  static RatingVector indicator(std::size_t model_count, std::size_t model);

  std::size_t size() const noexcept { return weights_.size(); }
  double operator[](std::size_t c) const { return weights_[c]; }
  std::span<const double> weights() const noexcept { return weights_; }

  /// Index of the largest weight, ties to the smallest index.
  std::size_t argmax() const;

  friend bool operator==(const RatingVector&, const RatingVector&) = default;

 private:
  std::vector<double> weights_;
};

bool satisfies_simplex(std::span<const double> w, double tolerance = RatingVector::kTolerance);

struct Prediction {
  std::vector<Landmark> landmarks;
  std::vector<double> visibility_confidence;
  std::vector<std::uint8_t> visibility_flag;
};

}  // namespace emrt
