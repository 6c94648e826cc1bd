#include <cmath>
#include <numeric>
#include <sstream>

#include "emrt/error.hpp"
#include "emrt/types.hpp"

namespace emrt {

bool satisfies_simplex(std::span<const double> w, double tolerance) {
  if (w.empty()) return false;
  double sum = 0.0;
  for (double v : w) {
    if (!std::isfinite(v) || v < -tolerance) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tolerance;
}

RatingVector::RatingVector(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.empty()) throw Error(ErrorCode::InvalidArgument, "rating vector must have at least one model");
  if (!satisfies_simplex(weights_)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "rating vector violates simplex constraints: [";
    for (std::size_t c = 0; c < weights_.size(); ++c) msg << (c ? ", " : "") << weights_[c];
    msg << "]";
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
  for (double& v : weights_) {
    if (v < 0.0) v = 0.0;
  }
}

RatingVector RatingVector::uniform(std::size_t model_count) {
  return RatingVector(std::vector<double>(model_count, 1.0 / static_cast<double>(model_count)));
}

RatingVector RatingVector::indicator(std::size_t model_count, std::size_t model) {
  if (model >= model_count) throw Error(ErrorCode::OutOfRange, "indicator model index out of range");
  std::vector<double> w(model_count, 0.0);
  w[model] = 1.0;
  return RatingVector(std::move(w));
}

std::size_t RatingVector::argmax() const {
  std::size_t best = 0;
  for (std::size_t c = 1; c < weights_.size(); ++c) {
    if (weights_[c] > weights_[best]) best = c;
  }
  return best;
}

}  // namespace emrt
