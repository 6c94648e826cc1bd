#include "emrt/protocol.hpp"

#include <string>

#include "emrt/error.hpp"

namespace emrt {

ModelProtocol::ModelProtocol(std::vector<std::vector<std::uint8_t>> masks) : masks_(std::move(masks)) {
  if (masks_.empty()) throw Error(ErrorCode::InvalidArgument, "protocol needs at least one model mask");
  landmark_count_ = masks_.front().size();
  if (landmark_count_ == 0) throw Error(ErrorCode::InvalidArgument, "protocol masks must cover at least one landmark");

  index_.assign(masks_.size() * landmark_count_, npos);
  offsets_.reserve(masks_.size());
  for (std::size_t c = 0; c < masks_.size(); ++c) {
    auto& mask = masks_[c];
    if (mask.size() != landmark_count_) {
      throw Error(ErrorCode::DimensionMismatch, "mask " + std::to_string(c) + " has length " +
                                                    std::to_string(mask.size()) + ", expected " +
                                                    std::to_string(landmark_count_));
    }
    offsets_.push_back(slots_.size());
    for (std::size_t n = 0; n < landmark_count_; ++n) {
      if (mask[n] > 1) throw Error(ErrorCode::Schema, "mask " + std::to_string(c) + " entry is not binary");
      if (mask[n]) {
        index_[c * landmark_count_ + n] = slots_.size();
        slots_.emplace_back(c, n);
      }
    }
    if (slots_.size() == offsets_.back()) {
      throw Error(ErrorCode::InvalidArgument, "mask " + std::to_string(c) + " has no visible landmark");
    }
  }
}

std::size_t ModelProtocol::feature_index(std::size_t c, std::size_t n) const {
  if (c >= masks_.size() || n >= landmark_count_) {
    throw Error(ErrorCode::OutOfRange, "feature slot (" + std::to_string(c) + ", " + std::to_string(n) +
                                           ") outside protocol dimensions");
  }
  const std::size_t f = index_[c * landmark_count_ + n];
  if (f == npos) {
    throw Error(ErrorCode::OutOfRange, "landmark " + std::to_string(n) + " is not visible in the protocol of model " +
                                           std::to_string(c));
  }
  return f;
}

std::pair<std::size_t, std::size_t> ModelProtocol::slot(std::size_t f) const {
  if (f >= slots_.size()) throw Error(ErrorCode::OutOfRange, "feature index " + std::to_string(f) + " out of range");
  return slots_[f];
}

}  // namespace emrt
