#include "emrt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "emrt/error.hpp"

namespace emrt {
namespace {

std::string where(std::size_t m) { return "sample " + std::to_string(m) + ": "; }

bool finite(const Landmark& p) { return std::isfinite(p.x) && std::isfinite(p.y); }

}  // namespace

ResponseDataset::ResponseDataset(ModelProtocol protocol, DatasetArrays arrays)
    : protocol_(std::move(protocol)),
      sample_count_(arrays.sample_count),
      responses_(std::move(arrays.responses)),
      ground_truth_(std::move(arrays.ground_truth)),
      visible_(std::move(arrays.visible)),
      features_(std::move(arrays.features)),
      normalizer_(std::move(arrays.normalizer)) {
  const std::size_t M = sample_count_;
  const std::size_t C = protocol_.model_count();
  const std::size_t N = protocol_.landmark_count();
  const std::size_t F = protocol_.feature_count();
  if (C == 0) throw Error(ErrorCode::InvalidArgument, "dataset requires a non-empty protocol");

  if (responses_.size() != M * C * N)
    throw Error(ErrorCode::DimensionMismatch, "responses hold " + std::to_string(responses_.size()) +
                                                  " landmarks, expected M*C*N = " + std::to_string(M * C * N));
  if (ground_truth_.size() != M * N)
    throw Error(ErrorCode::DimensionMismatch, "ground truth holds " + std::to_string(ground_truth_.size()) +
                                                  " landmarks, expected M*N = " + std::to_string(M * N));
  if (visible_.size() != M)
    throw Error(ErrorCode::DimensionMismatch, "visibility lists: " + std::to_string(visible_.size()) +
                                                  ", expected " + std::to_string(M));
  if (features_.size() != M * F)
    throw Error(ErrorCode::DimensionMismatch, "features hold " + std::to_string(features_.size()) +
                                                  " scores, expected M*F = " + std::to_string(M * F));
  if (normalizer_.size() != M)
    throw Error(ErrorCode::DimensionMismatch, "normalizers: " + std::to_string(normalizer_.size()) +
                                                  ", expected " + std::to_string(M));

  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t i = 0; i < C * N; ++i) {
      if (!finite(responses_[m * C * N + i]))
        throw Error(ErrorCode::NonFinite, where(m) + "non-finite response for model " + std::to_string(i / N) +
                                              " landmark " + std::to_string(i % N));
    }
    auto& vis = visible_[m];
    std::sort(vis.begin(), vis.end());
    for (std::size_t i = 0; i < vis.size(); ++i) {
      if (vis[i] >= N)
        throw Error(ErrorCode::OutOfRange, where(m) + "visibility index out of range (" + std::to_string(vis[i]) +
                                               " >= N = " + std::to_string(N) + ")");
      if (i > 0 && vis[i] == vis[i - 1])
        throw Error(ErrorCode::Schema, where(m) + "visibility index " + std::to_string(vis[i]) + " repeated");
      if (!finite(ground_truth_[m * N + vis[i]]))
        throw Error(ErrorCode::NonFinite,
                    where(m) + "non-finite ground truth for visible landmark " + std::to_string(vis[i]));
    }
    for (std::size_t f = 0; f < F; ++f) {
      if (!std::isfinite(features_[m * F + f]))
        throw Error(ErrorCode::NonFinite, where(m) + "non-finite feature score at index " + std::to_string(f));
    }
    if (!std::isfinite(normalizer_[m]) || !(normalizer_[m] > 0.0))
      throw Error(ErrorCode::InvalidArgument, where(m) + "normalizer must be positive and finite");
  }

  // Entries outside V never enter a computation; pin them to NaN so that a
  // stray read is loud.
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t m = 0; m < M; ++m) {
    std::size_t next = 0;
    for (std::size_t n = 0; n < N; ++n) {
      if (next < visible_[m].size() && visible_[m][next] == n) {
        ++next;
      } else {
        ground_truth_[m * N + n] = {nan, nan};
      }
    }
  }
}

bool ResponseDataset::is_visible(std::size_t m, std::size_t n) const {
  const auto& vis = visible_[m];
  return std::binary_search(vis.begin(), vis.end(), static_cast<std::uint32_t>(n));
}

std::size_t ResponseDataset::visible_instance_count() const {
  std::size_t total = 0;
  for (const auto& vis : visible_) total += vis.size();
  return total;
}

ResponseDataset ResponseDataset::select(std::span<const std::size_t> samples) const {
  const std::size_t C = model_count();
  const std::size_t N = landmark_count();
  const std::size_t F = feature_count();
  DatasetArrays out;
  out.sample_count = samples.size();
  out.responses.reserve(samples.size() * C * N);
  out.ground_truth.reserve(samples.size() * N);
  out.features.reserve(samples.size() * F);
  for (std::size_t m : samples) {
    if (m >= sample_count_) throw Error(ErrorCode::OutOfRange, "selected sample " + std::to_string(m) + " out of range");
    auto r = responses(m);
    out.responses.insert(out.responses.end(), r.begin(), r.end());
    auto g = ground_truth(m);
    out.ground_truth.insert(out.ground_truth.end(), g.begin(), g.end());
    out.visible.push_back(visible_[m]);
    auto f = features(m);
    out.features.insert(out.features.end(), f.begin(), f.end());
    out.normalizer.push_back(normalizer_[m]);
  }
  return ResponseDataset(protocol_, std::move(out));
}

}  // namespace emrt
