#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "emrt/dataset.hpp"
#include "emrt/io.hpp"
#include "emrt/protocol.hpp"
#include "emrt/synth.hpp"
#include "emrt/types.hpp"

namespace support {

using emrt::Landmark;

/// Accumulates samples for a small hand-built dataset.
struct DatasetBuilder {
  emrt::ModelProtocol protocol;
  emrt::DatasetArrays arrays;

  explicit DatasetBuilder(std::vector<std::vector<std::uint8_t>> masks) : protocol(std::move(masks)) {}

  /// responses[c][n]; features default to 0.5 everywhere.
  DatasetBuilder& add(const std::vector<std::vector<Landmark>>& responses, const std::vector<Landmark>& truth,
                      std::vector<std::uint32_t> visible, std::vector<double> features = {},
                      double normalizer = 1.0) {
    for (const auto& model : responses) arrays.responses.insert(arrays.responses.end(), model.begin(), model.end());
    arrays.ground_truth.insert(arrays.ground_truth.end(), truth.begin(), truth.end());
    arrays.visible.push_back(std::move(visible));
    if (features.empty()) features.assign(protocol.feature_count(), 0.5);
    arrays.features.insert(arrays.features.end(), features.begin(), features.end());
    arrays.normalizer.push_back(normalizer);
    ++arrays.sample_count;
    return *this;
  }

  emrt::ResponseDataset build() const { return emrt::ResponseDataset(protocol, arrays); }
};

/// Every value uniform in [-1, 1], features in [0, 1], all landmarks
/// visible in every mask and in V.
inline emrt::ResponseDataset random_dataset(std::uint64_t seed, std::size_t M, std::size_t C, std::size_t N) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0), p(0.0, 1.0);
  DatasetBuilder b(std::vector<std::vector<std::uint8_t>>(C, std::vector<std::uint8_t>(N, 1)));
  for (std::size_t m = 0; m < M; ++m) {
    std::vector<std::vector<Landmark>> responses(C, std::vector<Landmark>(N));
    for (auto& model : responses)
      for (auto& l : model) l = {u(rng), u(rng)};
    std::vector<Landmark> truth(N);
    for (auto& l : truth) l = {u(rng), u(rng)};
    std::vector<std::uint32_t> visible;
    for (std::uint32_t n = 0; n < N; ++n) visible.push_back(n);
    std::vector<double> features(C * N);
    for (auto& f : features) f = p(rng);
    b.add(responses, truth, visible, features, 1.0 + p(rng));
  }
  return b.build();
}

inline emrt::io::Metadata metadata_of(const emrt::synth::Generated& gen) {
  emrt::io::Metadata meta;
  meta.cluster_centers = gen.cluster_centers;
  for (const auto& l : gen.metadata) {
    meta.yaw.push_back(l.yaw);
    meta.cluster_id.push_back(l.cluster_id);
  }
  return meta;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("emrt-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace support
