#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "emrt/dataset.hpp"
#include "emrt/forest.hpp"

namespace emrt::io {

inline constexpr int kFormatVersion = 1;

using Json = nlohmann::json;

/// Latent information the generator knows about each sample.
struct Metadata {
  std::vector<double> cluster_centers;
  std::vector<double> yaw;
  std::vector<std::size_t> cluster_id;
};

Json dataset_to_json(const ResponseDataset& data);
ResponseDataset dataset_from_json(const Json& doc);
void save_dataset(const ResponseDataset& data, const std::filesystem::path& path);
ResponseDataset load_dataset(const std::filesystem::path& path);

Json metadata_to_json(const Metadata& meta);
Metadata metadata_from_json(const Json& doc);
void save_metadata(const Metadata& meta, const std::filesystem::path& path);
Metadata load_metadata(const std::filesystem::path& path);

Json forest_to_json(const Forest& forest);
Forest forest_from_json(const Json& doc);
void save_forest(const Forest& forest, const std::filesystem::path& path);
Forest load_forest(const std::filesystem::path& path);

Json predictions_to_json(const std::vector<Prediction>& predictions, double gamma);
std::vector<Prediction> predictions_from_json(const Json& doc);

/// Serialized text; reals print in shortest round-trip form.
std::string dump(const Json& doc);

/// Writes through a temporary sibling and renames, so readers never observe
/// a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);
Json parse(const std::string& text, const std::string& what);

}  // namespace emrt::io
