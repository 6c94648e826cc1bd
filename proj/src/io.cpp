#include "emrt/io.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "emrt/error.hpp"

namespace emrt::io {
namespace {

[[noreturn]] void schema(const std::string& what) { throw Error(ErrorCode::Schema, what); }

const Json& require(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) schema(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) schema(where + ": missing field '" + key + "'");
  return *it;
}

double as_real(const Json& v, const std::string& where) {
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!v.is_number()) schema(where + ": expected a number");
  return v.get<double>();
}

std::size_t as_count(const Json& v, const std::string& where) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    schema(where + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

const Json& as_array(const Json& v, const std::string& where, std::size_t expected = static_cast<std::size_t>(-1)) {
  if (!v.is_array()) schema(where + ": expected an array");
  if (expected != static_cast<std::size_t>(-1) && v.size() != expected)
    throw Error(ErrorCode::DimensionMismatch, where + ": dimension mismatch (" + std::to_string(v.size()) +
                                                  " entries, expected " + std::to_string(expected) + ")");
  return v;
}

Json point(const Landmark& p) {
  Json out = Json::array();
  out.push_back(p.x);
  out.push_back(p.y);
  return out;
}

Landmark point_from(const Json& v, const std::string& where) {
  as_array(v, where, 2);
  return {as_real(v[0], where), as_real(v[1], where)};
}

void check_header(const Json& doc, const char* kind) {
  if (!doc.is_object()) schema(std::string(kind) + ": document must be an object");
  const Json& version = require(doc, "formatVersion", kind);
  if (!version.is_number_integer() || version.get<int>() != kFormatVersion)
    schema(std::string(kind) + ": unsupported formatVersion");
  const Json& tag = require(doc, "kind", kind);
  if (!tag.is_string() || tag.get<std::string>() != kind) schema(std::string("document kind is not ") + kind);
}

Json masks_to_json(const ModelProtocol& protocol) {
  Json masks = Json::array();
  for (const auto& mask : protocol.masks()) {
    Json row = Json::array();
    for (std::uint8_t b : mask) row.push_back(static_cast<int>(b));
    masks.push_back(std::move(row));
  }
  return masks;
}

ModelProtocol masks_from_json(const Json& v, std::size_t C, std::size_t N) {
  as_array(v, "masks", C);
  std::vector<std::vector<std::uint8_t>> masks;
  for (std::size_t c = 0; c < C; ++c) {
    const std::string where = "masks[" + std::to_string(c) + "]";
    as_array(v[c], where, N);
    std::vector<std::uint8_t> mask;
    for (const Json& b : v[c]) {
      const std::size_t bit = as_count(b, where);
      if (bit > 1) schema(where + ": mask entries must be 0 or 1");
      mask.push_back(static_cast<std::uint8_t>(bit));
    }
    masks.push_back(std::move(mask));
  }
  return ModelProtocol(std::move(masks));
}

RatingVector rating_from(const Json& v, std::size_t C, const std::string& where) {
  as_array(v, where, C);
  std::vector<double> w;
  for (const Json& x : v) w.push_back(as_real(x, where));
  try {
    return RatingVector(std::move(w));
  } catch (const Error& e) {
    schema(where + ": " + e.what());
  }
}

}  // namespace

std::string dump(const Json& doc) { return doc.dump() + "\n"; }

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw Error(ErrorCode::Io, "failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::Io, "cannot move output into place at " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

Json parse(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Schema, what + ": malformed document (" + e.what() + ")");
  }
}

Json dataset_to_json(const ResponseDataset& data) {
  const std::size_t C = data.model_count();
  const std::size_t N = data.landmark_count();
  Json doc;
  doc["formatVersion"] = kFormatVersion;
  doc["kind"] = "emrt.dataset";
  doc["M"] = data.sample_count();
  doc["C"] = C;
  doc["N"] = N;
  doc["F"] = data.feature_count();
  doc["masks"] = masks_to_json(data.protocol());
  Json samples = Json::array();
  for (std::size_t m = 0; m < data.sample_count(); ++m) {
    Json s;
    Json responses = Json::array();
    for (std::size_t c = 0; c < C; ++c) {
      Json row = Json::array();
      for (std::size_t n = 0; n < N; ++n) row.push_back(point(data.response(m, c, n)));
      responses.push_back(std::move(row));
    }
    s["responses"] = std::move(responses);
    Json truth = Json::array();
    // Landmarks outside the visible set serialize as [null, null].
    for (std::size_t n = 0; n < N; ++n) truth.push_back(point(data.truth(m, n)));
    s["groundTruth"] = std::move(truth);
    s["visibilitySet"] = Json(std::vector<std::uint32_t>(data.visible(m).begin(), data.visible(m).end()));
    s["features"] = Json(std::vector<double>(data.features(m).begin(), data.features(m).end()));
    s["normalizer"] = data.normalizer(m);
    samples.push_back(std::move(s));
  }
  doc["samples"] = std::move(samples);
  return doc;
}

ResponseDataset dataset_from_json(const Json& doc) {
  check_header(doc, "emrt.dataset");
  const std::size_t M = as_count(require(doc, "M", "dataset"), "M");
  const std::size_t C = as_count(require(doc, "C", "dataset"), "C");
  const std::size_t N = as_count(require(doc, "N", "dataset"), "N");
  const std::size_t F = as_count(require(doc, "F", "dataset"), "F");
  ModelProtocol protocol = masks_from_json(require(doc, "masks", "dataset"), C, N);
  if (protocol.feature_count() != F)
    throw Error(ErrorCode::DimensionMismatch, "header F = " + std::to_string(F) + " but masks give F = " +
                                                  std::to_string(protocol.feature_count()));
  const Json& samples = as_array(require(doc, "samples", "dataset"), "samples", M);

  DatasetArrays arrays;
  arrays.sample_count = M;
  arrays.responses.reserve(M * C * N);
  arrays.ground_truth.reserve(M * N);
  arrays.features.reserve(M * F);
  for (std::size_t m = 0; m < M; ++m) {
    const std::string where = "samples[" + std::to_string(m) + "]";
    const Json& s = samples[m];
    const Json& responses = as_array(require(s, "responses", where), where + ".responses", C);
    for (std::size_t c = 0; c < C; ++c) {
      const Json& row = as_array(responses[c], where + ".responses", N);
      for (std::size_t n = 0; n < N; ++n) arrays.responses.push_back(point_from(row[n], where + ".responses"));
    }
    const Json& truth = as_array(require(s, "groundTruth", where), where + ".groundTruth", N);
    for (std::size_t n = 0; n < N; ++n) arrays.ground_truth.push_back(point_from(truth[n], where + ".groundTruth"));
    std::vector<std::uint32_t> visible;
    for (const Json& n : as_array(require(s, "visibilitySet", where), where + ".visibilitySet")) {
      const std::size_t index = as_count(n, where + ".visibilitySet");
      if (index >= N)
        throw Error(ErrorCode::OutOfRange, where + ": visibility index out of range (" + std::to_string(index) +
                                               " >= N = " + std::to_string(N) + ")");
      visible.push_back(static_cast<std::uint32_t>(index));
    }
    arrays.visible.push_back(std::move(visible));
    for (const Json& f : as_array(require(s, "features", where), where + ".features", F))
      arrays.features.push_back(as_real(f, where + ".features"));
    arrays.normalizer.push_back(as_real(require(s, "normalizer", where), where + ".normalizer"));
  }
  return ResponseDataset(std::move(protocol), std::move(arrays));
}

void save_dataset(const ResponseDataset& data, const std::filesystem::path& path) {
  write_file_atomic(path, dump(dataset_to_json(data)));
}

ResponseDataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_json(parse(read_file(path), path.string()));
}

Json metadata_to_json(const Metadata& meta) {
  Json doc;
  doc["formatVersion"] = kFormatVersion;
  doc["kind"] = "emrt.metadata";
  doc["clusterCenters"] = meta.cluster_centers;
  Json samples = Json::array();
  for (std::size_t m = 0; m < meta.yaw.size(); ++m) {
    samples.push_back({{"yaw", meta.yaw[m]}, {"clusterId", meta.cluster_id[m]}});
  }
  doc["samples"] = std::move(samples);
  return doc;
}

Metadata metadata_from_json(const Json& doc) {
  check_header(doc, "emrt.metadata");
  Metadata meta;
  for (const Json& c : as_array(require(doc, "clusterCenters", "metadata"), "clusterCenters"))
    meta.cluster_centers.push_back(as_real(c, "clusterCenters"));
  for (const Json& s : as_array(require(doc, "samples", "metadata"), "samples")) {
    meta.yaw.push_back(as_real(require(s, "yaw", "metadata sample"), "yaw"));
    const std::size_t id = as_count(require(s, "clusterId", "metadata sample"), "clusterId");
    if (id >= meta.cluster_centers.size()) throw Error(ErrorCode::OutOfRange, "metadata clusterId out of range");
    meta.cluster_id.push_back(id);
  }
  return meta;
}

void save_metadata(const Metadata& meta, const std::filesystem::path& path) {
  write_file_atomic(path, dump(metadata_to_json(meta)));
}

Metadata load_metadata(const std::filesystem::path& path) {
  return metadata_from_json(parse(read_file(path), path.string()));
}

Json forest_to_json(const Forest& forest) {
  const char* vector_key = forest.kind == LeafKind::Rating ? "rating" : "posterior";
  Json doc;
  doc["formatVersion"] = kFormatVersion;
  doc["kind"] = "emrt.forest";
  doc["leafKind"] = forest.kind == LeafKind::Rating ? "rating" : "posterior";
  doc["treeCount"] = forest.trees.size();
  doc["C"] = forest.protocol.model_count();
  doc["N"] = forest.protocol.landmark_count();
  doc["gamma"] = forest.gamma;
  doc["masks"] = masks_to_json(forest.protocol);
  Json trees = Json::array();
  for (const Tree& tree : forest.trees) {
    std::function<Json(std::size_t)> encode = [&](std::size_t i) {
      const TreeNode& node = tree.node(i);
      Json out;
      const std::vector<double> w(node.weights.weights().begin(), node.weights.weights().end());
      if (node.leaf) {
        out["type"] = "leaf";
        out[vector_key] = w;
        out["sampleCount"] = node.sample_count;
        out["cost"] = node.cost;
        return out;
      }
      out["type"] = "split";
      out["featureIndex"] = node.split.feature;
      out["threshold"] = node.split.threshold;
      out["gain"] = node.gain;
      out["cost"] = node.cost;
      out[vector_key] = w;
      out["sampleCount"] = node.sample_count;
      out["left"] = encode(static_cast<std::size_t>(node.left));
      out["right"] = encode(static_cast<std::size_t>(node.right));
      return out;
    };
    trees.push_back(encode(0));
  }
  doc["trees"] = std::move(trees);
  return doc;
}

Forest forest_from_json(const Json& doc) {
  check_header(doc, "emrt.forest");
  Forest forest;
  const Json& kind = require(doc, "leafKind", "forest");
  if (kind == "rating") {
    forest.kind = LeafKind::Rating;
  } else if (kind == "posterior") {
    forest.kind = LeafKind::Posterior;
  } else {
    schema("forest: leafKind must be 'rating' or 'posterior'");
  }
  const char* vector_key = forest.kind == LeafKind::Rating ? "rating" : "posterior";
  const std::size_t T = as_count(require(doc, "treeCount", "forest"), "treeCount");
  const std::size_t C = as_count(require(doc, "C", "forest"), "C");
  const std::size_t N = as_count(require(doc, "N", "forest"), "N");
  forest.gamma = as_real(require(doc, "gamma", "forest"), "gamma");
  forest.protocol = masks_from_json(require(doc, "masks", "forest"), C, N);
  const Json& trees = as_array(require(doc, "trees", "forest"), "trees", T);

  for (std::size_t t = 0; t < T; ++t) {
    std::vector<TreeNode> nodes;
    const std::string where = "trees[" + std::to_string(t) + "]";
    std::function<std::size_t(const Json&, std::size_t)> decode = [&](const Json& j, std::size_t depth) {
      if (depth > 4096) schema(where + ": tree too deep");
      const std::size_t index = nodes.size();
      nodes.emplace_back();
      const Json& type = require(j, "type", where);
      TreeNode node;
      node.weights = rating_from(require(j, vector_key, where), C, where);
      node.sample_count = as_count(require(j, "sampleCount", where), where + ".sampleCount");
      if (j.contains("cost")) node.cost = as_real(j["cost"], where);
      if (type == "leaf") {
        node.leaf = true;
        nodes[index] = std::move(node);
        return index;
      }
      if (type != "split") schema(where + ": node type must be 'leaf' or 'split'");
      node.leaf = false;
      node.split.feature = as_count(require(j, "featureIndex", where), where + ".featureIndex");
      node.split.threshold = as_real(require(j, "threshold", where), where + ".threshold");
      if (j.contains("gain")) node.gain = as_real(j["gain"], where);
      node.left = static_cast<std::int32_t>(decode(require(j, "left", where), depth + 1));
      node.right = static_cast<std::int32_t>(decode(require(j, "right", where), depth + 1));
      nodes[index] = std::move(node);
      return index;
    };
    decode(trees[t], 0);
    forest.trees.emplace_back(std::move(nodes));
  }
  validate_forest(forest);
  return forest;
}

void save_forest(const Forest& forest, const std::filesystem::path& path) {
  write_file_atomic(path, dump(forest_to_json(forest)));
}

Forest load_forest(const std::filesystem::path& path) {
  return forest_from_json(parse(read_file(path), path.string()));
}

Json predictions_to_json(const std::vector<Prediction>& predictions, double gamma) {
  Json doc;
  doc["formatVersion"] = kFormatVersion;
  doc["kind"] = "emrt.predictions";
  doc["gamma"] = gamma;
  Json samples = Json::array();
  for (const Prediction& p : predictions) {
    Json s;
    Json landmarks = Json::array();
    for (const Landmark& l : p.landmarks) landmarks.push_back(point(l));
    s["landmarks"] = std::move(landmarks);
    s["confidence"] = p.visibility_confidence;
    std::vector<int> flags(p.visibility_flag.begin(), p.visibility_flag.end());
    s["visible"] = flags;
    samples.push_back(std::move(s));
  }
  doc["samples"] = std::move(samples);
  return doc;
}

std::vector<Prediction> predictions_from_json(const Json& doc) {
  check_header(doc, "emrt.predictions");
  std::vector<Prediction> out;
  for (const Json& s : as_array(require(doc, "samples", "predictions"), "samples")) {
    Prediction p;
    for (const Json& l : as_array(require(s, "landmarks", "prediction"), "landmarks"))
      p.landmarks.push_back(point_from(l, "landmarks"));
    const std::size_t N = p.landmarks.size();
    for (const Json& v : as_array(require(s, "confidence", "prediction"), "confidence", N))
      p.visibility_confidence.push_back(as_real(v, "confidence"));
    for (const Json& v : as_array(require(s, "visible", "prediction"), "visible", N))
      p.visibility_flag.push_back(as_count(v, "visible") ? 1 : 0);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace emrt::io
