#include "emrt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "emrt/error.hpp"
#include "emrt/random.hpp"

namespace emrt::synth {
namespace {

constexpr double kSemiX = 0.8;
constexpr double kSemiY = 1.1;
constexpr double kSemiZ = 0.9;
constexpr double kRingSpanDeg = 75.0;
constexpr double kUpperRow = 0.2;
constexpr double kLowerRow = -0.45;
constexpr double kTopY = 0.5;
constexpr double kNoseY = -0.15;
constexpr double kNoseProtrusion = 0.25;
constexpr double kChinY = -1.0;
constexpr double kAbsentScore = 0.1;

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

void fail(const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); }

}  // namespace

void GenConfig::validate() const {
  if (sample_count < 1) fail("M must be >= 1");
  if (landmark_count < 4) fail("N must be >= 4");
  if (cluster_centers.empty()) fail("at least one cluster center is required");
  if (!(yaw_min >= -90.0 && yaw_max <= 90.0 && yaw_min <= yaw_max)) fail("yaw range must lie inside [-90, 90]");
  for (std::size_t c = 0; c < cluster_centers.size(); ++c) {
    const double center = cluster_centers[c];
    if (!std::isfinite(center) || center < yaw_min || center > yaw_max) fail("cluster centers must lie inside the yaw range");
    if (c > 0 && !(center > cluster_centers[c - 1])) fail("cluster centers must be strictly increasing");
  }
  auto non_negative = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!non_negative(cluster_half_width)) fail("cluster half width must be >= 0");
  if (!non_negative(in_noise)) fail("in-cluster noise must be >= 0");
  if (!non_negative(out_noise_slope)) fail("out-of-cluster noise slope must be >= 0");
  if (!non_negative(score_noise)) fail("score noise must be >= 0");
  if (!(std::isfinite(score_sharpness) && score_sharpness > 0.0)) fail("score sharpness must be > 0");
  if (!(occlusion_rate >= 0.0 && occlusion_rate < 1.0)) fail("occlusion rate must lie in [0, 1)");
}

GenConfig GenConfig::preset(std::string_view name) {
  GenConfig config;
  if (name == "aflw-like-5view") return config;
  if (name == "two-cluster") {
    config.sample_count = 400;
    config.cluster_centers = {-60.0, 60.0};
    config.cluster_half_width = 20.0;
    config.in_noise = 0.0;
    config.out_noise_slope = 0.004;
    config.score_noise = 0.0;
    config.occlusion_rate = 0.0;
    config.yaw_sampling = YawSampling::Clustered;
    return config;
  }
  if (name == "mirror-pair") {
    config.sample_count = 1200;
    config.cluster_centers = {-60.0, 0.0, 60.0};
    config.cluster_half_width = 30.0;
    config.score_noise = 1.0;
    config.score_sharpness = 2.0;
    config.occlusion_rate = 0.3;
    return config;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> GenConfig::preset_names() { return {"aflw-like-5view", "two-cluster", "mirror-pair"}; }

FaceTemplate::FaceTemplate(std::size_t landmark_count) {
  if (landmark_count < 4) fail("face template needs at least 4 landmarks");
  auto on_surface = [](double azimuth, double y) {
    const double r = std::sqrt(1.0 - (y / kSemiY) * (y / kSemiY));
    Point p{kSemiX * r * std::sin(azimuth), y, kSemiZ * r * std::cos(azimuth), 0, 0, 0};
    p.nx = p.x / (kSemiX * kSemiX);
    p.ny = p.y / (kSemiY * kSemiY);
    p.nz = p.z / (kSemiZ * kSemiZ);
    return p;
  };

  points_.push_back(on_surface(0.0, kTopY));
  Point nose = on_surface(0.0, kNoseY);
  nose.z += kNoseProtrusion;
  nose.nx = 0.0;
  nose.ny = 0.0;
  nose.nz = 1.0;
  points_.push_back(nose);
  points_.push_back(on_surface(0.0, kChinY));

  const std::size_t ring = landmark_count - 3;
  for (std::size_t k = 0; k < ring; ++k) {
    // Exact negation between k and ring-1-k keeps the template mirrored.
    const double t = ring == 1 ? 0.0
                               : (2.0 * static_cast<double>(k) - static_cast<double>(ring - 1)) /
                                     static_cast<double>(ring - 1);
    const std::size_t level = std::min(k, ring - 1 - k);
    points_.push_back(on_surface(radians(kRingSpanDeg) * t, level % 2 == 0 ? kUpperRow : kLowerRow));
  }
}

FaceTemplate::View FaceTemplate::project(double yaw_degrees) const {
  const double s = std::sin(radians(yaw_degrees));
  const double c = std::cos(radians(yaw_degrees));
  View view;
  view.shape.reserve(points_.size());
  view.visible.reserve(points_.size());
  for (const Point& p : points_) {
    view.shape.push_back({p.x * c + p.z * s, p.y});
    view.visible.push_back(-p.nx * s + p.nz * c > 0.0 ? 1 : 0);
  }
  view.height = std::abs(view.shape[kTopAnchor].y - view.shape[kChin].y);
  return view;
}

std::size_t nearest_cluster(std::span<const double> centers, double yaw) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < centers.size(); ++c) {
    if (std::abs(yaw - centers[c]) < std::abs(yaw - centers[best])) best = c;
  }
  return best;
}

Generated generate(const GenConfig& config) {
  config.validate();
  const std::size_t M = config.sample_count;
  const std::size_t N = config.landmark_count;
  const std::size_t C = config.model_count();
  const FaceTemplate face(N);

  std::vector<std::vector<std::uint8_t>> masks;
  for (double center : config.cluster_centers) masks.push_back(face.project(center).visible);
  ModelProtocol protocol(std::move(masks));
  const std::size_t F = protocol.feature_count();

  DatasetArrays arrays;
  arrays.sample_count = M;
  arrays.responses.resize(M * C * N);
  arrays.ground_truth.resize(M * N);
  arrays.visible.resize(M);
  arrays.features.resize(M * F);
  arrays.normalizer.resize(M);

  Generated out;
  out.cluster_centers = config.cluster_centers;
  out.metadata.resize(M);

  for (std::size_t m = 0; m < M; ++m) {
    Rng rng = make_rng(config.seed, "sample", m);
    std::normal_distribution<double> gauss(0.0, 1.0);

    double yaw = 0.0;
    if (config.yaw_sampling == YawSampling::Uniform) {
      yaw = config.yaw_min + uniform01(rng) * (config.yaw_max - config.yaw_min);
    } else {
      const double center = config.cluster_centers[rng() % C];
      yaw = center + (2.0 * uniform01(rng) - 1.0) * config.cluster_half_width;
      yaw = std::clamp(yaw, config.yaw_min, config.yaw_max);
    }
    const FaceTemplate::View view = face.project(yaw);
    const double scale = view.height;

    auto& visible = arrays.visible[m];
    for (std::size_t n = 0; n < N; ++n) {
      const bool kept = uniform01(rng) >= config.occlusion_rate;
      if (view.visible[n] && kept) visible.push_back(static_cast<std::uint32_t>(n));
    }
    if (visible.empty()) {
      // Dropout never removes every landmark; the chin is visible at any yaw.
      const auto first = std::find(view.visible.begin(), view.visible.end(), std::uint8_t{1});
      if (first == view.visible.end()) throw Error(ErrorCode::InvalidArgument, "sample has no visible landmark");
      visible.push_back(static_cast<std::uint32_t>(first - view.visible.begin()));
    }

    for (std::size_t c = 0; c < C; ++c) {
      const double distance = std::abs(yaw - config.cluster_centers[c]);
      const double sigma =
          config.in_noise + config.out_noise_slope * std::max(0.0, distance - config.cluster_half_width);
      for (std::size_t n = 0; n < N; ++n) {
        const double ex = gauss(rng);
        const double ey = gauss(rng);
        arrays.responses[(m * C + c) * N + n] = {view.shape[n].x + sigma * ex, view.shape[n].y + sigma * ey};
      }
    }

    std::vector<std::uint8_t> in_v(N, 0);
    for (std::uint32_t n : visible) in_v[n] = 1;
    for (std::size_t f = 0; f < F; ++f) {
      const auto [c, n] = protocol.slot(f);
      const double noise = config.score_noise * gauss(rng);
      double score = 0.0;
      if (in_v[n]) {
        const Landmark& x = arrays.responses[(m * C + c) * N + n];
        const double error = std::sqrt(squared_distance(x, view.shape[n]));
        score = 1.0 - config.score_sharpness * error / scale + noise;
      } else {
        score = kAbsentScore + noise;
      }
      arrays.features[m * F + f] = std::clamp(score, 0.0, 1.0);
    }

    for (std::size_t n = 0; n < N; ++n) arrays.ground_truth[m * N + n] = view.shape[n];
    arrays.normalizer[m] = scale;

    LatentSample& latent = out.metadata[m];
    latent.yaw = yaw;
    latent.cluster_id = nearest_cluster(config.cluster_centers, yaw);
    latent.true_shape = view.shape;
    latent.true_visibility = view.visible;
  }

  out.dataset = ResponseDataset(std::move(protocol), std::move(arrays));
  return out;
}

}  // namespace emrt::synth
