#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "emrt/dataset.hpp"

namespace emrt::synth {

enum class YawSampling {
  /// yaw ~ U[yaw_min, yaw_max]
  Uniform,
  /// pick a cluster uniformly, then yaw ~ U[center - half_width, center + half_width]
  Clustered,
};

struct GenConfig {
  std::size_t sample_count = 2000;
  std::size_t landmark_count = 19;
  double yaw_min = -90.0;
  double yaw_max = 90.0;
  std::vector<double> cluster_centers{-80.0, -40.0, 0.0, 40.0, 80.0};
  double cluster_half_width = 20.0;
  /// Response noise sigma inside a model's yaw range.
  double in_noise = 0.04;
  /// Extra sigma per degree beyond the half width.
  double out_noise_slope = 0.004;
  double score_sharpness = 8.0;
  double score_noise = 0.1;
  double occlusion_rate = 0.05;
  YawSampling yaw_sampling = YawSampling::Uniform;
  std::uint64_t seed = 0;

  std::size_t model_count() const { return cluster_centers.size(); }

  /// Throws Error(InvalidArgument) naming the first violated constraint.
  void validate() const;

  /// Named presets: "aflw-like-5view", "two-cluster", "mirror-pair".
  static GenConfig preset(std::string_view name);
  static std::vector<std::string> preset_names();
};

struct LatentSample {
  double yaw = 0.0;
  std::size_t cluster_id = 0;
  std::vector<Landmark> true_shape;
  std::vector<std::uint8_t> true_visibility;
};

struct Generated {
  ResponseDataset dataset;
  std::vector<LatentSample> metadata;
  std::vector<double> cluster_centers;
};

/// Rigid 3-D face template: a mirrored ring of points on an ellipsoid plus a
/// brow-top anchor, a protruding nose tip and a chin anchor. Rotated about
/// the vertical axis and projected orthographically.
class FaceTemplate {
 public:
  static constexpr std::size_t kTopAnchor = 0;
  static constexpr std::size_t kNoseTip = 1;
  static constexpr std::size_t kChin = 2;

  explicit FaceTemplate(std::size_t landmark_count);

  std::size_t landmark_count() const { return points_.size(); }

  struct View {
    std::vector<Landmark> shape;
    std::vector<std::uint8_t> visible;
    /// Vertical distance between the top anchor and the chin.
    double height = 0.0;
  };

  /// Positive yaw turns the face so that its +x side moves away from the
  /// camera. A landmark is visible when its rotated outward normal has a
  /// positive z component.
  View project(double yaw_degrees) const;

 private:
  struct Point {
    double x, y, z;
    double nx, ny, nz;
  };
  std::vector<Point> points_;
};

/// Index of the nearest cluster center, ties to the smaller index.
std::size_t nearest_cluster(std::span<const double> centers, double yaw);

/// Deterministic in config.seed; sample m draws from its own stream.
Generated generate(const GenConfig& config);

}  // namespace emrt::synth
