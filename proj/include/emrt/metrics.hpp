#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "emrt/dataset.hpp"
#include "emrt/types.hpp"

namespace emrt {

struct CurvePoint {
  double threshold = 0.0;
  double fraction = 0.0;
};

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

/// 100 * mean over visible n of ||pred_n - truth_n|| / normalizer.
/// Throws Error(NoVisibleLandmarks) for an empty visible set.
double sample_error(const Prediction& prediction, std::span<const Landmark> truth,
                    std::span<const std::uint32_t> visible, double normalizer);

/// Non-interpolated AP of ranking items by `score` (higher first) against
/// `positive`. Tied scores form one rank group: every positive in a group
/// gets the precision measured after the whole group. nullopt without
/// positives.
std::optional<double> average_precision(std::span<const double> score, std::span<const std::uint8_t> positive);

/// (recall, precision) after each distinct score, highest score first.
std::vector<PrPoint> pr_curve(std::span<const double> score, std::span<const std::uint8_t> positive);

struct VisibilityScores {
  double accuracy = 0.0;
  std::optional<double> average_precision;
  std::vector<PrPoint> pr_curve;
};

/// Invisible landmarks are the positive class, ranked by 1 - confidence.
/// Accuracy compares flags with ground-truth visibility.
VisibilityScores visibility_scores(std::span<const double> confidence, std::span<const std::uint8_t> flag,
                                   std::span<const std::uint8_t> visible);

/// Fraction of errors <= each threshold.
std::vector<CurvePoint> ced_curve(std::span<const double> errors, std::span<const double> thresholds);

/// 0, 0.25, ..., 20 (percent).
std::vector<double> default_ced_thresholds();

struct EvalReport {
  double mean_error = 0.0;
  double visibility_accuracy = 0.0;
  std::optional<double> visibility_ap;
  std::vector<CurvePoint> ced;
  std::vector<PrPoint> pr;
  /// One entry per scored sample (samples with an empty visible set are
  /// skipped), in sample order.
  std::vector<double> per_sample_errors;
};

/// predictions[m] is the prediction for sample m of `data`. Visibility is
/// scored over every (m, n) pair.
EvalReport evaluate(std::span<const Prediction> predictions, const ResponseDataset& data,
                    std::span<const double> ced_thresholds);

}  // namespace emrt
