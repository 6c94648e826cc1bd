#include "emrt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "emrt/error.hpp"

namespace emrt {

double sample_error(const Prediction& prediction, std::span<const Landmark> truth,
                    std::span<const std::uint32_t> visible, double normalizer) {
  if (!(normalizer > 0.0)) throw Error(ErrorCode::InvalidArgument, "normalizer must be positive");
  if (visible.empty()) throw Error(ErrorCode::NoVisibleLandmarks, "sample has no visible landmark to score");
  double total = 0.0;
  for (std::uint32_t n : visible) {
    if (n >= prediction.landmarks.size() || n >= truth.size())
      throw Error(ErrorCode::OutOfRange, "visible landmark index out of range");
    total += std::sqrt(squared_distance(prediction.landmarks[n], truth[n]));
  }
  return 100.0 * (total / static_cast<double>(visible.size())) / normalizer;
}

namespace {

// Indices sorted by descending score; callers walk tie groups.
std::vector<std::size_t> ranking(std::span<const double> score) {
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  return order;
}

template <typename OnGroup>
void walk_groups(std::span<const double> score, std::span<const std::uint8_t> positive, OnGroup&& on_group) {
  if (score.size() != positive.size())
    throw Error(ErrorCode::DimensionMismatch, "score and label lists differ in length");
  const auto order = ranking(score);
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < order.size() && score[order[j]] == score[order[i]]) {
      group_pos += positive[order[j]] ? 1 : 0;
      ++j;
    }
    tp += group_pos;
    seen += j - i;
    on_group(group_pos, tp, seen);
    i = j;
  }
}

}  // namespace

std::optional<double> average_precision(std::span<const double> score, std::span<const std::uint8_t> positive) {
  const std::size_t total_pos = static_cast<std::size_t>(std::count_if(positive.begin(), positive.end(), [](auto p) { return p != 0; }));
  double sum = 0.0;
  walk_groups(score, positive, [&](std::size_t group_pos, std::size_t tp, std::size_t seen) {
    sum += static_cast<double>(group_pos) * static_cast<double>(tp) / static_cast<double>(seen);
  });
  if (total_pos == 0) return std::nullopt;
  return sum / static_cast<double>(total_pos);
}

std::vector<PrPoint> pr_curve(std::span<const double> score, std::span<const std::uint8_t> positive) {
  const std::size_t total_pos = static_cast<std::size_t>(std::count_if(positive.begin(), positive.end(), [](auto p) { return p != 0; }));
  std::vector<PrPoint> curve;
  walk_groups(score, positive, [&](std::size_t, std::size_t tp, std::size_t seen) {
    const double recall = total_pos ? static_cast<double>(tp) / static_cast<double>(total_pos) : 0.0;
    curve.push_back({recall, static_cast<double>(tp) / static_cast<double>(seen)});
  });
  return curve;
}

VisibilityScores visibility_scores(std::span<const double> confidence, std::span<const std::uint8_t> flag,
                                   std::span<const std::uint8_t> visible) {
  if (confidence.size() != flag.size() || confidence.size() != visible.size())
    throw Error(ErrorCode::DimensionMismatch, "visibility inputs differ in length");
  if (confidence.empty()) throw Error(ErrorCode::InvalidArgument, "no landmarks to score");
  VisibilityScores out;
  std::size_t correct = 0;
  std::vector<double> score(confidence.size());
  std::vector<std::uint8_t> invisible(confidence.size());
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    correct += (flag[i] != 0) == (visible[i] != 0) ? 1 : 0;
    score[i] = 1.0 - confidence[i];
    invisible[i] = visible[i] ? 0 : 1;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(confidence.size());
  out.average_precision = average_precision(score, invisible);
  out.pr_curve = pr_curve(score, invisible);
  return out;
}

std::vector<CurvePoint> ced_curve(std::span<const double> errors, std::span<const double> thresholds) {
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<CurvePoint> curve;
  curve.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto count = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
    curve.push_back({t, sorted.empty() ? 0.0 : static_cast<double>(count) / static_cast<double>(sorted.size())});
  }
  return curve;
}

std::vector<double> default_ced_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 80; ++i) t.push_back(0.25 * i);
  return t;
}

EvalReport evaluate(std::span<const Prediction> predictions, const ResponseDataset& data,
                    std::span<const double> ced_thresholds) {
  if (predictions.size() != data.sample_count())
    throw Error(ErrorCode::DimensionMismatch, "prediction count differs from sample count");
  if (data.sample_count() == 0) throw Error(ErrorCode::InvalidArgument, "cannot evaluate an empty dataset");
  const std::size_t N = data.landmark_count();
  EvalReport report;
  std::vector<double> confidence;
  std::vector<std::uint8_t> flag, visible;
  for (std::size_t m = 0; m < data.sample_count(); ++m) {
    const Prediction& p = predictions[m];
    if (p.landmarks.size() != N || p.visibility_confidence.size() != N || p.visibility_flag.size() != N)
      throw Error(ErrorCode::DimensionMismatch, "prediction " + std::to_string(m) + " has the wrong landmark count");
    if (!data.visible(m).empty())
      report.per_sample_errors.push_back(sample_error(p, data.ground_truth(m), data.visible(m), data.normalizer(m)));
    for (std::size_t n = 0; n < N; ++n) {
      confidence.push_back(p.visibility_confidence[n]);
      flag.push_back(p.visibility_flag[n]);
      visible.push_back(data.is_visible(m, n) ? 1 : 0);
    }
  }
  if (!report.per_sample_errors.empty()) {
    report.mean_error = std::accumulate(report.per_sample_errors.begin(), report.per_sample_errors.end(), 0.0) /
                        static_cast<double>(report.per_sample_errors.size());
  }
  const VisibilityScores vis = visibility_scores(confidence, flag, visible);
  report.visibility_accuracy = vis.accuracy;
  report.visibility_ap = vis.average_precision;
  report.pr = vis.pr_curve;
  report.ced = ced_curve(report.per_sample_errors, ced_thresholds);
  return report;
}

}  // namespace emrt
