#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emrt/dataset.hpp"
#include "emrt/io.hpp"
#include "emrt/metrics.hpp"
#include "emrt/recforest.hpp"

namespace emrt {

enum class Strategy {
  FixedFrontal,     // (a)
  PriorSelection,   // (b)
  TopVote,          // (d)
  PosteriorRating,  // (e)
  Recommendation,   // ours
};

/// Short key used on the command line: a, b, d, e, ours.
std::string_view strategy_key(Strategy strategy);
std::string_view strategy_label(Strategy strategy);
Strategy parse_strategy(std::string_view key);
std::vector<Strategy> all_strategies();

struct ComparisonConfig {
  TrainConfig forest;
  std::size_t folds = 5;
  /// Share of the training folds held out for gamma calibration.
  double validation_fraction = 0.2;
  double pose_noise_deg = 25.0;
  std::uint64_t seed = 0;
  std::vector<Strategy> strategies = all_strategies();
  std::vector<double> ced_thresholds = default_ced_thresholds();

  void validate() const;
};

struct StrategyResult {
  Strategy strategy = Strategy::Recommendation;
  EvalReport report;
  std::vector<double> fold_gamma;
};

struct ComparisonResult {
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  std::vector<StrategyResult> rows;
};

/// fold[m] in [0, folds); a seeded permutation dealt round-robin, so fold
/// sizes differ by at most one.
std::vector<std::size_t> fold_assignment(std::size_t sample_count, std::size_t folds, std::uint64_t seed);

/// k-fold cross-validation of every configured strategy on identical splits.
/// Each test sample is predicted exactly once; reports pool all folds.
ComparisonResult run_comparison(const ResponseDataset& data, const io::Metadata& meta, const ComparisonConfig& config);

std::string format_table(const ComparisonResult& result);
io::Json comparison_to_json(const ComparisonResult& result);
/// Two-column text: threshold/fraction for CED, recall/precision for PR.
std::string ced_text(const EvalReport& report);
std::string pr_text(const EvalReport& report);

}  // namespace emrt
