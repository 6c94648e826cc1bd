#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "emrt/comparison.hpp"
#include "emrt/error.hpp"
#include "emrt/metrics.hpp"
#include "emrt/synth.hpp"
#include "support.hpp"

using namespace emrt;

namespace {

Prediction with_landmarks(std::vector<Landmark> landmarks) {
  Prediction p;
  p.visibility_confidence.assign(landmarks.size(), 1.0);
  p.visibility_flag.assign(landmarks.size(), 1);
  p.landmarks = std::move(landmarks);
  return p;
}

synth::Generated small_set(std::size_t M, std::uint64_t seed = 0) {
  auto c = synth::GenConfig::preset("aflw-like-5view");
  c.sample_count = M;
  c.seed = seed;
  return synth::generate(c);
}

ComparisonConfig quick_config() {
  ComparisonConfig c;
  c.forest.tree_count = 3;
  c.forest.min_samples_per_leaf = 5;
  return c;
}

}  // namespace

TEST_CASE("sample error") {
  const std::vector<Landmark> truth{{0, 0}, {10, 10}};
  const std::vector<std::uint32_t> first{0}, both{0, 1};
  CHECK(sample_error(with_landmarks(truth), truth, both, 3.0) == 0.0);
  CHECK(sample_error(with_landmarks({{3, 4}, {0, 0}}), truth, first, 100.0) == doctest::Approx(5.0));
  CHECK(sample_error(with_landmarks({{3, 4}, {19, 22}}), truth, both, 100.0) == doctest::Approx(10.0));
  CHECK_THROWS_AS(sample_error(with_landmarks(truth), truth, {}, 1.0), Error);
  CHECK_THROWS_AS(sample_error(with_landmarks(truth), truth, both, 0.0), Error);
}

TEST_CASE("average precision") {
  SUBCASE("perfect separation") {
    const std::vector<double> conf{0.9, 0.8, 0.2, 0.1};
    const std::vector<std::uint8_t> vis{1, 1, 0, 0};
    const std::vector<std::uint8_t> flags{1, 1, 0, 0};
    const VisibilityScores s = visibility_scores(conf, flags, vis);
    CHECK(*s.average_precision == 1.0);
    CHECK(s.accuracy == 1.0);
  }
  SUBCASE("constant confidence gives the prevalence") {
    const std::vector<double> conf(7, 0.5);
    const std::vector<std::uint8_t> vis{1, 0, 1, 1, 0, 1, 1};
    const std::vector<std::uint8_t> flags(7, 1);
    const VisibilityScores s = visibility_scores(conf, flags, vis);
    CHECK(*s.average_precision == doctest::Approx(2.0 / 7.0));
    CHECK(s.accuracy == doctest::Approx(5.0 / 7.0));
  }
  SUBCASE("hand-ranked six-landmark case") {
    const std::vector<double> conf{0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
    const std::vector<std::uint8_t> invisible{0, 1, 0, 1, 1, 0};
    std::vector<std::uint8_t> vis(6);
    for (int i = 0; i < 6; ++i) vis[i] = invisible[i] ? 0 : 1;
    // Rank by 1 - confidence, i.e. lowest confidence first, and average
    // the precision at each positive.
    std::vector<int> order{5, 4, 3, 2, 1, 0};
    double hits = 0.0, sum = 0.0;
    for (int k = 0; k < 6; ++k) {
      if (invisible[order[k]]) {
        hits += 1.0;
        sum += hits / (k + 1);
      }
    }
    const double expected = sum / hits;
    CHECK(expected == doctest::Approx((1.0 / 2 + 2.0 / 3 + 3.0 / 5) / 3));
    const VisibilityScores s = visibility_scores(conf, std::vector<std::uint8_t>(6, 1), vis);
    CHECK(std::abs(*s.average_precision - expected) <= 1e-15);
  }
  SUBCASE("no positives leaves AP absent") {
    const std::vector<double> conf{0.3, 0.7};
    const std::vector<std::uint8_t> vis{1, 1};
    CHECK_FALSE(visibility_scores(conf, vis, vis).average_precision.has_value());
  }
  SUBCASE("invariant under strictly monotone transforms") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> conf(40), warped(40);
      std::vector<std::uint8_t> vis(40);
      for (int i = 0; i < 40; ++i) {
        conf[i] = std::round(u(rng) * 10) / 10;
        vis[i] = u(rng) < 0.6;
        warped[i] = std::exp(3 * conf[i]) - 7.0;
      }
      vis[0] = 0;
      const auto a = visibility_scores(conf, vis, vis).average_precision;
      const auto b = visibility_scores(warped, vis, vis).average_precision;
      CHECK(*a == doctest::Approx(*b).epsilon(1e-14));
    }
  }
  SUBCASE("length mismatch") {
    const std::vector<double> conf{0.3};
    const std::vector<std::uint8_t> vis{1, 1};
    CHECK_THROWS_AS(visibility_scores(conf, vis, vis), Error);
  }
}

TEST_CASE("precision-recall curve") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> score(200);
  std::vector<std::uint8_t> positive(200);
  for (int i = 0; i < 200; ++i) {
    score[i] = std::round(u(rng) * 50) / 50;
    positive[i] = u(rng) < 0.3;
  }
  const auto curve = pr_curve(score, positive);
  std::vector<double> distinct(score);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  CHECK(curve.size() == distinct.size());
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].recall >= curve[i - 1].recall);
  CHECK(curve.back().recall == 1.0);
}

TEST_CASE("CED curve") {
  const std::vector<double> zeros(5, 0.0), thresholds{0.0, 1.0, 2.0};
  for (const auto& p : ced_curve(zeros, thresholds)) CHECK(p.fraction == 1.0);
  const std::vector<double> errors{1.0, 2.0, 3.0};
  const std::vector<double> two{2.0};
  CHECK(ced_curve(errors, two)[0].fraction == doctest::Approx(2.0 / 3.0));

  std::mt19937_64 rng(5);
  std::exponential_distribution<double> e(0.3);
  std::vector<double> sample(300);
  for (auto& x : sample) x = e(rng);
  const auto grid = default_ced_thresholds();
  const auto curve = ced_curve(sample, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double expected =
        static_cast<double>(std::count_if(sample.begin(), sample.end(), [&](double x) { return x <= grid[i]; })) /
        sample.size();
    CHECK(curve[i].fraction == expected);
    if (i > 0) CHECK(curve[i].fraction >= curve[i - 1].fraction);
  }
  const double top = *std::max_element(sample.begin(), sample.end());
  const std::vector<double> at_max{top};
  CHECK(ced_curve(sample, at_max)[0].fraction == 1.0);
}

TEST_CASE("evaluation report") {
  const auto gen = small_set(60);
  const auto& d = gen.dataset;
  std::vector<Prediction> preds;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 0.05);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t m = 0; m < d.sample_count(); ++m) {
    Prediction p;
    for (std::size_t n = 0; n < d.landmark_count(); ++n) {
      const Landmark t = gen.metadata[m].true_shape[n];
      p.landmarks.push_back({t.x + g(rng), t.y + g(rng)});
      p.visibility_confidence.push_back(u(rng));
      p.visibility_flag.push_back(p.visibility_confidence.back() >= 0.5);
    }
    preds.push_back(p);
  }
  const auto report = evaluate(preds, d, default_ced_thresholds());
  CHECK(report.per_sample_errors.size() == d.sample_count());
  CHECK(report.mean_error ==
        doctest::Approx(std::accumulate(report.per_sample_errors.begin(), report.per_sample_errors.end(), 0.0) /
                        report.per_sample_errors.size()));

  // Reordering samples leaves the mean unchanged.
  std::vector<std::size_t> order(d.sample_count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::reverse(order.begin(), order.end());
  const auto reversed = d.select(order);
  std::vector<Prediction> reversed_preds;
  for (std::size_t m : order) reversed_preds.push_back(preds[m]);
  const auto again = evaluate(reversed_preds, reversed, default_ced_thresholds());
  CHECK(again.mean_error == doctest::Approx(report.mean_error).epsilon(1e-14));
  CHECK(*again.visibility_ap == doctest::Approx(*report.visibility_ap).epsilon(1e-14));

  preds.pop_back();
  CHECK_THROWS_AS(evaluate(preds, d, default_ced_thresholds()), Error);
}

TEST_CASE("fold assignment") {
  for (std::size_t M : {5u, 17u, 100u}) {
    const auto folds = fold_assignment(M, 5, 9);
    CHECK(folds == fold_assignment(M, 5, 9));
    std::vector<std::size_t> sizes(5, 0);
    for (std::size_t f : folds) {
      REQUIRE(f < 5);
      ++sizes[f];
    }
    CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
    CHECK(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) == M);
  }
  CHECK(fold_assignment(100, 5, 1) != fold_assignment(100, 5, 2));
}

TEST_CASE("strategy keys") {
  for (Strategy s : all_strategies()) CHECK(parse_strategy(strategy_key(s)) == s);
  CHECK_THROWS_AS(parse_strategy("c"), Error);
}

TEST_CASE("comparison on a noise-free pool") {
  auto c = synth::GenConfig::preset("aflw-like-5view");
  c.sample_count = 300;
  c.in_noise = 0.0;
  c.score_noise = 0.0;
  c.occlusion_rate = 0.0;
  const auto gen = synth::generate(c);
  const auto result = run_comparison(gen.dataset, support::metadata_of(gen), quick_config());
  REQUIRE(result.rows.size() == 5);
  const auto& frontal = result.rows[0].report;
  for (std::size_t s = 1; s < 5; ++s) CHECK(result.rows[s].report.mean_error < frontal.mean_error);
  CHECK(result.rows[4].report.mean_error < 1.0);

  // Fixed-frontal is worst on the profile samples.
  double frontal_profile = 0.0, ours_profile = 0.0;
  for (std::size_t m = 0; m < gen.dataset.sample_count(); ++m) {
    if (std::abs(gen.metadata[m].yaw) < 60.0) continue;
    frontal_profile += frontal.per_sample_errors[m];
    ours_profile += result.rows[4].report.per_sample_errors[m];
  }
  CHECK(frontal_profile > ours_profile);
}

TEST_CASE("single-model pool makes every strategy identical") {
  auto c = synth::GenConfig::preset("aflw-like-5view");
  c.sample_count = 100;
  c.cluster_centers = {0.0};
  const auto gen = synth::generate(c);
  const auto result = run_comparison(gen.dataset, support::metadata_of(gen), quick_config());
  for (const auto& row : result.rows) {
    CHECK(row.report.per_sample_errors == result.rows[0].report.per_sample_errors);
    CHECK(row.report.visibility_accuracy == result.rows[0].report.visibility_accuracy);
  }
}

TEST_CASE("comparison is reproducible and respects the strategy list") {
  const auto gen = small_set(150, 3);
  const auto meta = support::metadata_of(gen);
  ComparisonConfig c = quick_config();
  c.seed = 11;
  const auto a = run_comparison(gen.dataset, meta, c);
  c.forest.workers = 4;
  const auto b = run_comparison(gen.dataset, meta, c);
  CHECK(io::dump(comparison_to_json(a)) == io::dump(comparison_to_json(b)));
  CHECK(format_table(a) == format_table(b));
  for (std::size_t s = 0; s < a.rows.size(); ++s) {
    CHECK(a.rows[s].fold_gamma.size() == 5);
    CHECK(ced_text(a.rows[s].report) == ced_text(b.rows[s].report));
    CHECK(pr_text(a.rows[s].report) == pr_text(b.rows[s].report));
  }

  c.strategies = {Strategy::Recommendation};
  const auto only = run_comparison(gen.dataset, meta, c);
  REQUIRE(only.rows.size() == 1);
  CHECK(only.rows[0].report.mean_error == a.rows[4].report.mean_error);
}

TEST_CASE("comparison input checks") {
  const auto gen = small_set(40);
  auto meta = support::metadata_of(gen);
  ComparisonConfig c = quick_config();
  c.folds = 1;
  CHECK_THROWS_AS(run_comparison(gen.dataset, meta, c), Error);
  c = quick_config();
  c.strategies = {Strategy::TopVote, Strategy::TopVote};
  CHECK_THROWS_AS(run_comparison(gen.dataset, meta, c), Error);
  meta.yaw.pop_back();
  CHECK_THROWS_AS(run_comparison(gen.dataset, meta, quick_config()), Error);
}
