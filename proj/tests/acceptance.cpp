// Acceptance runner: one [PASS]/[FAIL] line per criterion, nonzero exit on
// any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "emrt/classforest.hpp"
#include "emrt/cli.hpp"
#include "emrt/comparison.hpp"
#include "emrt/error.hpp"
#include "emrt/io.hpp"
#include "emrt/metrics.hpp"
#include "emrt/recforest.hpp"
#include "emrt/simplexls.hpp"
#include "emrt/synth.hpp"
#include "support.hpp"

using namespace emrt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

std::size_t default_workers() {
  if (const char* env = std::getenv("EMRT_WORKERS")) return std::max(1, std::atoi(env));
  return 1;
}

synth::Generated generate(const std::string& preset, std::size_t M, std::uint64_t seed) {
  auto c = synth::GenConfig::preset(preset);
  if (M) c.sample_count = M;
  c.seed = seed;
  return synth::generate(c);
}

double residual(const simplexls::Problem& p, std::span<const double> w) {
  double total = 0.0;
  for (const auto& row : p.rows) {
    double x = row.target.x, y = row.target.y;
    for (std::size_t c = 0; c < w.size(); ++c) {
      x -= w[c] * row.candidates[c].x;
      y -= w[c] * row.candidates[c].y;
    }
    total += x * x + y * y;
  }
  return total;
}

std::vector<double> random_simplex_point(std::mt19937_64& rng, std::size_t C) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> w(C);
  double sum = 0.0;
  for (auto& v : w) sum += v = e(rng);
  for (auto& v : w) v /= sum;
  return w;
}

bool on_simplex(std::span<const double> w) {
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= -1e-9)) return false;
    sum += x;
  }
  return std::abs(sum - 1.0) <= 1e-9;
}

// Random responses/features for a protocol, used for inference probes.
struct Probe {
  std::vector<Landmark> responses;
  std::vector<double> features;
};

Probe random_probe(std::mt19937_64& rng, const ModelProtocol& p) {
  std::uniform_real_distribution<double> u(-2.0, 2.0), f(0.0, 1.0);
  Probe probe;
  probe.responses.resize(p.model_count() * p.landmark_count());
  for (auto& l : probe.responses) l = {u(rng), u(rng)};
  probe.features.resize(p.feature_count());
  for (auto& x : probe.features) x = f(rng);
  return probe;
}

Outcome solver_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::size_t failures = 0;
  double worst_gap = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t C = 2 + trial % 2;
    const std::size_t rows = 5 + rng() % 16;
    simplexls::Problem p;
    for (std::size_t r = 0; r < rows; ++r) {
      simplexls::Row row{{u(rng), u(rng)}, {}};
      for (std::size_t c = 0; c < C; ++c) row.candidates.push_back({u(rng), u(rng)});
      p.rows.push_back(row);
    }
    const auto s = simplexls::solve(p);
    const double oracle = simplexls::oracle_solve(p, 1e-2).objective;
    worst_gap = std::max(worst_gap, (s.objective - oracle) / (1.0 + oracle));
    bool ok = s.objective <= oracle + 1e-6 * (1.0 + oracle) && on_simplex(s.w.weights());
    for (int probe = 0; probe < 100; ++probe) {
      const double other = residual(p, random_simplex_point(rng, C));
      ok &= s.objective <= other + 1e-9 * (1.0 + other);
    }
    failures += !ok;
  }
  const double elapsed = seconds_since(start);
  return {failures == 0 && elapsed < 5.0,
          fmt("failures=%zu worst-relative-gap=%.3g time=%.2fs", failures, worst_gap, elapsed)};
}

Outcome simplex_invariants() {
  const auto gen = generate("aflw-like-5view", 600, 21);
  const auto& d = gen.dataset;
  TrainConfig config;
  config.seed = 21;
  config.workers = default_workers();
  const Forest rec = train_forest(d, config);
  const Forest cls = train_class_forest(d, derive_labels(d), config);
  std::size_t checked = 0, bad = 0;
  for (const Forest* f : {&rec, &cls}) {
    for (const Tree& t : f->trees) {
      for (const TreeNode& node : t.nodes()) {
        if (!node.leaf && f->kind == LeafKind::Posterior) continue;
        ++checked;
        bad += !on_simplex(node.weights.weights());
      }
    }
  }
  std::mt19937_64 rng(22);
  for (int i = 0; i < 1000; ++i) {
    const Probe p = random_probe(rng, d.protocol());
    for (const Forest* f : {&rec, &cls}) {
      ++checked;
      bad += !on_simplex(aggregate_rating(*f, p.features).weights());
    }
  }
  return {bad == 0, fmt("vectors=%zu violations=%zu", checked, bad)};
}

// Walker: routes each tree's training draw from the root, refits every split
// node and both children with the raw solver, and recomputes the
// instance-weighted gain.
struct Fit {
  double cost;
  std::size_t instances;
};

Fit walker_fit(const ResponseDataset& d, const std::vector<std::size_t>& subset) {
  simplexls::Problem p;
  for (std::size_t m : subset) {
    for (std::uint32_t n : d.visible(m)) {
      simplexls::Row row{d.truth(m, n), {}};
      for (std::size_t c = 0; c < d.model_count(); ++c) row.candidates.push_back(d.response(m, c, n));
      p.rows.push_back(std::move(row));
    }
  }
  const auto s = simplexls::solve(p);
  return {residual(p, s.w.weights()) / static_cast<double>(p.rows.size()), p.rows.size()};
}

Outcome gain_decomposition() {
  std::size_t splits = 0, gain_bad = 0, dominance_bad = 0;
  double worst = 0.0;
  auto walk = [&](const ResponseDataset& d, const TrainConfig& config) {
    const Forest forest = train_forest(d, config);
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
      const Tree& tree = forest.trees[t];
      std::vector<std::vector<std::size_t>> at(tree.nodes().size());
      at[0] = draw_tree_samples(iota(d.sample_count()), config, t);
      for (std::size_t i = 0; i < tree.nodes().size(); ++i) {
        const TreeNode& node = tree.node(i);
        if (node.leaf) continue;
        for (std::size_t m : at[i]) at[node.split.goes_left(d.features(m)) ? node.left : node.right].push_back(m);
        const Fit parent = walker_fit(d, at[i]);
        const Fit left = walker_fit(d, at[node.left]);
        const Fit right = walker_fit(d, at[node.right]);
        const double children =
            (left.instances * left.cost + right.instances * right.cost) / static_cast<double>(parent.instances);
        const double gain = parent.cost - children;
        ++splits;
        worst = std::max(worst, std::abs(gain - node.gain));
        gain_bad += !(std::abs(gain - node.gain) <= 1e-9);
        dominance_bad += !(children <= parent.cost + 1e-9);
      }
    }
  };
  TrainConfig config;
  config.seed = 31;
  config.tree_count = 4;
  config.min_samples_per_leaf = 5;
  walk(generate("aflw-like-5view", 400, 31).dataset, config);
  config.seed = 32;
  walk(support::random_dataset(32, 200, 3, 4), config);
  return {splits > 0 && gain_bad == 0 && dominance_bad == 0,
          fmt("splits=%zu gain-mismatches=%zu worst=%.3g dominance-violations=%zu", splits, gain_bad, worst,
              dominance_bad)};
}

Outcome two_cluster_recovery() {
  const auto start = Clock::now();
  const auto gen = generate("two-cluster", 400, 0);
  const auto& d = gen.dataset;
  TrainConfig config;
  config.tree_count = 1;
  config.bootstrap = false;
  const Forest forest = train_forest(d, config);
  const Tree& tree = forest.trees[0];
  if (tree.root().leaf) return {false, "root is a leaf"};

  // Exhaustive enumeration of features with a threshold that separates the
  // two clusters.
  std::set<std::size_t> separating;
  for (std::size_t f = 0; f < d.feature_count(); ++f) {
    double max0 = -INFINITY, min0 = INFINITY, max1 = -INFINITY, min1 = INFINITY;
    for (std::size_t m = 0; m < d.sample_count(); ++m) {
      const double v = d.features(m)[f];
      if (gen.metadata[m].cluster_id == 0) {
        max0 = std::max(max0, v);
        min0 = std::min(min0, v);
      } else {
        max1 = std::max(max1, v);
        min1 = std::min(min1, v);
      }
    }
    if (max0 < min1 || max1 < min0) separating.insert(f);
  }
  const SplitParams root = tree.root().split;
  bool root_separates = true;
  std::set<std::size_t> left_ids, right_ids;
  for (std::size_t m = 0; m < d.sample_count(); ++m)
    (root.goes_left(d.features(m)) ? left_ids : right_ids).insert(gen.metadata[m].cluster_id);
  root_separates = left_ids.size() == 1 && right_ids.size() == 1 && left_ids != right_ids;

  double leaf_gap = 0.0;
  std::vector<std::set<std::size_t>> leaf_clusters(tree.nodes().size());
  for (std::size_t m = 0; m < d.sample_count(); ++m)
    leaf_clusters[tree.leaf_index(d.features(m))].insert(gen.metadata[m].cluster_id);
  bool leaves_pure = true;
  for (std::size_t i = 0; i < tree.nodes().size(); ++i) {
    const TreeNode& node = tree.node(i);
    if (!node.leaf) continue;
    if (leaf_clusters[i].size() != 1) {
      leaves_pure = false;
      continue;
    }
    const std::size_t c = *leaf_clusters[i].begin();
    for (std::size_t k = 0; k < node.weights.size(); ++k)
      leaf_gap = std::max(leaf_gap, std::abs(node.weights[k] - (k == c ? 1.0 : 0.0)));
  }

  std::vector<Prediction> preds;
  for (std::size_t m = 0; m < d.sample_count(); ++m) preds.push_back(predict(forest, d.responses(m), d.features(m)));
  const double error = evaluate(preds, d, default_ced_thresholds()).mean_error;
  const double elapsed = seconds_since(start);
  const bool pass = separating.count(root.feature) && root_separates && leaves_pure && leaf_gap <= 1e-3 &&
                    error <= 1e-6 && elapsed < 10.0;
  return {pass, fmt("root-feature=%zu separating-features=%zu leaf-gap=%.3g train-error=%.3g%% time=%.2fs",
                    root.feature, separating.size(), leaf_gap, error, elapsed)};
}

Outcome strategy_ordering() {
  const auto start = Clock::now();
  std::size_t error_wins = 0, ap_wins = 0;
  std::ostringstream detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto gen = generate("aflw-like-5view", 2000, seed);
    ComparisonConfig config;
    config.seed = seed;
    config.forest.workers = default_workers();
    const auto result = run_comparison(gen.dataset, support::metadata_of(gen), config);
    auto row = [&](Strategy s) -> const EvalReport& {
      for (const auto& r : result.rows)
        if (r.strategy == s) return r.report;
      throw Error(ErrorCode::InvalidArgument, "missing strategy row");
    };
    const EvalReport& ours = row(Strategy::Recommendation);
    bool strict = true;
    for (Strategy s : {Strategy::FixedFrontal, Strategy::PriorSelection, Strategy::TopVote, Strategy::PosteriorRating})
      strict &= ours.mean_error < row(s).mean_error;
    error_wins += strict;
    const auto ap_ours = ours.visibility_ap, ap_e = row(Strategy::PosteriorRating).visibility_ap,
               ap_d = row(Strategy::TopVote).visibility_ap;
    const bool ap_order = ap_ours && ap_e && ap_d && *ap_ours >= *ap_e && *ap_e >= *ap_d;
    ap_wins += ap_order;
    detail << " s" << seed << ":" << fmt("%.3f/%.3f", ours.mean_error, row(Strategy::PosteriorRating).mean_error)
           << (strict ? "" : "!") << (ap_order ? "" : "^");
  }
  const double elapsed = seconds_since(start);
  return {error_wins == 5 && ap_wins >= 4 && elapsed < 300.0,
          fmt("error-wins=%zu/5 ap-order=%zu/5 time=%.1fs", error_wins, ap_wins, elapsed) + " ours/e" +
              detail.str()};
}

Outcome linearity() {
  const auto gen = generate("aflw-like-5view", 400, 61);
  TrainConfig config;
  config.seed = 61;
  config.tree_count = 6;
  config.min_samples_per_leaf = 3;
  const Forest f = train_forest(gen.dataset, config);
  std::mt19937_64 rng(62);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Probe p = random_probe(rng, f.protocol);
    const Prediction joint = predict(f, p.responses, p.features);
    const std::size_t N = f.protocol.landmark_count();
    std::vector<double> x(N, 0.0), y(N, 0.0);
    double total = 0.0;
    for (const Tree& t : f.trees) {
      const TreeNode& leaf = t.route(p.features);
      const double s = static_cast<double>(leaf.sample_count);
      total += s;
      for (std::size_t n = 0; n < N; ++n) {
        double bx = 0.0, by = 0.0;
        for (std::size_t c = 0; c < f.protocol.model_count(); ++c) {
          bx += leaf.weights[c] * p.responses[c * N + n].x;
          by += leaf.weights[c] * p.responses[c * N + n].y;
        }
        x[n] += s * bx;
        y[n] += s * by;
      }
    }
    for (std::size_t n = 0; n < N; ++n) {
      worst = std::max(worst, std::abs(joint.landmarks[n].x - x[n] / total));
      worst = std::max(worst, std::abs(joint.landmarks[n].y - y[n] / total));
    }
  }
  return {worst <= 1e-12, fmt("inferences=1000 worst=%.3g", worst)};
}

// Accuracy of every real threshold is constant between consecutive distinct
// confidences, so scanning each distinct value, the gaps between them, and
// points outside the range covers every achievable labelling.
double exhaustive_gamma(const std::vector<double>& conf, const std::vector<std::uint8_t>& vis) {
  auto accuracy = [&](double g) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < conf.size(); ++i) ok += (conf[i] >= g) == (vis[i] != 0);
    return ok;
  };
  std::vector<double> candidates{0.0, 1.0};
  candidates.insert(candidates.end(), conf.begin(), conf.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  double best = candidates.front();
  std::size_t best_ok = accuracy(best);
  for (double g : candidates) {
    const std::size_t ok = accuracy(g);
    if (ok > best_ok) {
      best_ok = ok;
      best = g;
    }
  }
  std::vector<double> probes{-1.0, 2.0};
  for (std::size_t i = 1; i < candidates.size(); ++i) probes.push_back(0.5 * (candidates[i - 1] + candidates[i]));
  for (double g : probes)
    if (accuracy(g) > best_ok) return std::numeric_limits<double>::quiet_NaN();
  return best;
}

Outcome gamma_oracle() {
  std::size_t mismatches = 0;
  for (std::uint64_t set = 0; set < 50; ++set) {
    const auto gen = generate("aflw-like-5view", 80, 700 + set);
    const auto& d = gen.dataset;
    std::vector<std::size_t> train, val;
    for (std::size_t m = 0; m < d.sample_count(); ++m) (m % 2 ? val : train).push_back(m);
    TrainConfig config;
    config.seed = set;
    config.tree_count = 3;
    config.min_samples_per_leaf = 4;
    Forest f = train_forest(d, train, config);
    const auto validation = d.select(val);
    std::vector<double> conf;
    std::vector<std::uint8_t> vis;
    for (std::size_t m = 0; m < validation.sample_count(); ++m) {
      const Prediction p = predict(f, validation.responses(m), validation.features(m));
      for (std::size_t n = 0; n < validation.landmark_count(); ++n) {
        conf.push_back(p.visibility_confidence[n]);
        vis.push_back(validation.is_visible(m, n));
      }
    }
    const double expected = exhaustive_gamma(conf, vis);
    const double got = calibrate_gamma(f, validation);
    mismatches += !(got == expected && f.gamma == expected);
  }
  return {mismatches == 0, fmt("sets=50 mismatches=%zu", mismatches)};
}

Outcome compare_determinism() {
  const fs::path root = support::temp_dir("acceptance-determinism");
  auto run = [&](const std::string& tag, const std::string& workers) {
    std::ostringstream out, err;
    const int code = run_cli({"compare", "--preset", "aflw-like-5view", "--m", "400", "--seed", "5", "--workers",
                              workers, "--out", (root / tag).string()},
                             out, err);
    if (code != 0) throw Error(ErrorCode::InvalidArgument, "compare failed: " + err.str());
    std::string blob = out.str();
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root / tag)) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) blob += "\n--" + file.filename().string() + "\n" + io::read_file(file);
    return blob;
  };
  const std::string reference = run("w1-a", "1");
  std::size_t differing = 0;
  differing += run("w1-b", "1") != reference;
  differing += run("w4", "4") != reference;
  differing += run("w8", "8") != reference;
  fs::remove_all(root);
  return {differing == 0, fmt("runs=4 (workers 1,1,4,8) differing=%zu bytes=%zu", differing, reference.size())};
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool identical(const Prediction& a, const Prediction& b) {
  if (a.landmarks.size() != b.landmarks.size() || a.visibility_flag != b.visibility_flag) return false;
  for (std::size_t n = 0; n < a.landmarks.size(); ++n) {
    if (!same_bits(a.landmarks[n].x, b.landmarks[n].x) || !same_bits(a.landmarks[n].y, b.landmarks[n].y) ||
        !same_bits(a.visibility_confidence[n], b.visibility_confidence[n]))
      return false;
  }
  return true;
}

Outcome serialization() {
  const auto gen = generate("aflw-like-5view", 500, 91);
  const auto& d = gen.dataset;
  TrainConfig config;
  config.seed = 91;
  config.tree_count = 5;
  Forest rec = train_forest(d, config);
  calibrate_gamma(rec, d);
  const Forest cls = train_class_forest(d, derive_labels(d), config);
  const fs::path dir = support::temp_dir("acceptance-io");
  io::save_forest(rec, dir / "rec.json");
  io::save_forest(cls, dir / "cls.json");
  const Forest rec2 = io::load_forest(dir / "rec.json");
  const Forest cls2 = io::load_forest(dir / "cls.json");
  fs::remove_all(dir);
  std::mt19937_64 rng(92);
  std::size_t differing = 0;
  for (int i = 0; i < 1000; ++i) {
    const Probe p = random_probe(rng, d.protocol());
    differing += !identical(predict(rec, p.responses, p.features), predict(rec2, p.responses, p.features));
    differing += !identical(predict_posterior_rating(cls, p.responses, p.features),
                            predict_posterior_rating(cls2, p.responses, p.features));
    differing += !identical(predict_top_vote(cls, p.responses, p.features),
                            predict_top_vote(cls2, p.responses, p.features));
  }
  return {differing == 0 && rec == rec2 && cls == cls2, fmt("inputs=1000 differing=%zu", differing)};
}

Outcome classification() {
  const double pure = entropy(std::vector<std::size_t>{5, 0});
  const double binary = entropy(std::vector<std::size_t>{2, 2});
  const double skew = entropy(std::vector<std::size_t>{3, 1});
  const bool values = pure == 0.0 && std::abs(binary - std::log(2.0)) <= 1e-15 && std::abs(skew - 0.5623) <= 1e-4;

  const auto d = generate("aflw-like-5view", 500, 101).dataset;
  const ClassLabels labels = derive_labels(d);
  std::size_t disagree = 0;
  for (std::size_t m = 0; m < d.sample_count(); ++m) {
    std::size_t best = 0;
    double best_err = INFINITY;
    for (std::size_t c = 0; c < d.model_count(); ++c) {
      double err = 0.0;
      for (std::uint32_t n : d.visible(m)) err += squared_distance(d.response(m, c, n), d.truth(m, n));
      if (err < best_err) {
        best_err = err;
        best = c;
      }
    }
    disagree += labels.labels[m] != best;
  }
  return {values && disagree == 0,
          fmt("H{5,0}=%.3g H{2,2}=%.6f H{3,1}=%.6f label-disagreements=%zu/500", pure, binary, skew, disagree)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"solver-oracle agreement", solver_oracle},
      {"simplex invariants", simplex_invariants},
      {"exact gain decomposition", gain_decomposition},
      {"two-cluster recovery", two_cluster_recovery},
      {"strategy ordering", strategy_ordering},
      {"linearity equivalence", linearity},
      {"gamma calibration oracle", gamma_oracle},
      {"compare determinism", compare_determinism},
      {"serialization fidelity", serialization},
      {"classification forest", classification},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
