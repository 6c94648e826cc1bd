#pragma once

// Least squares over the probability simplex:
//
//   minimize  sum_rows || target - sum_c w_c candidate_c ||^2
//   s.t.      w >= 0, sum_c w_c = 1
//
// Each row is one 2-D landmark; its x and y residuals are two scalar rows of
// the stacked problem.

#include <cstddef>
#include <span>
#include <vector>

#include "emrt/types.hpp"

namespace emrt::simplexls {

struct Row {
  Landmark target;
  std::vector<Landmark> candidates;
};

struct Problem {
  std::vector<Row> rows;

  std::size_t model_count() const { return rows.empty() ? 0 : rows.front().candidates.size(); }
};

/// Sufficient statistics of a problem: f(w) = w'Gw - 2 b'w + e.
/// Additive over rows, so subsets can be combined with += and -=.
class NormalEquations {
 public:
  NormalEquations() = default;
  explicit NormalEquations(std::size_t model_count);

  std::size_t model_count() const noexcept { return cross_.size(); }
  std::size_t row_count() const noexcept { return rows_; }

  void add(const Row& row);
  /// Adds one landmark whose C candidates sit at responses[c * N + n].
  void add_landmark(const Landmark& target, std::span<const Landmark> responses, std::size_t n);

  NormalEquations& operator+=(const NormalEquations& other);
  NormalEquations& operator-=(const NormalEquations& other);

  double gram(std::size_t i, std::size_t j) const { return gram_[i * cross_.size() + j]; }
  double cross(std::size_t i) const { return cross_[i]; }
  double energy() const noexcept { return energy_; }

  /// Objective evaluated through the quadratic form, floored at zero.
  double objective(std::span<const double> w) const;

 private:
  std::vector<double> gram_;
  std::vector<double> cross_;
  double energy_ = 0.0;
  std::size_t rows_ = 0;
};

struct Options {
  double tolerance = 1e-8;
  std::size_t max_iterations = 1000;
};

struct Solution {
  RatingVector w;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Projected gradient with Barzilai-Borwein steps from the uniform point,
/// then an exact KKT solve on the detected support. Deterministic. Hitting
/// max_iterations returns the best iterate with converged = false.
/// The reported objective is recomputed directly from the rows.
Solution solve(const Problem& problem, const Options& options = {});

/// Same solver on precomputed statistics; the objective comes from the
/// quadratic form.
Solution solve(const NormalEquations& system, const Options& options = {});

/// Exhaustive search over simplex points whose coordinates are multiples of
/// grid_step. Requires C <= 4 and 1/grid_step integral.
Solution oracle_solve(const Problem& problem, double grid_step);

/// Sum of squared residuals, evaluated row by row.
double objective(const Problem& problem, std::span<const double> w);

/// Euclidean projection onto {w >= 0, sum w = 1}, in place (sort-based).
void project_onto_simplex(std::span<double> v);

}  // namespace emrt::simplexls
