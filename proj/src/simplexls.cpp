#include "emrt/simplexls.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

#include "emrt/error.hpp"

namespace emrt::simplexls {
namespace {

void check_problem(const Problem& problem) {
  if (problem.rows.empty()) throw Error(ErrorCode::InvalidArgument, "simplex least squares needs at least one row");
  const std::size_t C = problem.model_count();
  if (C == 0) throw Error(ErrorCode::InvalidArgument, "simplex least squares needs at least one model");
  for (std::size_t r = 0; r < problem.rows.size(); ++r) {
    const Row& row = problem.rows[r];
    if (row.candidates.size() != C)
      throw Error(ErrorCode::DimensionMismatch, "row " + std::to_string(r) + " has " +
                                                    std::to_string(row.candidates.size()) + " candidates, expected " +
                                                    std::to_string(C));
    if (!std::isfinite(row.target.x) || !std::isfinite(row.target.y))
      throw Error(ErrorCode::NonFinite, "row " + std::to_string(r) + " has a non-finite target");
    for (const Landmark& x : row.candidates) {
      if (!std::isfinite(x.x) || !std::isfinite(x.y))
        throw Error(ErrorCode::NonFinite, "row " + std::to_string(r) + " has a non-finite candidate");
    }
  }
}

void check_options(const Options& options) {
  if (!(options.tolerance > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
  if (options.max_iterations < 1) throw Error(ErrorCode::InvalidArgument, "maxIterations must be at least 1");
}

// Quadratic model scaled so that max diag(G) = 1: q(w) = w'Gw - 2b'w.
struct Quadratic {
  std::size_t C;
  std::vector<double> G;
  std::vector<double> b;

  double value(std::span<const double> w) const {
    double v = 0.0;
    for (std::size_t i = 0; i < C; ++i) {
      double gi = 0.0;
      for (std::size_t j = 0; j < C; ++j) gi += G[i * C + j] * w[j];
      v += w[i] * gi - 2.0 * b[i] * w[i];
    }
    return v;
  }

  void gradient(std::span<const double> w, std::span<double> g) const {
    for (std::size_t i = 0; i < C; ++i) {
      double gi = 0.0;
      for (std::size_t j = 0; j < C; ++j) gi += G[i * C + j] * w[j];
      g[i] = 2.0 * (gi - b[i]);
    }
  }
};

double kkt_residual(std::span<const double> w, std::span<const double> g, std::vector<double>& scratch) {
  for (std::size_t i = 0; i < w.size(); ++i) scratch[i] = w[i] - g[i];
  project_onto_simplex(scratch);
  double r = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) r = std::max(r, std::abs(scratch[i] - w[i]));
  return r;
}

// Solves the equality-constrained problem on the support of w and accepts the
// result only when it is feasible and satisfies the KKT conditions of the
// full problem.
bool polish(const Quadratic& q, std::vector<double>& w, double tolerance) {
  const std::size_t C = q.C;
  std::vector<std::size_t> support;
  for (std::size_t c = 0; c < C; ++c) {
    if (w[c] > 1e-10) support.push_back(c);
  }
  const auto k = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) kkt(i, j) = 2.0 * q.G[support[i] * C + support[j]];
    kkt(i, k) = -1.0;
    kkt(k, i) = 1.0;
    rhs(i) = 2.0 * q.b[support[i]];
  }
  rhs(k) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (lu.rank() < k + 1) return false;
  const Eigen::VectorXd sol = lu.solve(rhs);

  std::vector<double> candidate(C, 0.0);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(sol(i) > 0.0)) return false;
    candidate[support[i]] = sol(i);
  }
  const double multiplier = sol(k);
  std::vector<double> g(C);
  q.gradient(candidate, g);
  for (std::size_t c = 0; c < C; ++c) {
    if (candidate[c] == 0.0 && g[c] < multiplier - tolerance) return false;
  }
  const double sum = std::accumulate(candidate.begin(), candidate.end(), 0.0);
  for (double& v : candidate) v /= sum;
  if (q.value(candidate) > q.value(w) + 1e-15 * (1.0 + std::abs(q.value(w)))) return false;
  w = std::move(candidate);
  return true;
}

struct RawSolution {
  std::vector<double> w;
  std::size_t iterations = 0;
  bool converged = false;
};

RawSolution solve_quadratic(const Quadratic& q, const Options& options) {
  const std::size_t C = q.C;
  RawSolution out;
  out.w.assign(C, 1.0 / static_cast<double>(C));
  if (C == 1) {
    out.w[0] = 1.0;
    out.converged = true;
    return out;
  }

  std::vector<double> g(C), g_next(C), trial(C), scratch(C);
  q.gradient(out.w, g);
  if (kkt_residual(out.w, g, scratch) <= options.tolerance) {
    out.converged = true;
    return out;
  }

  double trace = 0.0;
  for (std::size_t c = 0; c < C; ++c) trace += q.G[c * C + c];
  double step = 1.0 / (2.0 * std::max(trace, 1e-300));
  double value = q.value(out.w);

  std::size_t it = 0;
  while (it < options.max_iterations) {
    ++it;
    for (std::size_t c = 0; c < C; ++c) trial[c] = out.w[c] - step * g[c];
    project_onto_simplex(trial);

    // Armijo backtracking along the feasible direction d = P(w - a g) - w.
    double slope = 0.0;
    for (std::size_t c = 0; c < C; ++c) slope += g[c] * (trial[c] - out.w[c]);
    double t = 1.0;
    std::vector<double> next(C);
    double next_value = 0.0;
    for (int backtrack = 0; backtrack < 60; ++backtrack) {
      for (std::size_t c = 0; c < C; ++c) next[c] = out.w[c] + t * (trial[c] - out.w[c]);
      next_value = q.value(next);
      if (next_value <= value + 1e-4 * t * slope) break;
      t *= 0.5;
    }

    q.gradient(next, g_next);
    double ss = 0.0, sy = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double s = next[c] - out.w[c];
      ss += s * s;
      sy += s * (g_next[c] - g[c]);
    }
    out.w.swap(next);
    g.swap(g_next);
    value = next_value;

    if (kkt_residual(out.w, g, scratch) <= options.tolerance) {
      out.converged = true;
      break;
    }
    if (ss == 0.0) break;
    step = sy > 0.0 ? std::clamp(ss / sy, 1e-12, 1e12) : 1e12;
  }
  out.iterations = it;

  // Snap to the exact optimum of the detected face when it certifies.
  if (polish(q, out.w, options.tolerance)) out.converged = true;
  return out;
}

Quadratic scaled_quadratic(const NormalEquations& system) {
  const std::size_t C = system.model_count();
  Quadratic q{C, std::vector<double>(C * C), std::vector<double>(C)};
  double scale = 0.0;
  for (std::size_t c = 0; c < C; ++c) scale = std::max(scale, system.gram(c, c));
  if (!(scale > 0.0)) scale = 1.0;
  for (std::size_t i = 0; i < C; ++i) {
    for (std::size_t j = 0; j < C; ++j) q.G[i * C + j] = system.gram(i, j) / scale;
    q.b[i] = system.cross(i) / scale;
  }
  return q;
}

}  // namespace

NormalEquations::NormalEquations(std::size_t model_count)
    : gram_(model_count * model_count, 0.0), cross_(model_count, 0.0) {}

void NormalEquations::add(const Row& row) {
  const std::size_t C = cross_.size();
  for (std::size_t i = 0; i < C; ++i) {
    const Landmark& xi = row.candidates[i];
    for (std::size_t j = 0; j < C; ++j) {
      const Landmark& xj = row.candidates[j];
      gram_[i * C + j] += xi.x * xj.x + xi.y * xj.y;
    }
    cross_[i] += xi.x * row.target.x + xi.y * row.target.y;
  }
  energy_ += row.target.x * row.target.x + row.target.y * row.target.y;
  ++rows_;
}

void NormalEquations::add_landmark(const Landmark& target, std::span<const Landmark> responses, std::size_t n) {
  const std::size_t C = cross_.size();
  const std::size_t N = responses.size() / C;
  for (std::size_t i = 0; i < C; ++i) {
    const Landmark& xi = responses[i * N + n];
    for (std::size_t j = i; j < C; ++j) {
      const Landmark& xj = responses[j * N + n];
      const double v = xi.x * xj.x + xi.y * xj.y;
      gram_[i * C + j] += v;
      if (j != i) gram_[j * C + i] += v;
    }
    cross_[i] += xi.x * target.x + xi.y * target.y;
  }
  energy_ += target.x * target.x + target.y * target.y;
  ++rows_;
}

NormalEquations& NormalEquations::operator+=(const NormalEquations& other) {
  for (std::size_t i = 0; i < gram_.size(); ++i) gram_[i] += other.gram_[i];
  for (std::size_t i = 0; i < cross_.size(); ++i) cross_[i] += other.cross_[i];
  energy_ += other.energy_;
  rows_ += other.rows_;
  return *this;
}

NormalEquations& NormalEquations::operator-=(const NormalEquations& other) {
  for (std::size_t i = 0; i < gram_.size(); ++i) gram_[i] -= other.gram_[i];
  for (std::size_t i = 0; i < cross_.size(); ++i) cross_[i] -= other.cross_[i];
  energy_ -= other.energy_;
  rows_ -= other.rows_;
  return *this;
}

double NormalEquations::objective(std::span<const double> w) const {
  const std::size_t C = cross_.size();
  double v = energy_;
  for (std::size_t i = 0; i < C; ++i) {
    double gi = 0.0;
    for (std::size_t j = 0; j < C; ++j) gi += gram_[i * C + j] * w[j];
    v += w[i] * gi - 2.0 * cross_[i] * w[i];
  }
  return std::max(v, 0.0);
}

void project_onto_simplex(std::span<double> v) {
  const std::size_t C = v.size();
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < C; ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  for (double& x : v) x = std::max(x - theta, 0.0);
}

double objective(const Problem& problem, std::span<const double> w) {
  double total = 0.0;
  for (const Row& row : problem.rows) {
    double px = 0.0, py = 0.0;
    for (std::size_t c = 0; c < row.candidates.size(); ++c) {
      px += w[c] * row.candidates[c].x;
      py += w[c] * row.candidates[c].y;
    }
    const double dx = row.target.x - px;
    const double dy = row.target.y - py;
    total += dx * dx + dy * dy;
  }
  return total;
}

Solution solve(const NormalEquations& system, const Options& options) {
  check_options(options);
  if (system.model_count() == 0) throw Error(ErrorCode::InvalidArgument, "solver needs at least one model");
  if (system.row_count() == 0) throw Error(ErrorCode::InvalidArgument, "solver needs at least one row");
  for (std::size_t i = 0; i < system.model_count(); ++i) {
    for (std::size_t j = 0; j < system.model_count(); ++j) {
      if (!std::isfinite(system.gram(i, j))) throw Error(ErrorCode::NonFinite, "non-finite normal equations");
    }
    if (!std::isfinite(system.cross(i))) throw Error(ErrorCode::NonFinite, "non-finite normal equations");
  }
  RawSolution raw = solve_quadratic(scaled_quadratic(system), options);
  Solution out;
  out.w = RatingVector(std::move(raw.w));
  out.objective = system.objective(out.w.weights());
  out.iterations = raw.iterations;
  out.converged = raw.converged;
  return out;
}

Solution solve(const Problem& problem, const Options& options) {
  check_problem(problem);
  check_options(options);
  NormalEquations system(problem.model_count());
  for (const Row& row : problem.rows) system.add(row);
  Solution out = solve(system, options);
  out.objective = objective(problem, out.w.weights());
  return out;
}

Solution oracle_solve(const Problem& problem, double grid_step) {
  check_problem(problem);
  const std::size_t C = problem.model_count();
  if (C > 4) throw Error(ErrorCode::InvalidArgument, "grid oracle supports at most 4 models, got " + std::to_string(C));
  if (!(grid_step > 0.0 && grid_step <= 1.0)) throw Error(ErrorCode::InvalidArgument, "grid step must lie in (0, 1]");
  const double divisions = std::round(1.0 / grid_step);
  if (std::abs(divisions * grid_step - 1.0) > 1e-9)
    throw Error(ErrorCode::InvalidArgument, "grid step must divide 1 exactly");
  const auto K = static_cast<long>(divisions);

  std::vector<long> counts(C, 0);
  std::vector<double> w(C, 0.0);
  Solution best;
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<double> best_w;
  std::size_t evaluated = 0;

  // Enumerate compositions of K into C nonnegative parts, first coordinate
  // descending so that vertex e_0 comes first.
  std::function<void(std::size_t, long)> visit = [&](std::size_t c, long remaining) {
    if (c + 1 == C) {
      counts[c] = remaining;
      for (std::size_t i = 0; i < C; ++i) w[i] = static_cast<double>(counts[i]) / divisions;
      const double value = objective(problem, w);
      ++evaluated;
      if (value < best_value) {
        best_value = value;
        best_w = w;
      }
      return;
    }
    for (long k = remaining; k >= 0; --k) {
      counts[c] = k;
      visit(c + 1, remaining - k);
    }
  };
  visit(0, K);

  best.w = RatingVector(std::move(best_w));
  best.objective = best_value;
  best.iterations = evaluated;
  best.converged = true;
  return best;
}

}  // namespace emrt::simplexls
