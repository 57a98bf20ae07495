#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "awsens/cost_models.hpp"
#include "awsens/detail/parallel.hpp"
#include "awsens/detail/random.hpp"
#include "awsens/error.hpp"
#include "awsens/process_tree.hpp"

namespace awsens {

struct ControlBounds {
  double L = 10.0;

  explicit ControlBounds(double half_width = 10.0) : L(half_width) {
    if (!(L > 0.0) || !std::isfinite(L)) throw Error(ErrorCode::invalid_params, "control bound L must be finite and positive");
  }
  double clamp(double v) const { return std::clamp(v, -L, L); }
};

/// One control per non-leaf node: the value on a time-(t-1) node is the
/// control a_t used over (t-1, t]. Non-leaf nodes have ids 0..size()-1.
struct ControlPolicy {
  std::vector<double> values;

  /// Controls a_1..a_T read along the path ending in `leaf`.
  Vector along(const ScenarioTree& tree, NodeId leaf) const {
    Vector a(static_cast<std::size_t>(tree.horizon()));
    for (int t = 0; t < tree.horizon(); ++t) a[static_cast<std::size_t>(t)] = values.at(tree.ancestor_at(leaf, t));
    return a;
  }
};

inline std::size_t control_count(const ScenarioTree& tree) { return tree.size() - tree.leaves().size(); }

struct SolverOptions {
  double tol = 1e-9;
  std::size_t max_iterations = 100000;
  std::optional<std::vector<double>> initial;
  bool check_convexity = true;
};

struct ValueReport {
  double value = 0.0;
  ControlPolicy policy;
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
};

namespace detail {

// Paths of the tree with the ids of the control-carrying ancestors.
struct ControlPaths {
  std::vector<Vector> x;
  std::vector<double> prob;
  std::vector<std::vector<NodeId>> owner;  // owner[k][t] carries a_{t+1}
};

inline ControlPaths control_paths(const ScenarioTree& tree) {
  ControlPaths cp;
  for (NodeId leaf : tree.leaves()) {
    cp.x.push_back(tree.path_values(leaf));
    cp.prob.push_back(tree.probability(leaf));
    std::vector<NodeId> own(static_cast<std::size_t>(tree.horizon()));
    for (int t = 0; t < tree.horizon(); ++t) own[static_cast<std::size_t>(t)] = tree.ancestor_at(leaf, t);
    cp.owner.push_back(std::move(own));
  }
  return cp;
}

inline Vector path_controls(const ControlPaths& cp, std::size_t k, const std::vector<double>& a) {
  Vector out(cp.owner[k].size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = a[cp.owner[k][t]];
  return out;
}

inline void require_controlled(const CostModel& model, const ScenarioTree& tree) {
  if (!model.is_controlled()) throw Error(ErrorCode::invalid_params, "model '" + model.name() + "' is not a controlled model");
  if (model.horizon() != tree.horizon()) throw Error(ErrorCode::horizon_mismatch, "model and tree horizons differ");
}

// Objective, gradient and a bound on the rounding error of the objective.
struct Evaluation {
  double value = 0.0;
  std::vector<double> grad;
  double rounding = 0.0;
};

inline Evaluation evaluate_program(const ControlPaths& cp, const CostModel& model, const std::vector<double>& a,
                                   bool with_grad) {
  const std::size_t n = cp.x.size();
  std::vector<double> val(n);
  std::vector<Vector> grads(with_grad ? n : 0);
  parallel_for(n, [&](std::size_t k) {
    const Vector ak = path_controls(cp, k, a);
    val[k] = model.eval(cp.x[k], ak);
    if (with_grad) grads[k] = model.grad_a(cp.x[k], ak);
  });
  Evaluation ev;
  if (with_grad) ev.grad.assign(a.size(), 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    ev.value += cp.prob[k] * val[k];
    ev.rounding += cp.prob[k] * std::abs(val[k]);
    if (with_grad)
      for (std::size_t t = 0; t < cp.owner[k].size(); ++t) ev.grad[cp.owner[k][t]] += cp.prob[k] * grads[k][t];
  }
  ev.rounding *= 8.0 * std::numeric_limits<double>::epsilon();
  return ev;
}

inline Matrix program_hessian(const ControlPaths& cp, const CostModel& model, const std::vector<double>& a) {
  const auto K = static_cast<Eigen::Index>(a.size());
  const std::size_t n = cp.x.size();
  std::vector<Matrix> hs(n);
  parallel_for(n, [&](std::size_t k) { hs[k] = model.hess_a(cp.x[k], path_controls(cp, k, a)); });
  Matrix H = Matrix::Zero(K, K);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& own = cp.owner[k];
    for (std::size_t s = 0; s < own.size(); ++s)
      for (std::size_t t = 0; t < own.size(); ++t)
        H(static_cast<Eigen::Index>(own[s]), static_cast<Eigen::Index>(own[t])) +=
            cp.prob[k] * hs[k](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t));
  }
  return H;
}

inline double min_eigenvalue(const Matrix& H) {
  if (H.size() == 0) return 0.0;
  const Eigen::SelfAdjointEigenSolver<Matrix> es(H, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// max_n |a_n - clamp(a_n - g_n / P(n))|
inline double kkt_residual(const ScenarioTree& tree, const ControlBounds& bounds, const std::vector<double>& a,
                           const std::vector<double>& g) {
  double r = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n)
    r = std::max(r, std::abs(a[n] - bounds.clamp(a[n] - g[n] / tree.probability(n))));
  return r;
}

}  // namespace detail

/// E_P[f(X, a(X))] for a node policy.
inline double expected_cost(const ScenarioTree& tree, const CostModel& model, const ControlPolicy& policy) {
  detail::require_controlled(model, tree);
  if (policy.values.size() != control_count(tree)) throw Error(ErrorCode::dimension_mismatch, "policy has wrong size");
  return detail::evaluate_program(detail::control_paths(tree), model, policy.values, false).value;
}

/// Gradient of the expected cost with respect to the node controls.
inline std::vector<double> policy_gradient(const ScenarioTree& tree, const CostModel& model, const ControlPolicy& policy) {
  detail::require_controlled(model, tree);
  if (policy.values.size() != control_count(tree)) throw Error(ErrorCode::dimension_mismatch, "policy has wrong size");
  return detail::evaluate_program(detail::control_paths(tree), model, policy.values, true).grad;
}

/// Hessian of the expected cost with respect to the node controls.
inline Matrix program_hessian(const ScenarioTree& tree, const CostModel& model, const ControlPolicy& policy) {
  detail::require_controlled(model, tree);
  if (policy.values.size() != control_count(tree)) throw Error(ErrorCode::dimension_mismatch, "policy has wrong size");
  return detail::program_hessian(detail::control_paths(tree), model, policy.values);
}

inline double kkt_residual(const ScenarioTree& tree, const CostModel& model, const ControlBounds& bounds,
                           const ControlPolicy& policy) {
  return detail::kkt_residual(tree, bounds, policy.values, policy_gradient(tree, model, policy));
}

/// Smallest eigenvalue of the program Hessian over the box: the centre, the
/// corners along the diagonal and `samples` random points.
inline double strong_convexity_probe(const ScenarioTree& tree, const CostModel& model, const ControlBounds& bounds,
                                     std::size_t samples = 8, std::uint64_t seed = 7) {
  detail::require_controlled(model, tree);
  const auto cp = detail::control_paths(tree);
  const std::size_t K = control_count(tree);
  detail::Rng rng(seed);
  double lo = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> points{std::vector<double>(K, 0.0), std::vector<double>(K, bounds.L),
                                          std::vector<double>(K, -bounds.L)};
  for (std::size_t s = 0; s < samples; ++s) {
    std::vector<double> a(K);
    for (auto& v : a) v = rng.uniform(-bounds.L, bounds.L);
    points.push_back(std::move(a));
  }
  for (const auto& a : points) lo = std::min(lo, detail::min_eigenvalue(detail::program_hessian(cp, model, a)));
  return lo;
}

/// v(P) = inf over predictable controls in [-L, L] of E_P[f(X, a)].
///
/// The program has one variable per non-leaf node. Each iteration takes a
/// projected Newton step (Bertsekas): variables at a bound with the gradient
/// pushing outward move along the probability-scaled gradient, the free ones
/// along the Newton direction of the reduced Hessian, followed by an Armijo
/// backtracking search along the projection arc. Stops when
///   max_n |a_n - clamp(a_n - g_n / P(n))| <= tol.
inline ValueReport solve_value(const ScenarioTree& tree, const CostModel& model, const ControlBounds& bounds,
                               const SolverOptions& opt = {}) {
  detail::require_controlled(model, tree);
  const auto cp = detail::control_paths(tree);
  const std::size_t K = control_count(tree);
  if (opt.check_convexity) {
    const double lo = strong_convexity_probe(tree, model, bounds, 4);
    if (lo < -1e-10) throw Error(ErrorCode::not_convex, "program Hessian has eigenvalue " + std::to_string(lo));
  }

  std::vector<double> a(K, 0.0);
  if (opt.initial) {
    if (opt.initial->size() != K) throw Error(ErrorCode::dimension_mismatch, "initial policy has wrong size");
    a = *opt.initial;
  }
  for (auto& v : a) v = bounds.clamp(v);

  auto ev = detail::evaluate_program(cp, model, a, true);
  double res = detail::kkt_residual(tree, bounds, a, ev.grad);
  std::size_t it = 0;
  std::size_t stalled = 0;
  while (res > opt.tol) {
    if (it >= opt.max_iterations)
      throw Error(ErrorCode::max_iterations, "solver stopped with KKT residual " + std::to_string(res));
    ++it;

    // Direction: scaled gradient on the epsilon-active set, Newton elsewhere.
    const double eps_active = std::min(1e-6, res);
    std::vector<double> dir(K);
    std::vector<Eigen::Index> free;
    for (std::size_t n = 0; n < K; ++n) {
      const double gs = ev.grad[n] / tree.probability(n);
      dir[n] = gs;
      const bool at_low = a[n] <= -bounds.L + eps_active && gs > 0.0;
      const bool at_high = a[n] >= bounds.L - eps_active && gs < 0.0;
      if (!at_low && !at_high) free.push_back(static_cast<Eigen::Index>(n));
    }
    if (!free.empty()) {
      const Matrix H = detail::program_hessian(cp, model, a);
      const auto nf = static_cast<Eigen::Index>(free.size());
      Matrix Hf(nf, nf);
      Eigen::VectorXd gf(nf);
      for (Eigen::Index i = 0; i < nf; ++i) {
        gf(i) = ev.grad[static_cast<std::size_t>(free[static_cast<std::size_t>(i)])];
        for (Eigen::Index j = 0; j < nf; ++j) Hf(i, j) = H(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]);
      }
      const Eigen::LDLT<Matrix> ldlt(Hf);
      bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive();
      Eigen::VectorXd step;
      if (ok) {
        step = ldlt.solve(gf);
        ok = step.allFinite() && step.dot(gf) > 0.0 && (Hf * step - gf).norm() <= 1e-6 * (1.0 + gf.norm());
      }
      if (ok)
        for (Eigen::Index i = 0; i < nf; ++i) dir[static_cast<std::size_t>(free[static_cast<std::size_t>(i)])] = step(i);
    }

    double alpha = 1.0;
    bool accepted = false;
    std::vector<double> trial(K);
    detail::Evaluation tev;
    for (int bt = 0; bt < 60; ++bt) {
      double decrease = 0.0;
      for (std::size_t n = 0; n < K; ++n) {
        trial[n] = bounds.clamp(a[n] - alpha * dir[n]);
        decrease += ev.grad[n] * (trial[n] - a[n]);
      }
      tev = detail::evaluate_program(cp, model, trial, true);
      if (tev.value <= ev.value + 1e-4 * decrease + ev.rounding) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // Rounding floor reached: accept only if it still improves the residual.
      const double tres = detail::kkt_residual(tree, bounds, trial, tev.grad);
      if (!(tres < res) && ++stalled > 20)
        throw Error(ErrorCode::max_iterations, "line search stalled at KKT residual " + std::to_string(res));
      if (!(tres < res)) continue;
    }
    a = trial;
    ev = std::move(tev);
    res = detail::kkt_residual(tree, bounds, a, ev.grad);
  }
  return ValueReport{ev.value, ControlPolicy{std::move(a)}, res, it};
}

struct UniquenessWitness {
  double max_sup_distance = 0.0;  // largest sup-norm gap to the first solution
  std::size_t restarts = 0;
  bool agreed(double tol = 1e-6) const { return max_sup_distance <= tol; }
};

/// Re-solves from `restarts` random starting policies in the box.
inline UniquenessWitness uniqueness_witness(const ScenarioTree& tree, const CostModel& model, const ControlBounds& bounds,
                                            std::size_t restarts = 16, std::uint64_t seed = 11, double tol = 1e-9) {
  const std::size_t K = control_count(tree);
  detail::Rng rng(seed);
  std::vector<std::vector<double>> starts(restarts, std::vector<double>(K));
  for (auto& s : starts)
    for (auto& v : s) v = rng.uniform(-bounds.L, bounds.L);
  std::vector<std::vector<double>> sols(restarts);
  for (std::size_t r = 0; r < restarts; ++r) {
    SolverOptions opt;
    opt.tol = tol;
    opt.initial = starts[r];
    opt.check_convexity = r == 0;
    sols[r] = solve_value(tree, model, bounds, opt).policy.values;
  }
  UniquenessWitness w;
  w.restarts = restarts;
  for (std::size_t r = 1; r < restarts; ++r)
    for (std::size_t n = 0; n < K; ++n) w.max_sup_distance = std::max(w.max_sup_distance, std::abs(sols[r][n] - sols[0][n]));
  return w;
}

struct GridSearchResult {
  double value = std::numeric_limits<double>::infinity();
  ControlPolicy policy;
  double spacing = 0.0;
};

/// Exhaustive minimum over node controls on the uniform grid of grid_n
/// points in [-L, L].
inline GridSearchResult brute_force_value(const ScenarioTree& tree, const CostModel& model, const ControlBounds& bounds,
                                          std::size_t grid_n) {
  detail::require_controlled(model, tree);
  if (grid_n < 2) throw Error(ErrorCode::invalid_params, "grid needs at least two points");
  const std::size_t K = control_count(tree);
  if (static_cast<double>(K) * std::log(static_cast<double>(grid_n)) > std::log(1e6) + 1e-12)
    throw Error(ErrorCode::too_large, "grid search over more than 10^6 points");
  const auto cp = detail::control_paths(tree);
  std::vector<double> grid(grid_n);
  const double h = 2.0 * bounds.L / static_cast<double>(grid_n - 1);
  for (std::size_t i = 0; i < grid_n; ++i) grid[i] = i + 1 == grid_n ? bounds.L : -bounds.L + h * static_cast<double>(i);
  if (grid_n % 2 == 1) grid[grid_n / 2] = 0.0;

  GridSearchResult best;
  best.spacing = h;
  std::vector<std::size_t> idx(K, 0);
  std::vector<double> a(K, grid[0]);
  for (;;) {
    double v = 0.0;
    for (std::size_t k = 0; k < cp.x.size(); ++k) v += cp.prob[k] * model.eval(cp.x[k], detail::path_controls(cp, k, a));
    if (v < best.value) {
      best.value = v;
      best.policy.values = a;
    }
    std::size_t d = 0;
    while (d < K && ++idx[d] == grid_n) {
      idx[d] = 0;
      a[d] = grid[0];
      ++d;
    }
    if (d == K) break;
    a[d] = grid[idx[d]];
  }
  return best;
}

}  // namespace awsens
