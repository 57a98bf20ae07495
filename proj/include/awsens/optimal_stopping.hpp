#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "awsens/cost_models.hpp"
#include "awsens/error.hpp"
#include "awsens/process_tree.hpp"

namespace awsens {

/// Stopping time given by the nodes at which it stops: every root-to-leaf
/// path meets the stop set exactly once.
struct StoppingPolicy {
  std::vector<NodeId> stop_set;  // ascending ids
  std::vector<int> tau;          // per leaf, in the order of tree.leaves()

  int tau_of(const ScenarioTree& tree, NodeId leaf) const {
    return tau.at(tree.level_index(leaf));
  }
};

/// Backward-induction table. stop_value is f(x, t) at a node (NaN at the
/// root, stopping at time 0 is not allowed); continuation is NaN at leaves.
struct SnellTable {
  std::vector<double> envelope;
  std::vector<double> continuation;
  std::vector<double> stop_value;
  double uniqueness_margin = std::numeric_limits<double>::infinity();
};

struct StoppingSolution {
  double value = 0.0;
  StoppingPolicy policy;
  SnellTable table;
};

namespace detail {

inline void require_stopping(const CostModel& model, const ScenarioTree& tree) {
  if (model.kind() != ModelKind::stopping)
    throw Error(ErrorCode::invalid_params, "model '" + model.name() + "' is not a stopping model");
  if (model.horizon() != tree.horizon()) throw Error(ErrorCode::horizon_mismatch, "model and tree horizons differ");
}

// f(x, t) at each non-root node, read along any path through the node.
inline std::vector<double> stop_values(const ScenarioTree& tree, const CostModel& model) {
  std::vector<double> out(tree.size(), std::numeric_limits<double>::quiet_NaN());
  for (const auto& node : tree.nodes()) {
    if (node.time == 0) continue;
    out[node.id] = model.eval(tree.path_values(tree.first_leaf_below(node.id)), node.time);
  }
  return out;
}

inline StoppingPolicy policy_from_stops(const ScenarioTree& tree, std::vector<NodeId> stops) {
  std::sort(stops.begin(), stops.end());
  StoppingPolicy pol;
  pol.tau.assign(tree.leaves().size(), 0);
  std::vector<char> is_stop(tree.size(), 0);
  for (NodeId n : stops) is_stop[n] = 1;
  for (NodeId leaf : tree.leaves()) {
    int hit = 0;
    for (int t = 1; t <= tree.horizon(); ++t)
      if (is_stop[tree.ancestor_at(leaf, t)]) {
        if (hit != 0) throw Error(ErrorCode::invalid_params, "stop set is not an antichain");
        hit = t;
      }
    if (hit == 0) throw Error(ErrorCode::invalid_params, "stop set misses a path");
    pol.tau[tree.level_index(leaf)] = hit;
  }
  pol.stop_set = std::move(stops);
  return pol;
}

}  // namespace detail

/// Snell envelope of the cost f(X, t) without the uniqueness check.
/// Stops at a node iff the stop value is strictly below the continuation.
inline StoppingSolution snell_envelope(const ScenarioTree& tree, const CostModel& model) {
  detail::require_stopping(model, tree);
  const int T = tree.horizon();
  SnellTable tab;
  tab.stop_value = detail::stop_values(tree, model);
  tab.envelope.assign(tree.size(), 0.0);
  tab.continuation.assign(tree.size(), std::numeric_limits<double>::quiet_NaN());
  for (NodeId leaf : tree.leaves()) tab.envelope[leaf] = tab.stop_value[leaf];
  for (int t = T - 1; t >= 0; --t) {
    for (NodeId n : tree.nodes_at(t)) {
      double cont = 0.0;
      for (NodeId c : tree.node(n).children) cont += tree.node(c).cond_prob * tab.envelope[c];
      tab.continuation[n] = cont;
      tab.envelope[n] = t == 0 ? cont : std::min(tab.stop_value[n], cont);
      if (t > 0) tab.uniqueness_margin = std::min(tab.uniqueness_margin, std::abs(tab.stop_value[n] - cont));
    }
  }
  std::vector<NodeId> stops;
  std::vector<NodeId> stack(tree.node(tree.root()).children.rbegin(), tree.node(tree.root()).children.rend());
  while (!stack.empty()) {
    const NodeId n = stack.back();
    stack.pop_back();
    if (tree.is_leaf(n) || tab.stop_value[n] < tab.continuation[n]) {
      stops.push_back(n);
      continue;
    }
    for (auto it = tree.node(n).children.rbegin(); it != tree.node(n).children.rend(); ++it) stack.push_back(*it);
  }
  StoppingSolution sol;
  sol.value = tab.envelope[tree.root()];
  sol.policy = detail::policy_from_stops(tree, std::move(stops));
  sol.table = std::move(tab);
  return sol;
}

/// s(P) = inf over stopping times in {1..T} of E_P[f(X, tau)], with the
/// guarantee that the optimal stopping time is unique: raises
/// AmbiguousStopping when some node at a time 1..T-1 has
/// |stop value - continuation| <= tol.
inline StoppingSolution solve_stopping(const ScenarioTree& tree, const CostModel& model, double tol = 1e-9) {
  auto sol = snell_envelope(tree, model);
  if (sol.table.uniqueness_margin <= tol)
    throw Error(ErrorCode::ambiguous_stopping,
                "optimal stopping time is not unique (margin " + std::to_string(sol.table.uniqueness_margin) + ")");
  return sol;
}

/// E_P[f(X, tau)] for a given stopping policy.
inline double stopping_value(const ScenarioTree& tree, const CostModel& model, const StoppingPolicy& policy) {
  detail::require_stopping(model, tree);
  double v = 0.0;
  for (NodeId leaf : tree.leaves())
    v += tree.probability(leaf) * model.eval(tree.path_values(leaf), policy.tau_of(tree, leaf));
  return v;
}

struct BruteForceStopping {
  double value = 0.0;
  StoppingPolicy policy;
  bool unique = true;
  std::size_t candidates = 0;
};

/// Enumerates every stopping time (antichain covering all paths) and
/// returns the best one. `unique` is false if another stopping time comes
/// within 1e-12 of the optimum.
inline BruteForceStopping brute_force_stopping(const ScenarioTree& tree, const CostModel& model) {
  detail::require_stopping(model, tree);
  const auto fv = detail::stop_values(tree, model);
  const int T = tree.horizon();

  // Number of stopping rules per subtree: 1 + prod(children), root: prod.
  std::vector<double> count(tree.size(), 1.0);
  for (int t = T - 1; t >= 0; --t)
    for (NodeId n : tree.nodes_at(t)) {
      double prod = 1.0;
      for (NodeId c : tree.node(n).children) prod *= count[c];
      count[n] = (t == 0 ? 0.0 : 1.0) + prod;
    }
  if (count[tree.root()] > 1e6) throw Error(ErrorCode::too_large, "more than 10^6 stopping times");

  struct Option {
    double value;
    std::vector<NodeId> stops;
  };
  std::vector<std::vector<Option>> options(tree.size());
  for (int t = T; t >= 0; --t) {
    for (NodeId n : tree.nodes_at(t)) {
      auto& opts = options[n];
      if (t > 0) opts.push_back({tree.probability(n) * fv[n], {n}});
      if (t == T) continue;
      std::vector<Option> combos{{0.0, {}}};
      for (NodeId c : tree.node(n).children) {
        std::vector<Option> next;
        next.reserve(combos.size() * options[c].size());
        for (const auto& base : combos)
          for (const auto& add : options[c]) {
            Option o{base.value + add.value, base.stops};
            o.stops.insert(o.stops.end(), add.stops.begin(), add.stops.end());
            next.push_back(std::move(o));
          }
        combos = std::move(next);
        options[c].clear();
        options[c].shrink_to_fit();
      }
      for (auto& o : combos) opts.push_back(std::move(o));
    }
  }
  const auto& all = options[tree.root()];
  std::size_t best = 0;
  for (std::size_t i = 1; i < all.size(); ++i)
    if (all[i].value < all[best].value) best = i;
  BruteForceStopping out;
  out.value = all[best].value;
  out.candidates = all.size();
  for (std::size_t i = 0; i < all.size(); ++i)
    if (i != best && all[i].value <= all[best].value + 1e-12) out.unique = false;
  out.policy = detail::policy_from_stops(tree, all[best].stops);
  return out;
}

}  // namespace awsens
