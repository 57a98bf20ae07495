#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "awsens/detail/random.hpp"
#include "awsens/error.hpp"

namespace awsens {

using NodeId = std::size_t;

/// Values attached to tree nodes, indexed by NodeId. Entries outside the
/// levels an operation defines are NaN.
using NodeValues = std::vector<double>;

inline constexpr double kStochasticTolerance = 1e-12;

struct Node {
  NodeId id = 0;
  int time = 0;
  double value = 0.0;  // unused at the root
  double cond_prob = 1.0;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
};

/// Input record for building a tree. `parent` refers to the position of the
/// parent inside the same input list; exactly one record has no parent.
struct NodeSpec {
  std::optional<std::size_t> parent;
  double value = 0.0;
  double cond_prob = 1.0;
  std::optional<int> time;  // checked against the depth when present
};

/// Finitely supported law on R^T together with its canonical filtration,
/// stored as a rooted tree. Nodes at depth t are the atoms of F_t.
///
/// Trees are immutable and always stored in canonical breadth-first order:
/// the root has id 0, every level is contiguous, and children keep the order
/// in which they were supplied. Consequently every node at time t < T has a
/// smaller id than every leaf.
class ScenarioTree {
 public:
  struct Built;

  static ScenarioTree build(int horizon, const std::vector<NodeSpec>& specs);

  /// Same as build() but also returns the id assigned to every input record.
  static Built build_with_map(int horizon, const std::vector<NodeSpec>& specs);

  int horizon() const noexcept { return horizon_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  NodeId root() const noexcept { return 0; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const std::vector<NodeId>& nodes_at(int t) const { return levels_.at(static_cast<std::size_t>(t)); }
  const std::vector<NodeId>& leaves() const { return levels_.back(); }
  bool is_leaf(NodeId id) const { return nodes_.at(id).time == horizon_; }

  /// Unconditional probability of the atom (product of conditional
  /// probabilities along the path from the root).
  double probability(NodeId id) const { return probability_.at(id); }

  /// Position of a node inside its level.
  std::size_t level_index(NodeId id) const { return level_index_.at(id); }

  NodeId ancestor_at(NodeId id, int t) const {
    while (nodes_.at(id).time > t) id = *nodes_[id].parent;
    return id;
  }

  /// (x_1, ..., x_t) for a node at time t.
  std::vector<double> path_values(NodeId id) const {
    std::vector<double> out(static_cast<std::size_t>(nodes_.at(id).time));
    for (NodeId n = id; nodes_[n].time > 0; n = *nodes_[n].parent)
      out[static_cast<std::size_t>(nodes_[n].time - 1)] = nodes_[n].value;
    return out;
  }

  /// A leaf in the subtree of `id` (the first one in canonical order).
  NodeId first_leaf_below(NodeId id) const {
    while (!nodes_.at(id).children.empty()) id = nodes_[id].children.front();
    return id;
  }

 private:
  ScenarioTree() = default;

  int horizon_ = 0;
  std::vector<Node> nodes_;
  std::vector<std::vector<NodeId>> levels_;
  std::vector<double> probability_;
  std::vector<std::size_t> level_index_;
};

struct ScenarioTree::Built {
  ScenarioTree tree;
  std::vector<NodeId> id_of_spec;
};

inline ScenarioTree ScenarioTree::build(int horizon, const std::vector<NodeSpec>& specs) {
  return build_with_map(horizon, specs).tree;
}

inline ScenarioTree::Built ScenarioTree::build_with_map(int horizon, const std::vector<NodeSpec>& specs) {
  using E = ErrorCode;
  if (horizon < 1) throw Error(E::invalid_tree, "horizon must be at least 1");
  if (specs.empty()) throw Error(E::invalid_tree, "tree has no nodes");

  const std::size_t n = specs.size();
  std::optional<std::size_t> root;
  std::vector<std::vector<std::size_t>> kids(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = specs[i];
    if (!s.parent) {
      if (root) throw Error(E::invalid_tree, "more than one node without parent", i);
      root = i;
      continue;
    }
    if (*s.parent >= n || *s.parent == i)
      throw Error(E::invalid_tree, "parent reference out of range", i);
    if (!std::isfinite(s.value)) throw Error(E::invalid_tree, "node value is not finite", i);
    if (!(s.cond_prob > 0.0 && s.cond_prob <= 1.0))
      throw Error(E::invalid_tree, "cond_prob must lie in (0, 1]", i);
    kids[*s.parent].push_back(i);
  }
  if (!root) throw Error(E::invalid_tree, "no root node");

  ScenarioTree tree;
  tree.horizon_ = horizon;
  tree.levels_.resize(static_cast<std::size_t>(horizon) + 1);
  std::vector<NodeId> id_of(n, std::numeric_limits<NodeId>::max());

  // Breadth-first relabelling; also detects cycles and unreachable records.
  std::deque<std::size_t> queue{*root};
  std::vector<int> depth(n, -1);
  depth[*root] = 0;
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const NodeId id = tree.nodes_.size();
    id_of[i] = id;
    Node node;
    node.id = id;
    node.time = depth[i];
    if (specs[i].time && *specs[i].time != depth[i])
      throw Error(E::invalid_tree, "time field does not match depth", i);
    if (depth[i] > horizon) throw Error(E::invalid_tree, "node deeper than horizon", i);
    if (specs[i].parent) {
      node.parent = id_of[*specs[i].parent];
      node.value = specs[i].value;
      node.cond_prob = specs[i].cond_prob;
    }
    tree.nodes_.push_back(node);
    for (std::size_t k : kids[i]) {
      if (depth[k] != -1) throw Error(E::invalid_tree, "cycle in parent references", k);
      depth[k] = depth[i] + 1;
      queue.push_back(k);
    }
  }
  if (tree.nodes_.size() != n) {
    for (std::size_t i = 0; i < n; ++i)
      if (depth[i] == -1) throw Error(E::invalid_tree, "node not reachable from the root", i);
  }

  std::vector<std::size_t> spec_of(n);
  for (std::size_t i = 0; i < n; ++i) spec_of[id_of[i]] = i;

  tree.probability_.assign(n, 0.0);
  tree.level_index_.assign(n, 0);
  for (auto& node : tree.nodes_) {
    if (node.parent) {
      tree.nodes_[*node.parent].children.push_back(node.id);
      tree.probability_[node.id] = tree.probability_[*node.parent] * node.cond_prob;
    } else {
      tree.probability_[node.id] = 1.0;
    }
    auto& level = tree.levels_[static_cast<std::size_t>(node.time)];
    tree.level_index_[node.id] = level.size();
    level.push_back(node.id);
  }

  for (const auto& node : tree.nodes_) {
    const std::size_t src = spec_of[node.id];
    if (node.time < horizon) {
      if (node.children.empty()) throw Error(E::invalid_tree, "leaf before the horizon", src);
      double total = 0.0;
      for (NodeId c : node.children) total += tree.nodes_[c].cond_prob;
      if (std::abs(total - 1.0) > kStochasticTolerance)
        throw Error(E::invalid_tree, "conditional probabilities of children do not sum to 1", src);
      std::vector<double> vals;
      for (NodeId c : node.children) vals.push_back(tree.nodes_[c].value);
      std::sort(vals.begin(), vals.end());
      if (std::adjacent_find(vals.begin(), vals.end()) != vals.end())
        throw Error(E::invalid_tree, "sibling nodes share a value", src);
    }
  }
  double leaf_total = 0.0;
  for (NodeId leaf : tree.levels_.back()) leaf_total += tree.probability_[leaf];
  if (std::abs(leaf_total - 1.0) > kStochasticTolerance)
    throw Error(E::invalid_tree, "leaf probabilities do not sum to 1");

  return Built{std::move(tree), std::move(id_of)};
}

// ---------------------------------------------------------------------------
// Paths

struct PathEntry {
  NodeId leaf = 0;
  std::vector<double> values;
  double probability = 0.0;
};

struct PathTable {
  std::vector<PathEntry> paths;
};

inline PathTable enumerate_paths(const ScenarioTree& tree) {
  PathTable table;
  table.paths.reserve(tree.leaves().size());
  for (NodeId leaf : tree.leaves()) {
    double prob = 1.0;
    for (NodeId n = leaf; tree.node(n).parent; n = *tree.node(n).parent) prob *= tree.node(n).cond_prob;
    table.paths.push_back({leaf, tree.path_values(leaf), prob});
  }
  return table;
}

// ---------------------------------------------------------------------------
// Conditional expectations

/// E[h | F_to] for h given on the nodes of time `from` (h measurable w.r.t.
/// F_from, to <= from). Computed level by level, so conditioning in two steps
/// goes through exactly the same arithmetic as conditioning in one.
/// Levels to..from of the result are filled, other entries are NaN.
inline NodeValues conditional_expectation(const ScenarioTree& tree, const NodeValues& values, int from, int to) {
  if (values.size() != tree.size())
    throw Error(ErrorCode::dimension_mismatch, "node value vector has wrong size");
  if (from > tree.horizon() || to < 0 || to > from)
    throw Error(ErrorCode::invalid_params, "conditioning times out of range");
  NodeValues out(tree.size(), std::numeric_limits<double>::quiet_NaN());
  for (NodeId n : tree.nodes_at(from)) out[n] = values[n];
  for (int t = from - 1; t >= to; --t) {
    for (NodeId n : tree.nodes_at(t)) {
      double acc = 0.0;
      for (NodeId c : tree.node(n).children) acc += tree.node(c).cond_prob * out[c];
      out[n] = acc;
    }
  }
  return out;
}

/// E[h | F_t] for h given on the leaves.
inline NodeValues conditional_expectation(const ScenarioTree& tree, const NodeValues& leaf_values, int t) {
  return conditional_expectation(tree, leaf_values, tree.horizon(), t);
}

/// Sum over the nodes of time t of probability * |value|^power.
inline double level_moment(const ScenarioTree& tree, const NodeValues& values, int t, double power) {
  double acc = 0.0;
  for (NodeId n : tree.nodes_at(t)) acc += tree.probability(n) * std::pow(std::abs(values[n]), power);
  return acc;
}

/// sum_t E|X_t|^p, accumulated over nodes.
inline double pth_moment(const ScenarioTree& tree, double p) {
  double acc = 0.0;
  for (const auto& node : tree.nodes())
    if (node.time > 0) acc += tree.probability(node.id) * std::pow(std::abs(node.value), p);
  return acc;
}

// ---------------------------------------------------------------------------
// Structural helpers

/// Restriction of the law to the first `horizon` coordinates.
inline ScenarioTree truncate(const ScenarioTree& tree, int horizon) {
  if (horizon < 1 || horizon > tree.horizon())
    throw Error(ErrorCode::invalid_params, "truncation horizon out of range");
  std::vector<NodeSpec> specs;
  for (const auto& node : tree.nodes()) {
    if (node.time > horizon) break;
    specs.push_back({node.parent, node.value, node.cond_prob, std::nullopt});
  }
  return ScenarioTree::build(horizon, specs);
}

/// Labeled-tree isomorphism: same values and (within tol) the same
/// conditional probabilities, irrespective of the order of siblings.
inline bool isomorphic(const ScenarioTree& a, const ScenarioTree& b, double tol = 1e-12) {
  if (a.horizon() != b.horizon()) return false;
  auto sorted_children = [](const ScenarioTree& t, NodeId n) {
    auto c = t.node(n).children;
    std::sort(c.begin(), c.end(), [&](NodeId l, NodeId r) { return t.node(l).value < t.node(r).value; });
    return c;
  };
  std::vector<std::pair<NodeId, NodeId>> stack{{a.root(), b.root()}};
  while (!stack.empty()) {
    auto [x, y] = stack.back();
    stack.pop_back();
    const auto cx = sorted_children(a, x);
    const auto cy = sorted_children(b, y);
    if (cx.size() != cy.size()) return false;
    for (std::size_t i = 0; i < cx.size(); ++i) {
      if (a.node(cx[i]).value != b.node(cy[i]).value) return false;
      if (std::abs(a.node(cx[i]).cond_prob - b.node(cy[i]).cond_prob) > tol) return false;
      stack.emplace_back(cx[i], cy[i]);
    }
  }
  return true;
}

/// Law of X + D where D is given per node (adapted displacement). Siblings
/// that land on the same value are merged, so the result carries the
/// canonical filtration of the displaced process.
struct Displaced {
  ScenarioTree tree;
  std::vector<NodeId> node_map;  // node of the input tree -> node of `tree`
  bool merged = false;
};

inline Displaced displace(const ScenarioTree& tree, const NodeValues& displacement) {
  if (displacement.size() != tree.size())
    throw Error(ErrorCode::dimension_mismatch, "displacement vector has wrong size");
  std::vector<NodeSpec> specs{NodeSpec{}};
  std::vector<double> mass{1.0};
  std::vector<std::size_t> spec_of(tree.size(), 0);
  std::map<std::pair<std::size_t, double>, std::size_t> lookup;
  bool merged = false;
  for (const auto& node : tree.nodes()) {
    if (!node.parent) continue;
    const double v = node.value + displacement[node.id];
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_params, "displaced value is not finite");
    const std::size_t parent_spec = spec_of[*node.parent];
    auto [it, inserted] = lookup.try_emplace({parent_spec, v}, specs.size());
    if (inserted) {
      specs.push_back({parent_spec, v, 0.0, std::nullopt});
      mass.push_back(0.0);
    } else {
      merged = true;
    }
    spec_of[node.id] = it->second;
    mass[it->second] += tree.probability(node.id);
  }
  for (std::size_t i = 1; i < specs.size(); ++i) specs[i].cond_prob = mass[i] / mass[*specs[i].parent];
  if (merged) {
    // Renormalise kernels so they sum to one in floating point as well.
    std::vector<double> total(specs.size(), 0.0);
    for (std::size_t i = 1; i < specs.size(); ++i) total[*specs[i].parent] += specs[i].cond_prob;
    for (std::size_t i = 1; i < specs.size(); ++i) specs[i].cond_prob /= total[*specs[i].parent];
  } else {
    for (const auto& node : tree.nodes())
      if (node.parent) specs[spec_of[node.id]].cond_prob = node.cond_prob;
  }
  auto built = ScenarioTree::build_with_map(tree.horizon(), specs);
  std::vector<NodeId> map(tree.size());
  for (NodeId n = 0; n < tree.size(); ++n) map[n] = built.id_of_spec[spec_of[n]];
  return Displaced{std::move(built.tree), std::move(map), merged};
}

// ---------------------------------------------------------------------------
// Generators

/// Non-recombining binomial tree. X_1 = start + up / start + down; for t >= 2
/// every step adds `drift` plus up / down.
inline ScenarioTree gen_binomial(int horizon, double start, double up, double down, double p_up, double drift = 0.0) {
  if (horizon < 1) throw Error(ErrorCode::invalid_params, "T must be at least 1");
  if (!(p_up > 0.0 && p_up < 1.0)) throw Error(ErrorCode::invalid_params, "p_up must lie in (0, 1)");
  if (!(up != down)) throw Error(ErrorCode::invalid_params, "up and down steps must differ");
  std::vector<NodeSpec> specs{NodeSpec{}};
  std::vector<std::size_t> frontier{0};
  std::vector<double> level_value{start};
  for (int t = 1; t <= horizon; ++t) {
    std::vector<std::size_t> next;
    std::vector<double> next_value;
    const double shift = t == 1 ? 0.0 : drift;
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      for (int b = 0; b < 2; ++b) {
        const double v = level_value[k] + shift + (b == 0 ? up : down);
        specs.push_back({frontier[k], v, b == 0 ? p_up : 1.0 - p_up, t});
        next.push_back(specs.size() - 1);
        next_value.push_back(v);
      }
    }
    frontier = std::move(next);
    level_value = std::move(next_value);
  }
  return ScenarioTree::build(horizon, specs);
}

/// Non-recombining multinomial tree: every node branches into
/// parent + drift + steps[k] with probability probs[k]. Drift applies from
/// t = 2 on, as in gen_binomial.
inline ScenarioTree gen_lattice(int horizon, double start, const std::vector<double>& steps,
                                const std::vector<double>& probs, double drift = 0.0) {
  if (horizon < 1) throw Error(ErrorCode::invalid_params, "T must be at least 1");
  if (steps.size() < 2 || steps.size() != probs.size())
    throw Error(ErrorCode::invalid_params, "need at least two steps with matching probabilities");
  double total = 0.0;
  for (double q : probs) {
    if (!(q > 0.0)) throw Error(ErrorCode::invalid_params, "step probabilities must be positive");
    total += q;
  }
  if (std::abs(total - 1.0) > kStochasticTolerance)
    throw Error(ErrorCode::invalid_params, "step probabilities must sum to 1");
  std::vector<NodeSpec> specs{NodeSpec{}};
  std::vector<std::size_t> frontier{0};
  std::vector<double> level_value{start};
  for (int t = 1; t <= horizon; ++t) {
    std::vector<std::size_t> next;
    std::vector<double> next_value;
    const double shift = t == 1 ? 0.0 : drift;
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      for (std::size_t b = 0; b < steps.size(); ++b) {
        const double v = level_value[k] + shift + steps[b];
        specs.push_back({frontier[k], v, probs[b], t});
        next.push_back(specs.size() - 1);
        next_value.push_back(v);
      }
    }
    frontier = std::move(next);
    level_value = std::move(next_value);
  }
  return ScenarioTree::build(horizon, specs);
}

/// Random tree with `branching` children per node. Increments lie in
/// [-1.5, 1.5], are at least 0.05 away from zero and from each other (no flat
/// steps, distinct siblings); conditional probabilities are at least
/// 1 / (6 * branching). Deterministic given the seed.
inline ScenarioTree gen_random(int horizon, std::size_t branching, std::uint64_t seed) {
  if (horizon < 1) throw Error(ErrorCode::invalid_params, "T must be at least 1");
  if (branching < 2) throw Error(ErrorCode::invalid_params, "branching must be at least 2");
  if (branching > 16) throw Error(ErrorCode::invalid_params, "branching above 16 is not supported");
  detail::Rng rng(seed);
  std::vector<NodeSpec> specs{NodeSpec{}};
  std::vector<std::size_t> frontier{0};
  std::vector<double> level_value{0.0};
  for (int t = 1; t <= horizon; ++t) {
    std::vector<std::size_t> next;
    std::vector<double> next_value;
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      std::vector<double> inc;
      while (inc.size() < branching) {
        const double d = std::round(rng.uniform(-1.5, 1.5) * 1e6) / 1e6;
        if (std::abs(d) < 0.05) continue;
        bool close = false;
        for (double e : inc) close = close || std::abs(e - d) < 0.05;
        if (!close) inc.push_back(d);
      }
      std::vector<double> w(branching);
      double total = 0.0;
      for (auto& x : w) total += (x = 0.2 + rng.uniform());
      for (auto& x : w) x /= total;
      for (std::size_t b = 0; b < branching; ++b) {
        const double v = level_value[k] + inc[b];
        specs.push_back({frontier[k], v, w[b], t});
        next.push_back(specs.size() - 1);
        next_value.push_back(v);
      }
    }
    frontier = std::move(next);
    level_value = std::move(next_value);
  }
  return ScenarioTree::build(horizon, specs);
}

}  // namespace awsens
