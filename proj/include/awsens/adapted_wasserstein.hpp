#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <tuple>
#include <utility>
#include <vector>

#include "awsens/detail/dense_simplex.hpp"
#include "awsens/detail/parallel.hpp"
#include "awsens/discrete_ot.hpp"
#include "awsens/error.hpp"
#include "awsens/process_tree.hpp"

namespace awsens {

/// Order p of the distance and its Hölder conjugate q = p / (p - 1).
class AWParams {
 public:
  explicit AWParams(double p) : p_(p), q_(p / (p - 1.0)) {
    if (!(p > 1.0) || !std::isfinite(p)) throw Error(ErrorCode::invalid_params, "p must be a finite number > 1");
  }
  double p() const noexcept { return p_; }
  double q() const noexcept { return q_; }

 private:
  double p_;
  double q_;
};

struct PairNode {
  NodeId x = 0;
  NodeId y = 0;
  int time = 0;
  double cond_prob = 1.0;
  std::optional<std::size_t> parent;
  std::vector<std::size_t> children;
};

struct LeafPair {
  NodeId x = 0;
  NodeId y = 0;
  double probability = 0.0;
};

/// Joint law of (X, Y) on the product of two scenario trees, disintegrated
/// along the joint filtration: pair node (x, y) at time t is the event
/// {X_{1:t} = x, Y_{1:t} = y}. Any coupling of finitely supported laws has
/// such a representation; causality is a property checked separately.
class CouplingTree {
 public:
  /// `nodes` must start with the root pair and list parents before children;
  /// the `children` fields are filled in here.
  CouplingTree(ScenarioTree first, ScenarioTree second, std::vector<PairNode> nodes)
      : first_(std::move(first)), second_(std::move(second)), nodes_(std::move(nodes)) {
    if (first_.horizon() != second_.horizon())
      throw Error(ErrorCode::horizon_mismatch, "coupled trees have different horizons");
    if (nodes_.empty() || nodes_[0].parent || nodes_[0].x != first_.root() || nodes_[0].y != second_.root())
      throw Error(ErrorCode::invalid_params, "coupling must start at the pair of roots");
    probability_.assign(nodes_.size(), 1.0);
    for (auto& pn : nodes_) pn.children.clear();
    std::map<std::tuple<std::size_t, NodeId, NodeId>, std::size_t> seen;
    for (std::size_t k = 1; k < nodes_.size(); ++k) {
      auto& pn = nodes_[k];
      if (!pn.parent || *pn.parent >= k) throw Error(ErrorCode::invalid_params, "pair node parent must precede it");
      const auto& par = nodes_[*pn.parent];
      if (first_.node(pn.x).parent != par.x || second_.node(pn.y).parent != par.y)
        throw Error(ErrorCode::invalid_params, "pair node does not extend its parent in both trees");
      if (!(pn.cond_prob > 0.0 && pn.cond_prob <= 1.0 + 1e-12))
        throw Error(ErrorCode::invalid_params, "pair cond_prob must lie in (0, 1]");
      if (!seen.emplace(std::make_tuple(*pn.parent, pn.x, pn.y), k).second)
        throw Error(ErrorCode::invalid_params, "duplicate pair node");
      pn.time = par.time + 1;
      nodes_[*pn.parent].children.push_back(k);
      probability_[k] = probability_[*pn.parent] * pn.cond_prob;
    }
    for (const auto& pn : nodes_) {
      if (pn.time < horizon()) {
        if (pn.children.empty()) throw Error(ErrorCode::invalid_params, "pair node without children before horizon");
        double total = 0.0;
        for (std::size_t c : pn.children) total += nodes_[c].cond_prob;
        if (std::abs(total - 1.0) > 1e-9)
          throw Error(ErrorCode::invalid_params, "pair kernels do not sum to 1");
      }
    }
  }

  static CouplingTree product(const ScenarioTree& p, const ScenarioTree& q) {
    std::vector<PairNode> nodes{PairNode{p.root(), q.root(), 0, 1.0, std::nullopt, {}}};
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const NodeId x = nodes[k].x, y = nodes[k].y;
      for (NodeId cx : p.node(x).children)
        for (NodeId cy : q.node(y).children)
          nodes.push_back({cx, cy, 0, p.node(cx).cond_prob * q.node(cy).cond_prob, k, {}});
    }
    return CouplingTree(p, q, std::move(nodes));
  }

  /// Coupling induced by Y = phi(X) for a node map phi that sends every node
  /// of `p` to a node of `q` at the same time and commutes with parents.
  static CouplingTree monge(const ScenarioTree& p, const ScenarioTree& q, const std::vector<NodeId>& phi) {
    if (phi.size() != p.size()) throw Error(ErrorCode::dimension_mismatch, "node map has wrong size");
    std::vector<PathMass> masses;
    for (NodeId leaf : p.leaves()) masses.push_back({leaf, phi[leaf], p.probability(leaf)});
    return from_path_masses(p, q, masses);
  }

  struct PathMass {
    NodeId x_leaf;
    NodeId y_leaf;
    double mass;
  };

  /// Builds the pair tree of a joint law given on pairs of leaves.
  static CouplingTree from_path_masses(const ScenarioTree& p, const ScenarioTree& q, const std::vector<PathMass>& masses) {
    if (p.horizon() != q.horizon()) throw Error(ErrorCode::horizon_mismatch, "coupled trees have different horizons");
    const int T = p.horizon();
    std::vector<PairNode> nodes{PairNode{p.root(), q.root(), 0, 1.0, std::nullopt, {}}};
    std::vector<double> mass{0.0};
    std::map<std::tuple<std::size_t, NodeId, NodeId>, std::size_t> index;
    for (const auto& pm : masses) {
      if (!p.is_leaf(pm.x_leaf) || !q.is_leaf(pm.y_leaf))
        throw Error(ErrorCode::invalid_params, "path masses must refer to leaves");
      if (!(pm.mass > 0.0)) continue;
      std::size_t cur = 0;
      mass[0] += pm.mass;
      for (int t = 1; t <= T; ++t) {
        const NodeId x = p.ancestor_at(pm.x_leaf, t), y = q.ancestor_at(pm.y_leaf, t);
        auto [it, inserted] = index.try_emplace(std::make_tuple(cur, x, y), nodes.size());
        if (inserted) {
          nodes.push_back({x, y, t, 0.0, cur, {}});
          mass.push_back(0.0);
        }
        cur = it->second;
        mass[cur] += pm.mass;
      }
    }
    // Parents precede children only per path; reorder breadth-first.
    std::vector<std::vector<std::size_t>> kids(nodes.size());
    for (std::size_t k = 1; k < nodes.size(); ++k) kids[*nodes[k].parent].push_back(k);
    std::vector<std::size_t> order{0}, new_id(nodes.size());
    for (std::size_t i = 0; i < order.size(); ++i)
      for (std::size_t c : kids[order[i]]) order.push_back(c);
    std::vector<PairNode> sorted;
    sorted.reserve(nodes.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      new_id[order[i]] = i;
      PairNode pn = nodes[order[i]];
      if (pn.parent) {
        pn.cond_prob = mass[order[i]] / mass[*pn.parent];
        pn.parent = new_id[*pn.parent];
      }
      sorted.push_back(pn);
    }
    return CouplingTree(p, q, std::move(sorted));
  }

  const ScenarioTree& first() const noexcept { return first_; }
  const ScenarioTree& second() const noexcept { return second_; }
  const std::vector<PairNode>& nodes() const noexcept { return nodes_; }
  int horizon() const noexcept { return first_.horizon(); }
  double probability(std::size_t k) const { return probability_.at(k); }

  std::vector<LeafPair> leaf_pairs() const {
    std::vector<LeafPair> out;
    for (std::size_t k = 0; k < nodes_.size(); ++k)
      if (nodes_[k].time == horizon()) out.push_back({nodes_[k].x, nodes_[k].y, probability_[k]});
    return out;
  }

  /// sum_t E_pi |X_t - Y_t|^p, one entry per t = 1..T.
  std::vector<double> stage_costs(double p) const {
    std::vector<double> cost(static_cast<std::size_t>(horizon()), 0.0);
    for (std::size_t k = 1; k < nodes_.size(); ++k) {
      const auto& pn = nodes_[k];
      cost[static_cast<std::size_t>(pn.time - 1)] +=
          probability_[k] * std::pow(std::abs(first_.node(pn.x).value - second_.node(pn.y).value), p);
    }
    return cost;
  }

 private:
  ScenarioTree first_;
  ScenarioTree second_;
  std::vector<PairNode> nodes_;
  std::vector<double> probability_;
};

/// Marginal property on paths: summing the coupling over one coordinate
/// reproduces the leaf probabilities of the other tree.
inline bool has_valid_marginals(const CouplingTree& c, double tol = 1e-10) {
  std::vector<double> px(c.first().size(), 0.0), py(c.second().size(), 0.0);
  for (const auto& lp : c.leaf_pairs()) {
    px[lp.x] += lp.probability;
    py[lp.y] += lp.probability;
  }
  for (NodeId l : c.first().leaves())
    if (std::abs(px[l] - c.first().probability(l)) > tol) return false;
  for (NodeId l : c.second().leaves())
    if (std::abs(py[l] - c.second().probability(l)) > tol) return false;
  return true;
}

enum class Direction { x_to_y, y_to_x };

/// Causality of a coupling. For X -> Y: conditionally on X_{1:t}, Y_{1:t} is
/// independent of X_{t+1}. Checked on atoms in cross-multiplied form
///   pi(X_{1:t+1} = a', Y_{1:t} = b) m(a) = pi(X_{1:t} = a, Y_{1:t} = b) m(a')
/// with m the X-marginal of pi; the one-step identities for all t imply the
/// full conditional-independence statement.
inline bool check_causal(const CouplingTree& c, Direction dir, double tol = 1e-10) {
  const bool swap = dir == Direction::y_to_x;
  const ScenarioTree& lead = swap ? c.second() : c.first();
  const ScenarioTree& follow = swap ? c.first() : c.second();
  const int T = c.horizon();
  const auto leaves = c.leaf_pairs();
  for (int t = 1; t < T; ++t) {
    const auto& lead_next = lead.nodes_at(t + 1);
    const auto& lead_now = lead.nodes_at(t);
    const auto& fol_now = follow.nodes_at(t);
    const std::size_t nf = fol_now.size();
    std::vector<double> joint_next(lead_next.size() * nf, 0.0), joint_now(lead_now.size() * nf, 0.0);
    std::vector<double> m_next(lead_next.size(), 0.0), m_now(lead_now.size(), 0.0);
    for (const auto& lp : leaves) {
      const NodeId l_leaf = swap ? lp.y : lp.x;
      const NodeId f_leaf = swap ? lp.x : lp.y;
      const std::size_t a1 = lead.level_index(lead.ancestor_at(l_leaf, t + 1));
      const std::size_t a0 = lead.level_index(lead.ancestor_at(l_leaf, t));
      const std::size_t b = follow.level_index(follow.ancestor_at(f_leaf, t));
      joint_next[a1 * nf + b] += lp.probability;
      joint_now[a0 * nf + b] += lp.probability;
      m_next[a1] += lp.probability;
      m_now[a0] += lp.probability;
    }
    for (std::size_t i1 = 0; i1 < lead_next.size(); ++i1) {
      const std::size_t i0 = lead.level_index(*lead.node(lead_next[i1]).parent);
      for (std::size_t b = 0; b < nf; ++b) {
        const double lhs = joint_next[i1 * nf + b] * m_now[i0];
        const double rhs = joint_now[i0 * nf + b] * m_next[i1];
        if (std::abs(lhs - rhs) > tol) return false;
      }
    }
  }
  return true;
}

inline bool is_bicausal(const CouplingTree& c, double tol = 1e-10) {
  return check_causal(c, Direction::x_to_y, tol) && check_causal(c, Direction::y_to_x, tol);
}

struct AWResult {
  double distance = 0.0;
  double pth_power = 0.0;
  std::vector<double> per_stage_costs;
  CouplingTree coupling;
};

/// Adapted Wasserstein distance by backward recursion over pairs of nodes.
/// V(x, y) = 0 at leaf pairs; at earlier pairs V is the optimal transport
/// cost between the two children distributions for the cost
/// |x' - y'|^p + V(x', y'). The optimal plans, glued together, form an optimal
/// bicausal coupling. Pairs of one level are independent and may be solved
/// on several threads (see set_thread_cap).
inline AWResult aw_distance(const ScenarioTree& P, const ScenarioTree& Q, const AWParams& params) {
  if (P.horizon() != Q.horizon()) throw Error(ErrorCode::horizon_mismatch, "trees have different horizons");
  const int T = P.horizon();
  const double p = params.p();
  std::vector<std::vector<double>> value(static_cast<std::size_t>(T) + 1);
  std::vector<std::vector<TransportPlan>> plans(static_cast<std::size_t>(T));
  value[static_cast<std::size_t>(T)].assign(P.nodes_at(T).size() * Q.nodes_at(T).size(), 0.0);

  for (int t = T - 1; t >= 0; --t) {
    const auto& xs = P.nodes_at(t);
    const auto& ys = Q.nodes_at(t);
    const std::size_t ny = ys.size();
    const std::size_t ny_next = Q.nodes_at(t + 1).size();
    const auto& next_value = value[static_cast<std::size_t>(t) + 1];
    auto& level_plans = plans[static_cast<std::size_t>(t)];
    auto& level_value = value[static_cast<std::size_t>(t)];
    level_plans.assign(xs.size() * ny, TransportPlan{});
    level_value.assign(xs.size() * ny, 0.0);

    detail::parallel_for(xs.size() * ny, [&](std::size_t k) {
      const auto& cx = P.node(xs[k / ny]).children;
      const auto& cy = Q.node(ys[k % ny]).children;
      TransportPlan plan;
      if (t == T - 1) {
        // No continuation value: monotone coupling of the two conditional laws.
        auto order = [](const ScenarioTree& tr, const std::vector<NodeId>& c) {
          std::vector<std::size_t> idx(c.size());
          std::iota(idx.begin(), idx.end(), 0);
          std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return tr.node(c[a]).value < tr.node(c[b]).value; });
          return idx;
        };
        const auto ox = order(P, cx), oy = order(Q, cy);
        std::vector<double> xv, xw, yv, yw;
        for (std::size_t i : ox) xv.push_back(P.node(cx[i]).value), xw.push_back(P.node(cx[i]).cond_prob);
        for (std::size_t j : oy) yv.push_back(Q.node(cy[j]).value), yw.push_back(Q.node(cy[j]).cond_prob);
        plan = solve_sorted_1d(xv, xw, yv, yw, p);
        for (auto& e : plan.entries) e = {ox[e.row], oy[e.col], e.mass};
        std::sort(plan.entries.begin(), plan.entries.end(), [](const PlanEntry& a, const PlanEntry& b) {
          return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
      } else {
        TransportProblem prob;
        for (NodeId a : cx) prob.mu.push_back(P.node(a).cond_prob);
        for (NodeId b : cy) prob.nu.push_back(Q.node(b).cond_prob);
        prob.cost.reserve(cx.size() * cy.size());
        for (NodeId a : cx)
          for (NodeId b : cy)
            prob.cost.push_back(std::pow(std::abs(P.node(a).value - Q.node(b).value), p) +
                                next_value[P.level_index(a) * ny_next + Q.level_index(b)]);
        plan = solve_exact(prob);
      }
      level_value[k] = plan.objective;
      level_plans[k] = std::move(plan);
    });
  }

  std::vector<PairNode> nodes{PairNode{P.root(), Q.root(), 0, 1.0, std::nullopt, {}}};
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto [x, y, t, cp, par, ch] = nodes[k];
    if (t == T) continue;
    const auto& plan = plans[static_cast<std::size_t>(t)][P.level_index(x) * Q.nodes_at(t).size() + Q.level_index(y)];
    for (const auto& e : plan.entries)
      nodes.push_back({P.node(x).children[e.row], Q.node(y).children[e.col], t + 1, e.mass, k, {}});
  }
  CouplingTree coupling(P, Q, std::move(nodes));
  AWResult result{0.0, value[0][0], coupling.stage_costs(p), std::move(coupling)};
  result.distance = std::pow(result.pth_power, 1.0 / p);
  return result;
}

/// Ordinary Wasserstein-p between the laws on R^T (no filtration constraint):
/// one transport problem over paths with cost sum_t |x_t - y_t|^p.
struct FlatWasserstein {
  double distance = 0.0;
  double pth_power = 0.0;
};

inline FlatWasserstein flat_wasserstein(const ScenarioTree& P, const ScenarioTree& Q, const AWParams& params) {
  if (P.horizon() != Q.horizon()) throw Error(ErrorCode::horizon_mismatch, "trees have different horizons");
  const auto px = enumerate_paths(P), qy = enumerate_paths(Q);
  TransportProblem prob;
  for (const auto& e : px.paths) prob.mu.push_back(e.probability);
  for (const auto& e : qy.paths) prob.nu.push_back(e.probability);
  for (const auto& a : px.paths)
    for (const auto& b : qy.paths) {
      double c = 0.0;
      for (std::size_t t = 0; t < a.values.size(); ++t) c += std::pow(std::abs(a.values[t] - b.values[t]), params.p());
      prob.cost.push_back(c);
    }
  const auto plan = solve_exact(prob);
  return {std::pow(plan.objective, 1.0 / params.p()), plan.objective};
}

/// Oracle: linear program over joint path probabilities with marginal
/// constraints and the one-step bicausality identities written linearly,
///   pi(a', b) - cp(a') pi(a, b) = 0   (a' child of a, b at the time of a),
/// in both directions. Solved with a dense two-phase simplex.
inline AWResult brute_force_bicausal(const ScenarioTree& P, const ScenarioTree& Q, const AWParams& params) {
  if (P.horizon() != Q.horizon()) throw Error(ErrorCode::horizon_mismatch, "trees have different horizons");
  const int T = P.horizon();
  const auto& lx = P.leaves();
  const auto& ly = Q.leaves();
  const std::size_t nx = lx.size(), ny = ly.size();
  if (T > 3 || nx * ny > 10000) throw Error(ErrorCode::too_large, "brute-force bicausal LP limited to T <= 3 and 10^4 path pairs");

  detail::StandardFormLp lp;
  lp.num_vars = nx * ny;
  lp.objective.resize(lp.num_vars);
  const auto px = enumerate_paths(P), qy = enumerate_paths(Q);
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      double c = 0.0;
      for (std::size_t t = 0; t < static_cast<std::size_t>(T); ++t)
        c += std::pow(std::abs(px.paths[i].values[t] - qy.paths[j].values[t]), params.p());
      lp.objective[i * ny + j] = c;
    }
  for (std::size_t i = 0; i < nx; ++i) {
    std::vector<double> row(lp.num_vars, 0.0);
    for (std::size_t j = 0; j < ny; ++j) row[i * ny + j] = 1.0;
    lp.rows.push_back(std::move(row));
    lp.rhs.push_back(px.paths[i].probability);
  }
  for (std::size_t j = 0; j < ny; ++j) {
    std::vector<double> row(lp.num_vars, 0.0);
    for (std::size_t i = 0; i < nx; ++i) row[i * ny + j] = 1.0;
    lp.rows.push_back(std::move(row));
    lp.rhs.push_back(qy.paths[j].probability);
  }
  auto add_causal = [&](const ScenarioTree& lead, const std::vector<NodeId>& lead_leaves, const ScenarioTree& follow,
                        const std::vector<NodeId>& follow_leaves, bool lead_is_x) {
    for (int t = 1; t < T; ++t) {
      for (NodeId a1 : lead.nodes_at(t + 1)) {
        const NodeId a0 = *lead.node(a1).parent;
        const double cp = lead.node(a1).cond_prob;
        for (NodeId b : follow.nodes_at(t)) {
          std::vector<double> row(lp.num_vars, 0.0);
          for (std::size_t i = 0; i < lead_leaves.size(); ++i) {
            const NodeId li = lead_leaves[i];
            const bool under_a0 = lead.ancestor_at(li, t) == a0;
            if (!under_a0) continue;
            const double coef = (lead.ancestor_at(li, t + 1) == a1 ? 1.0 : 0.0) - cp;
            for (std::size_t j = 0; j < follow_leaves.size(); ++j) {
              if (follow.ancestor_at(follow_leaves[j], t) != b) continue;
              row[lead_is_x ? i * ny + j : j * ny + i] += coef;
            }
          }
          lp.rows.push_back(std::move(row));
          lp.rhs.push_back(0.0);
        }
      }
    }
  };
  add_causal(P, lx, Q, ly, true);
  add_causal(Q, ly, P, lx, false);

  const auto sol = detail::solve_lp(lp);
  std::vector<CouplingTree::PathMass> masses;
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j)
      if (sol.x[i * ny + j] > 1e-14) masses.push_back({lx[i], ly[j], sol.x[i * ny + j]});
  auto coupling = CouplingTree::from_path_masses(P, Q, masses);
  AWResult result{0.0, sol.objective, coupling.stage_costs(params.p()), std::move(coupling)};
  result.distance = std::pow(std::max(0.0, result.pth_power), 1.0 / params.p());
  return result;
}

/// Result of the finite-support bicausalization: a perturbed second marginal
/// and a bicausal coupling between the first marginal and it.
struct Bicausalized {
  CouplingTree coupling;
  ScenarioTree second;
  double max_displacement = 0.0;
};

/// Given a causal (X -> Y) coupling, moves every Y-value by less than delta
/// so that the new second coordinate also reveals the X-history: children of
/// a pair node that share a Y-value but differ in the X-node are separated by
/// offsets rank * delta / (2 * max_atoms). The new second marginal has one
/// node per pair node, hence X_{1:t} is a function of Y_{1:t}, which together
/// with causality of the input makes the output bicausal.
inline Bicausalized bicausalize(const CouplingTree& c, double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw Error(ErrorCode::invalid_params, "delta must be positive");
  if (!check_causal(c, Direction::x_to_y)) throw Error(ErrorCode::not_causal, "coupling is not causal from X to Y");
  const auto& nodes = c.nodes();
  const ScenarioTree& Q = c.second();

  std::vector<std::size_t> rank(nodes.size(), 0);
  std::size_t max_atoms = 1;
  for (const auto& pn : nodes) {
    std::map<NodeId, std::vector<std::size_t>> by_y;
    for (std::size_t k : pn.children) by_y[nodes[k].y].push_back(k);
    for (auto& [y, group] : by_y) {
      std::sort(group.begin(), group.end(), [&](std::size_t a, std::size_t b) { return nodes[a].x < nodes[b].x; });
      for (std::size_t r = 0; r < group.size(); ++r) rank[group[r]] = r;
      max_atoms = std::max(max_atoms, group.size());
    }
  }
  const double step = delta / (2.0 * static_cast<double>(max_atoms));

  std::vector<NodeSpec> specs(nodes.size());
  double max_disp = 0.0;
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    const double y = Q.node(nodes[k].y).value;
    const double v = y + static_cast<double>(rank[k]) * step;
    if (rank[k] > 0 && v == y) throw Error(ErrorCode::delta_too_small, "offset vanishes in floating point");
    specs[k] = {*nodes[k].parent, v, nodes[k].cond_prob, nodes[k].time};
    max_disp = std::max(max_disp, std::abs(v - y));
  }
  for (const auto& pn : nodes) {
    std::vector<double> vals;
    double total = 0.0;
    for (std::size_t k : pn.children) vals.push_back(specs[k].value), total += specs[k].cond_prob;
    std::sort(vals.begin(), vals.end());
    for (std::size_t i = 1; i < vals.size(); ++i)
      if (!(vals[i] > vals[i - 1])) throw Error(ErrorCode::delta_too_small, "encoded values collide");
    for (std::size_t k : pn.children) specs[k].cond_prob /= total;
  }
  auto built = ScenarioTree::build_with_map(c.horizon(), specs);
  std::vector<PairNode> pairs;
  pairs.reserve(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k)
    pairs.push_back({nodes[k].x, built.id_of_spec[k], nodes[k].time, specs[k].cond_prob, nodes[k].parent, {}});
  pairs[0].cond_prob = 1.0;
  CouplingTree out(c.first(), built.tree, std::move(pairs));
  return Bicausalized{std::move(out), std::move(built.tree), max_disp};
}

}  // namespace awsens
