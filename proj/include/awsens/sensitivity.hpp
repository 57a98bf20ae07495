#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "awsens/adapted_wasserstein.hpp"
#include "awsens/cost_models.hpp"
#include "awsens/error.hpp"
#include "awsens/multistage_opt.hpp"
#include "awsens/optimal_stopping.hpp"
#include "awsens/process_tree.hpp"

namespace awsens {

/// Which value functional of the model is perturbed:
///   expectation  E_P[f(X)]
///   control      v(P) = inf_a E_P[f(X, a)]
///   stopping     s(P) = inf_tau E_P[f(X, tau)]
enum class ProblemClass { expectation, control, stopping };

inline const char* to_string(ProblemClass c) {
  switch (c) {
    case ProblemClass::expectation: return "expectation";
    case ProblemClass::control: return "control";
    case ProblemClass::stopping: return "stopping";
  }
  return "unknown";
}

/// Value of the problem class on one tree. Stopping problems are evaluated
/// without the uniqueness check (perturbed trees may well have ties).
inline double evaluate_class(ProblemClass cls, const ScenarioTree& tree, const CostModel& model,
                             const ControlBounds& bounds = ControlBounds{}, double tol = 1e-9) {
  switch (cls) {
    case ProblemClass::expectation: {
      if (model.kind() != ModelKind::terminal) throw Error(ErrorCode::invalid_params, "expectation class needs a terminal model");
      if (model.horizon() != tree.horizon()) throw Error(ErrorCode::horizon_mismatch, "model and tree horizons differ");
      double v = 0.0;
      for (NodeId leaf : tree.leaves()) v += tree.probability(leaf) * model.eval(tree.path_values(leaf));
      return v;
    }
    case ProblemClass::control: {
      SolverOptions opt;
      opt.tol = tol;
      return solve_value(tree, model, bounds, opt).value;
    }
    case ProblemClass::stopping:
      return snell_envelope(tree, model).value;
  }
  return 0.0;
}

struct SensitivityReport {
  ProblemClass problem_class = ProblemClass::expectation;
  double p = 2.0;
  double q = 2.0;
  NodeValues F;               // F_t on the time-t nodes, 0 at the root
  std::vector<double> stage_qnorms;  // E_P |F_t|^q, t = 1..T
  double first_order = 0.0;   // (sum_t E_P |F_t|^q)^(1/q)
  double base_value = 0.0;    // value of the unperturbed problem
  std::optional<ControlPolicy> policy;
  std::optional<StoppingPolicy> stopping;
};

namespace detail {

// F_t = E[h_t | F_t] for per-leaf integrands h (leaf order, length T each).
inline SensitivityReport aggregate(const ScenarioTree& tree, const std::vector<Vector>& per_leaf, const AWParams& prm,
                                   ProblemClass cls) {
  const int T = tree.horizon();
  SensitivityReport rep;
  rep.problem_class = cls;
  rep.p = prm.p();
  rep.q = prm.q();
  rep.F.assign(tree.size(), 0.0);
  rep.stage_qnorms.assign(static_cast<std::size_t>(T), 0.0);
  const auto& leaves = tree.leaves();
  for (int t = 1; t <= T; ++t) {
    NodeValues h(tree.size(), 0.0);
    for (std::size_t k = 0; k < leaves.size(); ++k) h[leaves[k]] = per_leaf[k][static_cast<std::size_t>(t - 1)];
    const auto ce = conditional_expectation(tree, h, T, t);
    for (NodeId n : tree.nodes_at(t)) rep.F[n] = ce[n];
    rep.stage_qnorms[static_cast<std::size_t>(t - 1)] = level_moment(tree, rep.F, t, rep.q);
  }
  double s = 0.0;
  for (double v : rep.stage_qnorms) s += v;
  rep.first_order = std::pow(s, 1.0 / rep.q);
  return rep;
}

}  // namespace detail

/// First-order term for E_P[f(X)]: F_t = E_P[d_{x_t} f(X) | F_t].
inline SensitivityReport sensitivity_terminal(const ScenarioTree& tree, const CostModel& model, const AWParams& prm) {
  if (model.kind() != ModelKind::terminal) throw Error(ErrorCode::invalid_params, "model is not a terminal model");
  if (model.horizon() != tree.horizon()) throw Error(ErrorCode::horizon_mismatch, "model and tree horizons differ");
  std::vector<Vector> g;
  double base = 0.0;
  for (NodeId leaf : tree.leaves()) {
    const auto x = tree.path_values(leaf);
    g.push_back(model.grad_x(x));
    base += tree.probability(leaf) * model.eval(x);
  }
  auto rep = detail::aggregate(tree, g, prm, ProblemClass::expectation);
  rep.base_value = base;
  return rep;
}

struct ControlSensitivityOptions {
  SolverOptions solver;
  bool verify_uniqueness = false;
  std::size_t restarts = 16;
};

/// First-order term for v(P): the x-gradient is taken along every path at
/// the optimal policy.
inline SensitivityReport sensitivity_control(const ScenarioTree& tree, const CostModel& model, const ControlBounds& bounds,
                                             const AWParams& prm, const ControlSensitivityOptions& opt = {}) {
  const auto vr = solve_value(tree, model, bounds, opt.solver);
  if (opt.verify_uniqueness) {
    const auto w = uniqueness_witness(tree, model, bounds, opt.restarts);
    if (!w.agreed()) throw Error(ErrorCode::not_convex, "optimal policy is not unique");
  }
  std::vector<Vector> g;
  for (NodeId leaf : tree.leaves()) g.push_back(model.grad_x(tree.path_values(leaf), vr.policy.along(tree, leaf)));
  auto rep = detail::aggregate(tree, g, prm, ProblemClass::control);
  rep.base_value = vr.value;
  rep.policy = vr.policy;
  return rep;
}

/// Closed form for the utility problem, with a*_{T+1} = 0 and
/// Z = g(X) + sum_t a*_t (X_t - X_{t-1}):
///   F_t = (a*_{t+1} - a*_t) E[loss'(Z) | F_t] - E[loss'(Z) d_{x_t} g(X) | F_t].
/// This is minus the F of sensitivity_control; the norms coincide.
inline SensitivityReport corollary_V(const ScenarioTree& tree, const UtilityModel& u, const ControlBounds& bounds,
                                     const AWParams& prm, const SolverOptions& solver = {}) {
  const int T = tree.horizon();
  for (const auto& node : tree.nodes()) {
    if (node.time == 0) continue;
    const double prev = node.time == 1 ? u.x0 : tree.node(*node.parent).value;
    if (node.value == prev)
      throw Error(ErrorCode::flat_step, "price does not move at node " + std::to_string(node.id) + " (time " +
                                            std::to_string(node.time) + ")");
  }
  const auto model = build_utility_cost(u, T);
  const auto vr = solve_value(tree, model, bounds, solver);
  const auto& a = vr.policy.values;

  const auto& leaves = tree.leaves();
  SensitivityReport rep;
  rep.problem_class = ProblemClass::control;
  rep.p = prm.p();
  rep.q = prm.q();
  rep.F.assign(tree.size(), 0.0);
  rep.stage_qnorms.assign(static_cast<std::size_t>(T), 0.0);
  std::vector<double> lp(leaves.size());
  std::vector<Vector> dg(leaves.size());
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const auto x = tree.path_values(leaves[k]);
    const auto ak = vr.policy.along(tree, leaves[k]);
    double z = u.payoff.value(x);
    double prev = u.x0;
    for (std::size_t t = 0; t < x.size(); ++t) {
      z += ak[t] * (x[t] - prev);
      prev = x[t];
    }
    lp[k] = u.loss.first(z);
    dg[k] = u.payoff.grad(x);
  }
  for (int t = 1; t <= T; ++t) {
    NodeValues h1(tree.size(), 0.0), h2(tree.size(), 0.0);
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      h1[leaves[k]] = lp[k];
      h2[leaves[k]] = lp[k] * dg[k][static_cast<std::size_t>(t - 1)];
    }
    const auto e1 = conditional_expectation(tree, h1, T, t);
    const auto e2 = conditional_expectation(tree, h2, T, t);
    for (NodeId n : tree.nodes_at(t)) {
      const double next = t < T ? a[n] : 0.0;  // a*_{t+1} sits on the time-t node
      const double cur = a[*tree.node(n).parent];
      rep.F[n] = (next - cur) * e1[n] - e2[n];
    }
    rep.stage_qnorms[static_cast<std::size_t>(t - 1)] = level_moment(tree, rep.F, t, rep.q);
  }
  double s = 0.0;
  for (double v : rep.stage_qnorms) s += v;
  rep.first_order = std::pow(s, 1.0 / rep.q);
  rep.base_value = vr.value;
  rep.policy = vr.policy;
  return rep;
}

/// First-order term for s(P): F_t = E_P[d_{x_t} f(X, tau*) | F_t] with the
/// unique optimal stopping time tau*.
inline SensitivityReport sensitivity_stopping(const ScenarioTree& tree, const CostModel& model, const AWParams& prm,
                                              double tol = 1e-9) {
  const auto sol = solve_stopping(tree, model, tol);
  std::vector<Vector> g;
  for (NodeId leaf : tree.leaves()) g.push_back(model.grad_x(tree.path_values(leaf), sol.policy.tau_of(tree, leaf)));
  auto rep = detail::aggregate(tree, g, prm, ProblemClass::stopping);
  rep.base_value = sol.value;
  rep.stopping = sol.policy;
  return rep;
}

struct WorstCaseDirection {
  NodeValues Z;                       // Z_t on the time-t nodes, 0 at the root
  std::vector<double> stage_weights;  // a_t
  double norm_check = 0.0;            // sum_t E|Z_t|^p
  double pairing = 0.0;               // sum_t E[F_t Z_t]
  bool degenerate = false;            // first_order == 0, Z == 0
};

/// Adapted direction attaining equality in Hoelder's inequality twice
/// (over stages and over the law):
///   u_t = (E|F_t|^q)^(1/q),  a_t = u_t^(q/p) / (sum_s u_s^q)^(1/p),
///   Z_t = a_t sign(F_t) |F_t|^(q-1) / u_t^(q-1)   (0 where u_t = 0),
/// so that sum_t E[F_t Z_t] = first_order and sum_t E|Z_t|^p = 1.
inline WorstCaseDirection worst_case_direction(const ScenarioTree& tree, const SensitivityReport& rep) {
  const int T = tree.horizon();
  const double p = rep.p, q = rep.q;
  if (rep.F.size() != tree.size() || static_cast<int>(rep.stage_qnorms.size()) != T)
    throw Error(ErrorCode::dimension_mismatch, "report does not belong to this tree");
  WorstCaseDirection w;
  w.Z.assign(tree.size(), 0.0);
  w.stage_weights.assign(static_cast<std::size_t>(T), 0.0);
  double total = 0.0;
  for (double v : rep.stage_qnorms) total += v;
  if (!(total > 0.0)) {
    w.degenerate = true;
    return w;
  }
  for (int t = 1; t <= T; ++t) {
    const double mq = rep.stage_qnorms[static_cast<std::size_t>(t - 1)];
    if (!(mq > 0.0)) continue;
    const double u = std::pow(mq, 1.0 / q);
    const double at = std::pow(u, q / p) / std::pow(total, 1.0 / p);
    w.stage_weights[static_cast<std::size_t>(t - 1)] = at;
    for (NodeId n : tree.nodes_at(t)) {
      const double f = rep.F[n];
      const double sgn = f > 0.0 ? 1.0 : (f < 0.0 ? -1.0 : 0.0);
      w.Z[n] = at * sgn * std::pow(std::abs(f), q - 1.0) / std::pow(u, q - 1.0);
    }
  }
  for (const auto& node : tree.nodes()) {
    if (node.time == 0) continue;
    const double pr = tree.probability(node.id);
    w.norm_check += pr * std::pow(std::abs(w.Z[node.id]), p);
    w.pairing += pr * rep.F[node.id] * w.Z[node.id];
  }
  return w;
}

struct PerturbedModel {
  ScenarioTree tree;
  CouplingTree coupling;  // between the input tree and `tree`
  bool bicausalized = false;
};

/// Law of X + r Z as a tree, coupled with the input by the shift map. When
/// the shift merges siblings the map is not invertible and the coupling
/// fails causality from Y to X; it is then repaired by bicausalize with the
/// given delta (default r / 100; 0 keeps the raw shift).
inline PerturbedModel perturbed_model(const ScenarioTree& tree, const NodeValues& Z, double r,
                                      std::optional<double> delta = std::nullopt) {
  if (!(r >= 0.0) || !std::isfinite(r)) throw Error(ErrorCode::invalid_params, "radius must be nonnegative");
  const double d = delta.value_or(r / 100.0);
  if (!(d >= 0.0)) throw Error(ErrorCode::invalid_params, "delta must be nonnegative");
  if (Z.size() != tree.size()) throw Error(ErrorCode::dimension_mismatch, "direction has wrong size");
  NodeValues shift(tree.size(), 0.0);
  for (const auto& node : tree.nodes())
    if (node.time > 0) shift[node.id] = r * Z[node.id];
  auto disp = displace(tree, shift);
  auto coupling = CouplingTree::monge(tree, disp.tree, disp.node_map);
  if (d > 0.0 && (disp.merged || !check_causal(coupling, Direction::y_to_x))) {
    auto bc = bicausalize(coupling, d);
    return PerturbedModel{std::move(bc.second), std::move(bc.coupling), true};
  }
  return PerturbedModel{std::move(disp.tree), std::move(coupling), false};
}

}  // namespace awsens
