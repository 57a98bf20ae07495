#include <gtest/gtest.h>

#include <cmath>

#include "awsens/multistage_opt.hpp"

using namespace awsens;

namespace {

CostModel hedge_model(int T, double gamma, PathFunction payoff) {
  return build_utility_cost({loss::exponential(gamma), std::move(payoff), 0.0}, T);
}

double expected_terminal(const ScenarioTree& tree, const Vector& h) {
  double v = 0.0;
  for (NodeId leaf : tree.leaves()) {
    const auto x = tree.path_values(leaf);
    for (std::size_t t = 0; t < x.size(); ++t) v += tree.probability(leaf) * h[t] * x[t];
  }
  return v;
}

}  // namespace

TEST(SolveValue, SeparableQuadraticHitsTargets) {
  const auto tree = gen_random(3, 2, 8);
  const Vector h{1.0, -0.5, 0.25};
  const auto model = catalog::separable_quadratic({1.0, 2.0, 3.0}, {0.3, -0.2, 0.1}, h);
  const auto rep = solve_value(tree, model, ControlBounds(10.0));
  EXPECT_NEAR(rep.value, expected_terminal(tree, h), 1e-12);
  for (NodeId n = 0; n < control_count(tree); ++n) {
    const double target = n == 0 ? 0.3 : tree.node(n).time == 1 ? -0.2 : 0.1;
    EXPECT_NEAR(rep.policy.values[n], target, 1e-9);
  }
  EXPECT_LE(rep.kkt_residual, 1e-9);
}

TEST(SolveValue, ActiveBounds) {
  const auto tree = gen_binomial(3, 0.0, 1.0, -1.0, 0.5);
  const auto model = catalog::separable_quadratic({1.0, 1.0, 1.0}, {1.0, 1.0, -1.0}, {0.0, 0.0, 0.0});
  const auto rep = solve_value(tree, model, ControlBounds(0.5));
  EXPECT_NEAR(rep.value, 3 * 0.25, 1e-12);
  for (NodeId n = 0; n < control_count(tree); ++n)
    EXPECT_DOUBLE_EQ(std::abs(rep.policy.values[n]), 0.5);
}

TEST(SolveValue, FullHedgeOfTheFirstStep) {
  // payoff x_1 on a one-period tree: a = -1 removes all risk.
  const auto tree = gen_binomial(1, 0.0, 1.0, -1.0, 0.6);
  const auto model = build_utility_cost({loss::quadratic(1.0), payoff::linear({1.0}), 0.0}, 1);
  const auto rep = solve_value(tree, model, ControlBounds(10.0));
  EXPECT_NEAR(rep.policy.values[0], -1.0, 1e-9);
  EXPECT_NEAR(rep.value, 0.0, 1e-15);
}

TEST(SolveValue, NoTradeOnSymmetricMartingale) {
  const auto tree = gen_binomial(2, 0.0, 1.0, -1.0, 0.5);
  const auto rep = solve_value(tree, hedge_model(2, 0.8, payoff::zero()), ControlBounds(5.0));
  for (double v : rep.policy.values) EXPECT_NEAR(v, 0.0, 1e-9);
  EXPECT_NEAR(rep.value, 1.0 / 0.8, 1e-12);
}

TEST(SolveValue, TrackingHasClosedForm) {
  // a_t = kappa/(kappa+lambda) E[X_t | F_{t-1}]
  const auto tree = gen_random(2, 3, 21);
  const double kappa = 1.0, lambda = 0.5;
  const auto rep = solve_value(tree, catalog::quadratic_tracking(2, kappa, lambda), ControlBounds(10.0));
  for (NodeId n = 0; n < control_count(tree); ++n) {
    double m = 0.0;
    for (NodeId c : tree.node(n).children) m += tree.node(c).cond_prob * tree.node(c).value;
    EXPECT_NEAR(rep.policy.values[n], kappa / (kappa + lambda) * m, 1e-9);
  }
}

TEST(SolveValue, GridSearchBracketsTheOptimum) {
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    const auto tree = gen_random(2, 2, seed);
    const auto model = hedge_model(2, 0.5, payoff::softplus_call(2, 0.0, 3.0));
    const ControlBounds bounds(2.0);
    const auto rep = solve_value(tree, model, bounds);
    const auto grid = brute_force_value(tree, model, bounds, 41);
    // nearest grid point to the solution
    ControlPolicy rounded = rep.policy;
    for (auto& v : rounded.values) v = -bounds.L + grid.spacing * std::round((v + bounds.L) / grid.spacing);
    double g1 = 0.0;
    for (double g : policy_gradient(tree, model, rounded)) g1 += std::abs(g);
    EXPECT_GE(grid.value, rep.value - 1e-12);
    EXPECT_LE(grid.value - rep.value, g1 * grid.spacing / 2 + 1e-12);
  }
}

TEST(SolveValue, GridSearchSizeLimit) {
  const auto tree = gen_random(3, 3, 1);
  try {
    brute_force_value(tree, catalog::quadratic_tracking(3, 1.0, 1.0), ControlBounds(1.0), 11);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::too_large);
  }
}

TEST(SolveValue, KktResidualAndExpectedCostAgree) {
  const auto tree = gen_random(3, 2, 13);
  const auto model = hedge_model(3, 1.0, payoff::softplus_call(3, 0.1, 2.0));
  const ControlBounds bounds(0.3);
  const auto rep = solve_value(tree, model, bounds);
  EXPECT_LE(rep.kkt_residual, 1e-9);
  EXPECT_NEAR(kkt_residual(tree, model, bounds, rep.policy), rep.kkt_residual, 1e-15);
  EXPECT_NEAR(expected_cost(tree, model, rep.policy), rep.value, 1e-15);
  // no feasible coordinate move improves the value
  for (NodeId n = 0; n < control_count(tree); ++n)
    for (double s : {-1e-4, 1e-4}) {
      ControlPolicy q = rep.policy;
      q.values[n] = bounds.clamp(q.values[n] + s);
      EXPECT_GE(expected_cost(tree, model, q), rep.value - 1e-12);
    }
}

TEST(SolveValue, ObjectiveIsConvexAlongSegments) {
  const auto tree = gen_random(2, 3, 2);
  const auto model = hedge_model(2, 0.7, payoff::linear({0.0, 1.0}));
  detail::Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    ControlPolicy a, b, m;
    for (std::size_t n = 0; n < control_count(tree); ++n) {
      a.values.push_back(rng.uniform(-1, 1));
      b.values.push_back(rng.uniform(-1, 1));
      m.values.push_back(0.5 * (a.values.back() + b.values.back()));
    }
    EXPECT_LE(expected_cost(tree, model, m),
              0.5 * (expected_cost(tree, model, a) + expected_cost(tree, model, b)) + 1e-12);
  }
  EXPECT_GE(strong_convexity_probe(tree, model, ControlBounds(1.0)), 0.0);
}

TEST(SolveValue, RestartsAgree) {
  const auto tree = gen_random(3, 2, 17);
  const auto w = uniqueness_witness(tree, hedge_model(3, 0.5, payoff::softplus_call(3, 0.0, 2.0)), ControlBounds(3.0));
  EXPECT_EQ(w.restarts, 16u);
  EXPECT_TRUE(w.agreed()) << w.max_sup_distance;
}

TEST(SolveValue, ContinuousInTheTree) {
  const auto tree = gen_random(2, 3, 23);
  const auto model = hedge_model(2, 0.5, payoff::softplus_call(2, 0.0, 2.0));
  const double base = solve_value(tree, model, ControlBounds(3.0)).value;
  NodeValues d(tree.size(), 0.0);
  detail::Rng rng(1);
  for (auto& v : d) v = rng.uniform(-1e-6, 1e-6);
  d[0] = 0.0;
  const auto moved = displace(tree, d);
  EXPECT_NEAR(solve_value(moved.tree, model, ControlBounds(3.0)).value, base, 1e-5);
}

TEST(SolveValue, WarmStartMatchesColdStart) {
  const auto tree = gen_random(2, 2, 30);
  const auto model = hedge_model(2, 1.0, payoff::softplus_call(2, 0.0, 1.0));
  const auto cold = solve_value(tree, model, ControlBounds(2.0));
  SolverOptions opt;
  opt.initial = std::vector<double>(control_count(tree), 1.5);
  const auto warm = solve_value(tree, model, ControlBounds(2.0), opt);
  EXPECT_NEAR(warm.value, cold.value, 1e-12);
  opt.initial = std::vector<double>(1, 0.0);
  EXPECT_THROW(solve_value(tree, model, ControlBounds(2.0), opt), Error);
}

TEST(SolveValue, RejectsConcaveModels) {
  const auto concave = CostModel::make_controlled(
      "concave", 1,
      {[](const Vector&, const Vector& a) { return -a[0] * a[0]; }, [](const Vector&, const Vector&) { return Vector{0.0}; },
       [](const Vector&, const Vector& a) { return Vector{-2.0 * a[0]}; },
       [](const Vector&, const Vector&) -> Matrix { return Matrix::Constant(1, 1, -2.0); }});
  try {
    solve_value(gen_binomial(1, 0.0, 1.0, -1.0, 0.5), concave, ControlBounds(1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_convex);
    EXPECT_EQ(exit_code(e.code()), 4);
  }
}

TEST(SolveValue, RejectsWrongModels) {
  const auto tree = gen_binomial(2, 0.0, 1.0, -1.0, 0.5);
  EXPECT_THROW(solve_value(tree, catalog::linear({1.0, 1.0}), ControlBounds(1.0)), Error);
  try {
    solve_value(tree, catalog::quadratic_tracking(3, 1.0, 1.0), ControlBounds(1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::horizon_mismatch);
  }
  EXPECT_THROW(ControlBounds(0.0), Error);
}
