#include <gtest/gtest.h>

#include <cmath>

#include "awsens/adapted_wasserstein.hpp"

using namespace awsens;

namespace {

// X_1 = 0, X_2 = +-1.
ScenarioTree split_tree() { return ScenarioTree::build(2, {{}, {0, 0.0, 1.0}, {1, 1.0, 0.5}, {1, -1.0, 0.5}}); }

// Y_1 = +-0.1, Y_2 = sign(Y_1).
ScenarioTree early_fork() {
  return ScenarioTree::build(2, {{}, {0, 0.1, 0.5}, {0, -0.1, 0.5}, {1, 1.0, 1.0}, {2, -1.0, 1.0}});
}

// X_1 = +-1, X_2 = X_1 +- 1.
ScenarioTree two_step() {
  return ScenarioTree::build(2, {{}, {0, 1.0, 0.5}, {0, -1.0, 0.5}, {1, 2.0, 0.5}, {1, 0.0, 0.5}, {2, 0.0, 0.5},
                                 {2, -2.0, 0.5}});
}

NodeId child_with_value(const ScenarioTree& t, NodeId n, double v) {
  for (NodeId c : t.node(n).children)
    if (t.node(c).value == v) return c;
  throw std::runtime_error("no such child");
}

struct ThreadCapGuard {
  ~ThreadCapGuard() { set_thread_cap(1); }
};

}  // namespace

TEST(AWParams, ConjugateExponent) {
  for (double p : {1.1, 1.5, 2.0, 3.0, 7.0}) {
    const AWParams prm(p);
    EXPECT_NEAR(1.0 / prm.p() + 1.0 / prm.q(), 1.0, 1e-14);
  }
  EXPECT_THROW(AWParams(1.0), Error);
  EXPECT_THROW(AWParams(0.5), Error);
}

TEST(AwDistance, EarlyInformationGap) {
  const AWParams prm(2.0);
  const auto r = aw_distance(split_tree(), early_fork(), prm);
  EXPECT_NEAR(r.pth_power, 2.01, 1e-12);
  EXPECT_NEAR(r.distance, std::sqrt(2.01), 1e-9);
  EXPECT_NEAR(r.distance, 1.41774468787578, 1e-12);
  ASSERT_EQ(r.per_stage_costs.size(), 2u);
  EXPECT_NEAR(r.per_stage_costs[0], 0.01, 1e-14);
  EXPECT_NEAR(r.per_stage_costs[1], 2.0, 1e-14);
  EXPECT_NEAR(flat_wasserstein(split_tree(), early_fork(), prm).distance, 0.1, 1e-12);
  EXPECT_NEAR(brute_force_bicausal(split_tree(), early_fork(), prm).pth_power, 2.01, 1e-9);
  EXPECT_TRUE(is_bicausal(r.coupling));
  EXPECT_TRUE(has_valid_marginals(r.coupling));
}

TEST(AwDistance, IdenticalTreesGiveIdentityCoupling) {
  const auto t = gen_random(3, 2, 4);
  const auto r = aw_distance(t, t, AWParams(2.0));
  EXPECT_EQ(r.distance, 0.0);
  for (const auto& lp : r.coupling.leaf_pairs()) EXPECT_EQ(lp.x, lp.y);
  EXPECT_TRUE(is_bicausal(r.coupling));
}

TEST(AwDistance, HorizonMismatch) {
  try {
    aw_distance(gen_random(2, 2, 1), gen_random(3, 2, 1), AWParams(2.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::horizon_mismatch);
  }
}

TEST(AwDistance, SinglePeriodEqualsFlat) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto a = gen_random(1, 2 + s % 5, s), b = gen_random(1, 2 + (s + 2) % 5, 100 + s);
    for (double p : {1.5, 2.0, 3.0}) {
      const AWParams prm(p);
      EXPECT_NEAR(aw_distance(a, b, prm).pth_power, flat_wasserstein(a, b, prm).pth_power, 1e-10);
    }
  }
}

TEST(AwDistance, MatchesBicausalLp) {
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto a = gen_random(2, 2, 300 + s), b = gen_random(2, 3, 400 + s);
    const AWParams prm(s % 2 ? 2.0 : 1.5);
    const auto r = aw_distance(a, b, prm);
    const auto o = brute_force_bicausal(a, b, prm);
    EXPECT_NEAR(r.pth_power, o.pth_power, 1e-7);
    EXPECT_TRUE(is_bicausal(o.coupling));
  }
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto a = gen_random(3, 2, 500 + s), b = gen_random(3, 2, 600 + s);
    EXPECT_NEAR(aw_distance(a, b, AWParams(2.0)).pth_power, brute_force_bicausal(a, b, AWParams(2.0)).pth_power, 1e-7);
  }
}

TEST(AwDistance, OracleSizeLimit) {
  try {
    brute_force_bicausal(gen_random(4, 2, 1), gen_random(4, 2, 2), AWParams(2.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::too_large);
  }
}

TEST(AwDistance, ResultInvariants) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto a = gen_random(3, 2, s), b = gen_random(3, 3, 50 + s);
    const AWParams prm(3.0);
    const auto r = aw_distance(a, b, prm);
    double sum = 0.0;
    for (double c : r.per_stage_costs) sum += c;
    EXPECT_NEAR(sum, r.pth_power, 1e-9);
    EXPECT_NEAR(r.distance, std::pow(r.pth_power, 1.0 / 3.0), 1e-14);
    EXPECT_TRUE(has_valid_marginals(r.coupling));
    EXPECT_TRUE(is_bicausal(r.coupling));
  }
}

TEST(AwDistance, MetricAxioms) {
  const AWParams prm(2.0);
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto a = gen_random(2, 2, 3 * s), b = gen_random(2, 2, 3 * s + 1), c = gen_random(2, 3, 3 * s + 2);
    const double ab = aw_distance(a, b, prm).distance, ba = aw_distance(b, a, prm).distance;
    const double bc = aw_distance(b, c, prm).distance, ac = aw_distance(a, c, prm).distance;
    EXPECT_NEAR(ab, ba, 1e-9);
    EXPECT_LE(ac, ab + bc + 1e-8);
    EXPECT_GT(ab, 0.0);
  }
}

TEST(AwDistance, DominatesFlatWasserstein) {
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto a = gen_random(3, 2, 700 + s), b = gen_random(3, 2, 800 + s);
    const AWParams prm(2.0);
    EXPECT_GE(aw_distance(a, b, prm).pth_power, flat_wasserstein(a, b, prm).pth_power - 1e-10);
  }
}

TEST(AwDistance, TruncationNeverIncreases) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto a = gen_random(3, 2, 900 + s), b = gen_random(3, 3, 950 + s);
    const AWParams prm(2.0);
    EXPECT_LE(aw_distance(truncate(a, 2), truncate(b, 2), prm).pth_power, aw_distance(a, b, prm).pth_power + 1e-12);
  }
}

TEST(AwDistance, ThreadCountDoesNotChangeResult) {
  ThreadCapGuard guard;
  const auto a = gen_random(3, 4, 1), b = gen_random(3, 4, 2);
  const AWParams prm(2.0);
  set_thread_cap(1);
  const auto one = aw_distance(a, b, prm);
  set_thread_cap(4);
  const auto four = aw_distance(a, b, prm);
  EXPECT_EQ(one.pth_power, four.pth_power);
  EXPECT_EQ(one.coupling.nodes().size(), four.coupling.nodes().size());
}

TEST(CheckCausal, ProductCouplingIsBicausal) {
  const auto c = CouplingTree::product(gen_random(3, 2, 1), gen_random(3, 3, 2));
  EXPECT_TRUE(check_causal(c, Direction::x_to_y));
  EXPECT_TRUE(check_causal(c, Direction::y_to_x));
  EXPECT_TRUE(has_valid_marginals(c));
}

TEST(CheckCausal, AnticipatingCouplingFails) {
  // Y_1's sign is matched with X_2's sign before X_1 reveals anything.
  const auto P = split_tree(), Q = early_fork();
  const NodeId xp = child_with_value(P, 1, 1.0), xm = child_with_value(P, 1, -1.0);
  const NodeId yp = Q.node(child_with_value(Q, 0, 0.1)).children[0];
  const NodeId ym = Q.node(child_with_value(Q, 0, -0.1)).children[0];
  const auto c = CouplingTree::from_path_masses(P, Q, {{xp, yp, 0.5}, {xm, ym, 0.5}});
  EXPECT_TRUE(has_valid_marginals(c));
  EXPECT_FALSE(check_causal(c, Direction::x_to_y));
  EXPECT_TRUE(check_causal(c, Direction::y_to_x));
  EXPECT_NEAR(c.stage_costs(2.0)[0] + c.stage_costs(2.0)[1], 0.01, 1e-14);
}

TEST(Bicausalize, SeparatesMergedAtoms) {
  const auto P = two_step();
  // Y_1 = 0 on both branches, Y_2 = X_2: an adapted map that forgets X_1.
  const auto Q = ScenarioTree::build(2, {{}, {0, 0.0, 1.0}, {1, 2.0, 0.25}, {1, 0.0, 0.5}, {1, -2.0, 0.25}});
  std::vector<NodeId> phi(P.size());
  phi[0] = 0;
  for (NodeId n : P.nodes_at(1)) phi[n] = Q.nodes_at(1)[0];
  for (NodeId n : P.nodes_at(2)) phi[n] = child_with_value(Q, Q.nodes_at(1)[0], P.node(n).value);
  const auto c = CouplingTree::monge(P, Q, phi);
  ASSERT_TRUE(check_causal(c, Direction::x_to_y));
  ASSERT_FALSE(check_causal(c, Direction::y_to_x));

  const double delta = 0.01;
  const auto b = bicausalize(c, delta);
  EXPECT_TRUE(check_causal(b.coupling, Direction::x_to_y));
  EXPECT_TRUE(check_causal(b.coupling, Direction::y_to_x));
  EXPECT_TRUE(has_valid_marginals(b.coupling));
  EXPECT_LE(b.max_displacement, delta);
  EXPECT_EQ(b.second.nodes_at(1).size(), 2u);
  // Per-stage displacement along the coupling stays below delta.
  for (const auto& pn : b.coupling.nodes()) {
    if (pn.time == 0) continue;
    const double y_old = Q.node(phi[P.ancestor_at(P.first_leaf_below(pn.x), pn.time)]).value;
    EXPECT_LE(std::abs(b.second.node(pn.y).value - y_old), delta);
  }
}

TEST(Bicausalize, DistanceToOriginalVanishesWithDelta) {
  const auto P = two_step();
  const auto Q = ScenarioTree::build(2, {{}, {0, 0.0, 1.0}, {1, 2.0, 0.25}, {1, 0.0, 0.5}, {1, -2.0, 0.25}});
  const auto c = aw_distance(P, Q, AWParams(2.0)).coupling;
  for (double delta : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const auto b = bicausalize(c, delta);
    EXPECT_TRUE(is_bicausal(b.coupling));
    EXPECT_LE(aw_distance(Q, b.second, AWParams(2.0)).distance, delta * std::sqrt(2.0) + 1e-12);
  }
}

TEST(Bicausalize, InjectiveMongeCouplingStaysBicausal) {
  const auto P = gen_random(2, 2, 5);
  NodeValues d(P.size(), 0.0);
  for (const auto& n : P.nodes())
    if (n.time > 0) d[n.id] = 0.01 * static_cast<double>(n.id);
  const auto disp = displace(P, d);
  const auto c = CouplingTree::monge(P, disp.tree, disp.node_map);
  ASSERT_TRUE(is_bicausal(c));
  const auto b = bicausalize(c, 1e-3);
  EXPECT_TRUE(is_bicausal(b.coupling));
  EXPECT_LE(aw_distance(disp.tree, b.second, AWParams(2.0)).distance, 1e-3 * std::sqrt(2.0));
}

TEST(Bicausalize, Errors) {
  const auto P = split_tree(), Q = early_fork();
  const NodeId xp = child_with_value(P, 1, 1.0), xm = child_with_value(P, 1, -1.0);
  const NodeId yp = Q.node(child_with_value(Q, 0, 0.1)).children[0];
  const NodeId ym = Q.node(child_with_value(Q, 0, -0.1)).children[0];
  const auto anticipating = CouplingTree::from_path_masses(P, Q, {{xp, yp, 0.5}, {xm, ym, 0.5}});
  try {
    bicausalize(anticipating, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_causal);
  }
  // Offsets below the spacing of doubles near 1e20.
  const auto big = ScenarioTree::build(1, {{}, {0, 1e20, 1.0}});
  const auto c = CouplingTree::product(ScenarioTree::build(1, {{}, {0, 0.0, 0.5}, {0, 1.0, 0.5}}), big);
  try {
    bicausalize(c, 1e-3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::delta_too_small);
  }
  EXPECT_THROW(bicausalize(c, 0.0), Error);
}
