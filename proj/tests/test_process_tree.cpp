#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "awsens/process_tree.hpp"

using namespace awsens;

namespace {

// X_1 = 0, X_2 = +-1 with probability 1/2.
ScenarioTree split_tree() { return ScenarioTree::build(2, {{}, {0, 0.0, 1.0, 1}, {1, 1.0, 0.5, 2}, {1, -1.0, 0.5, 2}}); }

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::invalid_params;
}

}  // namespace

TEST(ScenarioTree, CanonicalBreadthFirstOrder) {
  // Records supplied depth-first and with the root last.
  const auto t = ScenarioTree::build(2, {{3, 1.0, 0.5}, {0, 2.0, 0.5}, {0, 3.0, 0.5}, {std::nullopt, 0, 1},
                                         {3, -1.0, 0.5}, {4, -2.0, 1.0}});
  ASSERT_EQ(t.size(), 6u);
  EXPECT_EQ(t.root(), 0u);
  EXPECT_EQ(t.nodes_at(1).size(), 2u);
  EXPECT_EQ(t.nodes_at(2).size(), 3u);
  for (NodeId n : t.nodes_at(1))
    for (NodeId l : t.leaves()) EXPECT_LT(n, l);
  EXPECT_DOUBLE_EQ(t.node(1).value, 1.0);
  EXPECT_DOUBLE_EQ(t.node(2).value, -1.0);
  EXPECT_NEAR(t.probability(t.leaves()[0]), 0.25, 1e-15);
  EXPECT_NEAR(t.probability(t.leaves()[2]), 0.5, 1e-15);
}

TEST(ScenarioTree, MapFromSpecs) {
  const auto b = ScenarioTree::build_with_map(1, {{1, 5.0, 1.0}, {}});
  EXPECT_EQ(b.id_of_spec[1], 0u);
  EXPECT_EQ(b.id_of_spec[0], 1u);
}

TEST(ScenarioTree, RejectsInvalidInput) {
  EXPECT_EQ(code_of([] { ScenarioTree::build(2, {{}, {0, 0.0, 0.6}, {0, 1.0, 0.3}, {1, 0, 1}, {2, 0, 1}}); }),
            ErrorCode::invalid_tree);
  EXPECT_EQ(code_of([] { ScenarioTree::build(1, {{}, {0, 1.0, 0.5}, {0, 1.0, 0.5}}); }), ErrorCode::invalid_tree);
  EXPECT_EQ(code_of([] { ScenarioTree::build(2, {{}, {0, 1.0, 0.5}, {0, 2.0, 0.5}, {1, 0.0, 1.0}}); }),
            ErrorCode::invalid_tree);
  EXPECT_EQ(code_of([] { ScenarioTree::build(1, {{}, {0, 1.0, 0.0}, {0, 2.0, 1.0}}); }), ErrorCode::invalid_tree);
  EXPECT_EQ(code_of([] { ScenarioTree::build(1, {{}, {}}); }), ErrorCode::invalid_tree);
  EXPECT_EQ(code_of([] { ScenarioTree::build(1, {{}, {0, 1.0, 1.0, 2}}); }), ErrorCode::invalid_tree);
  EXPECT_EQ(code_of([] { ScenarioTree::build(1, {{}, {0, 1.0, 1.0}, {2, 1.0, 1.0}, {1, 2.0, 1.0}}); }),
            ErrorCode::invalid_tree);
}

TEST(ScenarioTree, ErrorCarriesOffendingRecord) {
  try {
    ScenarioTree::build(1, {{}, {0, 1.0, 0.5}, {0, 2.0, 0.25}});
    FAIL();
  } catch (const Error& e) {
    ASSERT_TRUE(e.node().has_value());
    EXPECT_EQ(*e.node(), 0u);
  }
}

TEST(ScenarioTree, PathsAndAncestors) {
  const auto t = gen_binomial(3, 0.0, 1.0, -1.0, 0.3);
  const auto paths = enumerate_paths(t);
  ASSERT_EQ(paths.paths.size(), 8u);
  double total = 0.0;
  for (const auto& e : paths.paths) {
    total += e.probability;
    EXPECT_EQ(e.values.size(), 3u);
    EXPECT_DOUBLE_EQ(e.values[2], t.node(e.leaf).value);
    EXPECT_DOUBLE_EQ(e.values[0], t.node(t.ancestor_at(e.leaf, 1)).value);
  }
  EXPECT_NEAR(total, 1.0, 1e-14);
  for (NodeId n = 0; n < t.size(); ++n) EXPECT_EQ(t.ancestor_at(t.first_leaf_below(n), t.node(n).time), n);
}

TEST(ScenarioTree, TowerPropertyIsExact) {
  const auto t = gen_random(3, 3, 42);
  NodeValues h(t.size(), 0.0);
  for (NodeId l : t.leaves()) h[l] = std::sin(t.node(l).value) + t.path_values(l)[0];
  const auto direct = conditional_expectation(t, h, 1);
  const auto step = conditional_expectation(t, conditional_expectation(t, h, 2), 2, 1);
  for (NodeId n : t.nodes_at(1)) EXPECT_EQ(direct[n], step[n]);
  const auto root = conditional_expectation(t, h, 0);
  double e = 0.0;
  for (NodeId l : t.leaves()) e += t.probability(l) * h[l];
  EXPECT_NEAR(root[0], e, 1e-14);
}

TEST(ScenarioTree, TruncateAndIsomorphic) {
  const auto t = gen_binomial(3, 0.0, 1.0, -1.0, 0.3);
  const auto u = truncate(t, 2);
  EXPECT_TRUE(isomorphic(u, gen_binomial(2, 0.0, 1.0, -1.0, 0.3)));
  EXPECT_FALSE(isomorphic(u, gen_binomial(2, 0.0, 1.0, -1.0, 0.4)));
  // sibling order does not matter
  const auto a = ScenarioTree::build(1, {{}, {0, 1.0, 0.25}, {0, 2.0, 0.75}});
  const auto b = ScenarioTree::build(1, {{}, {0, 2.0, 0.75}, {0, 1.0, 0.25}});
  EXPECT_TRUE(isomorphic(a, b));
}

TEST(ScenarioTree, DisplaceMergesCollidingSiblings) {
  const auto t = split_tree();
  NodeValues d(t.size(), 0.0);
  d[2] = -1.0;  // +1 -> 0
  d[3] = 1.0;   // -1 -> 0
  const auto out = displace(t, d);
  EXPECT_TRUE(out.merged);
  EXPECT_EQ(out.tree.size(), 3u);
  EXPECT_EQ(out.node_map[2], out.node_map[3]);
  EXPECT_NEAR(out.tree.probability(out.tree.leaves()[0]), 1.0, 1e-15);

  NodeValues s(t.size(), 0.0);
  s[1] = 0.5;
  const auto shifted = displace(t, s);
  EXPECT_FALSE(shifted.merged);
  EXPECT_DOUBLE_EQ(shifted.tree.node(shifted.node_map[1]).value, 0.5);
}

TEST(Generators, DriftedBinomial) {
  const auto t = gen_binomial(2, 0.0, 1.0, -1.0, 0.5, -0.1);
  std::vector<double> x1, x2;
  for (NodeId n : t.nodes_at(1)) x1.push_back(t.node(n).value);
  for (NodeId n : t.nodes_at(2)) x2.push_back(t.node(n).value);
  EXPECT_EQ(x1, (std::vector<double>{1.0, -1.0}));
  EXPECT_NEAR(x2[0], 1.9, 1e-15);
  EXPECT_NEAR(x2[1], -0.1, 1e-15);
  EXPECT_NEAR(x2[2], -0.1, 1e-15);
  EXPECT_NEAR(x2[3], -2.1, 1e-15);
}

TEST(Generators, LatticeRejectsBadProbabilities) {
  EXPECT_EQ(code_of([] { gen_lattice(2, 0.0, {-1, 0.5, 1}, {0.2, 0.2, 0.2}); }), ErrorCode::invalid_params);
  const auto t = gen_lattice(2, 1.0, {-1, 0.5, 1}, {0.2, 0.3, 0.5});
  EXPECT_EQ(t.leaves().size(), 9u);
}

TEST(Generators, RandomTreesAreValidAndReproducible) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto t = gen_random(3, 3, seed);
    EXPECT_TRUE(isomorphic(t, gen_random(3, 3, seed)));
    for (const auto& node : t.nodes()) {
      if (!node.parent) continue;
      const double prev = node.time == 1 ? 0.0 : t.node(*node.parent).value;
      EXPECT_GE(std::abs(node.value - prev), 0.05 - 1e-12);
      EXPECT_GE(node.cond_prob, 1.0 / 18.0);
    }
  }
  EXPECT_FALSE(isomorphic(gen_random(2, 2, 1), gen_random(2, 2, 2)));
}

TEST(Moments, PthMomentMatchesPathSum) {
  const auto t = gen_random(2, 3, 9);
  double e = 0.0;
  for (const auto& p : enumerate_paths(t).paths)
    for (double v : p.values) e += p.probability * std::pow(std::abs(v), 3.0);
  EXPECT_NEAR(pth_moment(t, 3.0), e, 1e-12);
}
