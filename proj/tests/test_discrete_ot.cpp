#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "awsens/detail/dense_simplex.hpp"
#include "awsens/detail/random.hpp"
#include "awsens/discrete_ot.hpp"

using namespace awsens;

namespace {

std::vector<double> random_weights(detail::Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  double s = 0.0;
  for (auto& x : w) s += (x = 0.1 + rng.uniform());
  for (auto& x : w) x /= s;
  return w;
}

TransportProblem random_problem(detail::Rng& rng, std::size_t m, std::size_t n) {
  TransportProblem p{random_weights(rng, m), random_weights(rng, n), {}};
  for (std::size_t k = 0; k < m * n; ++k) p.cost.push_back(std::round(rng.uniform(0.0, 5.0) * 8.0) / 8.0);
  return p;
}

// Same problem as a generic LP over the m*n flows.
double lp_oracle(const TransportProblem& p) {
  detail::StandardFormLp lp;
  const std::size_t m = p.rows(), n = p.cols();
  lp.num_vars = m * n;
  lp.objective = p.cost;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> row(m * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) row[i * n + j] = 1.0;
    lp.rows.push_back(row);
    lp.rhs.push_back(p.mu[i]);
  }
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> row(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) row[i * n + j] = 1.0;
    lp.rows.push_back(row);
    lp.rhs.push_back(p.nu[j]);
  }
  return detail::solve_lp(lp).objective;
}

}  // namespace

TEST(SolveExact, TwoByTwoByHand) {
  // Cheapest: diagonal; mass 0.3 must cross.
  const TransportProblem p{{0.5, 0.5}, {0.8, 0.2}, {0.0, 1.0, 2.0, 0.0}};
  const auto plan = solve_exact(p);
  EXPECT_NEAR(plan.objective, 0.6, 1e-15);
  EXPECT_NEAR(plan.mass(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(plan.mass(1, 0), 0.3, 1e-15);
  EXPECT_NEAR(plan.mass(1, 1), 0.2, 1e-15);
}

TEST(SolveExact, DiracMarginals) {
  const TransportProblem p{{1.0}, {0.25, 0.75}, {2.0, 4.0}};
  EXPECT_NEAR(solve_exact(p).objective, 3.5, 1e-15);
}

TEST(SolveExact, RejectsBadWeights) {
  EXPECT_THROW(solve_exact({{0.5, 0.4}, {1.0}, {0.0, 0.0}}), Error);
  try {
    solve_exact({{0.5, 0.4}, {1.0}, {0.0, 0.0}});
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::infeasible);
  }
  EXPECT_THROW(solve_exact({{1.0}, {1.0}, {0.0, 1.0}}), Error);
}

TEST(SolveExact, MarginalsAndComplementarySlackness) {
  detail::Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    const auto p = random_problem(rng, 1 + rng.index(7), 1 + rng.index(7));
    const auto plan = solve_exact(p);
    std::vector<double> rs(p.rows(), 0.0), cs(p.cols(), 0.0);
    double obj = 0.0;
    for (const auto& e : plan.entries) {
      EXPECT_GT(e.mass, 0.0);
      rs[e.row] += e.mass;
      cs[e.col] += e.mass;
      obj += e.mass * p.c(e.row, e.col);
      EXPECT_NEAR(p.c(e.row, e.col) - plan.row_potential[e.row] - plan.col_potential[e.col], 0.0, 1e-8);
    }
    for (std::size_t i = 0; i < p.rows(); ++i) EXPECT_NEAR(rs[i], p.mu[i], 1e-12);
    for (std::size_t j = 0; j < p.cols(); ++j) EXPECT_NEAR(cs[j], p.nu[j], 1e-12);
    EXPECT_NEAR(obj, plan.objective, 1e-12);
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < p.cols(); ++j)
        EXPECT_GE(p.c(i, j) - plan.row_potential[i] - plan.col_potential[j], -1e-8);
  }
}

TEST(SolveExact, AgreesWithGenericLp) {
  detail::Rng rng(17);
  for (int rep = 0; rep < 100; ++rep) {
    const auto p = random_problem(rng, 2 + rng.index(6), 2 + rng.index(6));
    EXPECT_NEAR(solve_exact(p).objective, lp_oracle(p), 1e-9);
  }
}

TEST(SolveExact, DegenerateProblemsTerminate) {
  // Equal marginals and all-equal costs: every basis is degenerate.
  for (std::size_t n = 2; n <= 12; ++n) {
    TransportProblem p{std::vector<double>(n, 1.0 / n), std::vector<double>(n, 1.0 / n),
                       std::vector<double>(n * n, 1.0)};
    for (std::size_t i = 0; i < n; ++i) p.cost[i * n + (n - 1 - i)] = 0.0;
    EXPECT_NEAR(solve_exact(p).objective, 0.0, 1e-14);
  }
}

TEST(SolveExact, InvariantUnderPermutation) {
  detail::Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t m = 2 + rng.index(5), n = 2 + rng.index(5);
    const auto p = random_problem(rng, m, n);
    std::vector<std::size_t> pr(m), pc(n);
    std::iota(pr.begin(), pr.end(), 0);
    std::iota(pc.begin(), pc.end(), 0);
    std::reverse(pr.begin(), pr.end());
    std::rotate(pc.begin(), pc.begin() + 1, pc.end());
    TransportProblem q;
    for (std::size_t i : pr) q.mu.push_back(p.mu[i]);
    for (std::size_t j : pc) q.nu.push_back(p.nu[j]);
    for (std::size_t i : pr)
      for (std::size_t j : pc) q.cost.push_back(p.c(i, j));
    EXPECT_NEAR(solve_exact(p).objective, solve_exact(q).objective, 1e-12);
  }
}

TEST(SolveSorted1d, MatchesExactSolver) {
  detail::Rng rng(11);
  for (double p : {1.5, 2.0, 3.0}) {
    for (int rep = 0; rep < 100; ++rep) {
      const std::size_t m = 1 + rng.index(6), n = 1 + rng.index(6);
      std::vector<double> x(m), y(n);
      for (auto& v : x) v = rng.uniform(-2, 2);
      for (auto& v : y) v = rng.uniform(-2, 2);
      std::sort(x.begin(), x.end());
      std::sort(y.begin(), y.end());
      const auto mu = random_weights(rng, m), nu = random_weights(rng, n);
      TransportProblem prob{mu, nu, {}};
      for (double a : x)
        for (double b : y) prob.cost.push_back(std::pow(std::abs(a - b), p));
      EXPECT_NEAR(solve_sorted_1d(x, mu, y, nu, p).objective, solve_exact(prob).objective, 1e-9);
    }
  }
}

TEST(SolveSorted1d, RequiresSortedPoints) {
  const std::vector<double> w{0.5, 0.5};
  EXPECT_THROW(solve_sorted_1d(std::vector<double>{1.0, 0.0}, w, std::vector<double>{0.0, 1.0}, w, 2.0), Error);
  EXPECT_THROW(solve_sorted_1d(std::vector<double>{0.0, 1.0}, w, std::vector<double>{0.0, 1.0}, w, 1.0), Error);
}

TEST(DenseLp, SmallProgramByHand) {
  // min x + 2y  s.t. x + y = 1, x - y = 0.5
  detail::StandardFormLp lp{2, {1.0, 2.0}, {{1.0, 1.0}, {1.0, -1.0}}, {1.0, 0.5}};
  const auto sol = detail::solve_lp(lp);
  EXPECT_NEAR(sol.objective, 1.25, 1e-12);
  EXPECT_NEAR(sol.x[0], 0.75, 1e-12);
  lp.rhs = {1.0, 2.0};
  EXPECT_THROW(detail::solve_lp(lp), Error);
}
