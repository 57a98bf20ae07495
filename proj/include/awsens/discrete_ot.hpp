#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "awsens/error.hpp"

namespace awsens {

inline constexpr double kWeightTolerance = 1e-10;

/// Transport between two finite weighted point sets; `cost` is row-major
/// |mu| x |nu|.
struct TransportProblem {
  std::vector<double> mu;
  std::vector<double> nu;
  std::vector<double> cost;

  std::size_t rows() const noexcept { return mu.size(); }
  std::size_t cols() const noexcept { return nu.size(); }
  double c(std::size_t i, std::size_t j) const { return cost[i * nu.size() + j]; }
};

struct PlanEntry {
  std::size_t row = 0;
  std::size_t col = 0;
  double mass = 0.0;
};

struct TransportPlan {
  std::vector<PlanEntry> entries;  // positive-mass cells, sorted by (row, col)
  double objective = 0.0;
  // Dual potentials of the final basis (solve_exact only): reduced costs
  // cost(i,j) - u[i] - v[j] are nonnegative and vanish on basic cells.
  std::vector<double> row_potential;
  std::vector<double> col_potential;
  std::size_t pivots = 0;

  double mass(std::size_t i, std::size_t j) const {
    for (const auto& e : entries)
      if (e.row == i && e.col == j) return e.mass;
    return 0.0;
  }
};

namespace detail {

inline void check_weights(std::span<const double> w, const char* name) {
  if (w.empty()) throw Error(ErrorCode::invalid_params, std::string(name) + " has no atoms");
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x))
      throw Error(ErrorCode::invalid_params, std::string(name) + " has a negative or non-finite weight");
    total += x;
  }
  if (std::abs(total - 1.0) > kWeightTolerance)
    throw Error(ErrorCode::infeasible, std::string(name) + " weights do not sum to 1");
}

struct BasicCell {
  std::size_t row;
  std::size_t col;
  double flow;
};

// North-west corner rule. Always produces m + n - 1 cells forming a
// spanning tree of the bipartite row/column graph, including degenerate
// zero-flow cells.
inline std::vector<BasicCell> north_west_corner(std::span<const double> mu, std::span<const double> nu) {
  const std::size_t m = mu.size(), n = nu.size();
  std::vector<double> supply(mu.begin(), mu.end()), demand(nu.begin(), nu.end());
  std::vector<BasicCell> cells;
  cells.reserve(m + n - 1);
  std::size_t i = 0, j = 0;
  while (i < m && j < n) {
    double x = std::min(supply[i], demand[j]);
    if (i == m - 1 && j == n - 1) x = std::max(supply[i], demand[j]);
    cells.push_back({i, j, x});
    supply[i] -= x;
    demand[j] -= x;
    if (i == m - 1) ++j;
    else if (j == n - 1) ++i;
    else if (supply[i] <= demand[j]) ++i;
    else ++j;
  }
  return cells;
}

}  // namespace detail

/// Exact transportation simplex (MODI / stepping stone on the spanning-tree
/// basis). Dantzig pricing; after a run of degenerate pivots it switches to
/// Bland's smallest-index rule until the objective moves again, and ties in
/// the ratio test go to the smallest cell index. Returns an optimal vertex.
inline TransportPlan solve_exact(const TransportProblem& prob) {
  const std::size_t m = prob.rows(), n = prob.cols();
  detail::check_weights(prob.mu, "mu");
  detail::check_weights(prob.nu, "nu");
  if (prob.cost.size() != m * n) throw Error(ErrorCode::dimension_mismatch, "cost matrix has wrong size");
  double cmax = 0.0;
  for (double c : prob.cost) {
    if (!std::isfinite(c)) throw Error(ErrorCode::invalid_params, "cost entries must be finite");
    cmax = std::max(cmax, std::abs(c));
  }
  const double eps = 1e-12 * std::max(1.0, cmax);

  auto basis = detail::north_west_corner(prob.mu, prob.nu);
  std::vector<char> is_basic(m * n, 0);
  for (const auto& b : basis) is_basic[b.row * n + b.col] = 1;

  std::vector<double> u(m), v(n);
  std::vector<std::vector<std::size_t>> row_cells(m), col_cells(n);
  std::vector<char> seen_row(m), seen_col(n);
  // Tree search state: graph nodes 0..m-1 are rows, m..m+n-1 columns.
  std::vector<std::size_t> via(m + n), from(m + n);

  auto rebuild_adjacency = [&] {
    for (auto& r : row_cells) r.clear();
    for (auto& c : col_cells) c.clear();
    for (std::size_t k = 0; k < basis.size(); ++k) {
      row_cells[basis[k].row].push_back(k);
      col_cells[basis[k].col].push_back(k);
    }
  };

  auto compute_potentials = [&] {
    std::fill(seen_row.begin(), seen_row.end(), 0);
    std::fill(seen_col.begin(), seen_col.end(), 0);
    std::vector<std::size_t> stack{0};
    u[0] = 0.0;
    seen_row[0] = 1;
    while (!stack.empty()) {
      const std::size_t g = stack.back();
      stack.pop_back();
      if (g < m) {
        for (std::size_t k : row_cells[g]) {
          const std::size_t j = basis[k].col;
          if (seen_col[j]) continue;
          v[j] = prob.c(g, j) - u[g];
          seen_col[j] = 1;
          stack.push_back(m + j);
        }
      } else {
        const std::size_t j = g - m;
        for (std::size_t k : col_cells[j]) {
          const std::size_t i = basis[k].row;
          if (seen_row[i]) continue;
          u[i] = prob.c(i, j) - v[j];
          seen_row[i] = 1;
          stack.push_back(i);
        }
      }
    }
  };

  TransportPlan plan;
  const std::size_t max_pivots = 50 * (m + n) * (m + n) + 1000;
  std::size_t degenerate_run = 0;
  rebuild_adjacency();
  for (;;) {
    compute_potentials();

    const bool bland = degenerate_run > m + n;
    std::size_t enter = m * n;
    double best = -eps;
    for (std::size_t cell = 0; cell < m * n; ++cell) {
      if (is_basic[cell]) continue;
      const double rc = prob.cost[cell] - u[cell / n] - v[cell % n];
      if (rc < best) {
        best = rc;
        enter = cell;
        if (bland) break;
      }
    }
    if (enter == m * n) break;
    if (plan.pivots++ > max_pivots) throw Error(ErrorCode::max_iterations, "transport simplex did not terminate");

    // Path in the basis tree from row ei to column ej.
    const std::size_t ei = enter / n, ej = enter % n;
    std::fill(seen_row.begin(), seen_row.end(), 0);
    std::fill(seen_col.begin(), seen_col.end(), 0);
    std::vector<std::size_t> stack{ei};
    seen_row[ei] = 1;
    bool found = false;
    while (!stack.empty() && !found) {
      const std::size_t g = stack.back();
      stack.pop_back();
      const auto& cells = g < m ? row_cells[g] : col_cells[g - m];
      for (std::size_t k : cells) {
        const std::size_t other = g < m ? m + basis[k].col : basis[k].row;
        auto& mark = other < m ? seen_row[other] : seen_col[other - m];
        if (mark) continue;
        mark = 1;
        via[other] = k;
        from[other] = g;
        if (other == m + ej) {
          found = true;
          break;
        }
        stack.push_back(other);
      }
    }
    // Walk back from column ej: cells alternate -, +, -, ... ending at row ei.
    std::vector<std::size_t> minus, plus;
    bool sign_minus = true;
    for (std::size_t g = m + ej; g != ei; g = from[g]) {
      (sign_minus ? minus : plus).push_back(via[g]);
      sign_minus = !sign_minus;
    }
    std::size_t leave = minus.front();
    for (std::size_t k : minus) {
      const auto& a = basis[k];
      const auto& b = basis[leave];
      if (a.flow < b.flow || (a.flow == b.flow && a.row * n + a.col < b.row * n + b.col)) leave = k;
    }
    const double theta = basis[leave].flow;
    for (std::size_t k : minus) basis[k].flow -= theta;
    for (std::size_t k : plus) basis[k].flow += theta;
    degenerate_run = theta > 0.0 ? 0 : degenerate_run + 1;

    is_basic[basis[leave].row * n + basis[leave].col] = 0;
    basis[leave] = {ei, ej, theta};
    is_basic[enter] = 1;
    rebuild_adjacency();
  }

  std::sort(basis.begin(), basis.end(), [](const auto& a, const auto& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (const auto& b : basis) {
    const double x = b.flow > 1e-15 ? b.flow : 0.0;
    if (x > 0.0) {
      plan.entries.push_back({b.row, b.col, x});
      plan.objective += x * prob.c(b.row, b.col);
    }
  }
  plan.row_potential = std::move(u);
  plan.col_potential = std::move(v);
  return plan;
}

/// Monotone (quantile) coupling of two sorted weighted point sets on the real
/// line. Optimal for cost |x - y|^p with p > 1.
inline TransportPlan solve_sorted_1d(std::span<const double> mu_points, std::span<const double> mu_weights,
                                     std::span<const double> nu_points, std::span<const double> nu_weights,
                                     double p) {
  if (!(p > 1.0)) throw Error(ErrorCode::invalid_params, "monotone transport requires p > 1");
  if (mu_points.size() != mu_weights.size() || nu_points.size() != nu_weights.size())
    throw Error(ErrorCode::dimension_mismatch, "points and weights differ in length");
  detail::check_weights(mu_weights, "mu");
  detail::check_weights(nu_weights, "nu");
  if (!std::is_sorted(mu_points.begin(), mu_points.end()) || !std::is_sorted(nu_points.begin(), nu_points.end()))
    throw Error(ErrorCode::invalid_params, "points must be sorted ascending");

  TransportPlan plan;
  for (const auto& cell : detail::north_west_corner(mu_weights, nu_weights)) {
    if (cell.flow > 1e-15) {
      plan.entries.push_back({cell.row, cell.col, cell.flow});
      plan.objective += cell.flow * std::pow(std::abs(mu_points[cell.row] - nu_points[cell.col]), p);
    }
  }
  return plan;
}

}  // namespace awsens
