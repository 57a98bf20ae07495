#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "awsens/error.hpp"

namespace awsens::detail {

// minimize c^T x  subject to  A x = b, x >= 0.
struct StandardFormLp {
  std::size_t num_vars = 0;
  std::vector<double> objective;
  std::vector<std::vector<double>> rows;
  std::vector<double> rhs;
};

struct LpSolution {
  double objective = 0.0;
  std::vector<double> x;
};

// Two-phase dense tableau simplex with Bland's rule. Only meant for the small
// oracle programs of the test harness; no attempt at numerical refinement.
inline LpSolution solve_lp(const StandardFormLp& lp) {
  const std::size_t n = lp.num_vars;
  std::size_t m = lp.rows.size();
  if (lp.objective.size() != n || lp.rhs.size() != m)
    throw Error(ErrorCode::dimension_mismatch, "LP dimensions inconsistent");
  if (static_cast<double>(m) * static_cast<double>(n + m + 1) > 6e7)
    throw Error(ErrorCode::too_large, "LP tableau too large");

  const std::size_t width = n + m + 1;  // structural, artificial, rhs
  std::vector<std::vector<double>> tab(m, std::vector<double>(width, 0.0));
  std::vector<std::size_t> basis(m);
  for (std::size_t r = 0; r < m; ++r) {
    if (lp.rows[r].size() != n) throw Error(ErrorCode::dimension_mismatch, "LP row has wrong length");
    const double s = lp.rhs[r] < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) tab[r][j] = s * lp.rows[r][j];
    tab[r][n + r] = 1.0;
    tab[r][width - 1] = s * lp.rhs[r];
    basis[r] = n + r;
  }

  const double piv_tol = 1e-11;
  auto pivot = [&](std::size_t pr, std::size_t pc) {
    const double pv = tab[pr][pc];
    for (auto& x : tab[pr]) x /= pv;
    for (std::size_t r = 0; r < tab.size(); ++r) {
      if (r == pr) continue;
      const double f = tab[r][pc];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < width; ++j) tab[r][j] -= f * tab[pr][j];
    }
    basis[pr] = pc;
  };

  // Runs the simplex on cost vector `cost` over columns [0, allowed).
  auto run = [&](const std::vector<double>& cost, std::size_t allowed) {
    const std::size_t max_iter = 200000;
    for (std::size_t iter = 0;; ++iter) {
      if (iter > max_iter) throw Error(ErrorCode::max_iterations, "LP simplex did not terminate");
      std::size_t enter = allowed;
      for (std::size_t j = 0; j < allowed; ++j) {
        double rc = cost[j];
        for (std::size_t r = 0; r < tab.size(); ++r) rc -= cost[basis[r]] * tab[r][j];
        if (rc < -1e-10) {
          enter = j;
          break;
        }
      }
      if (enter == allowed) return;
      std::size_t leave = tab.size();
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < tab.size(); ++r) {
        if (tab[r][enter] <= piv_tol) continue;
        const double ratio = tab[r][width - 1] / tab[r][enter];
        if (ratio < best - 1e-14 || (std::abs(ratio - best) <= 1e-14 && leave < tab.size() && basis[r] < basis[leave])) {
          best = ratio;
          leave = r;
        }
      }
      if (leave == tab.size()) throw Error(ErrorCode::infeasible, "LP is unbounded");
      pivot(leave, enter);
    }
  };

  std::vector<double> phase1(width - 1, 0.0);
  for (std::size_t r = 0; r < m; ++r) phase1[n + r] = 1.0;
  run(phase1, n + m);
  double infeas = 0.0;
  for (std::size_t r = 0; r < m; ++r)
    if (basis[r] >= n) infeas += tab[r][width - 1];
  if (infeas > 1e-9) throw Error(ErrorCode::infeasible, "LP constraints are infeasible");

  // Drive remaining artificials out of the basis; rows where that is not
  // possible are redundant and dropped.
  for (std::size_t r = 0; r < tab.size();) {
    if (basis[r] < n) {
      ++r;
      continue;
    }
    std::size_t col = n;
    for (std::size_t j = 0; j < n; ++j)
      if (std::abs(tab[r][j]) > 1e-9) {
        col = j;
        break;
      }
    if (col < n) {
      pivot(r, col);
      ++r;
    } else {
      tab.erase(tab.begin() + static_cast<std::ptrdiff_t>(r));
      basis.erase(basis.begin() + static_cast<std::ptrdiff_t>(r));
    }
  }

  std::vector<double> phase2(width - 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) phase2[j] = lp.objective[j];
  run(phase2, n);

  LpSolution sol;
  sol.x.assign(n, 0.0);
  for (std::size_t r = 0; r < tab.size(); ++r)
    if (basis[r] < n) sol.x[basis[r]] = std::max(0.0, tab[r][width - 1]);
  for (std::size_t j = 0; j < n; ++j) sol.objective += lp.objective[j] * sol.x[j];
  return sol;
}

}  // namespace awsens::detail
