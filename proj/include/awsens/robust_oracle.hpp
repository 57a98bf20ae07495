#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "awsens/adapted_wasserstein.hpp"
#include "awsens/cost_models.hpp"
#include "awsens/detail/random.hpp"
#include "awsens/error.hpp"
#include "awsens/multistage_opt.hpp"
#include "awsens/optimal_stopping.hpp"
#include "awsens/process_tree.hpp"
#include "awsens/sensitivity.hpp"

namespace awsens {

struct BallMembership {
  bool inside = false;
  double distance = 0.0;
};

inline constexpr double kBallSlack = 1e-8;

/// Exact membership of Q in the closed adapted Wasserstein ball of radius r
/// around P, with slack 1e-8.
inline BallMembership ball_membership(const ScenarioTree& P, const ScenarioTree& Q, const AWParams& prm, double r) {
  const double d = aw_distance(P, Q, prm).distance;
  return {d <= r + kBallSlack, d};
}

struct AscentConfig {
  std::size_t restarts = 2;     // random restarts besides the seeded one
  std::size_t iterations = 25;  // ascent steps per restart
  std::uint64_t seed = 1;
};

struct RobustQuery {
  ProblemClass problem_class = ProblemClass::expectation;
  ScenarioTree tree;
  CostModel model;
  AWParams params{2.0};
  std::vector<double> radii;
  ControlBounds bounds{};
  AscentConfig ascent{};
  double tol = 1e-9;
};

struct CurveRow {
  double r = 0.0;
  double lower_bound = 0.0;            // best val(Q) - val(P) found so far, nondecreasing in r
  double seeded_value = 0.0;           // val(Q) - val(P) along the worst-case direction
  double r_times_V = 0.0;              // first-order prediction
  double distance_of_maximizer = 0.0;  // exact adapted distance of the best Q
  NodeValues displacement;             // per-node shift of the best Q
  bool converged = true;
  std::string note;
};

struct RobustCurve {
  ProblemClass problem_class = ProblemClass::expectation;
  double first_order = 0.0;
  double base_value = 0.0;
  double slope_estimate = 0.0;
  double slope_stderr = 0.0;
  std::vector<CurveRow> rows;
};

struct SlopeFit {
  double slope = 0.0;   // intercept of lower_bound / r against r
  double stderr_ = 0.0;
};

/// Weighted least squares of y_i = lower_bound_i / r_i on r_i with weights
/// 1 / r_i; the intercept is the extrapolated slope at r = 0.
inline SlopeFit fit_slope(const std::vector<double>& r, const std::vector<double>& lb) {
  const std::size_t n = r.size();
  if (n == 0 || lb.size() != n) throw Error(ErrorCode::invalid_params, "slope fit needs matching nonempty columns");
  if (n == 1) return {lb[0] / r[0], 0.0};
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 / r[i], x = r[i], y = lb[i] / r[i];
    sw += w;
    sx += w * x;
    sy += w * y;
    sxx += w * x * x;
    sxy += w * x * y;
  }
  const double det = sw * sxx - sx * sx;
  const double beta = (sw * sxy - sx * sy) / det;
  const double alpha = (sy - beta * sx) / sw;
  SlopeFit fit{alpha, 0.0};
  if (n > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = lb[i] / r[i] - alpha - beta * r[i];
      rss += e * e / r[i];
    }
    fit.stderr_ = std::sqrt(rss / static_cast<double>(n - 2) * sxx / det);
  }
  return fit;
}

namespace detail {

struct Candidate {
  double value = -std::numeric_limits<double>::infinity();  // val(Q) - val(P)
  std::vector<double> grad;                                  // per node of P
  bool ok = false;
};

// Surrogate size (sum_n P(n) |D_n|^p)^(1/p) of a node displacement; an upper
// bound for the adapted distance of the shifted tree when no siblings merge.
inline double surrogate_norm(const ScenarioTree& P, const NodeValues& d, double p) {
  double s = 0.0;
  for (const auto& node : P.nodes())
    if (node.time > 0) s += P.probability(node.id) * std::pow(std::abs(d[node.id]), p);
  return std::pow(s, 1.0 / p);
}

class ClassEvaluator {
 public:
  explicit ClassEvaluator(const RobustQuery& q) : q_(q) {
    base_ = evaluate_class(q.problem_class, q.tree, q.model, q.bounds, q.tol);
  }
  double base() const { return base_; }

  // Value of the shifted model and its gradient in the shift (envelope
  // theorem: the inner policy is held at its optimum).
  Candidate operator()(const NodeValues& d, bool with_grad) const {
    const ScenarioTree& P = q_.tree;
    Candidate c;
    try {
      const auto disp = displace(P, d);
      const ScenarioTree& Q = disp.tree;
      std::vector<Vector> g;
      const auto& leaves = P.leaves();
      switch (q_.problem_class) {
        case ProblemClass::expectation: {
          c.value = evaluate_class(q_.problem_class, Q, q_.model) - base_;
          if (with_grad)
            for (NodeId leaf : leaves) g.push_back(q_.model.grad_x(Q.path_values(disp.node_map[leaf])));
          break;
        }
        case ProblemClass::control: {
          SolverOptions opt;
          opt.tol = q_.tol;
          opt.check_convexity = false;
          const auto vr = solve_value(Q, q_.model, q_.bounds, opt);
          c.value = vr.value - base_;
          if (with_grad)
            for (NodeId leaf : leaves) {
              const NodeId ql = disp.node_map[leaf];
              g.push_back(q_.model.grad_x(Q.path_values(ql), vr.policy.along(Q, ql)));
            }
          break;
        }
        case ProblemClass::stopping: {
          const auto sol = snell_envelope(Q, q_.model);
          c.value = sol.value - base_;
          if (with_grad)
            for (NodeId leaf : leaves) {
              const NodeId ql = disp.node_map[leaf];
              g.push_back(q_.model.grad_x(Q.path_values(ql), sol.policy.tau_of(Q, ql)));
            }
          break;
        }
      }
      if (with_grad) {
        c.grad.assign(P.size(), 0.0);
        for (std::size_t k = 0; k < leaves.size(); ++k)
          for (int t = 1; t <= P.horizon(); ++t)
            c.grad[P.ancestor_at(leaves[k], t)] += P.probability(leaves[k]) * g[k][static_cast<std::size_t>(t - 1)];
      }
      c.ok = std::isfinite(c.value);
    } catch (const Error&) {
      c.ok = false;
    }
    return c;
  }

 private:
  const RobustQuery& q_;
  double base_ = 0.0;
};

// Shrinks d radially until the shifted tree lies in the exact ball.
// Returns the scale factor applied and the resulting distance.
inline std::pair<double, double> enforce_membership(const ScenarioTree& P, NodeValues& d, const AWParams& prm, double r) {
  auto dist = [&](double s) {
    NodeValues e(d);
    for (auto& v : e) v *= s;
    return aw_distance(P, displace(P, e).tree, prm).distance;
  };
  double full = dist(1.0);
  if (full <= r + kBallSlack) return {1.0, full};
  double lo = 0.0, hi = 1.0, dlo = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double dm = dist(mid);
    if (dm <= r + kBallSlack) {
      lo = mid;
      dlo = dm;
    } else {
      hi = mid;
    }
  }
  for (auto& v : d) v *= lo;
  return {lo, dlo};
}

}  // namespace detail

/// Lower bounds on sup_{AW_p(P, Q) <= r} val(Q) - val(P) over shifts of the
/// support of P by adapted node displacements D. For each radius the search
/// starts from r Z (worst-case direction) and from random directions, runs
/// a projected ascent along the probability-scaled gradient inside the
/// surrogate ball sum_n P(n) |D_n|^p <= r^p, and finally checks the exact
/// adapted distance, shrinking D radially if needed.
inline RobustCurve robust_curve(const RobustQuery& q) {
  const ScenarioTree& P = q.tree;
  const double p = q.params.p();
  for (std::size_t i = 0; i < q.radii.size(); ++i)
    if (!(q.radii[i] > 0.0) || (i > 0 && !(q.radii[i] > q.radii[i - 1])))
      throw Error(ErrorCode::invalid_params, "radii must be positive and strictly ascending");

  SensitivityReport rep;
  switch (q.problem_class) {
    case ProblemClass::expectation: rep = sensitivity_terminal(P, q.model, q.params); break;
    case ProblemClass::control: {
      ControlSensitivityOptions opt;
      opt.solver.tol = q.tol;
      rep = sensitivity_control(P, q.model, q.bounds, q.params, opt);
      break;
    }
    case ProblemClass::stopping: rep = sensitivity_stopping(P, q.model, q.params, q.tol); break;
  }
  const auto wcd = worst_case_direction(P, rep);
  const detail::ClassEvaluator eval(q);

  RobustCurve curve;
  curve.problem_class = q.problem_class;
  curve.first_order = rep.first_order;
  curve.base_value = eval.base();

  double running = -std::numeric_limits<double>::infinity();
  double running_dist = 0.0;
  NodeValues running_disp(P.size(), 0.0);
  for (std::size_t ri = 0; ri < q.radii.size(); ++ri) {
    const double r = q.radii[ri];
    CurveRow row;
    row.r = r;
    row.r_times_V = r * rep.first_order;

    // Starting points: the worst-case direction, then random directions.
    std::vector<NodeValues> starts;
    NodeValues seed(P.size(), 0.0);
    for (const auto& node : P.nodes())
      if (node.time > 0) seed[node.id] = r * wcd.Z[node.id];
    starts.push_back(seed);
    detail::Rng rng(q.ascent.seed * 1000003ULL + ri);
    for (std::size_t k = 0; k < q.ascent.restarts; ++k) {
      NodeValues d(P.size(), 0.0);
      for (const auto& node : P.nodes())
        if (node.time > 0) d[node.id] = rng.normal();
      const double s = detail::surrogate_norm(P, d, p);
      for (auto& v : d) v *= r / s;
      starts.push_back(std::move(d));
    }

    double best = -std::numeric_limits<double>::infinity();
    double best_dist = 0.0;
    NodeValues best_disp(P.size(), 0.0);
    bool any_ok = false;
    for (std::size_t k = 0; k < starts.size(); ++k) {
      NodeValues d = starts[k];
      if (k == 0) {
        // Seeded candidate, reported on its own.
        NodeValues e = d;
        const auto [scale, dist] = detail::enforce_membership(P, e, q.params, r);
        const auto c = eval(e, false);
        row.seeded_value = c.ok ? c.value : std::numeric_limits<double>::quiet_NaN();
        if (c.ok) {
          any_ok = true;
          best = c.value;
          best_dist = dist;
          best_disp = e;
        }
        (void)scale;
      }
      auto cur = eval(d, true);
      if (!cur.ok) continue;
      double step = r;
      for (std::size_t it = 0; it < q.ascent.iterations && step > 1e-6 * r; ++it) {
        NodeValues dir(P.size(), 0.0);
        for (const auto& node : P.nodes())
          if (node.time > 0) dir[node.id] = cur.grad[node.id] / P.probability(node.id);
        const double dn = detail::surrogate_norm(P, dir, p);
        if (!(dn > 0.0)) break;
        NodeValues trial(d);
        for (std::size_t n = 0; n < trial.size(); ++n) trial[n] += step * dir[n] / dn;
        const double tn = detail::surrogate_norm(P, trial, p);
        if (tn > r)
          for (auto& v : trial) v *= r / tn;
        auto c = eval(trial, true);
        if (c.ok && c.value > cur.value) {
          d = std::move(trial);
          cur = std::move(c);
          step *= 1.5;
        } else {
          step *= 0.5;
        }
      }
      const auto [scale, dist] = detail::enforce_membership(P, d, q.params, r);
      const auto fin = scale == 1.0 ? cur : eval(d, false);
      if (fin.ok && fin.value > best) {
        any_ok = true;
        best = fin.value;
        best_dist = dist;
        best_disp = d;
      }
    }
    if (!any_ok) {
      row.converged = false;
      row.note = "no candidate could be evaluated";
    }
    if (any_ok && best > running) {
      running = best;
      running_dist = best_dist;
      running_disp = best_disp;
    }
    row.lower_bound = std::isfinite(running) ? running : 0.0;
    row.distance_of_maximizer = running_dist;
    row.displacement = running_disp;
    curve.rows.push_back(std::move(row));
  }
  std::vector<double> rs, lbs;
  for (const auto& row : curve.rows) {
    rs.push_back(row.r);
    lbs.push_back(row.lower_bound);
  }
  if (!rs.empty()) {
    const auto fit = fit_slope(rs, lbs);
    curve.slope_estimate = fit.slope;
    curve.slope_stderr = fit.stderr_;
  }
  return curve;
}

/// CSV with columns r, lower_bound, seeded_value, r_times_V,
/// distance_of_maximizer; numbers printed with 17 significant digits.
inline std::string to_csv(const RobustCurve& curve) {
  std::string out = "r,lower_bound,seeded_value,r_times_V,distance_of_maximizer\n";
  char buf[160];
  for (const auto& row : curve.rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", row.r, row.lower_bound, row.seeded_value,
                  row.r_times_V, row.distance_of_maximizer);
    out += buf;
  }
  return out;
}

}  // namespace awsens
