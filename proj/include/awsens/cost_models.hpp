#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "awsens/detail/random.hpp"
#include "awsens/error.hpp"

namespace awsens {

using Vector = std::vector<double>;
using Matrix = Eigen::MatrixXd;

enum class ModelKind { terminal, controlled, stopping, utility };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::terminal: return "terminal";
    case ModelKind::controlled: return "controlled";
    case ModelKind::stopping: return "stopping";
    case ModelKind::utility: return "utility";
  }
  return "unknown";
}

// Documentation only: on finite trees every function meets the growth
// conditions, nothing is enforced.
struct GrowthFlags {
  bool gradient_growth_p_minus_1 = true;
  bool bounded_derivative = false;
};

/// Objective f of one of the problem classes together with its derivatives.
///   terminal:   f(x)        grad_x
///   controlled: f(x, a)     grad_x, grad_a, hess_a   (utility models too)
///   stopping:   f(x, t)     grad_x                   (t in 1..T)
/// x and a are full paths of length T; a_t is the control used over (t-1, t].
class CostModel {
 public:
  struct TerminalFns {
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> grad_x;
  };
  struct ControlledFns {
    std::function<double(const Vector&, const Vector&)> value;
    std::function<Vector(const Vector&, const Vector&)> grad_x;
    std::function<Vector(const Vector&, const Vector&)> grad_a;
    std::function<Matrix(const Vector&, const Vector&)> hess_a;
  };
  struct StoppingFns {
    std::function<double(const Vector&, int)> value;
    std::function<Vector(const Vector&, int)> grad_x;
  };

  static CostModel make_terminal(std::string name, int horizon, TerminalFns fns, GrowthFlags flags = {}) {
    CostModel m(std::move(name), ModelKind::terminal, horizon, flags);
    m.terminal_ = std::make_shared<TerminalFns>(std::move(fns));
    return m;
  }
  static CostModel make_controlled(std::string name, int horizon, ControlledFns fns, GrowthFlags flags = {},
                                   ModelKind kind = ModelKind::controlled) {
    CostModel m(std::move(name), kind, horizon, flags);
    m.controlled_ = std::make_shared<ControlledFns>(std::move(fns));
    return m;
  }
  static CostModel make_stopping(std::string name, int horizon, StoppingFns fns, GrowthFlags flags = {}) {
    CostModel m(std::move(name), ModelKind::stopping, horizon, flags);
    m.stopping_ = std::make_shared<StoppingFns>(std::move(fns));
    return m;
  }

  const std::string& name() const noexcept { return name_; }
  ModelKind kind() const noexcept { return kind_; }
  int horizon() const noexcept { return horizon_; }
  const GrowthFlags& growth() const noexcept { return growth_; }
  bool is_controlled() const noexcept { return kind_ == ModelKind::controlled || kind_ == ModelKind::utility; }

  double eval(const Vector& x) const {
    require(ModelKind::terminal);
    check(x);
    return terminal_->value(x);
  }
  Vector grad_x(const Vector& x) const {
    require(ModelKind::terminal);
    check(x);
    return terminal_->grad_x(x);
  }

  double eval(const Vector& x, const Vector& a) const {
    require_controlled();
    check(x);
    check(a);
    return controlled_->value(x, a);
  }
  Vector grad_x(const Vector& x, const Vector& a) const {
    require_controlled();
    check(x);
    check(a);
    return controlled_->grad_x(x, a);
  }
  Vector grad_a(const Vector& x, const Vector& a) const {
    require_controlled();
    check(x);
    check(a);
    return controlled_->grad_a(x, a);
  }
  Matrix hess_a(const Vector& x, const Vector& a) const {
    require_controlled();
    check(x);
    check(a);
    return controlled_->hess_a(x, a);
  }

  double eval(const Vector& x, int t) const {
    require(ModelKind::stopping);
    check(x);
    check_time(t);
    return stopping_->value(x, t);
  }
  Vector grad_x(const Vector& x, int t) const {
    require(ModelKind::stopping);
    check(x);
    check_time(t);
    return stopping_->grad_x(x, t);
  }

  /// The model lambda * f (all derivatives scaled).
  CostModel scaled(double lambda) const {
    CostModel m = *this;
    m.name_ = name_ + "*" + std::to_string(lambda);
    auto sv = [lambda](Vector v) {
      for (auto& e : v) e *= lambda;
      return v;
    };
    if (terminal_) {
      auto f = terminal_;
      m.terminal_ = std::make_shared<TerminalFns>(TerminalFns{
          [f, lambda](const Vector& x) { return lambda * f->value(x); },
          [f, sv](const Vector& x) { return sv(f->grad_x(x)); }});
    }
    if (controlled_) {
      auto f = controlled_;
      m.controlled_ = std::make_shared<ControlledFns>(ControlledFns{
          [f, lambda](const Vector& x, const Vector& a) { return lambda * f->value(x, a); },
          [f, sv](const Vector& x, const Vector& a) { return sv(f->grad_x(x, a)); },
          [f, sv](const Vector& x, const Vector& a) { return sv(f->grad_a(x, a)); },
          [f, lambda](const Vector& x, const Vector& a) -> Matrix { return lambda * f->hess_a(x, a); }});
    }
    if (stopping_) {
      auto f = stopping_;
      m.stopping_ = std::make_shared<StoppingFns>(StoppingFns{
          [f, lambda](const Vector& x, int t) { return lambda * f->value(x, t); },
          [f, sv](const Vector& x, int t) { return sv(f->grad_x(x, t)); }});
    }
    return m;
  }

 private:
  CostModel(std::string name, ModelKind kind, int horizon, GrowthFlags flags)
      : name_(std::move(name)), kind_(kind), horizon_(horizon), growth_(flags) {
    if (horizon < 1) throw Error(ErrorCode::invalid_params, "model horizon must be at least 1");
  }
  void require(ModelKind k) const {
    if (kind_ != k)
      throw Error(ErrorCode::invalid_params, std::string("model '") + name_ + "' is not of " + to_string(k) + " kind");
  }
  void require_controlled() const {
    if (!is_controlled()) throw Error(ErrorCode::invalid_params, std::string("model '") + name_ + "' takes no controls");
  }
  void check(const Vector& v) const {
    if (static_cast<int>(v.size()) != horizon_)
      throw Error(ErrorCode::dimension_mismatch,
                  "model '" + name_ + "' expects vectors of length " + std::to_string(horizon_) + ", got " +
                      std::to_string(v.size()));
  }
  void check_time(int t) const {
    if (t < 1 || t > horizon_) throw Error(ErrorCode::dimension_mismatch, "stopping time out of range");
  }

  std::string name_;
  ModelKind kind_;
  int horizon_;
  GrowthFlags growth_;
  std::shared_ptr<const TerminalFns> terminal_;
  std::shared_ptr<const ControlledFns> controlled_;
  std::shared_ptr<const StoppingFns> stopping_;
};

// ---------------------------------------------------------------------------
// Scalar building blocks

struct ScalarFunction {
  std::string name;
  std::function<double(double)> value;
  std::function<double(double)> first;
  std::function<double(double)> second;
};

namespace detail {
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
inline double logistic(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }
}  // namespace detail

namespace scalar {

inline ScalarFunction affine(double slope, double intercept = 0.0) {
  return {"affine", [=](double z) { return slope * z + intercept; }, [=](double) { return slope; },
          [](double) { return 0.0; }};
}

inline ScalarFunction quadratic(double scale, double center = 0.0) {
  return {"quadratic", [=](double z) { return scale * (z - center) * (z - center); },
          [=](double z) { return 2.0 * scale * (z - center); }, [=](double) { return 2.0 * scale; }};
}

/// log(1 + exp(k (z - strike))) / k, a smoothed call payoff.
inline ScalarFunction softplus_call(double strike, double sharpness) {
  if (!(sharpness > 0.0)) throw Error(ErrorCode::invalid_params, "sharpness must be positive");
  return {"softplus_call", [=](double z) { return detail::softplus(sharpness * (z - strike)) / sharpness; },
          [=](double z) { return detail::logistic(sharpness * (z - strike)); },
          [=](double z) {
            const double s = detail::logistic(sharpness * (z - strike));
            return sharpness * s * (1.0 - s);
          }};
}

/// log(1 + exp(k (strike - z))) / k, a smoothed put payoff.
inline ScalarFunction softplus_put(double strike, double sharpness) {
  if (!(sharpness > 0.0)) throw Error(ErrorCode::invalid_params, "sharpness must be positive");
  return {"softplus_put", [=](double z) { return detail::softplus(sharpness * (strike - z)) / sharpness; },
          [=](double z) { return -detail::logistic(sharpness * (strike - z)); },
          [=](double z) {
            const double s = detail::logistic(sharpness * (strike - z));
            return sharpness * s * (1.0 - s);
          }};
}

}  // namespace scalar

// ---------------------------------------------------------------------------
// Losses for the utility problem

namespace loss {

/// scale * z^2
inline ScalarFunction quadratic(double scale = 1.0) {
  if (!(scale > 0.0)) throw Error(ErrorCode::invalid_params, "quadratic loss needs a positive scale");
  auto f = scalar::quadratic(scale);
  f.name = "quadratic";
  return f;
}

/// exp(gamma z) / gamma
inline ScalarFunction exponential(double gamma) {
  if (!(gamma > 0.0)) throw Error(ErrorCode::invalid_params, "exponential loss needs gamma > 0");
  return {"exponential", [=](double z) { return std::exp(gamma * z) / gamma; },
          [=](double z) { return std::exp(gamma * z); }, [=](double z) { return gamma * std::exp(gamma * z); }};
}

/// (1 + z^2)^(p/2): convex, p-growth at infinity.
inline ScalarFunction power(double p) {
  if (!(p >= 1.0)) throw Error(ErrorCode::invalid_params, "power loss needs p >= 1");
  return {"power", [=](double z) { return std::pow(1.0 + z * z, 0.5 * p); },
          [=](double z) { return p * z * std::pow(1.0 + z * z, 0.5 * p - 1.0); },
          [=](double z) {
            const double s = 1.0 + z * z;
            return p * std::pow(s, 0.5 * p - 2.0) * (1.0 + (p - 1.0) * z * z);
          }};
}

}  // namespace loss

// ---------------------------------------------------------------------------
// Path functionals (payoffs g of the utility problem)

struct PathFunction {
  std::string name;
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> grad;
  bool bounded_derivative = false;
};

namespace payoff {

inline PathFunction zero() {
  return {"zero", [](const Vector&) { return 0.0; }, [](const Vector& x) { return Vector(x.size(), 0.0); }, true};
}

inline PathFunction linear(Vector c) {
  return {"linear",
          [c](const Vector& x) {
            double s = 0.0;
            for (std::size_t t = 0; t < x.size(); ++t) s += c.at(t) * x[t];
            return s;
          },
          [c](const Vector& x) {
            if (c.size() != x.size()) throw Error(ErrorCode::dimension_mismatch, "payoff coefficient length");
            return c;
          },
          true};
}

/// Smoothed call on the value at time `t` (1-based).
inline PathFunction softplus_call(int t, double strike, double sharpness) {
  auto s = scalar::softplus_call(strike, sharpness);
  const auto i = static_cast<std::size_t>(t - 1);
  return {"softplus_call", [s, i](const Vector& x) { return s.value(x.at(i)); },
          [s, i](const Vector& x) {
            Vector g(x.size(), 0.0);
            g.at(i) = s.first(x[i]);
            return g;
          },
          true};
}

}  // namespace payoff

// ---------------------------------------------------------------------------
// Catalog: terminal costs f(x)

namespace catalog {

namespace detail {
inline void check_len(const Vector& v, int T, const char* what) {
  if (static_cast<int>(v.size()) != T)
    throw Error(ErrorCode::dimension_mismatch, std::string(what) + " must have one entry per time step");
}
}  // namespace detail

/// c . x
inline CostModel linear(Vector c) {
  const int T = static_cast<int>(c.size());
  return CostModel::make_terminal("linear", T,
                                  {[c](const Vector& x) {
                                     double s = 0.0;
                                     for (std::size_t t = 0; t < x.size(); ++t) s += c[t] * x[t];
                                     return s;
                                   },
                                   [c](const Vector&) { return c; }},
                                  {true, true});
}

/// sum_t (c_t x_t + w_t x_t^2 / 2)
inline CostModel quadratic(Vector c, Vector w) {
  const int T = static_cast<int>(c.size());
  detail::check_len(w, T, "quadratic weights");
  return CostModel::make_terminal("quadratic", T,
                                  {[c, w](const Vector& x) {
                                     double s = 0.0;
                                     for (std::size_t t = 0; t < x.size(); ++t) s += c[t] * x[t] + 0.5 * w[t] * x[t] * x[t];
                                     return s;
                                   },
                                   [c, w](const Vector& x) {
                                     Vector g(x.size());
                                     for (std::size_t t = 0; t < x.size(); ++t) g[t] = c[t] + w[t] * x[t];
                                     return g;
                                   }});
}

/// scale * x_i * x_j (1-based indices, i != j)
inline CostModel product(int T, int i, int j, double scale = 1.0) {
  if (i < 1 || j < 1 || i > T || j > T || i == j) throw Error(ErrorCode::invalid_params, "product needs two distinct times in 1..T");
  const auto a = static_cast<std::size_t>(i - 1), b = static_cast<std::size_t>(j - 1);
  return CostModel::make_terminal("product", T,
                                  {[=](const Vector& x) { return scale * x[a] * x[b]; },
                                   [=](const Vector& x) {
                                     Vector g(x.size(), 0.0);
                                     g[a] = scale * x[b];
                                     g[b] = scale * x[a];
                                     return g;
                                   }});
}

/// exp(c . x)
inline CostModel exp_linear(Vector c) {
  const int T = static_cast<int>(c.size());
  auto dot = [c](const Vector& x) {
    double s = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) s += c[t] * x[t];
    return s;
  };
  return CostModel::make_terminal("exp_linear", T,
                                  {[dot](const Vector& x) { return std::exp(dot(x)); },
                                   [dot, c](const Vector& x) {
                                     const double e = std::exp(dot(x));
                                     Vector g(c);
                                     for (auto& v : g) v *= e;
                                     return g;
                                   }});
}

/// Smoothed call on x_T.
inline CostModel softplus_call(int T, double strike, double sharpness) {
  auto s = scalar::softplus_call(strike, sharpness);
  const auto i = static_cast<std::size_t>(T - 1);
  return CostModel::make_terminal("softplus_call", T,
                                  {[s, i](const Vector& x) { return s.value(x[i]); },
                                   [s, i](const Vector& x) {
                                     Vector g(x.size(), 0.0);
                                     g[i] = s.first(x[i]);
                                     return g;
                                   }},
                                  {true, true});
}

/// sum_t c_t sin(omega x_t)
inline CostModel sine(Vector c, double omega) {
  const int T = static_cast<int>(c.size());
  return CostModel::make_terminal("sine", T,
                                  {[c, omega](const Vector& x) {
                                     double s = 0.0;
                                     for (std::size_t t = 0; t < x.size(); ++t) s += c[t] * std::sin(omega * x[t]);
                                     return s;
                                   },
                                   [c, omega](const Vector& x) {
                                     Vector g(x.size());
                                     for (std::size_t t = 0; t < x.size(); ++t) g[t] = c[t] * omega * std::cos(omega * x[t]);
                                     return g;
                                   }},
                                  {true, true});
}

// ---------------------------------------------------------------------------
// Catalog: controlled costs f(x, a)

/// sum_t w_t (a_t - target_t)^2 + h . x
inline CostModel separable_quadratic(Vector w, Vector target, Vector h) {
  const int T = static_cast<int>(w.size());
  detail::check_len(target, T, "targets");
  detail::check_len(h, T, "state coefficients");
  for (double v : w)
    if (!(v > 0.0)) throw Error(ErrorCode::invalid_params, "control weights must be positive");
  return CostModel::make_controlled(
      "separable_quadratic", T,
      {[=](const Vector& x, const Vector& a) {
         double s = 0.0;
         for (std::size_t t = 0; t < x.size(); ++t) s += w[t] * (a[t] - target[t]) * (a[t] - target[t]) + h[t] * x[t];
         return s;
       },
       [=](const Vector&, const Vector&) { return h; },
       [=](const Vector&, const Vector& a) {
         Vector g(a.size());
         for (std::size_t t = 0; t < a.size(); ++t) g[t] = 2.0 * w[t] * (a[t] - target[t]);
         return g;
       },
       [=](const Vector&, const Vector& a) -> Matrix {
         Matrix H = Matrix::Zero(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(a.size()));
         for (std::size_t t = 0; t < a.size(); ++t) H(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t)) = 2.0 * w[t];
         return H;
       }});
}

/// sum_t [ kappa/2 (x_t - a_t)^2 + lambda/2 a_t^2 ]: predict x_t from the
/// information at t-1 with a penalty on the size of the prediction.
inline CostModel quadratic_tracking(int T, double kappa, double lambda) {
  if (!(kappa >= 0.0 && lambda >= 0.0 && kappa + lambda > 0.0))
    throw Error(ErrorCode::invalid_params, "tracking weights must be nonnegative and not both zero");
  const double diag = kappa + lambda;
  return CostModel::make_controlled(
      "quadratic_tracking", T,
      {[=](const Vector& x, const Vector& a) {
         double s = 0.0;
         for (std::size_t t = 0; t < x.size(); ++t)
           s += 0.5 * kappa * (x[t] - a[t]) * (x[t] - a[t]) + 0.5 * lambda * a[t] * a[t];
         return s;
       },
       [=](const Vector& x, const Vector& a) {
         Vector g(x.size());
         for (std::size_t t = 0; t < x.size(); ++t) g[t] = kappa * (x[t] - a[t]);
         return g;
       },
       [=](const Vector& x, const Vector& a) {
         Vector g(x.size());
         for (std::size_t t = 0; t < x.size(); ++t) g[t] = kappa * (a[t] - x[t]) + lambda * a[t];
         return g;
       },
       [=](const Vector&, const Vector& a) -> Matrix {
         const auto n = static_cast<Eigen::Index>(a.size());
         return diag * Matrix::Identity(n, n);
       }});
}

}  // namespace catalog

// ---------------------------------------------------------------------------
// Utility maximisation: f(x, a) = loss(g(x) + sum_t a_t (x_t - x_{t-1}))

struct UtilityModel {
  ScalarFunction loss;
  PathFunction payoff;
  double x0 = 0.0;
};

namespace detail {
inline double hedged_position(const UtilityModel& u, const Vector& x, const Vector& a) {
  double z = u.payoff.value(x);
  double prev = u.x0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    z += a[t] * (x[t] - prev);
    prev = x[t];
  }
  return z;
}
inline Vector increments(const UtilityModel& u, const Vector& x) {
  Vector d(x.size());
  double prev = u.x0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    d[t] = x[t] - prev;
    prev = x[t];
  }
  return d;
}
}  // namespace detail

/// Controlled model of kind `utility`. Derivatives:
///   grad_a_t = loss'(z) (x_t - x_{t-1})
///   grad_x_t = loss'(z) (dg/dx_t + a_t - a_{t+1}),  a_{T+1} = 0
///   hess_a   = loss''(z) d d^T with d the vector of increments.
inline CostModel build_utility_cost(const UtilityModel& u, int T) {
  return CostModel::make_controlled(
      "utility", T,
      {[u](const Vector& x, const Vector& a) { return u.loss.value(detail::hedged_position(u, x, a)); },
       [u](const Vector& x, const Vector& a) {
         const double l1 = u.loss.first(detail::hedged_position(u, x, a));
         Vector g = u.payoff.grad(x);
         for (std::size_t t = 0; t < x.size(); ++t) {
           const double next = t + 1 < a.size() ? a[t + 1] : 0.0;
           g[t] = l1 * (g[t] + a[t] - next);
         }
         return g;
       },
       [u](const Vector& x, const Vector& a) {
         const double l1 = u.loss.first(detail::hedged_position(u, x, a));
         Vector d = detail::increments(u, x);
         for (auto& v : d) v *= l1;
         return d;
       },
       [u](const Vector& x, const Vector& a) -> Matrix {
         const double l2 = u.loss.second(detail::hedged_position(u, x, a));
         const Vector d = detail::increments(u, x);
         const Eigen::Map<const Eigen::VectorXd> dv(d.data(), static_cast<Eigen::Index>(d.size()));
         return l2 * dv * dv.transpose();
       }},
      {true, u.payoff.bounded_derivative}, ModelKind::utility);
}

/// loss''(z) sum_t dir_t^2 (x_t - x_{t-1})^2. Agrees with dir^T hess_a dir
/// whenever dir has a single nonzero entry; for general directions the exact
/// quadratic form is loss''(z) (sum_t dir_t (x_t - x_{t-1}))^2.
inline double utility_diagonal_form(const UtilityModel& u, const Vector& x, const Vector& a, const Vector& dir) {
  const double l2 = u.loss.second(detail::hedged_position(u, x, a));
  const Vector d = detail::increments(u, x);
  double s = 0.0;
  for (std::size_t t = 0; t < d.size(); ++t) s += dir.at(t) * dir.at(t) * d[t] * d[t];
  return l2 * s;
}

// ---------------------------------------------------------------------------
// Stopping costs f(x, t)

namespace catalog {

/// f(x, t) = g(x_t)
inline CostModel markov_stopping(int T, ScalarFunction g) {
  return CostModel::make_stopping("markov_" + g.name, T,
                                  {[g](const Vector& x, int t) { return g.value(x[static_cast<std::size_t>(t - 1)]); },
                                   [g](const Vector& x, int t) {
                                     Vector d(x.size(), 0.0);
                                     d[static_cast<std::size_t>(t - 1)] = g.first(x[static_cast<std::size_t>(t - 1)]);
                                     return d;
                                   }});
}

/// f(x, t) = rate^t g(x_t)
inline CostModel discounted_stopping(int T, ScalarFunction g, double rate) {
  if (!(rate > 0.0)) throw Error(ErrorCode::invalid_params, "discount rate must be positive");
  return CostModel::make_stopping(
      "discounted_" + g.name, T,
      {[g, rate](const Vector& x, int t) { return std::pow(rate, t) * g.value(x[static_cast<std::size_t>(t - 1)]); },
       [g, rate](const Vector& x, int t) {
         Vector d(x.size(), 0.0);
         d[static_cast<std::size_t>(t - 1)] = std::pow(rate, t) * g.first(x[static_cast<std::size_t>(t - 1)]);
         return d;
       }});
}

/// f(x, t) = g(x_t) + c * max_{s <= t} x_s smoothed: c * log(sum_{s<=t} exp(k x_s)) / k.
/// Depends on the whole past, not only on x_t.
inline CostModel running_max_stopping(int T, ScalarFunction g, double c, double sharpness) {
  if (!(sharpness > 0.0)) throw Error(ErrorCode::invalid_params, "sharpness must be positive");
  auto lse = [sharpness](const Vector& x, int t, Vector* weights) {
    double m = x[0];
    for (int s = 1; s < t; ++s) m = std::max(m, x[static_cast<std::size_t>(s)]);
    double acc = 0.0;
    for (int s = 0; s < t; ++s) acc += std::exp(sharpness * (x[static_cast<std::size_t>(s)] - m));
    if (weights)
      for (int s = 0; s < t; ++s) (*weights)[static_cast<std::size_t>(s)] = std::exp(sharpness * (x[static_cast<std::size_t>(s)] - m)) / acc;
    return m + std::log(acc) / sharpness;
  };
  return CostModel::make_stopping(
      "running_max_" + g.name, T,
      {[=](const Vector& x, int t) { return g.value(x[static_cast<std::size_t>(t - 1)]) + c * lse(x, t, nullptr); },
       [=](const Vector& x, int t) {
         Vector d(x.size(), 0.0);
         lse(x, t, &d);
         for (auto& v : d) v *= c;
         d[static_cast<std::size_t>(t - 1)] += g.first(x[static_cast<std::size_t>(t - 1)]);
         return d;
       }});
}

}  // namespace catalog

// ---------------------------------------------------------------------------
// Audits

struct DerivativeAudit {
  double max_rel_error = 0.0;
  std::size_t evaluations = 0;
  bool passed(double tol = 1e-6) const { return max_rel_error <= tol; }
};

/// Compares every derivative callback with central differences of step
/// `step` at `samples` random points in [-radius, radius]^T (controls in
/// [-control_radius, control_radius]). Error is |analytic - fd| / max(1, |fd|).
inline DerivativeAudit audit_derivatives(const CostModel& model, std::size_t samples, std::uint64_t seed,
                                         double step = 1e-5, double radius = 2.0, double control_radius = 1.0) {
  awsens::detail::Rng rng(seed);
  const auto T = static_cast<std::size_t>(model.horizon());
  DerivativeAudit audit;
  auto record = [&](double analytic, double fd) {
    audit.max_rel_error = std::max(audit.max_rel_error, std::abs(analytic - fd) / std::max(1.0, std::abs(fd)));
    ++audit.evaluations;
  };
  for (std::size_t s = 0; s < samples; ++s) {
    Vector x(T), a(T);
    for (auto& v : x) v = rng.uniform(-radius, radius);
    for (auto& v : a) v = rng.uniform(-control_radius, control_radius);
    auto shifted = [&](const Vector& v, std::size_t i, double h) {
      Vector w = v;
      w[i] += h;
      return w;
    };
    switch (model.kind()) {
      case ModelKind::terminal: {
        const Vector g = model.grad_x(x);
        for (std::size_t i = 0; i < T; ++i)
          record(g[i], (model.eval(shifted(x, i, step)) - model.eval(shifted(x, i, -step))) / (2 * step));
        break;
      }
      case ModelKind::controlled:
      case ModelKind::utility: {
        const Vector gx = model.grad_x(x, a);
        const Vector ga = model.grad_a(x, a);
        const Matrix H = model.hess_a(x, a);
        for (std::size_t i = 0; i < T; ++i) {
          record(gx[i], (model.eval(shifted(x, i, step), a) - model.eval(shifted(x, i, -step), a)) / (2 * step));
          record(ga[i], (model.eval(x, shifted(a, i, step)) - model.eval(x, shifted(a, i, -step))) / (2 * step));
          const Vector gp = model.grad_a(x, shifted(a, i, step));
          const Vector gm = model.grad_a(x, shifted(a, i, -step));
          for (std::size_t j = 0; j < T; ++j)
            record(H(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)), (gp[j] - gm[j]) / (2 * step));
        }
        break;
      }
      case ModelKind::stopping: {
        for (int t = 1; t <= model.horizon(); ++t) {
          const Vector g = model.grad_x(x, t);
          for (std::size_t i = 0; i < T; ++i)
            record(g[i], (model.eval(shifted(x, i, step), t) - model.eval(shifted(x, i, -step), t)) / (2 * step));
        }
        break;
      }
    }
  }
  return audit;
}

/// Smallest eigenvalue of hess_a over random (x, a) samples.
inline double min_hessian_eigenvalue(const CostModel& model, std::size_t samples, std::uint64_t seed,
                                     double radius = 2.0, double control_radius = 1.0) {
  awsens::detail::Rng rng(seed);
  const auto T = static_cast<std::size_t>(model.horizon());
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < samples; ++s) {
    Vector x(T), a(T);
    for (auto& v : x) v = rng.uniform(-radius, radius);
    for (auto& v : a) v = rng.uniform(-control_radius, control_radius);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(model.hess_a(x, a), Eigen::EigenvaluesOnly);
    lo = std::min(lo, es.eigenvalues().minCoeff());
  }
  return lo;
}

/// True if perturbing coordinates after t never changes f(x, t) on random
/// sample paths.
inline bool stopping_is_adapted(const CostModel& model, std::size_t samples, std::uint64_t seed) {
  awsens::detail::Rng rng(seed);
  const auto T = static_cast<std::size_t>(model.horizon());
  for (std::size_t s = 0; s < samples; ++s) {
    Vector x(T);
    for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    for (int t = 1; t < model.horizon(); ++t) {
      const double base = model.eval(x, t);
      Vector y = x;
      for (std::size_t k = static_cast<std::size_t>(t); k < T; ++k) y[k] += rng.uniform(-1.0, 1.0);
      if (model.eval(y, t) != base) return false;
    }
  }
  return true;
}

/// Registers a user-supplied model: the derivative callbacks are audited
/// against finite differences and an InvalidParams error is raised if they
/// disagree by more than `tol`.
inline CostModel register_custom(CostModel model, std::uint64_t seed = 1, std::size_t samples = 200, double tol = 1e-6) {
  const auto audit = audit_derivatives(model, samples, seed);
  if (!audit.passed(tol))
    throw Error(ErrorCode::invalid_params, "derivatives of model '" + model.name() +
                                               "' disagree with finite differences (relative error " +
                                               std::to_string(audit.max_rel_error) + ")");
  if (model.kind() == ModelKind::stopping && !stopping_is_adapted(model, samples, seed))
    throw Error(ErrorCode::invalid_params, "stopping model '" + model.name() + "' looks ahead in time");
  return model;
}

}  // namespace awsens
