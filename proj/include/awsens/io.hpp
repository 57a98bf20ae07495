#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "awsens/adapted_wasserstein.hpp"
#include "awsens/cost_models.hpp"
#include "awsens/error.hpp"
#include "awsens/multistage_opt.hpp"
#include "awsens/optimal_stopping.hpp"
#include "awsens/process_tree.hpp"
#include "awsens/robust_oracle.hpp"
#include "awsens/sensitivity.hpp"

namespace awsens::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kTreeSchema = "aw-tree/1";

// ---------------------------------------------------------------------------
// Tree files

/// One node per line so that diffs and diagnostics point at single nodes.
inline std::string write_tree(const ScenarioTree& tree) {
  std::string out = "{\n  \"schema_version\": \"";
  out += kTreeSchema;
  out += "\",\n  \"horizon\": " + std::to_string(tree.horizon()) + ",\n  \"nodes\": [\n";
  for (const auto& node : tree.nodes()) {
    Json j;
    j["id"] = node.id;
    j["parent"] = node.parent ? Json(*node.parent) : Json(nullptr);
    j["time"] = node.time;
    j["value"] = node.value;
    j["cond_prob"] = node.cond_prob;
    out += "    " + j.dump() + (node.id + 1 < tree.size() ? ",\n" : "\n");
  }
  out += "  ]\n}\n";
  return out;
}

namespace detail {

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

// Line on which each element object of the top-level "nodes" array starts.
inline std::vector<std::size_t> node_lines(const std::string& text) {
  std::vector<std::size_t> lines;
  const auto key = text.find("\"nodes\"");
  if (key == std::string::npos) return lines;
  std::size_t i = text.find('[', key);
  if (i == std::string::npos) return lines;
  std::size_t line = line_of_offset(text, i);
  int depth = 0;
  bool in_string = false;
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') ++line;
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '[' || c == '{') {
      if (c == '{' && depth == 1) lines.push_back(line);
      ++depth;
    } else if (c == ']' || c == '}') {
      if (--depth == 0) break;
    }
  }
  return lines;
}

[[noreturn]] inline void tree_error(const std::string& source, std::optional<std::size_t> line, const std::string& msg) {
  std::string where = source;
  if (line) where += ":" + std::to_string(*line);
  throw Error(ErrorCode::invalid_tree, where + ": " + msg);
}

}  // namespace detail

/// Parses an "aw-tree/1" document. Errors are InvalidTree with the source
/// name and the line of the offending node.
inline ScenarioTree read_tree(const std::string& text, const std::string& source = "<tree>") {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    detail::tree_error(source, detail::line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1), "malformed JSON");
  }
  if (!doc.is_object()) detail::tree_error(source, std::nullopt, "top level must be an object");
  if (!doc.contains("schema_version") || doc["schema_version"] != kTreeSchema)
    detail::tree_error(source, std::nullopt, std::string("schema_version must be \"") + kTreeSchema + "\"");
  if (!doc.contains("horizon") || !doc["horizon"].is_number_integer())
    detail::tree_error(source, std::nullopt, "horizon must be an integer");
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) detail::tree_error(source, std::nullopt, "nodes must be an array");
  const int horizon = doc["horizon"].get<int>();
  const auto& nodes = doc["nodes"];
  const auto lines = detail::node_lines(text);
  auto line_of = [&](std::size_t i) -> std::optional<std::size_t> {
    if (i < lines.size()) return lines[i];
    return std::nullopt;
  };

  std::map<std::int64_t, std::size_t> index_of_id;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (!n.is_object() || !n.contains("id") || !n["id"].is_number_integer())
      detail::tree_error(source, line_of(i), "node needs an integer id");
    if (!index_of_id.emplace(n["id"].get<std::int64_t>(), i).second)
      detail::tree_error(source, line_of(i), "duplicate node id " + n["id"].dump());
  }
  std::vector<NodeSpec> specs(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    auto& s = specs[i];
    if (n.contains("parent") && !n["parent"].is_null()) {
      if (!n["parent"].is_number_integer()) detail::tree_error(source, line_of(i), "parent must be an integer or null");
      const auto it = index_of_id.find(n["parent"].get<std::int64_t>());
      if (it == index_of_id.end()) detail::tree_error(source, line_of(i), "unknown parent id " + n["parent"].dump());
      s.parent = it->second;
    }
    if (n.contains("time")) {
      if (!n["time"].is_number_integer()) detail::tree_error(source, line_of(i), "time must be an integer");
      s.time = n["time"].get<int>();
    }
    if (s.parent) {
      if (!n.contains("value") || !n["value"].is_number()) detail::tree_error(source, line_of(i), "node needs a numeric value");
      if (!n.contains("cond_prob") || !n["cond_prob"].is_number())
        detail::tree_error(source, line_of(i), "node needs a numeric cond_prob");
      s.value = n["value"].get<double>();
      s.cond_prob = n["cond_prob"].get<double>();
    }
  }
  try {
    return ScenarioTree::build(horizon, specs);
  } catch (const Error& e) {
    std::string msg = e.what();
    const std::string prefix = "InvalidTree: ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    detail::tree_error(source, e.node() ? line_of(*e.node()) : std::nullopt, msg);
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::invalid_params, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ScenarioTree load_tree(const std::string& path) { return read_tree(read_file(path), path); }

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  ProblemClass problem_class = ProblemClass::expectation;
  std::string model_name;
  Json model_params = Json::object();
  double p = 2.0;
  double L = 10.0;
  std::vector<double> radii{1e-4, 1e-3, 1e-2, 1e-1};
  double tol = 1e-9;
  std::uint64_t seed = 1;
  AscentConfig ascent{};
  std::optional<double> delta;
};

namespace detail {

inline Vector vec(const Json& params, const char* key) {
  if (!params.contains(key) || !params[key].is_array())
    throw Error(ErrorCode::invalid_params, std::string("model parameter '") + key + "' must be an array");
  return params[key].get<Vector>();
}

inline double num(const Json& params, const char* key, std::optional<double> fallback = std::nullopt) {
  if (!params.contains(key)) {
    if (fallback) return *fallback;
    throw Error(ErrorCode::invalid_params, std::string("missing model parameter '") + key + "'");
  }
  if (!params[key].is_number()) throw Error(ErrorCode::invalid_params, std::string("model parameter '") + key + "' must be a number");
  return params[key].get<double>();
}

inline std::string name_of(const Json& j, const char* what) {
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
    throw Error(ErrorCode::invalid_params, std::string(what) + " needs a name");
  return j["name"].get<std::string>();
}

inline ScalarFunction scalar_from(const Json& j) {
  const auto name = name_of(j, "scalar function");
  if (name == "affine") return scalar::affine(num(j, "slope", 1.0), num(j, "intercept", 0.0));
  if (name == "quadratic") return scalar::quadratic(num(j, "scale", 1.0), num(j, "center", 0.0));
  if (name == "softplus_call") return scalar::softplus_call(num(j, "strike"), num(j, "sharpness", 10.0));
  if (name == "softplus_put") return scalar::softplus_put(num(j, "strike"), num(j, "sharpness", 10.0));
  throw Error(ErrorCode::invalid_params, "unknown scalar function '" + name + "'");
}

inline ScalarFunction loss_from(const Json& j) {
  const auto name = name_of(j, "loss");
  if (name == "quadratic") return loss::quadratic(num(j, "scale", 1.0));
  if (name == "exponential") return loss::exponential(num(j, "gamma", 1.0));
  if (name == "power") return loss::power(num(j, "p", 2.0));
  throw Error(ErrorCode::invalid_params, "unknown loss '" + name + "'");
}

inline PathFunction payoff_from(const Json& j, int T) {
  const auto name = name_of(j, "payoff");
  if (name == "zero") return payoff::zero();
  if (name == "linear") {
    auto c = vec(j, "c");
    if (static_cast<int>(c.size()) != T) throw Error(ErrorCode::dimension_mismatch, "payoff coefficients need one entry per time step");
    return payoff::linear(std::move(c));
  }
  if (name == "softplus_call")
    return payoff::softplus_call(static_cast<int>(num(j, "t", T)), num(j, "strike"), num(j, "sharpness", 10.0));
  throw Error(ErrorCode::invalid_params, "unknown payoff '" + name + "'");
}

inline void check_len(const Vector& v, int T, const char* key) {
  if (static_cast<int>(v.size()) != T)
    throw Error(ErrorCode::dimension_mismatch, std::string("model parameter '") + key + "' needs one entry per time step");
}

}  // namespace detail

inline constexpr const char* kModelNames[] = {"linear", "quadratic", "product", "exp_linear", "softplus_call",
                                              "sine", "separable_quadratic", "quadratic_tracking", "utility",
                                              "markov", "discounted", "running_max"};

/// Catalog model by name for a tree of horizon T.
inline CostModel make_model(const std::string& name, const Json& params, int T) {
  using detail::num;
  using detail::vec;
  auto vT = [&](const char* key) {
    auto v = vec(params, key);
    detail::check_len(v, T, key);
    return v;
  };
  if (name == "linear") return catalog::linear(vT("c"));
  if (name == "quadratic") return catalog::quadratic(vT("c"), vT("w"));
  if (name == "product")
    return catalog::product(T, static_cast<int>(num(params, "i", 1.0)), static_cast<int>(num(params, "j", 2.0)),
                            num(params, "scale", 1.0));
  if (name == "exp_linear") return catalog::exp_linear(vT("c"));
  if (name == "softplus_call") return catalog::softplus_call(T, num(params, "strike"), num(params, "sharpness", 10.0));
  if (name == "sine") return catalog::sine(vT("c"), num(params, "omega", 1.0));
  if (name == "separable_quadratic") return catalog::separable_quadratic(vT("w"), vT("target"), vT("h"));
  if (name == "quadratic_tracking")
    return catalog::quadratic_tracking(T, num(params, "kappa", 1.0), num(params, "lambda", 0.0));
  if (name == "utility") {
    UtilityModel u{detail::loss_from(params.value("loss", Json{{"name", "quadratic"}})),
                   detail::payoff_from(params.value("payoff", Json{{"name", "zero"}}), T), num(params, "x0", 0.0)};
    return build_utility_cost(u, T);
  }
  if (name == "markov") return catalog::markov_stopping(T, detail::scalar_from(params.value("g", Json{{"name", "affine"}})));
  if (name == "discounted")
    return catalog::discounted_stopping(T, detail::scalar_from(params.value("g", Json{{"name", "affine"}})),
                                        num(params, "rate", 1.0));
  if (name == "running_max")
    return catalog::running_max_stopping(T, detail::scalar_from(params.value("g", Json{{"name", "affine"}})),
                                         num(params, "c", 1.0), num(params, "sharpness", 10.0));
  throw Error(ErrorCode::invalid_params, "unknown model '" + name + "'");
}

/// The utility description behind a "utility" model entry.
inline UtilityModel utility_from(const Json& params, int T) {
  return UtilityModel{detail::loss_from(params.value("loss", Json{{"name", "quadratic"}})),
                      detail::payoff_from(params.value("payoff", Json{{"name", "zero"}}), T),
                      detail::num(params, "x0", 0.0)};
}

inline ProblemClass parse_problem_class(const std::string& s) {
  if (s == "expectation" || s == "terminal") return ProblemClass::expectation;
  if (s == "control" || s == "controlled") return ProblemClass::control;
  if (s == "stopping") return ProblemClass::stopping;
  throw Error(ErrorCode::invalid_params, "unknown problem_class '" + s + "'");
}

inline RunConfig parse_config(const std::string& text, const std::string& source = "<config>") {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::invalid_params, source + ": malformed JSON (" + e.what() + ")");
  }
  try {
    RunConfig c;
    if (j.contains("problem_class")) c.problem_class = parse_problem_class(j["problem_class"].get<std::string>());
    if (!j.contains("model")) throw Error(ErrorCode::invalid_params, "config needs a model");
    c.model_name = detail::name_of(j["model"], "model");
    c.model_params = j["model"].value("params", Json::object());
    if (std::find(std::begin(kModelNames), std::end(kModelNames), c.model_name) == std::end(kModelNames))
      throw Error(ErrorCode::invalid_params, "unknown model '" + c.model_name + "'");
    c.p = j.value("p", 2.0);
    if (!(c.p > 1.0)) throw Error(ErrorCode::invalid_params, "p must be > 1");
    c.L = j.value("L", 10.0);
    if (j.contains("radii")) c.radii = j["radii"].get<std::vector<double>>();
    c.tol = j.value("tol", 1e-9);
    c.seed = j.value("seed", std::uint64_t{1});
    if (j.contains("ascent")) {
      c.ascent.restarts = j["ascent"].value("restarts", c.ascent.restarts);
      c.ascent.iterations = j["ascent"].value("iterations", c.ascent.iterations);
    }
    c.ascent.seed = c.seed;
    if (j.contains("delta") && !j["delta"].is_null()) c.delta = j["delta"].get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_params, source + ": " + e.what());
  } catch (const Error& e) {
    std::string msg = e.what();
    const std::string prefix = std::string(to_string(e.code())) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    throw Error(e.code(), source + ": " + msg);
  }
}

inline RunConfig load_config(const std::string& path) { return parse_config(read_file(path), path); }

/// Model named in the config; checks that it fits the problem class.
inline CostModel model_for(const RunConfig& c, int T) {
  auto m = make_model(c.model_name, c.model_params, T);
  const bool fits = (c.problem_class == ProblemClass::expectation && m.kind() == ModelKind::terminal) ||
                    (c.problem_class == ProblemClass::control && m.is_controlled()) ||
                    (c.problem_class == ProblemClass::stopping && m.kind() == ModelKind::stopping);
  if (!fits)
    throw Error(ErrorCode::invalid_params, "model '" + c.model_name + "' does not fit problem class " +
                                               to_string(c.problem_class));
  return m;
}

// ---------------------------------------------------------------------------
// Report serialisation

inline Json level_values(const ScenarioTree& tree, const NodeValues& v) {
  Json out = Json::array();
  for (int t = 1; t <= tree.horizon(); ++t) {
    Json level = Json::array();
    for (NodeId n : tree.nodes_at(t)) level.push_back(Json{{"node", n}, {"value", v[n]}});
    out.push_back(level);
  }
  return out;
}

inline Json to_json(const AWResult& r, bool with_coupling) {
  Json j{{"distance", r.distance}, {"pth_power", r.pth_power}, {"per_stage_costs", r.per_stage_costs}};
  if (with_coupling) {
    Json pairs = Json::array();
    const auto& nodes = r.coupling.nodes();
    for (std::size_t k = 0; k < nodes.size(); ++k)
      pairs.push_back(Json{{"id", k},
                           {"parent", nodes[k].parent ? Json(*nodes[k].parent) : Json(nullptr)},
                           {"time", nodes[k].time},
                           {"x", nodes[k].x},
                           {"y", nodes[k].y},
                           {"cond_prob", nodes[k].cond_prob}});
    j["coupling"] = pairs;
  }
  return j;
}

inline Json to_json(const ScenarioTree& tree, const ValueReport& r) {
  Json policy = Json::array();
  for (std::size_t n = 0; n < r.policy.values.size(); ++n)
    policy.push_back(Json{{"node", n}, {"time", tree.node(n).time + 1}, {"control", r.policy.values[n]}});
  return Json{{"value", r.value}, {"kkt_residual", r.kkt_residual}, {"iterations", r.iterations}, {"policy", policy}};
}

inline Json to_json(const ScenarioTree& tree, const StoppingSolution& s) {
  Json tau = Json::array();
  const auto& leaves = tree.leaves();
  for (std::size_t k = 0; k < leaves.size(); ++k) tau.push_back(Json{{"leaf", leaves[k]}, {"tau", s.policy.tau[k]}});
  return Json{{"value", s.value},
              {"uniqueness_margin", s.table.uniqueness_margin},
              {"stop_set", s.policy.stop_set},
              {"tau", tau}};
}

inline Json to_json(const ScenarioTree& tree, const SensitivityReport& r, const WorstCaseDirection& w) {
  return Json{{"problem_class", to_string(r.problem_class)},
              {"p", r.p},
              {"q", r.q},
              {"base_value", r.base_value},
              {"first_order", r.first_order},
              {"stage_qnorms", r.stage_qnorms},
              {"F", level_values(tree, r.F)},
              {"direction",
               Json{{"stage_weights", w.stage_weights},
                    {"norm_check", w.norm_check},
                    {"pairing", w.pairing},
                    {"degenerate", w.degenerate},
                    {"Z", level_values(tree, w.Z)}}}};
}

inline Json to_json(const RobustCurve& c) {
  Json rows = Json::array();
  for (const auto& row : c.rows)
    rows.push_back(Json{{"r", row.r},
                        {"lower_bound", row.lower_bound},
                        {"seeded_value", row.seeded_value},
                        {"r_times_V", row.r_times_V},
                        {"distance_of_maximizer", row.distance_of_maximizer},
                        {"converged", row.converged},
                        {"note", row.note}});
  return Json{{"problem_class", to_string(c.problem_class)},
              {"base_value", c.base_value},
              {"first_order", c.first_order},
              {"slope_estimate", c.slope_estimate},
              {"slope_stderr", c.slope_stderr},
              {"rows", rows}};
}

}  // namespace awsens::io
