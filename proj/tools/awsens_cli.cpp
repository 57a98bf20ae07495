// Command-line driver: tree generation, adapted distances, value, stopping,
// sensitivity and robust-curve reports.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "awsens/awsens.hpp"

namespace {

using awsens::io::Json;

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw awsens::Error(awsens::ErrorCode::invalid_params, "cannot write " + path);
  out << text;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adapted Wasserstein sensitivities on scenario trees"};
  app.require_subcommand(1);

  std::size_t threads = 1;
  app.add_option("--threads", threads, "Upper bound on worker threads")->envname("AWSENS_THREADS")->check(CLI::PositiveNumber);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a scenario tree");
  gen->require_subcommand(1);
  std::string gen_out;
  int horizon = 2;
  double start = 0.0, drift = 0.0;

  auto* binomial = gen->add_subcommand("binomial", "Non-recombining binomial tree");
  double up = 1.0, down = -1.0, p_up = 0.5;
  binomial->add_option("--out,-o", gen_out, "Output file (default: stdout)");
  binomial->add_option("--horizon,-T", horizon)->check(CLI::PositiveNumber);
  binomial->add_option("--start", start);
  binomial->add_option("--up", up);
  binomial->add_option("--down", down);
  binomial->add_option("--p-up", p_up);
  binomial->add_option("--drift", drift, "Added to every step after the first");

  auto* lattice = gen->add_subcommand("lattice", "Non-recombining multinomial tree");
  std::vector<double> steps, probs;
  lattice->add_option("--out,-o", gen_out, "Output file (default: stdout)");
  lattice->add_option("--horizon,-T", horizon)->check(CLI::PositiveNumber);
  lattice->add_option("--start", start);
  lattice->add_option("--steps", steps)->required()->delimiter(',');
  lattice->add_option("--probs", probs)->required()->delimiter(',');
  lattice->add_option("--drift", drift);

  auto* random = gen->add_subcommand("random", "Random tree");
  std::size_t branching = 2;
  std::uint64_t seed = 1;
  random->add_option("--out,-o", gen_out, "Output file (default: stdout)");
  random->add_option("--horizon,-T", horizon)->check(CLI::PositiveNumber);
  random->add_option("--branching,-b", branching);
  random->add_option("--seed", seed);

  // aw
  auto* aw = app.add_subcommand("aw", "Adapted Wasserstein distance between two trees");
  std::string tree_a, tree_b, aw_out;
  double p = 2.0;
  bool with_coupling = false, with_flat = false, with_oracle = false;
  aw->add_option("first", tree_a)->required()->check(CLI::ExistingFile);
  aw->add_option("second", tree_b)->required()->check(CLI::ExistingFile);
  aw->add_option("--p", p, "Order p > 1");
  aw->add_flag("--coupling", with_coupling, "Also print the optimal coupling");
  aw->add_flag("--flat", with_flat, "Also print the ordinary Wasserstein distance");
  aw->add_flag("--oracle", with_oracle, "Also solve the bicausal linear program directly (small trees only)");
  aw->add_option("--out,-o", aw_out);

  // value / stop / sens / curve share tree + config
  std::string tree_path, config_path, out_path, json_path;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("tree", tree_path)->required()->check(CLI::ExistingFile);
    sub->add_option("--config,-c", config_path)->required()->check(CLI::ExistingFile);
    sub->add_option("--out,-o", out_path);
  };
  auto* value = app.add_subcommand("value", "Optimal control value v(P)");
  add_common(value);
  bool witness = false;
  value->add_flag("--witness", witness, "Check uniqueness by 16 restarts");
  auto* stop = app.add_subcommand("stop", "Optimal stopping value s(P)");
  add_common(stop);
  auto* sens = app.add_subcommand("sens", "First-order sensitivity and worst-case direction");
  add_common(sens);
  double perturb_r = 0.0;
  std::string perturbed_out;
  sens->add_option("--perturb", perturb_r, "Also build the tree shifted by r along the worst-case direction")
      ->check(CLI::NonNegativeNumber);
  sens->add_option("--perturbed-out", perturbed_out, "Where to write the shifted tree");
  auto* curve = app.add_subcommand("curve", "Robust error curve (CSV)");
  add_common(curve);
  curve->add_option("--json", json_path, "Also write the curve as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    awsens::set_thread_cap(threads);

    if (*gen) {
      const auto tree = *binomial  ? awsens::gen_binomial(horizon, start, up, down, p_up, drift)
                        : *lattice ? awsens::gen_lattice(horizon, start, steps, probs, drift)
                                   : awsens::gen_random(horizon, branching, seed);
      emit(awsens::io::write_tree(tree), gen_out);
      return 0;
    }

    if (*aw) {
      const auto P = awsens::io::load_tree(tree_a);
      const auto Q = awsens::io::load_tree(tree_b);
      const awsens::AWParams prm(p);
      auto j = awsens::io::to_json(awsens::aw_distance(P, Q, prm), with_coupling);
      if (with_flat) j["flat_distance"] = awsens::flat_wasserstein(P, Q, prm).distance;
      if (with_oracle) j["oracle_pth_power"] = awsens::brute_force_bicausal(P, Q, prm).pth_power;
      emit(dump(j), aw_out);
      return 0;
    }

    const auto tree = awsens::io::load_tree(tree_path);
    const auto cfg = awsens::io::load_config(config_path);
    const auto model = awsens::io::model_for(cfg, tree.horizon());
    const awsens::AWParams prm(cfg.p);
    const awsens::ControlBounds bounds(cfg.L);

    if (*value) {
      if (cfg.problem_class != awsens::ProblemClass::control)
        throw awsens::Error(awsens::ErrorCode::invalid_params, "value needs problem_class \"control\"");
      awsens::SolverOptions opt;
      opt.tol = cfg.tol;
      auto j = awsens::io::to_json(tree, awsens::solve_value(tree, model, bounds, opt));
      if (witness) {
        const auto w = awsens::uniqueness_witness(tree, model, bounds, 16, cfg.seed, cfg.tol);
        j["uniqueness"] = Json{{"restarts", w.restarts}, {"max_sup_distance", w.max_sup_distance}, {"agreed", w.agreed()}};
      }
      emit(dump(j), out_path);
    } else if (*stop) {
      if (cfg.problem_class != awsens::ProblemClass::stopping)
        throw awsens::Error(awsens::ErrorCode::invalid_params, "stop needs problem_class \"stopping\"");
      emit(dump(awsens::io::to_json(tree, awsens::solve_stopping(tree, model, cfg.tol))), out_path);
    } else if (*sens) {
      awsens::SensitivityReport rep;
      switch (cfg.problem_class) {
        case awsens::ProblemClass::expectation: rep = awsens::sensitivity_terminal(tree, model, prm); break;
        case awsens::ProblemClass::control: {
          awsens::ControlSensitivityOptions opt;
          opt.solver.tol = cfg.tol;
          rep = awsens::sensitivity_control(tree, model, bounds, prm, opt);
          break;
        }
        case awsens::ProblemClass::stopping: rep = awsens::sensitivity_stopping(tree, model, prm, cfg.tol); break;
      }
      const auto dir = awsens::worst_case_direction(tree, rep);
      auto j = awsens::io::to_json(tree, rep, dir);
      if (perturb_r > 0.0) {
        const auto pm = awsens::perturbed_model(tree, dir.Z, perturb_r, cfg.delta);
        const auto ball = awsens::ball_membership(tree, pm.tree, prm, perturb_r);
        j["perturbed"] = Json{{"r", perturb_r}, {"bicausalized", pm.bicausalized}, {"distance", ball.distance}};
        if (!perturbed_out.empty()) emit(awsens::io::write_tree(pm.tree), perturbed_out);
      }
      emit(dump(j), out_path);
    } else if (*curve) {
      awsens::RobustQuery q{cfg.problem_class, tree, model, prm, cfg.radii, bounds, cfg.ascent, cfg.tol};
      const auto c = awsens::robust_curve(q);
      emit(awsens::to_csv(c), out_path);
      if (!json_path.empty()) emit(dump(awsens::io::to_json(c)), json_path);
    }
    return 0;
  } catch (const awsens::Error& e) {
    std::cerr << "awsens: " << e.what() << "\n";
    return awsens::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "awsens: " << e.what() << "\n";
    return 1;
  }
}
