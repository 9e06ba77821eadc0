#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>
#include <thread>
#include <vector>

#include "satq/errors.hpp"
#include "satq/oracle.hpp"
#include "satq/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace satq;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open " + path.string());
  return json::parse(in);
}

// Runs `hook <trace.csv> <run-dir>` through the shell, e.g. the plotting script.
int run_hook(const std::string& hook, const fs::path& run_dir) {
  if (hook.empty()) return 0;
  const std::string cmd = hook + " '" + (run_dir / "trace.csv").string() + "' '" + run_dir.string() + "'";
  const int rc = std::system(cmd.c_str());
  if (rc != 0) std::cerr << "plot hook exited with status " << rc << "\n";
  return rc;
}

int cmd_run(const std::string& config_path, const std::string& output, const std::string& hook) {
  ExperimentConfig config = load_config(config_path);
  if (!output.empty()) config.output = output;
  const RunSummary summary = run_experiment_to_dir(config);
  std::cout << summary.to_json().dump(2) << "\n";
  if (!config.output.empty()) run_hook(hook, config.output);
  return summary.all_satisfied() ? 0 : 1;
}

int cmd_sweep(const std::string& dir, int jobs, const std::string& hook) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ArgumentError("no .json configs in " + dir);
  std::vector<ExperimentConfig> configs;
  for (const auto& f : files) configs.push_back(load_config(f.string()));
  const SweepSummary sweep = run_sweep(configs, jobs);
  json doc = sweep.to_json();
  for (std::size_t k = 0; k < files.size(); ++k) doc["runs"][k]["config"] = files[k].filename().string();
  std::cout << doc.dump(2) << "\n";
  for (const auto& c : configs)
    if (!c.output.empty() && fs::exists(fs::path(c.output) / "trace.csv")) run_hook(hook, c.output);
  return 0;
}

int cmd_oracle(const std::string& config_path, double eps, int grid_points) {
  const ExperimentConfig config = load_config(config_path);
  const MmdpSpec spec = resolve_bounds(build_environment(config.env), config.bounds);
  const CommGraph graph = build_graph(config.graph, spec.n_agents);
  if (eps < 0.0) eps = config.hyper.eps_w / (1.0 + graph.max_degree());

  json doc = {{"environment", spec.name}, {"beta", spec.bounds}};
  if (config.bounds.values.empty() && config.bounds.reference_policy) {
    const JointPolicy ref = policy_from_index(spec, *config.bounds.reference_policy);
    const PolicyEvaluation ev = evaluate_policy(spec, ref);
    doc["reference"] = {{"policy_number", *config.bounds.reference_policy},
                        {"avg_cost", ev.avg_cost},
                        {"stationary", std::vector<double>(ev.stationary.begin(), ev.stationary.end())}};
  }
  try {
    const auto witness = check_feasibility(spec);
    doc["feasible"] = witness.has_value();
    if (witness) doc["witness_policy_number"] = policy_index(spec, *witness);
    const SaddleResult saddle = solve_saddle(spec, eps);
    doc["saddle"] = {{"eps", eps},
                     {"policy_number", policy_index(spec, saddle.policy)},
                     {"weights", saddle.weights.w},
                     {"value", saddle.value},
                     {"worst_violation", saddle.worst_violation},
                     {"theorem_bound", saddle.theorem_bound},
                     {"avg_cost", saddle.avg_cost}};
    if (grid_points > 0) {
      const RandomizedSaddle r = randomized_saddle_gap(spec, eps, grid_points);
      doc["randomized"] = {{"deterministic_value", r.deterministic_value},
                           {"randomized_value", r.randomized_value},
                           {"gap", r.gap}};
    }
  } catch (const CapacityError& e) {
    doc["enumeration"] = std::string("skipped: ") + e.what();
  }
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int cmd_report(const std::string& run_dir) {
  const fs::path dir(run_dir);
  const ExperimentConfig config = config_from_json(read_json(dir / "config.json"));
  const RunSummary summary = RunSummary::from_json(read_json(dir / "summary.json"));
  const MmdpSpec spec = resolve_bounds(build_environment(config.env), config.bounds);
  const PolicyReport report = emit_policy_report(spec, summary.policy, summary.z_eval, summary.eval_steps);
  json doc = report.to_json();
  doc["satisfied"] = summary.satisfied;
  std::cout << doc.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralised Q-learning with per-agent average-cost bounds"};
  app.require_subcommand(1);

  std::string config_path, output, hook, dir;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  double eps = -1.0;
  int grid_points = 0;

  auto* run = app.add_subcommand("run", "Learn, freeze and evaluate one configuration");
  run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", output, "Run directory (overrides the config)");
  run->add_option("--plot-hook", hook, "Command run as `<cmd> <trace.csv> <run-dir>` after the run");

  auto* sweep = app.add_subcommand("sweep", "Run every *.json config in a directory");
  sweep->add_option("config-dir", dir, "Directory of configs")->required()->check(CLI::ExistingDirectory);
  sweep->add_option("-j,--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  sweep->add_option("--plot-hook", hook, "Command run per finished run directory");

  auto* oracle = app.add_subcommand("oracle", "Exact evaluation, feasibility and saddle point");
  oracle->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  oracle->add_option("--eps", eps, "Truncation of the weight simplex (default eps_w / (1 + max degree))");
  oracle->add_option("--randomized-grid", grid_points, "Grid points for the randomised-policy search (0 = off)");

  auto* report = app.add_subcommand("report", "Exact vs empirical costs of a finished run");
  report->add_option("run-dir", dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, output, hook);
    if (*sweep) return cmd_sweep(dir, jobs, hook);
    if (*oracle) return cmd_oracle(config_path, eps, grid_points);
    if (*report) return cmd_report(dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
