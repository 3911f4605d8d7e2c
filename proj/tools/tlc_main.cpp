// tlc: train the phase-gated DQN controller, run fixed-plan baselines and
// compare the results.

#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "tlc/harness.hpp"

namespace fs = std::filesystem;
using namespace tlc;

namespace {

struct Overrides {
  std::optional<double> total_hours;
  std::optional<double> offline_hours;
};

harness::RunConfig resolve_config(const std::string& path, const Overrides& o) {
  harness::RunConfig cfg = path.empty() ? harness::RunConfig{} : harness::load_config(path);
  if (o.offline_hours) cfg.training.offline_hours = *o.offline_hours;
  return cfg;
}

harness::ScenarioSpec resolve_scenario(const std::string& name, const Overrides& o) {
  auto s = harness::load_scenario(name);
  if (o.total_hours) s.total_hours = *o.total_hours;
  return s;
}

void print_headline(const harness::MetricsReport& r) {
  const auto h = r.headline();
  std::cout << r.controller << " " << r.scenario << " seed " << r.seed << " (hours " << r.eval_start_hour << "-"
            << r.total_hours << "): wait " << h.wait_s << " s, travel " << h.travel_s << " s, queue " << h.queue
            << ", reward " << h.reward << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive traffic-light control with a phase-gated deep Q-network"};
  app.require_subcommand(1);

  std::string scenario = "balanced";
  std::uint64_t seed = 42;
  std::string config_path;
  std::string out_dir;
  Overrides overrides;

  auto* train_cmd = app.add_subcommand("train", "offline pretraining + online training on a scenario");
  train_cmd->add_option("--scenario", scenario, "built-in scenario name or JSON scenario file")->required();
  train_cmd->add_option("--seed", seed, "random seed");
  train_cmd->add_option("--config", config_path, "JSON run configuration");
  train_cmd->add_option("--out", out_dir, "run output directory")->required();
  train_cmd->add_option("--total-hours", overrides.total_hours, "override the scenario horizon");
  train_cmd->add_option("--offline-hours", overrides.offline_hours, "override the offline pretraining hours");

  auto* base_cmd = app.add_subcommand("baseline", "run the scenario's fixed signal plan");
  base_cmd->add_option("--scenario", scenario, "built-in scenario name or JSON scenario file")->required();
  base_cmd->add_option("--seed", seed, "random seed");
  base_cmd->add_option("--config", config_path, "JSON run configuration");
  base_cmd->add_option("--out", out_dir, "run output directory")->required();
  std::string plan_name;
  base_cmd->add_option("--plan", plan_name, "built-in plan to use (defaults to the scenario's own)");
  base_cmd->add_option("--total-hours", overrides.total_hours, "override the scenario horizon");
  base_cmd->add_option("--offline-hours", overrides.offline_hours, "hours excluded from the headline window");

  std::string run_dir;
  auto* report_cmd = app.add_subcommand("report", "print the hourly metrics of a run");
  report_cmd->add_option("--run", run_dir, "run directory")->required();

  std::string rl_dir, fixed_dir;
  bool csv = false;
  auto* compare_cmd = app.add_subcommand("compare", "percent change of an RL run against a fixed-plan run");
  compare_cmd->add_option("--rl", rl_dir, "RL run directory")->required();
  compare_cmd->add_option("--fixed", fixed_dir, "fixed-plan run directory")->required();
  compare_cmd->add_flag("--csv", csv, "emit CSV instead of a table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const auto cfg = resolve_config(config_path, overrides);
      const auto spec = resolve_scenario(scenario, overrides);
      const fs::path out(out_dir);
      auto run = harness::run_rl(spec, cfg, seed, out / "checkpoints");
      harness::write_run(out, run.report, run.steps);
      print_headline(run.report);
    } else if (*base_cmd) {
      const auto cfg = resolve_config(config_path, overrides);
      const auto spec = resolve_scenario(scenario, overrides);
      const auto plan = harness::fixed_plan_for(plan_name.empty() ? spec.name : plan_name);
      const auto report = harness::run_fixed_baseline(spec, plan, seed, cfg);
      harness::write_run(out_dir, report);
      print_headline(report);
    } else if (*report_cmd) {
      std::cout << harness::format_report(run_dir);
    } else if (*compare_cmd) {
      const auto c = harness::compare_runs(rl_dir, fixed_dir);
      std::cout << (csv ? c.to_csv() : c.to_table());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
