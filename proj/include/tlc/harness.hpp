#pragma once

// Experiment definitions, fixed-plan baselines, hourly metrics and
// comparison reports.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tlc/mdp_env.hpp"
#include "tlc/qnet.hpp"
#include "tlc/training.hpp"

namespace tlc::harness {

using sim::Phase;

// One row of an experiment design: a rate applied to both approaches of an
// axis ("WE" -> E and W, "NS" -> N and S) or to a single approach.
struct FlowRow {
  std::string directions;  // "WE", "NS", "N", "S", "E" or "W"
  double rate = 0.0;       // veh/h per approach
  double start = 0.0;      // h
  double end = 0.0;        // h
  friend bool operator==(const FlowRow&, const FlowRow&) = default;
};

struct ScenarioSpec {
  std::string name;
  std::vector<FlowRow> flows;
  double total_hours = 20.0;

  sim::ArrivalSchedule schedule() const;
  void validate() const;
};

const std::vector<std::string>& builtin_scenarios();

// Built-in name or path to a JSON scenario file:
//   {"name": "...", "total_hours": 20,
//    "flows": [{"directions": "WE", "rate": 720, "start": 0, "end": 20}, ...]}
ScenarioSpec load_scenario(const std::string& name_or_path);

struct FixedPlan {
  double we_green = 0.0;  // s
  double ns_green = 0.0;  // s
  double cycle = 0.0;     // s

  void validate() const;
  // WE green first, then NS, repeating.
  Phase phase_at(double t) const;
};

FixedPlan fixed_plan_for(const std::string& scenario);

struct SimConfig {
  double lane_length = 150.0;
  double speed_limit = 14.0;
  double min_spacing = 7.5;
  double saturation_headway = 2.0;
  double substep = 1.0;
  Phase initial_phase = Phase::WE;

  sim::Layout layout() const;
};

struct RunConfig {
  SimConfig sim{};
  env::EnvConfig env{};
  qnet::QNetConfig network{};
  train::TrainConfig training{};

  void validate() const;
};

// JSON file with optional sections "simulator", "environment", "reward",
// "network", "training"; absent keys keep their defaults.
RunConfig load_config(const std::string& path);
RunConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const RunConfig& cfg);

struct HourRow {
  std::size_t hour = 0;
  std::size_t steps = 0;
  double reward_sum = 0.0;
  double wait_sum = 0.0;       // sum over steps of total wait in the network
  double vehicle_steps = 0.0;  // sum over steps of vehicles in the network
  double queue_sum = 0.0;      // sum over steps and lanes of queue length
  double lane_steps = 0.0;
  double travel_sum = 0.0;     // over vehicles that exited this hour
  std::size_t completed = 0;

  double wait() const;
  double travel() const;
  double queue() const;
  double reward() const;
};

struct MetricSummary {
  double wait_s = 0.0;
  double travel_s = 0.0;
  double queue = 0.0;
  double reward = 0.0;
  std::size_t completed = 0;
};

struct MetricsReport {
  std::string scenario;
  std::string controller;  // "rl" or "fixed"
  std::uint64_t seed = 0;
  double total_hours = 0.0;
  double eval_start_hour = 0.0;  // headline window is [eval_start_hour, total_hours)
  std::vector<HourRow> rows;
  std::size_t stragglers = 0;    // vehicles still inside or waiting to enter at the horizon
  std::uint64_t entered = 0;
  std::uint64_t exited = 0;

  MetricSummary summary(double from_hour, double to_hour) const;
  MetricSummary headline() const { return summary(eval_start_hour, total_hours); }
};

// Hourly aggregation of step results.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(double total_hours);
  void add(double step_start_clock, const env::StepResult& step);
  const std::vector<HourRow>& rows() const noexcept { return rows_; }

 private:
  std::vector<HourRow> rows_;
};

struct StepLogRow {
  std::size_t step = 0;
  double sim_time = 0.0;
  Phase phase = Phase::WE;
  env::Action action = env::Action::Keep;
  double reward = 0.0;
  std::optional<double> loss;
};

MetricsReport run_fixed_baseline(const ScenarioSpec& scenario, const FixedPlan& plan, std::uint64_t seed,
                                 const RunConfig& cfg = {});

struct RlRun {
  MetricsReport report;
  std::vector<StepLogRow> steps;
  qnet::PhaseGateQNet net;
  train::OfflineResult offline;
  train::OnlineResult online;
};

// Offline pretraining for the first offline_hours, online training for the
// rest. Checkpoints go to checkpoint_dir (if given) after pretraining and at
// every online hour boundary.
RlRun run_rl(const ScenarioSpec& scenario, const RunConfig& cfg, std::uint64_t seed,
             const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

struct MetricComparison {
  std::string metric;
  double fixed = 0.0;
  double rl = 0.0;
  double percent_change = 0.0;
};

struct Comparison {
  std::string scenario;
  std::vector<MetricComparison> metrics;  // wait_s, travel_s, queue, reward

  std::string to_csv() const;
  std::string to_table() const;
};

// (rl - fixed) / |fixed| * 100; 0 when both are 0.
double percent_change(double fixed, double rl);

Comparison compare(const MetricsReport& rl, const MetricsReport& fixed);
Comparison compare(const std::string& scenario, const MetricSummary& rl, const MetricSummary& fixed);

// Run directory layout: metrics.csv, steps.csv, summary.txt, checkpoints/.
inline constexpr const char* kMetricsHeader = "hour,wait_s,travel_s,queue,reward";

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);
void write_steps_csv(const std::filesystem::path& path, const std::vector<StepLogRow>& rows);
void write_summary(const std::filesystem::path& path, const MetricsReport& report);
void write_run(const std::filesystem::path& dir, const MetricsReport& report,
               const std::vector<StepLogRow>& steps = {});

struct RunSummary {
  std::string scenario;
  std::string controller;
  std::uint64_t seed = 0;
  double total_hours = 0.0;
  double eval_start_hour = 0.0;
  MetricSummary headline;
  std::size_t stragglers = 0;
};

RunSummary read_summary(const std::filesystem::path& dir);
Comparison compare_runs(const std::filesystem::path& rl_dir, const std::filesystem::path& fixed_dir);
std::string format_report(const std::filesystem::path& dir);

}  // namespace tlc::harness
