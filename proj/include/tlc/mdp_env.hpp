#pragma once

// Agent-facing view of the simulator: observations, actions and the weighted
// reward.

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "tlc/simcore.hpp"

namespace tlc::env {

using sim::kLaneCount;
using sim::Phase;

enum class Action : std::uint8_t { Keep = 0, Change = 1 };

std::string to_string(Action a);

using LaneVector = std::array<double, kLaneCount>;

struct GridSpec {
  double cell_size = 5.0;   // m
  double extent = 150.0;    // m of each approach that is rasterized
  std::size_t cells() const;
};

// Occupancy image: one row per lane (lane id order), column k covers
// [k * cell, (k + 1) * cell) upstream of the stop line.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> cells;

  std::uint8_t at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }
  std::size_t occupied() const;
  friend bool operator==(const Grid&, const Grid&) = default;
};

struct Observation {
  LaneVector queue{};
  LaneVector count{};
  LaneVector wait{};
  Phase current_phase = Phase::WE;
  Phase next_phase = Phase::NS;
  Grid grid;
  std::vector<double> latent;  // filled by the Q-network encoder on demand

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct RewardWeights {
  double delay = -0.25;        // beta1
  double wait = -0.25;         // beta2
  double queue = -0.25;        // beta3
  double change = -5.0;        // beta4
  double throughput = -1.0;    // beta5
  double travel_time = -1.0;   // beta6

  void validate() const;
  friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

struct RewardBreakdown {
  double sum_delay = 0.0;
  double sum_wait = 0.0;
  double sum_queue = 0.0;
  double change_flag = 0.0;
  double passed_count = 0.0;
  double passed_travel_time = 0.0;  // seconds
  double total = 0.0;
};

Grid rasterize_positions(const sim::SimState& state, const GridSpec& spec);
Grid rasterize_positions(const sim::Snapshot& snap, const GridSpec& spec);

double compute_delay(double avg_speed, double speed_limit);

// Fills breakdown.total from the six factors.
RewardBreakdown compute_reward(RewardBreakdown factors, const RewardWeights& weights);

struct EnvConfig {
  double step_seconds = 5.0;
  GridSpec grid{};
  RewardWeights weights{};
};

struct StepResult {
  Observation observation;
  RewardBreakdown reward;
  std::vector<sim::ExitEvent> exits;
  sim::Snapshot snapshot;  // post-step readings, reused by metric aggregation
};

// One intersection plus its arrival schedule, advanced in fixed steps.
class TrafficEnv {
 public:
  TrafficEnv(const sim::Layout& layout, sim::ArrivalSchedule schedule, EnvConfig cfg, std::uint64_t seed);

  Observation observe() const;

  // Applies the action at the start of the step, then spawns and advances.
  StepResult step(Action action);

  // Drives the signal from a time-indexed plan at simulator substep
  // resolution. Used by fixed-time plans whose boundaries are not multiples
  // of the agent step; change_flag is 1 if the phase switched during the step.
  StepResult step_with_plan(const std::function<Phase(double)>& phase_at);

  const sim::SimState& state() const noexcept { return state_; }
  sim::SimState& mutable_state() noexcept { return state_; }
  const EnvConfig& config() const noexcept { return cfg_; }
  const sim::ArrivalSchedule& schedule() const noexcept { return schedule_; }
  double clock() const noexcept { return state_.clock; }
  Phase phase() const noexcept { return state_.current_phase; }

 private:
  StepResult finish_step(std::vector<sim::ExitEvent> exits, bool changed);

  sim::SimState state_;
  sim::ArrivalSchedule schedule_;
  EnvConfig cfg_;
};

Observation observe(const sim::SimState& state, const sim::Snapshot& snap, const GridSpec& grid);

}  // namespace tlc::env
