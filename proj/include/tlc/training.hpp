#pragma once

// Two-stage learning: offline pretraining on transitions collected under
// fixed timetables, then online epsilon-greedy control with periodic updates
// drawn from the memory palace.

#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "tlc/mdp_env.hpp"
#include "tlc/qnet.hpp"
#include "tlc/replay.hpp"

namespace tlc::train {

using env::Action;
using sim::Phase;

struct Timetable {
  double ns_green = 20.0;  // s
  double we_green = 20.0;  // s
  Phase initial_phase = Phase::WE;

  void validate(double step_seconds) const;
  double cycle() const noexcept { return ns_green + we_green; }
};

// Phase the timetable prescribes at time t (seconds since it started).
Phase timetable_phase(const Timetable& tt, double t);

// Change exactly at the instants where the prescribed phase switches.
Action timetable_action(const Timetable& tt, double t);

struct TrainConfig {
  double step_seconds = 5.0;
  double update_interval = 300.0;  // s of simulated time between updates
  double gamma = 0.8;
  double epsilon = 0.05;
  std::size_t batch_size = 300;
  double offline_hours = 2.0;
  double total_hours = 20.0;
  nn::OptimizerConfig optimizer{nn::OptimizerKind::adam, 3e-4};
  std::size_t gradient_steps = 10;  // balanced batches drawn per update
  double reward_scale = 0.01;       // rewards are multiplied by this before forming targets
  std::size_t offline_epochs = 300;
  std::vector<Timetable> offline_timetables{{10, 10, Phase::WE}, {20, 20, Phase::WE}, {30, 30, Phase::WE},
                                            {20, 10, Phase::WE}, {10, 20, Phase::WE}};
  std::size_t palace_capacity = 1000;
  std::uint64_t seed = 42;

  void validate() const;
  std::size_t steps_per_update() const;
  std::size_t offline_steps() const;
  std::size_t online_steps() const;
};

struct StepRecord {
  std::size_t step = 0;        // global step index, offline steps first
  double sim_time = 0.0;       // clock at the start of the step
  bool online = false;
  Phase phase = Phase::WE;     // phase in force when the action was chosen
  Action action = Action::Keep;
  const env::StepResult* result = nullptr;
  std::optional<double> loss;  // set on update steps
  const qnet::PhaseGateQNet* net = nullptr;
};

using StepObserver = std::function<void(const StepRecord&)>;

struct OfflineResult {
  std::vector<replay::Experience> experiences;
  std::vector<double> losses;  // one per pretraining batch
  std::optional<double> holdout_loss_before;
  std::optional<double> holdout_loss_after;
};

struct OfflineOptions {
  double holdout_fraction = 0.0;  // share of samples excluded from pretraining
};

// Runs the environment under each timetable for an equal share of the
// offline hours, recording every transition, then pretrains `net` on them.
OfflineResult offline_pretrain(env::TrafficEnv& env, const std::vector<Timetable>& timetables,
                               const TrainConfig& cfg, qnet::PhaseGateQNet& net, const StepObserver& observer = {},
                               OfflineOptions options = {});

struct OnlineResult {
  std::size_t steps = 0;
  std::size_t updates = 0;
  std::vector<double> rewards;  // per step
  std::vector<double> losses;   // per update
  std::vector<std::size_t> update_steps;  // 1-based online step index of each update
};

// Epsilon-greedy control for `steps` steps (default: the online share of
// total_hours), storing every transition and updating every
// update_interval / step_seconds steps.
OnlineResult online_train(env::TrafficEnv& env, qnet::PhaseGateQNet& net, replay::ReplayPalace& palace,
                          const TrainConfig& cfg, const StepObserver& observer = {},
                          std::optional<std::size_t> steps = std::nullopt, std::size_t first_step_index = 0);

// One network update: balanced batch(es) from the palace, TD targets, one
// gradient step each. Returns the mean pre-update loss.
double update_from_palace(qnet::PhaseGateQNet& net, const replay::ReplayPalace& palace, const TrainConfig& cfg,
                          std::mt19937_64& rng);

}  // namespace tlc::train
