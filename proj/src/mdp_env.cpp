#include "tlc/mdp_env.hpp"

#include <algorithm>
#include <cmath>

#include "tlc/error.hpp"

namespace tlc::env {

std::string to_string(Action a) { return a == Action::Keep ? "keep" : "change"; }

std::size_t GridSpec::cells() const {
  if (!(cell_size > 0.0) || !(extent > 0.0)) throw InvalidArgument("grid cell size and extent must be positive");
  return static_cast<std::size_t>(std::ceil(extent / cell_size - 1e-9));
}

std::size_t Grid::occupied() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

Grid rasterize_positions(const sim::Snapshot& snap, const GridSpec& spec) {
  Grid g;
  g.rows = kLaneCount;
  g.cols = spec.cells();
  g.cells.assign(g.rows * g.cols, 0);
  for (const auto& [lane, pos] : snap.positions) {
    const auto k = static_cast<std::size_t>(std::floor(std::max(pos, 0.0) / spec.cell_size));
    if (k < g.cols) g.cells[lane * g.cols + k] = 1;
  }
  return g;
}

Grid rasterize_positions(const sim::SimState& state, const GridSpec& spec) {
  return rasterize_positions(sim::lane_snapshot(state), spec);
}

double compute_delay(double avg_speed, double speed_limit) {
  if (!(speed_limit > 0.0)) throw InvalidArgument("speed limit must be positive");
  return 1.0 - std::clamp(avg_speed, 0.0, speed_limit) / speed_limit;
}

void RewardWeights::validate() const {
  for (double b : {delay, wait, queue, change, throughput, travel_time}) {
    if (!std::isfinite(b)) throw InvalidArgument("reward weights must be finite");
  }
}

RewardBreakdown compute_reward(RewardBreakdown f, const RewardWeights& w) {
  f.total = w.delay * f.sum_delay + w.wait * f.sum_wait + w.queue * f.sum_queue + w.change * f.change_flag +
            w.throughput * f.passed_count + w.travel_time * f.passed_travel_time;
  return f;
}

Observation observe(const sim::SimState& state, const sim::Snapshot& snap, const GridSpec& grid) {
  Observation obs;
  for (std::size_t i = 0; i < kLaneCount; ++i) {
    obs.queue[i] = snap.lanes[i].queue;
    obs.count[i] = snap.lanes[i].count;
    obs.wait[i] = snap.lanes[i].wait;
  }
  obs.current_phase = state.current_phase;
  obs.next_phase = sim::next(state.current_phase);
  obs.grid = rasterize_positions(snap, grid);
  return obs;
}

TrafficEnv::TrafficEnv(const sim::Layout& layout, sim::ArrivalSchedule schedule, EnvConfig cfg, std::uint64_t seed)
    : state_(sim::build_intersection(layout, seed)), schedule_(std::move(schedule)), cfg_(cfg) {
  schedule_.validate();
  cfg_.weights.validate();
  if (!(cfg_.step_seconds > 0.0)) throw InvalidArgument("step length must be positive");
  cfg_.grid.cells();
}

Observation TrafficEnv::observe() const { return env::observe(state_, sim::lane_snapshot(state_), cfg_.grid); }

StepResult TrafficEnv::finish_step(std::vector<sim::ExitEvent> exits, bool changed) {
  StepResult r;
  r.snapshot = sim::lane_snapshot(state_);
  RewardBreakdown f;
  for (const auto& lane : r.snapshot.lanes) {
    f.sum_delay += compute_delay(lane.avg_speed, lane.speed_limit);
    f.sum_wait += lane.wait;
    f.sum_queue += lane.queue;
  }
  f.change_flag = changed ? 1.0 : 0.0;
  f.passed_count = static_cast<double>(exits.size());
  for (const auto& e : exits) f.passed_travel_time += e.travel_time();
  r.reward = compute_reward(f, cfg_.weights);
  r.observation = env::observe(state_, r.snapshot, cfg_.grid);
  r.exits = std::move(exits);
  return r;
}

StepResult TrafficEnv::step(Action action) {
  const bool changed = action == Action::Change;
  const Phase green = changed ? sim::next(state_.current_phase) : state_.current_phase;
  sim::spawn_arrivals(state_, schedule_, cfg_.step_seconds);
  auto exits = sim::advance(state_, green, cfg_.step_seconds);
  return finish_step(std::move(exits), changed);
}

StepResult TrafficEnv::step_with_plan(const std::function<Phase(double)>& phase_at) {
  sim::spawn_arrivals(state_, schedule_, cfg_.step_seconds);
  const double end = state_.clock + cfg_.step_seconds;
  bool changed = false;
  std::vector<sim::ExitEvent> exits;
  while (state_.clock < end - 1e-9) {
    const double chunk = std::min(state_.substep, end - state_.clock);
    const Phase green = phase_at(state_.clock);
    if (green != state_.current_phase) changed = true;
    auto part = sim::advance(state_, green, chunk);
    exits.insert(exits.end(), part.begin(), part.end());
  }
  return finish_step(std::move(exits), changed);
}

}  // namespace tlc::env
