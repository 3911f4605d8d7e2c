#include "tlc/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tlc::train {

namespace {

bool is_multiple(double value, double step) {
  const double k = value / step;
  return std::abs(k - std::round(k)) < 1e-9;
}

constexpr std::uint64_t kOfflineStream = 0x0ff1;
constexpr std::uint64_t kOnlineStream = 0x0a11;

}  // namespace

void Timetable::validate(double step_seconds) const {
  if (!(ns_green > 0.0) || !(we_green > 0.0)) throw InvalidArgument("timetable durations must be positive");
  if (!is_multiple(ns_green, step_seconds) || !is_multiple(we_green, step_seconds)) {
    throw InvalidArgument("timetable durations must be multiples of the step length");
  }
}

Phase timetable_phase(const Timetable& tt, double t) {
  if (!(t >= 0.0)) throw InvalidArgument("timetable time must be >= 0");
  const double first = tt.initial_phase == Phase::WE ? tt.we_green : tt.ns_green;
  // Small tolerance so integral boundaries land on the new phase.
  const double r = std::fmod(t + 1e-9, tt.cycle());
  return r < first ? tt.initial_phase : sim::next(tt.initial_phase);
}

Action timetable_action(const Timetable& tt, double t) {
  if (!(t >= 0.0)) throw InvalidArgument("timetable time must be >= 0");
  if (t == 0.0) return Action::Keep;
  const double first = tt.initial_phase == Phase::WE ? tt.we_green : tt.ns_green;
  const double r = std::fmod(t, tt.cycle());
  const bool boundary = std::abs(r) < 1e-9 || std::abs(r - tt.cycle()) < 1e-9 || std::abs(r - first) < 1e-9;
  return boundary ? Action::Change : Action::Keep;
}

void TrainConfig::validate() const {
  if (!(step_seconds > 0.0)) throw InvalidArgument("step length must be positive");
  if (!(update_interval > 0.0) || !is_multiple(update_interval, step_seconds)) {
    throw InvalidArgument("update interval must be a positive multiple of the step length");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in [0, 1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidArgument("epsilon must lie in [0, 1]");
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (!(offline_hours >= 0.0) || !(offline_hours < total_hours)) {
    throw InvalidArgument("offline hours must satisfy 0 <= offline < total");
  }
  if (!is_multiple(offline_hours * 3600.0, step_seconds) || !is_multiple(total_hours * 3600.0, step_seconds)) {
    throw InvalidArgument("horizons must be whole numbers of steps");
  }
  if (gradient_steps == 0) throw InvalidArgument("gradient steps per update must be positive");
  if (!(reward_scale > 0.0) || !std::isfinite(reward_scale)) throw InvalidArgument("reward scale must be positive");
  if (palace_capacity == 0) throw InvalidArgument("palace capacity must be positive");
  optimizer.validate();
  for (const auto& tt : offline_timetables) tt.validate(step_seconds);
}

std::size_t TrainConfig::steps_per_update() const {
  return static_cast<std::size_t>(std::llround(update_interval / step_seconds));
}

std::size_t TrainConfig::offline_steps() const {
  return static_cast<std::size_t>(std::llround(offline_hours * 3600.0 / step_seconds));
}

std::size_t TrainConfig::online_steps() const {
  return static_cast<std::size_t>(std::llround((total_hours - offline_hours) * 3600.0 / step_seconds));
}

double update_from_palace(qnet::PhaseGateQNet& net, const replay::ReplayPalace& palace, const TrainConfig& cfg,
                          std::mt19937_64& rng) {
  double loss = 0.0;
  for (std::size_t g = 0; g < cfg.gradient_steps; ++g) {
    auto batch = palace.sample_balanced(cfg.batch_size, rng);
    if (cfg.reward_scale != 1.0) {
      for (auto& e : batch) e.reward *= cfg.reward_scale;
    }
    const auto targets = qnet::td_targets(batch, net, cfg.gamma);
    loss += qnet::train_batch(net, batch, targets, cfg.optimizer);
  }
  return loss / static_cast<double>(cfg.gradient_steps);
}

namespace {

double holdout_loss(const qnet::PhaseGateQNet& net, const std::vector<replay::Experience>& samples,
                    const TrainConfig& cfg) {
  auto scaled = samples;
  for (auto& e : scaled) e.reward *= cfg.reward_scale;
  const auto targets = qnet::td_targets(scaled, net, cfg.gamma);
  return qnet::batch_loss(net, scaled, targets);
}

}  // namespace

OfflineResult offline_pretrain(env::TrafficEnv& env, const std::vector<Timetable>& timetables,
                               const TrainConfig& cfg, qnet::PhaseGateQNet& net, const StepObserver& observer,
                               OfflineOptions options) {
  if (timetables.empty()) throw InvalidArgument("offline pretraining needs at least one timetable");
  cfg.validate();
  for (const auto& tt : timetables) tt.validate(cfg.step_seconds);
  if (!(options.holdout_fraction >= 0.0 && options.holdout_fraction < 1.0)) {
    throw InvalidArgument("holdout fraction must lie in [0, 1)");
  }

  OfflineResult result;
  const std::size_t total = cfg.offline_steps();
  const std::size_t share = total / timetables.size();
  result.experiences.reserve(total);

  auto obs = env.observe();
  std::size_t segment = 0;
  std::size_t segment_start = 0;
  for (std::size_t step = 0; step < total; ++step) {
    if (segment + 1 < timetables.size() && step == segment_start + share) {
      ++segment;
      segment_start = step;
    }
    const auto& tt = timetables[segment];
    const double t = static_cast<double>(step - segment_start) * cfg.step_seconds;
    // Within a segment this equals timetable_action; at segment starts it
    // also aligns the light with the new timetable's initial phase.
    const Action action = timetable_phase(tt, t) != env.phase() ? Action::Change : Action::Keep;
    const Phase phase = env.phase();
    const double clock = env.clock();
    auto res = env.step(action);
    result.experiences.push_back(replay::Experience{obs, action, res.reward.total, res.observation, phase});
    if (observer) observer(StepRecord{step, clock, false, phase, action, &res, std::nullopt, &net});
    obs = std::move(res.observation);
  }

  std::mt19937_64 rng(cfg.seed ^ kOfflineStream);
  std::vector<std::size_t> order(result.experiences.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<replay::Experience> holdout;
  std::size_t n_holdout = static_cast<std::size_t>(std::floor(options.holdout_fraction * order.size()));
  if (n_holdout > 0) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n_holdout; ++i) holdout.push_back(result.experiences[order[i]]);
    result.holdout_loss_before = holdout_loss(net, holdout, cfg);
  }
  const std::size_t n_train = order.size() - n_holdout;
  if (n_train == 0) return result;

  // Sized to keep every pretraining sample.
  replay::ReplayPalace palace(std::max(cfg.palace_capacity, n_train));
  std::vector<std::size_t> train_ids(order.begin() + static_cast<std::ptrdiff_t>(n_holdout), order.end());
  std::sort(train_ids.begin(), train_ids.end());
  for (auto i : train_ids) palace.store(result.experiences[i]);

  const std::size_t batches_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  for (std::size_t epoch = 0; epoch < cfg.offline_epochs; ++epoch) {
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      result.losses.push_back(update_from_palace(net, palace, cfg, rng));
    }
  }
  if (!holdout.empty()) result.holdout_loss_after = holdout_loss(net, holdout, cfg);
  return result;
}

OnlineResult online_train(env::TrafficEnv& env, qnet::PhaseGateQNet& net, replay::ReplayPalace& palace,
                          const TrainConfig& cfg, const StepObserver& observer, std::optional<std::size_t> steps,
                          std::size_t first_step_index) {
  cfg.validate();
  const std::size_t n_steps = steps.value_or(cfg.online_steps());
  const std::size_t every = cfg.steps_per_update();
  std::mt19937_64 rng(cfg.seed ^ kOnlineStream);

  OnlineResult result;
  result.rewards.reserve(n_steps);
  auto obs = env.observe();
  for (std::size_t k = 1; k <= n_steps; ++k) {
    const Phase phase = env.phase();
    const double clock = env.clock();
    const Action action = qnet::epsilon_greedy(net.q_values(obs), cfg.epsilon, rng);
    auto res = env.step(action);
    palace.store(replay::Experience{obs, action, res.reward.total, res.observation, phase});
    result.rewards.push_back(res.reward.total);

    std::optional<double> loss;
    if (k % every == 0) {
      // The palace always holds this step's transition here.
      loss = update_from_palace(net, palace, cfg, rng);
      result.losses.push_back(*loss);
      result.update_steps.push_back(k);
      ++result.updates;
    }
    if (observer) observer(StepRecord{first_step_index + k - 1, clock, true, phase, action, &res, loss, &net});
    obs = std::move(res.observation);
    ++result.steps;
  }
  return result;
}

}  // namespace tlc::train
