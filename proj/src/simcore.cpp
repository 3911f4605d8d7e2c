#include "tlc/simcore.hpp"

#include <algorithm>
#include <cmath>

#include "tlc/error.hpp"

namespace tlc::sim {

std::string to_string(Phase p) { return p == Phase::NS ? "NS" : "WE"; }

Phase phase_from_string(const std::string& s) {
  if (s == "NS") return Phase::NS;
  if (s == "WE") return Phase::WE;
  throw InvalidArgument("unknown phase '" + s + "'");
}

std::string to_string(Direction d) {
  switch (d) {
    case Direction::N: return "N";
    case Direction::S: return "S";
    case Direction::E: return "E";
    case Direction::W: return "W";
  }
  return "?";
}

Direction direction_from_string(const std::string& s) {
  if (s == "N") return Direction::N;
  if (s == "S") return Direction::S;
  if (s == "E") return Direction::E;
  if (s == "W") return Direction::W;
  throw InvalidArgument("unknown direction '" + s + "'");
}

Layout Layout::uniform(double length, double speed_limit) {
  Layout layout;
  for (auto& lane : layout.lanes) lane = LaneGeometry{length, speed_limit};
  return layout;
}

std::size_t Lane::capacity(double spacing) const {
  return static_cast<std::size_t>(std::floor(length / spacing + 1e-9)) + 1;
}

std::size_t SimState::vehicles_inside() const {
  std::size_t n = 0;
  for (const auto& lane : lanes) n += lane.vehicles.size();
  return n;
}

std::size_t SimState::deferred_total() const {
  std::size_t n = 0;
  for (const auto& lane : lanes) n += lane.deferred;
  return n;
}

void ArrivalSchedule::validate() const {
  for (const auto& e : entries) {
    if (!(e.rate >= 0.0) || !std::isfinite(e.rate)) {
      throw InvalidArgument("arrival rate must be finite and >= 0");
    }
    if (!(e.start < e.end)) {
      throw InvalidArgument("arrival window must satisfy start < end");
    }
  }
}

double ArrivalSchedule::rate_at(Direction d, double t) const {
  const double hours = t / 3600.0;
  double rate = 0.0;
  for (const auto& e : entries) {
    if (e.direction == d && e.start <= hours && hours < e.end) rate += e.rate;
  }
  return rate;
}

SimState build_intersection(const Layout& layout, std::uint64_t seed) {
  if (!(layout.min_spacing > 0.0) || !(layout.saturation_headway > 0.0) || !(layout.substep > 0.0)) {
    throw InvalidArgument("spacing, saturation headway and substep must be positive");
  }
  SimState state;
  state.current_phase = layout.initial_phase;
  state.min_spacing = layout.min_spacing;
  state.saturation_headway = layout.saturation_headway;
  state.substep = layout.substep;
  state.rng.seed(seed);
  for (std::size_t i = 0; i < kLaneCount; ++i) {
    const auto& geom = layout.lanes[i];
    if (!(geom.length > 0.0) || !(geom.speed_limit > 0.0)) {
      throw InvalidArgument("lane " + std::to_string(i) + ": length and speed limit must be positive");
    }
    if (geom.length < layout.min_spacing) {
      throw InvalidArgument("lane " + std::to_string(i) + " is shorter than one vehicle spacing");
    }
    auto& lane = state.lanes[i];
    lane.direction = lane_direction(i);
    lane.index = i % kLanesPerDirection;
    lane.length = geom.length;
    lane.speed_limit = geom.speed_limit;
  }
  return state;
}

namespace {

bool entrance_free(const Lane& lane, double spacing) {
  return lane.vehicles.empty() || lane.vehicles.back().position <= lane.length - spacing;
}

void place_vehicle(SimState& state, std::size_t lane_index) {
  auto& lane = state.lanes[lane_index];
  Vehicle v;
  v.id = state.next_vehicle_id++;
  v.lane = lane_index;
  v.position = lane.length;
  v.speed = lane.speed_limit;
  v.entry_time = state.clock;
  lane.vehicles.push_back(v);
  ++state.entered_total;
}

}  // namespace

SpawnResult spawn_arrivals(SimState& state, const ArrivalSchedule& schedule, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  SpawnResult result;

  // Earlier deferrals go first so lane order stays first-come first-served.
  for (std::size_t i = 0; i < kLaneCount; ++i) {
    auto& lane = state.lanes[i];
    if (lane.deferred > 0 && entrance_free(lane, state.min_spacing)) {
      place_vehicle(state, i);
      --lane.deferred;
      ++result.entered;
    }
  }

  for (std::size_t d = 0; d < kDirections; ++d) {
    const auto dir = static_cast<Direction>(d);
    const double rate = schedule.rate_at(dir, state.clock);
    if (rate <= 0.0) continue;
    std::poisson_distribution<std::size_t> draw(rate * dt / 3600.0);
    const std::size_t n = draw(state.rng);
    result.arrived += n;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t lane_index = lane_id(dir, state.round_robin[d]);
      state.round_robin[d] = (state.round_robin[d] + 1) % kLanesPerDirection;
      auto& lane = state.lanes[lane_index];
      if (lane.deferred == 0 && entrance_free(lane, state.min_spacing)) {
        place_vehicle(state, lane_index);
        ++result.entered;
      } else {
        ++lane.deferred;
      }
    }
  }
  result.deferred = state.deferred_total();
  return result;
}

namespace {

void advance_lane(SimState& state, std::size_t lane_index, bool green, double h, double t0,
                  std::vector<ExitEvent>& exits) {
  auto& lane = state.lanes[lane_index];
  const double t1 = t0 + h;
  if (green) {
    lane.discharge_credit += h / state.saturation_headway;
  } else {
    lane.discharge_credit = 0.0;
  }

  std::size_t i = 0;
  while (i < lane.vehicles.size()) {
    auto& v = lane.vehicles[i];
    const double limit = i == 0 ? 0.0 : lane.vehicles[i - 1].position + state.min_spacing;
    const double target = std::min(v.position, std::max(limit, v.position - lane.speed_limit * h));
    const double moved = v.position - target;
    v.position = target;

    if (i == 0 && green && v.position <= 0.0 && lane.discharge_credit >= 1.0) {
      lane.discharge_credit -= 1.0;
      exits.push_back(ExitEvent{v.id, lane_index, v.entry_time, t1});
      lane.vehicles.pop_front();
      ++state.exited_total;
      continue;
    }

    v.speed = moved / h;
    if (v.stopped()) {
      if (!v.last_stop_time) v.last_stop_time = t0;
    } else {
      v.last_stop_time.reset();
    }
    ++i;
  }

  // Unused green time is not banked beyond one vehicle.
  if (green && (lane.vehicles.empty() || lane.vehicles.front().position > 0.0)) {
    lane.discharge_credit = std::min(lane.discharge_credit, 1.0);
  }
}

}  // namespace

std::vector<ExitEvent> advance(SimState& state, Phase green, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (green != state.current_phase) {
    state.current_phase = green;
    state.phase_elapsed = 0.0;
  }

  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(dt / state.substep - 1e-9)));
  const double h = dt / static_cast<double>(n);
  std::vector<ExitEvent> exits;
  for (std::size_t s = 0; s < n; ++s) {
    const double t0 = state.clock;
    for (std::size_t i = 0; i < kLaneCount; ++i) {
      advance_lane(state, i, serves(green, state.lanes[i].direction), h, t0, exits);
    }
    state.clock = t0 + h;
    state.phase_elapsed += h;
  }
  return exits;
}

Snapshot lane_snapshot(const SimState& state) {
  Snapshot snap;
  snap.clock = state.clock;
  for (std::size_t i = 0; i < kLaneCount; ++i) {
    const auto& lane = state.lanes[i];
    auto& r = snap.lanes[i];
    r.speed_limit = lane.speed_limit;
    r.count = static_cast<double>(lane.vehicles.size());
    double speed_sum = 0.0;
    for (const auto& v : lane.vehicles) {
      if (v.speed == 0.0) r.queue += 1.0;
      if (v.stopped() && v.last_stop_time) r.wait += state.clock - *v.last_stop_time;
      speed_sum += v.speed;
      snap.positions.emplace_back(i, v.position);
    }
    r.avg_speed = lane.vehicles.empty() ? lane.speed_limit : speed_sum / r.count;
  }
  return snap;
}

}  // namespace tlc::sim
