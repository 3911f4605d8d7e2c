#pragma once

// Single-intersection point-queue microsimulator.
//
// Four approaches (N, S, E, W) with three lanes each. Vehicles enter at the
// upstream end of a lane, travel toward the stop line at the speed limit,
// stack behind the vehicle ahead at a fixed spacing and leave the network
// from the stop line at the saturation headway while their approach has
// green.

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tlc/error.hpp"

namespace tlc::sim {

enum class Phase : std::uint8_t { NS = 0, WE = 1 };

constexpr Phase next(Phase p) noexcept { return p == Phase::NS ? Phase::WE : Phase::NS; }
std::string to_string(Phase p);
Phase phase_from_string(const std::string& s);

enum class Direction : std::uint8_t { N = 0, S = 1, E = 2, W = 3 };

inline constexpr std::size_t kDirections = 4;
inline constexpr std::size_t kLanesPerDirection = 3;
inline constexpr std::size_t kLaneCount = kDirections * kLanesPerDirection;

std::string to_string(Direction d);
Direction direction_from_string(const std::string& s);

// Lane ids are direction-major: id = 3 * direction + index, where index 0 is
// the rightmost lane (right + straight), 1 the middle lane (straight) and 2
// the leftmost lane (left turn).
constexpr std::size_t lane_id(Direction d, std::size_t index) noexcept {
  return static_cast<std::size_t>(d) * kLanesPerDirection + index;
}
constexpr Direction lane_direction(std::size_t lane) noexcept {
  return static_cast<Direction>(lane / kLanesPerDirection);
}

// Every movement of an approach (including right turns) follows its phase.
constexpr bool serves(Phase p, Direction d) noexcept {
  const bool ns = d == Direction::N || d == Direction::S;
  return (p == Phase::NS) == ns;
}

inline constexpr double kStoppedSpeed = 0.1;  // m/s

struct Vehicle {
  std::int64_t id = 0;
  std::size_t lane = 0;
  double position = 0.0;  // meters upstream of the stop line
  double speed = 0.0;     // m/s
  double entry_time = 0.0;
  std::optional<double> last_stop_time;
  bool exited = false;

  bool stopped() const noexcept { return speed < kStoppedSpeed; }
};

struct LaneGeometry {
  double length = 150.0;      // m
  double speed_limit = 14.0;  // m/s
};

struct Layout {
  std::array<LaneGeometry, kLaneCount> lanes{};
  double min_spacing = 7.5;          // m, vehicle length plus gap
  double saturation_headway = 2.0;   // s per vehicle per lane
  double substep = 1.0;              // s, internal integration step
  Phase initial_phase = Phase::WE;

  static Layout uniform(double length, double speed_limit);
};

struct Lane {
  Direction direction = Direction::N;
  std::size_t index = 0;
  double length = 0.0;
  double speed_limit = 0.0;
  std::deque<Vehicle> vehicles;  // ascending position, head first
  double discharge_credit = 0.0;
  std::size_t deferred = 0;  // arrivals waiting for room at the entrance

  // Point vehicles from the stop line to the entrance, inclusive.
  std::size_t capacity(double spacing) const;
};

struct SimState {
  double clock = 0.0;
  std::array<Lane, kLaneCount> lanes{};
  Phase current_phase = Phase::WE;
  double phase_elapsed = 0.0;
  std::uint64_t entered_total = 0;
  std::uint64_t exited_total = 0;
  std::int64_t next_vehicle_id = 0;
  std::array<std::size_t, kDirections> round_robin{};
  double min_spacing = 7.5;
  double saturation_headway = 2.0;
  double substep = 1.0;
  std::mt19937_64 rng;

  std::size_t vehicles_inside() const;
  std::size_t deferred_total() const;
};

struct ArrivalEntry {
  Direction direction = Direction::N;
  double rate = 0.0;   // vehicles per hour
  double start = 0.0;  // hours
  double end = 0.0;    // hours
};

struct ArrivalSchedule {
  std::vector<ArrivalEntry> entries;

  void validate() const;
  // Total hourly rate for a direction at simulation time t (seconds).
  double rate_at(Direction d, double t) const;
};

struct SpawnResult {
  std::size_t arrived = 0;   // Poisson draws this call
  std::size_t entered = 0;   // vehicles placed into lanes (incl. earlier deferrals)
  std::size_t deferred = 0;  // vehicles still waiting at the entrances afterwards
};

struct ExitEvent {
  std::int64_t vehicle_id = 0;
  std::size_t lane = 0;
  double entry_time = 0.0;
  double exit_time = 0.0;

  double travel_time() const noexcept { return exit_time - entry_time; }
};

struct LaneReading {
  double queue = 0.0;    // vehicles with speed exactly 0
  double count = 0.0;    // vehicles in the lane
  double wait = 0.0;     // seconds, summed over stopped vehicles
  double avg_speed = 0.0;
  double speed_limit = 0.0;
};

struct Snapshot {
  double clock = 0.0;
  std::array<LaneReading, kLaneCount> lanes{};
  // (lane, position) for every vehicle in the network.
  std::vector<std::pair<std::size_t, double>> positions;
};

SimState build_intersection(const Layout& layout, std::uint64_t seed);

SpawnResult spawn_arrivals(SimState& state, const ArrivalSchedule& schedule, double dt);

// Switches to `green` if it differs from the current phase, then integrates
// the lane dynamics over dt seconds.
std::vector<ExitEvent> advance(SimState& state, Phase green, double dt);

Snapshot lane_snapshot(const SimState& state);

}  // namespace tlc::sim
