#pragma once

// Replay memory partitioned by (phase, action), sampled with equal quotas so
// rare combinations are not drowned out by frequent ones.

#include <array>
#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include "tlc/error.hpp"
#include "tlc/mdp_env.hpp"

namespace tlc::replay {

using env::Action;
using env::Observation;
using sim::Phase;

struct Experience {
  Observation state;
  Action action = Action::Keep;
  double reward = 0.0;
  Observation next_state;
  Phase phase = Phase::WE;  // phase at the time the action was taken
};

class EmptyMemoryError : public Error {
 public:
  EmptyMemoryError() : Error("replay memory is empty") {}
};

inline constexpr std::size_t kCellCount = 4;

// Cells are keyed in fixed order (NS,Keep), (NS,Change), (WE,Keep), (WE,Change).
constexpr std::size_t cell_index(Phase p, Action a) noexcept {
  return static_cast<std::size_t>(p) * 2 + static_cast<std::size_t>(a);
}

struct PalaceStats {
  std::array<std::size_t, kCellCount> counts{};
  std::array<std::uint64_t, kCellCount> stored{};
  std::array<std::uint64_t, kCellCount> evicted{};

  std::size_t total() const;
};

class ReplayPalace {
 public:
  explicit ReplayPalace(std::size_t capacity_per_cell = 1000);

  void store(Experience e);

  // batch / k draws (with replacement) from each of the k non-empty cells;
  // the remainder goes one each to the first non-empty cells in key order.
  std::vector<Experience> sample_balanced(std::size_t batch_size, std::mt19937_64& rng) const;

  // Per-cell draw counts sample_balanced would use.
  std::array<std::size_t, kCellCount> quotas(std::size_t batch_size) const;

  PalaceStats stats() const;
  const std::deque<Experience>& cell(Phase p, Action a) const { return cells_[cell_index(p, a)]; }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const;
  bool empty() const { return size() == 0; }

 private:
  std::size_t capacity_;
  std::array<std::deque<Experience>, kCellCount> cells_;
  std::array<std::uint64_t, kCellCount> stored_{};
  std::array<std::uint64_t, kCellCount> evicted_{};
};

}  // namespace tlc::replay
