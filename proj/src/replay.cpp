#include "tlc/replay.hpp"

namespace tlc::replay {

std::size_t PalaceStats::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

ReplayPalace::ReplayPalace(std::size_t capacity_per_cell) : capacity_(capacity_per_cell) {
  if (capacity_ == 0) throw InvalidArgument("replay cell capacity must be positive");
}

void ReplayPalace::store(Experience e) {
  if (e.phase != e.state.current_phase) {
    throw InvalidArgument("experience phase does not match the phase recorded in its state");
  }
  const auto idx = cell_index(e.phase, e.action);
  auto& cell = cells_[idx];
  cell.push_back(std::move(e));
  ++stored_[idx];
  if (cell.size() > capacity_) {
    cell.pop_front();
    ++evicted_[idx];
  }
}

std::array<std::size_t, kCellCount> ReplayPalace::quotas(std::size_t batch_size) const {
  std::array<std::size_t, kCellCount> q{};
  std::size_t k = 0;
  for (const auto& c : cells_) k += c.empty() ? 0 : 1;
  if (k == 0) throw EmptyMemoryError();
  std::size_t remainder = batch_size % k;
  for (std::size_t i = 0; i < kCellCount; ++i) {
    if (cells_[i].empty()) continue;
    q[i] = batch_size / k;
    if (remainder > 0) {
      ++q[i];
      --remainder;
    }
  }
  return q;
}

std::vector<Experience> ReplayPalace::sample_balanced(std::size_t batch_size, std::mt19937_64& rng) const {
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  const auto q = quotas(batch_size);
  std::vector<Experience> out;
  out.reserve(batch_size);
  for (std::size_t i = 0; i < kCellCount; ++i) {
    if (q[i] == 0) continue;
    std::uniform_int_distribution<std::size_t> pick(0, cells_[i].size() - 1);
    for (std::size_t n = 0; n < q[i]; ++n) out.push_back(cells_[i][pick(rng)]);
  }
  return out;
}

PalaceStats ReplayPalace::stats() const {
  PalaceStats s;
  for (std::size_t i = 0; i < kCellCount; ++i) {
    s.counts[i] = cells_[i].size();
    s.stored[i] = stored_[i];
    s.evicted[i] = evicted_[i];
  }
  return s;
}

std::size_t ReplayPalace::size() const {
  std::size_t n = 0;
  for (const auto& c : cells_) n += c.size();
  return n;
}

}  // namespace tlc::replay
