#pragma once

// Discrete-event core: a millisecond clock and an event queue totally ordered
// by (time, insertion sequence).

#include <eclipse/types.hpp>

#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <vector>

namespace eclipse::sim {

/// Stateless 64-bit mixer; used to derive independent seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t run_seed(std::uint64_t scenario_seed, int run_index) {
  return splitmix64(splitmix64(scenario_seed) ^ static_cast<std::uint64_t>(run_index));
}

class EventQueue {
 public:
  using Action = std::function<void()>;

  SimTime now() const { return now_; }
  std::size_t pending() const { return heap_.size(); }
  std::uint64_t executed() const { return executed_; }

  void schedule(SimTime at, Action fn) {
    if (at < now_) throw std::logic_error("cannot schedule an event in the past");
    heap_.push(Entry{at, seq_++, std::move(fn)});
  }

  void schedule_in(Duration delay, Action fn) { schedule(now_ + delay, std::move(fn)); }

  /// Runs every event with time <= `end`, then advances the clock to `end`.
  void run_until(SimTime end) {
    while (!heap_.empty() && heap_.top().at <= end) {
      // Moving out of the top is safe: the entry is popped before running.
      Entry e = std::move(const_cast<Entry&>(heap_.top()));
      heap_.pop();
      now_ = e.at;
      ++executed_;
      e.fn();
    }
    if (end > now_) now_ = end;
  }

 private:
  struct Entry {
    SimTime at;
    std::uint64_t seq;
    Action fn;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  SimTime now_{0};
  std::uint64_t seq_ = 0;
  std::uint64_t executed_ = 0;
  std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
};

}  // namespace eclipse::sim
