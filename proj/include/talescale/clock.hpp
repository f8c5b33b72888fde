#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <queue>
#include <unordered_map>
#include <vector>

namespace talescale {

// Simulated seconds.
using SimTime = double;
using Duration = double;

inline constexpr Duration kForever = std::numeric_limits<double>::infinity();

// Time source plus deferred execution. Everything that needs "later" in this
// library goes through a Scheduler so tests can drive it deterministically.
class Scheduler {
 public:
  using EventId = std::uint64_t;

  virtual ~Scheduler() = default;

  virtual SimTime now() const = 0;
  virtual EventId schedule_at(SimTime at, std::function<void()> fn) = 0;
  virtual bool cancel(EventId id) = 0;

  EventId schedule_after(Duration delay, std::function<void()> fn) {
    return schedule_at(now() + delay, std::move(fn));
  }
};

// Discrete-event clock. Events fire in (time, insertion sequence) order, so
// two runs that schedule the same things in the same order are identical.
// Scheduling is thread-safe; advancing must happen on one thread.
class SimClock final : public Scheduler {
 public:
  explicit SimClock(SimTime start = 0.0) : now_(start) {}

  SimTime now() const override;
  EventId schedule_at(SimTime at, std::function<void()> fn) override;
  bool cancel(EventId id) override;

  // Fires every event with time <= until, then parks the clock at `until`.
  // Returns the number of events fired.
  std::size_t advance_to(SimTime until);
  std::size_t advance_by(Duration delta) { return advance_to(now() + delta); }

  // Fires the earliest pending event. False when nothing is pending.
  bool step();

  std::optional<SimTime> next_event_time() const;
  std::size_t pending() const;
  std::uint64_t fired() const;

 private:
  struct Entry {
    SimTime at;
    std::uint64_t seq;
    EventId id;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.at != b.at) return a.at > b.at;
      return a.seq > b.seq;
    }
  };

  std::optional<std::pair<Entry, std::function<void()>>> pop_due(SimTime until);

  mutable std::mutex mu_;
  SimTime now_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t fired_ = 0;
  std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
  std::unordered_map<EventId, std::function<void()>> callbacks_;
};

}  // namespace talescale
