#include "talescale/clock.hpp"

#include <cmath>
#include <stdexcept>

namespace talescale {

SimTime SimClock::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

Scheduler::EventId SimClock::schedule_at(SimTime at, std::function<void()> fn) {
  std::lock_guard lock(mu_);
  if (std::isnan(at) || at < now_) {
    throw std::logic_error("cannot schedule an event in the past");
  }
  const auto seq = next_seq_++;
  const EventId id = seq + 1;
  queue_.push(Entry{at, seq, id});
  callbacks_.emplace(id, std::move(fn));
  return id;
}

bool SimClock::cancel(EventId id) {
  std::lock_guard lock(mu_);
  return callbacks_.erase(id) > 0;
}

std::optional<std::pair<SimClock::Entry, std::function<void()>>>
SimClock::pop_due(SimTime until) {
  std::lock_guard lock(mu_);
  while (!queue_.empty()) {
    const Entry top = queue_.top();
    auto it = callbacks_.find(top.id);
    if (it == callbacks_.end()) {  // cancelled
      queue_.pop();
      continue;
    }
    if (top.at > until) return std::nullopt;
    queue_.pop();
    auto fn = std::move(it->second);
    callbacks_.erase(it);
    now_ = top.at;
    ++fired_;
    return std::make_pair(top, std::move(fn));
  }
  return std::nullopt;
}

std::size_t SimClock::advance_to(SimTime until) {
  std::size_t count = 0;
  while (auto due = pop_due(until)) {
    due->second();
    ++count;
  }
  std::lock_guard lock(mu_);
  if (until > now_ && std::isfinite(until)) now_ = until;
  return count;
}

bool SimClock::step() {
  auto due = pop_due(kForever);
  if (!due) return false;
  due->second();
  return true;
}

std::optional<SimTime> SimClock::next_event_time() const {
  std::lock_guard lock(mu_);
  // Cancelled entries stay in the heap until popped; skip over them here
  // without mutating by copying the heap only when the top is stale.
  if (queue_.empty()) return std::nullopt;
  if (callbacks_.count(queue_.top().id)) return queue_.top().at;
  auto copy = queue_;
  while (!copy.empty() && !callbacks_.count(copy.top().id)) copy.pop();
  if (copy.empty()) return std::nullopt;
  return copy.top().at;
}

std::size_t SimClock::pending() const {
  std::lock_guard lock(mu_);
  return callbacks_.size();
}

std::uint64_t SimClock::fired() const {
  std::lock_guard lock(mu_);
  return fired_;
}

}  // namespace talescale
