#include "talescale/pilot_pool.hpp"

#include <algorithm>
#include <cmath>

#include "talescale/errors.hpp"

namespace talescale {

void PoolPolicy::validate() const {
  if (resource.empty()) throw ValidationError("pool policy needs a resource");
  if (min_warm < 0) throw ValidationError("min_warm must be >= 0");
  if (max_size < min_warm) {
    throw ValidationError("max_size (" + std::to_string(max_size) + ") < min_warm (" +
                          std::to_string(min_warm) + ")");
  }
  if (threshold() > min_warm) throw ValidationError("replenish_threshold must be <= min_warm");
  if (!(pilot_walltime > 0)) throw ValidationError("pilot_walltime must be > 0");
  if (dispatch_overhead < 0) throw ValidationError("dispatch_overhead must be >= 0");
  if (pilot_nodes < 1) throw ValidationError("pilot_nodes must be >= 1");
}

void to_json(nlohmann::json& j, const PoolPolicy& p) {
  j = {{"resource", p.resource},
       {"min_warm", p.min_warm},
       {"max_size", p.max_size},
       {"pilot_walltime", p.pilot_walltime},
       {"credential", p.credential},
       {"dispatch_overhead", p.dispatch_overhead},
       {"pilot_nodes", p.pilot_nodes}};
  if (p.replenish_threshold) j["replenish_threshold"] = *p.replenish_threshold;
}

void from_json(const nlohmann::json& j, PoolPolicy& p) {
  p = PoolPolicy{};
  p.resource = j.at("resource").get<std::string>();
  p.min_warm = j.value("min_warm", 0);
  p.max_size = j.value("max_size", p.min_warm);
  p.pilot_walltime = j.value("pilot_walltime", p.pilot_walltime);
  if (j.contains("replenish_threshold")) {
    p.replenish_threshold = j.at("replenish_threshold").get<int>();
  }
  p.credential = j.value("credential", p.credential);
  p.dispatch_overhead = j.value("dispatch_overhead", p.dispatch_overhead);
  p.pilot_nodes = j.value("pilot_nodes", p.pilot_nodes);
}

std::string to_string(SlotState s) {
  switch (s) {
    case SlotState::pending: return "pending";
    case SlotState::warm: return "warm";
    case SlotState::claimed: return "claimed";
    case SlotState::expired: return "expired";
  }
  return "?";
}

PilotPool::PilotPool(PoolPolicy policy, lrm::Middleware& middleware, Scheduler& scheduler,
                     bool automatic_ticks)
    : policy_(std::move(policy)),
      middleware_(middleware),
      scheduler_(scheduler),
      automatic_(automatic_ticks),
      self_(std::make_shared<PilotPool*>(this)) {
  policy_.validate();
  std::weak_ptr<PilotPool*> weak = self_;
  middleware_.add_listener(
      [weak](const lrm::JobHandle& h, const lrm::JobSpec&, const lrm::Transition& t) {
        if (auto self = weak.lock()) (*self)->on_transition(h, t);
      });
  replenish();
  if (automatic_) arm_tick();
}

PilotPool::~PilotPool() {
  std::lock_guard lk(mu_);
  self_.reset();
  if (tick_event_) scheduler_.cancel(*tick_event_);
}

void PilotPool::arm_tick() {
  const auto interval = middleware_.config().poller.interval;
  const auto next = (std::floor(scheduler_.now() / interval) + 1) * interval;
  std::lock_guard lk(mu_);
  tick_event_ = scheduler_.schedule_at(next, [this] {
    {
      std::lock_guard inner(mu_);
      tick_event_.reset();
    }
    tick();
    arm_tick();
  });
}

void PilotPool::on_transition(const lrm::JobHandle& h, const lrm::Transition& t) {
  std::lock_guard lk(mu_);
  auto it = by_job_.find(h.job_id);
  if (it == by_job_.end()) return;
  auto& slot = slots_[it->second];
  if (t.to == lrm::JobState::running && slot.state == SlotState::pending) {
    slot.state = SlotState::warm;
    slot.warm_since = t.at;
  } else if (lrm::is_terminal(t.to) && slot.state != SlotState::expired) {
    slot.state = SlotState::expired;
  }
}

std::optional<PilotSlot> PilotPool::claim(const lrm::JobSpec& workload,
                                          const std::string& workload_id) {
  if (workload.resource != policy_.resource) {
    throw ValidationError("workload targets '" + workload.resource + "' but the pool serves '" +
                          policy_.resource + "'");
  }
  if (workload.node_count > policy_.pilot_nodes) return std::nullopt;
  std::optional<PilotSlot> out;
  {
    std::lock_guard lk(mu_);
    // Oldest warm slot first so younger pilots have walltime left.
    for (auto& slot : slots_) {
      if (slot.state != SlotState::warm) continue;
      slot.state = SlotState::claimed;
      slot.claimed_by = workload_id;
      slot.claimed_at = scheduler_.now();
      out = slot;
      break;
    }
  }
  if (out) replenish();
  return out;
}

std::vector<lrm::JobHandle> PilotPool::replenish() {
  std::size_t n = 0;
  std::vector<std::string> ids;
  {
    std::lock_guard lk(mu_);
    const auto c = counts_locked();
    const auto have = c.warm + c.pending + in_flight_;
    const auto want = static_cast<std::size_t>(policy_.min_warm);
    const auto live = c.live() + in_flight_;
    const auto cap = static_cast<std::size_t>(policy_.max_size);
    if (have < want && live < cap) n = std::min(want - have, cap - live);
    in_flight_ += n;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("pilot-" + std::to_string(next_slot_++));
  }

  std::vector<lrm::JobHandle> out;
  for (const auto& slot_id : ids) {
    lrm::JobSpec spec;
    spec.command = {"pilot"};
    spec.resource = policy_.resource;
    spec.credential = policy_.credential;
    spec.node_count = policy_.pilot_nodes;
    spec.walltime = policy_.pilot_walltime;
    spec.job_name = policy_.resource + "-" + slot_id;
    std::optional<lrm::JobHandle> handle;
    bool failed = false;
    try {
      handle = middleware_.submit(spec);
      failed = middleware_.status(*handle).state == lrm::JobState::failed;
    } catch (const Error&) {
      failed = true;
    }
    std::lock_guard lk(mu_);
    --in_flight_;
    if (!handle) {
      ++submit_failures_;
      continue;
    }
    PilotSlot slot{slot_id, *handle, failed ? SlotState::expired : SlotState::pending, {}, {},
                   {}};
    if (failed) ++submit_failures_;
    by_job_[handle->job_id] = slots_.size();
    slots_.push_back(std::move(slot));
    out.push_back(*handle);
  }
  return out;
}

std::vector<PilotSlot> PilotPool::expire(SimTime now) {
  std::vector<PilotSlot> out;
  {
    std::lock_guard lk(mu_);
    for (auto& slot : slots_) {
      if (slot.state == SlotState::warm && now - *slot.warm_since >= policy_.pilot_walltime) {
        slot.state = SlotState::expired;
        out.push_back(slot);
      }
    }
  }
  for (const auto& slot : out) {
    try {
      middleware_.cancel(slot.pilot_job);
    } catch (const Error&) {
      // The backend ends it at walltime regardless.
    }
  }
  return out;
}

void PilotPool::release(const std::string& slot_id) {
  lrm::JobHandle job;
  {
    std::lock_guard lk(mu_);
    auto it = std::find_if(slots_.begin(), slots_.end(),
                           [&](const PilotSlot& s) { return s.slot_id == slot_id; });
    if (it == slots_.end()) throw NotFoundError("unknown pilot slot '" + slot_id + "'");
    if (it->state != SlotState::claimed) {
      throw StateError("pilot slot '" + slot_id + "' is " + to_string(it->state));
    }
    it->state = SlotState::expired;
    job = it->pilot_job;
  }
  try {
    middleware_.cancel(job);
  } catch (const Error&) {
  }
}

void PilotPool::tick() {
  expire(scheduler_.now());
  bool low = false;
  {
    std::lock_guard lk(mu_);
    const auto c = counts_locked();
    low = static_cast<int>(c.warm + c.pending + in_flight_) <= policy_.threshold();
  }
  if (low) replenish();
}

PoolCounts PilotPool::counts() const {
  std::lock_guard lk(mu_);
  return counts_locked();
}

PoolCounts PilotPool::counts_locked() const {
  PoolCounts c;
  for (const auto& s : slots_) {
    switch (s.state) {
      case SlotState::pending: ++c.pending; break;
      case SlotState::warm: ++c.warm; break;
      case SlotState::claimed: ++c.claimed; break;
      case SlotState::expired: ++c.expired; break;
    }
  }
  c.submitted = slots_.size();
  c.submit_failures = submit_failures_;
  return c;
}

std::vector<PilotSlot> PilotPool::slots() const {
  std::lock_guard lk(mu_);
  return slots_;
}

}  // namespace talescale
