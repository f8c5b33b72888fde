#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "talescale/clock.hpp"
#include "talescale/lrm/middleware.hpp"

namespace talescale {

struct PoolPolicy {
  std::string resource;
  int min_warm = 0;
  int max_size = 0;
  Duration pilot_walltime = 86400;
  // Ticks top the pool up once warm + pending drops to this level. Defaults
  // to min_warm - 1, i.e. as soon as anything is missing.
  std::optional<int> replenish_threshold;
  std::string credential = "default";
  Duration dispatch_overhead = 0.5;
  // Nodes held by each pilot; a workload must fit in one pilot.
  int pilot_nodes = 1;

  // Throws ValidationError when the bounds are inconsistent.
  void validate() const;
  int threshold() const { return replenish_threshold.value_or(min_warm - 1); }
};

void to_json(nlohmann::json& j, const PoolPolicy& p);
void from_json(const nlohmann::json& j, PoolPolicy& p);

enum class SlotState { pending, warm, claimed, expired };
std::string to_string(SlotState s);

struct PilotSlot {
  std::string slot_id;
  lrm::JobHandle pilot_job;
  SlotState state = SlotState::pending;
  std::optional<std::string> claimed_by;
  std::optional<SimTime> warm_since;
  std::optional<SimTime> claimed_at;
};

struct PoolCounts {
  std::size_t pending = 0;
  std::size_t warm = 0;
  std::size_t claimed = 0;
  std::size_t expired = 0;
  std::size_t submitted = 0;        // pilots ever handed to the middleware
  std::size_t submit_failures = 0;  // of those, rejected at submission

  std::size_t live() const { return pending + warm + claimed; }
};

// Keeps placeholder jobs queued or running on one batch resource so that
// workloads can skip the queue. Construction performs the initial replenish.
// claim / replenish / expire are serialized; middleware calls happen outside
// the pool lock.
class PilotPool {
 public:
  PilotPool(PoolPolicy policy, lrm::Middleware& middleware, Scheduler& scheduler,
            bool automatic_ticks = true);
  ~PilotPool();

  PilotPool(const PilotPool&) = delete;
  PilotPool& operator=(const PilotPool&) = delete;

  // A warm slot now bound to `workload_id`, or nullopt if none is warm or the
  // workload does not fit one pilot. Throws ValidationError when the workload
  // targets another resource.
  std::optional<PilotSlot> claim(const lrm::JobSpec& workload, const std::string& workload_id);

  // Submits pilots until warm + pending reaches min_warm without exceeding
  // max_size live slots.
  std::vector<lrm::JobHandle> replenish();

  // Warm slots whose pilot has run for at least pilot_walltime.
  std::vector<PilotSlot> expire(SimTime now);

  // Ends a claimed slot's pilot once its workload is done.
  void release(const std::string& slot_id);

  // expire + threshold-driven replenish; what the periodic tick runs.
  void tick();

  PoolCounts counts() const;
  std::vector<PilotSlot> slots() const;
  const PoolPolicy& policy() const { return policy_; }
  Duration dispatch_overhead() const { return policy_.dispatch_overhead; }

 private:
  void on_transition(const lrm::JobHandle& h, const lrm::Transition& t);
  void arm_tick();
  PoolCounts counts_locked() const;

  PoolPolicy policy_;
  lrm::Middleware& middleware_;
  Scheduler& scheduler_;
  bool automatic_;

  mutable std::mutex mu_;
  std::vector<PilotSlot> slots_;
  std::map<std::string, std::size_t> by_job_;
  std::size_t in_flight_ = 0;
  std::size_t submit_failures_ = 0;
  std::uint64_t next_slot_ = 1;
  std::optional<Scheduler::EventId> tick_event_;
  // Listener callbacks check this so a destroyed pool is never touched.
  std::shared_ptr<PilotPool*> self_;
};

}  // namespace talescale
