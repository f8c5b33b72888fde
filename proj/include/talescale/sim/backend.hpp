#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "talescale/clock.hpp"
#include "talescale/lrm/transport.hpp"
#include "talescale/resource.hpp"
#include "talescale/rng.hpp"

namespace talescale::sim {

struct BackendEvent {
  enum class Kind { submitted, started, finished };
  Kind kind = Kind::submitted;
  SimTime time = 0;
  std::string resource;
  std::string native_id;
  std::string job_name;
  std::vector<std::string> argv;
  std::optional<int> exit_code;
};

std::string to_string(BackendEvent::Kind k);

// A fake batch system for one resource. It understands the command strings
// of both built-in dialects and runs jobs on the shared simulated clock:
//   sleep N           runs N seconds, exit 0
//   fail CODE [N]     runs N seconds (default 0), exits CODE
//   pilot | frontend  runs until its walltime, exit 265
//   anything else     runs default_runtime seconds, exit 0
class SimLrm {
 public:
  using Listener = std::function<void(const BackendEvent&)>;

  SimLrm(ResourceDescriptor resource, Scheduler& scheduler, std::uint64_t seed,
         Duration default_runtime = 60.0);

  const std::string& name() const { return resource_.name; }

  lrm::CommandResult execute(const std::string& command);

  void add_listener(Listener l) { listeners_.push_back(std::move(l)); }

  // Queued and waiting for a maintenance window to close.
  bool is_held(const std::string& native_id) const;
  std::size_t queued() const;
  std::size_t running() const;
  std::size_t total_jobs() const { return jobs_.size(); }

 private:
  enum class State { queued, running, finished };
  struct Job {
    std::string native_id;
    std::string name;
    std::vector<std::string> argv;
    Duration walltime = 86400;
    SimTime submitted = 0;
    std::optional<SimTime> started;
    State state = State::queued;
    int exit_code = 0;
    // Set when a maintenance window deferred the start; held from then on.
    std::optional<SimTime> hold_from;
    Scheduler::EventId pending_event = 0;
  };

  lrm::CommandResult submit(const std::vector<std::string>& args, bool slurm);
  lrm::CommandResult status(const std::vector<std::string>& ids, bool slurm) const;
  lrm::CommandResult cancel(const std::string& id);

  void start(const std::string& id);
  void finish(const std::string& id, int exit_code);
  void emit(BackendEvent::Kind kind, const Job& job, std::optional<int> exit_code = {});

  ResourceDescriptor resource_;
  Scheduler& scheduler_;
  Rng rng_;
  Duration default_runtime_;
  std::uint64_t next_id_ = 1000;
  std::map<std::string, Job> jobs_;
  std::vector<Listener> listeners_;
};

// Routes transport calls to SimLrm instances and can inject failures. Not
// thread-safe: drive it from the thread that advances the clock.
class SimTransport final : public lrm::Transport {
 public:
  explicit SimTransport(const Scheduler& scheduler) : scheduler_(scheduler) {}

  void attach(SimLrm& lrm);
  // Handshakes with this credential on this resource fail.
  void deny_credential(const std::string& resource, const std::string& credential);
  // Every call to `resource` in [start, end) fails.
  void add_outage(const std::string& resource, SimTime start, SimTime end);

  void handshake(const std::string& resource, const std::string& credential) override;
  lrm::CommandResult execute(const std::string& resource, const std::string& credential,
                             const std::string& command) override;

  // Commands received, in order, for `resource`.
  const std::vector<std::string>& commands(const std::string& resource) const;
  std::uint64_t handshakes() const { return handshakes_; }
  std::uint64_t executions() const { return executions_; }

 private:
  void check_up(const std::string& resource) const;

  const Scheduler& scheduler_;
  std::map<std::string, SimLrm*> lrms_;
  std::set<std::pair<std::string, std::string>> denied_;
  std::multimap<std::string, std::pair<SimTime, SimTime>> outages_;
  std::map<std::string, std::vector<std::string>> commands_;
  std::uint64_t handshakes_ = 0;
  std::uint64_t executions_ = 0;
};

}  // namespace talescale::sim
