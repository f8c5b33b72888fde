#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "talescale/clock.hpp"
#include "talescale/lrm/dialect.hpp"
#include "talescale/lrm/transport.hpp"
#include "talescale/resource.hpp"

namespace talescale::lrm {

enum class JobState { created, submitted, queued, running, completed, failed, canceled };

std::string to_string(JobState s);
JobState parse_job_state(const std::string& s);
bool is_terminal(JobState s);
bool is_legal_transition(JobState from, JobState to);

// The states a job passes through to get from `from` to `to`, `to` included.
// Used when a poll reveals a job has moved more than one step since the
// last look. Empty when `to` is not reachable.
std::vector<JobState> transition_path(JobState from, JobState to);

struct JobSpec {
  std::string tale_id;
  std::vector<std::string> command;
  int node_count = 1;
  bool mpi = false;
  std::string resource;
  std::string credential;
  std::map<std::string, std::string> env;
  Duration walltime = 86400;
  std::string job_name;  // defaults to the job id
};

struct JobHandle {
  std::string job_id;
  std::string resource;
  SimTime submitted_at = 0;

  bool operator==(const JobHandle&) const = default;
};

struct Transition {
  std::string job_id;
  std::string resource;
  JobState from = JobState::created;
  JobState to = JobState::created;
  SimTime at = 0;
  std::optional<int> exit_code;

  bool operator==(const Transition&) const = default;
};

struct JobStatus {
  JobState state = JobState::created;
  std::optional<int> exit_code;
  std::string cause;  // set when the middleware itself failed the job
  std::vector<Transition> history;
};

struct Session {
  std::string resource;
  std::string credential;
  SimTime opened_at = 0;
  SimTime last_used = 0;
  Duration idle_ttl = 0;

  bool live_at(SimTime t) const { return t - last_used <= idle_ttl; }
};

struct PollerConfig {
  Duration interval = 5.0;
  // When false the poller must be driven through poll_cycle().
  bool automatic = true;
};

struct MiddlewareConfig {
  PollerConfig poller;
  Duration idle_ttl = 300.0;
  // How long a (resource, credential) pair is refused after a handshake fails.
  Duration unhealthy_backoff = 30.0;
};

struct MiddlewareCounters {
  std::uint64_t handshakes = 0;
  std::uint64_t handshake_failures = 0;
  std::uint64_t submits = 0;
  std::uint64_t batch_queries = 0;
  std::uint64_t cancels = 0;
  std::uint64_t poll_failures = 0;
  std::uint64_t status_calls = 0;
};

struct TransportLogEntry {
  SimTime time = 0;
  std::string resource;
  std::string credential;
  std::string verb;  // handshake | submit | batch_status | cancel
  std::string payload_digest;

  std::string line() const;
};

// Non-blocking view of one job's transitions. next() returns whatever has
// been delivered so far and never waits.
class JobEventStream {
 public:
  std::optional<Transition> next();
  // True once the job is terminal and every event has been consumed.
  bool ended() const;
  std::vector<Transition> drain();

 private:
  friend class Middleware;
  struct State {
    mutable std::mutex mu;
    std::deque<Transition> events;
    bool closed = false;
  };
  explicit JobEventStream(std::shared_ptr<State> state) : state_(std::move(state)) {}
  std::shared_ptr<State> state_;
};

// Shared job-submission service. All public members are safe to call from
// several threads; the transport is never called with the state lock held.
class Middleware {
 public:
  using Listener = std::function<void(const JobHandle&, const JobSpec&, const Transition&)>;

  Middleware(Scheduler& scheduler, Transport& transport, MiddlewareConfig config = {});
  ~Middleware();

  Middleware(const Middleware&) = delete;
  Middleware& operator=(const Middleware&) = delete;

  void add_resource(const ResourceDescriptor& resource);
  void add_credential(const std::string& name);
  // Throws ValidationError on a duplicate name. "sim-pbs" and "sim-slurm"
  // are registered on construction.
  void register_dialect(const std::string& name, std::shared_ptr<DialectAdapter> adapter);

  JobHandle submit(const JobSpec& spec);
  JobStatus status(const std::string& job_id) const;
  JobStatus status(const JobHandle& handle) const { return status(handle.job_id); }
  const JobSpec& spec(const std::string& job_id) const;
  // Dialect-native id, empty until the backend accepted the job.
  std::string native_id(const std::string& job_id) const;

  // One aggregated status query for every non-terminal job on `resource`.
  // Returns the transitions applied.
  std::vector<Transition> poll_cycle(const std::string& resource);

  JobEventStream subscribe(const std::string& job_id);
  JobEventStream subscribe(const JobHandle& handle) { return subscribe(handle.job_id); }

  // True if a cancel was sent, false for the no-op on a terminal job.
  bool cancel(const std::string& job_id);
  bool cancel(const JobHandle& handle) { return cancel(handle.job_id); }

  Session acquire_session(const std::string& resource, const std::string& credential);

  // Called for every transition, after the state lock is released.
  void add_listener(Listener listener);

  // Observer for every transport log entry as it is written.
  void set_log_listener(std::function<void(const TransportLogEntry&)> fn);

  MiddlewareCounters counters() const;
  std::uint64_t batch_queries(const std::string& resource) const;
  std::vector<TransportLogEntry> transport_log() const;
  std::string transport_log_text() const;
  // Resources whose poller is currently scheduled.
  std::size_t active_pollers() const;
  std::vector<std::string> job_ids() const;
  std::size_t live_sessions() const;
  const MiddlewareConfig& config() const { return config_; }

 private:
  struct Job {
    JobHandle handle;
    JobSpec spec;
    JobStatus status;
    std::string native_id;
    std::vector<std::weak_ptr<JobEventStream::State>> streams;
  };
  struct PairHealth {
    std::optional<Session> session;
    SimTime unhealthy_until = -kForever;
  };
  struct Pending {
    JobHandle handle;
    JobSpec spec;
    Transition transition;
  };

  void log(const std::string& resource, const std::string& credential, const std::string& verb,
           const std::string& payload);
  // Caller holds mu_.
  void apply_locked(Job& job, JobState to, std::optional<int> exit_code,
                    std::vector<Pending>& out);
  void notify(const std::vector<Pending>& pending);
  void arm_poller_locked(const std::string& resource);
  void on_poll_timer(const std::string& resource);
  Job& job_locked(const std::string& job_id);
  const Job& job_locked(const std::string& job_id) const;

  Scheduler& scheduler_;
  Transport& transport_;
  MiddlewareConfig config_;

  mutable std::mutex mu_;
  std::map<std::string, ResourceDescriptor> resources_;
  std::set<std::string> credentials_;
  std::map<std::string, std::shared_ptr<DialectAdapter>> dialects_;
  std::map<std::string, Job> jobs_;
  std::vector<std::string> job_order_;
  std::uint64_t next_job_ = 1;
  // resource -> non-terminal job ids in submission order
  std::map<std::string, std::vector<std::string>> active_;
  // resource -> native id -> job id
  std::map<std::string, std::map<std::string, std::string>> native_index_;
  std::map<std::string, Scheduler::EventId> pollers_;
  std::map<std::string, std::uint64_t> queries_by_resource_;
  mutable MiddlewareCounters counters_;
  std::vector<Listener> listeners_;

  // Held across a handshake so a pair never gets two live sessions.
  mutable std::mutex session_mu_;
  std::map<std::pair<std::string, std::string>, PairHealth> sessions_;

  mutable std::mutex log_mu_;
  std::vector<TransportLogEntry> log_;
  std::function<void(const TransportLogEntry&)> log_listener_;
};

}  // namespace talescale::lrm

namespace talescale {
class TaleStore;
}

namespace talescale::lrm {

// Writes job_submitted / job_state_change events into the owning Tale's
// provenance. Jobs whose tale_id is not in the store are ignored.
void record_job_provenance(Middleware& middleware, TaleStore& store);

}  // namespace talescale::lrm
