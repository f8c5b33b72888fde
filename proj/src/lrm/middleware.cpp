#include "talescale/lrm/middleware.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <queue>

#include "talescale/digest.hpp"
#include "talescale/errors.hpp"
#include "talescale/tale.hpp"

namespace talescale::lrm {

namespace {

constexpr std::array<std::pair<JobState, JobState>, 8> kLegal = {{
    {JobState::created, JobState::submitted},
    {JobState::submitted, JobState::queued},
    {JobState::submitted, JobState::failed},
    {JobState::queued, JobState::running},
    {JobState::queued, JobState::canceled},
    {JobState::running, JobState::completed},
    {JobState::running, JobState::failed},
    {JobState::running, JobState::canceled},
}};

JobState from_native(NativeState s) {
  switch (s) {
    case NativeState::queued: return JobState::queued;
    case NativeState::running: return JobState::running;
    case NativeState::completed: return JobState::completed;
    case NativeState::failed: return JobState::failed;
    case NativeState::canceled: return JobState::canceled;
  }
  return JobState::queued;
}

// Position along the happy path; a poll never moves a job backwards.
int rank(JobState s) {
  switch (s) {
    case JobState::created: return 0;
    case JobState::submitted: return 1;
    case JobState::queued: return 2;
    case JobState::running: return 3;
    default: return 4;
  }
}

}  // namespace

std::string to_string(JobState s) {
  switch (s) {
    case JobState::created: return "Created";
    case JobState::submitted: return "Submitted";
    case JobState::queued: return "Queued";
    case JobState::running: return "Running";
    case JobState::completed: return "Completed";
    case JobState::failed: return "Failed";
    case JobState::canceled: return "Canceled";
  }
  return "?";
}

JobState parse_job_state(const std::string& s) {
  for (auto st : {JobState::created, JobState::submitted, JobState::queued, JobState::running,
                  JobState::completed, JobState::failed, JobState::canceled}) {
    if (to_string(st) == s) return st;
  }
  throw ValidationError("unknown job state '" + s + "'");
}

bool is_terminal(JobState s) {
  return s == JobState::completed || s == JobState::failed || s == JobState::canceled;
}

bool is_legal_transition(JobState from, JobState to) {
  return std::find(kLegal.begin(), kLegal.end(), std::pair{from, to}) != kLegal.end();
}

std::vector<JobState> transition_path(JobState from, JobState to) {
  // BFS over the legal edges. Seven states, so this is cheap.
  std::map<JobState, JobState> parent;
  std::queue<JobState> q;
  q.push(from);
  parent.emplace(from, from);
  while (!q.empty()) {
    const auto cur = q.front();
    q.pop();
    if (cur == to && cur != from) break;
    for (const auto& [a, b] : kLegal) {
      if (a == cur && !parent.contains(b)) {
        parent.emplace(b, cur);
        q.push(b);
      }
    }
  }
  if (from == to || !parent.contains(to)) return {};
  std::vector<JobState> path;
  for (auto s = to; s != from; s = parent.at(s)) path.push_back(s);
  std::reverse(path.begin(), path.end());
  return path;
}

std::string TransportLogEntry::line() const {
  char t[32];
  std::snprintf(t, sizeof t, "%.3f", time);
  return std::string(t) + " | " + resource + " | " + credential + " | " + verb + " | " +
         payload_digest;
}

// ---- JobEventStream ---------------------------------------------------------

std::optional<Transition> JobEventStream::next() {
  std::lock_guard lk(state_->mu);
  if (state_->events.empty()) return std::nullopt;
  auto t = std::move(state_->events.front());
  state_->events.pop_front();
  return t;
}

bool JobEventStream::ended() const {
  std::lock_guard lk(state_->mu);
  return state_->closed && state_->events.empty();
}

std::vector<Transition> JobEventStream::drain() {
  std::lock_guard lk(state_->mu);
  std::vector<Transition> out(state_->events.begin(), state_->events.end());
  state_->events.clear();
  return out;
}

// ---- Middleware ------------------------------------------------------------

Middleware::Middleware(Scheduler& scheduler, Transport& transport, MiddlewareConfig config)
    : scheduler_(scheduler), transport_(transport), config_(config) {
  if (!(config_.poller.interval > 0)) throw ValidationError("poll interval must be > 0");
  if (config_.idle_ttl < 0) throw ValidationError("idle_ttl must be >= 0");
  dialects_.emplace("sim-pbs", make_pbs_dialect("sim-pbs"));
  dialects_.emplace("sim-slurm", make_slurm_dialect("sim-slurm"));
}

Middleware::~Middleware() {
  std::lock_guard lk(mu_);
  for (const auto& [_, id] : pollers_) scheduler_.cancel(id);
}

void Middleware::add_resource(const ResourceDescriptor& resource) {
  resource.validate();
  std::lock_guard lk(mu_);
  resources_[resource.name] = resource;
}

void Middleware::add_credential(const std::string& name) {
  if (name.empty()) throw ValidationError("credential name must not be empty");
  std::lock_guard lk(mu_);
  credentials_.insert(name);
}

void Middleware::register_dialect(const std::string& name,
                                  std::shared_ptr<DialectAdapter> adapter) {
  if (!adapter) throw ValidationError("dialect adapter is null");
  std::lock_guard lk(mu_);
  if (!dialects_.emplace(name, std::move(adapter)).second) {
    throw ValidationError("dialect '" + name + "' is already registered");
  }
}

void Middleware::add_listener(Listener listener) {
  std::lock_guard lk(mu_);
  listeners_.push_back(std::move(listener));
}

void Middleware::log(const std::string& resource, const std::string& credential,
                     const std::string& verb, const std::string& payload) {
  TransportLogEntry e{scheduler_.now(), resource, credential, verb, sha256_hex(payload)};
  std::function<void(const TransportLogEntry&)> listener;
  {
    std::lock_guard lk(log_mu_);
    log_.push_back(e);
    listener = log_listener_;
  }
  if (listener) listener(e);
}

void Middleware::set_log_listener(std::function<void(const TransportLogEntry&)> fn) {
  std::lock_guard lk(log_mu_);
  log_listener_ = std::move(fn);
}

Middleware::Job& Middleware::job_locked(const std::string& job_id) {
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw NotFoundError("unknown job '" + job_id + "'");
  return it->second;
}

const Middleware::Job& Middleware::job_locked(const std::string& job_id) const {
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw NotFoundError("unknown job '" + job_id + "'");
  return it->second;
}

void Middleware::apply_locked(Job& job, JobState to, std::optional<int> exit_code,
                              std::vector<Pending>& out) {
  const auto path = transition_path(job.status.state, to);
  for (const auto s : path) {
    Transition t{job.handle.job_id, job.handle.resource, job.status.state, s,
                 scheduler_.now(), std::nullopt};
    if (is_terminal(s)) t.exit_code = exit_code;
    job.status.state = s;
    if (is_terminal(s)) job.status.exit_code = exit_code;
    job.status.history.push_back(t);
    for (auto& weak : job.streams) {
      if (auto st = weak.lock()) {
        std::lock_guard lk(st->mu);
        st->events.push_back(t);
        if (is_terminal(s)) st->closed = true;
      }
    }
    out.push_back(Pending{job.handle, job.spec, std::move(t)});
  }
  if (is_terminal(job.status.state)) job.streams.clear();
}

void Middleware::notify(const std::vector<Pending>& pending) {
  if (pending.empty()) return;
  std::vector<Listener> listeners;
  {
    std::lock_guard lk(mu_);
    listeners = listeners_;
  }
  for (const auto& p : pending) {
    for (const auto& l : listeners) l(p.handle, p.spec, p.transition);
  }
}

JobHandle Middleware::submit(const JobSpec& spec_in) {
  JobSpec spec = spec_in;
  std::shared_ptr<DialectAdapter> dialect;
  JobHandle handle;
  std::vector<Pending> pending;
  {
    std::lock_guard lk(mu_);
    auto rit = resources_.find(spec.resource);
    if (rit == resources_.end()) {
      throw NotFoundError("unknown resource '" + spec.resource + "'");
    }
    if (!credentials_.contains(spec.credential)) {
      throw NotFoundError("unknown credential '" + spec.credential + "'");
    }
    const auto& res = rit->second;
    if (spec.command.empty()) throw ValidationError("job command is empty");
    if (spec.node_count < 1) throw ValidationError("node_count must be >= 1");
    if (spec.node_count > res.node_count) {
      throw ValidationError("job asks for " + std::to_string(spec.node_count) +
                            " nodes but '" + res.name + "' has " +
                            std::to_string(res.node_count));
    }
    if (spec.mpi && !res.mpi_capable) {
      throw ValidationError("MPI job submitted to non-MPI resource '" + res.name + "'");
    }
    if (res.dialect.empty()) {
      throw ConfigError("resource '" + res.name + "' has no LRM dialect");
    }
    auto dit = dialects_.find(res.dialect);
    if (dit == dialects_.end()) {
      throw ConfigError("dialect '" + res.dialect + "' is not registered (resource '" +
                        res.name + "')");
    }
    dialect = dit->second;

    handle = JobHandle{"job-" + std::to_string(next_job_++), spec.resource, scheduler_.now()};
    if (spec.job_name.empty()) spec.job_name = handle.job_id;
    Job job{handle, spec, {}, {}, {}};
    auto& stored = jobs_.emplace(handle.job_id, std::move(job)).first->second;
    job_order_.push_back(handle.job_id);
    ++counters_.submits;
    apply_locked(stored, JobState::submitted, std::nullopt, pending);
  }
  notify(pending);
  pending.clear();

  SubmitRequest req{spec.job_name, spec.command, spec.node_count, spec.mpi, spec.walltime,
                    spec.env};
  std::string native;
  try {
    acquire_session(spec.resource, spec.credential);
    const auto cmd = dialect->submit_command(req);
    log(spec.resource, spec.credential, "submit", cmd);
    native = dialect->parse_submit(transport_.execute(spec.resource, spec.credential, cmd));
  } catch (const TransportError& e) {
    {
      std::lock_guard lk(mu_);
      auto& job = job_locked(handle.job_id);
      job.status.cause = e.what();
      apply_locked(job, JobState::failed, std::nullopt, pending);
    }
    notify(pending);
    return handle;
  }

  std::lock_guard lk(mu_);
  auto& job = job_locked(handle.job_id);
  job.native_id = native;
  native_index_[spec.resource][native] = handle.job_id;
  active_[spec.resource].push_back(handle.job_id);
  arm_poller_locked(spec.resource);
  return handle;
}

JobStatus Middleware::status(const std::string& job_id) const {
  std::lock_guard lk(mu_);
  ++counters_.status_calls;
  return job_locked(job_id).status;
}

const JobSpec& Middleware::spec(const std::string& job_id) const {
  std::lock_guard lk(mu_);
  return job_locked(job_id).spec;
}

std::string Middleware::native_id(const std::string& job_id) const {
  std::lock_guard lk(mu_);
  return job_locked(job_id).native_id;
}

void Middleware::arm_poller_locked(const std::string& resource) {
  if (!config_.poller.automatic || pollers_.contains(resource)) return;
  auto ait = active_.find(resource);
  if (ait == active_.end() || ait->second.empty()) return;
  // Cycles sit on a fixed grid of the interval so several resources poll at
  // the same instants.
  const auto interval = config_.poller.interval;
  const auto next = (std::floor(scheduler_.now() / interval) + 1) * interval;
  pollers_[resource] = scheduler_.schedule_at(next, [this, resource] { on_poll_timer(resource); });
}

void Middleware::on_poll_timer(const std::string& resource) {
  {
    std::lock_guard lk(mu_);
    pollers_.erase(resource);
  }
  poll_cycle(resource);
  std::lock_guard lk(mu_);
  arm_poller_locked(resource);
}

std::vector<Transition> Middleware::poll_cycle(const std::string& resource) {
  std::shared_ptr<DialectAdapter> dialect;
  std::vector<std::string> natives;
  std::string credential;
  {
    std::lock_guard lk(mu_);
    auto rit = resources_.find(resource);
    if (rit == resources_.end()) throw NotFoundError("unknown resource '" + resource + "'");
    auto& active = active_[resource];
    std::erase_if(active, [&](const std::string& id) {
      return is_terminal(jobs_.at(id).status.state);
    });
    if (active.empty()) return {};
    for (const auto& id : active) natives.push_back(jobs_.at(id).native_id);
    credential = jobs_.at(active.front()).spec.credential;
    dialect = dialects_.at(rit->second.dialect);
  }

  std::vector<NativeStatus> statuses;
  try {
    acquire_session(resource, credential);
    const auto cmd = dialect->batch_status_command(natives);
    {
      std::lock_guard lk(mu_);
      ++counters_.batch_queries;
      ++queries_by_resource_[resource];
    }
    log(resource, credential, "batch_status", cmd);
    statuses = dialect->parse_batch_status(transport_.execute(resource, credential, cmd));
  } catch (const TransportError&) {
    std::lock_guard lk(mu_);
    ++counters_.poll_failures;
    return {};
  }

  std::vector<Pending> pending;
  {
    std::lock_guard lk(mu_);
    const auto& index = native_index_[resource];
    for (const auto& ns : statuses) {
      auto it = index.find(ns.native_id);
      if (it == index.end()) continue;
      auto& job = jobs_.at(it->second);
      const auto target = from_native(ns.state);
      if (is_terminal(job.status.state) || rank(target) <= rank(job.status.state)) continue;
      apply_locked(job, target, ns.exit_code, pending);
    }
  }
  notify(pending);
  std::vector<Transition> out;
  out.reserve(pending.size());
  for (auto& p : pending) out.push_back(std::move(p.transition));
  return out;
}

JobEventStream Middleware::subscribe(const std::string& job_id) {
  auto st = std::make_shared<JobEventStream::State>();
  std::lock_guard lk(mu_);
  auto& job = job_locked(job_id);
  if (is_terminal(job.status.state)) {
    st->events.push_back(job.status.history.back());
    st->closed = true;
  } else {
    job.streams.push_back(st);
  }
  return JobEventStream(std::move(st));
}

bool Middleware::cancel(const std::string& job_id) {
  std::shared_ptr<DialectAdapter> dialect;
  std::string resource, credential, native;
  {
    std::lock_guard lk(mu_);
    auto& job = job_locked(job_id);
    if (is_terminal(job.status.state)) return false;
    if (job.native_id.empty()) throw StateError("job '" + job_id + "' has no backend id yet");
    resource = job.handle.resource;
    credential = job.spec.credential;
    native = job.native_id;
    dialect = dialects_.at(resources_.at(resource).dialect);
    ++counters_.cancels;
  }
  acquire_session(resource, credential);
  const auto cmd = dialect->cancel_command(native);
  log(resource, credential, "cancel", cmd);
  const auto r = transport_.execute(resource, credential, cmd);
  if (r.exit_status != 0) {
    throw TransportError("cancel of '" + job_id + "' failed: " + r.out);
  }
  return true;
}

Session Middleware::acquire_session(const std::string& resource, const std::string& credential) {
  {
    std::lock_guard lk(mu_);
    if (!resources_.contains(resource)) {
      throw NotFoundError("unknown resource '" + resource + "'");
    }
    if (!credentials_.contains(credential)) {
      throw NotFoundError("unknown credential '" + credential + "'");
    }
  }
  std::lock_guard lk(session_mu_);
  auto& pair = sessions_[{resource, credential}];
  const auto now = scheduler_.now();
  if (pair.session && pair.session->live_at(now)) {
    pair.session->last_used = now;
    return *pair.session;
  }
  pair.session.reset();
  if (now < pair.unhealthy_until) {
    throw TransportError("session " + resource + "/" + credential + " unhealthy until " +
                         std::to_string(pair.unhealthy_until));
  }
  log(resource, credential, "handshake", resource + "\n" + credential);
  try {
    transport_.handshake(resource, credential);
  } catch (const TransportError&) {
    pair.unhealthy_until = now + config_.unhealthy_backoff;
    std::lock_guard clk(mu_);
    ++counters_.handshake_failures;
    throw;
  }
  {
    std::lock_guard clk(mu_);
    ++counters_.handshakes;
  }
  pair.session = Session{resource, credential, now, now, config_.idle_ttl};
  return *pair.session;
}

MiddlewareCounters Middleware::counters() const {
  std::lock_guard lk(mu_);
  return counters_;
}

std::uint64_t Middleware::batch_queries(const std::string& resource) const {
  std::lock_guard lk(mu_);
  auto it = queries_by_resource_.find(resource);
  return it == queries_by_resource_.end() ? 0 : it->second;
}

std::vector<TransportLogEntry> Middleware::transport_log() const {
  std::lock_guard lk(log_mu_);
  return log_;
}

std::string Middleware::transport_log_text() const {
  std::lock_guard lk(log_mu_);
  std::string out;
  for (const auto& e : log_) out += e.line() + "\n";
  return out;
}

std::size_t Middleware::active_pollers() const {
  std::lock_guard lk(mu_);
  return pollers_.size();
}

std::vector<std::string> Middleware::job_ids() const {
  std::lock_guard lk(mu_);
  return job_order_;
}

std::size_t Middleware::live_sessions() const {
  const auto now = scheduler_.now();
  std::lock_guard lk(session_mu_);
  return static_cast<std::size_t>(std::count_if(
      sessions_.begin(), sessions_.end(),
      [&](const auto& kv) { return kv.second.session && kv.second.session->live_at(now); }));
}

void record_job_provenance(Middleware& middleware, TaleStore& store) {
  middleware.add_listener([&store](const JobHandle& h, const JobSpec& spec, const Transition& t) {
    if (spec.tale_id.empty() || !store.contains(spec.tale_id)) return;
    nlohmann::json payload = {{"job_id", h.job_id}, {"resource", h.resource}};
    if (t.to == JobState::submitted) {
      store.append(spec.tale_id, ProvenanceKind::job_submitted, std::move(payload), t.at);
      return;
    }
    payload["from"] = to_string(t.from);
    payload["to"] = to_string(t.to);
    if (t.exit_code) payload["exit_code"] = *t.exit_code;
    store.append(spec.tale_id, ProvenanceKind::job_state_change, std::move(payload), t.at);
  });
}

}  // namespace talescale::lrm
