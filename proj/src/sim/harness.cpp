#include "talescale/sim/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

#include "talescale/errors.hpp"
#include "talescale/lrm/dialect.hpp"
#include "talescale/lrm/middleware.hpp"
#include "talescale/rng.hpp"
#include "talescale/sim/backend.hpp"

namespace talescale::sim {

using ojson = nlohmann::ordered_json;

namespace {

const std::set<std::string> kActionKinds = {"submit",   "cancel", "launch_frontend", "workload",
                                            "open",     "prefetch", "fuzz"};

Duration duration_from(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity" || s == "forever") return kForever;
    throw ConfigError("bad duration '" + s + "'");
  }
  return j.get<double>();
}

std::vector<std::string> command_from(const nlohmann::json& j) {
  if (j.is_array()) return j.get<std::vector<std::string>>();
  return lrm::shell_split(j.get<std::string>());
}

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

Scenario parse_scenario(const nlohmann::json& j) {
  Scenario s;
  if (j.contains("poll_interval")) s.poll_interval = duration_from(j.at("poll_interval"));
  if (j.contains("idle_ttl")) s.idle_ttl = duration_from(j.at("idle_ttl"));
  s.image_load = j.value("image_load", s.image_load);
  s.dispatch_overhead = j.value("dispatch_overhead", s.dispatch_overhead);
  s.default_runtime = j.value("default_runtime", s.default_runtime);
  if (j.contains("credentials")) s.credentials = j.at("credentials").get<std::vector<std::string>>();
  s.warmup = j.value("warmup", 0.0);
  if (j.contains("requirements")) s.requirements = j.at("requirements").get<WorkloadRequirements>();
  for (const auto& a : j.value("actions", nlohmann::json::array())) {
    ScenarioAction act;
    act.at = a.value("at", 0.0);
    act.kind = a.at("kind").get<std::string>();
    if (!kActionKinds.contains(act.kind)) {
      throw ConfigError("unknown scenario action '" + act.kind + "'");
    }
    if (act.at < 0) throw ConfigError("action time must be >= 0");
    act.args = a;
    act.args.erase("at");
    act.args.erase("kind");
    auto need = [&](const char* field) {
      if (!act.args.contains(field)) {
        throw ConfigError("action '" + act.kind + "' needs '" + field + "'");
      }
    };
    if (act.kind == "submit" || act.kind == "workload") need("resource");
    if (act.kind == "cancel") need("job");
    if (act.kind == "launch_frontend") need("model");
    if (act.kind == "open") need("uri");
    if (act.kind == "prefetch") need("uris");
    if (act.kind == "submit" || act.kind == "workload") {
      command_from(act.args.value("command", nlohmann::json("sleep 60")));
    }
    if (act.args.value("count", 1) < 0) throw ConfigError("action count must be >= 0");
    s.actions.push_back(std::move(act));
  }
  for (const auto& o : j.value("outages", nlohmann::json::array())) {
    s.outages.push_back({o.at("resource").get<std::string>(), o.at("start").get<double>(),
                         o.at("end").get<double>()});
  }
  if (!(s.poll_interval > 0)) throw ConfigError("poll_interval must be > 0");
  if (s.credentials.empty()) throw ConfigError("scenario needs at least one credential");
  return s;
}

}  // namespace

World parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "resources" && key != "queues" && key != "pools" && key != "cache" &&
        key != "scenario") {
      throw ConfigError("unknown config section '" + key + "'");
    }
  }
  World w;
  try {
    nlohmann::json inv = {{"resources", j.value("resources", nlohmann::json::array())}};
    if (j.contains("queues")) inv["queues"] = j.at("queues");
    w.inventory = parse_inventory(inv);
    if (w.inventory.empty()) throw ConfigError("config defines no resources");

    if (j.contains("scenario")) w.scenario = parse_scenario(j.at("scenario"));
    w.scenario.requirements.validate();

    std::set<std::string> pooled;
    int index = 0;
    for (const auto& p : j.value("pools", nlohmann::json::array())) {
      PoolConfig pc;
      pc.name = p.value("name", "pool-" + std::to_string(index++));
      pc.policy = p.get<PoolPolicy>();
      if (!p.contains("dispatch_overhead")) {
        pc.policy.dispatch_overhead = w.scenario.dispatch_overhead;
      }
      if (!p.contains("credential")) pc.policy.credential = w.scenario.credentials.front();
      const auto* r = find_resource(w.inventory, pc.policy.resource);
      if (!r) {
        throw ConfigError("pool '" + pc.name + "' references unknown resource '" +
                          pc.policy.resource + "'");
      }
      if (!r->is_batch_hpc()) {
        throw ConfigError("pool '" + pc.name + "' needs a batch resource, '" + r->name +
                          "' is not one");
      }
      if (!pooled.insert(r->name).second) {
        throw ConfigError("pool '" + pc.name + "' duplicates the pool on '" + r->name + "'");
      }
      try {
        pc.policy.validate();
      } catch (const ValidationError& e) {
        throw ConfigError("pool '" + pc.name + "': " + e.what());
      }
      w.pools.push_back(std::move(pc));
    }

    if (j.contains("cache")) {
      const auto& c = j.at("cache");
      CacheSection cs;
      cs.config.capacity_bytes = c.value("capacity_bytes", cs.config.capacity_bytes);
      cs.config.bandwidth_bytes_per_s =
          c.value("bandwidth_bytes_per_s", cs.config.bandwidth_bytes_per_s);
      cs.config.root = c.value("root", cs.config.root);
      cs.datasets = c.value("datasets", nlohmann::json::array()).get<std::vector<ExternalDataRef>>();
      if (!(cs.config.bandwidth_bytes_per_s > 0)) {
        throw ConfigError("cache bandwidth must be > 0");
      }
      DataCatalog probe;  // surfaces bad checksums and duplicate uris now
      for (const auto& d : cs.datasets) probe.register_dataset(d.uri, d.size_bytes, d.checksum);
      w.cache = std::move(cs);
    }

    for (const auto& a : w.scenario.actions) {
      if (a.args.contains("resource")) {
        const auto name = a.args.at("resource").get<std::string>();
        if (!find_resource(w.inventory, name)) {
          throw ConfigError("action '" + a.kind + "' references unknown resource '" + name +
                            "'");
        }
      }
      if (a.kind == "launch_frontend") parse_model(a.args.at("model").get<std::string>());
    }
    for (const auto& o : w.scenario.outages) {
      if (!find_resource(w.inventory, o.resource)) {
        throw ConfigError("outage references unknown resource '" + o.resource + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return w;
}

World load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// ---- simulation ------------------------------------------------------------

namespace {

class Simulation {
 public:
  Simulation(const World& world, std::uint64_t seed, Duration horizon, RunOptions options)
      : world_(world),
        seed_(seed),
        horizon_(horizon),
        options_(options),
        transport_(clock_),
        fuzz_rng_(mix_seed(seed, fnv1a("fuzz"))) {}

  RunResult go();

 private:
  void trace(const std::string& kind, ojson fields = ojson::object());
  void build();
  void schedule_actions();
  void dispatch(const ScenarioAction& a);

  std::optional<std::string> do_submit(const nlohmann::json& args, const std::string& name);
  void do_cancel(const std::string& job);
  void do_launch(const nlohmann::json& args);
  void do_workload(const nlohmann::json& args);
  void do_open(const std::string& uri);
  void do_fuzz(const nlohmann::json& args);

  void frontend_ready(std::size_t idx);
  void on_backend(const BackendEvent& e);
  Duration runtime_of(const std::vector<std::string>& argv) const;
  Rng& direct_rng(const ResourceDescriptor& r);
  bool done() const { return remaining_actions_ == 0 && frontends_pending_ == 0; }
  void finalize();

  const World& world_;
  std::uint64_t seed_;
  Duration horizon_;
  RunOptions options_;

  SimClock clock_;
  SimTransport transport_;
  std::map<std::string, std::unique_ptr<SimLrm>> lrms_;
  std::unique_ptr<lrm::Middleware> mw_;
  std::map<std::string, std::unique_ptr<PilotPool>> pools_;
  DataCatalog catalog_;
  SimDataSource source_;
  std::unique_ptr<DmsCache> cache_;
  std::map<std::string, Rng> direct_rngs_;
  Rng fuzz_rng_;

  std::string trace_;
  std::uint64_t seq_ = 0;
  ScenarioMetrics m_;

  struct Frontend {
    std::string model;
    SimTime requested = 0;
    std::optional<double> ttf;
  };
  std::vector<Frontend> frontends_;
  std::map<std::string, std::size_t> frontend_jobs_;  // backend job name -> frontend
  std::map<std::string, SimTime> workload_jobs_;      // backend job name -> arrival
  std::set<std::string> batch_jobs_;
  std::size_t frontends_pending_ = 0;
  std::size_t remaining_actions_ = 0;
  std::uint64_t next_workload_ = 1;
};

void Simulation::trace(const std::string& kind, ojson fields) {
  ++seq_;
  if (!options_.keep_trace) return;
  ojson line;
  line["t"] = clock_.now();
  line["seq"] = seq_;
  line["kind"] = kind;
  for (auto& [k, v] : fields.items()) line[k] = std::move(v);
  trace_ += line.dump();
  trace_ += '\n';
}

Rng& Simulation::direct_rng(const ResourceDescriptor& r) {
  auto it = direct_rngs_.find(r.name);
  if (it == direct_rngs_.end()) {
    const auto qseed = r.queue_model ? r.queue_model->seed : 0;
    it = direct_rngs_
             .emplace(r.name, Rng(mix_seed(mix_seed(seed_, qseed), fnv1a("direct:" + r.name))))
             .first;
  }
  return it->second;
}

void Simulation::build() {
  const auto& sc = world_.scenario;
  lrm::MiddlewareConfig mc;
  mc.poller.interval = sc.poll_interval;
  mc.idle_ttl = sc.idle_ttl;
  mw_ = std::make_unique<lrm::Middleware>(clock_, transport_, mc);

  for (const auto& r : world_.inventory) {
    mw_->add_resource(r);
    if (r.dialect.empty()) continue;
    auto lrm = std::make_unique<SimLrm>(r, clock_, seed_, sc.default_runtime);
    lrm->add_listener([this](const BackendEvent& e) { on_backend(e); });
    transport_.attach(*lrm);
    lrms_.emplace(r.name, std::move(lrm));
  }
  for (const auto& c : sc.credentials) mw_->add_credential(c);
  for (const auto& p : world_.pools) mw_->add_credential(p.policy.credential);
  for (const auto& o : sc.outages) transport_.add_outage(o.resource, o.start, o.end);

  mw_->add_listener([this](const lrm::JobHandle& h, const lrm::JobSpec&, const lrm::Transition& t) {
    ++m_.transitions;
    const bool legal = lrm::is_legal_transition(t.from, t.to);
    if (!legal) ++m_.illegal_transitions;
    ojson f = {{"job", h.job_id},
               {"resource", h.resource},
               {"from", lrm::to_string(t.from)},
               {"to", lrm::to_string(t.to)}};
    if (t.exit_code) f["exit_code"] = *t.exit_code;
    if (!legal) f["illegal"] = true;
    trace("job_transition", std::move(f));
  });
  mw_->set_log_listener([this](const lrm::TransportLogEntry& e) {
    trace("transport", {{"resource", e.resource},
                        {"credential", e.credential},
                        {"verb", e.verb},
                        {"digest", e.payload_digest}});
  });

  if (world_.cache) {
    for (const auto& d : world_.cache->datasets) {
      catalog_.register_dataset(d.uri, d.size_bytes, d.checksum);
    }
  }
  for (const auto& d : sc.requirements.datasets) {
    if (!catalog_.find(d.uri)) catalog_.register_dataset(d.uri, d.size_bytes, d.checksum);
  }
  cache_ = std::make_unique<DmsCache>(world_.cache ? world_.cache->config : CacheConfig{},
                                      catalog_, clock_, &source_);
  cache_->set_transfer_listener([this](const TransferRecord& r) {
    ojson f = {{"uri", r.ref.uri},
               {"source", to_string(r.source)},
               {"bytes", r.bytes},
               {"started", r.started},
               {"finished", r.finished}};
    if (!r.resource.empty()) f["resource"] = r.resource;
    trace("transfer", std::move(f));
  });

  for (const auto& p : world_.pools) {
    trace("pool_configured", {{"pool", p.name},
                              {"resource", p.policy.resource},
                              {"min_warm", p.policy.min_warm},
                              {"max_size", p.policy.max_size}});
    pools_.emplace(p.policy.resource, std::make_unique<PilotPool>(p.policy, *mw_, clock_));
  }
}

void Simulation::schedule_actions() {
  for (const auto& a : world_.scenario.actions) {
    const int count = a.args.value("count", 1);
    const double every = a.args.value("every", 0.0);
    for (int k = 0; k < count; ++k) {
      const SimTime at = world_.scenario.warmup + a.at + k * every;
      ++remaining_actions_;
      clock_.schedule_at(at, [this, &a] {
        --remaining_actions_;
        dispatch(a);
      });
    }
  }
}

void Simulation::dispatch(const ScenarioAction& a) {
  if (a.kind == "submit") {
    do_submit(a.args, "");
  } else if (a.kind == "cancel") {
    do_cancel(a.args.at("job").get<std::string>());
  } else if (a.kind == "launch_frontend") {
    do_launch(a.args);
  } else if (a.kind == "workload") {
    do_workload(a.args);
  } else if (a.kind == "open") {
    do_open(a.args.at("uri").get<std::string>());
  } else if (a.kind == "prefetch") {
    for (const auto& uri : a.args.at("uris")) do_open(uri.get<std::string>());
  } else if (a.kind == "fuzz") {
    do_fuzz(a.args);
  }
}

std::optional<std::string> Simulation::do_submit(const nlohmann::json& args,
                                                 const std::string& name) {
  lrm::JobSpec spec;
  spec.resource = args.at("resource").get<std::string>();
  spec.command = command_from(args.value("command", nlohmann::json("sleep 60")));
  spec.credential = args.value("credential", world_.scenario.credentials.front());
  spec.node_count = args.value("nodes", 1);
  spec.mpi = args.value("mpi", false);
  spec.walltime = args.value("walltime", spec.walltime);
  spec.tale_id = args.value("tale_id", std::string());
  spec.job_name = name;
  try {
    const auto h = mw_->submit(spec);
    batch_jobs_.insert(h.job_id);
    return h.job_id;
  } catch (const Error& e) {
    trace("submit_rejected", {{"resource", spec.resource}, {"error", e.what()}});
    return std::nullopt;
  }
}

void Simulation::do_cancel(const std::string& job) {
  try {
    const bool sent = mw_->cancel(job);
    trace("cancel_requested", {{"job", job}, {"sent", sent}});
  } catch (const Error& e) {
    trace("cancel_failed", {{"job", job}, {"error", e.what()}});
  }
}

void Simulation::do_launch(const nlohmann::json& args) {
  const auto model = parse_model(args.at("model").get<std::string>());
  const auto& sc = world_.scenario;
  PlanOptions po;
  po.image_load = sc.image_load;
  po.dispatch_overhead = sc.dispatch_overhead;
  po.credential = sc.credentials.front();
  if (args.contains("resource")) po.frontend_override = args.at("resource").get<std::string>();

  const auto idx = frontends_.size();
  frontends_.push_back({short_name(model), clock_.now(), std::nullopt});
  const auto plan = plan_for_model(sc.requirements, world_.inventory, model, po);
  if (!plan) {
    trace("frontend_infeasible", {{"frontend", idx}, {"model", short_name(model)}});
    return;
  }
  ++frontends_pending_;
  trace("frontend_requested", {{"frontend", idx},
                               {"model", short_name(model)},
                               {"resource", plan->frontend_resource},
                               {"proxy_required", plan->proxy_required}});

  for (const auto& action : plan->staging_actions) {
    if (action.action == StagingKind::mount) {
      trace("mount", {{"uri", action.ref.uri}, {"resource", action.resource}});
      continue;
    }
    try {
      cache_->apply(action);
    } catch (const Error& e) {
      trace("staging_failed", {{"uri", action.ref.uri}, {"error", e.what()}});
    }
  }

  const auto& res = *find_resource(world_.inventory, plan->frontend_resource);
  const bool multi = model == ExecutionModel::M4_hpc_mpi;
  const int nodes = multi ? std::max(1, sc.requirements.min_nodes) : 1;
  if (res.is_batch_hpc()) {
    lrm::JobSpec spec;
    spec.resource = res.name;
    spec.command = {"frontend"};
    spec.credential = po.credential;
    spec.node_count = nodes;
    spec.mpi = multi && sc.requirements.needs_mpi;
    spec.job_name = "fe-" + std::to_string(idx);
    if (auto pit = pools_.find(res.name); pit != pools_.end()) {
      if (auto slot = pit->second->claim(spec, spec.job_name)) {
        trace("pilot_claimed", {{"frontend", idx}, {"slot", slot->slot_id}});
        clock_.schedule_after(pit->second->dispatch_overhead() + sc.image_load,
                              [this, idx] { frontend_ready(idx); });
        return;
      }
    }
    frontend_jobs_[spec.job_name] = idx;
    try {
      const auto h = mw_->submit(spec);
      if (mw_->status(h).state == lrm::JobState::failed) {
        trace("frontend_failed", {{"frontend", idx}, {"job", h.job_id}});
        --frontends_pending_;
      }
    } catch (const Error& e) {
      trace("frontend_failed", {{"frontend", idx}, {"error", e.what()}});
      --frontends_pending_;
    }
    return;
  }
  Duration wait = 0;
  if (res.kind == ResourceKind::hpc_cluster && res.queue_model) {
    wait = sample_queue_wait(*res.queue_model, direct_rng(res), clock_.now());
  }
  clock_.schedule_after(wait + sc.image_load, [this, idx] { frontend_ready(idx); });
}

void Simulation::frontend_ready(std::size_t idx) {
  auto& fe = frontends_[idx];
  fe.ttf = clock_.now() - fe.requested;
  --frontends_pending_;
  trace("frontend_ready", {{"frontend", idx}, {"model", fe.model}, {"time_to_frontend", *fe.ttf}});
}

Duration Simulation::runtime_of(const std::vector<std::string>& argv) const {
  if (argv.size() >= 2 && argv[0] == "sleep") {
    double v = 0;
    const auto& a = argv[1];
    auto [ptr, ec] = std::from_chars(a.data(), a.data() + a.size(), v);
    if (ec == std::errc() && ptr == a.data() + a.size()) return v;
  }
  return world_.scenario.default_runtime;
}

void Simulation::do_workload(const nlohmann::json& args) {
  lrm::JobSpec spec;
  spec.resource = args.at("resource").get<std::string>();
  spec.command = command_from(args.value("command", nlohmann::json("sleep 600")));
  spec.credential = args.value("credential", world_.scenario.credentials.front());
  spec.node_count = args.value("nodes", 1);
  const auto name = "wl-" + std::to_string(next_workload_++);
  const auto arrival = clock_.now();
  trace("workload_arrived", {{"workload", name}, {"resource", spec.resource}});

  if (auto pit = pools_.find(spec.resource); pit != pools_.end()) {
    auto& pool = *pit->second;
    if (auto slot = pool.claim(spec, name)) {
      const auto latency = pool.dispatch_overhead();
      m_.workload_start_latencies.push_back(latency);
      const auto runtime = runtime_of(spec.command);
      const auto slot_id = slot->slot_id;
      clock_.schedule_after(latency, [this, name, slot_id, latency] {
        trace("workload_started",
              {{"workload", name}, {"via", "pilot"}, {"slot", slot_id}, {"latency", latency}});
      });
      clock_.schedule_after(latency + runtime, [this, name, slot_id, &pool] {
        trace("workload_finished", {{"workload", name}, {"slot", slot_id}});
        pool.release(slot_id);
      });
      return;
    }
  }
  workload_jobs_[name] = arrival;
  nlohmann::json a = args;
  a["command"] = spec.command;
  do_submit(a, name);
}

void Simulation::do_open(const std::string& uri) {
  try {
    const auto h = cache_->open(uri);
    trace("open", {{"uri", uri}, {"local_path", h.local_path}});
  } catch (const Error& e) {
    trace("open_failed", {{"uri", uri}, {"error", e.what()}});
  }
}

void Simulation::do_fuzz(const nlohmann::json& args) {
  const int jobs = args.value("jobs", 100);
  const double span = args.value("span", 3600.0);
  const double cancel_fraction = args.value("cancel_fraction", 0.1);
  const double fail_fraction = args.value("fail_fraction", 0.1);
  const double max_runtime = args.value("max_runtime", 600.0);
  std::vector<std::string> resources;
  if (args.contains("resources")) {
    resources = args.at("resources").get<std::vector<std::string>>();
  } else {
    for (const auto& r : world_.inventory) {
      if (!r.dialect.empty()) resources.push_back(r.name);
    }
  }
  if (resources.empty()) {
    trace("fuzz_skipped", {{"reason", "no batch resources"}});
    return;
  }
  // Draw everything up front so the stream of random numbers does not depend
  // on how the jobs later interleave.
  const auto base = clock_.now();
  for (int i = 0; i < jobs; ++i) {
    const auto& resource = resources[fuzz_rng_.below(resources.size())];
    const auto at = base + std::floor(fuzz_rng_.uniform(0, span));
    const auto runtime = 1 + std::floor(fuzz_rng_.uniform(0, max_runtime));
    nlohmann::json job = {{"resource", resource}};
    if (fuzz_rng_.chance(fail_fraction)) {
      job["command"] = {"fail", std::to_string(1 + fuzz_rng_.below(250)), fmt_double(runtime)};
    } else {
      job["command"] = {"sleep", fmt_double(runtime)};
    }
    const bool cancel = fuzz_rng_.chance(cancel_fraction);
    const auto cancel_after = fuzz_rng_.uniform(0, 2 * max_runtime);
    clock_.schedule_at(at, [this, job, cancel, cancel_after] {
      const auto id = do_submit(job, "");
      if (!cancel || !id) return;
      clock_.schedule_after(cancel_after, [this, id = *id] { do_cancel(id); });
    });
  }
}

void Simulation::on_backend(const BackendEvent& e) {
  trace(to_string(e.kind), [&] {
    ojson f = {{"resource", e.resource}, {"native", e.native_id}, {"name", e.job_name}};
    if (e.exit_code) f["exit_code"] = *e.exit_code;
    return f;
  }());
  if (e.kind != BackendEvent::Kind::started) return;
  if (auto it = frontend_jobs_.find(e.job_name); it != frontend_jobs_.end()) {
    const auto idx = it->second;
    frontend_jobs_.erase(it);
    clock_.schedule_after(world_.scenario.image_load, [this, idx] { frontend_ready(idx); });
  } else if (auto wit = workload_jobs_.find(e.job_name); wit != workload_jobs_.end()) {
    const auto latency = e.time - wit->second;
    m_.workload_start_latencies.push_back(latency);
    trace("workload_started", {{"workload", e.job_name}, {"via", "direct"}, {"latency", latency}});
    workload_jobs_.erase(wit);
  }
}

void Simulation::finalize() {
  for (const auto& id : batch_jobs_) {
    const auto st = mw_->status(id);
    if (lrm::is_terminal(st.state)) continue;
    const auto& resource = mw_->spec(id).resource;
    auto it = lrms_.find(resource);
    if (st.state == lrm::JobState::queued && it != lrms_.end() &&
        it->second->is_held(mw_->native_id(id))) {
      ++m_.held_at_horizon;
    } else {
      ++m_.unfinished_at_horizon;
    }
  }
  const auto c = mw_->counters();
  m_.jobs = mw_->job_ids().size();
  m_.handshakes = c.handshakes;
  for (const auto& r : world_.inventory) {
    const auto q = mw_->batch_queries(r.name);
    if (q > 0) m_.backend_queries[r.name] = q;
  }
  for (const auto& t : cache_->transfers()) {
    ++m_.transfers;
    m_.transfer_bytes += t.bytes;
  }
  for (const auto& fe : frontends_) {
    m_.rows.push_back({fe.model, seed_, fe.ttf, c.batch_queries, c.handshakes, m_.transfers});
    if (fe.ttf) m_.time_to_frontend[fe.model].push_back(*fe.ttf);
  }
  trace("run_end", {{"jobs", m_.jobs},
                    {"transitions", m_.transitions},
                    {"handshakes", m_.handshakes},
                    {"transfers", m_.transfers}});
}

RunResult Simulation::go() {
  if (!(horizon_ > 0)) throw ValidationError("horizon must be > 0");
  trace("run_start", {{"seed", seed_}, {"horizon", horizon_}});
  build();
  schedule_actions();
  bool stopped_early = false;
  while (true) {
    const auto next = clock_.next_event_time();
    if (!next || *next > horizon_) break;
    clock_.step();
    if (options_.stop_when_frontends_ready && done()) {
      stopped_early = true;
      break;
    }
  }
  if (!stopped_early) clock_.advance_to(horizon_);
  finalize();
  // Pools and the middleware hold clock events; drop them in dependency order.
  pools_.clear();
  mw_.reset();
  return RunResult{std::move(trace_), std::move(m_)};
}

}  // namespace

RunResult run(const World& world, std::uint64_t seed, Duration horizon, const RunOptions& options) {
  Simulation sim(world, seed, horizon, options);
  return sim.go();
}

ScenarioMetrics measure_models(const World& world, const WorkloadRequirements& req,
                               const std::vector<std::uint64_t>& seeds, Duration horizon) {
  ScenarioMetrics out;
  for (const auto& f : enumerate_feasible_models(req, world.inventory)) {
    if (!f.feasible) continue;
    World w = world;
    w.scenario.requirements = req;
    w.scenario.actions = {ScenarioAction{0, "launch_frontend", {{"model", short_name(f.model)}}}};
    for (const auto seed : seeds) {
      auto r = run(w, seed, horizon, RunOptions{true, false});
      for (auto& row : r.metrics.rows) out.rows.push_back(row);
      for (auto& [model, xs] : r.metrics.time_to_frontend) {
        auto& dst = out.time_to_frontend[model];
        dst.insert(dst.end(), xs.begin(), xs.end());
      }
      for (const auto& [res, q] : r.metrics.backend_queries) out.backend_queries[res] += q;
      out.handshakes += r.metrics.handshakes;
      out.transfers += r.metrics.transfers;
      out.transfer_bytes += r.metrics.transfer_bytes;
      out.jobs += r.metrics.jobs;
      out.transitions += r.metrics.transitions;
      out.illegal_transitions += r.metrics.illegal_transitions;
    }
  }
  return out;
}

LiveWorld::LiveWorld(const World& world, std::uint64_t seed)
    : clock_(std::make_unique<SimClock>()),
      transport_(std::make_unique<SimTransport>(*clock_)) {
  const auto& sc = world.scenario;
  lrm::MiddlewareConfig mc;
  mc.poller.interval = sc.poll_interval;
  mc.idle_ttl = sc.idle_ttl;
  middleware_ = std::make_unique<lrm::Middleware>(*clock_, *transport_, mc);
  for (const auto& r : world.inventory) {
    middleware_->add_resource(r);
    if (r.dialect.empty()) continue;
    auto lrm = std::make_unique<SimLrm>(r, *clock_, seed, sc.default_runtime);
    transport_->attach(*lrm);
    lrms_.emplace(r.name, std::move(lrm));
  }
  for (const auto& c : sc.credentials) middleware_->add_credential(c);
  for (const auto& p : world.pools) middleware_->add_credential(p.policy.credential);
  for (const auto& o : sc.outages) transport_->add_outage(o.resource, o.start, o.end);
  for (const auto& p : world.pools) {
    pools_.push_back(std::make_unique<PilotPool>(p.policy, *middleware_, *clock_));
  }
}

LiveWorld::~LiveWorld() {
  pools_.clear();
  middleware_.reset();
}

// ---- reporting -------------------------------------------------------------

double median(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const auto n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

void to_json(nlohmann::json& j, const ReportRow& r) {
  j = {{"model", r.model},
       {"seed", r.seed},
       {"time_to_frontend_s", r.time_to_frontend_s ? nlohmann::json(*r.time_to_frontend_s)
                                                   : nlohmann::json(nullptr)},
       {"queries", r.queries},
       {"handshakes", r.handshakes},
       {"transfers", r.transfers}};
}

void from_json(const nlohmann::json& j, ReportRow& r) {
  r = ReportRow{};
  r.model = j.at("model").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("time_to_frontend_s").is_null()) {
    r.time_to_frontend_s = j.at("time_to_frontend_s").get<double>();
  }
  r.queries = j.at("queries").get<std::uint64_t>();
  r.handshakes = j.at("handshakes").get<std::uint64_t>();
  r.transfers = j.at("transfers").get<std::uint64_t>();
}

void to_json(nlohmann::json& j, const ScenarioMetrics& m) {
  j = {{"rows", m.rows},
       {"time_to_frontend", m.time_to_frontend},
       {"backend_queries", m.backend_queries},
       {"handshakes", m.handshakes},
       {"transfers", m.transfers},
       {"transfer_bytes", m.transfer_bytes},
       {"workload_start_latencies", m.workload_start_latencies},
       {"jobs", m.jobs},
       {"transitions", m.transitions},
       {"illegal_transitions", m.illegal_transitions},
       {"held_at_horizon", m.held_at_horizon},
       {"unfinished_at_horizon", m.unfinished_at_horizon}};
}

void from_json(const nlohmann::json& j, ScenarioMetrics& m) {
  m = ScenarioMetrics{};
  m.rows = j.at("rows").get<std::vector<ReportRow>>();
  m.time_to_frontend = j.at("time_to_frontend").get<std::map<std::string, std::vector<double>>>();
  m.backend_queries = j.at("backend_queries").get<std::map<std::string, std::uint64_t>>();
  m.handshakes = j.at("handshakes").get<std::uint64_t>();
  m.transfers = j.at("transfers").get<std::uint64_t>();
  m.transfer_bytes = j.at("transfer_bytes").get<std::uint64_t>();
  m.workload_start_latencies = j.at("workload_start_latencies").get<std::vector<double>>();
  m.jobs = j.at("jobs").get<std::uint64_t>();
  m.transitions = j.at("transitions").get<std::uint64_t>();
  m.illegal_transitions = j.at("illegal_transitions").get<std::uint64_t>();
  m.held_at_horizon = j.at("held_at_horizon").get<std::uint64_t>();
  m.unfinished_at_horizon = j.at("unfinished_at_horizon").get<std::uint64_t>();
}

ReportFormat parse_report_format(const std::string& s) {
  if (s == "table") return ReportFormat::table;
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw ValidationError("unknown report format '" + s + "' (expected table, json or csv)");
}

std::string emit_report(const ScenarioMetrics& m, ReportFormat format) {
  switch (format) {
    case ReportFormat::json: return nlohmann::json(m).dump(2) + "\n";
    case ReportFormat::csv: {
      std::string out = std::string(kCsvHeader) + "\n";
      for (const auto& r : m.rows) {
        out += r.model + "," + std::to_string(r.seed) + "," +
               (r.time_to_frontend_s ? fmt_double(*r.time_to_frontend_s) : "") + "," +
               std::to_string(r.queries) + "," + std::to_string(r.handshakes) + "," +
               std::to_string(r.transfers) + "\n";
      }
      return out;
    }
    case ReportFormat::table: {
      std::string out;
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-6s %8s %14s %8s %10s %9s\n", "model", "seed", "ttf_s",
                    "queries", "handshakes", "transfers");
      out += buf;
      for (const auto& r : m.rows) {
        const auto ttf = r.time_to_frontend_s ? fmt_double(*r.time_to_frontend_s) : "-";
        std::snprintf(buf, sizeof buf, "%-6s %8llu %14s %8llu %10llu %9llu\n", r.model.c_str(),
                      static_cast<unsigned long long>(r.seed), ttf.c_str(),
                      static_cast<unsigned long long>(r.queries),
                      static_cast<unsigned long long>(r.handshakes),
                      static_cast<unsigned long long>(r.transfers));
        out += buf;
      }
      if (!m.time_to_frontend.empty()) {
        out += "\n";
        std::snprintf(buf, sizeof buf, "%-6s %8s %14s\n", "model", "n", "median_ttf_s");
        out += buf;
        for (const auto& [model, xs] : m.time_to_frontend) {
          std::snprintf(buf, sizeof buf, "%-6s %8zu %14.3f\n", model.c_str(), xs.size(),
                        median(xs));
          out += buf;
        }
      }
      return out;
    }
  }
  return {};
}

}  // namespace talescale::sim
