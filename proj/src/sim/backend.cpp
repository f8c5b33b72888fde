#include "talescale/sim/backend.hpp"

#include <algorithm>
#include <sstream>

#include "talescale/errors.hpp"
#include "talescale/lrm/dialect.hpp"
#include "talescale/queue_model.hpp"

namespace talescale::sim {

namespace {

Duration parse_hms(const std::string& s) {
  int h = 0, m = 0, sec = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> h >> c1 >> m >> c2 >> sec) || c1 != ':' || c2 != ':') {
    throw ValidationError("bad walltime '" + s + "'");
  }
  return h * 3600.0 + m * 60.0 + sec;
}

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.rfind(prefix, 0) == 0;
}

lrm::CommandResult usage(const std::string& msg) { return {2, msg}; }

}  // namespace

std::string to_string(BackendEvent::Kind k) {
  switch (k) {
    case BackendEvent::Kind::submitted: return "backend_submit";
    case BackendEvent::Kind::started: return "backend_start";
    case BackendEvent::Kind::finished: return "backend_end";
  }
  return "?";
}

SimLrm::SimLrm(ResourceDescriptor resource, Scheduler& scheduler, std::uint64_t seed,
               Duration default_runtime)
    : resource_(std::move(resource)),
      scheduler_(scheduler),
      rng_(mix_seed(mix_seed(seed, resource_.queue_model ? resource_.queue_model->seed : 0),
                    fnv1a(resource_.name))),
      default_runtime_(default_runtime) {}

lrm::CommandResult SimLrm::execute(const std::string& command) {
  std::vector<std::string> args;
  try {
    args = lrm::shell_split(command);
  } catch (const ValidationError& e) {
    return usage(e.what());
  }
  if (args.empty()) return usage("empty command");
  const auto& verb = args[0];
  if (verb == "qsub" || verb == "sbatch") {
    try {
      return submit(args, verb == "sbatch");
    } catch (const std::exception& e) {
      return usage(verb + ": malformed option: " + e.what());
    }
  }
  if (verb == "qstat") {
    std::vector<std::string> ids;
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (args[i] != "-x") ids.push_back(args[i]);
    }
    return status(ids, false);
  }
  if (verb == "sacct") {
    std::vector<std::string> ids;
    for (std::size_t i = 1; i + 1 < args.size(); ++i) {
      if (args[i] == "-j") {
        std::stringstream list(args[i + 1]);
        std::string id;
        while (std::getline(list, id, ',')) ids.push_back(id);
      }
    }
    return status(ids, true);
  }
  if (verb == "qdel" || verb == "scancel") {
    if (args.size() != 2) return usage(verb + ": expected one job id");
    return cancel(args[1]);
  }
  return {127, verb + ": command not found"};
}

lrm::CommandResult SimLrm::submit(const std::vector<std::string>& args, bool slurm) {
  Job job;
  int nodes = 1;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const auto& a = args[i];
    if (!slurm) {
      if (a == "--") {
        job.argv.assign(args.begin() + static_cast<long>(i) + 1, args.end());
        break;
      }
      if ((a == "-N" || a == "-l" || a == "-v") && i + 1 < args.size()) {
        const auto& v = args[++i];
        if (a == "-N") {
          job.name = v;
        } else if (a == "-l" && starts_with(v, "nodes=")) {
          nodes = std::stoi(v.substr(6));
        } else if (a == "-l" && starts_with(v, "walltime=")) {
          job.walltime = parse_hms(v.substr(9));
        }
        continue;
      }
    } else {
      if (starts_with(a, "--job-name=")) {
        job.name = a.substr(11);
      } else if (starts_with(a, "--nodes=")) {
        nodes = std::stoi(a.substr(8));
      } else if (starts_with(a, "--time=")) {
        job.walltime = std::stod(a.substr(7)) * 60.0;
      } else if (starts_with(a, "--wrap=")) {
        job.argv = lrm::shell_split(a.substr(7));
      }
    }
  }
  if (job.argv.empty()) return usage("no command given");
  if (nodes > resource_.node_count) {
    return {1, "requested nodes exceed " + std::to_string(resource_.node_count)};
  }

  const auto now = scheduler_.now();
  const auto n = next_id_++;
  job.native_id = slurm ? std::to_string(n) : std::to_string(n) + "." + resource_.name;
  job.submitted = now;
  const auto id = job.native_id;

  const QueueModel qm = resource_.queue_model.value_or(QueueModel{});
  const Duration wait = sample_queue_wait(qm, rng_, now);
  SimTime start_at = now + wait;
  // Under the fail policy a job still waiting when a window opens (or
  // submitted inside one) is killed by the site; under hold it starts after.
  std::optional<SimTime> cancel_at;
  if (qm.maintenance_policy == MaintenancePolicy::fail) {
    if (qm.window_at(now)) cancel_at = now;
    for (const auto& w : qm.maintenance_windows) {
      if (w.start > now && w.start <= start_at && (!cancel_at || w.start < *cancel_at)) {
        cancel_at = w.start;
      }
    }
  } else {
    if (qm.window_at(now)) {
      job.hold_from = now;
    } else if (const auto* w = qm.window_at(start_at)) {
      job.hold_from = w->start;
    }
    start_at = first_start_outside_maintenance(qm, start_at);
  }

  auto& stored = jobs_.emplace(id, std::move(job)).first->second;
  emit(BackendEvent::Kind::submitted, stored);
  if (cancel_at) {
    stored.pending_event = scheduler_.schedule_at(
        *cancel_at, [this, id] { finish(id, lrm::kExitCanceled); });
  } else {
    stored.pending_event = scheduler_.schedule_at(start_at, [this, id] { start(id); });
  }
  return {0, id + "\n"};
}

void SimLrm::start(const std::string& id) {
  auto& job = jobs_.at(id);
  job.state = State::running;
  job.started = scheduler_.now();
  emit(BackendEvent::Kind::started, job);

  Duration runtime = default_runtime_;
  int exit_code = 0;
  const auto& cmd = job.argv.front();
  try {
    if (cmd == "sleep" && job.argv.size() >= 2) {
      runtime = std::stod(job.argv[1]);
    } else if (cmd == "fail" && job.argv.size() >= 2) {
      exit_code = std::stoi(job.argv[1]);
      runtime = job.argv.size() >= 3 ? std::stod(job.argv[2]) : 0.0;
    } else if (cmd == "pilot" || cmd == "frontend") {
      runtime = kForever;
    }
  } catch (const std::exception&) {
    exit_code = 2;
    runtime = 0;
  }
  if (runtime > job.walltime) {
    runtime = job.walltime;
    exit_code = lrm::kExitWalltime;
  }
  job.pending_event =
      scheduler_.schedule_after(runtime, [this, id, exit_code] { finish(id, exit_code); });
}

void SimLrm::finish(const std::string& id, int exit_code) {
  auto& job = jobs_.at(id);
  if (job.state == State::finished) return;
  job.state = State::finished;
  job.exit_code = exit_code;
  job.pending_event = 0;
  emit(BackendEvent::Kind::finished, job, exit_code);
}

lrm::CommandResult SimLrm::cancel(const std::string& id) {
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return {1, "unknown job id " + id};
  auto& job = it->second;
  if (job.state == State::finished) return {0, ""};
  if (job.pending_event) scheduler_.cancel(job.pending_event);
  finish(id, lrm::kExitCanceled);
  return {0, ""};
}

lrm::CommandResult SimLrm::status(const std::vector<std::string>& ids, bool slurm) const {
  std::string out;
  for (const auto& id : ids) {
    auto it = jobs_.find(id);
    if (it == jobs_.end()) continue;
    const auto& job = it->second;
    if (!slurm) {
      std::string code = "-";
      std::string st = job.state == State::running ? "R" : is_held(id) ? "H" : "Q";
      if (job.state == State::finished) {
        st = "F";
        code = std::to_string(job.exit_code);
      }
      out += id + " " + st + " " + code + "\n";
    } else {
      std::string st = "PENDING";
      int code = 0;
      if (job.state == State::running) st = "RUNNING";
      if (job.state == State::finished) {
        code = job.exit_code;
        st = code == 0                    ? "COMPLETED"
             : code == lrm::kExitCanceled ? "CANCELLED"
             : code == lrm::kExitWalltime ? "TIMEOUT"
                                          : "FAILED";
      }
      out += id + "|" + st + "|" + std::to_string(code) + ":0\n";
    }
  }
  return {0, out};
}

void SimLrm::emit(BackendEvent::Kind kind, const Job& job, std::optional<int> exit_code) {
  if (listeners_.empty()) return;
  BackendEvent e{kind, scheduler_.now(), resource_.name, job.native_id, job.name, job.argv,
                 exit_code};
  for (const auto& l : listeners_) l(e);
}

bool SimLrm::is_held(const std::string& native_id) const {
  auto it = jobs_.find(native_id);
  return it != jobs_.end() && it->second.state == State::queued && it->second.hold_from &&
         scheduler_.now() >= *it->second.hold_from;
}

std::size_t SimLrm::queued() const {
  return static_cast<std::size_t>(std::count_if(
      jobs_.begin(), jobs_.end(), [](const auto& kv) { return kv.second.state == State::queued; }));
}

std::size_t SimLrm::running() const {
  return static_cast<std::size_t>(std::count_if(
      jobs_.begin(), jobs_.end(), [](const auto& kv) { return kv.second.state == State::running; }));
}

// ---- SimTransport ----------------------------------------------------------

void SimTransport::attach(SimLrm& lrm) { lrms_[lrm.name()] = &lrm; }

void SimTransport::deny_credential(const std::string& resource, const std::string& credential) {
  denied_.emplace(resource, credential);
}

void SimTransport::add_outage(const std::string& resource, SimTime start, SimTime end) {
  outages_.emplace(resource, std::pair{start, end});
}

void SimTransport::check_up(const std::string& resource) const {
  if (!lrms_.contains(resource)) throw TransportError("no route to '" + resource + "'");
  const auto now = scheduler_.now();
  auto [lo, hi] = outages_.equal_range(resource);
  for (auto it = lo; it != hi; ++it) {
    if (now >= it->second.first && now < it->second.second) {
      throw TransportError("'" + resource + "' unreachable (outage)");
    }
  }
}

void SimTransport::handshake(const std::string& resource, const std::string& credential) {
  check_up(resource);
  if (denied_.contains({resource, credential})) {
    throw TransportError("authentication failed for '" + credential + "' on '" + resource + "'");
  }
  ++handshakes_;
}

lrm::CommandResult SimTransport::execute(const std::string& resource, const std::string&,
                                         const std::string& command) {
  check_up(resource);
  ++executions_;
  commands_[resource].push_back(command);
  return lrms_.at(resource)->execute(command);
}

const std::vector<std::string>& SimTransport::commands(const std::string& resource) const {
  static const std::vector<std::string> kEmpty;
  auto it = commands_.find(resource);
  return it == commands_.end() ? kEmpty : it->second;
}

}  // namespace talescale::sim
