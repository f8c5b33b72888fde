#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "talescale/clock.hpp"
#include "talescale/data_ref.hpp"
#include "talescale/dms_cache.hpp"
#include "talescale/lrm/middleware.hpp"
#include "talescale/pilot_pool.hpp"
#include "talescale/planner.hpp"
#include "talescale/resource.hpp"

namespace talescale::sim {

struct PoolConfig {
  std::string name;
  PoolPolicy policy;
};

struct CacheSection {
  CacheConfig config;
  std::vector<ExternalDataRef> datasets;
};

struct Outage {
  std::string resource;
  SimTime start = 0;
  SimTime end = 0;
};

// One scripted step. `args` carries the kind-specific fields:
//   submit           resource, command, credential, nodes, mpi, walltime,
//                    tale_id, count, every
//   cancel           job
//   launch_frontend  model, resource (frontend override), count, every
//   workload         resource, command, nodes, count, every
//   open             uri, count, every
//   prefetch         uris
//   fuzz             jobs, resources, span, cancel_fraction, fail_fraction,
//                    max_runtime
struct ScenarioAction {
  SimTime at = 0;
  std::string kind;
  nlohmann::json args = nlohmann::json::object();
};

struct Scenario {
  Duration poll_interval = 5.0;
  Duration idle_ttl = 300.0;
  Duration image_load = 8.0;
  Duration dispatch_overhead = 0.5;
  Duration default_runtime = 60.0;
  std::vector<std::string> credentials = {"default"};
  // Offset added to every action time, giving pools time to warm up.
  SimTime warmup = 0;
  WorkloadRequirements requirements;
  std::vector<ScenarioAction> actions;
  std::vector<Outage> outages;
};

struct World {
  std::vector<ResourceDescriptor> inventory;
  std::vector<PoolConfig> pools;
  std::optional<CacheSection> cache;
  Scenario scenario;
};

// Throws ConfigError on malformed sections or dangling references.
World parse_config(const nlohmann::json& j);
World load_config(const std::string& path);

struct ReportRow {
  std::string model;
  std::uint64_t seed = 0;
  std::optional<double> time_to_frontend_s;  // empty if not up by the horizon
  std::uint64_t queries = 0;
  std::uint64_t handshakes = 0;
  std::uint64_t transfers = 0;

  bool operator==(const ReportRow&) const = default;
};

struct ScenarioMetrics {
  std::vector<ReportRow> rows;  // one per frontend launch
  std::map<std::string, std::vector<double>> time_to_frontend;  // by model
  std::map<std::string, std::uint64_t> backend_queries;         // by resource
  std::uint64_t handshakes = 0;
  std::uint64_t transfers = 0;
  std::uint64_t transfer_bytes = 0;
  std::vector<double> workload_start_latencies;
  std::uint64_t jobs = 0;
  std::uint64_t transitions = 0;
  std::uint64_t illegal_transitions = 0;
  // Batch jobs still non-terminal at the horizon, split by whether a
  // maintenance window is holding them.
  std::uint64_t held_at_horizon = 0;
  std::uint64_t unfinished_at_horizon = 0;

  bool operator==(const ScenarioMetrics&) const = default;
};

void to_json(nlohmann::json& j, const ReportRow& r);
void from_json(const nlohmann::json& j, ReportRow& r);
void to_json(nlohmann::json& j, const ScenarioMetrics& m);
void from_json(const nlohmann::json& j, ScenarioMetrics& m);

struct RunResult {
  std::string trace;  // ndjson, one {t, seq, kind, ...} object per line
  ScenarioMetrics metrics;
};

struct RunOptions {
  // Stop as soon as every scripted frontend is up (used for measurements).
  bool stop_when_frontends_ready = false;
  bool keep_trace = true;
};

// Deterministic: the same (world, seed, horizon) always gives the same trace.
RunResult run(const World& world, std::uint64_t seed, Duration horizon,
              const RunOptions& options = {});

// For every feasible model, launches one frontend per seed at the scenario's
// warmup time and reports its time to frontend plus counters.
ScenarioMetrics measure_models(const World& world, const WorkloadRequirements& req,
                               const std::vector<std::uint64_t>& seeds,
                               Duration horizon = 30 * 86400.0);

class SimLrm;
class SimTransport;

// A world brought up on its own clock with no scripted actions, for callers
// that want to drive the middleware by hand (the CLI job commands).
class LiveWorld {
 public:
  LiveWorld(const World& world, std::uint64_t seed);
  ~LiveWorld();

  SimClock& clock() { return *clock_; }
  lrm::Middleware& middleware() { return *middleware_; }
  void advance_to(SimTime t) { clock_->advance_to(t); }

 private:
  std::unique_ptr<SimClock> clock_;
  std::unique_ptr<SimTransport> transport_;
  std::map<std::string, std::unique_ptr<SimLrm>> lrms_;
  std::unique_ptr<lrm::Middleware> middleware_;
  std::vector<std::unique_ptr<PilotPool>> pools_;
};

enum class ReportFormat { table, json, csv };
ReportFormat parse_report_format(const std::string& s);
std::string emit_report(const ScenarioMetrics& metrics, ReportFormat format);

inline constexpr const char* kCsvHeader =
    "model,seed,time_to_frontend_s,queries,handshakes,transfers";

double median(std::vector<double> xs);

}  // namespace talescale::sim
