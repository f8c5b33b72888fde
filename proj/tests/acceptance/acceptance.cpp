// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Expected values come from oracles written here,
// not from the library under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canonical_inventories.hpp"
#include "lru_oracle.hpp"
#include "sim_rig.hpp"
#include "tale_corpus.hpp"
#include "talescale/tale.hpp"
#include "talescale/digest.hpp"
#include "talescale/dms_cache.hpp"
#include "talescale/planner.hpp"
#include "talescale/sim/harness.hpp"

using namespace talescale;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const auto n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<json> parse_trace(const std::string& trace) {
  std::vector<json> out;
  std::istringstream in(trace);
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

// ---------------------------------------------------------------------------

Outcome polling_aggregation() {
  const auto t0 = Clock::now();
  testsupport::Rig rig;  // automatic poller on a 5 s grid
  rig.add(testsupport::batch_resource("hpc", testsupport::fixed_wait(1e6)));
  for (int i = 0; i < 1000; ++i) rig.submit("hpc", {"sleep", "10"});
  rig.clock.advance_to(100);

  std::vector<double> query_times;
  for (const auto& e : rig.mw->transport_log()) {
    if (e.verb == "batch_status") query_times.push_back(e.time);
  }
  std::vector<double> grid;
  for (int k = 1; k <= 20; ++k) grid.push_back(5.0 * k);
  const double wall = seconds_since(t0);
  const bool ok = query_times == grid && rig.mw->batch_queries("hpc") == 20 && wall < 5.0;
  return {ok, fmt("queries in log %zu (expected 20 at t=5..100), counter %llu, wall %.3f s",
                  query_times.size(), (unsigned long long)rig.mw->batch_queries("hpc"), wall)};
}

Outcome session_frugality() {
  lrm::MiddlewareConfig forever;
  forever.poller.automatic = false;
  forever.idle_ttl = kForever;
  testsupport::Rig a(forever);
  a.mw->add_credential("alice");
  a.add(testsupport::batch_resource("r1", testsupport::fixed_wait(100)));
  a.add(testsupport::batch_resource("r2", testsupport::fixed_wait(100), "sim-slurm"));
  const std::pair<const char*, const char*> pairs[] = {{"r1", "default"}, {"r2", "default"}, {"r1", "alice"}};
  for (int i = 0; i < 500; ++i) {
    const auto& [res, cred] = pairs[i % 3];
    if (i % 5 == 4) {
      a.mw->acquire_session(res, cred);
    } else {
      a.submit(res, {"sleep", "1"}, cred);
    }
  }
  std::size_t logged_a = 0;
  for (const auto& e : a.mw->transport_log()) logged_a += e.verb == "handshake";

  lrm::MiddlewareConfig short_ttl = forever;
  short_ttl.idle_ttl = 10;
  testsupport::Rig b(short_ttl);
  b.add(testsupport::batch_resource("r1", testsupport::fixed_wait(100)));
  const int ops = 100;
  for (int i = 0; i < ops; ++i) {
    b.clock.advance_to(15.0 * i);
    b.submit("r1", {"sleep", "1"});
  }
  std::size_t logged_b = 0;
  for (const auto& e : b.mw->transport_log()) logged_b += e.verb == "handshake";

  const bool ok = logged_a == 3 && a.mw->counters().handshakes == 3 &&
                  logged_b == static_cast<std::size_t>(ops) && b.mw->counters().handshakes == ops;
  return {ok, fmt("ttl=inf: %zu handshakes for 500 ops on 3 pairs; ttl=10 s, 15 s spacing: "
                  "%zu handshakes for %d ops",
                  logged_a, logged_b, ops)};
}

Outcome asynchrony() {
  lrm::MiddlewareConfig cfg;
  testsupport::Rig fast(cfg), slow(cfg);
  fast.add(testsupport::batch_resource("hpc", testsupport::exponential_wait(1)));
  slow.add(testsupport::batch_resource("hpc", testsupport::exponential_wait(10000)));
  auto timed = [](testsupport::Rig& rig) {
    const auto t0 = Clock::now();
    rig.submit("hpc", {"sleep", "1"});
    return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
  };
  for (int i = 0; i < 300; ++i) {
    timed(fast);
    timed(slow);
  }
  std::vector<double> f, s;
  for (int i = 0; i < 3000; ++i) {  // interleaved so drift hits both equally
    f.push_back(timed(fast));
    s.push_back(timed(slow));
  }
  const double mf = median_of(f), ms = median_of(s);
  const double rel = std::abs(mf - ms) / std::max(mf, ms);
  const bool clock_still = fast.clock.now() == 0.0 && slow.clock.now() == 0.0;
  return {rel < 0.10 && clock_still,
          fmt("median submit return %.2f us (mean wait 1 s) vs %.2f us (mean wait 10000 s), "
              "rel diff %.1f%%, simulated clock unmoved: %s",
              mf, ms, 100 * rel, clock_still ? "yes" : "no")};
}

Outcome pilot_responsiveness() {
  json cfg = json::parse(R"({
    "resources": [{"name": "hpc", "kind": "hpc_cluster", "node_count": 16,
                   "queue": {"distribution": "exponential", "mean": 600}}],
    "scenario": {"warmup": 7200}
  })");
  const int n_work = 20;
  const double spacing = 1800;
  cfg["scenario"]["actions"] = json::array(
      {{{"at", 0}, {"kind", "workload"}, {"resource", "hpc"}, {"command", "sleep 10"},
        {"count", n_work}, {"every", spacing}}});
  const double horizon = 7200 + n_work * spacing + 3600;
  const auto cold_world = sim::parse_config(cfg);
  cfg["pools"] = json::parse(R"([{"resource": "hpc", "min_warm": 2, "max_size": 4}])");
  const auto warm_world = sim::parse_config(cfg);

  std::vector<double> cold_all, warm_all, cold_seed_means;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto c = sim::run(cold_world, seed, horizon, {false, false}).metrics.workload_start_latencies;
    const auto w = sim::run(warm_world, seed, horizon, {false, false}).metrics.workload_start_latencies;
    if (c.size() != static_cast<std::size_t>(n_work) || w.size() != static_cast<std::size_t>(n_work)) {
      return {false, fmt("seed %llu: %zu cold / %zu warm workloads started, expected %d",
                         (unsigned long long)seed, c.size(), w.size(), n_work)};
    }
    cold_all.insert(cold_all.end(), c.begin(), c.end());
    warm_all.insert(warm_all.end(), w.begin(), w.end());
    double sum = 0;
    for (double x : c) sum += x;
    cold_seed_means.push_back(sum / c.size());
  }
  const double cold_med = median_of(cold_all), warm_med = median_of(warm_all);
  const double ratio = cold_med / warm_med;
  const double cold_typical = median_of(cold_seed_means);
  const bool ok = ratio >= 60 && std::abs(cold_typical - 600) <= 0.2 * 600;
  return {ok, fmt("median start latency %.1f s without pool vs %.2f s warm (ratio %.0fx); "
                  "median over 20 seeds of per-seed mean wait %.1f s (target 600 +/- 20%%); "
                  "pooled sample median %.1f s (exponential median 600 ln 2 = %.1f s)",
                  cold_med, warm_med, ratio, cold_typical, cold_med, 600 * std::log(2.0))};
}

Outcome frontend_contrast() {
  const auto world = sim::parse_config(json::parse(R"({
    "resources": [
      {"name": "wt", "kind": "wt_cluster"},
      {"name": "login", "kind": "hpc_cluster", "lrm": "none",
       "queue": {"distribution": "exponential", "mean": 600}}
    ],
    "scenario": {"image_load": 8}
  })"));
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 1000; ++s) seeds.push_back(s);
  const auto m = sim::measure_models(world, {}, seeds);
  const auto& m1 = m.time_to_frontend.at("M1");
  const auto& m2 = m.time_to_frontend.at("M2");
  const double m1_med = median_of(m1), m2_med = median_of(m2);
  // Median of an exponential with mean 600 is 600 ln 2.
  const double expected_m2 = 8 + 600 * std::log(2.0);
  const double rel = std::abs(m2_med - expected_m2) / expected_m2;
  const bool ok = m1.size() == 1000 && m2.size() == 1000 && m1_med == 8.0 && rel <= 0.05;
  return {ok, fmt("M1 median %.3f s (image_load 8); M2 median %.1f s vs 8 + 600 ln 2 = %.1f s "
                  "(rel err %.2f%%, tolerance 5%%)",
                  m1_med, m2_med, expected_m2, 100 * rel)};
}

Outcome dms_single_transfer() {
  DataCatalog catalog;
  SimClock clock;
  SimDataSource source;
  CacheConfig cfg;
  cfg.capacity_bytes = 1 << 20;
  cfg.bandwidth_bytes_per_s = 1000;
  DmsCache cache(cfg, catalog, clock, &source);
  std::vector<ExternalDataRef> refs;
  for (const char* uri : {"doi:10.1/a", "doi:10.1/b", "doi:10.1/c"}) {
    refs.push_back(catalog.register_dataset(uri, 1000, content_digest(uri)));
  }
  for (int t = 0; t < 3; ++t) {
    Tale tale;
    tale.id = "tale-" + std::to_string(t);
    tale.title = "reader";
    tale.data_refs = refs;
    if (t == 0) cache.prefetch(tale);
    for (const auto& r : tale.data_refs) cache.open(r.uri);
  }
  const auto remote = cache.transfers().size();

  // An HPC centre that already exposes the dataset over POSIX.
  auto hpc = testsupport::batch_hpc("hpc", 8, false);
  hpc.local_datasets["globus://climate"] = DataExposure::posix;
  json cfg_j = json::parse(R"({
    "resources": [{"name": "wt", "kind": "wt_cluster"}],
    "cache": {"datasets": [{"uri": "globus://climate", "size_bytes": 70000000000000}]},
    "scenario": {"requirements": {"needs_hpc": true}, "image_load": 8,
                 "actions": [{"at": 0, "kind": "launch_frontend", "model": "M3"},
                             {"at": 10, "kind": "launch_frontend", "model": "M6"}]}
  })");
  cfg_j["resources"].push_back(hpc);
  const std::string sum = "sha256:" + std::string(64, 'c');
  cfg_j["cache"]["datasets"][0]["checksum"] = sum;
  cfg_j["scenario"]["requirements"]["datasets"] =
      json::array({{{"uri", "globus://climate"}, {"size_bytes", 70000000000000ULL}, {"checksum", sum}}});
  const auto world = sim::parse_config(cfg_j);
  const auto r = sim::run(world, 1, 20000);
  std::size_t mounts = 0;
  for (const auto& line : parse_trace(r.trace)) mounts += line["kind"] == "mount";

  PlanOptions opt;
  opt.objective = Objective::min_data_movement;
  const auto plan = plan_placement(world.scenario.requirements, world.inventory, opt);
  std::size_t plan_mounts = 0;
  for (const auto& a : plan.staging_actions) plan_mounts += a.action == StagingKind::mount;

  const bool ok = remote == 3 && r.metrics.transfers == 0 && mounts >= 1 && plan_mounts >= 1 &&
                  plan.wide_area_bytes == 0;
  return {ok, fmt("3 Tales x 3 files -> %zu transfer records; HPC-local scenario -> %llu transfers, "
                  "%zu mount actions traced, plan mounts %zu, wide-area bytes %llu",
                  remote, (unsigned long long)r.metrics.transfers, mounts, plan_mounts,
                  (unsigned long long)plan.wide_area_bytes)};
}

Outcome eviction_correctness() {
  int mismatches = 0;
  std::string first;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    const auto diff = testsupport::run_lru_case(seed);
    if (!diff.empty()) {
      if (first.empty()) first = "seed " + std::to_string(seed) + ": " + diff;
      ++mismatches;
    }
  }
  return {mismatches == 0, fmt("1000 randomized cases vs brute-force LRU, %d mismatches%s%s",
                               mismatches, first.empty() ? "" : "; first: ", first.c_str())};
}

Outcome round_trip() {
  const auto corpus = testsupport::make_tale_corpus(12);
  int identical = 0, empty_files = 0, unicode_paths = 0;
  for (const auto& item : corpus) {
    for (const auto& [path, data] : item.files) {
      empty_files += data.empty();
      unicode_paths += std::any_of(path.begin(), path.end(),
                                   [](char c) { return static_cast<unsigned char>(c) >= 0x80; });
    }
    const auto first = export_tale(item.tale, item.files);
    const auto imported = import_tale(first, 1.7e9);
    const auto second = export_tale(imported.tale, imported.files);
    identical += first == second && imported.files == item.files;
  }
  const bool ok = identical == static_cast<int>(corpus.size()) && empty_files > 0 && unicode_paths > 0;
  return {ok, fmt("%d/%zu Tales byte-identical after export->import->export "
                  "(%d empty files, %d unicode paths in corpus)",
                  identical, corpus.size(), empty_files, unicode_paths)};
}

Outcome six_models() {
  std::set<ExecutionModel> chosen;
  int proxy_ok = 0, matched = 0;
  const auto witnesses = testsupport::canonical_witnesses();
  for (const auto& w : witnesses) {
    const auto p = plan_placement(w.req, w.inventory);
    chosen.insert(p.model);
    matched += p.model == w.expected;
    const auto* fe = find_resource(w.inventory, p.frontend_resource);
    proxy_ok += fe && p.proxy_required == !fe->allows_incoming_connections;
  }
  const int n = static_cast<int>(witnesses.size());
  const bool ok = n == 6 && chosen.size() == 6 && matched == 6 && proxy_ok == 6;
  return {ok, fmt("%d inventories, %zu distinct models selected, %d as expected, "
                  "proxy flag correct on %d",
                  n, chosen.size(), matched, proxy_ok)};
}

Outcome lifecycle_legality() {
  const auto world = sim::parse_config(json::parse(R"({
    "resources": [
      {"name": "a", "kind": "hpc_cluster", "node_count": 64,
       "queue": {"distribution": "uniform", "min": 10, "max": 120,
                 "maintenance_windows": [[30000, 40000]]}},
      {"name": "b", "kind": "hpc_cluster", "dialect": "sim-slurm", "node_count": 64,
       "queue": {"distribution": "exponential", "mean": 60}},
      {"name": "c", "kind": "hpc_cluster", "node_count": 32,
       "queue": {"distribution": "fixed", "value": 30}}
    ],
    "scenario": {"actions": [
      {"at": 0, "kind": "fuzz", "jobs": 10000, "span": 20000, "max_runtime": 300,
       "cancel_fraction": 0.1, "fail_fraction": 0.1},
      {"at": 29950, "kind": "submit", "resource": "a", "command": "sleep 60", "count": 20, "every": 1}
    ]}
  })"));
  const double horizon = 35000;
  const auto r = sim::run(world, 2024, horizon);

  const std::set<std::pair<std::string, std::string>> legal = {
      {"Created", "Submitted"}, {"Submitted", "Queued"}, {"Submitted", "Failed"},
      {"Queued", "Running"},    {"Queued", "Canceled"},  {"Running", "Completed"},
      {"Running", "Failed"},    {"Running", "Canceled"}};
  const std::set<std::string> terminal = {"Completed", "Failed", "Canceled"};
  std::map<std::string, std::string> last;  // job -> last observed state
  std::map<std::string, std::string> where;
  std::size_t illegal = 0, transitions = 0;
  for (const auto& line : parse_trace(r.trace)) {
    if (line["kind"] != "job_transition") continue;
    ++transitions;
    const auto job = line["job"].get<std::string>();
    const auto from = line["from"].get<std::string>(), to = line["to"].get<std::string>();
    auto it = last.find(job);
    const std::string prev = it == last.end() ? "Created" : it->second;
    if (prev != from || !legal.count({from, to})) ++illegal;
    last[job] = to;
    where[job] = line["resource"].get<std::string>();
  }
  std::size_t done = 0, held = 0, stuck = 0;
  for (const auto& [job, state] : last) {
    if (terminal.count(state)) {
      ++done;
    } else if (state == "Queued" && where[job] == "a" && horizon >= 30000 && horizon <= 40000) {
      ++held;
    } else {
      ++stuck;
    }
  }
  const bool ok = last.size() == 10020 && illegal == 0 && stuck == 0 &&
                  r.metrics.illegal_transitions == 0 && held == r.metrics.held_at_horizon;
  return {ok, fmt("%zu jobs, %zu transitions, %zu illegal; %zu terminal, %zu queued in maintenance, "
                  "%zu otherwise unfinished",
                  last.size(), transitions, illegal, done, held, stuck)};
}

Outcome determinism(Clock::time_point suite_start) {
  auto cfg = json::parse(R"({
    "resources": [
      {"name": "wt", "kind": "wt_cluster"},
      {"name": "hpc", "kind": "hpc_cluster", "mpi_capable": true, "node_count": 16,
       "queue": {"distribution": "exponential", "mean": 600}},
      {"name": "hpc2", "kind": "hpc_cluster", "dialect": "sim-slurm", "node_count": 4,
       "queue": {"distribution": "uniform", "min": 10, "max": 60, "maintenance_windows": [[1800, 2400]]}}
    ],
    "pools": [{"resource": "hpc", "min_warm": 2, "max_size": 4}],
    "cache": {"datasets": [{"uri": "repo://x", "size_bytes": 5000}]},
    "scenario": {"idle_ttl": 60, "actions": [
      {"at": 0, "kind": "fuzz", "jobs": 500, "span": 3000, "max_runtime": 200},
      {"at": 100, "kind": "launch_frontend", "model": "M1"},
      {"at": 200, "kind": "launch_frontend", "model": "M3"},
      {"at": 300, "kind": "open", "uri": "repo://x", "count": 3, "every": 50},
      {"at": 1500, "kind": "workload", "resource": "hpc", "command": "sleep 300", "count": 4, "every": 120}
    ]}
  })");
  cfg["cache"]["datasets"][0]["checksum"] = content_digest("repo://x");
  const auto world = sim::parse_config(cfg);
  const auto a = sim::run(world, 42, 6000);
  const auto b = sim::run(world, 42, 6000);
  const auto c = sim::run(world, 43, 6000);
  const double wall = seconds_since(suite_start);
  const bool ok = a.trace == b.trace && a.trace != c.trace && wall < 60.0;
  return {ok, fmt("seed 42 twice: %s (%zu bytes); seed 43 differs: %s; acceptance wall time %.1f s",
                  a.trace == b.trace ? "identical" : "DIFFERENT", a.trace.size(),
                  a.trace != c.trace ? "yes" : "no", wall)};
}

}  // namespace

int main() {
  const auto start = Clock::now();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"polling aggregation", polling_aggregation},
      {"session frugality", session_frugality},
      {"asynchronous submit", asynchrony},
      {"pilot responsiveness", pilot_responsiveness},
      {"frontend launch contrast", frontend_contrast},
      {"dms single transfer", dms_single_transfer},
      {"eviction correctness", eviction_correctness},
      {"archive round trip", round_trip},
      {"six-model coverage", six_models},
      {"job lifecycle legality", lifecycle_legality},
      {"determinism", [start] { return determinism(start); }},
  };
  int failures = 0;
  int index = 0;
  for (const auto& [name, check] : criteria) {
    ++index;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2d %-26s %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", index, name.c_str(),
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
