// talescale: command-line front end for Tales, placement planning, the
// cluster simulator and simulated job control.
//
// Exit codes: 0 success, 1 user error (bad input, failed validation,
// infeasible plan, unknown ids), 2 internal error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "talescale/errors.hpp"
#include "talescale/lrm/dialect.hpp"
#include "talescale/lrm/middleware.hpp"
#include "talescale/planner.hpp"
#include "talescale/sim/harness.hpp"
#include "talescale/tale.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace talescale;

namespace {

constexpr const char* kMetadataFile = "tale.json";

struct Globals {
  std::string format = "text";
  bool json() const { return format == "json"; }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

Tale load_tale_metadata(const fs::path& workspace) {
  const auto path = workspace / kMetadataFile;
  try {
    return read_json(path.string()).get<Tale>();
  } catch (const json::exception& e) {
    throw ValidationError("'" + path.string() + "' is not a Tale: " + e.what());
  }
}

void save_tale_metadata(const Tale& tale, const fs::path& workspace) {
  write_file((workspace / kMetadataFile).string(), json(tale).dump(2) + "\n");
}

std::string config_path(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("TALESCALE_CONFIG")) return env;
  throw ConfigError("no config given (use --config or TALESCALE_CONFIG)");
}

// ---- tale ------------------------------------------------------------------

struct TaleArgs {
  std::string workspace;
  std::string title;
  std::string id;
  std::string out;
  std::string in;
  std::string data;
  std::string env;
  std::string base_image;
  std::vector<std::string> arch;
  std::optional<double> timestamp;
};

int tale_create(const TaleArgs& a, const Globals& g) {
  const fs::path root(a.workspace);
  if (!fs::is_directory(root)) throw NotFoundError("workspace '" + a.workspace + "' not found");
  const std::vector<std::string> skip = {kMetadataFile};
  auto code = scan_workspace(root, skip);
  for (const auto& tag : a.arch) {
    const auto eq = tag.rfind('=');
    if (eq == std::string::npos) throw ValidationError("--arch expects PATH=ARCH, got '" + tag + "'");
    const auto path = tag.substr(0, eq);
    auto it = std::find_if(code.begin(), code.end(),
                           [&](const CodeArtifact& c) { return c.path == path; });
    if (it == code.end()) throw NotFoundError("--arch names unknown file '" + path + "'");
    it->target_arch = tag.substr(eq + 1);
  }
  std::vector<ExternalDataRef> data;
  if (!a.data.empty()) data = load_catalog_file(a.data);
  EnvironmentSpec env;
  if (!a.env.empty()) env = read_json(a.env).get<EnvironmentSpec>();
  if (!a.base_image.empty()) env.base_image_name = a.base_image;

  CreateOptions opts{a.id, a.timestamp};
  const auto tale = create_tale(a.title, std::move(code), std::move(data), std::move(env), opts);
  save_tale_metadata(tale, root);
  if (g.json()) {
    std::cout << json{{"id", tale.id}, {"artifacts", tale.code_refs.size()}}.dump() << "\n";
  } else {
    std::cout << tale.id << "\n";
  }
  return 0;
}

int tale_export(const TaleArgs& a, const Globals& g) {
  const fs::path root(a.workspace);
  const auto tale = load_tale_metadata(root);
  const auto archive = export_tale(tale, root);
  write_file(a.out, archive);
  if (g.json()) {
    std::cout << json{{"id", tale.id}, {"out", a.out}, {"bytes", archive.size()}}.dump() << "\n";
  } else {
    std::cout << "wrote " << a.out << " (" << archive.size() << " bytes)\n";
  }
  return 0;
}

int tale_import(const TaleArgs& a, const Globals& g) {
  const auto archive = read_file(a.in);
  auto imported = import_tale(archive, a.timestamp);
  if (!a.workspace.empty()) {
    const fs::path root(a.workspace);
    write_workspace(imported.files, root);
    save_tale_metadata(imported.tale, root);
  }
  if (g.json()) {
    std::cout << json{{"id", imported.tale.id}, {"files", imported.files.size()}}.dump() << "\n";
  } else {
    std::cout << imported.tale.id << " (" << imported.files.size() << " files)\n";
  }
  return 0;
}

int tale_validate(const TaleArgs& a, const Globals& g) {
  Tale tale;
  if (!a.in.empty()) {
    tale = import_tale(read_file(a.in)).tale;
  } else {
    tale = load_tale_metadata(a.workspace);
  }
  const auto violations = validate_tale(tale);
  if (g.json()) {
    std::cout << json{{"id", tale.id}, {"valid", violations.empty()}, {"violations", violations}}.dump()
              << "\n";
  } else if (violations.empty()) {
    std::cout << tale.id << ": valid\n";
  } else {
    for (const auto& v : violations) std::cout << v << "\n";
  }
  return violations.empty() ? 0 : 1;
}

// ---- plan ------------------------------------------------------------------

struct PlanArgs {
  std::string inventory;
  std::string requirements;
  std::string objective = "min_time_to_frontend";
  std::string frontend;
  double image_load = 8.0;
  std::vector<std::string> warm;
};

int plan(const PlanArgs& a, const Globals& g) {
  const auto inventory = load_inventory_file(a.inventory);
  WorkloadRequirements req;
  if (!a.requirements.empty()) {
    try {
      req = read_json(a.requirements).get<WorkloadRequirements>();
    } catch (const json::exception& e) {
      throw ConfigError("bad requirements: " + std::string(e.what()));
    }
  }
  PlanOptions opts;
  opts.objective = parse_objective(a.objective);
  opts.image_load = a.image_load;
  opts.warm_pools = {a.warm.begin(), a.warm.end()};
  if (!a.frontend.empty()) opts.frontend_override = a.frontend;

  const auto p = plan_placement(req, inventory, opts);
  if (g.json()) {
    std::cout << json(p).dump(2) << "\n";
    return 0;
  }
  std::cout << "model:        " << short_name(p.model) << " (" << to_string(p.model) << ")\n"
            << "frontend:     " << p.frontend_resource << "\n"
            << "workload:     ";
  for (std::size_t i = 0; i < p.workload_resources.size(); ++i) {
    std::cout << (i ? ", " : "") << p.workload_resources[i];
  }
  std::cout << "\nproxy:        " << (p.proxy_required ? "required" : "not required") << "\n"
            << "est. ttf (s): " << p.estimated_time_to_frontend << "\n"
            << "wide-area B:  " << p.wide_area_bytes << "\n";
  for (const auto& s : p.staging_actions) {
    std::cout << "staging:      " << to_string(s.action) << " " << s.ref.uri << " @ "
              << s.resource << "\n";
  }
  for (const auto& r : p.reasons) std::cout << "note:         " << r << "\n";
  return 0;
}

// ---- sim -------------------------------------------------------------------

struct SimArgs {
  std::string config;
  std::uint64_t seed = 1;
  double horizon = 3600;
  std::string trace;
  std::string report;
  std::string report_out;
  std::uint64_t seeds = 10;
};

void write_or_print(const std::string& path, const std::string& data) {
  if (path.empty() || path == "-") {
    std::cout << data;
  } else {
    write_file(path, data);
  }
}

int sim_run(const SimArgs& a, const Globals& g) {
  const auto world = sim::load_config(config_path(a.config));
  std::optional<sim::ReportFormat> fmt;
  if (!a.report.empty()) fmt = sim::parse_report_format(a.report);
  const auto result = sim::run(world, a.seed, a.horizon);
  if (!a.trace.empty()) write_file(a.trace, result.trace);
  if (fmt) write_or_print(a.report_out, sim::emit_report(result.metrics, *fmt));
  if (!fmt || !a.report_out.empty()) {
    const auto& m = result.metrics;
    if (g.json()) {
      std::cout << json(m).dump() << "\n";
    } else {
      std::uint64_t queries = 0;
      for (const auto& [_, q] : m.backend_queries) queries += q;
      std::cout << "jobs " << m.jobs << ", transitions " << m.transitions << " (illegal "
                << m.illegal_transitions << "), queries " << queries << ", handshakes "
                << m.handshakes << ", transfers " << m.transfers << "\n";
    }
  }
  return 0;
}

int sim_measure(const SimArgs& a, const Globals&) {
  const auto world = sim::load_config(config_path(a.config));
  const auto fmt = sim::parse_report_format(a.report.empty() ? "table" : a.report);
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= a.seeds; ++s) seeds.push_back(s);
  const auto m = sim::measure_models(world, world.scenario.requirements, seeds);
  write_or_print(a.report_out, sim::emit_report(m, fmt));
  return 0;
}

// ---- job -------------------------------------------------------------------
//
// Each invocation rebuilds the simulated world from the session file and
// replays the recorded operations at their simulated times, so the session
// behaves like one long-running world without a daemon.

struct JobArgs {
  std::string session = ".talescale-session.json";
  std::string config;
  std::uint64_t seed = 1;
  std::string resource;
  std::string command;
  std::string credential;
  std::string id;
  std::optional<double> at;
  int nodes = 1;
};

json load_session(const JobArgs& a, bool create) {
  if (fs::exists(a.session)) return read_json(a.session);
  if (!create) throw NotFoundError("no session at '" + a.session + "'; submit a job first");
  return json{{"config", fs::absolute(config_path(a.config)).string()},
              {"seed", a.seed},
              {"ops", json::array()}};
}

double last_time(const json& session) {
  return session["ops"].empty() ? 0.0 : session["ops"].back().at("at").get<double>();
}

// Replays `session` up to `until` and returns the world for inspection.
std::unique_ptr<sim::LiveWorld> replay(const json& session, double until) {
  const auto world = sim::load_config(session.at("config").get<std::string>());
  auto live = std::make_unique<sim::LiveWorld>(world, session.at("seed").get<std::uint64_t>());
  for (const auto& op : session.at("ops")) {
    live->advance_to(op.at("at").get<double>());
    const auto kind = op.at("op").get<std::string>();
    try {
      if (kind == "submit") {
        lrm::JobSpec spec;
        spec.resource = op.at("resource").get<std::string>();
        spec.command = op.at("command").get<std::vector<std::string>>();
        spec.credential = op.at("credential").get<std::string>();
        spec.node_count = op.value("nodes", 1);
        live->middleware().submit(spec);
      } else if (kind == "cancel") {
        live->middleware().cancel(op.at("id").get<std::string>());
      }
    } catch (const Error&) {
      // Replays the original outcome; the error was reported back then.
    }
  }
  live->advance_to(until);
  return live;
}

double op_time(const JobArgs& a, const json& session) {
  const auto t = a.at.value_or(last_time(session));
  if (t < last_time(session)) {
    throw ValidationError("--at " + std::to_string(t) + " is before the last recorded operation");
  }
  return t;
}

json status_json(const std::string& id, const lrm::JobStatus& st) {
  json history = json::array();
  for (const auto& t : st.history) {
    history.push_back({{"from", lrm::to_string(t.from)}, {"to", lrm::to_string(t.to)}, {"at", t.at}});
  }
  json j = {{"job_id", id}, {"state", lrm::to_string(st.state)}, {"history", history}};
  j["exit_code"] = st.exit_code ? json(*st.exit_code) : json(nullptr);
  if (!st.cause.empty()) j["cause"] = st.cause;
  return j;
}

int job_submit(const JobArgs& a, const Globals& g) {
  auto session = load_session(a, true);
  const auto t = op_time(a, session);
  auto live = replay(session, t);
  const auto world = sim::load_config(session.at("config").get<std::string>());
  lrm::JobSpec spec;
  spec.resource = a.resource;
  spec.command = lrm::shell_split(a.command);
  spec.credential = a.credential.empty() ? world.scenario.credentials.front() : a.credential;
  spec.node_count = a.nodes;
  const auto h = live->middleware().submit(spec);
  session["ops"].push_back({{"at", t},
                            {"op", "submit"},
                            {"resource", spec.resource},
                            {"command", spec.command},
                            {"credential", spec.credential},
                            {"nodes", spec.node_count}});
  write_file(a.session, session.dump(2) + "\n");
  const auto st = live->middleware().status(h);
  if (g.json()) {
    std::cout << status_json(h.job_id, st).dump() << "\n";
  } else {
    std::cout << h.job_id << " " << lrm::to_string(st.state) << "\n";
  }
  return 0;
}

int job_status(const JobArgs& a, const Globals& g) {
  const auto session = load_session(a, false);
  auto live = replay(session, op_time(a, session));
  const auto st = live->middleware().status(a.id);
  if (g.json()) {
    std::cout << status_json(a.id, st).dump() << "\n";
  } else {
    std::cout << a.id << " " << lrm::to_string(st.state);
    if (st.exit_code) std::cout << " exit=" << *st.exit_code;
    std::cout << "\n";
  }
  return 0;
}

int job_cancel(const JobArgs& a, const Globals& g) {
  auto session = load_session(a, false);
  const auto t = op_time(a, session);
  auto live = replay(session, t);
  const bool sent = live->middleware().cancel(a.id);
  session["ops"].push_back({{"at", t}, {"op", "cancel"}, {"id", a.id}});
  write_file(a.session, session.dump(2) + "\n");
  if (g.json()) {
    std::cout << json{{"job_id", a.id}, {"sent", sent}}.dump() << "\n";
  } else {
    std::cout << a.id << (sent ? " cancel sent" : " already terminal") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"talescale: Tales, placement planning and simulated cluster orchestration"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--format", g.format, "Output format for read commands")
      ->check(CLI::IsMember({"text", "json"}));

  std::function<int()> action;

  // tale
  TaleArgs ta;
  auto* tale = app.add_subcommand("tale", "Create, export, import and validate Tales");
  tale->require_subcommand(1);
  auto* create = tale->add_subcommand("create", "Describe a workspace as a new Tale");
  create->add_option("--workspace", ta.workspace)->required();
  create->add_option("--title", ta.title)->required();
  create->add_option("--id", ta.id, "Tale id (random if omitted)");
  create->add_option("--data", ta.data, "JSON list of external data references");
  create->add_option("--env", ta.env, "JSON environment spec");
  create->add_option("--base-image", ta.base_image);
  create->add_option("--arch", ta.arch, "Tag a binary: PATH=ARCH (repeatable)");
  create->add_option("--timestamp", ta.timestamp, "Creation time, seconds");
  create->callback([&] { action = [&] { return tale_create(ta, g); }; });

  auto* exp = tale->add_subcommand("export", "Write a Tale archive");
  exp->add_option("--workspace", ta.workspace)->required();
  exp->add_option("--out", ta.out)->required();
  exp->callback([&] { action = [&] { return tale_export(ta, g); }; });

  auto* imp = tale->add_subcommand("import", "Verify and unpack a Tale archive");
  imp->add_option("--in", ta.in)->required();
  imp->add_option("--workspace", ta.workspace, "Directory to unpack into");
  imp->add_option("--timestamp", ta.timestamp);
  imp->callback([&] { action = [&] { return tale_import(ta, g); }; });

  auto* val = tale->add_subcommand("validate", "List invariant violations");
  auto* val_ws = val->add_option("--workspace", ta.workspace);
  auto* val_in = val->add_option("--in", ta.in, "Validate an archive instead");
  val_ws->excludes(val_in);
  val->callback([&] {
    if (ta.workspace.empty() && ta.in.empty()) throw CLI::ValidationError("need --workspace or --in");
    action = [&] { return tale_validate(ta, g); };
  });

  // plan
  PlanArgs pa;
  auto* pl = app.add_subcommand("plan", "Choose an execution model and placement");
  pl->add_option("--inventory", pa.inventory)->required();
  pl->add_option("--requirements", pa.requirements, "Workload requirements JSON");
  pl->add_option("--objective", pa.objective)
      ->check(CLI::IsMember({"min_time_to_frontend", "min_data_movement"}));
  pl->add_option("--frontend", pa.frontend, "Force the frontend resource");
  pl->add_option("--image-load", pa.image_load);
  pl->add_option("--warm", pa.warm, "Resources with a warm pilot (repeatable)");
  pl->callback([&] { action = [&] { return plan(pa, g); }; });

  // sim
  SimArgs sa;
  auto* simc = app.add_subcommand("sim", "Run the cluster simulator");
  simc->require_subcommand(1);
  auto* run = simc->add_subcommand("run", "Run a scenario");
  run->add_option("--config", sa.config, "Config file (default: $TALESCALE_CONFIG)");
  run->add_option("--seed", sa.seed);
  run->add_option("--horizon", sa.horizon)->check(CLI::PositiveNumber);
  run->add_option("--trace", sa.trace, "Write the ndjson trace here");
  run->add_option("--report", sa.report)->check(CLI::IsMember({"table", "json", "csv"}));
  run->add_option("--report-out", sa.report_out, "Write the report here instead of stdout");
  run->callback([&] { action = [&] { return sim_run(sa, g); }; });

  auto* meas = simc->add_subcommand("measure", "Time to frontend for every feasible model");
  meas->add_option("--config", sa.config);
  meas->add_option("--seeds", sa.seeds, "Number of seeds, 1..N")->check(CLI::PositiveNumber);
  meas->add_option("--report", sa.report)->check(CLI::IsMember({"table", "json", "csv"}));
  meas->add_option("--report-out", sa.report_out);
  meas->callback([&] { action = [&] { return sim_measure(sa, g); }; });

  // job
  JobArgs ja;
  auto* job = app.add_subcommand("job", "Submit, query and cancel simulated jobs");
  job->require_subcommand(1);
  job->add_option("--session", ja.session, "Session file")->capture_default_str();
  auto* sub = job->add_subcommand("submit", "Submit a job");
  sub->add_option("--config", ja.config, "Config for a new session (default: $TALESCALE_CONFIG)");
  sub->add_option("--seed", ja.seed);
  sub->add_option("--resource", ja.resource)->required();
  sub->add_option("--command", ja.command)->required();
  sub->add_option("--credential", ja.credential);
  sub->add_option("--nodes", ja.nodes);
  sub->add_option("--at", ja.at, "Simulated time of the submission");
  sub->callback([&] { action = [&] { return job_submit(ja, g); }; });
  auto* stat = job->add_subcommand("status", "Show a job's state");
  stat->add_option("--id", ja.id)->required();
  stat->add_option("--at", ja.at, "Simulated time to look at");
  stat->callback([&] { action = [&] { return job_status(ja, g); }; });
  auto* canc = job->add_subcommand("cancel", "Cancel a job");
  canc->add_option("--id", ja.id)->required();
  canc->add_option("--at", ja.at);
  canc->callback([&] { action = [&] { return job_cancel(ja, g); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    return action();
  } catch (const Error& e) {
    if (g.json()) {
      std::cout << json{{"error", e.what()}}.dump() << "\n";
    }
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
