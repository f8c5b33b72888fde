#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "support.hpp"

using nlohmann::json;
using testsupport::read_text;
using testsupport::run_command;
using testsupport::TempDir;
using testsupport::write_text;

namespace {

std::string cli() { return TALESCALE_CLI; }

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

void make_workspace(const std::filesystem::path& root) {
  write_text(root / "run.py", "print('hello')\n");
  write_text(root / "lib/util.py", "def f():\n    return 1\n");
  write_text(root / "data/empty.txt", "");
}

const char* kSmallConfig = R"({
  "resources": [
    {"name": "wt", "kind": "wt_cluster"},
    {"name": "hpc", "kind": "hpc_cluster", "node_count": 8,
     "queue": {"distribution": "fixed", "value": 100}}
  ],
  "scenario": {
    "actions": [{"at": 0, "kind": "submit", "resource": "hpc", "command": "sleep 50", "count": 4, "every": 10}]
  }
})";

}  // namespace

TEST(Cli, ExportIsReproducible) {
  TempDir dir;
  const auto ws = dir / "ws";
  make_workspace(ws);
  auto c = run_command(cli() + " tale create --workspace " + q(ws) +
                       " --title Demo --id demo-1 --timestamp 1000");
  ASSERT_EQ(c.status, 0);
  EXPECT_EQ(c.out, "demo-1\n");
  ASSERT_EQ(run_command(cli() + " tale export --workspace " + q(ws) + " --out " + q(dir / "a.zip")).status, 0);
  ASSERT_EQ(run_command(cli() + " tale export --workspace " + q(ws) + " --out " + q(dir / "b.zip")).status, 0);
  EXPECT_EQ(read_text(dir / "a.zip"), read_text(dir / "b.zip"));

  auto imp = run_command(cli() + " tale import --in " + q(dir / "a.zip") + " --workspace " +
                         q(dir / "out") + " --timestamp 2000");
  ASSERT_EQ(imp.status, 0);
  EXPECT_EQ(read_text(dir / "out/lib/util.py"), read_text(ws / "lib/util.py"));
  EXPECT_TRUE(std::filesystem::exists(dir / "out/data/empty.txt"));
  EXPECT_EQ(run_command(cli() + " tale validate --in " + q(dir / "a.zip")).status, 0);
}

TEST(Cli, ValidateFlagsBinaryOnlyTale) {
  TempDir dir;
  const auto ws = dir / "ws";
  write_text(ws / "bin/app", std::string("\x7f" "ELF\x02\x01", 6));
  std::filesystem::permissions(ws / "bin/app", std::filesystem::perms::owner_exec,
                               std::filesystem::perm_options::add);
  ASSERT_EQ(run_command(cli() + " tale create --workspace " + q(ws) +
                        " --title Bin --id bin-1 --arch bin/app=amd64").status, 0);
  auto v = run_command(cli() + " tale validate --workspace " + q(ws));
  EXPECT_EQ(v.status, 1);
  EXPECT_NE(v.out.find("missing source"), std::string::npos) << v.out;
}

TEST(Cli, ImportRejectsCorruptedArchive) {
  TempDir dir;
  const auto ws = dir / "ws";
  make_workspace(ws);
  ASSERT_EQ(run_command(cli() + " tale create --workspace " + q(ws) + " --title T --id t").status, 0);
  ASSERT_EQ(run_command(cli() + " tale export --workspace " + q(ws) + " --out " + q(dir / "a.zip")).status, 0);
  auto bytes = read_text(dir / "a.zip");
  const auto at = bytes.find("print('hello')");
  ASSERT_NE(at, std::string::npos);
  bytes[at] = 'P';
  write_text(dir / "bad.zip", bytes);
  auto r = run_command(cli() + " tale import --in " + q(dir / "bad.zip"), true);
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("run.py"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("checksum"), std::string::npos) << r.out;
}

TEST(Cli, PlanInfeasibleListsEveryModel) {
  TempDir dir;
  write_text(dir / "inv.json", R"({"resources": [{"name": "wt", "kind": "wt_cluster"}]})");
  write_text(dir / "req.json", R"({"needs_hpc": true, "needs_mpi": true, "min_nodes": 4})");
  auto r = run_command(cli() + " plan --inventory " + q(dir / "inv.json") + " --requirements " +
                           q(dir / "req.json"),
                       true);
  EXPECT_EQ(r.status, 1);
  for (const char* m : {"M1", "M2", "M3", "M4", "M5", "M6"}) {
    EXPECT_NE(r.out.find(m), std::string::npos) << m << "\n" << r.out;
  }
}

TEST(Cli, PlanChoosesM4ForMpi) {
  TempDir dir;
  write_text(dir / "inv.json", R"({"resources": [
    {"name": "stampede", "kind": "hpc_cluster", "node_count": 16, "mpi_capable": true}]})");
  write_text(dir / "req.json", R"({"needs_hpc": true, "needs_mpi": true, "min_nodes": 4})");
  auto r = run_command(cli() + " --format json plan --inventory " + q(dir / "inv.json") +
                       " --requirements " + q(dir / "req.json"));
  ASSERT_EQ(r.status, 0);
  auto j = json::parse(r.out);
  EXPECT_EQ(j["model"], "M4_hpc_mpi");
  EXPECT_EQ(j["proxy_required"], true);
}

TEST(Cli, SimRunIsDeterministic) {
  TempDir dir;
  write_text(dir / "c.json", kSmallConfig);
  const auto base = cli() + " sim run --config " + q(dir / "c.json") + " --seed 7 --horizon 2000";
  ASSERT_EQ(run_command(base + " --trace " + q(dir / "t1.ndjson")).status, 0);
  ASSERT_EQ(run_command(base + " --trace " + q(dir / "t2.ndjson")).status, 0);
  const auto t1 = read_text(dir / "t1.ndjson");
  EXPECT_FALSE(t1.empty());
  EXPECT_EQ(t1, read_text(dir / "t2.ndjson"));

  auto csv = run_command(base + " --report csv");
  ASSERT_EQ(csv.status, 0);
  EXPECT_EQ(csv.out.substr(0, csv.out.find('\n')),
            "model,seed,time_to_frontend_s,queries,handshakes,transfers");
}

TEST(Cli, SimRunMissingConfig) {
  TempDir dir;
  auto r = run_command("env -u TALESCALE_CONFIG " + cli() + " sim run --config " +
                       q(dir / "absent.json"));
  EXPECT_EQ(r.status, 1);
  r = run_command("env -u TALESCALE_CONFIG " + cli() + " sim run");
  EXPECT_EQ(r.status, 1);
}

TEST(Cli, ShippedExampleConfigRuns) {
  auto r = run_command(cli() + " sim run --config '" TALESCALE_SOURCE_DIR
                       "/examples_cfg/small.json' --seed 3 --horizon 4000 --report json");
  ASSERT_EQ(r.status, 0);
  auto j = json::parse(r.out);
  EXPECT_EQ(j["rows"].size(), 1u);
  EXPECT_EQ(j["illegal_transitions"], 0);
}

TEST(Cli, JobSessionLifecycle) {
  TempDir dir;
  write_text(dir / "c.json", kSmallConfig);
  const auto job = cli() + " job --session " + q(dir / "s.json");
  auto sub = run_command(job + " submit --config " + q(dir / "c.json") +
                         " --resource hpc --command 'sleep 30'");
  ASSERT_EQ(sub.status, 0);
  const auto id = sub.out.substr(0, sub.out.find(' '));
  const auto state = sub.out.substr(sub.out.find(' ') + 1);
  EXPECT_TRUE(state == "Submitted\n" || state == "Queued\n") << sub.out;

  // fixed 100 s wait plus 30 s runtime plus polling slack
  auto st = run_command(job + " status --id " + id + " --at 200");
  ASSERT_EQ(st.status, 0);
  EXPECT_EQ(st.out, id + " Completed exit=0\n");

  auto c = run_command(job + " cancel --id " + id + " --at 300");
  EXPECT_EQ(c.status, 0);
  EXPECT_EQ(c.out, id + " already terminal\n");

  EXPECT_EQ(run_command(job + " status --id nope --at 300").status, 1);
  EXPECT_EQ(run_command(job + " status --id " + id + " --at 10").status, 1);
}

TEST(Cli, UsageErrors) {
  EXPECT_NE(run_command(cli() + " frobnicate").status, 0);
  EXPECT_NE(run_command(cli() + " plan").status, 0);
}
