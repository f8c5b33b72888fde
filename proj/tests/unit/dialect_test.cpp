#include <gtest/gtest.h>

#include <random>

#include "talescale/clock.hpp"
#include "talescale/errors.hpp"
#include "talescale/lrm/dialect.hpp"
#include "talescale/sim/backend.hpp"

using namespace talescale;
using namespace talescale::lrm;

TEST(Shell, QuoteSplitRoundTrip) {
  std::mt19937 gen(11);
  const std::string alphabet = "ab c'\"$\\;|&*?()\t-=/.x";
  for (int i = 0; i < 500; ++i) {
    std::vector<std::string> argv(1 + gen() % 5);
    for (auto& a : argv) {
      const int len = static_cast<int>(gen() % 8);
      for (int k = 0; k < len; ++k) a.push_back(alphabet[gen() % alphabet.size()]);
    }
    EXPECT_EQ(shell_split(shell_join(argv)), argv);
  }
  EXPECT_EQ(shell_quote("plain-word_1.0"), "plain-word_1.0");
  EXPECT_EQ(shell_quote(""), "''");
  EXPECT_EQ(shell_quote("it's"), "'it'\\''s'");
  EXPECT_THROW(shell_split("'unterminated"), ValidationError);
}

TEST(Pbs, CommandStrings) {
  auto d = make_pbs_dialect();
  SubmitRequest r;
  r.job_name = "job-1";
  r.argv = {"python", "run.py", "--n", "3 4"};
  r.nodes = 2;
  r.mpi = true;
  r.walltime = 3661;
  r.env = {{"A", "1"}};
  EXPECT_EQ(d->submit_command(r),
            "qsub -N job-1 -l nodes=2 -l walltime=01:01:01 -l place=scatter -v A=1 -- "
            "python run.py --n '3 4'");
  std::vector<std::string> ids = {"1000.hpc", "1001.hpc"};
  EXPECT_EQ(d->batch_status_command(ids), "qstat -x 1000.hpc 1001.hpc");
  EXPECT_EQ(d->cancel_command("1000.hpc"), "qdel 1000.hpc");
}

TEST(Pbs, ParseStatus) {
  auto d = make_pbs_dialect();
  auto s = d->parse_batch_status({0, "1 Q -\n2 H -\n3 R -\n4 F 0\n5 F 3\n6 F 271\n"});
  ASSERT_EQ(s.size(), 6u);
  EXPECT_EQ(s[0].state, NativeState::queued);
  EXPECT_EQ(s[1].state, NativeState::queued);
  EXPECT_EQ(s[2].state, NativeState::running);
  EXPECT_EQ(s[3].state, NativeState::completed);
  EXPECT_EQ(s[4].state, NativeState::failed);
  EXPECT_EQ(s[4].exit_code, 3);
  EXPECT_EQ(s[5].state, NativeState::canceled);
  EXPECT_THROW(d->parse_batch_status({0, "1 Z -"}), TransportError);
  EXPECT_THROW(d->parse_batch_status({0, "1 F x"}), TransportError);
  EXPECT_THROW(d->parse_batch_status({1, ""}), TransportError);
  EXPECT_EQ(d->parse_submit({0, "1000.hpc\n"}), "1000.hpc");
  EXPECT_THROW(d->parse_submit({1, "qsub: bad"}), TransportError);
}

TEST(Slurm, CommandStrings) {
  auto d = make_slurm_dialect();
  SubmitRequest r;
  r.job_name = "wl";
  r.argv = {"sleep", "10"};
  r.walltime = 90;
  EXPECT_EQ(d->submit_command(r), "sbatch --parsable --job-name=wl --nodes=1 --time=2 --wrap='sleep 10'");
  std::vector<std::string> ids = {"7", "8"};
  EXPECT_EQ(d->batch_status_command(ids), "sacct -n -P -X -o JobID,State,ExitCode -j 7,8");
  EXPECT_EQ(d->cancel_command("7"), "scancel 7");
}

TEST(Slurm, ParseStatus) {
  auto d = make_slurm_dialect();
  auto s = d->parse_batch_status(
      {0, "1|PENDING|0:0\n2|RUNNING|0:0\n3|COMPLETED|0:0\n4|FAILED|2:0\n5|CANCELLED by 0|0:15\n"});
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s[0].state, NativeState::queued);
  EXPECT_EQ(s[1].state, NativeState::running);
  EXPECT_EQ(s[2].state, NativeState::completed);
  EXPECT_EQ(s[3].exit_code, 2);
  EXPECT_EQ(s[4].state, NativeState::canceled);
  EXPECT_THROW(d->parse_batch_status({0, "garbage"}), TransportError);
  EXPECT_EQ(d->parse_submit({0, "42;cluster\n"}), "42");
}

// Both dialects drive the simulator through a whole job lifecycle.
class DialectLifecycle : public ::testing::TestWithParam<bool> {};

TEST_P(DialectLifecycle, SubmitRunFinishCancel) {
  const bool slurm = GetParam();
  auto d = slurm ? make_slurm_dialect() : make_pbs_dialect();
  ResourceDescriptor hpc;
  hpc.name = "hpc";
  hpc.kind = ResourceKind::hpc_cluster;
  hpc.lrm = LrmKind::batch;
  hpc.node_count = 4;
  QueueModel q;
  q.distribution = WaitDistribution::fixed;
  q.value = 100;
  hpc.queue_model = q;
  SimClock clock;
  sim::SimLrm lrm(hpc, clock, 1);

  SubmitRequest r;
  r.job_name = "a";
  r.argv = {"fail", "3", "50"};
  const auto id = d->parse_submit(lrm.execute(d->submit_command(r)));
  r.argv = {"sleep", "1000"};
  const auto id2 = d->parse_submit(lrm.execute(d->submit_command(r)));
  std::vector<std::string> ids = {id, id2};
  auto at = [&](SimTime t) {
    clock.advance_to(t);
    return d->parse_batch_status(lrm.execute(d->batch_status_command(ids)));
  };
  auto s = at(50);
  EXPECT_EQ(s[0].state, NativeState::queued);
  s = at(120);
  EXPECT_EQ(s[0].state, NativeState::running);
  s = at(200);
  EXPECT_EQ(s[0].state, NativeState::failed);
  EXPECT_EQ(s[0].exit_code, 3);
  EXPECT_EQ(s[1].state, NativeState::running);
  EXPECT_EQ(lrm.execute(d->cancel_command(id2)).exit_status, 0);
  s = at(201);
  EXPECT_EQ(s[1].state, NativeState::canceled);

  r.nodes = 8;
  EXPECT_THROW(d->parse_submit(lrm.execute(d->submit_command(r))), TransportError);
}

INSTANTIATE_TEST_SUITE_P(Dialects, DialectLifecycle, ::testing::Values(false, true),
                         [](const auto& info) { return info.param ? "slurm" : "pbs"; });

TEST(SimLrm, MalformedSubmitIsUsageError) {
  ResourceDescriptor hpc;
  hpc.name = "hpc";
  hpc.kind = ResourceKind::hpc_cluster;
  hpc.lrm = LrmKind::batch;
  SimClock clock;
  sim::SimLrm lrm(hpc, clock, 1);
  EXPECT_NE(lrm.execute("qsub -l nodes=x -- a").exit_status, 0);
  EXPECT_NE(lrm.execute("sbatch --nodes=1").exit_status, 0);
  EXPECT_EQ(lrm.execute("frobnicate").exit_status, 127);
  EXPECT_EQ(lrm.total_jobs(), 0u);
}
