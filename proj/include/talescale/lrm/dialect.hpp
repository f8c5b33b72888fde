#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "talescale/clock.hpp"
#include "talescale/lrm/transport.hpp"

namespace talescale::lrm {

enum class NativeState { queued, running, completed, failed, canceled };

struct NativeStatus {
  std::string native_id;
  NativeState state = NativeState::queued;
  std::optional<int> exit_code;
};

struct SubmitRequest {
  std::string job_name;
  std::vector<std::string> argv;
  int nodes = 1;
  bool mpi = false;
  Duration walltime = 86400;
  std::map<std::string, std::string> env;
};

// Translates the middleware's fixed verbs {submit, batch_status, cancel} into
// one LRM's command language and back.
class DialectAdapter {
 public:
  virtual ~DialectAdapter() = default;

  virtual std::string name() const = 0;

  virtual std::string submit_command(const SubmitRequest& req) const = 0;
  // Native job id. Throws TransportError on a failed submission.
  virtual std::string parse_submit(const CommandResult& result) const = 0;

  // A single command covering every id.
  virtual std::string batch_status_command(std::span<const std::string> native_ids) const = 0;
  virtual std::vector<NativeStatus> parse_batch_status(const CommandResult& result) const = 0;

  virtual std::string cancel_command(const std::string& native_id) const = 0;
};

// PBS/Torque flavoured: qsub / qstat -x / qdel.
std::shared_ptr<DialectAdapter> make_pbs_dialect(std::string name = "sim-pbs");
// Slurm flavoured: sbatch --parsable / sacct / scancel.
std::shared_ptr<DialectAdapter> make_slurm_dialect(std::string name = "sim-slurm");

// POSIX shell single-quoting, and the inverse split used by the simulator.
std::string shell_quote(std::string_view arg);
std::string shell_join(std::span<const std::string> argv);
std::vector<std::string> shell_split(std::string_view line);

// PBS encodes signal deaths as 256 + signal; qdel is SIGTERM.
inline constexpr int kExitCanceled = 271;
inline constexpr int kExitWalltime = 265;

}  // namespace talescale::lrm
