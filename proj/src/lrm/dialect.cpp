#include "talescale/lrm/dialect.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "talescale/errors.hpp"

namespace talescale::lrm {

namespace {

std::string hms(Duration seconds) {
  const auto total = static_cast<long long>(std::ceil(std::max(0.0, seconds)));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld", total / 3600, (total / 60) % 60,
                total % 60);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

int parse_exit(std::string_view field) {
  int code = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), code);
  if (ec != std::errc() || ptr == field.data()) {
    throw TransportError("unparseable exit code '" + std::string(field) + "'");
  }
  return code;
}

std::string env_list(const std::map<std::string, std::string>& env) {
  std::string out;
  for (const auto& [k, v] : env) {
    if (!out.empty()) out += ',';
    out += k + "=" + v;
  }
  return out;
}

class PbsDialect final : public DialectAdapter {
 public:
  explicit PbsDialect(std::string name) : name_(std::move(name)) {}

  std::string name() const override { return name_; }

  std::string submit_command(const SubmitRequest& req) const override {
    std::string cmd = "qsub -N " + shell_quote(req.job_name) +
                      " -l nodes=" + std::to_string(req.nodes) +
                      " -l walltime=" + hms(req.walltime);
    if (req.mpi) cmd += " -l place=scatter";
    if (!req.env.empty()) cmd += " -v " + shell_quote(env_list(req.env));
    cmd += " -- " + shell_join(req.argv);
    return cmd;
  }

  std::string parse_submit(const CommandResult& r) const override {
    auto id = trim(r.out);
    if (r.exit_status != 0 || id.empty()) {
      throw TransportError("qsub failed (exit " + std::to_string(r.exit_status) + "): " + id);
    }
    return id;
  }

  std::string batch_status_command(std::span<const std::string> ids) const override {
    std::string cmd = "qstat -x";
    for (const auto& id : ids) cmd += " " + shell_quote(id);
    return cmd;
  }

  // One "id state exit" line per known job; state in {Q,H,R,E,F}.
  std::vector<NativeStatus> parse_batch_status(const CommandResult& r) const override {
    if (r.exit_status != 0) throw TransportError("qstat failed");
    std::vector<NativeStatus> out;
    std::istringstream in(r.out);
    std::string id, state, exit;
    while (in >> id >> state >> exit) {
      NativeStatus s{id, NativeState::queued, std::nullopt};
      if (state == "Q" || state == "H" || state == "W") {
        s.state = NativeState::queued;
      } else if (state == "R" || state == "E") {
        s.state = NativeState::running;
      } else if (state == "F") {
        const int code = exit == "-" ? 0 : parse_exit(exit);
        s.exit_code = code;
        s.state = code == 0               ? NativeState::completed
                  : code == kExitCanceled ? NativeState::canceled
                                          : NativeState::failed;
      } else {
        throw TransportError("unrecognized qstat state '" + state + "'");
      }
      out.push_back(std::move(s));
    }
    return out;
  }

  std::string cancel_command(const std::string& id) const override {
    return "qdel " + shell_quote(id);
  }

 private:
  std::string name_;
};

class SlurmDialect final : public DialectAdapter {
 public:
  explicit SlurmDialect(std::string name) : name_(std::move(name)) {}

  std::string name() const override { return name_; }

  std::string submit_command(const SubmitRequest& req) const override {
    const auto minutes = static_cast<long long>(std::ceil(std::max(0.0, req.walltime) / 60.0));
    std::string cmd = "sbatch --parsable --job-name=" + shell_quote(req.job_name) +
                      " --nodes=" + std::to_string(req.nodes) +
                      " --time=" + std::to_string(std::max(1LL, minutes));
    if (req.mpi) cmd += " --ntasks-per-node=1";
    if (!req.env.empty()) cmd += " --export=" + shell_quote(env_list(req.env));
    cmd += " --wrap=" + shell_quote(shell_join(req.argv));
    return cmd;
  }

  std::string parse_submit(const CommandResult& r) const override {
    auto id = trim(r.out);
    if (auto semi = id.find(';'); semi != std::string::npos) id.resize(semi);
    if (r.exit_status != 0 || id.empty()) {
      throw TransportError("sbatch failed (exit " + std::to_string(r.exit_status) + "): " + id);
    }
    return id;
  }

  std::string batch_status_command(std::span<const std::string> ids) const override {
    std::string list;
    for (const auto& id : ids) {
      if (!list.empty()) list += ',';
      list += id;
    }
    return "sacct -n -P -X -o JobID,State,ExitCode -j " + shell_quote(list);
  }

  // "id|STATE|exit:signal" per line.
  std::vector<NativeStatus> parse_batch_status(const CommandResult& r) const override {
    if (r.exit_status != 0) throw TransportError("sacct failed");
    std::vector<NativeStatus> out;
    std::istringstream in(r.out);
    std::string line;
    while (std::getline(in, line)) {
      line = trim(line);
      if (line.empty()) continue;
      const auto p1 = line.find('|');
      const auto p2 = line.find('|', p1 + 1);
      if (p1 == std::string::npos || p2 == std::string::npos) {
        throw TransportError("unrecognized sacct line '" + line + "'");
      }
      NativeStatus s{line.substr(0, p1), NativeState::queued, std::nullopt};
      const auto state = line.substr(p1 + 1, p2 - p1 - 1);
      const auto code_field = line.substr(p2 + 1);
      const int code = parse_exit(code_field.substr(0, code_field.find(':')));
      if (state == "PENDING" || state == "CONFIGURING" || state == "REQUEUED") {
        s.state = NativeState::queued;
      } else if (state == "RUNNING" || state == "COMPLETING") {
        s.state = NativeState::running;
      } else if (state == "COMPLETED") {
        s.state = NativeState::completed;
        s.exit_code = code;
      } else if (state.rfind("CANCELLED", 0) == 0) {
        s.state = NativeState::canceled;
        s.exit_code = code;
      } else if (state == "FAILED" || state == "TIMEOUT" || state == "NODE_FAIL" ||
                 state == "OUT_OF_MEMORY") {
        s.state = NativeState::failed;
        s.exit_code = code;
      } else {
        throw TransportError("unrecognized sacct state '" + state + "'");
      }
      out.push_back(std::move(s));
    }
    return out;
  }

  std::string cancel_command(const std::string& id) const override {
    return "scancel " + shell_quote(id);
  }

 private:
  std::string name_;
};

}  // namespace

std::shared_ptr<DialectAdapter> make_pbs_dialect(std::string name) {
  return std::make_shared<PbsDialect>(std::move(name));
}

std::shared_ptr<DialectAdapter> make_slurm_dialect(std::string name) {
  return std::make_shared<SlurmDialect>(std::move(name));
}

std::string shell_quote(std::string_view arg) {
  const bool plain = !arg.empty() && arg.find_first_not_of(
                                         "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
                                         "0123456789@%_+=:,./-") == std::string_view::npos;
  if (plain) return std::string(arg);
  std::string out = "'";
  for (char c : arg) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out.push_back(c);
    }
  }
  out += "'";
  return out;
}

std::string shell_join(std::span<const std::string> argv) {
  std::string out;
  for (const auto& a : argv) {
    if (!out.empty()) out += ' ';
    out += shell_quote(a);
  }
  return out;
}

std::vector<std::string> shell_split(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool in_word = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '\'') {
      in_word = true;
      auto end = line.find('\'', i + 1);
      if (end == std::string_view::npos) throw ValidationError("unterminated quote");
      cur.append(line.substr(i + 1, end - i - 1));
      i = end;
    } else if (c == '"') {
      in_word = true;
      std::size_t j = i + 1;
      for (; j < line.size() && line[j] != '"'; ++j) {
        if (line[j] == '\\' && j + 1 < line.size()) ++j;
        cur.push_back(line[j]);
      }
      if (j >= line.size()) throw ValidationError("unterminated quote");
      i = j;
    } else if (c == '\\' && i + 1 < line.size()) {
      in_word = true;
      cur.push_back(line[++i]);
    } else if (c == ' ' || c == '\t' || c == '\n') {
      if (in_word) {
        out.push_back(std::move(cur));
        cur.clear();
        in_word = false;
      }
    } else {
      in_word = true;
      cur.push_back(c);
    }
  }
  if (in_word) out.push_back(std::move(cur));
  return out;
}

}  // namespace talescale::lrm
