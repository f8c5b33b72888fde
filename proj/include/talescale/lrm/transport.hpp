#pragma once

#include <string>

namespace talescale::lrm {

struct CommandResult {
  int exit_status = 0;
  std::string out;
};

// Remote command channel to a resource's login node (SSH in production, the
// simulator in tests). Both calls throw TransportError on failure.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual void handshake(const std::string& resource, const std::string& credential) = 0;
  virtual CommandResult execute(const std::string& resource, const std::string& credential,
                                const std::string& command) = 0;
};

}  // namespace talescale::lrm
