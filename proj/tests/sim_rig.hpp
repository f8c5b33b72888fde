#pragma once

#include <memory>
#include <string>
#include <vector>

#include "talescale/clock.hpp"
#include "talescale/lrm/middleware.hpp"
#include "talescale/sim/backend.hpp"

namespace testsupport {

inline talescale::ResourceDescriptor batch_resource(const std::string& name,
                                                     talescale::QueueModel queue,
                                                     const std::string& dialect = "sim-pbs",
                                                     int nodes = 16, bool mpi = false) {
  talescale::ResourceDescriptor r;
  r.name = name;
  r.kind = talescale::ResourceKind::hpc_cluster;
  r.lrm = talescale::LrmKind::batch;
  r.allows_incoming_connections = false;
  r.node_count = nodes;
  r.mpi_capable = mpi;
  r.dialect = dialect;
  r.queue_model = std::move(queue);
  return r;
}

inline talescale::QueueModel fixed_wait(double seconds) {
  talescale::QueueModel q;
  q.distribution = talescale::WaitDistribution::fixed;
  q.value = seconds;
  return q;
}

inline talescale::QueueModel exponential_wait(double mean) {
  talescale::QueueModel q;
  q.distribution = talescale::WaitDistribution::exponential;
  q.mean = mean;
  return q;
}

// Clock + simulated transport + one SimLrm per resource + middleware.
struct Rig {
  talescale::SimClock clock;
  talescale::sim::SimTransport transport{clock};
  std::vector<std::unique_ptr<talescale::sim::SimLrm>> lrms;
  std::unique_ptr<talescale::lrm::Middleware> mw;

  explicit Rig(talescale::lrm::MiddlewareConfig cfg = {}) {
    mw = std::make_unique<talescale::lrm::Middleware>(clock, transport, cfg);
    mw->add_credential("default");
  }

  talescale::sim::SimLrm& add(const talescale::ResourceDescriptor& r, std::uint64_t seed = 1,
                              double default_runtime = 60.0) {
    lrms.push_back(std::make_unique<talescale::sim::SimLrm>(r, clock, seed, default_runtime));
    transport.attach(*lrms.back());
    mw->add_resource(r);
    return *lrms.back();
  }

  talescale::lrm::JobHandle submit(const std::string& resource, std::vector<std::string> cmd,
                                   const std::string& credential = "default") {
    talescale::lrm::JobSpec spec;
    spec.resource = resource;
    spec.credential = credential;
    spec.command = std::move(cmd);
    return mw->submit(spec);
  }
};

}  // namespace testsupport
