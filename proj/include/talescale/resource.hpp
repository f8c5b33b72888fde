#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "talescale/queue_model.hpp"

namespace talescale {

enum class ResourceKind { wt_cluster, hpc_cluster, cloud };
enum class LrmKind { none, batch };

// How a dataset already present on a resource is exposed there.
enum class DataExposure { posix, non_posix };

struct ResourceDescriptor {
  std::string name;
  ResourceKind kind = ResourceKind::wt_cluster;
  LrmKind lrm = LrmKind::none;
  bool allows_incoming_connections = true;
  bool mpi_capable = false;
  bool can_compile = false;
  int node_count = 1;
  std::map<std::string, DataExposure> local_datasets;
  // Name of the queue section entry this resource was bound to, if any.
  std::string queue_name;
  std::optional<QueueModel> queue_model;
  // LRM dialect adapter name used by the middleware ("sim-pbs", "sim-slurm").
  std::string dialect;
  // Site policy forbids even proxied inbound traffic.
  bool no_proxy = false;

  bool is_batch_hpc() const {
    return kind == ResourceKind::hpc_cluster && lrm == LrmKind::batch;
  }

  // Throws ValidationError when an invariant is broken.
  void validate() const;

  bool operator==(const ResourceDescriptor&) const = default;
};

std::string to_string(ResourceKind k);
std::string to_string(LrmKind k);
ResourceKind parse_resource_kind(const std::string& s);
LrmKind parse_lrm_kind(const std::string& s);

void to_json(nlohmann::json& j, const ResourceDescriptor& r);
void from_json(const nlohmann::json& j, ResourceDescriptor& r);

// Accepts either a bare array of resources (queues inline) or an object with
// "resources" and optional "queues" (resources then reference queues by
// name). Resource names must be unique.
std::vector<ResourceDescriptor> parse_inventory(const nlohmann::json& j);
std::vector<ResourceDescriptor> load_inventory_file(const std::string& path);

const ResourceDescriptor* find_resource(const std::vector<ResourceDescriptor>& inv,
                                        const std::string& name);

}  // namespace talescale
