#include "talescale/resource.hpp"

#include <fstream>
#include <set>

#include "talescale/errors.hpp"

namespace talescale {

void ResourceDescriptor::validate() const {
  if (name.empty()) throw ValidationError("resource name is empty");
  if (node_count < 1) {
    throw ValidationError("resource '" + name + "': node_count must be >= 1");
  }
  if (kind == ResourceKind::wt_cluster &&
      (lrm != LrmKind::none || !allows_incoming_connections)) {
    throw ValidationError("resource '" + name +
                          "': wt_cluster must have lrm=none and accept "
                          "incoming connections");
  }
  if (queue_model) queue_model->validate();
}

std::string to_string(ResourceKind k) {
  switch (k) {
    case ResourceKind::wt_cluster: return "wt_cluster";
    case ResourceKind::hpc_cluster: return "hpc_cluster";
    case ResourceKind::cloud: return "cloud";
  }
  return "?";
}

std::string to_string(LrmKind k) { return k == LrmKind::none ? "none" : "batch"; }

ResourceKind parse_resource_kind(const std::string& s) {
  if (s == "wt_cluster") return ResourceKind::wt_cluster;
  if (s == "hpc_cluster") return ResourceKind::hpc_cluster;
  if (s == "cloud") return ResourceKind::cloud;
  throw ConfigError("unknown resource kind '" + s + "'");
}

LrmKind parse_lrm_kind(const std::string& s) {
  if (s == "none") return LrmKind::none;
  if (s == "batch") return LrmKind::batch;
  throw ConfigError("unknown lrm kind '" + s + "'");
}

void to_json(nlohmann::json& j, const ResourceDescriptor& r) {
  j = nlohmann::json::object();
  j["name"] = r.name;
  j["kind"] = to_string(r.kind);
  j["lrm"] = to_string(r.lrm);
  j["allows_incoming_connections"] = r.allows_incoming_connections;
  j["mpi_capable"] = r.mpi_capable;
  j["can_compile"] = r.can_compile;
  j["node_count"] = r.node_count;
  auto datasets = nlohmann::json::array();
  for (const auto& [uri, exposure] : r.local_datasets) {
    datasets.push_back({{"uri", uri}, {"posix", exposure == DataExposure::posix}});
  }
  j["local_datasets"] = std::move(datasets);
  if (r.queue_model) j["queue"] = *r.queue_model;
  if (!r.dialect.empty()) j["dialect"] = r.dialect;
  j["no_proxy"] = r.no_proxy;
}

void from_json(const nlohmann::json& j, ResourceDescriptor& r) {
  if (!j.is_object()) throw ConfigError("resource entry must be an object");
  r = ResourceDescriptor{};
  r.name = j.at("name").get<std::string>();
  r.kind = parse_resource_kind(j.at("kind").get<std::string>());
  const bool is_wt = r.kind == ResourceKind::wt_cluster;
  r.lrm = parse_lrm_kind(j.value("lrm", std::string(is_wt ? "none" : "batch")));
  r.allows_incoming_connections =
      j.value("allows_incoming_connections", r.kind != ResourceKind::hpc_cluster);
  r.mpi_capable = j.value("mpi_capable", false);
  r.can_compile = j.value("can_compile", false);
  r.node_count = j.value("node_count", 1);
  if (j.contains("local_datasets")) {
    for (const auto& d : j.at("local_datasets")) {
      if (d.is_string()) {
        r.local_datasets[d.get<std::string>()] = DataExposure::posix;
      } else {
        r.local_datasets[d.at("uri").get<std::string>()] =
            d.value("posix", true) ? DataExposure::posix : DataExposure::non_posix;
      }
    }
  }
  if (j.contains("queue")) {
    const auto& q = j.at("queue");
    if (q.is_string()) {
      r.queue_name = q.get<std::string>();
    } else {
      r.queue_model = q.get<QueueModel>();
    }
  }
  r.dialect = j.value("dialect", std::string(r.lrm == LrmKind::batch ? "sim-pbs" : ""));
  r.no_proxy = j.value("no_proxy", false);
}

std::vector<ResourceDescriptor> parse_inventory(const nlohmann::json& j) {
  const nlohmann::json* list = &j;
  const nlohmann::json* queues = nullptr;
  if (j.is_object()) {
    if (!j.contains("resources")) throw ConfigError("inventory has no 'resources'");
    list = &j.at("resources");
    if (j.contains("queues")) queues = &j.at("queues");
  }
  if (!list->is_array()) throw ConfigError("'resources' must be a list");
  std::vector<ResourceDescriptor> out;
  std::set<std::string> names;
  for (const auto& entry : *list) {
    ResourceDescriptor r;
    try {
      r = entry.get<ResourceDescriptor>();
      if (!r.queue_name.empty()) {
        if (!queues || !queues->contains(r.queue_name)) {
          throw ConfigError("resource '" + r.name + "' references unknown queue '" +
                            r.queue_name + "'");
        }
        r.queue_model = queues->at(r.queue_name).get<QueueModel>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed resource entry: ") + e.what());
    }
    try {
      r.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
    if (!names.insert(r.name).second) {
      throw ConfigError("duplicate resource name '" + r.name + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ResourceDescriptor> load_inventory_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open inventory file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("inventory '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_inventory(j);
}

const ResourceDescriptor* find_resource(const std::vector<ResourceDescriptor>& inv,
                                        const std::string& name) {
  for (const auto& r : inv) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

}  // namespace talescale
