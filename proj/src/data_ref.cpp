#include "talescale/data_ref.hpp"

#include <fstream>

#include "talescale/errors.hpp"

namespace talescale {

void to_json(nlohmann::json& j, const ExternalDataRef& r) {
  j = {{"uri", r.uri}, {"size_bytes", r.size_bytes}, {"checksum", r.checksum}};
}

void from_json(const nlohmann::json& j, ExternalDataRef& r) {
  r = ExternalDataRef{};
  r.uri = j.at("uri").get<std::string>();
  r.size_bytes = j.at("size_bytes").get<std::uint64_t>();
  r.checksum = j.value("checksum", std::string());
}

std::vector<ExternalDataRef> load_catalog_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset catalog '" + path + "'");
  try {
    return nlohmann::json::parse(in).get<std::vector<ExternalDataRef>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("dataset catalog '" + path + "' is malformed: " + e.what());
  }
}

}  // namespace talescale
