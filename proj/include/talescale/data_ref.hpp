#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace talescale {

// Reference to a dataset living outside the Tale.
struct ExternalDataRef {
  std::string uri;
  std::uint64_t size_bytes = 0;
  std::string checksum;  // "algo:hex"

  bool operator==(const ExternalDataRef&) const = default;
};

void to_json(nlohmann::json& j, const ExternalDataRef& r);
void from_json(const nlohmann::json& j, ExternalDataRef& r);

// Catalog files are a JSON list of {uri, size_bytes, checksum}.
std::vector<ExternalDataRef> load_catalog_file(const std::string& path);

}  // namespace talescale
