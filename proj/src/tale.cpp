#include "talescale/tale.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <regex>
#include <set>

#include "talescale/digest.hpp"
#include "talescale/errors.hpp"

namespace talescale {

namespace {

double wall_seconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

std::string random_tale_id() {
  std::random_device rd;
  std::uniform_int_distribution<int> nibble(0, 15);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id = "tale-";
  for (int i = 0; i < 16; ++i) id.push_back(kHex[nibble(rd)]);
  return id;
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

// Violations that make a Tale unconstructible, shared by create and import.
void structural_violations(const Tale& t, std::vector<std::string>& out) {
  if (blank(t.title)) out.push_back("title is empty");
  std::set<std::string> paths;
  for (const auto& a : t.code_refs) {
    if (!is_normalized_relative_path(a.path)) {
      out.push_back("artifact path '" + a.path + "' is not a normalized relative path");
    }
    if (!paths.insert(a.path).second) {
      out.push_back("duplicate artifact path '" + a.path + "'");
    }
    if (!is_well_formed_digest(a.checksum)) {
      out.push_back("artifact '" + a.path + "' has no valid checksum");
    }
  }
  std::set<std::string> uris;
  for (const auto& d : t.data_refs) {
    if (d.uri.empty()) out.push_back("data reference with empty uri");
    if (!uris.insert(d.uri).second) out.push_back("duplicate data uri '" + d.uri + "'");
    if (!is_well_formed_digest(d.checksum)) {
      out.push_back("data reference '" + d.uri + "' is missing a checksum");
    }
  }
  std::set<std::string> pins;
  for (const auto& p : t.env_spec.dependency_pins) {
    if (p.name.empty()) out.push_back("dependency pin with empty name");
    if (!pins.insert(p.name).second) {
      out.push_back("duplicate dependency pin '" + p.name + "'");
    }
    if (!constraint_kind(p.constraint)) {
      out.push_back("dependency '" + p.name + "' has malformed version constraint '" +
                    p.constraint + "'");
    }
  }
}

void throw_if_any(const std::vector<std::string>& violations) {
  if (violations.empty()) return;
  std::string msg = violations.front();
  for (std::size_t i = 1; i < violations.size(); ++i) msg += "; " + violations[i];
  throw ValidationError(msg);
}

bool has_source(const std::vector<CodeArtifact>& artifacts) {
  return std::any_of(artifacts.begin(), artifacts.end(),
                     [](const CodeArtifact& a) { return a.kind == ArtifactKind::source; });
}

}  // namespace

bool is_normalized_relative_path(std::string_view path) {
  if (path.empty() || path.front() == '/' || path.back() == '/') return false;
  if (path.find('\\') != std::string_view::npos) return false;
  if (path.find('\0') != std::string_view::npos) return false;
  std::size_t start = 0;
  while (start <= path.size()) {
    auto end = path.find('/', start);
    if (end == std::string_view::npos) end = path.size();
    auto part = path.substr(start, end - start);
    if (part.empty() || part == "." || part == "..") return false;
    start = end + 1;
  }
  return true;
}

std::optional<std::string> constraint_kind(std::string_view constraint) {
  static const std::regex kVersion(R"([0-9][0-9A-Za-z.+_\-]*)");
  static const std::regex kExact(R"((==)?\s*[0-9][0-9A-Za-z.+_\-]*)");
  static const std::regex kClause(R"(\s*(>=|<=|>|<|!=|~=)\s*[0-9][0-9A-Za-z.+_\-]*\s*)");
  const std::string c(constraint);
  if (std::regex_match(c, kExact)) return "exact";
  if (c.empty()) return std::nullopt;
  std::size_t start = 0;
  while (start <= c.size()) {
    auto end = c.find(',', start);
    if (end == std::string::npos) end = c.size();
    if (!std::regex_match(c.substr(start, end - start), kClause)) return std::nullopt;
    start = end + 1;
  }
  return "range";
}

Tale create_tale(std::string title, std::vector<CodeArtifact> code_refs,
                 std::vector<ExternalDataRef> data_refs, EnvironmentSpec env_spec,
                 const CreateOptions& options) {
  Tale t;
  t.id = options.id.empty() ? random_tale_id() : options.id;
  t.title = std::move(title);
  t.code_refs = std::move(code_refs);
  t.data_refs = std::move(data_refs);
  t.env_spec = std::move(env_spec);
  std::vector<std::string> violations;
  structural_violations(t, violations);
  throw_if_any(violations);
  append_provenance(t, ProvenanceKind::created, {{"title", t.title}},
                    options.timestamp.value_or(wall_seconds()));
  return t;
}

std::vector<std::string> validate_tale(const Tale& tale) {
  std::vector<std::string> out;
  if (tale.id.empty()) out.push_back("id is empty");
  structural_violations(tale, out);

  for (const auto& a : tale.code_refs) {
    if (a.kind == ArtifactKind::prebuilt_executable && !has_source(tale.code_refs)) {
      out.push_back("missing source: prebuilt executable '" + a.path +
                    "' is shipped without any source artifact");
    }
  }
  if (tale.packaging) {
    const auto& m = *tale.packaging;
    const bool has_exe = std::any_of(m.entries.begin(), m.entries.end(), [](const auto& a) {
      return a.kind == ArtifactKind::prebuilt_executable;
    });
    if (has_exe && !has_source(m.entries)) {
      out.push_back("missing source: packaging manifest ships executables without source");
    }
    if (m.strategy == PackagingStrategy::per_resource_static && manifest_targets(m).empty()) {
      out.push_back("per_resource_static manifest lists no target architectures");
    }
    if (!m.redistribution_ok) {
      for (const auto& a : m.entries) {
        if (a.kind == ArtifactKind::prebuilt_executable && a.proprietary_toolchain) {
          out.push_back("executable '" + a.path +
                        "' was built with a proprietary toolchain and may not be redistributed");
        }
      }
    }
  }
  for (std::size_t i = 1; i < tale.provenance.size(); ++i) {
    if (tale.provenance[i].seq <= tale.provenance[i - 1].seq) {
      out.push_back("provenance seq does not strictly increase at position " +
                    std::to_string(i));
      break;
    }
  }
  return out;
}

WorkloadClass classify_workload(const Tale& tale) {
  if (tale.code_refs.empty()) {
    throw ValidationError("cannot classify a Tale without code artifacts");
  }
  const auto& refs = tale.code_refs;
  const bool any_tagged =
      std::any_of(refs.begin(), refs.end(), [](const auto& a) { return a.arch_specific(); });
  if (!any_tagged) return WorkloadClass::unoptimized;

  const bool binaries_all_tagged = std::all_of(refs.begin(), refs.end(), [](const auto& a) {
    return !a.is_binary() || a.arch_specific();
  });
  const bool tagged_entry_point = std::any_of(refs.begin(), refs.end(), [](const auto& a) {
    return a.kind == ArtifactKind::prebuilt_executable && a.arch_specific();
  });
  const bool portable_sources = std::any_of(refs.begin(), refs.end(), [](const auto& a) {
    return a.kind == ArtifactKind::source && !a.arch_specific();
  });
  // Portable sources next to an optimized executable are that executable's
  // sources; without one they are driving code around optimized cores.
  if (binaries_all_tagged && (tagged_entry_point || !portable_sources)) {
    return WorkloadClass::optimized;
  }
  return WorkloadClass::mixed;
}

PackagingStrategy select_strategy(WorkloadClass cls,
                                  std::span<const ResourceDescriptor> targets,
                                  bool redistribution_ok) {
  if (cls == WorkloadClass::unoptimized) return PackagingStrategy::source_plus_generic_libs;
  if (cls == WorkloadClass::optimized && redistribution_ok) {
    return targets.empty() ? PackagingStrategy::generic_static
                           : PackagingStrategy::per_resource_static;
  }
  const bool can_compile = std::any_of(targets.begin(), targets.end(),
                                       [](const auto& r) { return r.can_compile; });
  return can_compile ? PackagingStrategy::on_demand_compile
                     : PackagingStrategy::source_plus_generic_libs;
}

std::vector<std::string> manifest_targets(const PackagingManifest& manifest) {
  std::set<std::string> tags;
  for (const auto& a : manifest.entries) {
    if (a.is_binary() && a.arch_specific()) tags.insert(*a.target_arch);
  }
  return {tags.begin(), tags.end()};
}

PackagingManifest build_manifest(const Tale& tale, PackagingStrategy strategy,
                                 bool redistribution_ok) {
  PackagingManifest m;
  m.workload_class = classify_workload(tale);
  m.strategy = strategy;
  m.redistribution_ok = redistribution_ok;
  if (!has_source(tale.code_refs)) {
    throw ValidationError("binary-only Tale: no source artifact to include");
  }
  for (const auto& a : tale.code_refs) {
    bool keep = false;
    switch (strategy) {
      case PackagingStrategy::generic_static:
      case PackagingStrategy::per_resource_static:
        keep = true;
        break;
      case PackagingStrategy::source_plus_generic_libs:
        keep = a.kind == ArtifactKind::source ||
               (a.kind == ArtifactKind::library && !a.arch_specific());
        break;
      case PackagingStrategy::on_demand_compile:
        keep = a.kind != ArtifactKind::prebuilt_executable;
        break;
    }
    if (keep) m.entries.push_back(a);
  }
  if (strategy == PackagingStrategy::per_resource_static && manifest_targets(m).empty()) {
    throw ValidationError("per_resource_static needs binaries tagged for target resources");
  }
  if (!redistribution_ok) {
    for (const auto& a : m.entries) {
      if (a.kind == ArtifactKind::prebuilt_executable && a.proprietary_toolchain) {
        throw ValidationError("executable '" + a.path +
                              "' comes from a proprietary toolchain and is not redistributable");
      }
    }
  }
  return m;
}

Tale record_provenance(Tale tale, ProvenanceEvent event) {
  if (event.seq != tale.last_seq() + 1) {
    throw ValidationError("out-of-order provenance seq " + std::to_string(event.seq) +
                          " after " + std::to_string(tale.last_seq()));
  }
  tale.provenance.push_back(std::move(event));
  return tale;
}

const ProvenanceEvent& append_provenance(Tale& tale, ProvenanceKind kind,
                                         nlohmann::json payload, double timestamp) {
  ProvenanceEvent e;
  e.seq = tale.last_seq() + 1;
  e.timestamp = timestamp;
  e.kind = kind;
  e.payload = std::move(payload);
  tale.provenance.push_back(std::move(e));
  return tale.provenance.back();
}

// ---- enum names ------------------------------------------------------------

std::string to_string(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::source: return "source";
    case ArtifactKind::prebuilt_executable: return "prebuilt_executable";
    case ArtifactKind::library: return "library";
  }
  return "?";
}

std::string to_string(WorkloadClass c) {
  switch (c) {
    case WorkloadClass::unoptimized: return "unoptimized";
    case WorkloadClass::optimized: return "optimized";
    case WorkloadClass::mixed: return "mixed";
  }
  return "?";
}

std::string to_string(PackagingStrategy s) {
  switch (s) {
    case PackagingStrategy::generic_static: return "generic_static";
    case PackagingStrategy::per_resource_static: return "per_resource_static";
    case PackagingStrategy::source_plus_generic_libs: return "source_plus_generic_libs";
    case PackagingStrategy::on_demand_compile: return "on_demand_compile";
  }
  return "?";
}

std::string to_string(ProvenanceKind k) {
  switch (k) {
    case ProvenanceKind::created: return "created";
    case ProvenanceKind::launched: return "launched";
    case ProvenanceKind::job_submitted: return "job_submitted";
    case ProvenanceKind::job_state_change: return "job_state_change";
    case ProvenanceKind::data_transfer: return "data_transfer";
    case ProvenanceKind::exported: return "exported";
    case ProvenanceKind::imported: return "imported";
  }
  return "?";
}

ArtifactKind parse_artifact_kind(const std::string& s) {
  for (auto k : {ArtifactKind::source, ArtifactKind::prebuilt_executable, ArtifactKind::library}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown artifact kind '" + s + "'");
}

WorkloadClass parse_workload_class(const std::string& s) {
  for (auto c : {WorkloadClass::unoptimized, WorkloadClass::optimized, WorkloadClass::mixed}) {
    if (to_string(c) == s) return c;
  }
  throw ValidationError("unknown workload class '" + s + "'");
}

PackagingStrategy parse_strategy(const std::string& s) {
  for (int i = 1; i <= 4; ++i) {
    auto st = static_cast<PackagingStrategy>(i);
    if (to_string(st) == s || std::to_string(i) == s) return st;
  }
  throw ValidationError("unknown packaging strategy '" + s + "'");
}

ProvenanceKind parse_provenance_kind(const std::string& s) {
  for (auto k : {ProvenanceKind::created, ProvenanceKind::launched, ProvenanceKind::job_submitted,
                 ProvenanceKind::job_state_change, ProvenanceKind::data_transfer,
                 ProvenanceKind::exported, ProvenanceKind::imported}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown provenance event kind '" + s + "'");
}

// ---- json ------------------------------------------------------------------

void to_json(nlohmann::json& j, const CodeArtifact& a) {
  j = {{"path", a.path}, {"kind", to_string(a.kind)}, {"checksum", a.checksum}};
  j["target_arch"] = a.target_arch ? nlohmann::json(*a.target_arch) : nlohmann::json(nullptr);
  if (a.proprietary_toolchain) j["proprietary_toolchain"] = true;
}

void from_json(const nlohmann::json& j, CodeArtifact& a) {
  a = CodeArtifact{};
  a.path = j.at("path").get<std::string>();
  a.kind = parse_artifact_kind(j.value("kind", std::string("source")));
  if (j.contains("target_arch") && !j.at("target_arch").is_null()) {
    a.target_arch = j.at("target_arch").get<std::string>();
  }
  a.checksum = j.value("checksum", std::string());
  a.proprietary_toolchain = j.value("proprietary_toolchain", false);
}

void to_json(nlohmann::json& j, const EnvironmentSpec& e) {
  auto pins = nlohmann::json::array();
  for (const auto& p : e.dependency_pins) {
    pins.push_back({{"name", p.name}, {"constraint", p.constraint}});
  }
  j = {{"base_image_name", e.base_image_name},
       {"dependency_pins", std::move(pins)},
       {"env_vars", e.env_vars}};
}

void from_json(const nlohmann::json& j, EnvironmentSpec& e) {
  e = EnvironmentSpec{};
  e.base_image_name = j.value("base_image_name", std::string());
  if (j.contains("dependency_pins")) {
    for (const auto& p : j.at("dependency_pins")) {
      e.dependency_pins.push_back(
          {p.at("name").get<std::string>(), p.at("constraint").get<std::string>()});
    }
  }
  if (j.contains("env_vars")) {
    e.env_vars = j.at("env_vars").get<std::map<std::string, std::string>>();
  }
}

void to_json(nlohmann::json& j, const PackagingManifest& m) {
  j = {{"workload_class", to_string(m.workload_class)},
       {"strategy", to_string(m.strategy)},
       {"entries", m.entries},
       {"redistribution_ok", m.redistribution_ok}};
}

void from_json(const nlohmann::json& j, PackagingManifest& m) {
  m = PackagingManifest{};
  m.workload_class = parse_workload_class(j.at("workload_class").get<std::string>());
  m.strategy = parse_strategy(j.at("strategy").get<std::string>());
  m.entries = j.at("entries").get<std::vector<CodeArtifact>>();
  m.redistribution_ok = j.value("redistribution_ok", true);
}

void to_json(nlohmann::json& j, const ProvenanceEvent& e) {
  j = {{"seq", e.seq}, {"timestamp", e.timestamp}, {"kind", to_string(e.kind)},
       {"payload", e.payload}};
}

void from_json(const nlohmann::json& j, ProvenanceEvent& e) {
  e = ProvenanceEvent{};
  e.seq = j.at("seq").get<std::uint64_t>();
  e.timestamp = j.at("timestamp").get<double>();
  e.kind = parse_provenance_kind(j.at("kind").get<std::string>());
  e.payload = j.value("payload", nlohmann::json::object());
}

void to_json(nlohmann::json& j, const Tale& t) {
  j = {{"id", t.id},
       {"title", t.title},
       {"code_refs", t.code_refs},
       {"data_refs", t.data_refs},
       {"env_spec", t.env_spec},
       {"provenance", t.provenance}};
  j["packaging"] = t.packaging ? nlohmann::json(*t.packaging) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, Tale& t) {
  t = Tale{};
  t.id = j.at("id").get<std::string>();
  t.title = j.at("title").get<std::string>();
  t.code_refs = j.value("code_refs", std::vector<CodeArtifact>{});
  t.data_refs = j.value("data_refs", std::vector<ExternalDataRef>{});
  if (j.contains("env_spec")) t.env_spec = j.at("env_spec").get<EnvironmentSpec>();
  if (j.contains("packaging") && !j.at("packaging").is_null()) {
    t.packaging = j.at("packaging").get<PackagingManifest>();
  }
  t.provenance = j.value("provenance", std::vector<ProvenanceEvent>{});
}

// ---- store -----------------------------------------------------------------

void TaleStore::add(Tale tale) {
  std::lock_guard lock(mu_);
  if (tale.id.empty()) throw ValidationError("Tale id is empty");
  auto id = tale.id;
  if (!tales_.emplace(id, std::move(tale)).second) {
    throw ValidationError("Tale id '" + id + "' already exists");
  }
}

bool TaleStore::contains(const std::string& id) const {
  std::lock_guard lock(mu_);
  return tales_.count(id) > 0;
}

Tale TaleStore::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = tales_.find(id);
  if (it == tales_.end()) throw NotFoundError("unknown Tale '" + id + "'");
  return it->second;
}

std::vector<std::string> TaleStore::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, _] : tales_) out.push_back(id);
  return out;
}

std::uint64_t TaleStore::append(const std::string& id, ProvenanceKind kind,
                                nlohmann::json payload, double timestamp) {
  std::lock_guard lock(mu_);
  auto it = tales_.find(id);
  if (it == tales_.end()) throw NotFoundError("unknown Tale '" + id + "'");
  return append_provenance(it->second, kind, std::move(payload), timestamp).seq;
}

}  // namespace talescale
