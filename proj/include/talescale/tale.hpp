#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "talescale/data_ref.hpp"
#include "talescale/resource.hpp"

namespace talescale {

enum class ArtifactKind { source, prebuilt_executable, library };

struct CodeArtifact {
  std::string path;  // relative, normalized, '/' separated
  ArtifactKind kind = ArtifactKind::source;
  std::optional<std::string> target_arch;  // absent or "generic" = portable
  std::string checksum;                    // "algo:hex"
  // Built with a toolchain whose license may forbid redistribution.
  bool proprietary_toolchain = false;

  bool arch_specific() const { return target_arch && *target_arch != "generic"; }
  bool is_binary() const { return kind != ArtifactKind::source; }

  bool operator==(const CodeArtifact&) const = default;
};

struct DependencyPin {
  std::string name;
  std::string constraint;  // "1.0.2", "==1.0.2" or ">=1.0,<2"

  bool operator==(const DependencyPin&) const = default;
};

struct EnvironmentSpec {
  std::string base_image_name;
  std::vector<DependencyPin> dependency_pins;
  std::map<std::string, std::string> env_vars;

  bool operator==(const EnvironmentSpec&) const = default;
};

enum class WorkloadClass { unoptimized, optimized, mixed };

enum class PackagingStrategy {
  generic_static = 1,
  per_resource_static = 2,
  source_plus_generic_libs = 3,
  on_demand_compile = 4,
};

struct PackagingManifest {
  WorkloadClass workload_class = WorkloadClass::unoptimized;
  PackagingStrategy strategy = PackagingStrategy::source_plus_generic_libs;
  std::vector<CodeArtifact> entries;
  bool redistribution_ok = true;

  bool operator==(const PackagingManifest&) const = default;
};

enum class ProvenanceKind {
  created,
  launched,
  job_submitted,
  job_state_change,
  data_transfer,
  exported,
  imported,
};

struct ProvenanceEvent {
  std::uint64_t seq = 0;
  double timestamp = 0;
  ProvenanceKind kind = ProvenanceKind::created;
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const ProvenanceEvent&) const = default;
};

struct Tale {
  std::string id;
  std::string title;
  std::vector<CodeArtifact> code_refs;
  std::vector<ExternalDataRef> data_refs;
  EnvironmentSpec env_spec;
  std::optional<PackagingManifest> packaging;
  std::vector<ProvenanceEvent> provenance;

  std::uint64_t last_seq() const { return provenance.empty() ? 0 : provenance.back().seq; }

  bool operator==(const Tale&) const = default;
};

struct CreateOptions {
  std::string id;                    // empty: generate a random one
  std::optional<double> timestamp;   // empty: wall-clock seconds
};

// Builds a Tale whose provenance holds a single `created` event.
// Throws ValidationError on an empty title or malformed refs.
Tale create_tale(std::string title, std::vector<CodeArtifact> code_refs,
                 std::vector<ExternalDataRef> data_refs, EnvironmentSpec env_spec,
                 const CreateOptions& options = {});

// Every invariant violation found, empty when the Tale is valid. Unlike
// create_tale this also checks the source-inclusion rule and the packaging
// manifest.
std::vector<std::string> validate_tale(const Tale& tale);

// Rejects absolute paths, empty / "." / ".." components and backslashes.
bool is_normalized_relative_path(std::string_view path);

// "exact" when the constraint pins a single version, "range" for a comparator
// list, nullopt when malformed.
std::optional<std::string> constraint_kind(std::string_view constraint);

WorkloadClass classify_workload(const Tale& tale);

// Fixed policy:
//   unoptimized                         -> source_plus_generic_libs
//   optimized, redistributable, targets -> per_resource_static
//   optimized, redistributable, none    -> generic_static
//   mixed, or not redistributable       -> on_demand_compile when any target
//                                          can compile, else
//                                          source_plus_generic_libs
PackagingStrategy select_strategy(WorkloadClass cls,
                                  std::span<const ResourceDescriptor> targets,
                                  bool redistribution_ok);

// Every source artifact is always kept. Strategies 1 and 2 also carry the
// binaries; 3 keeps only portable libraries; 4 keeps all libraries and drops
// prebuilt executables (they are rebuilt on the target).
PackagingManifest build_manifest(const Tale& tale, PackagingStrategy strategy,
                                 bool redistribution_ok = true);

// Architecture tags of the arch-specific binaries in a manifest.
std::vector<std::string> manifest_targets(const PackagingManifest& manifest);

// Appends `event`, which must carry seq == last_seq() + 1.
Tale record_provenance(Tale tale, ProvenanceEvent event);

// In-place append that assigns the next seq.
const ProvenanceEvent& append_provenance(Tale& tale, ProvenanceKind kind,
                                         nlohmann::json payload, double timestamp);

std::string to_string(ArtifactKind k);
std::string to_string(WorkloadClass c);
std::string to_string(PackagingStrategy s);
std::string to_string(ProvenanceKind k);
ArtifactKind parse_artifact_kind(const std::string& s);
WorkloadClass parse_workload_class(const std::string& s);
PackagingStrategy parse_strategy(const std::string& s);
ProvenanceKind parse_provenance_kind(const std::string& s);

void to_json(nlohmann::json& j, const CodeArtifact& a);
void from_json(const nlohmann::json& j, CodeArtifact& a);
void to_json(nlohmann::json& j, const EnvironmentSpec& e);
void from_json(const nlohmann::json& j, EnvironmentSpec& e);
void to_json(nlohmann::json& j, const PackagingManifest& m);
void from_json(const nlohmann::json& j, PackagingManifest& m);
void to_json(nlohmann::json& j, const ProvenanceEvent& e);
void from_json(const nlohmann::json& j, ProvenanceEvent& e);
void to_json(nlohmann::json& j, const Tale& t);
void from_json(const nlohmann::json& j, Tale& t);

// ---- archive ---------------------------------------------------------------

inline constexpr int kTaleFormatVersion = 1;

// Relative path -> file content.
using WorkspaceFiles = std::map<std::string, std::string>;

// Zip container with metadata/tale.json, metadata/data-manifest.json,
// workspace/** and provenance/events.ndjson, entries sorted by name and
// timestamps pinned. `imported` events are local bookkeeping and are not
// written. Throws NotFoundError naming a missing file, ChecksumError when a
// file does not match its recorded digest.
std::string export_tale(const Tale& tale, const WorkspaceFiles& files);
std::string export_tale(const Tale& tale, const std::filesystem::path& workspace_root);

struct ImportedTale {
  Tale tale;
  WorkspaceFiles files;
};

// Verifies every digest, then appends an `imported` event. Throws
// VersionError on an unknown format_version and ChecksumError naming the
// damaged entry.
ImportedTale import_tale(std::string_view archive,
                         std::optional<double> timestamp = std::nullopt);

// Reads the code artifacts listed in `tale` from disk.
WorkspaceFiles read_workspace(const Tale& tale, const std::filesystem::path& root);
void write_workspace(const WorkspaceFiles& files, const std::filesystem::path& root);

// Walks `root` and describes every regular file as a CodeArtifact, guessing
// the kind from the extension and the executable bit. Files in `skip` (paths
// relative to root) are ignored.
std::vector<CodeArtifact> scan_workspace(const std::filesystem::path& root,
                                         std::span<const std::string> skip = {});

// ---- store -----------------------------------------------------------------

// Repository of Tales keyed by id. Provenance appends are serialized here.
class TaleStore {
 public:
  // Throws ValidationError if the id is already present.
  void add(Tale tale);
  bool contains(const std::string& id) const;
  Tale get(const std::string& id) const;
  std::vector<std::string> ids() const;

  // Returns the seq assigned. Throws NotFoundError on an unknown id.
  std::uint64_t append(const std::string& id, ProvenanceKind kind,
                       nlohmann::json payload, double timestamp);

 private:
  mutable std::mutex mu_;
  std::map<std::string, Tale> tales_;
};

}  // namespace talescale
