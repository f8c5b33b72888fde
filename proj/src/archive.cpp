#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "talescale/digest.hpp"
#include "talescale/errors.hpp"
#include "talescale/tale.hpp"
#include "talescale/zip.hpp"

namespace talescale {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kTaleJson = "metadata/tale.json";
constexpr std::string_view kDataManifest = "metadata/data-manifest.json";
constexpr std::string_view kEvents = "provenance/events.ndjson";
constexpr std::string_view kWorkspacePrefix = "workspace/";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw NotFoundError("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string export_tale(const Tale& tale, const WorkspaceFiles& files) {
  if (auto v = validate_tale(tale); !v.empty()) {
    throw ValidationError("Tale '" + tale.id + "' is invalid: " + v.front());
  }
  std::vector<zip::Entry> entries;
  for (const auto& a : tale.code_refs) {
    auto it = files.find(a.path);
    if (it == files.end()) {
      throw NotFoundError("workspace file missing: " + a.path);
    }
    if (!digest_matches(a.checksum, it->second)) {
      throw ChecksumError(a.path, "checksum mismatch for workspace file " + a.path);
    }
    entries.push_back({std::string(kWorkspacePrefix) + a.path, it->second});
  }

  nlohmann::json meta = {{"format_version", kTaleFormatVersion},
                         {"id", tale.id},
                         {"title", tale.title},
                         {"env_spec", tale.env_spec},
                         {"code_refs", tale.code_refs}};
  meta["packaging"] = tale.packaging ? nlohmann::json(*tale.packaging) : nlohmann::json(nullptr);
  entries.push_back({std::string(kTaleJson), meta.dump(2) + "\n"});
  entries.push_back({std::string(kDataManifest), nlohmann::json(tale.data_refs).dump(2) + "\n"});

  std::string events;
  for (const auto& e : tale.provenance) {
    if (e.kind == ProvenanceKind::imported) continue;
    events += nlohmann::json(e).dump();
    events += '\n';
  }
  entries.push_back({std::string(kEvents), std::move(events)});

  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.name < b.name; });
  return zip::write(entries);
}

std::string export_tale(const Tale& tale, const fs::path& workspace_root) {
  return export_tale(tale, read_workspace(tale, workspace_root));
}

ImportedTale import_tale(std::string_view archive, std::optional<double> timestamp) {
  const auto entries = zip::read(archive);
  std::map<std::string, const zip::Entry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;

  auto need = [&](std::string_view name) -> const std::string& {
    auto it = by_name.find(std::string(name));
    if (it == by_name.end()) {
      throw ValidationError("archive has no " + std::string(name));
    }
    return it->second->data;
  };

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(need(kTaleJson));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("metadata/tale.json is not valid JSON: ") + e.what());
  }
  const auto version = meta.value("format_version", -1);
  if (version != kTaleFormatVersion) {
    throw VersionError("unsupported Tale format_version " + std::to_string(version) +
                       " (this build reads version " + std::to_string(kTaleFormatVersion) + ")");
  }

  ImportedTale out;
  Tale& t = out.tale;
  try {
    t.id = meta.at("id").get<std::string>();
    t.title = meta.at("title").get<std::string>();
    t.env_spec = meta.at("env_spec").get<EnvironmentSpec>();
    t.code_refs = meta.at("code_refs").get<std::vector<CodeArtifact>>();
    if (!meta.at("packaging").is_null()) {
      t.packaging = meta.at("packaging").get<PackagingManifest>();
    }
    t.data_refs =
        nlohmann::json::parse(need(kDataManifest)).get<std::vector<ExternalDataRef>>();
    std::istringstream lines(need(kEvents));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      t.provenance.push_back(nlohmann::json::parse(line).get<ProvenanceEvent>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed Tale metadata: ") + e.what());
  }

  std::set<std::string> expected;
  for (const auto& a : t.code_refs) {
    const auto name = std::string(kWorkspacePrefix) + a.path;
    expected.insert(name);
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ValidationError("archive has no " + name);
    if (!digest_matches(a.checksum, it->second->data)) {
      throw ChecksumError(name, "checksum mismatch in archive entry '" + name + "'");
    }
    out.files[a.path] = it->second->data;
  }
  for (const auto& e : entries) {
    const bool known = e.name == kTaleJson || e.name == kDataManifest || e.name == kEvents ||
                       expected.count(e.name) > 0;
    if (!known) throw ValidationError("unexpected archive entry '" + e.name + "'");
  }

  if (auto v = validate_tale(t); !v.empty()) {
    throw ValidationError("archived Tale is invalid: " + v.front());
  }

  using namespace std::chrono;
  const double now =
      timestamp.value_or(duration<double>(system_clock::now().time_since_epoch()).count());
  append_provenance(t, ProvenanceKind::imported,
                    {{"format_version", version}, {"archive_digest", content_digest(archive)}},
                    now);
  return out;
}

WorkspaceFiles read_workspace(const Tale& tale, const fs::path& root) {
  WorkspaceFiles files;
  for (const auto& a : tale.code_refs) {
    const auto p = root / fs::u8path(a.path);
    if (!fs::is_regular_file(p)) throw NotFoundError("workspace file missing: " + a.path);
    files[a.path] = read_file(p);
  }
  return files;
}

void write_workspace(const WorkspaceFiles& files, const fs::path& root) {
  for (const auto& [path, data] : files) {
    if (!is_normalized_relative_path(path)) {
      throw ValidationError("refusing to write unsafe path '" + path + "'");
    }
    const auto p = root / fs::u8path(path);
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + p.string() + "'");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
  }
}

std::vector<CodeArtifact> scan_workspace(const fs::path& root, std::span<const std::string> skip) {
  static const std::set<std::string> kSourceExt = {
      ".c",  ".cc", ".cpp", ".cxx", ".h",  ".hh", ".hpp", ".f",   ".f90", ".f95", ".py",
      ".r",  ".jl", ".sh",  ".m",   ".java", ".rs", ".go", ".ipynb", ".rmd", ".cu", ".txt",
      ".md", ".json", ".yaml", ".yml", ".toml", ".cfg", ".in", ".mk", ".cmake"};
  static const std::set<std::string> kLibExt = {".so", ".a", ".dylib", ".dll", ".lib"};

  if (!fs::is_directory(root)) {
    throw NotFoundError("workspace '" + root.string() + "' is not a directory");
  }
  const std::set<std::string> skipped(skip.begin(), skip.end());
  std::vector<CodeArtifact> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    auto rel = fs::relative(entry.path(), root).generic_u8string();
    std::string path(rel.begin(), rel.end());
    if (skipped.count(path)) continue;

    CodeArtifact a;
    a.path = path;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const auto name = entry.path().filename().string();
    const auto perms = entry.status().permissions();
    const bool exec = (perms & fs::perms::owner_exec) != fs::perms::none;
    if (kLibExt.count(ext) || name.find(".so.") != std::string::npos) {
      a.kind = ArtifactKind::library;
    } else if (kSourceExt.count(ext)) {
      a.kind = ArtifactKind::source;
    } else if (exec) {
      a.kind = ArtifactKind::prebuilt_executable;
    } else {
      a.kind = ArtifactKind::source;
    }
    a.checksum = content_digest(read_file(entry.path()));
    out.push_back(std::move(a));
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.path < y.path; });
  return out;
}

}  // namespace talescale
