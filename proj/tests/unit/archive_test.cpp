#include <gtest/gtest.h>

#include "support.hpp"
#include "tale_corpus.hpp"
#include "talescale/digest.hpp"
#include "talescale/errors.hpp"
#include "talescale/tale.hpp"
#include "talescale/zip.hpp"

using namespace talescale;

namespace {

std::string rewrite_entry(const std::string& archive, const std::string& name,
                          const std::function<void(std::string&)>& edit) {
  auto entries = zip::read(archive);
  for (auto& e : entries) {
    if (e.name == name) edit(e.data);
  }
  return zip::write(entries);
}

}  // namespace

TEST(Archive, CorpusRoundTripsByteIdentically) {
  const auto corpus = testsupport::make_tale_corpus(12);
  for (const auto& item : corpus) {
    const auto first = export_tale(item.tale, item.files);
    auto imported = import_tale(first, 42.0);
    EXPECT_EQ(imported.files, item.files) << item.tale.id;
    ASSERT_FALSE(imported.tale.provenance.empty());
    EXPECT_EQ(imported.tale.provenance.back().kind, ProvenanceKind::imported);
    const auto second = export_tale(imported.tale, imported.files);
    EXPECT_EQ(first, second) << item.tale.id;
  }
}

TEST(Archive, ExportIsDeterministic) {
  auto item = testsupport::make_tale_corpus(1).front();
  EXPECT_EQ(export_tale(item.tale, item.files), export_tale(item.tale, item.files));
}

TEST(Archive, LayoutAndSortedEntries) {
  auto item = testsupport::make_tale_corpus(3)[2];
  auto entries = zip::read(export_tale(item.tale, item.files));
  std::vector<std::string> names;
  for (const auto& e : entries) names.push_back(e.name);
  EXPECT_TRUE(std::is_sorted(names.begin(), names.end()));
  auto has = [&](const std::string& n) {
    return std::find(names.begin(), names.end(), n) != names.end();
  };
  EXPECT_TRUE(has("metadata/tale.json"));
  EXPECT_TRUE(has("metadata/data-manifest.json"));
  EXPECT_TRUE(has("provenance/events.ndjson"));
  for (const auto& a : item.tale.code_refs) EXPECT_TRUE(has("workspace/" + a.path)) << a.path;
  auto meta = nlohmann::json::parse(
      std::find_if(entries.begin(), entries.end(),
                   [](const auto& e) { return e.name == "metadata/tale.json"; })
          ->data);
  EXPECT_EQ(meta.at("format_version"), kTaleFormatVersion);
}

TEST(Archive, FlippedByteNamesTheEntry) {
  auto item = testsupport::make_tale_corpus(1).front();
  const auto& victim = item.tale.code_refs[1].path;
  ASSERT_FALSE(item.files.at(victim).empty());
  // Re-zip with fresh CRCs so only the content digest can notice.
  auto bad = rewrite_entry(export_tale(item.tale, item.files), "workspace/" + victim,
                           [](std::string& d) { d[0] = static_cast<char>(d[0] ^ 0x01); });
  try {
    import_tale(bad);
    FAIL() << "expected ChecksumError";
  } catch (const ChecksumError& e) {
    EXPECT_EQ(e.entry(), "workspace/" + victim);
  }
}

TEST(Archive, RawCorruptionCaughtByCrc) {
  auto item = testsupport::make_tale_corpus(1).front();
  auto archive = export_tale(item.tale, item.files);
  const auto& victim = item.files.at(item.tale.code_refs[1].path);
  auto pos = archive.find(victim);
  ASSERT_NE(pos, std::string::npos);
  archive[pos] = static_cast<char>(archive[pos] ^ 0x20);
  EXPECT_THROW(import_tale(archive), ChecksumError);
}

TEST(Archive, UnknownFormatVersion) {
  auto item = testsupport::make_tale_corpus(1).front();
  auto bad = rewrite_entry(export_tale(item.tale, item.files), "metadata/tale.json",
                           [](std::string& d) {
                             auto j = nlohmann::json::parse(d);
                             j["format_version"] = 99;
                             d = j.dump();
                           });
  EXPECT_THROW(import_tale(bad), VersionError);
}

TEST(Archive, MissingOrChangedWorkspaceFile) {
  auto item = testsupport::make_tale_corpus(1).front();
  auto files = item.files;
  const auto path = item.tale.code_refs[1].path;
  files.erase(path);
  try {
    export_tale(item.tale, files);
    FAIL();
  } catch (const NotFoundError& e) {
    EXPECT_NE(std::string(e.what()).find(path), std::string::npos);
  }
  files = item.files;
  files[path] += "x";
  EXPECT_THROW(export_tale(item.tale, files), ChecksumError);
}

TEST(Archive, NotAZip) {
  EXPECT_THROW(import_tale("definitely not a zip"), ValidationError);
}

TEST(Archive, DiskWorkspaceRoundTrip) {
  testsupport::TempDir dir;
  auto item = testsupport::make_tale_corpus(2)[1];
  write_workspace(item.files, dir.path() / "ws");
  auto from_disk = export_tale(item.tale, dir.path() / "ws");
  EXPECT_EQ(from_disk, export_tale(item.tale, item.files));

  auto scanned = scan_workspace(dir.path() / "ws");
  ASSERT_EQ(scanned.size(), item.files.size());
  for (const auto& a : scanned) {
    EXPECT_EQ(a.checksum, content_digest(item.files.at(a.path))) << a.path;
  }
  EXPECT_THROW(scan_workspace(dir.path() / "missing"), NotFoundError);
  EXPECT_THROW(write_workspace({{"../escape", "x"}}, dir.path() / "ws2"), ValidationError);
}
