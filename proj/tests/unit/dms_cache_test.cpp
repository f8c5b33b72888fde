#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "lru_oracle.hpp"
#include "talescale/digest.hpp"
#include "talescale/dms_cache.hpp"
#include "talescale/errors.hpp"

using namespace talescale;

namespace {

struct Fixture {
  DataCatalog catalog;
  SimClock clock;
  SimDataSource source;
  std::unique_ptr<DmsCache> cache;

  explicit Fixture(std::uint64_t capacity = 1000) {
    CacheConfig cfg;
    cfg.capacity_bytes = capacity;
    cfg.bandwidth_bytes_per_s = 10;
    cache = std::make_unique<DmsCache>(cfg, catalog, clock, &source);
  }
  ExternalDataRef add(const std::string& uri, std::uint64_t size) {
    return catalog.register_dataset(uri, size, content_digest(uri));
  }
};

Tale tale_with(std::vector<ExternalDataRef> refs) {
  Tale t;
  t.id = "t";
  t.title = "x";
  t.data_refs = std::move(refs);
  return t;
}

}  // namespace

TEST(Catalog, RegisterAndFind) {
  DataCatalog c;
  c.register_dataset("a", 0, content_digest("a"));
  EXPECT_TRUE(c.find("a"));
  EXPECT_FALSE(c.find("b"));
  EXPECT_THROW(c.register_dataset("a", 1, content_digest("a")), ValidationError);
  EXPECT_THROW(c.register_dataset("b", 1, "nope"), ValidationError);
  EXPECT_THROW(c.register_dataset("", 1, content_digest("")), ValidationError);
}

TEST(DmsCache, OpenTwiceTransfersOnce) {
  Fixture f;
  f.add("repo://a", 100);
  auto h1 = f.cache->open("repo://a");
  auto h2 = f.cache->open("repo://a");
  EXPECT_EQ(h1.local_path, h2.local_path);
  EXPECT_EQ(h1.local_path.rfind("/dms/cache/", 0), 0u);
  ASSERT_EQ(f.cache->transfers().size(), 1u);
  const auto& rec = f.cache->transfers()[0];
  EXPECT_EQ(rec.bytes, 100u);
  EXPECT_DOUBLE_EQ(rec.finished - rec.started, 10.0);
  EXPECT_EQ(f.cache->entry("repo://a").state, CacheState::resident);
  EXPECT_EQ(f.cache->used_bytes(), 100u);
}

TEST(DmsCache, ZeroByteFile) {
  Fixture f;
  f.add("repo://empty", 0);
  f.cache->open("repo://empty");
  ASSERT_EQ(f.cache->transfers().size(), 1u);
  EXPECT_EQ(f.cache->transfers()[0].bytes, 0u);
  EXPECT_EQ(f.cache->entry("repo://empty").state, CacheState::resident);
}

TEST(DmsCache, UnknownUri) {
  Fixture f;
  EXPECT_THROW(f.cache->open("repo://ghost"), NotFoundError);
}

TEST(DmsCache, ConcurrentOpensCoalesce) {
  Fixture f;
  f.add("repo://big", 500);
  std::atomic<int> fetches{0};
  f.source.set_fetch_hook([&](const ExternalDataRef&) {
    ++fetches;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  });
  std::vector<std::thread> threads;
  std::vector<std::string> paths(10);
  for (int i = 0; i < 10; ++i) {
    threads.emplace_back([&, i] { paths[i] = f.cache->open("repo://big").local_path; });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(fetches.load(), 1);
  EXPECT_EQ(f.cache->transfers().size(), 1u);
  for (const auto& p : paths) EXPECT_EQ(p, paths[0]);
}

TEST(DmsCache, ChecksumMismatchDiscardsEntry) {
  Fixture f;
  f.add("repo://bad", 10);
  f.source.corrupt("repo://bad");
  try {
    f.cache->open("repo://bad");
    FAIL();
  } catch (const ChecksumError& e) {
    EXPECT_EQ(e.entry(), "repo://bad");
  }
  EXPECT_EQ(f.cache->entry("repo://bad").state, CacheState::absent);
  EXPECT_EQ(f.cache->used_bytes(), 0u);
  EXPECT_TRUE(f.cache->transfers().empty());
}

TEST(DmsCache, TooLargeForCapacity) {
  Fixture f(100);
  f.add("repo://huge", 101);
  EXPECT_THROW(f.cache->open("repo://huge"), CapacityError);
}

TEST(DmsCache, EvictsLeastRecentlyUsed) {
  Fixture f(100);
  f.add("A", 60);
  f.add("B", 30);
  f.cache->open("A");
  f.clock.advance_to(5);
  f.cache->open("B");
  auto evicted = f.cache->evict(50);
  ASSERT_EQ(evicted.size(), 1u);
  EXPECT_EQ(evicted[0].uri, "A");
  EXPECT_EQ(f.cache->entry("A").state, CacheState::evicted);
  EXPECT_EQ(f.cache->entry("B").state, CacheState::resident);
  EXPECT_TRUE(f.cache->evict(0).empty());
}

TEST(DmsCache, PinnedEntriesBlockEviction) {
  Fixture f(100);
  f.add("A", 60);
  f.add("B", 30);
  f.cache->open("A");
  f.cache->open("B");
  f.cache->pin("A");
  f.cache->pin("B");
  EXPECT_THROW(f.cache->evict(50), CapacityError);
  EXPECT_EQ(f.cache->resident_uris().size(), 2u);
  f.cache->unpin("A");
  EXPECT_EQ(f.cache->evict(50).size(), 1u);
}

TEST(DmsCache, PrefetchTransfersEachRefOnce) {
  Fixture f;
  auto t = tale_with({f.add("r1", 10), f.add("r2", 20), f.add("r3", 30)});
  auto rep = f.cache->prefetch(t);
  EXPECT_EQ(rep.records.size(), 3u);
  EXPECT_TRUE(rep.failures.empty());
  for (const auto& r : t.data_refs) f.cache->open(r.uri);
  EXPECT_EQ(f.cache->transfers().size(), 3u);
  EXPECT_TRUE(f.cache->prefetch(t).records.empty());
}

TEST(DmsCache, PrefetchEvictOpenRetransfersOnce) {
  Fixture f(60);
  auto t = tale_with({f.add("r1", 10), f.add("r2", 20), f.add("r3", 30)});
  f.cache->prefetch(t);
  EXPECT_EQ(f.cache->evict(1).size(), 1u);  // cache was full, r1 is oldest
  for (const auto& r : t.data_refs) f.cache->open(r.uri);
  EXPECT_EQ(f.cache->transfers().size(), 4u);
}

TEST(DmsCache, PrefetchReportsPartialFailure) {
  Fixture f;
  auto t = tale_with({f.add("ok", 1), f.add("broken", 1)});
  f.source.corrupt("broken");
  auto rep = f.cache->prefetch(t);
  EXPECT_EQ(rep.records.size(), 1u);
  ASSERT_EQ(rep.failures.size(), 1u);
  EXPECT_TRUE(rep.failures.count("broken"));
  EXPECT_EQ(f.cache->entry("ok").state, CacheState::resident);
}

TEST(ResolveLocal, MountStageInOrFetch) {
  ResourceDescriptor hpc;
  hpc.name = "hpc";
  hpc.kind = ResourceKind::hpc_cluster;
  hpc.lrm = LrmKind::batch;
  hpc.local_datasets["posix://climate"] = DataExposure::posix;
  hpc.local_datasets["s3://bucket"] = DataExposure::non_posix;
  const std::uint64_t tb70 = 70ULL * 1000 * 1000 * 1000 * 1000;
  EXPECT_EQ(resolve_local({"posix://climate", tb70, ""}, hpc).action, StagingKind::mount);
  EXPECT_EQ(resolve_local({"s3://bucket", 1, ""}, hpc).action, StagingKind::stage_in);
  EXPECT_EQ(resolve_local({"http://x", 1, ""}, hpc).action, StagingKind::cache_fetch);
}

TEST(DmsCache, ApplyStagingActions) {
  Fixture f;
  auto ref = f.add("posix://climate", 1000000);
  auto h = f.cache->apply({ref, StagingKind::mount, "hpc"});
  EXPECT_EQ(h.uri, ref.uri);
  EXPECT_TRUE(f.cache->transfers().empty());
  f.cache->apply({ref, StagingKind::stage_in, "hpc"});
  EXPECT_EQ(f.cache->transfer_count(TransferSource::hpc_local_stagein), 1u);
  EXPECT_EQ(f.cache->transfer_count(TransferSource::remote_repo), 0u);
  auto small = f.add("repo://s", 5);
  f.cache->apply({small, StagingKind::cache_fetch, "wt"});
  EXPECT_EQ(f.cache->transfer_count(TransferSource::remote_repo), 1u);
  const auto log = f.cache->transfer_log_ndjson();
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);
}

TEST(DmsCache, LruMatchesBruteForceOracle) {
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    const auto mismatch = testsupport::run_lru_case(seed);
    ASSERT_TRUE(mismatch.empty()) << mismatch;
  }
}
