#pragma once

#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "talescale/clock.hpp"
#include "talescale/data_ref.hpp"
#include "talescale/resource.hpp"
#include "talescale/tale.hpp"

namespace talescale {

// ---- catalog ---------------------------------------------------------------

class DataCatalog {
 public:
  // Throws ValidationError on a duplicate uri or a malformed checksum.
  ExternalDataRef register_dataset(std::string uri, std::uint64_t size_bytes,
                                   std::string checksum);
  std::optional<ExternalDataRef> find(const std::string& uri) const;
  std::vector<ExternalDataRef> all() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, ExternalDataRef> refs_;
};

// ---- staging ---------------------------------------------------------------

enum class StagingKind { mount, stage_in, cache_fetch };

struct StagingAction {
  ExternalDataRef ref;
  StagingKind action = StagingKind::cache_fetch;
  std::string resource;

  bool operator==(const StagingAction&) const = default;
};

// mount when the dataset sits on `resource` behind a POSIX file system,
// stage_in when it sits there behind some other interface, cache_fetch
// otherwise.
StagingAction resolve_local(const ExternalDataRef& ref, const ResourceDescriptor& resource);

std::string to_string(StagingKind k);
void to_json(nlohmann::json& j, const StagingAction& a);

// ---- cache -----------------------------------------------------------------

enum class CacheState { absent, transferring, resident, evicted };
enum class TransferSource { remote_repo, hpc_local_stagein };

struct CacheEntry {
  ExternalDataRef ref;
  CacheState state = CacheState::absent;
  std::string local_path;
  SimTime last_access = 0;
  std::uint64_t access_seq = 0;  // LRU order
  int pin_count = 0;
};

struct TransferRecord {
  ExternalDataRef ref;
  TransferSource source = TransferSource::remote_repo;
  std::uint64_t bytes = 0;
  SimTime started = 0;
  SimTime finished = 0;
  std::string resource;  // set for stage-ins
};

struct LocalHandle {
  std::string uri;
  std::string local_path;
  std::uint64_t size_bytes = 0;
};

struct FetchResult {
  std::string checksum;  // digest of what actually arrived
};

// Where cache misses are fetched from.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual FetchResult fetch(const ExternalDataRef& ref) = 0;
};

// Repository stand-in: returns the registered checksum unless the uri was
// marked corrupt.
class SimDataSource final : public DataSource {
 public:
  FetchResult fetch(const ExternalDataRef& ref) override;
  void corrupt(const std::string& uri);
  void set_fetch_hook(std::function<void(const ExternalDataRef&)> hook);

 private:
  std::mutex mu_;
  std::set<std::string> corrupt_;
  std::function<void(const ExternalDataRef&)> hook_;
};

struct CacheConfig {
  std::uint64_t capacity_bytes = 1ULL << 40;
  double bandwidth_bytes_per_s = 100e6;
  std::string root = "/dms/cache";
};

struct PrefetchReport {
  std::vector<TransferRecord> records;
  std::map<std::string, std::string> failures;  // uri -> error
};

// Data Management System cache. Whole-file, LRU by last access, with
// coalesced concurrent misses: the first opener of an absent ref performs the
// transfer, later openers block on it.
class DmsCache {
 public:
  DmsCache(CacheConfig config, const DataCatalog& catalog, const Scheduler& clock,
           DataSource* source = nullptr);

  // Throws NotFoundError for unregistered uris, ChecksumError when the
  // arrived content does not match, CapacityError when the file cannot be
  // admitted even after eviction.
  LocalHandle open(const std::string& uri);

  // Eagerly pulls every absent data ref of the Tale. Per-ref failures are
  // reported, never rolled back.
  PrefetchReport prefetch(const Tale& tale);

  // Evicts least-recently-used unpinned resident entries until at least
  // `needed_bytes` are free. Throws CapacityError, evicting nothing, when
  // that is impossible.
  std::vector<ExternalDataRef> evict(std::uint64_t needed_bytes);

  void pin(const std::string& uri);
  void unpin(const std::string& uri);

  // Applies a staging action: mount touches nothing, stage_in logs a local
  // copy on the resource, cache_fetch goes through open().
  LocalHandle apply(const StagingAction& action);

  CacheEntry entry(const std::string& uri) const;
  std::uint64_t used_bytes() const;
  std::uint64_t capacity_bytes() const { return config_.capacity_bytes; }
  std::vector<std::string> resident_uris() const;
  std::vector<TransferRecord> transfers() const;
  std::size_t transfer_count(TransferSource source) const;

  // One TransferRecord per line.
  std::string transfer_log_ndjson() const;

  void set_transfer_listener(std::function<void(const TransferRecord&)> fn);

 private:
  CacheEntry& entry_locked(const std::string& uri);
  std::vector<ExternalDataRef> evict_locked(std::uint64_t needed_bytes);
  void touch_locked(CacheEntry& e);
  std::string local_path_for(const std::string& uri) const;
  void emit(const TransferRecord& rec);

  CacheConfig config_;
  const DataCatalog& catalog_;
  const Scheduler& clock_;
  SimDataSource default_source_;
  DataSource* source_;

  mutable std::mutex mu_;
  std::map<std::string, CacheEntry> entries_;
  std::map<std::string, std::shared_future<LocalHandle>> in_flight_;
  std::uint64_t used_ = 0;  // resident + transferring
  std::uint64_t access_counter_ = 0;
  std::vector<TransferRecord> log_;
  std::function<void(const TransferRecord&)> listener_;
};

std::string to_string(CacheState s);
std::string to_string(TransferSource s);
void to_json(nlohmann::json& j, const TransferRecord& r);

}  // namespace talescale
