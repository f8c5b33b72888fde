#include "talescale/dms_cache.hpp"

#include <algorithm>

#include "talescale/digest.hpp"
#include "talescale/errors.hpp"

namespace talescale {

// ---- catalog ---------------------------------------------------------------

ExternalDataRef DataCatalog::register_dataset(std::string uri, std::uint64_t size_bytes,
                                              std::string checksum) {
  if (uri.empty()) throw ValidationError("dataset uri is empty");
  if (!is_well_formed_digest(checksum)) {
    throw ValidationError("dataset '" + uri + "' has a malformed checksum");
  }
  std::lock_guard lock(mu_);
  ExternalDataRef ref{uri, size_bytes, std::move(checksum)};
  if (!refs_.emplace(uri, ref).second) {
    throw ValidationError("dataset '" + uri + "' is already registered");
  }
  return ref;
}

std::optional<ExternalDataRef> DataCatalog::find(const std::string& uri) const {
  std::lock_guard lock(mu_);
  auto it = refs_.find(uri);
  if (it == refs_.end()) return std::nullopt;
  return it->second;
}

std::vector<ExternalDataRef> DataCatalog::all() const {
  std::lock_guard lock(mu_);
  std::vector<ExternalDataRef> out;
  for (const auto& [_, r] : refs_) out.push_back(r);
  return out;
}

// ---- staging ---------------------------------------------------------------

StagingAction resolve_local(const ExternalDataRef& ref, const ResourceDescriptor& resource) {
  StagingAction a{ref, StagingKind::cache_fetch, resource.name};
  auto it = resource.local_datasets.find(ref.uri);
  if (it != resource.local_datasets.end()) {
    a.action = it->second == DataExposure::posix ? StagingKind::mount : StagingKind::stage_in;
  }
  return a;
}

std::string to_string(StagingKind k) {
  switch (k) {
    case StagingKind::mount: return "mount";
    case StagingKind::stage_in: return "stage_in";
    case StagingKind::cache_fetch: return "cache_fetch";
  }
  return "?";
}

void to_json(nlohmann::json& j, const StagingAction& a) {
  j = {{"uri", a.ref.uri}, {"size_bytes", a.ref.size_bytes},
       {"action", to_string(a.action)}, {"resource", a.resource}};
}

// ---- data source -----------------------------------------------------------

FetchResult SimDataSource::fetch(const ExternalDataRef& ref) {
  std::function<void(const ExternalDataRef&)> hook;
  bool bad = false;
  {
    std::lock_guard lock(mu_);
    hook = hook_;
    bad = corrupt_.count(ref.uri) > 0;
  }
  if (hook) hook(ref);
  if (bad) return {content_digest("corrupted:" + ref.uri)};
  return {ref.checksum};
}

void SimDataSource::corrupt(const std::string& uri) {
  std::lock_guard lock(mu_);
  corrupt_.insert(uri);
}

void SimDataSource::set_fetch_hook(std::function<void(const ExternalDataRef&)> hook) {
  std::lock_guard lock(mu_);
  hook_ = std::move(hook);
}

// ---- cache -----------------------------------------------------------------

DmsCache::DmsCache(CacheConfig config, const DataCatalog& catalog, const Scheduler& clock,
                   DataSource* source)
    : config_(std::move(config)),
      catalog_(catalog),
      clock_(clock),
      source_(source ? source : &default_source_) {
  if (!(config_.bandwidth_bytes_per_s > 0)) {
    throw ConfigError("cache bandwidth must be positive");
  }
}

CacheEntry& DmsCache::entry_locked(const std::string& uri) {
  auto it = entries_.find(uri);
  if (it != entries_.end()) return it->second;
  auto ref = catalog_.find(uri);
  if (!ref) throw NotFoundError("dataset '" + uri + "' is not registered");
  CacheEntry e;
  e.ref = *ref;
  e.local_path = local_path_for(uri);
  return entries_.emplace(uri, std::move(e)).first->second;
}

void DmsCache::touch_locked(CacheEntry& e) {
  e.last_access = clock_.now();
  e.access_seq = ++access_counter_;
}

std::string DmsCache::local_path_for(const std::string& uri) const {
  auto slash = uri.find_last_of('/');
  auto base = slash == std::string::npos ? uri : uri.substr(slash + 1);
  if (base.empty()) base = "data";
  return config_.root + "/" + sha256_hex(uri).substr(0, 16) + "/" + base;
}

void DmsCache::emit(const TransferRecord& rec) {
  std::function<void(const TransferRecord&)> fn;
  {
    std::lock_guard lock(mu_);
    fn = listener_;
  }
  if (fn) fn(rec);
}

LocalHandle DmsCache::open(const std::string& uri) {
  std::unique_lock lock(mu_);
  CacheEntry& e = entry_locked(uri);
  if (e.state == CacheState::resident) {
    touch_locked(e);
    return {uri, e.local_path, e.ref.size_bytes};
  }
  if (e.state == CacheState::transferring) {
    auto fut = in_flight_.at(uri);
    lock.unlock();
    auto handle = fut.get();  // rethrows the transfer's failure
    lock.lock();
    touch_locked(entries_.at(uri));
    return handle;
  }

  const auto size = e.ref.size_bytes;
  if (size > config_.capacity_bytes) {
    throw CapacityError("dataset '" + uri + "' (" + std::to_string(size) +
                        " bytes) exceeds cache capacity");
  }
  evict_locked(size);
  e.state = CacheState::transferring;
  used_ += size;
  std::promise<LocalHandle> promise;
  in_flight_[uri] = promise.get_future().share();
  const ExternalDataRef ref = e.ref;
  const SimTime started = clock_.now();
  lock.unlock();

  std::optional<FetchResult> fetched;
  std::exception_ptr failure;
  try {
    fetched = source_->fetch(ref);
  } catch (...) {
    failure = std::current_exception();
  }

  lock.lock();
  CacheEntry& done = entries_.at(uri);
  in_flight_.erase(uri);
  if (!failure && fetched->checksum != ref.checksum) {
    failure = std::make_exception_ptr(
        ChecksumError(uri, "checksum mismatch after transfer of '" + uri + "'"));
  }
  if (failure) {
    done.state = CacheState::absent;
    used_ -= size;
    promise.set_exception(failure);
    lock.unlock();
    std::rethrow_exception(failure);
  }
  done.state = CacheState::resident;
  touch_locked(done);
  TransferRecord rec{ref, TransferSource::remote_repo, size, started,
                     started + static_cast<double>(size) / config_.bandwidth_bytes_per_s, ""};
  log_.push_back(rec);
  LocalHandle handle{uri, done.local_path, size};
  promise.set_value(handle);
  lock.unlock();
  emit(rec);
  return handle;
}

PrefetchReport DmsCache::prefetch(const Tale& tale) {
  PrefetchReport report;
  for (const auto& ref : tale.data_refs) {
    {
      std::lock_guard lock(mu_);
      auto it = entries_.find(ref.uri);
      if (it != entries_.end() && it->second.state == CacheState::resident) continue;
    }
    const auto before = transfers().size();
    try {
      open(ref.uri);
      auto all = transfers();
      for (std::size_t i = before; i < all.size(); ++i) {
        if (all[i].ref.uri == ref.uri) report.records.push_back(all[i]);
      }
    } catch (const Error& e) {
      report.failures[ref.uri] = e.what();
    }
  }
  return report;
}

std::vector<ExternalDataRef> DmsCache::evict_locked(std::uint64_t needed_bytes) {
  const std::uint64_t free = config_.capacity_bytes - used_;
  if (free >= needed_bytes) return {};

  std::vector<CacheEntry*> candidates;
  std::uint64_t reclaimable = 0;
  for (auto& [_, e] : entries_) {
    if (e.state == CacheState::resident && e.pin_count == 0) {
      candidates.push_back(&e);
      reclaimable += e.ref.size_bytes;
    }
  }
  if (free + reclaimable < needed_bytes) {
    throw CapacityError("cannot free " + std::to_string(needed_bytes) +
                        " bytes: only " + std::to_string(free + reclaimable) +
                        " free or evictable");
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const CacheEntry* a, const CacheEntry* b) { return a->access_seq < b->access_seq; });
  std::vector<ExternalDataRef> evicted;
  for (auto* e : candidates) {
    if (config_.capacity_bytes - used_ >= needed_bytes) break;
    e->state = CacheState::evicted;
    used_ -= e->ref.size_bytes;
    evicted.push_back(e->ref);
  }
  return evicted;
}

std::vector<ExternalDataRef> DmsCache::evict(std::uint64_t needed_bytes) {
  std::lock_guard lock(mu_);
  return evict_locked(needed_bytes);
}

void DmsCache::pin(const std::string& uri) {
  std::lock_guard lock(mu_);
  ++entry_locked(uri).pin_count;
}

void DmsCache::unpin(const std::string& uri) {
  std::lock_guard lock(mu_);
  auto& e = entry_locked(uri);
  if (e.pin_count > 0) --e.pin_count;
}

LocalHandle DmsCache::apply(const StagingAction& action) {
  switch (action.action) {
    case StagingKind::mount:
      return {action.ref.uri, "/posix/" + action.resource + "/" + action.ref.uri,
              action.ref.size_bytes};
    case StagingKind::stage_in: {
      const SimTime now = clock_.now();
      TransferRecord rec{action.ref, TransferSource::hpc_local_stagein, action.ref.size_bytes,
                         now,
                         now + static_cast<double>(action.ref.size_bytes) /
                                   config_.bandwidth_bytes_per_s,
                         action.resource};
      {
        std::lock_guard lock(mu_);
        log_.push_back(rec);
      }
      emit(rec);
      return {action.ref.uri, "/scratch/" + action.resource + "/" + action.ref.uri,
              action.ref.size_bytes};
    }
    case StagingKind::cache_fetch:
      return open(action.ref.uri);
  }
  throw std::logic_error("unhandled staging kind");
}

CacheEntry DmsCache::entry(const std::string& uri) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(uri);
  if (it != entries_.end()) return it->second;
  auto ref = catalog_.find(uri);
  if (!ref) throw NotFoundError("dataset '" + uri + "' is not registered");
  CacheEntry e;
  e.ref = *ref;
  return e;
}

std::uint64_t DmsCache::used_bytes() const {
  std::lock_guard lock(mu_);
  return used_;
}

std::vector<std::string> DmsCache::resident_uris() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [uri, e] : entries_) {
    if (e.state == CacheState::resident) out.push_back(uri);
  }
  return out;
}

std::vector<TransferRecord> DmsCache::transfers() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t DmsCache::transfer_count(TransferSource source) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(
      log_.begin(), log_.end(), [&](const TransferRecord& r) { return r.source == source; }));
}

std::string DmsCache::transfer_log_ndjson() const {
  std::string out;
  for (const auto& r : transfers()) {
    out += nlohmann::json(r).dump();
    out += '\n';
  }
  return out;
}

void DmsCache::set_transfer_listener(std::function<void(const TransferRecord&)> fn) {
  std::lock_guard lock(mu_);
  listener_ = std::move(fn);
}

std::string to_string(CacheState s) {
  switch (s) {
    case CacheState::absent: return "absent";
    case CacheState::transferring: return "transferring";
    case CacheState::resident: return "resident";
    case CacheState::evicted: return "evicted";
  }
  return "?";
}

std::string to_string(TransferSource s) {
  return s == TransferSource::remote_repo ? "remote_repo" : "hpc_local_stagein";
}

void to_json(nlohmann::json& j, const TransferRecord& r) {
  j = {{"uri", r.ref.uri},         {"source", to_string(r.source)}, {"bytes", r.bytes},
       {"started", r.started},     {"finished", r.finished}};
  if (!r.resource.empty()) j["resource"] = r.resource;
}

}  // namespace talescale
