#include "sdm/row_cache.hpp"

#include <cstring>
#include <list>
#include <stdexcept>
#include <unordered_map>

namespace sdm {

namespace {

uint32_t next_pow2(uint32_t v) {
  uint32_t p = 1;
  while (p < v) p <<= 1;
  return p;
}

}  // namespace

// Slot-array cache for rows no larger than the routing threshold. Every
// entry occupies one fixed slot; the charge model is slot size plus
// kMemOptEntryMetaBytes regardless of the actual row length. Lookup hashes
// to a bucket and probes the chain; recency is a strict LRU list across the
// whole shard.
class MemOptShard {
 public:
  MemOptShard(uint64_t capacity_bytes, uint32_t slot_bytes) : slot_bytes_(slot_bytes) {
    uint64_t charge = static_cast<uint64_t>(slot_bytes_) + kMemOptEntryMetaBytes;
    uint32_t nslots = static_cast<uint32_t>(capacity_bytes / charge);
    slots_.resize(nslots);
    payload_.resize(static_cast<size_t>(nslots) * slot_bytes_);
    buckets_.assign(next_pow2(std::max<uint32_t>(nslots, 2)), -1);
    free_.reserve(nslots);
    for (uint32_t i = 0; i < nslots; ++i) free_.push_back(static_cast<int32_t>(nslots - 1 - i));
  }

  bool get(const CacheKey& key, uint64_t hash, uint32_t epoch, std::vector<uint8_t>& out) {
    std::lock_guard<std::mutex> lock(mu_);
    int32_t idx = find(key, hash);
    if (idx < 0) {
      ++stats_.misses;
      return false;
    }
    Slot& s = slots_[static_cast<size_t>(idx)];
    if (s.epoch != epoch) {  // stale generation, reclaim lazily
      remove_slot(idx);
      ++stats_.misses;
      ++stats_.evictions;
      return false;
    }
    out.assign(payload_.begin() + static_cast<size_t>(idx) * slot_bytes_,
               payload_.begin() + static_cast<size_t>(idx) * slot_bytes_ + s.len);
    touch(idx);
    ++stats_.hits;
    return true;
  }

  bool insert(const CacheKey& key, uint64_t hash, uint32_t epoch, std::span<const uint8_t> row) {
    std::lock_guard<std::mutex> lock(mu_);
    if (row.size() > slot_bytes_ || slots_.empty()) {
      ++stats_.insert_refusals;
      return false;
    }
    int32_t idx = find(key, hash);
    if (idx < 0) {
      if (free_.empty()) {
        evict_lru();
      }
      idx = free_.back();
      free_.pop_back();
      Slot& s = slots_[static_cast<size_t>(idx)];
      s.key = key;
      s.in_use = true;
      link_bucket(idx, hash);
      lru_push_front(idx);
      ++stats_.entries;
      stats_.bytes_resident += static_cast<uint64_t>(slot_bytes_) + kMemOptEntryMetaBytes;
    } else {
      touch(idx);
    }
    Slot& s = slots_[static_cast<size_t>(idx)];
    s.epoch = epoch;
    s.len = static_cast<uint16_t>(row.size());
    std::memcpy(payload_.data() + static_cast<size_t>(idx) * slot_bytes_, row.data(), row.size());
    ++stats_.insertions;
    return true;
  }

  void erase(const CacheKey& key, uint64_t hash) {
    std::lock_guard<std::mutex> lock(mu_);
    int32_t idx = find(key, hash);
    if (idx >= 0) remove_slot(idx);
  }

  SubCacheStats stats() const {
    std::lock_guard<std::mutex> lock(mu_);
    return stats_;
  }

 private:
  struct Slot {
    CacheKey key;
    uint32_t epoch = 0;
    uint16_t len = 0;
    bool in_use = false;
    int32_t bucket_next = -1;
    int32_t lru_prev = -1;
    int32_t lru_next = -1;
  };

  size_t bucket_of(uint64_t hash) const { return (hash >> 17) & (buckets_.size() - 1); }

  int32_t find(const CacheKey& key, uint64_t hash) const {
    for (int32_t i = buckets_[bucket_of(hash)]; i >= 0; i = slots_[static_cast<size_t>(i)].bucket_next)
      if (slots_[static_cast<size_t>(i)].key == key) return i;
    return -1;
  }

  void link_bucket(int32_t idx, uint64_t hash) {
    size_t b = bucket_of(hash);
    slots_[static_cast<size_t>(idx)].bucket_next = buckets_[b];
    buckets_[b] = idx;
  }

  void unlink_bucket(int32_t idx, uint64_t hash) {
    size_t b = bucket_of(hash);
    int32_t* p = &buckets_[b];
    while (*p != idx) p = &slots_[static_cast<size_t>(*p)].bucket_next;
    *p = slots_[static_cast<size_t>(idx)].bucket_next;
    slots_[static_cast<size_t>(idx)].bucket_next = -1;
  }

  void lru_push_front(int32_t idx) {
    Slot& s = slots_[static_cast<size_t>(idx)];
    s.lru_prev = -1;
    s.lru_next = lru_head_;
    if (lru_head_ >= 0) slots_[static_cast<size_t>(lru_head_)].lru_prev = idx;
    lru_head_ = idx;
    if (lru_tail_ < 0) lru_tail_ = idx;
  }

  void lru_unlink(int32_t idx) {
    Slot& s = slots_[static_cast<size_t>(idx)];
    if (s.lru_prev >= 0)
      slots_[static_cast<size_t>(s.lru_prev)].lru_next = s.lru_next;
    else
      lru_head_ = s.lru_next;
    if (s.lru_next >= 0)
      slots_[static_cast<size_t>(s.lru_next)].lru_prev = s.lru_prev;
    else
      lru_tail_ = s.lru_prev;
    s.lru_prev = s.lru_next = -1;
  }

  void touch(int32_t idx) {
    lru_unlink(idx);
    lru_push_front(idx);
  }

  void free_slot(int32_t idx) {
    Slot& s = slots_[static_cast<size_t>(idx)];
    s.in_use = false;
    s.len = 0;
    free_.push_back(idx);
    --stats_.entries;
    stats_.bytes_resident -= static_cast<uint64_t>(slot_bytes_) + kMemOptEntryMetaBytes;
  }

  void remove_slot(int32_t idx) {
    unlink_bucket(idx, rehash(slots_[static_cast<size_t>(idx)].key));
    lru_unlink(idx);
    free_slot(idx);
  }

  uint64_t rehash(const CacheKey& key) const { return mix64(cache_key_hash(key)); }

  void evict_lru() {
    int32_t victim = lru_tail_;
    const Slot& s = slots_[static_cast<size_t>(victim)];
    unlink_bucket(victim, rehash(s.key));
    lru_unlink(victim);
    free_slot(victim);
    ++stats_.evictions;
  }

  const uint32_t slot_bytes_;
  mutable std::mutex mu_;
  std::vector<Slot> slots_;
  std::vector<uint8_t> payload_;
  std::vector<int32_t> buckets_;
  std::vector<int32_t> free_;
  int32_t lru_head_ = -1;
  int32_t lru_tail_ = -1;
  SubCacheStats stats_;
};

// Node-based cache for rows above the routing threshold: exact-fit buffers,
// hash map index, strict LRU, charge = row bytes + kCpuOptEntryMetaBytes.
class CpuOptShard {
 public:
  explicit CpuOptShard(uint64_t capacity_bytes) : capacity_(capacity_bytes) {}

  bool get(const CacheKey& key, uint32_t epoch, std::vector<uint8_t>& out) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = index_.find(key);
    if (it == index_.end()) {
      ++stats_.misses;
      return false;
    }
    if (it->second->epoch != epoch) {
      drop(it);
      ++stats_.misses;
      ++stats_.evictions;
      return false;
    }
    out = it->second->bytes;
    lru_.splice(lru_.begin(), lru_, it->second);
    ++stats_.hits;
    return true;
  }

  bool insert(const CacheKey& key, uint32_t epoch, std::span<const uint8_t> row) {
    std::lock_guard<std::mutex> lock(mu_);
    uint64_t charge = row.size() + kCpuOptEntryMetaBytes;
    if (charge > capacity_) {
      ++stats_.insert_refusals;
      return false;
    }
    auto it = index_.find(key);
    if (it != index_.end()) {
      stats_.bytes_resident -= it->second->bytes.size() + kCpuOptEntryMetaBytes;
      it->second->bytes.assign(row.begin(), row.end());
      it->second->epoch = epoch;
      stats_.bytes_resident += charge;
      lru_.splice(lru_.begin(), lru_, it->second);
      ++stats_.insertions;
      evict_to_fit();
      return true;
    }
    while (stats_.bytes_resident + charge > capacity_) {
      evict_one();
    }
    lru_.push_front(Entry{key, epoch, std::vector<uint8_t>(row.begin(), row.end())});
    index_[key] = lru_.begin();
    ++stats_.entries;
    stats_.bytes_resident += charge;
    ++stats_.insertions;
    return true;
  }

  void erase(const CacheKey& key) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = index_.find(key);
    if (it != index_.end()) drop(it);
  }

  SubCacheStats stats() const {
    std::lock_guard<std::mutex> lock(mu_);
    return stats_;
  }

 private:
  struct Entry {
    CacheKey key;
    uint32_t epoch = 0;
    std::vector<uint8_t> bytes;
  };
  struct KeyHash {
    size_t operator()(const CacheKey& k) const { return static_cast<size_t>(cache_key_hash(k)); }
  };
  using List = std::list<Entry>;
  using Index = std::unordered_map<CacheKey, List::iterator, KeyHash>;

  void drop(Index::iterator it) {
    stats_.bytes_resident -= it->second->bytes.size() + kCpuOptEntryMetaBytes;
    --stats_.entries;
    lru_.erase(it->second);
    index_.erase(it);
  }

  void evict_one() {
    auto last = std::prev(lru_.end());
    stats_.bytes_resident -= last->bytes.size() + kCpuOptEntryMetaBytes;
    --stats_.entries;
    ++stats_.evictions;
    index_.erase(last->key);
    lru_.erase(last);
  }

  void evict_to_fit() {
    while (stats_.bytes_resident > capacity_) evict_one();
  }

  const uint64_t capacity_;
  mutable std::mutex mu_;
  List lru_;
  Index index_;
  SubCacheStats stats_;
};

RowCache::RowCache(const CacheConfig& config) : config_(config) {
  if (config_.partitions == 0) throw std::invalid_argument("cache partitions must be positive");
  if (config_.dim_route_threshold_bytes == 0) throw std::invalid_argument("routing threshold must be positive");
  uint64_t mem_per = config_.mem_opt_capacity_bytes / config_.partitions;
  uint64_t cpu_per = config_.cpu_opt_capacity_bytes / config_.partitions;
  for (uint32_t i = 0; i < config_.partitions; ++i) {
    mem_shards_.push_back(std::make_unique<MemOptShard>(mem_per, config_.dim_route_threshold_bytes));
    cpu_shards_.push_back(std::make_unique<CpuOptShard>(cpu_per));
  }
}

RowCache::~RowCache() = default;

void RowCache::register_table(int32_t table_id, uint32_t stored_row_bytes) {
  if (stored_row_bytes == 0) throw std::invalid_argument("stored_row_bytes must be positive");
  std::lock_guard<std::mutex> lock(tables_mu_);
  TableState& st = tables_[table_id];
  st.row_bytes = stored_row_bytes;
}

RowCache::TableState RowCache::table_state(int32_t table_id) const {
  std::lock_guard<std::mutex> lock(tables_mu_);
  auto it = tables_.find(table_id);
  if (it == tables_.end()) throw std::invalid_argument("table not registered with row cache: " + std::to_string(table_id));
  return it->second;
}

SubCacheId RowCache::route(int32_t table_id) const {
  return route_dim(table_state(table_id).row_bytes, config_.dim_route_threshold_bytes);
}

bool RowCache::get(const CacheKey& key, std::vector<uint8_t>& out) {
  TableState st = table_state(key.table_id);
  if (!st.enabled) return false;  // bypass, no stats
  uint64_t h = cache_key_hash(key);
  size_t shard = static_cast<size_t>(h % config_.partitions);
  bool hit;
  if (route_dim(st.row_bytes, config_.dim_route_threshold_bytes) == SubCacheId::MemOpt)
    hit = mem_shards_[shard]->get(key, mix64(h), st.epoch, out);
  else
    hit = cpu_shards_[shard]->get(key, st.epoch, out);
  {
    std::lock_guard<std::mutex> lock(per_table_mu_);
    TableCacheStats& t = per_table_[key.table_id];
    hit ? ++t.hits : ++t.misses;
  }
  return hit;
}

bool RowCache::insert(const CacheKey& key, std::span<const uint8_t> row) {
  TableState st = table_state(key.table_id);
  if (!st.enabled) return false;
  if (row.size() != st.row_bytes) throw std::invalid_argument("insert size disagrees with registered row size");
  uint64_t h = cache_key_hash(key);
  size_t shard = static_cast<size_t>(h % config_.partitions);
  if (route_dim(st.row_bytes, config_.dim_route_threshold_bytes) == SubCacheId::MemOpt)
    return mem_shards_[shard]->insert(key, mix64(h), st.epoch, row);
  return cpu_shards_[shard]->insert(key, st.epoch, row);
}

void RowCache::erase(const CacheKey& key) {
  TableState st = table_state(key.table_id);
  uint64_t h = cache_key_hash(key);
  size_t shard = static_cast<size_t>(h % config_.partitions);
  if (route_dim(st.row_bytes, config_.dim_route_threshold_bytes) == SubCacheId::MemOpt)
    mem_shards_[shard]->erase(key, mix64(h));
  else
    cpu_shards_[shard]->erase(key);
}

void RowCache::set_table_enabled(int32_t table_id, bool enabled) {
  std::lock_guard<std::mutex> lock(tables_mu_);
  auto it = tables_.find(table_id);
  if (it == tables_.end()) throw std::invalid_argument("table not registered with row cache: " + std::to_string(table_id));
  if (it->second.enabled != enabled) {
    it->second.enabled = enabled;
    it->second.epoch += 1;  // entries from earlier generations become unreachable
  }
}

bool RowCache::table_enabled(int32_t table_id) const { return table_state(table_id).enabled; }

CacheStats RowCache::stats() const {
  CacheStats out;
  for (const auto& s : mem_shards_) {
    SubCacheStats st = s->stats();
    out.mem_opt.hits += st.hits;
    out.mem_opt.misses += st.misses;
    out.mem_opt.insertions += st.insertions;
    out.mem_opt.evictions += st.evictions;
    out.mem_opt.insert_refusals += st.insert_refusals;
    out.mem_opt.entries += st.entries;
    out.mem_opt.bytes_resident += st.bytes_resident;
  }
  for (const auto& s : cpu_shards_) {
    SubCacheStats st = s->stats();
    out.cpu_opt.hits += st.hits;
    out.cpu_opt.misses += st.misses;
    out.cpu_opt.insertions += st.insertions;
    out.cpu_opt.evictions += st.evictions;
    out.cpu_opt.insert_refusals += st.insert_refusals;
    out.cpu_opt.entries += st.entries;
    out.cpu_opt.bytes_resident += st.bytes_resident;
  }
  {
    std::lock_guard<std::mutex> lock(per_table_mu_);
    out.per_table = per_table_;
  }
  return out;
}

uint64_t RowCache::bytes_resident() const {
  CacheStats s = stats();
  return s.bytes_resident();
}

}  // namespace sdm
