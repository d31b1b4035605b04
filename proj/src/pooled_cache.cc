#include "sdm/pooled_cache.hpp"

#include <algorithm>
#include <list>
#include <stdexcept>
#include <unordered_map>

namespace sdm {

PooledKey sequence_key(int32_t table_id, std::span<const int64_t> indices) {
  uint64_t salt = mix64(0x7ab1e5a17ull ^ (static_cast<uint64_t>(static_cast<uint32_t>(table_id)) << 7));
  uint64_t sum = 0;
  for (int64_t idx : indices) sum += mix64(static_cast<uint64_t>(idx) + salt);
  PooledKey key;
  key.table_id = table_id;
  key.seq_hash = sum;
  key.seq_len = static_cast<uint32_t>(indices.size());
  return key;
}

namespace {
constexpr uint64_t kEntryMetaBytes = 48;
}

class PooledShard {
 public:
  PooledShard(uint64_t capacity_bytes, bool audit) : capacity_(capacity_bytes), audit_(audit) {}

  bool lookup(const PooledKey& key, uint32_t epoch, std::span<const int64_t> indices,
              std::vector<float>& out, uint64_t* audit_mismatches) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = index_.find(key);
    if (it == index_.end()) {
      ++stats_.misses;
      return false;
    }
    if (it->second->epoch != epoch) {
      drop(it);
      ++stats_.misses;
      return false;
    }
    if (audit_ && !indices.empty()) {
      std::vector<int64_t> sorted(indices.begin(), indices.end());
      std::sort(sorted.begin(), sorted.end());
      if (sorted != it->second->sorted_source) {
        ++stats_.audit_mismatches;
        if (audit_mismatches) ++*audit_mismatches;
      }
    }
    out = it->second->pooled;
    lru_.splice(lru_.begin(), lru_, it->second);
    ++stats_.hits;
    return true;
  }

  bool store(const PooledKey& key, uint32_t epoch, std::span<const float> pooled,
             std::span<const int64_t> source) {
    std::lock_guard<std::mutex> lock(mu_);
    uint64_t charge = pooled.size() * sizeof(float) + kEntryMetaBytes;
    if (charge > capacity_) {
      ++stats_.insert_refusals;
      return false;
    }
    auto it = index_.find(key);
    if (it != index_.end()) {
      stats_.bytes_resident -= it->second->pooled.size() * sizeof(float) + kEntryMetaBytes;
      it->second->pooled.assign(pooled.begin(), pooled.end());
      it->second->epoch = epoch;
      if (audit_) {
        it->second->sorted_source.assign(source.begin(), source.end());
        std::sort(it->second->sorted_source.begin(), it->second->sorted_source.end());
      }
      stats_.bytes_resident += charge;
      lru_.splice(lru_.begin(), lru_, it->second);
      ++stats_.insertions;
      while (stats_.bytes_resident > capacity_) evict_one();
      return true;
    }
    while (stats_.bytes_resident + charge > capacity_) evict_one();
    Entry e;
    e.key = key;
    e.epoch = epoch;
    e.pooled.assign(pooled.begin(), pooled.end());
    if (audit_) {
      e.sorted_source.assign(source.begin(), source.end());
      std::sort(e.sorted_source.begin(), e.sorted_source.end());
    }
    lru_.push_front(std::move(e));
    index_[key] = lru_.begin();
    ++stats_.entries;
    stats_.bytes_resident += charge;
    ++stats_.insertions;
    return true;
  }

  PooledStats stats() const {
    std::lock_guard<std::mutex> lock(mu_);
    return stats_;
  }

 private:
  struct Entry {
    PooledKey key;
    uint32_t epoch = 0;
    std::vector<float> pooled;
    std::vector<int64_t> sorted_source;  // audit mode only
  };
  struct KeyHash {
    size_t operator()(const PooledKey& k) const {
      return static_cast<size_t>(hash_combine(k.seq_hash, (static_cast<uint64_t>(static_cast<uint32_t>(k.table_id)) << 32) | k.seq_len));
    }
  };
  using List = std::list<Entry>;
  using Index = std::unordered_map<PooledKey, List::iterator, KeyHash>;

  void drop(Index::iterator it) {
    stats_.bytes_resident -= it->second->pooled.size() * sizeof(float) + kEntryMetaBytes;
    --stats_.entries;
    lru_.erase(it->second);
    index_.erase(it);
  }

  void evict_one() {
    auto last = std::prev(lru_.end());
    stats_.bytes_resident -= last->pooled.size() * sizeof(float) + kEntryMetaBytes;
    --stats_.entries;
    ++stats_.evictions;
    index_.erase(last->key);
    lru_.erase(last);
  }

  const uint64_t capacity_;
  const bool audit_;
  mutable std::mutex mu_;
  List lru_;
  Index index_;
  PooledStats stats_;
};

PooledCache::PooledCache(const PooledConfig& config) : config_(config) {
  if (config_.partitions == 0) throw std::invalid_argument("pooled cache partitions must be positive");
  uint64_t per = config_.capacity_bytes / config_.partitions;
  for (uint32_t i = 0; i < config_.partitions; ++i)
    shards_.push_back(std::make_unique<PooledShard>(per, config_.audit));
}

PooledCache::~PooledCache() = default;

uint32_t PooledCache::table_epoch(int32_t table_id) const {
  std::lock_guard<std::mutex> lock(epochs_mu_);
  auto it = epochs_.find(table_id);
  return it == epochs_.end() ? 0 : it->second;
}

bool PooledCache::lookup(const PooledKey& key, std::vector<float>& out) {
  return lookup_audited(key, {}, out);
}

bool PooledCache::lookup_audited(const PooledKey& key, std::span<const int64_t> indices,
                                 std::vector<float>& out) {
  size_t shard = static_cast<size_t>(mix64(key.seq_hash) % config_.partitions);
  return shards_[shard]->lookup(key, table_epoch(key.table_id), indices, out, nullptr);
}

bool PooledCache::store(const PooledKey& key, std::span<const float> pooled,
                        std::span<const int64_t> source_indices) {
  if (key.seq_len != source_indices.size())
    throw std::invalid_argument("pooled store: key length disagrees with source sequence");
  if (key.seq_len <= config_.len_threshold) {
    // Short sequences are cheaper to recompute than to cache.
    std::lock_guard<std::mutex> lock(epochs_mu_);
    ++refused_below_threshold_;
    return false;
  }
  size_t shard = static_cast<size_t>(mix64(key.seq_hash) % config_.partitions);
  return shards_[shard]->store(key, table_epoch(key.table_id), pooled, source_indices);
}

void PooledCache::invalidate_table(int32_t table_id) {
  std::lock_guard<std::mutex> lock(epochs_mu_);
  epochs_[table_id] += 1;
  invalidations_ += 1;
}

PooledStats PooledCache::stats() const {
  PooledStats out;
  for (const auto& s : shards_) {
    PooledStats st = s->stats();
    out.hits += st.hits;
    out.misses += st.misses;
    out.insertions += st.insertions;
    out.evictions += st.evictions;
    out.insert_refusals += st.insert_refusals;
    out.audit_mismatches += st.audit_mismatches;
    out.entries += st.entries;
    out.bytes_resident += st.bytes_resident;
  }
  {
    std::lock_guard<std::mutex> lock(epochs_mu_);
    out.invalidations = invalidations_;
    out.refused_below_threshold = refused_below_threshold_;
  }
  return out;
}

}  // namespace sdm
