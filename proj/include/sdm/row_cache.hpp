#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "sdm/hashing.hpp"

namespace sdm {

struct CacheKey {
  int32_t table_id = 0;
  int64_t row_id = 0;  // physical (post-pruning) row index
  bool operator==(const CacheKey&) const = default;
};

inline uint64_t cache_key_hash(const CacheKey& k) {
  return hash_combine(mix64(static_cast<uint64_t>(static_cast<uint32_t>(k.table_id))),
                      static_cast<uint64_t>(k.row_id));
}

// Two resident structures behind one interface. Short rows go to a
// slot-array cache that spends almost nothing on per-entry metadata but pads
// every row to the routing threshold; long rows go to a node-based cache with
// exact-fit allocations and heavier bookkeeping. Routing depends only on the
// table's stored row size against the threshold.
inline constexpr uint32_t kMemOptEntryMetaBytes = 8;
inline constexpr uint32_t kCpuOptEntryMetaBytes = 48;

enum class SubCacheId : uint8_t { MemOpt, CpuOpt };

struct CacheConfig {
  uint64_t mem_opt_capacity_bytes = 0;
  uint64_t cpu_opt_capacity_bytes = 0;
  uint32_t partitions = 8;
  uint32_t dim_route_threshold_bytes = 255;  // rows at most this size use the slot cache
};

struct SubCacheStats {
  uint64_t hits = 0, misses = 0;
  uint64_t insertions = 0, evictions = 0, insert_refusals = 0;
  uint64_t entries = 0;
  uint64_t bytes_resident = 0;  // charged bytes: payload-or-slot plus metadata
};

struct TableCacheStats {
  uint64_t hits = 0, misses = 0;
  double hit_rate() const {
    uint64_t n = hits + misses;
    return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
  }
};

struct CacheStats {
  SubCacheStats mem_opt, cpu_opt;
  std::map<int32_t, TableCacheStats> per_table;
  uint64_t hits() const { return mem_opt.hits + cpu_opt.hits; }
  uint64_t misses() const { return mem_opt.misses + cpu_opt.misses; }
  uint64_t lookups() const { return hits() + misses(); }
  uint64_t bytes_resident() const { return mem_opt.bytes_resident + cpu_opt.bytes_resident; }
  double hit_rate() const {
    return lookups() ? static_cast<double>(hits()) / static_cast<double>(lookups()) : 0.0;
  }
};

class MemOptShard;
class CpuOptShard;

// Partitioned by key hash; eviction is strict LRU within each partition.
// Disabling a table makes its resident entries unreachable immediately and
// reclaims them lazily; re-enabling starts cold via a per-table epoch.
class RowCache {
 public:
  explicit RowCache(const CacheConfig& config);
  ~RowCache();

  RowCache(const RowCache&) = delete;
  RowCache& operator=(const RowCache&) = delete;

  // Tables must be registered before use; the stored row size fixes routing.
  void register_table(int32_t table_id, uint32_t stored_row_bytes);
  SubCacheId route(int32_t table_id) const;
  static SubCacheId route_dim(uint32_t stored_row_bytes, uint32_t threshold) {
    return stored_row_bytes <= threshold ? SubCacheId::MemOpt : SubCacheId::CpuOpt;
  }

  // False means miss. A hit copies the row bytes and refreshes recency.
  bool get(const CacheKey& key, std::vector<uint8_t>& out);
  // False means refused (disabled table, zero capacity, oversized row).
  bool insert(const CacheKey& key, std::span<const uint8_t> row);
  void erase(const CacheKey& key);

  void set_table_enabled(int32_t table_id, bool enabled);
  bool table_enabled(int32_t table_id) const;

  CacheStats stats() const;
  uint64_t bytes_resident() const;
  const CacheConfig& config() const { return config_; }

 private:
  struct TableState {
    uint32_t row_bytes = 0;
    bool enabled = true;
    uint32_t epoch = 0;
  };

  TableState table_state(int32_t table_id) const;

  CacheConfig config_;
  std::vector<std::unique_ptr<MemOptShard>> mem_shards_;
  std::vector<std::unique_ptr<CpuOptShard>> cpu_shards_;
  mutable std::mutex tables_mu_;
  std::map<int32_t, TableState> tables_;
  mutable std::mutex per_table_mu_;
  std::map<int32_t, TableCacheStats> per_table_;
};

}  // namespace sdm
