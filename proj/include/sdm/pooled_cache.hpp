#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "sdm/hashing.hpp"

namespace sdm {

// Identity of an index sequence as a multiset: per-index avalanche hashes
// salted by table, combined with modular addition so order never matters,
// paired with the sequence length. [1, 2] and [2, 1] share a key; [1, 2] and
// [1, 2, 2] do not.
struct PooledKey {
  int32_t table_id = 0;
  uint64_t seq_hash = 0;
  uint32_t seq_len = 0;
  bool operator==(const PooledKey&) const = default;
};

PooledKey sequence_key(int32_t table_id, std::span<const int64_t> indices);

struct PooledConfig {
  uint64_t capacity_bytes = 0;
  uint32_t len_threshold = 1;  // store only sequences strictly longer than this
  uint32_t partitions = 8;
  bool audit = false;  // keep sorted source sequences and verify them on hits
};

struct PooledStats {
  uint64_t hits = 0, misses = 0;
  uint64_t insertions = 0, evictions = 0;
  uint64_t refused_below_threshold = 0, insert_refusals = 0;
  uint64_t invalidations = 0;
  uint64_t audit_mismatches = 0;
  uint64_t entries = 0;
  uint64_t bytes_resident = 0;
  double hit_rate() const {
    uint64_t n = hits + misses;
    return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
  }
};

class PooledShard;

// LRU cache of pooled output vectors keyed by sequence identity. Entries for
// a table are dropped wholesale when its rows change, via a per-table epoch.
class PooledCache {
 public:
  explicit PooledCache(const PooledConfig& config);
  ~PooledCache();

  PooledCache(const PooledCache&) = delete;
  PooledCache& operator=(const PooledCache&) = delete;

  bool lookup(const PooledKey& key, std::vector<float>& out);
  // In audit mode, also verifies the entry's sorted source sequence.
  bool lookup_audited(const PooledKey& key, std::span<const int64_t> indices, std::vector<float>& out);

  // Refuses sequences whose length is at or below the threshold.
  bool store(const PooledKey& key, std::span<const float> pooled, std::span<const int64_t> source_indices);

  void invalidate_table(int32_t table_id);

  PooledStats stats() const;
  const PooledConfig& config() const { return config_; }

 private:
  uint32_t table_epoch(int32_t table_id) const;

  PooledConfig config_;
  std::vector<std::unique_ptr<PooledShard>> shards_;
  mutable std::mutex epochs_mu_;
  std::map<int32_t, uint32_t> epochs_;
  uint64_t invalidations_ = 0;
  uint64_t refused_below_threshold_ = 0;
};

}  // namespace sdm
