#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "sdm/device.hpp"
#include "sdm/manifest.hpp"
#include "sdm/placement.hpp"
#include "sdm/pooled_cache.hpp"
#include "sdm/row_cache.hpp"
#include "sdm/workload.hpp"

namespace sdm {

// CPU-side costs in microseconds, approximating one serving core. These shape
// reported latencies only; output values never depend on them.
struct CostModel {
  double fm_bytes_per_us = 20000.0;  // gather bandwidth for fast-memory tables
  double fm_lookup_fixed_us = 0.05;
  double cache_probe_us = 0.15;
  double pooled_probe_us = 0.30;
  double map_probe_us = 0.02;  // pruning-map translation, per index
  double dequant_per_elem_us = 0.002;
  double accumulate_per_elem_us = 0.001;
};

struct EngineOptions {
  DeviceProfile device = DeviceProfile::optane_ssd();
  uint64_t device_capacity_bytes = 0;  // 0 = sized to the model footprint
  bool deprune = false;
  bool dequantize_at_load = false;
  bool row_cache_enabled = true;
  bool pooled_cache_enabled = true;
  bool overlapped = false;  // end-to-end composes max(user, item) instead of their sum
  CacheConfig row_cache;
  PooledConfig pooled_cache;
  CostModel costs;
  ThrottleConfig throttle;  // both fields positive to enable
};

struct LookupOutput {
  int32_t table_id = 0;
  std::vector<float> pooled;
  double latency_us = 0.0;
  uint32_t device_reads = 0;
  bool ok = true;
  std::string error;
};

struct QueryResult {
  int64_t query_id = 0;
  std::vector<LookupOutput> outputs;  // group order as given, repeats flattened
  double user_path_us = 0.0;
  double item_path_us = 0.0;
  double end_to_end_us = 0.0;
  bool ok = true;
};

// row_id addresses the stored row space of the loaded table: the original
// index space when the table was de-pruned at load, the physical space
// otherwise.
struct RowUpdate {
  int32_t table_id = 0;
  int64_t row_id = 0;
  QuantizedRow row;
};

struct UpdateReport {
  uint64_t applied = 0;
  std::vector<std::string> rejected;  // one line per bad row, none applied for it
};

struct EngineCounters {
  uint64_t queries = 0;
  uint64_t lookups = 0;
  uint64_t index_errors = 0;
  uint64_t fm_direct_lookups = 0;
  uint64_t pruned_short_circuits = 0;  // indices whose row was pruned away
  // Distinct device-backed rows per lookup; what the device would see with
  // every cache disabled.
  uint64_t sm_row_accesses = 0;
  uint64_t device_reads = 0;
  uint64_t device_bytes_requested = 0;
  std::map<int32_t, uint64_t> device_reads_per_table;
};

struct WarmupReport {
  uint64_t window_queries = 0;
  std::vector<double> window_hit_rates;  // row-cache hit rate per window
  std::vector<double> window_qps;
  double steady_hit_rate = 0.0;  // final window
  double steady_qps = 0.0;
  int64_t queries_to_90pct = -1;  // first query count where the rate holds 90% of steady
  double warmup_qps_ratio = 1.0;  // mean warmup QPS over steady QPS
};

// Serves pooled-embedding lookups for one loaded model. Timing runs on a
// virtual clock shared with the simulated device; values are produced by the
// same arithmetic on every path, so caches, placement, de-pruning and load
// options affect latency and byte movement but never results.
//
// Both execution modes evolve cache and device state identically; the mode
// only selects how the end-to-end figure composes the two paths (sum for
// sequential, max for overlapped, the latter modeling user-table IO hidden
// behind item-side compute).
class Engine {
 public:
  Engine(const ModelManifest& manifest, const PlacementPlan& plan, const EngineOptions& options,
         RowSource& rows, uint64_t seed);
  ~Engine();

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  LookupOutput lookup_pooled(int32_t table_id, std::span<const int64_t> indices);
  QueryResult execute_query(const QueryRecord& query);
  // Starts the query no earlier than at_us on the shared virtual clock.
  QueryResult execute_query_at(const QueryRecord& query, double at_us);

  UpdateReport apply_update(std::span<const RowUpdate> updates);
  WarmupReport warmup_stats(const Trace& trace, uint64_t window_queries);

  // Fast-memory bytes held by the model itself: direct tables plus retained
  // pruning maps. Cache capacity is budgeted separately.
  uint64_t fm_resident_bytes() const;
  uint64_t device_bytes_used() const { return device_bytes_used_; }
  int64_t serving_rows(int32_t table_id) const;  // index space queries draw from
  int64_t stored_rows(int32_t table_id) const;

  double now_us() const;
  const PlacementPlan& placement() const { return plan_; }
  const EngineOptions& options() const { return opts_; }
  EngineCounters counters() const;
  CacheStats row_cache_stats() const;
  PooledStats pooled_cache_stats() const;
  DeviceStats device_stats() const;
  SimDevice& device() { return *device_; }

 private:
  struct LoadedTable {
    TableMeta meta;
    Placement placement = Placement::SmCached;
    uint32_t row_bytes = 0;
    int64_t rows = 0;          // stored
    int64_t serving_rows = 0;  // original index space
    uint64_t device_offset = 0;
    std::vector<uint8_t> fm;       // FmDirect storage
    const PruningMap* map = nullptr;  // set when lookups must translate indices
  };

  void load_table(const TableMeta& t, RowSource& rows, uint64_t offset);
  LookupOutput lookup_locked(int32_t table_id, std::span<const int64_t> indices);
  void accumulate_row(std::span<const uint8_t> bytes, std::span<float> acc, double& lat) const;

  ModelManifest manifest_;
  PlacementPlan plan_;
  EngineOptions opts_;
  std::map<int32_t, LoadedTable> tables_;
  std::unique_ptr<SimDevice> device_;
  std::unique_ptr<RowCache> row_cache_;
  std::unique_ptr<PooledCache> pooled_;
  uint64_t device_bytes_used_ = 0;
  double clock_us_ = 0.0;
  EngineCounters counters_;
  mutable std::mutex mu_;  // queries, updates and loads are mutually exclusive
};

}  // namespace sdm
