#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sdm/config.hpp"
#include "sdm/device.hpp"
#include "sdm/engine.hpp"
#include "sdm/planner.hpp"
#include "sdm/workload.hpp"

namespace sdm {

// Everything a run needs, assembled from a config file plus command-line
// overrides. Paths are taken as given; validation happens when they are used.
struct RunConfig {
  // model: an explicit manifest wins; otherwise a named synthetic preset
  std::string manifest_path;
  std::string model_preset = "m1";
  int64_t preset_rows = 2048;   // rows per synthetic table
  uint64_t content_seed = 1;    // row content derivation

  // workload
  std::string trace_path;  // empty = generate
  int64_t queries = 1000;
  double zipf_s = 1.05;
  double repeat_rho = 0.0;
  uint32_t item_batch = 1;
  int64_t analyze_window = 1000;
  int32_t analyze_table = -1;  // -1 = every table in the trace

  // device
  std::string profile_name = "optane";
  uint64_t device_capacity_bytes = 0;

  // placement
  std::string policy = "sm_only";
  uint64_t fm_budget_bytes = 0;
  std::vector<int32_t> deny_list;
  std::vector<int32_t> uncached_list;

  // caches
  uint64_t mem_opt_bytes = 64ull << 20;
  uint64_t cpu_opt_bytes = 64ull << 20;
  uint32_t cache_partitions = 8;
  uint32_t route_threshold_bytes = 255;
  uint64_t pooled_bytes = 32ull << 20;
  uint32_t pooled_partitions = 8;
  uint32_t len_threshold = 1;
  bool pooled_audit = false;

  // engine
  bool deprune = false;
  bool dequantize_at_load = false;
  bool row_cache_enabled = true;
  bool pooled_cache_enabled = true;
  std::string mode = "seq";  // seq | overlap
  uint32_t throttle_per_table = 0;
  uint32_t throttle_tables = 0;

  // run
  uint64_t seed = 1;
  uint32_t streams = 4;
  uint64_t warmup_window = 0;  // 0 = no warmup tracking
  std::string out_path;

  // plan
  std::string plan_scenario;  // empty = all presets
  double warmup_r = 0.1, warmup_w = 5.0, warmup_p = 0.5, warmup_t = 30.0;

  static RunConfig from_config(const Config& cfg);
  EngineOptions engine_options() const;  // throws ConfigError on bad names
  PlacementPolicy placement_policy() const;
};

// Synthetic manifest shaped like one of the reference models, scaled to a
// desk-sized row count. Table ids are 1..N, users first.
ModelManifest preset_manifest(const std::string& name, int64_t rows_per_table);
// The run's manifest: read from disk or synthesized from the preset.
ModelManifest resolve_manifest(const RunConfig& cfg);

struct BenchReport {
  uint64_t queries = 0;
  uint64_t lookups = 0;
  uint64_t index_errors = 0;
  double wall_us = 0.0;  // virtual makespan across streams
  double qps = 0.0;
  LatencyDigest e2e, user_path, item_path;
  double row_hit_rate = 0.0;
  double pooled_hit_rate = 0.0;
  uint64_t pooled_audit_mismatches = 0;
  double offered_iops = 0.0;    // distinct device-resident row accesses / s
  double sustained_iops = 0.0;  // device reads / s
  uint64_t device_reads = 0;
  uint64_t bytes_requested = 0;
  uint64_t bytes_transferred = 0;
  double read_amplification = 0.0;
  uint64_t deferred_ios = 0;
  uint64_t fm_resident_bytes = 0;
  uint64_t device_bytes_used = 0;
  uint64_t cache_bytes_resident = 0;
  // warmup (window > 0 only)
  double steady_hit_rate = 0.0;
  int64_t queries_to_90pct = -1;
  double warmup_qps_ratio = 1.0;
  // cross-checks between engine counters and device/cache stats
  std::vector<std::string> reconciliation_failures;
  bool reconciled() const { return reconciliation_failures.empty(); }
};

BenchReport run_bench(const RunConfig& cfg);

// Deterministic CSV with a versioned header; identical runs give identical
// bytes.
std::string report_csv(const BenchReport& report);
void print_report(const BenchReport& report, std::ostream& os);

// gen-trace: synthesize a trace (and the manifest next to it when the model
// is a preset) and write it to out_path.
void run_gen_trace(const RunConfig& cfg);

// analyze: per-table temporal CDF and spatial locality of a trace.
std::string run_analyze_csv(const RunConfig& cfg);

// plan: capacity/power preset tables, optionally narrowed to one scenario.
std::string run_plan_csv(const RunConfig& cfg);

}  // namespace sdm
