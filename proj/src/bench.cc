#include "sdm/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "sdm/log.hpp"
#include "sdm/placement.hpp"

namespace sdm {
namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void emit_digest(std::ostringstream& os, const std::string& prefix, const LatencyDigest& d) {
  os << prefix << "_mean_us," << fmt(d.mean) << "\n";
  os << prefix << "_p50_us," << fmt(d.p50) << "\n";
  os << prefix << "_p95_us," << fmt(d.p95) << "\n";
  os << prefix << "_p99_us," << fmt(d.p99) << "\n";
  os << prefix << "_max_us," << fmt(d.max) << "\n";
}

}  // namespace

RunConfig RunConfig::from_config(const Config& cfg) {
  RunConfig rc;
  rc.manifest_path = cfg.get_string("model.manifest", rc.manifest_path);
  rc.model_preset = cfg.get_string("model.preset", rc.model_preset);
  rc.preset_rows = cfg.get_int("model.rows", rc.preset_rows);
  rc.content_seed = cfg.get_uint("model.content_seed", rc.content_seed);

  rc.trace_path = cfg.get_string("workload.trace", rc.trace_path);
  rc.queries = cfg.get_int("workload.queries", rc.queries);
  rc.zipf_s = cfg.get_double("workload.zipf_s", rc.zipf_s);
  rc.repeat_rho = cfg.get_double("workload.repeat_rho", rc.repeat_rho);
  rc.item_batch = static_cast<uint32_t>(cfg.get_uint("workload.item_batch", rc.item_batch));
  rc.analyze_window = cfg.get_int("workload.window", rc.analyze_window);
  rc.analyze_table = static_cast<int32_t>(cfg.get_int("workload.table", rc.analyze_table));

  rc.profile_name = cfg.get_string("device.profile", rc.profile_name);
  rc.device_capacity_bytes = cfg.get_uint("device.capacity_bytes", rc.device_capacity_bytes);

  rc.policy = cfg.get_string("placement.policy", rc.policy);
  rc.fm_budget_bytes = cfg.get_uint("placement.fm_budget_bytes", rc.fm_budget_bytes);
  rc.deny_list = cfg.get_int_list("placement.deny");
  rc.uncached_list = cfg.get_int_list("placement.uncached");

  rc.mem_opt_bytes = cfg.get_uint("cache.mem_opt_bytes", rc.mem_opt_bytes);
  rc.cpu_opt_bytes = cfg.get_uint("cache.cpu_opt_bytes", rc.cpu_opt_bytes);
  rc.cache_partitions = static_cast<uint32_t>(cfg.get_uint("cache.partitions", rc.cache_partitions));
  rc.route_threshold_bytes =
      static_cast<uint32_t>(cfg.get_uint("cache.route_threshold_bytes", rc.route_threshold_bytes));
  rc.pooled_bytes = cfg.get_uint("cache.pooled_bytes", rc.pooled_bytes);
  rc.pooled_partitions =
      static_cast<uint32_t>(cfg.get_uint("cache.pooled_partitions", rc.pooled_partitions));
  rc.len_threshold = static_cast<uint32_t>(cfg.get_uint("cache.len_threshold", rc.len_threshold));
  rc.pooled_audit = cfg.get_bool("cache.audit", rc.pooled_audit);

  rc.deprune = cfg.get_bool("engine.deprune", rc.deprune);
  rc.dequantize_at_load = cfg.get_bool("engine.dequantize_at_load", rc.dequantize_at_load);
  rc.row_cache_enabled = cfg.get_bool("engine.row_cache", rc.row_cache_enabled);
  rc.pooled_cache_enabled = cfg.get_bool("engine.pooled_cache", rc.pooled_cache_enabled);
  rc.mode = cfg.get_string("engine.mode", rc.mode);
  rc.throttle_per_table =
      static_cast<uint32_t>(cfg.get_uint("engine.throttle_per_table", rc.throttle_per_table));
  rc.throttle_tables =
      static_cast<uint32_t>(cfg.get_uint("engine.throttle_tables", rc.throttle_tables));

  rc.seed = cfg.get_uint("bench.seed", rc.seed);
  rc.streams = static_cast<uint32_t>(cfg.get_uint("bench.streams", rc.streams));
  rc.warmup_window = cfg.get_uint("bench.warmup_window", rc.warmup_window);
  rc.out_path = cfg.get_string("bench.out", rc.out_path);

  rc.plan_scenario = cfg.get_string("plan.scenario", rc.plan_scenario);
  rc.warmup_r = cfg.get_double("plan.warmup_r", rc.warmup_r);
  rc.warmup_w = cfg.get_double("plan.warmup_w", rc.warmup_w);
  rc.warmup_p = cfg.get_double("plan.warmup_p", rc.warmup_p);
  rc.warmup_t = cfg.get_double("plan.warmup_t", rc.warmup_t);

  if (rc.queries <= 0) throw ConfigError("workload.queries must be positive");
  if (rc.streams == 0) throw ConfigError("bench.streams must be positive");
  if (rc.mode != "seq" && rc.mode != "overlap") {
    throw ConfigError("engine.mode must be 'seq' or 'overlap', got '" + rc.mode + "'");
  }
  return rc;
}

EngineOptions RunConfig::engine_options() const {
  EngineOptions o;
  try {
    o.device = DeviceProfile::by_name(profile_name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  o.device_capacity_bytes = device_capacity_bytes;
  o.deprune = deprune;
  o.dequantize_at_load = dequantize_at_load;
  o.row_cache_enabled = row_cache_enabled;
  o.pooled_cache_enabled = pooled_cache_enabled;
  o.overlapped = mode == "overlap";
  o.row_cache.mem_opt_capacity_bytes = mem_opt_bytes;
  o.row_cache.cpu_opt_capacity_bytes = cpu_opt_bytes;
  o.row_cache.partitions = cache_partitions;
  o.row_cache.dim_route_threshold_bytes = route_threshold_bytes;
  o.pooled_cache.capacity_bytes = pooled_bytes;
  o.pooled_cache.partitions = pooled_partitions;
  o.pooled_cache.len_threshold = len_threshold;
  o.pooled_cache.audit = pooled_audit;
  o.throttle.max_outstanding_per_table = throttle_per_table;
  o.throttle.max_tables_in_flight = throttle_tables;
  return o;
}

PlacementPolicy RunConfig::placement_policy() const {
  PlacementPolicy p;
  try {
    p = PlacementPolicy::named(policy, fm_budget_bytes);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  p.deny_list = deny_list;
  p.low_temporal_locality = uncached_list;
  return p;
}

ModelManifest preset_manifest(const std::string& name, int64_t rows_per_table) {
  if (rows_per_table <= 0) throw ConfigError("model.rows must be positive");
  struct Group {
    int32_t count;
    int32_t elem_count;
    double pooling;
    TableRole role;
  };
  std::vector<Group> groups;
  if (name == "m1") {
    groups = {{61, 43, 42.0, TableRole::User}, {30, 61, 9.0, TableRole::Item}};
  } else if (name == "m2") {
    groups = {{450, 56, 25.0, TableRole::User}, {280, 30, 14.0, TableRole::Item}};
  } else if (name == "m3") {
    groups = {{1800, 184, 26.0, TableRole::User}, {900, 184, 26.0, TableRole::Item}};
  } else if (name == "tiny") {
    groups = {{3, 56, 8.0, TableRole::User}, {2, 120, 4.0, TableRole::Item}};
  } else {
    throw ConfigError("unknown model preset: " + name);
  }
  ModelManifest m;
  int32_t next_id = 1;
  for (const auto& g : groups) {
    for (int32_t i = 0; i < g.count; ++i) {
      TableMeta t;
      t.table_id = next_id++;
      t.num_rows = rows_per_table;
      t.elem_count = g.elem_count;
      t.role = g.role;
      t.avg_pooling_factor = g.pooling;
      m.tables.push_back(t);
    }
  }
  m.validate();
  return m;
}

ModelManifest resolve_manifest(const RunConfig& cfg) {
  if (!cfg.manifest_path.empty()) return read_manifest(cfg.manifest_path);
  return preset_manifest(cfg.model_preset, cfg.preset_rows);
}

BenchReport run_bench(const RunConfig& cfg) {
  ModelManifest manifest = resolve_manifest(cfg);
  auto source = synthetic_source(cfg.content_seed, manifest);
  PlacementPlan plan =
      plan_placement(manifest, cfg.placement_policy(), cfg.deprune, cfg.dequantize_at_load);
  Engine engine(manifest, plan, cfg.engine_options(), *source, cfg.seed);

  Trace trace;
  if (!cfg.trace_path.empty()) {
    trace = read_trace(cfg.trace_path);
  } else {
    WorkloadSpec spec;
    spec.seed = cfg.seed;
    spec.num_queries = cfg.queries;
    spec.zipf_s = cfg.zipf_s;
    spec.repeat_rho = cfg.repeat_rho;
    spec.item_batch = cfg.item_batch;
    trace = generate_trace(manifest, spec);
  }

  // N closed-loop streams pulling from one shared queue: the next query goes
  // to whichever stream is free earliest on the virtual clock.
  std::vector<double> stream_clock(cfg.streams, 0.0);
  std::vector<double> e2e, user_lat, item_lat;
  e2e.reserve(trace.queries.size());
  user_lat.reserve(trace.queries.size());
  item_lat.reserve(trace.queries.size());

  // Warmup observation points: cumulative row-cache counters per window.
  std::vector<double> win_rate, win_qps;
  uint64_t h0 = 0, m0 = 0;
  double w0 = 0.0;
  uint64_t in_window = 0;

  for (const auto& q : trace.queries) {
    size_t s = 0;
    for (size_t i = 1; i < stream_clock.size(); ++i) {
      if (stream_clock[i] < stream_clock[s]) s = i;
    }
    QueryResult res = engine.execute_query_at(q, stream_clock[s]);
    stream_clock[s] += res.end_to_end_us;
    e2e.push_back(res.end_to_end_us);
    user_lat.push_back(res.user_path_us);
    item_lat.push_back(res.item_path_us);

    if (cfg.warmup_window > 0 && ++in_window == cfg.warmup_window) {
      CacheStats rc = engine.row_cache_stats();
      double w1 = *std::max_element(stream_clock.begin(), stream_clock.end());
      uint64_t dh = rc.hits() - h0;
      uint64_t dm = rc.misses() - m0;
      win_rate.push_back(dh + dm ? static_cast<double>(dh) / (dh + dm) : 1.0);
      win_qps.push_back(w1 > w0 ? 1e6 * static_cast<double>(cfg.warmup_window) / (w1 - w0) : 0.0);
      h0 = rc.hits();
      m0 = rc.misses();
      w0 = w1;
      in_window = 0;
    }
  }

  BenchReport rep;
  EngineCounters c = engine.counters();
  CacheStats rc = engine.row_cache_stats();
  PooledStats ps = engine.pooled_cache_stats();
  DeviceStats ds = engine.device_stats();

  rep.queries = c.queries;
  rep.lookups = c.lookups;
  rep.index_errors = c.index_errors;
  rep.wall_us = *std::max_element(stream_clock.begin(), stream_clock.end());
  rep.qps = rep.wall_us > 0.0 ? 1e6 * static_cast<double>(rep.queries) / rep.wall_us : 0.0;
  rep.e2e = digest_of(std::move(e2e));
  rep.user_path = digest_of(std::move(user_lat));
  rep.item_path = digest_of(std::move(item_lat));
  rep.row_hit_rate = rc.hit_rate();
  rep.pooled_hit_rate = ps.hit_rate();
  rep.pooled_audit_mismatches = ps.audit_mismatches;
  rep.offered_iops =
      rep.wall_us > 0.0 ? 1e6 * static_cast<double>(c.sm_row_accesses) / rep.wall_us : 0.0;
  rep.sustained_iops = rep.wall_us > 0.0 ? 1e6 * static_cast<double>(ds.reads) / rep.wall_us : 0.0;
  rep.device_reads = ds.reads;
  rep.bytes_requested = ds.bytes_requested;
  rep.bytes_transferred = ds.bytes_transferred;
  rep.read_amplification = ds.read_amplification();
  rep.deferred_ios = ds.rejected_for_queue_full;
  rep.fm_resident_bytes = engine.fm_resident_bytes();
  rep.device_bytes_used = engine.device_bytes_used();
  rep.cache_bytes_resident = rc.bytes_resident() + ps.bytes_resident;

  if (!win_rate.empty()) {
    rep.steady_hit_rate = win_rate.back();
    double steady_qps = win_qps.back();
    size_t first_warm = win_rate.size();
    for (size_t w = 0; w < win_rate.size(); ++w) {
      if (win_rate[w] >= 0.9 * rep.steady_hit_rate) {
        first_warm = w;
        break;
      }
    }
    if (first_warm < win_rate.size()) {
      rep.queries_to_90pct = static_cast<int64_t>((first_warm + 1) * cfg.warmup_window);
    }
    if (first_warm > 0 && steady_qps > 0.0) {
      double warm = 0.0;
      for (size_t w = 0; w < first_warm; ++w) warm += win_qps[w];
      rep.warmup_qps_ratio = warm / static_cast<double>(first_warm) / steady_qps;
    }
  }

  auto check = [&rep](bool ok, const std::string& msg) {
    if (!ok) rep.reconciliation_failures.push_back(msg);
  };
  check(c.device_reads == ds.reads, "engine device_reads " + std::to_string(c.device_reads) +
                                        " != device reads " + std::to_string(ds.reads));
  check(c.device_bytes_requested == ds.bytes_requested,
        "engine requested bytes " + std::to_string(c.device_bytes_requested) +
            " != device requested bytes " + std::to_string(ds.bytes_requested));
  check(rc.lookups() <= c.sm_row_accesses,
        "row-cache probes " + std::to_string(rc.lookups()) + " exceed device-row accesses " +
            std::to_string(c.sm_row_accesses));
  uint64_t bypass = c.sm_row_accesses - std::min(c.sm_row_accesses, rc.lookups());
  check(ds.reads == rc.misses() + bypass,
        "device reads " + std::to_string(ds.reads) + " != cache misses " +
            std::to_string(rc.misses()) + " + uncached accesses " + std::to_string(bypass));
  check(rep.queries == trace.queries.size(),
        "executed " + std::to_string(rep.queries) + " of " +
            std::to_string(trace.queries.size()) + " queries");
  for (const auto& f : rep.reconciliation_failures) {
    SDM_LOG_INFO("reconciliation: " << f);
  }

  if (!cfg.out_path.empty()) {
    std::ofstream out(cfg.out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + cfg.out_path);
    out << report_csv(rep);
  }
  return rep;
}

std::string report_csv(const BenchReport& r) {
  std::ostringstream os;
  os << "# sdm-embstore report v1\n";
  os << "metric,value\n";
  os << "queries," << r.queries << "\n";
  os << "lookups," << r.lookups << "\n";
  os << "index_errors," << r.index_errors << "\n";
  os << "wall_us," << fmt(r.wall_us) << "\n";
  os << "qps," << fmt(r.qps) << "\n";
  emit_digest(os, "e2e", r.e2e);
  emit_digest(os, "user_path", r.user_path);
  emit_digest(os, "item_path", r.item_path);
  os << "row_hit_rate," << fmt(r.row_hit_rate) << "\n";
  os << "pooled_hit_rate," << fmt(r.pooled_hit_rate) << "\n";
  os << "pooled_audit_mismatches," << r.pooled_audit_mismatches << "\n";
  os << "offered_iops," << fmt(r.offered_iops) << "\n";
  os << "sustained_iops," << fmt(r.sustained_iops) << "\n";
  os << "device_reads," << r.device_reads << "\n";
  os << "bytes_requested," << r.bytes_requested << "\n";
  os << "bytes_transferred," << r.bytes_transferred << "\n";
  os << "read_amplification," << fmt(r.read_amplification) << "\n";
  os << "deferred_ios," << r.deferred_ios << "\n";
  os << "fm_resident_bytes," << r.fm_resident_bytes << "\n";
  os << "device_bytes_used," << r.device_bytes_used << "\n";
  os << "cache_bytes_resident," << r.cache_bytes_resident << "\n";
  os << "steady_hit_rate," << fmt(r.steady_hit_rate) << "\n";
  os << "queries_to_90pct," << r.queries_to_90pct << "\n";
  os << "warmup_qps_ratio," << fmt(r.warmup_qps_ratio) << "\n";
  os << "reconciliation_failures," << r.reconciliation_failures.size() << "\n";
  return os.str();
}

void print_report(const BenchReport& r, std::ostream& os) {
  os << "queries          " << r.queries << " (" << r.lookups << " lookups, " << r.index_errors
     << " errors)\n";
  os << "virtual wall     " << fmt(r.wall_us / 1000.0) << " ms -> " << fmt(r.qps) << " qps\n";
  os << "e2e latency us   p50 " << fmt(r.e2e.p50) << "  p95 " << fmt(r.e2e.p95) << "  p99 "
     << fmt(r.e2e.p99) << "\n";
  os << "user path us     p50 " << fmt(r.user_path.p50) << "  p95 " << fmt(r.user_path.p95)
     << "  p99 " << fmt(r.user_path.p99) << "\n";
  os << "item path us     p50 " << fmt(r.item_path.p50) << "  p95 " << fmt(r.item_path.p95)
     << "  p99 " << fmt(r.item_path.p99) << "\n";
  os << "row cache        hit rate " << fmt(r.row_hit_rate) << "\n";
  os << "pooled cache     hit rate " << fmt(r.pooled_hit_rate) << "\n";
  os << "device iops      offered " << fmt(r.offered_iops) << "  sustained "
     << fmt(r.sustained_iops) << "\n";
  os << "device bytes     requested " << r.bytes_requested << "  transferred "
     << r.bytes_transferred << "  amplification " << fmt(r.read_amplification) << "\n";
  os << "deferred ios     " << r.deferred_ios << "\n";
  os << "resident bytes   fm " << r.fm_resident_bytes << "  device " << r.device_bytes_used
     << "  caches " << r.cache_bytes_resident << "\n";
  if (r.queries_to_90pct >= 0) {
    os << "warmup           steady hit " << fmt(r.steady_hit_rate) << "  queries to 90% "
       << r.queries_to_90pct << "  qps ratio " << fmt(r.warmup_qps_ratio) << "\n";
  }
  if (!r.reconciled()) {
    os << "RECONCILIATION FAILURES:\n";
    for (const auto& f : r.reconciliation_failures) os << "  " << f << "\n";
  }
}

void run_gen_trace(const RunConfig& cfg) {
  if (cfg.out_path.empty()) throw ConfigError("gen-trace needs an output path (bench.out or --out)");
  ModelManifest manifest = resolve_manifest(cfg);
  WorkloadSpec spec;
  spec.seed = cfg.seed;
  spec.num_queries = cfg.queries;
  spec.zipf_s = cfg.zipf_s;
  spec.repeat_rho = cfg.repeat_rho;
  spec.item_batch = cfg.item_batch;
  Trace trace = generate_trace(manifest, spec);
  write_trace(trace, cfg.out_path);
  if (cfg.manifest_path.empty()) {
    // Synthetic model: keep the manifest next to the trace so analysis runs
    // do not depend on re-deriving it.
    write_manifest(manifest, cfg.out_path + ".manifest");
  }
}

std::string run_analyze_csv(const RunConfig& cfg) {
  if (cfg.trace_path.empty()) throw ConfigError("analyze needs workload.trace");
  // Prefer the sidecar gen-trace leaves next to the trace; an explicit
  // model.manifest still wins.
  RunConfig resolved = cfg;
  if (resolved.manifest_path.empty()) {
    std::string sidecar = cfg.trace_path + ".manifest";
    if (std::ifstream(sidecar).good()) resolved.manifest_path = sidecar;
  }
  ModelManifest manifest = resolve_manifest(resolved);
  Trace trace = read_trace(cfg.trace_path);
  std::ostringstream os;
  os << "# sdm-embstore report v1\n";
  os << "kind,table,x,value\n";
  for (int32_t id : trace.table_ids) {
    if (cfg.analyze_table >= 0 && id != cfg.analyze_table) continue;
    const TableMeta* t = manifest.find(id);
    if (t == nullptr) throw std::runtime_error("trace references unknown table " + std::to_string(id));
    std::vector<double> cdf = temporal_cdf(trace, id, logical_rows(manifest, *t));
    // Cap the emitted curve; plots do not need every rank of a large table.
    size_t points = std::min<size_t>(cdf.size(), 256);
    for (size_t k = 0; k < points; ++k) {
      size_t i = points <= 1 ? cdf.size() - 1 : k * (cdf.size() - 1) / (points - 1);
      os << "temporal," << id << "," << (i + 1) << "," << fmt(cdf[i]) << "\n";
    }
    std::vector<double> spatial = spatial_locality(trace, id, t->dim_bytes(), cfg.analyze_window);
    for (size_t w = 0; w < spatial.size(); ++w) {
      os << "spatial," << id << "," << w << "," << fmt(spatial[w]) << "\n";
    }
  }
  return os.str();
}

std::string run_plan_csv(const RunConfig& cfg) {
  const std::string& which = cfg.plan_scenario;
  auto want = [&which](const std::string& name) { return which.empty() || which == name; };
  std::ostringstream os;
  os << "# sdm-embstore report v1\n";
  bool matched = false;
  for (const std::string scen : {"t6", "t7", "t9"}) {
    if (!want(scen)) continue;
    matched = true;
    for (const FleetRow& row : fleet_power(fleet_preset(scen))) {
      os << "fleet," << scen << "," << row.name << "," << row.hosts << "," << row.aux_hosts << ","
         << fmt(row.power) << "," << fmt(row.fleet_power) << "," << fmt(row.savings_pct) << "\n";
    }
  }
  if (want("iops")) {
    matched = true;
    for (const std::string name : {"m1", "m2", "m3"}) {
      IopsCase c = iops_preset(name);
      IopsReport r = iops_required(c.model, c.qps, c.hit_rate);
      os << "iops," << name << "," << fmt(r.offered_iops) << "," << fmt(r.sustained_iops) << ","
         << ssds_needed(r.sustained_iops, DeviceProfile::nand_flash()) << ","
         << ssds_needed(r.sustained_iops, DeviceProfile::optane_ssd()) << "\n";
    }
  }
  if (want("endurance")) {
    matched = true;
    os << "endurance,m1," << fmt(update_interval(143.0, 4000.0, 5.0)) << "\n";
  }
  if (want("warmup")) {
    matched = true;
    os << "warmup," << fmt(cfg.warmup_r) << "," << fmt(cfg.warmup_w) << "," << fmt(cfg.warmup_p)
       << "," << fmt(cfg.warmup_t) << ","
       << fmt(warmup_overprovision(cfg.warmup_r, cfg.warmup_w, cfg.warmup_p, cfg.warmup_t)) << "\n";
  }
  if (want("latency")) {
    matched = true;
    ModelSpec m2 = model_preset("m2");
    HwSpec hw = hw_preset("m2-host");
    LatencyBudget b = latency_budget(m2, hw);
    double optane = useful_slow_bw(DeviceProfile::optane_ssd(), 64.0);
    double nand = useful_slow_bw(DeviceProfile::nand_flash(), 64.0);
    os << "latency_budget,m2," << fmt(b.slow_mem_bw_needed) << ",optane,"
       << (optane >= b.slow_mem_bw_needed ? "ok" : "exposed") << ",nand,"
       << (nand >= b.slow_mem_bw_needed ? "ok" : "exposed") << "\n";
  }
  if (!matched) throw ConfigError("unknown plan scenario: " + which);
  return os.str();
}

}  // namespace sdm
