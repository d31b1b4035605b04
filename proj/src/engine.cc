#include "sdm/engine.hpp"

#include <algorithm>
#include <cstring>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "sdm/hashing.hpp"
#include "sdm/log.hpp"
#include "sdm/rng.hpp"

namespace sdm {
namespace {

uint64_t table_stored_bytes(const ModelManifest& m, const TableMeta& t, bool deprune,
                            bool dequant) {
  return stored_table_bytes(m, t, deprune, dequant);
}

}  // namespace

Engine::Engine(const ModelManifest& manifest, const PlacementPlan& plan,
               const EngineOptions& options, RowSource& rows, uint64_t seed)
    : manifest_(manifest), plan_(plan), opts_(options) {
  manifest_.validate();
  uint64_t sm_needed = 0;
  for (const auto& t : manifest_.tables) {
    auto it = plan_.assignment.find(t.table_id);
    if (it == plan_.assignment.end()) {
      throw std::invalid_argument("placement plan is missing table " + std::to_string(t.table_id));
    }
    if (it->second != Placement::FmDirect) {
      sm_needed += table_stored_bytes(manifest_, t, opts_.deprune, opts_.dequantize_at_load);
    }
  }
  if (opts_.device_capacity_bytes != 0 && sm_needed > opts_.device_capacity_bytes) {
    std::ostringstream os;
    os << "load refused: device-backed tables need " << sm_needed << " bytes, device holds "
       << opts_.device_capacity_bytes << "\n";
    for (const auto& t : manifest_.tables) {
      if (plan_.assignment.at(t.table_id) == Placement::FmDirect) continue;
      os << "  table " << t.table_id << ": "
         << table_stored_bytes(manifest_, t, opts_.deprune, opts_.dequantize_at_load)
         << " bytes\n";
    }
    throw std::runtime_error(os.str());
  }

  uint64_t capacity = opts_.device_capacity_bytes ? opts_.device_capacity_bytes : sm_needed;
  device_ = std::make_unique<SimDevice>(opts_.device, capacity, derive_seed(seed, 0xde51ce));
  if (opts_.throttle.max_outstanding_per_table != 0 || opts_.throttle.max_tables_in_flight != 0) {
    device_->set_throttle(opts_.throttle);
  }
  row_cache_ = std::make_unique<RowCache>(opts_.row_cache);
  pooled_ = std::make_unique<PooledCache>(opts_.pooled_cache);

  uint64_t offset = 0;
  for (const auto& t : manifest_.tables) {
    load_table(t, rows, offset);
    const auto& L = tables_.at(t.table_id);
    if (L.placement != Placement::FmDirect) {
      offset += static_cast<uint64_t>(L.rows) * L.row_bytes;
    }
  }
  device_bytes_used_ = offset;
  SDM_LOG_INFO("engine loaded: " << manifest_.tables.size() << " tables, " << device_bytes_used_
                                 << " device bytes, " << fm_resident_bytes() << " fm bytes");
}

Engine::~Engine() = default;

void Engine::load_table(const TableMeta& t, RowSource& rows, uint64_t offset) {
  LoadedTable L;
  L.meta = t;
  L.placement = plan_.assignment.at(t.table_id);
  L.row_bytes = stored_row_bytes(t, opts_.dequantize_at_load);
  L.rows = sdm::stored_rows(manifest_, t, opts_.deprune);
  L.serving_rows = logical_rows(manifest_, t);
  const PruningMap* map = nullptr;
  if (t.pruned) map = &manifest_.pruning.at(t.table_id);
  // Lookups translate through the map only while the table is stored in its
  // pruned (physical) layout; a de-pruned table serves the original space
  // directly.
  L.map = opts_.deprune ? nullptr : map;

  std::vector<uint8_t> image;
  image.reserve(static_cast<size_t>(L.rows) * L.row_bytes);
  std::vector<uint8_t> row_bytes;
  for (int64_t r = 0; r < L.rows; ++r) {
    QuantizedRow qr;
    if (opts_.deprune && t.pruned) {
      int64_t physical = map->mapping[static_cast<size_t>(r)];
      qr = physical == PruningMap::kPruned ? zero_row(t.elem_count)
                                           : rows.row(t.table_id, physical);
    } else {
      qr = rows.row(t.table_id, r);
    }
    if (qr.elem_count() != static_cast<size_t>(t.elem_count)) {
      throw std::runtime_error("row source returned wrong width for table " +
                               std::to_string(t.table_id));
    }
    row_bytes = opts_.dequantize_at_load ? expand_row(qr) : serialize_row(qr);
    image.insert(image.end(), row_bytes.begin(), row_bytes.end());
  }

  if (L.placement == Placement::FmDirect) {
    L.fm = std::move(image);
  } else {
    L.device_offset = offset;
    if (!image.empty()) device_->write_region(offset, image);
    if (L.placement == Placement::SmCached) {
      row_cache_->register_table(t.table_id, L.row_bytes);
    }
  }
  tables_.emplace(t.table_id, std::move(L));
}

void Engine::accumulate_row(std::span<const uint8_t> bytes, std::span<float> acc,
                            double& lat) const {
  if (opts_.dequantize_at_load) {
    accumulate_raw(bytes, acc);
  } else {
    accumulate_quantized(bytes, acc);
    lat += opts_.costs.dequant_per_elem_us * static_cast<double>(acc.size());
  }
  lat += opts_.costs.accumulate_per_elem_us * static_cast<double>(acc.size());
}

LookupOutput Engine::lookup_pooled(int32_t table_id, std::span<const int64_t> indices) {
  std::lock_guard<std::mutex> lock(mu_);
  return lookup_locked(table_id, indices);
}

LookupOutput Engine::lookup_locked(int32_t table_id, std::span<const int64_t> indices) {
  LookupOutput out;
  out.table_id = table_id;
  ++counters_.lookups;
  double lat = 0.0;

  auto it = tables_.find(table_id);
  if (it == tables_.end()) {
    ++counters_.index_errors;
    out.ok = false;
    out.error = "unknown table " + std::to_string(table_id);
    return out;
  }
  const LoadedTable& T = it->second;

  for (int64_t idx : indices) {
    if (idx < 0 || idx >= T.serving_rows) {
      ++counters_.index_errors;
      out.ok = false;
      out.error = "index " + std::to_string(idx) + " out of range for table " +
                  std::to_string(table_id) + " (" + std::to_string(T.serving_rows) + " rows)";
      return out;
    }
  }

  const bool fm_direct = T.placement == Placement::FmDirect;
  const bool pooled_eligible = opts_.pooled_cache_enabled && !fm_direct &&
                               indices.size() > static_cast<size_t>(opts_.pooled_cache.len_threshold);
  PooledKey key;
  if (pooled_eligible) {
    key = sequence_key(table_id, indices);
    lat += opts_.costs.pooled_probe_us;
    std::vector<float> cached;
    bool hit = opts_.pooled_cache.audit ? pooled_->lookup_audited(key, indices, cached)
                                        : pooled_->lookup(key, cached);
    if (hit) {
      out.pooled = std::move(cached);
      out.latency_us = lat;
      clock_us_ += lat;
      return out;
    }
  }

  // Translate each index to its stored row; kPruned rows contribute zero and
  // cost only the map probe.
  std::vector<int64_t> resolved(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    int64_t stored = indices[i];
    if (T.map != nullptr) {
      lat += opts_.costs.map_probe_us;
      stored = T.map->mapping[static_cast<size_t>(indices[i])];
      if (stored == PruningMap::kPruned) ++counters_.pruned_short_circuits;
    }
    resolved[i] = stored;
  }

  std::vector<float> acc(static_cast<size_t>(T.meta.elem_count), 0.0f);

  // Pooled-cache keys are order-invariant, so the sum must be a function of
  // the index multiset alone: accumulate in ascending stored-row order on
  // every path, and a cached sum for a reordered sequence stays bit-identical
  // to recomputation.
  std::vector<int64_t> canonical(resolved);
  std::sort(canonical.begin(), canonical.end());

  if (fm_direct) {
    ++counters_.fm_direct_lookups;
    for (int64_t r : canonical) {
      if (r == PruningMap::kPruned) continue;
      std::span<const uint8_t> row(T.fm.data() + static_cast<size_t>(r) * T.row_bytes,
                                   T.row_bytes);
      lat += opts_.costs.fm_lookup_fixed_us +
             static_cast<double>(T.row_bytes) / opts_.costs.fm_bytes_per_us;
      accumulate_row(row, acc, lat);
    }
    out.pooled = std::move(acc);
    out.latency_us = lat;
    clock_us_ += lat;
    return out;
  }

  const bool use_cache = opts_.row_cache_enabled && T.placement == Placement::SmCached;

  // First appearance decides fetch order; repeats within the lookup reuse the
  // same buffer slot.
  std::unordered_map<int64_t, size_t> slot_of;
  slot_of.reserve(indices.size());
  std::vector<std::vector<uint8_t>> slots;
  std::vector<int64_t> missing;
  for (int64_t r : resolved) {
    if (r == PruningMap::kPruned) continue;
    if (slot_of.count(r)) continue;
    ++counters_.sm_row_accesses;
    if (use_cache) {
      lat += opts_.costs.cache_probe_us;
      std::vector<uint8_t> row;
      if (row_cache_->get(CacheKey{table_id, r}, row)) {
        slot_of.emplace(r, slots.size());
        slots.push_back(std::move(row));
        continue;
      }
    }
    slot_of.emplace(r, slots.size());
    slots.emplace_back();
    missing.push_back(r);
  }

  if (!missing.empty()) {
    std::vector<IoRequest> reqs;
    reqs.reserve(missing.size());
    for (int64_t r : missing) {
      IoRequest rq;
      rq.table_id = table_id;
      rq.byte_offset = T.device_offset + static_cast<uint64_t>(r) * T.row_bytes;
      rq.length = T.row_bytes;
      rq.subblock = true;
      reqs.push_back(rq);
    }
    const double t_submit = clock_us_ + lat;
    auto handle = device_->submit_reads(std::move(reqs), t_submit);
    const double done = device_->wait_all(*handle);
    lat += std::max(0.0, done - t_submit);
    out.device_reads = static_cast<uint32_t>(missing.size());
    counters_.device_reads += missing.size();
    counters_.device_reads_per_table[table_id] += missing.size();
    counters_.device_bytes_requested += missing.size() * static_cast<uint64_t>(T.row_bytes);
    for (auto& c : device_->take_completions(*handle, done)) {
      if (!c.ok) {
        throw std::logic_error("device read failed inside a validated lookup: " + c.error);
      }
      int64_t r = static_cast<int64_t>((c.request.byte_offset - T.device_offset) / T.row_bytes);
      slots[slot_of.at(r)] = std::move(c.data);
    }
    if (use_cache) {
      for (int64_t r : missing) {
        row_cache_->insert(CacheKey{table_id, r}, slots[slot_of.at(r)]);
      }
    }
  }

  for (int64_t r : canonical) {
    if (r == PruningMap::kPruned) continue;
    accumulate_row(slots[slot_of.at(r)], acc, lat);
  }

  if (pooled_eligible) {
    pooled_->store(key, acc, indices);
  }
  out.pooled = std::move(acc);
  out.latency_us = lat;
  clock_us_ += lat;
  return out;
}

QueryResult Engine::execute_query(const QueryRecord& query) {
  return execute_query_at(query, 0.0);
}

QueryResult Engine::execute_query_at(const QueryRecord& query, double at_us) {
  std::lock_guard<std::mutex> lock(mu_);
  if (at_us > clock_us_) clock_us_ = at_us;
  QueryResult res;
  res.query_id = query.query_id;
  for (const auto& g : query.groups) {
    for (uint32_t rep = 0; rep < g.repeat; ++rep) {
      LookupOutput out = lookup_locked(g.table_id, g.indices);
      auto it = tables_.find(g.table_id);
      const bool item = it != tables_.end() && it->second.meta.role == TableRole::Item;
      (item ? res.item_path_us : res.user_path_us) += out.latency_us;
      if (!out.ok) res.ok = false;
      res.outputs.push_back(std::move(out));
    }
  }
  res.end_to_end_us = opts_.overlapped ? std::max(res.user_path_us, res.item_path_us)
                                       : res.user_path_us + res.item_path_us;
  ++counters_.queries;
  return res;
}

UpdateReport Engine::apply_update(std::span<const RowUpdate> updates) {
  std::lock_guard<std::mutex> lock(mu_);
  UpdateReport rep;
  std::set<int32_t> touched;
  std::vector<uint8_t> bytes;
  for (const auto& u : updates) {
    auto it = tables_.find(u.table_id);
    if (it == tables_.end()) {
      rep.rejected.push_back("unknown table " + std::to_string(u.table_id));
      continue;
    }
    LoadedTable& T = it->second;
    if (u.row_id < 0 || u.row_id >= T.rows) {
      rep.rejected.push_back("table " + std::to_string(u.table_id) + ": row " +
                             std::to_string(u.row_id) + " outside stored range " +
                             std::to_string(T.rows));
      continue;
    }
    if (u.row.elem_count() != static_cast<size_t>(T.meta.elem_count)) {
      rep.rejected.push_back("table " + std::to_string(u.table_id) + ": row " +
                             std::to_string(u.row_id) + " has width " +
                             std::to_string(u.row.elem_count()) + ", table stores " +
                             std::to_string(T.meta.elem_count));
      continue;
    }
    bytes = opts_.dequantize_at_load ? expand_row(u.row) : serialize_row(u.row);
    if (T.placement == Placement::FmDirect) {
      std::memcpy(T.fm.data() + static_cast<size_t>(u.row_id) * T.row_bytes, bytes.data(),
                  bytes.size());
    } else {
      device_->write_region(T.device_offset + static_cast<uint64_t>(u.row_id) * T.row_bytes,
                            bytes);
      row_cache_->erase(CacheKey{u.table_id, u.row_id});
    }
    touched.insert(u.table_id);
    ++rep.applied;
  }
  // Any cached pooled sum over an updated table may now be stale.
  for (int32_t id : touched) pooled_->invalidate_table(id);
  return rep;
}

WarmupReport Engine::warmup_stats(const Trace& trace, uint64_t window_queries) {
  if (window_queries == 0) throw std::invalid_argument("warmup window must be positive");
  WarmupReport rep;
  rep.window_queries = window_queries;

  uint64_t h0 = row_cache_stats().hits();
  uint64_t m0 = row_cache_stats().misses();
  double t0 = now_us();

  uint64_t in_window = 0;
  for (const auto& q : trace.queries) {
    execute_query(q);
    if (++in_window < window_queries) continue;
    CacheStats s = row_cache_stats();
    uint64_t dh = s.hits() - h0;
    uint64_t dm = s.misses() - m0;
    double t1 = now_us();
    rep.window_hit_rates.push_back(dh + dm ? static_cast<double>(dh) / (dh + dm) : 1.0);
    rep.window_qps.push_back(t1 > t0 ? 1e6 * static_cast<double>(window_queries) / (t1 - t0)
                                     : 0.0);
    h0 = s.hits();
    m0 = s.misses();
    t0 = t1;
    in_window = 0;
  }
  if (rep.window_hit_rates.empty()) return rep;

  rep.steady_hit_rate = rep.window_hit_rates.back();
  rep.steady_qps = rep.window_qps.back();
  size_t first_warm = rep.window_hit_rates.size();
  for (size_t w = 0; w < rep.window_hit_rates.size(); ++w) {
    if (rep.window_hit_rates[w] >= 0.9 * rep.steady_hit_rate) {
      first_warm = w;
      break;
    }
  }
  if (first_warm < rep.window_hit_rates.size()) {
    rep.queries_to_90pct = static_cast<int64_t>((first_warm + 1) * window_queries);
  }
  if (first_warm > 0 && rep.steady_qps > 0.0) {
    double warm_sum = 0.0;
    for (size_t w = 0; w < first_warm; ++w) warm_sum += rep.window_qps[w];
    rep.warmup_qps_ratio = warm_sum / static_cast<double>(first_warm) / rep.steady_qps;
  }
  return rep;
}

uint64_t Engine::fm_resident_bytes() const {
  std::lock_guard<std::mutex> lock(mu_);
  uint64_t total = 0;
  for (const auto& [id, T] : tables_) {
    total += T.fm.size();
    if (T.map != nullptr) total += T.map->fm_bytes(T.meta.idx_type_bytes);
  }
  return total;
}

int64_t Engine::serving_rows(int32_t table_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = tables_.find(table_id);
  return it == tables_.end() ? -1 : it->second.serving_rows;
}

int64_t Engine::stored_rows(int32_t table_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = tables_.find(table_id);
  return it == tables_.end() ? -1 : it->second.rows;
}

double Engine::now_us() const {
  std::lock_guard<std::mutex> lock(mu_);
  return clock_us_;
}

EngineCounters Engine::counters() const {
  std::lock_guard<std::mutex> lock(mu_);
  return counters_;
}

CacheStats Engine::row_cache_stats() const { return row_cache_->stats(); }

PooledStats Engine::pooled_cache_stats() const { return pooled_->stats(); }

DeviceStats Engine::device_stats() const { return device_->stats_snapshot(); }

}  // namespace sdm
