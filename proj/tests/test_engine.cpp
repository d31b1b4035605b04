#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "helpers.hpp"
#include "sdm/engine.hpp"
#include "sdm/placement.hpp"

using namespace sdm;
using doctest::Approx;

namespace {

constexpr uint64_t kContentSeed = 21;
constexpr uint64_t kEngineSeed = 99;

PlacementPlan make_plan(const ModelManifest& m, const EngineOptions& opts,
                        std::vector<int32_t> deny = {}, std::vector<int32_t> uncached = {}) {
  PlacementPolicy pol;
  pol.kind = PlacementPolicy::Kind::SmOnly;
  pol.fm_budget_bytes = deny.empty() ? 0 : (1ull << 30);
  pol.deny_list = std::move(deny);
  pol.low_temporal_locality = std::move(uncached);
  return plan_placement(m, pol, opts.deprune, opts.dequantize_at_load);
}

EngineOptions base_options() {
  EngineOptions o;
  o.row_cache.mem_opt_capacity_bytes = 4 << 20;
  o.row_cache.cpu_opt_capacity_bytes = 4 << 20;
  o.row_cache.partitions = 4;
  o.pooled_cache.capacity_bytes = 4 << 20;
  o.pooled_cache.partitions = 4;
  return o;
}

// Base content plus row replacements, for rebuilding a store after updates.
class OverlaySource : public RowSource {
 public:
  explicit OverlaySource(RowSource& base) : base_(base) {}
  void put(int32_t table, int64_t row, QuantizedRow r) { overlay_[{table, row}] = std::move(r); }
  QuantizedRow row(int32_t table, int64_t row) override {
    auto it = overlay_.find({table, row});
    return it != overlay_.end() ? it->second : base_.row(table, row);
  }

 private:
  RowSource& base_;
  std::map<std::pair<int32_t, int64_t>, QuantizedRow> overlay_;
};

ModelManifest single_table(int64_t rows, int32_t elem, double pf = 4.0) {
  ModelManifest m;
  m.tables = {test::make_table(1, rows, elem, TableRole::User, pf)};
  return m;
}

QuantizedRow make_row(int32_t elem, float lo, float hi) {
  std::vector<float> v(static_cast<size_t>(elem));
  for (int32_t i = 0; i < elem; ++i)
    v[static_cast<size_t>(i)] = lo + (hi - lo) * static_cast<float>(i) / static_cast<float>(elem);
  return quantize_row(v);
}

}  // namespace

TEST_CASE("fast-memory tables never touch caches or the device") {
  ModelManifest m = single_table(128, 24);
  EngineOptions opts = base_options();
  PlacementPlan plan = make_plan(m, opts, {1});
  auto src = synthetic_source(kContentSeed, m);
  Engine eng(m, plan, opts, *src, kEngineSeed);

  CHECK(eng.placement().of(1) == Placement::FmDirect);
  CHECK(eng.device_bytes_used() == 0);
  CHECK(eng.fm_resident_bytes() == 128 * (24 + kRowParamBytes));

  std::vector<int64_t> idx{3, 77, 3, 120};
  LookupOutput out = eng.lookup_pooled(1, idx);
  REQUIRE(out.ok);
  CHECK(test::bits_equal(out.pooled, test::oracle_pooled(m, kContentSeed, 1, idx)));
  CHECK(out.device_reads == 0);

  EngineCounters c = eng.counters();
  CHECK(c.fm_direct_lookups == 1);
  CHECK(c.sm_row_accesses == 0);
  CHECK(c.device_reads == 0);
  CHECK(eng.row_cache_stats().lookups() == 0);
  CHECK(eng.pooled_cache_stats().hits + eng.pooled_cache_stats().misses == 0);
}

TEST_CASE("cold lookups read each distinct row once; warm lookups read nothing") {
  ModelManifest m = single_table(256, 40);
  EngineOptions opts = base_options();
  opts.pooled_cache_enabled = false;
  PlacementPlan plan = make_plan(m, opts);
  auto src = synthetic_source(kContentSeed, m);
  Engine eng(m, plan, opts, *src, kEngineSeed);

  std::vector<int64_t> idx{3, 9, 3, 27};  // three distinct rows
  LookupOutput cold = eng.lookup_pooled(1, idx);
  REQUIRE(cold.ok);
  CHECK(cold.device_reads == 3);
  CHECK(test::bits_equal(cold.pooled, test::oracle_pooled(m, kContentSeed, 1, idx)));

  LookupOutput warm = eng.lookup_pooled(1, idx);
  REQUIRE(warm.ok);
  CHECK(warm.device_reads == 0);
  CHECK(test::bits_equal(warm.pooled, cold.pooled));
  CHECK(warm.latency_us < cold.latency_us);

  EngineCounters c = eng.counters();
  CHECK(c.device_reads == 3);
  CHECK(c.sm_row_accesses == 6);
  CHECK(eng.row_cache_stats().hits() == 3);
  CHECK(eng.row_cache_stats().misses() == 3);
  CHECK(c.device_bytes_requested == 3 * (40 + kRowParamBytes));
  CHECK(eng.device_stats().reads == 3);
}

TEST_CASE("a repeated sequence is served from the pooled cache") {
  ModelManifest m = single_table(256, 40);
  EngineOptions opts = base_options();
  PlacementPlan plan = make_plan(m, opts);
  auto src = synthetic_source(kContentSeed, m);
  Engine eng(m, plan, opts, *src, kEngineSeed);

  std::vector<int64_t> idx{10, 20, 30};
  LookupOutput first = eng.lookup_pooled(1, idx);
  uint64_t accesses_after_first = eng.counters().sm_row_accesses;

  // Same multiset, different order: the pooled entry answers it.
  std::vector<int64_t> shuffled{30, 10, 20};
  LookupOutput second = eng.lookup_pooled(1, shuffled);
  REQUIRE(second.ok);
  CHECK(second.device_reads == 0);
  CHECK(test::bits_equal(second.pooled, first.pooled));
  CHECK(eng.pooled_cache_stats().hits == 1);
  // A pooled hit answers before any per-row work.
  CHECK(eng.counters().sm_row_accesses == accesses_after_first);
  CHECK(eng.row_cache_stats().lookups() == 3);

  // At or below the length threshold the pooled cache is not consulted.
  std::vector<int64_t> single{10};
  eng.lookup_pooled(1, single);
  PooledStats ps = eng.pooled_cache_stats();
  CHECK(ps.hits + ps.misses == 2);  // unchanged by the short lookup
}

TEST_CASE("pruned indices contribute zero rows at map-probe cost only") {
  ModelManifest m;
  m.tables = {test::make_table(1, 6, 16, TableRole::User, 3.0, true)};
  m.pruning[1] = test::make_pruning(10, {1, 3, 5, 7});  // 6 live of 10
  EngineOptions opts = base_options();
  PlacementPlan plan = make_plan(m, opts);
  auto src = synthetic_source(kContentSeed, m);
  Engine eng(m, plan, opts, *src, kEngineSeed);

  CHECK(eng.serving_rows(1) == 10);
  CHECK(eng.stored_rows(1) == 6);

  std::vector<int64_t> all_pruned{1, 3, 5};
  LookupOutput out = eng.lookup_pooled(1, all_pruned);
  REQUIRE(out.ok);
  REQUIRE(out.pooled.size() == 16);
  for (float v : out.pooled) {
    CHECK(v == 0.0f);
    CHECK_FALSE(std::signbit(v));
  }
  CHECK(out.device_reads == 0);
  EngineCounters c = eng.counters();
  CHECK(c.pruned_short_circuits == 3);
  CHECK(c.sm_row_accesses == 0);
  CHECK(eng.row_cache_stats().lookups() == 0);
  CHECK(out.latency_us == Approx(3 * opts.costs.map_probe_us + opts.costs.pooled_probe_us));

  std::vector<int64_t> mixed{0, 1, 2};  // one pruned, two live
  LookupOutput mix = eng.lookup_pooled(1, mixed);
  REQUIRE(mix.ok);
  CHECK(mix.device_reads == 2);
  CHECK(test::bits_equal(mix.pooled, test::oracle_pooled(m, kContentSeed, 1, mixed)));
}

TEST_CASE("bad indices and unknown tables fail without device traffic") {
  ModelManifest m = single_table(100, 16);
  EngineOptions opts = base_options();
  PlacementPlan plan = make_plan(m, opts);
  auto src = synthetic_source(kContentSeed, m);
  Engine eng(m, plan, opts, *src, kEngineSeed);

  std::vector<int64_t> oob{5, 100};
  LookupOutput out = eng.lookup_pooled(1, oob);
  CHECK_FALSE(out.ok);
  CHECK(out.error.find("out of range") != std::string::npos);

  std::vector<int64_t> neg{-1};
  CHECK_FALSE(eng.lookup_pooled(1, neg).ok);

  std::vector<int64_t> fine{5};
  LookupOutput missing = eng.lookup_pooled(9, fine);
  CHECK_FALSE(missing.ok);
  CHECK(missing.error.find("unknown table") != std::string::npos);

  EngineCounters c = eng.counters();
  CHECK(c.index_errors == 3);
  CHECK(c.device_reads == 0);

  QueryRecord q;
  q.query_id = 1;
  q.groups.push_back(LookupGroup{1, 1, oob});
  CHECK_FALSE(eng.execute_query(q).ok);
}

TEST_CASE("de-pruning changes layout and footprint but not results") {
  ModelManifest m;
  m.tables = {test::make_table(1, 600, 32, TableRole::User, 4.0, true, 4)};
  std::vector<int64_t> pruned_ids;
  for (int64_t i = 0; i < 400; ++i) pruned_ids.push_back(i * 2 + 1);  // odd rows 1..799
  m.pruning[1] = test::make_pruning(1000, pruned_ids);

  WorkloadSpec spec;
  spec.seed = 31;
  spec.num_queries = 300;
  Trace trace = generate_trace(m, spec);

  EngineOptions opts_off = base_options();
  EngineOptions opts_on = base_options();
  opts_on.deprune = true;

  auto src1 = synthetic_source(kContentSeed, m);
  Engine off(m, make_plan(m, opts_off), opts_off, *src1, kEngineSeed);
  auto src2 = synthetic_source(kContentSeed, m);
  Engine on(m, make_plan(m, opts_on), opts_on, *src2, kEngineSeed);

  CHECK(off.serving_rows(1) == 1000);
  CHECK(on.serving_rows(1) == 1000);
  CHECK(off.stored_rows(1) == 600);
  CHECK(on.stored_rows(1) == 1000);

  const uint32_t row_bytes = 32 + kRowParamBytes;
  CHECK(off.device_bytes_used() == 600ull * row_bytes);
  CHECK(on.device_bytes_used() == 1000ull * row_bytes);
  // The resident mapping is the price of the compact layout.
  CHECK(off.fm_resident_bytes() == 1000 * 4);
  CHECK(on.fm_resident_bytes() == 0);

  bool all_equal = true;
  for (const auto& q : trace.queries) {
    QueryResult a = off.execute_query(q);
    QueryResult b = on.execute_query(q);
    REQUIRE(a.ok);
    REQUIRE(b.ok);
    for (size_t i = 0; i < a.outputs.size(); ++i)
      all_equal = all_equal && test::bits_equal(a.outputs[i].pooled, b.outputs[i].pooled);
  }
  CHECK(all_equal);
  CHECK(off.counters().pruned_short_circuits > 0);
  CHECK(on.counters().pruned_short_circuits == 0);  // no map left to consult
}

TEST_CASE("updates become visible, invalidate caches, and reject bad rows") {
  ModelManifest m;
  m.tables = {test::make_table(1, 64, 16, TableRole::User, 2.0),
              test::make_table(2, 64, 16, TableRole::User, 2.0)};
  EngineOptions opts = base_options();
  PlacementPlan plan = make_plan(m, opts);
  auto src = synthetic_source(kContentSeed, m);
  Engine eng(m, plan, opts, *src, kEngineSeed);

  std::vector<int64_t> seq{4, 7};
  LookupOutput before1 = eng.lookup_pooled(1, seq);
  LookupOutput before2 = eng.lookup_pooled(2, seq);
  REQUIRE(before1.ok);
  REQUIRE(before2.ok);

  QuantizedRow fresh = make_row(16, -2.0f, 3.0f);
  std::vector<RowUpdate> updates;
  updates.push_back(RowUpdate{1, 4, fresh});
  UpdateReport rep = eng.apply_update(updates);
  CHECK(rep.applied == 1);
  CHECK(rep.rejected.empty());

  // The updated row is re-read from the device: the cached copy is gone.
  uint64_t reads_before = eng.counters().device_reads;
  LookupOutput after1 = eng.lookup_pooled(1, seq);
  REQUIRE(after1.ok);
  CHECK(eng.counters().device_reads == reads_before + 1);
  CHECK_FALSE(test::bits_equal(after1.pooled, before1.pooled));

  // Expected sum: fresh row 4 plus untouched row 7.
  std::vector<float> expect = test::oracle_pooled(m, kContentSeed, 1, {7});
  for (size_t e = 0; e < expect.size(); ++e)
    expect[e] += fresh.scale * static_cast<float>(fresh.payload[e]) + fresh.bias;
  CHECK(test::bits_equal(after1.pooled, expect));

  // Table 2's pooled entry survived table 1's invalidation.
  LookupOutput after2 = eng.lookup_pooled(2, seq);
  CHECK(test::bits_equal(after2.pooled, before2.pooled));
  CHECK(eng.pooled_cache_stats().hits >= 1);

  std::vector<RowUpdate> bad;
  bad.push_back(RowUpdate{9, 0, fresh});                 // unknown table
  bad.push_back(RowUpdate{1, 64, fresh});                // row out of range
  bad.push_back(RowUpdate{1, 0, make_row(8, 0, 1)});     // wrong width
  bad.push_back(RowUpdate{2, 1, fresh});                 // fine
  UpdateReport rep2 = eng.apply_update(bad);
  CHECK(rep2.applied == 1);
  REQUIRE(rep2.rejected.size() == 3);
  CHECK(rep2.rejected[0].find("unknown table 9") != std::string::npos);
  CHECK(rep2.rejected[1].find("outside stored range") != std::string::npos);
  CHECK(rep2.rejected[2].find("width") != std::string::npos);
}

TEST_CASE("updating a fast-memory table writes through to its resident bytes") {
  ModelManifest m = single_table(32, 16);
  EngineOptions opts = base_options();
  PlacementPlan plan = make_plan(m, opts, {1});
  auto src = synthetic_source(kContentSeed, m);
  Engine eng(m, plan, opts, *src, kEngineSeed);

  QuantizedRow fresh = make_row(16, 1.0f, 2.0f);
  std::vector<RowUpdate> up{RowUpdate{1, 5, fresh}};
  CHECK(eng.apply_update(up).applied == 1);

  std::vector<int64_t> idx{5};
  LookupOutput out = eng.lookup_pooled(1, idx);
  std::vector<float> expect(16, 0.0f);
  for (size_t e = 0; e < 16; ++e)
    expect[e] = fresh.scale * static_cast<float>(fresh.payload[e]) + fresh.bias;
  CHECK(test::bits_equal(out.pooled, expect));
}

TEST_CASE("a store rebuilt from updated content replays identically") {
  ModelManifest m = single_table(128, 24);
  EngineOptions opts = base_options();
  auto base = synthetic_source(kContentSeed, m);
  Engine live(m, make_plan(m, opts), opts, *base, kEngineSeed);

  QuantizedRow r1 = make_row(24, -1.0f, 1.0f);
  QuantizedRow r2 = make_row(24, 0.5f, 9.0f);
  std::vector<RowUpdate> ups{RowUpdate{1, 10, r1}, RowUpdate{1, 11, r2}};
  REQUIRE(live.apply_update(ups).applied == 2);

  auto base2 = synthetic_source(kContentSeed, m);
  OverlaySource overlay(*base2);
  overlay.put(1, 10, r1);
  overlay.put(1, 11, r2);
  Engine rebuilt(m, make_plan(m, opts), opts, overlay, kEngineSeed);

  for (std::vector<int64_t> idx :
       {std::vector<int64_t>{10, 11}, {9, 10}, {11, 12, 11}, {0, 127}}) {
    LookupOutput a = live.lookup_pooled(1, idx);
    LookupOutput b = rebuilt.lookup_pooled(1, idx);
    REQUIRE(a.ok);
    REQUIRE(b.ok);
    CHECK(test::bits_equal(a.pooled, b.pooled));
  }
}

TEST_CASE("execution modes differ only in how the clock composes the paths") {
  ModelManifest m;
  m.tables = {test::make_table(1, 300, 32, TableRole::User, 4.0),
              test::make_table(2, 200, 32, TableRole::Item, 3.0)};
  WorkloadSpec spec;
  spec.seed = 33;
  spec.num_queries = 150;
  spec.item_batch = 2;
  Trace trace = generate_trace(m, spec);

  EngineOptions seq = base_options();
  EngineOptions ovl = base_options();
  ovl.overlapped = true;

  auto s1 = synthetic_source(kContentSeed, m);
  Engine a(m, make_plan(m, seq), seq, *s1, kEngineSeed);
  auto s2 = synthetic_source(kContentSeed, m);
  Engine b(m, make_plan(m, ovl), ovl, *s2, kEngineSeed);

  for (const auto& q : trace.queries) {
    QueryResult ra = a.execute_query(q);
    QueryResult rb = b.execute_query(q);
    REQUIRE(ra.ok);
    REQUIRE(rb.ok);
    REQUIRE(ra.outputs.size() == rb.outputs.size());
    for (size_t i = 0; i < ra.outputs.size(); ++i)
      CHECK(test::bits_equal(ra.outputs[i].pooled, rb.outputs[i].pooled));
    CHECK(ra.user_path_us == Approx(rb.user_path_us));
    CHECK(ra.item_path_us == Approx(rb.item_path_us));
    CHECK(ra.end_to_end_us == Approx(ra.user_path_us + ra.item_path_us));
    CHECK(rb.end_to_end_us == Approx(std::max(rb.user_path_us, rb.item_path_us)));
    CHECK(rb.end_to_end_us <= ra.end_to_end_us + 1e-9);
  }
}

TEST_CASE("device reads on the user path hide behind heavy item compute") {
  ModelManifest m;
  m.tables = {test::make_table(1, 400, 48, TableRole::User, 4.0),
              test::make_table(2, 100, 256, TableRole::Item, 40.0)};
  WorkloadSpec spec;
  spec.seed = 34;
  spec.num_queries = 100;
  spec.item_batch = 8;
  Trace trace = generate_trace(m, spec);

  EngineOptions opts = base_options();
  opts.overlapped = true;
  PlacementPlan plan = make_plan(m, opts, {2});  // item side is compute, not IO
  auto src = synthetic_source(kContentSeed, m);
  Engine eng(m, plan, opts, *src, kEngineSeed);

  int masked = 0;
  for (const auto& q : trace.queries) {
    QueryResult r = eng.execute_query(q);
    REQUIRE(r.ok);
    if (r.item_path_us >= r.user_path_us) {
      CHECK(r.end_to_end_us == Approx(r.item_path_us));
      ++masked;
    }
  }
  CHECK(masked == 100);
}

TEST_CASE("warmup statistics find the fill point of a repeating query") {
  ModelManifest m = single_table(64, 24);
  EngineOptions opts = base_options();
  opts.pooled_cache_enabled = false;
  PlacementPlan plan = make_plan(m, opts);
  auto src = synthetic_source(kContentSeed, m);
  Engine eng(m, plan, opts, *src, kEngineSeed);

  Trace trace;
  trace.table_ids = {1};
  for (int64_t q = 0; q < 10; ++q) {
    QueryRecord rec;
    rec.query_id = q;
    rec.groups.push_back(LookupGroup{1, 1, {1, 2, 3, 4, 5}});
    trace.queries.push_back(rec);
  }

  WarmupReport rep = eng.warmup_stats(trace, 1);
  REQUIRE(rep.window_hit_rates.size() == 10);
  CHECK(rep.window_hit_rates[0] == Approx(0.0));
  CHECK(rep.window_hit_rates[1] == Approx(1.0));
  CHECK(rep.steady_hit_rate == Approx(1.0));
  CHECK(rep.queries_to_90pct == 2);
  CHECK(rep.warmup_qps_ratio < 1.0);  // the cold window is slower
  CHECK(rep.warmup_qps_ratio > 0.0);

  CHECK_THROWS_AS(eng.warmup_stats(trace, 0), std::invalid_argument);
}

TEST_CASE("uniform traffic settles at the capacity ratio; skewed traffic far above it") {
  SUBCASE("uniform: hit rate equals cache share of the table") {
    ModelManifest m = single_table(1000, 56, 4.0);
    EngineOptions opts = base_options();
    opts.pooled_cache_enabled = false;
    opts.row_cache.partitions = 1;
    opts.row_cache.mem_opt_capacity_bytes =
        250ull * (opts.row_cache.dim_route_threshold_bytes + kMemOptEntryMetaBytes);
    PlacementPlan plan = make_plan(m, opts);
    auto src = synthetic_source(kContentSeed, m);
    Engine eng(m, plan, opts, *src, kEngineSeed);

    WorkloadSpec spec;
    spec.seed = 35;
    spec.num_queries = 4000;
    spec.zipf_s = 0.0;
    Trace trace = generate_trace(m, spec);

    for (int64_t q = 0; q < 2000; ++q) eng.execute_query(trace.queries[static_cast<size_t>(q)]);
    CacheStats warm = eng.row_cache_stats();
    for (int64_t q = 2000; q < 4000; ++q) eng.execute_query(trace.queries[static_cast<size_t>(q)]);
    CacheStats done = eng.row_cache_stats();

    uint64_t dh = done.hits() - warm.hits();
    uint64_t dm = done.misses() - warm.misses();
    double rate = static_cast<double>(dh) / static_cast<double>(dh + dm);
    CHECK(rate == Approx(0.25).epsilon(0.1));
  }

  SUBCASE("zipf: a cache holding the hot set absorbs well over ninety percent") {
    ModelManifest m = single_table(10000, 56, 6.0);
    EngineOptions opts = base_options();
    opts.pooled_cache_enabled = false;
    opts.row_cache.partitions = 1;
    opts.row_cache.mem_opt_capacity_bytes =
        6000ull * (opts.row_cache.dim_route_threshold_bytes + kMemOptEntryMetaBytes);
    PlacementPlan plan = make_plan(m, opts);
    auto src = synthetic_source(kContentSeed, m);
    Engine eng(m, plan, opts, *src, kEngineSeed);

    WorkloadSpec spec;
    spec.seed = 36;
    spec.num_queries = 8000;
    spec.zipf_s = 1.05;
    Trace trace = generate_trace(m, spec);

    for (int64_t q = 0; q < 4000; ++q) eng.execute_query(trace.queries[static_cast<size_t>(q)]);
    CacheStats warm = eng.row_cache_stats();
    for (int64_t q = 4000; q < 8000; ++q) eng.execute_query(trace.queries[static_cast<size_t>(q)]);
    CacheStats done = eng.row_cache_stats();

    uint64_t dh = done.hits() - warm.hits();
    uint64_t dm = done.misses() - warm.misses();
    double rate = static_cast<double>(dh) / static_cast<double>(dh + dm);
    CHECK(rate > 0.9);
  }
}

TEST_CASE("cache hit rates rise monotonically while a zipf trace warms up") {
  ModelManifest m = single_table(4000, 56, 5.0);
  EngineOptions opts = base_options();
  opts.pooled_cache_enabled = false;
  opts.row_cache.mem_opt_capacity_bytes =
      1500ull * (opts.row_cache.dim_route_threshold_bytes + kMemOptEntryMetaBytes);
  PlacementPlan plan = make_plan(m, opts);
  auto src = synthetic_source(kContentSeed, m);
  Engine eng(m, plan, opts, *src, kEngineSeed);

  WorkloadSpec spec;
  spec.seed = 37;
  spec.num_queries = 2400;
  Trace trace = generate_trace(m, spec);
  WarmupReport rep = eng.warmup_stats(trace, 400);
  REQUIRE(rep.window_hit_rates.size() == 6);
  // Smoothed: each window at least matches the previous one minus noise.
  for (size_t w = 1; w < rep.window_hit_rates.size(); ++w)
    CHECK(rep.window_hit_rates[w] >= rep.window_hit_rates[w - 1] - 0.05);
  CHECK(rep.window_hit_rates.back() > rep.window_hit_rates.front());
  CHECK(rep.queries_to_90pct > 0);
}

TEST_CASE("device traffic reconciles with cache statistics") {
  ModelManifest m;
  m.tables = {test::make_table(1, 500, 48, TableRole::User, 5.0),
              test::make_table(2, 400, 48, TableRole::User, 3.0),
              test::make_table(3, 100, 32, TableRole::Item, 2.0)};
  WorkloadSpec spec;
  spec.seed = 38;
  spec.num_queries = 300;
  Trace trace = generate_trace(m, spec);

  SUBCASE("with the row cache, reads equal misses plus the uncached bypass") {
    EngineOptions opts = base_options();
    opts.pooled_cache_enabled = false;
    PlacementPlan plan = make_plan(m, opts, {3}, {2});  // 3 in fm, 2 uncached
    auto src = synthetic_source(kContentSeed, m);
    Engine eng(m, plan, opts, *src, kEngineSeed);
    CHECK(eng.placement().of(2) == Placement::SmUncached);

    for (const auto& q : trace.queries) REQUIRE(eng.execute_query(q).ok);

    EngineCounters c = eng.counters();
    CacheStats rc = eng.row_cache_stats();
    DeviceStats ds = eng.device_stats();
    CHECK(c.device_reads == ds.reads);
    CHECK(c.device_bytes_requested == ds.bytes_requested);
    CHECK(rc.lookups() <= c.sm_row_accesses);
    CHECK(c.device_reads == rc.misses() + (c.sm_row_accesses - rc.lookups()));
    CHECK(c.device_reads_per_table.count(3) == 0);  // fm table never reads
    CHECK(c.device_reads_per_table.at(2) > 0);
  }

  SUBCASE("without caches, every distinct row access is a device read") {
    EngineOptions opts = base_options();
    opts.pooled_cache_enabled = false;
    opts.row_cache_enabled = false;
    PlacementPlan plan = make_plan(m, opts);
    auto src = synthetic_source(kContentSeed, m);
    Engine eng(m, plan, opts, *src, kEngineSeed);

    for (const auto& q : trace.queries) REQUIRE(eng.execute_query(q).ok);

    EngineCounters c = eng.counters();
    CHECK(eng.row_cache_stats().lookups() == 0);
    CHECK(c.device_reads == c.sm_row_accesses);
    CHECK(c.device_reads == eng.device_stats().reads);
  }
}

TEST_CASE("an uncached table is read from the device every time") {
  ModelManifest m = single_table(128, 40);
  EngineOptions opts = base_options();
  opts.pooled_cache_enabled = false;
  PlacementPlan plan = make_plan(m, opts, {}, {1});
  auto src = synthetic_source(kContentSeed, m);
  Engine eng(m, plan, opts, *src, kEngineSeed);
  CHECK(eng.placement().of(1) == Placement::SmUncached);

  std::vector<int64_t> idx{7, 8};
  eng.lookup_pooled(1, idx);
  eng.lookup_pooled(1, idx);
  CHECK(eng.counters().device_reads == 4);
  CHECK(eng.row_cache_stats().lookups() == 0);
}

TEST_CASE("load is refused when the device cannot hold the model") {
  ModelManifest m;
  m.tables = {test::make_table(1, 1000, 56, TableRole::User, 4.0),
              test::make_table(2, 1000, 56, TableRole::User, 4.0)};
  EngineOptions opts = base_options();
  opts.device_capacity_bytes = 1000 * (56 + kRowParamBytes);  // room for one table
  PlacementPlan plan = make_plan(m, opts);
  auto src = synthetic_source(kContentSeed, m);
  try {
    Engine eng(m, plan, opts, *src, kEngineSeed);
    FAIL("expected the load to be refused");
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("load refused") != std::string::npos);
    CHECK(msg.find("table 1") != std::string::npos);
    CHECK(msg.find("table 2") != std::string::npos);
  }
}

TEST_CASE("device capacity defaults to the exact model footprint") {
  ModelManifest m;
  m.tables = {test::make_table(1, 100, 56, TableRole::User, 4.0),
              test::make_table(2, 50, 300, TableRole::User, 4.0)};
  EngineOptions opts = base_options();
  PlacementPlan plan = make_plan(m, opts);
  auto src = synthetic_source(kContentSeed, m);
  Engine eng(m, plan, opts, *src, kEngineSeed);
  uint64_t footprint = 100ull * (56 + kRowParamBytes) + 50ull * (300 + kRowParamBytes);
  CHECK(eng.device_bytes_used() == footprint);
  CHECK(eng.device().capacity_bytes() == footprint);

  // Expanding rows to fp32 widens the footprint accordingly.
  EngineOptions wide = base_options();
  wide.dequantize_at_load = true;
  PlacementPlan plan2 = make_plan(m, wide);
  auto src2 = synthetic_source(kContentSeed, m);
  Engine eng2(m, plan2, wide, *src2, kEngineSeed);
  CHECK(eng2.device_bytes_used() == 100ull * 56 * 4 + 50ull * 300 * 4);
}

TEST_CASE("a half-configured throttle is rejected") {
  ModelManifest m = single_table(16, 16);
  EngineOptions opts = base_options();
  opts.throttle.max_outstanding_per_table = 4;  // missing the table cap
  PlacementPlan plan = make_plan(m, opts);
  auto src = synthetic_source(kContentSeed, m);
  CHECK_THROWS_AS(Engine(m, plan, opts, *src, kEngineSeed), std::invalid_argument);
}

TEST_CASE("the virtual clock never rewinds") {
  ModelManifest m = single_table(64, 16);
  EngineOptions opts = base_options();
  PlacementPlan plan = make_plan(m, opts);
  auto src = synthetic_source(kContentSeed, m);
  Engine eng(m, plan, opts, *src, kEngineSeed);

  QueryRecord q;
  q.query_id = 0;
  q.groups.push_back(LookupGroup{1, 1, {1, 2}});

  eng.execute_query_at(q, 500.0);
  double t1 = eng.now_us();
  CHECK(t1 >= 500.0);
  eng.execute_query_at(q, 0.0);  // earlier start time than the clock
  CHECK(eng.now_us() >= t1);
  eng.execute_query_at(q, t1 + 10000.0);
  CHECK(eng.now_us() >= t1 + 10000.0);
}

TEST_CASE("every loading and caching mode produces identical bits") {
  ModelManifest m;
  m.tables = {test::make_table(1, 512, 48, TableRole::User, 5.0),
              test::make_table(2, 300, 40, TableRole::User, 5.0, true, 4),
              test::make_table(3, 256, 300, TableRole::User, 3.0),
              test::make_table(4, 400, 64, TableRole::Item, 4.0),
              test::make_table(5, 150, 32, TableRole::Item, 3.0, true, 8),
              test::make_table(6, 128, 16, TableRole::User, 2.0)};
  m.pruning[2] = test::make_pruning(400, [] {
    std::vector<int64_t> v;
    for (int64_t i = 0; i < 100; ++i) v.push_back(i * 4);
    return v;
  }());
  m.pruning[5] = test::make_pruning(200, [] {
    std::vector<int64_t> v;
    for (int64_t i = 0; i < 50; ++i) v.push_back(i * 4 + 1);
    return v;
  }());

  WorkloadSpec spec;
  spec.seed = 39;
  spec.num_queries = 200;
  spec.repeat_rho = 0.1;
  spec.item_batch = 2;
  Trace trace = generate_trace(m, spec);

  // Reference outputs, one per flattened lookup of each query.
  std::vector<std::vector<std::vector<float>>> oracle;
  oracle.reserve(trace.queries.size());
  for (const auto& q : trace.queries) {
    std::vector<std::vector<float>> per_query;
    for (const auto& g : q.groups)
      for (uint32_t rep = 0; rep < g.repeat; ++rep)
        per_query.push_back(test::oracle_pooled(m, kContentSeed, g.table_id, g.indices));
    oracle.push_back(std::move(per_query));
  }

  int combos_checked = 0;
  for (int mask = 0; mask < 32; ++mask) {
    EngineOptions opts = base_options();
    opts.deprune = mask & 1;
    opts.dequantize_at_load = mask & 2;
    opts.row_cache_enabled = mask & 4;
    opts.pooled_cache_enabled = mask & 8;
    opts.overlapped = mask & 16;

    PlacementPlan plan = make_plan(m, opts, {6}, {4});
    auto src = synthetic_source(kContentSeed, m);
    Engine eng(m, plan, opts, *src, kEngineSeed);

    for (int32_t t = 1; t <= 6; ++t)
      CHECK(eng.serving_rows(t) == (t == 2 ? 400 : t == 5 ? 200 : m.find(t)->num_rows));

    bool combo_ok = true;
    for (size_t qi = 0; qi < trace.queries.size() && combo_ok; ++qi) {
      QueryResult r = eng.execute_query(trace.queries[qi]);
      combo_ok = combo_ok && r.ok && r.outputs.size() == oracle[qi].size();
      for (size_t i = 0; i < r.outputs.size() && combo_ok; ++i)
        combo_ok = test::bits_equal(r.outputs[i].pooled, oracle[qi][i]);
    }
    CHECK_MESSAGE(combo_ok, "flag combination ", mask, " diverged from the reference");
    combos_checked += combo_ok ? 1 : 0;
  }
  CHECK(combos_checked == 32);
}

TEST_CASE("engine timing is deterministic under a fixed seed") {
  ModelManifest m;
  m.tables = {test::make_table(1, 300, 48, TableRole::User, 4.0),
              test::make_table(2, 200, 32, TableRole::Item, 3.0)};
  WorkloadSpec spec;
  spec.seed = 40;
  spec.num_queries = 120;
  Trace trace = generate_trace(m, spec);

  auto run = [&] {
    EngineOptions opts = base_options();
    auto src = synthetic_source(kContentSeed, m);
    Engine eng(m, make_plan(m, opts), opts, *src, kEngineSeed);
    std::vector<double> times;
    for (const auto& q : trace.queries) times.push_back(eng.execute_query(q).end_to_end_us);
    return times;
  };
  CHECK(run() == run());
}
