#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sdm/manifest.hpp"
#include "sdm/rng.hpp"

namespace sdm {

struct LookupGroup {
  int32_t table_id = 0;
  uint32_t repeat = 1;  // executed this many times back to back (item batch)
  std::vector<int64_t> indices;
};

struct QueryRecord {
  int64_t query_id = 0;
  std::vector<LookupGroup> groups;
};

struct Trace {
  std::vector<int32_t> table_ids;
  std::vector<QueryRecord> queries;

  int64_t total_lookups() const;  // sum of group repeats
};

// The index space queries draw from: the original (pre-pruning) space for
// pruned tables, the physical row space otherwise.
int64_t logical_rows(const ModelManifest& m, const TableMeta& t);

// Bijection over [0, domain): balanced Feistel network on the smallest even
// bit width covering the domain, cycle-walked back into range. Used to place
// popularity ranks at scattered row ids so that hot rows are not neighbors.
class SeededPermutation {
 public:
  SeededPermutation(uint64_t seed, uint64_t domain);
  uint64_t domain() const { return domain_; }
  uint64_t operator()(uint64_t x) const;

 private:
  uint64_t round_once(uint64_t x) const;

  uint64_t domain_;
  uint32_t half_bits_;
  uint64_t half_mask_;
  std::array<uint64_t, 4> keys_;
};

// Zipf(s) over ranks 0..n-1 where rank r carries weight (r+1)^-s, sampled in
// O(1) per draw via the alias method. s = 0 degenerates to uniform.
class ZipfSampler {
 public:
  ZipfSampler(double s, uint64_t n);
  uint64_t sample(SplitMix64& rng) const;
  // Exact probability mass of the hottest ceil(fraction * n) ranks.
  double top_share(double fraction) const;

 private:
  double s_ = 0.0;
  uint64_t n_ = 0;
  std::vector<double> accept_;
  std::vector<uint32_t> alias_;
};

struct WorkloadSpec {
  uint64_t seed = 1;
  int64_t num_queries = 0;
  double zipf_s = 1.05;
  double repeat_rho = 0.0;  // chance a group replays a recently seen sequence
  uint32_t item_batch = 1;  // repeat applied to item-table groups
  std::map<int32_t, double> zipf_s_per_table;
};

// Deterministic under seed: per query and table, draw a Poisson-sized index
// sequence (Zipf ranks mapped through the table's permutation), or with
// probability repeat_rho replay a full sequence from that table's reservoir
// of recent draws.
Trace generate_trace(const ModelManifest& m, const WorkloadSpec& spec);

// Fraction of all accesses covered by the i+1 most-accessed rows; one entry
// per row. Non-decreasing and ends at 1. Empty when the table is never hit.
std::vector<double> temporal_cdf(const Trace& t, int32_t table_id, int64_t num_rows);

// Per window of `window` accesses: unique-rows / unique-4KB-blocks, divided
// by rows-per-block and clamped at 1. Low values mean hot rows are scattered.
std::vector<double> spatial_locality(const Trace& t, int32_t table_id, int32_t dim_bytes,
                                     int64_t window);

// Text format. Header "TABLES 1,2,3", then one line per query:
//   Q <id> | <table>:<i1>,<i2>,... | <table>x<repeat>:<i1>,...
void write_trace(const Trace& t, const std::string& path);
Trace read_trace(const std::string& path);  // malformed input errors carry path:line

}  // namespace sdm
