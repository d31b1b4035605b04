#pragma once

#include <map>
#include <string>
#include <vector>

#include "sdm/manifest.hpp"

namespace sdm {

enum class Placement : uint8_t {
  FmDirect,    // table bytes resident in fast memory, no caches, no device
  SmCached,    // on the device, fronted by the row cache
  SmUncached,  // on the device, row cache bypassed (low temporal locality)
};

const char* placement_name(Placement p);

struct PlacementPolicy {
  enum class Kind { SmOnly, FixedFm };
  Kind kind = Kind::SmOnly;
  uint64_t fm_budget_bytes = 0;
  std::vector<int32_t> deny_list;              // never on the device; always FmDirect
  std::vector<int32_t> low_temporal_locality;  // row cache off for these

  static PlacementPolicy named(const std::string& name, uint64_t fm_budget_bytes);
};

struct PlacementPlan {
  std::map<int32_t, Placement> assignment;
  uint64_t fm_direct_bytes = 0;   // stored bytes of FmDirect tables
  uint64_t fm_mapping_bytes = 0;  // pruning maps kept resident (deprune off)
  uint64_t fm_budget_bytes = 0;
  std::string policy_name;

  Placement of(int32_t table_id) const;
  uint64_t fm_total_bytes() const { return fm_direct_bytes + fm_mapping_bytes; }
};

// Stored bytes for one table given the load flags: de-pruning re-expands a
// pruned table over its original index space, de-quantizing widens each row
// from code bytes to fp32.
uint64_t stored_table_bytes(const ModelManifest& m, const TableMeta& t, bool deprune,
                            bool dequantize_at_load);
uint32_t stored_row_bytes(const TableMeta& t, bool dequantize_at_load);
int64_t stored_rows(const ModelManifest& m, const TableMeta& t, bool deprune);

// SmOnly places every table on the device; FixedFm ranks tables by bandwidth
// density (pooling_factor x row_bytes / table_bytes) and greedily pins the
// densest into fast memory until the budget runs out. Deny-listed tables are
// pinned first; the plan is rejected if they alone exceed the budget. Pruning
// maps are charged against the same budget unless de-pruning drops them.
PlacementPlan plan_placement(const ModelManifest& m, const PlacementPolicy& policy, bool deprune,
                             bool dequantize_at_load = false);

}  // namespace sdm
