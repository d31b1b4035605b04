#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <vector>

#include "sdm/engine.hpp"
#include "sdm/manifest.hpp"
#include "sdm/rng.hpp"
#include "sdm/workload.hpp"

namespace sdm::test {

inline TableMeta make_table(int32_t id, int64_t rows, int32_t elem_count, TableRole role,
                            double pf = 4.0, bool pruned = false, int32_t idx_type = 4) {
  TableMeta t;
  t.table_id = id;
  t.num_rows = rows;
  t.elem_count = elem_count;
  t.role = role;
  t.avg_pooling_factor = pf;
  t.pruned = pruned;
  t.idx_type_bytes = idx_type;
  return t;
}

// Pruning map over `logical` ids: ids listed in `pruned_ids` map to the
// sentinel, the rest stream onto physical rows 0..k-1 in logical order.
inline PruningMap make_pruning(int64_t logical, const std::vector<int64_t>& pruned_ids) {
  std::vector<bool> is_pruned(static_cast<size_t>(logical), false);
  for (int64_t id : pruned_ids) is_pruned[static_cast<size_t>(id)] = true;
  PruningMap map;
  map.mapping.resize(static_cast<size_t>(logical));
  int64_t next = 0;
  for (int64_t i = 0; i < logical; ++i) {
    map.mapping[static_cast<size_t>(i)] = is_pruned[static_cast<size_t>(i)] ? PruningMap::kPruned : next++;
  }
  return map;
}

// Reference result computed directly from the synthetic row source, without
// engine, caches, or device: translate each index through the pruning map (if
// the table is pruned), drop sentinels, and sum scale*code+bias in fp32 over
// ascending stored-row order. The canonical order makes the sum a function of
// the index multiset, which every serving path and cached entry must match.
inline std::vector<float> oracle_pooled(const ModelManifest& m, uint64_t content_seed,
                                        int32_t table_id, const std::vector<int64_t>& indices) {
  const TableMeta* t = m.find(table_id);
  std::vector<float> acc(static_cast<size_t>(t->elem_count), 0.0f);
  const PruningMap* map = t->pruned ? &m.pruning.at(table_id) : nullptr;
  std::vector<int64_t> stored;
  for (int64_t idx : indices) {
    int64_t physical = idx;
    if (map != nullptr) {
      physical = map->mapping[static_cast<size_t>(idx)];
      if (physical == PruningMap::kPruned) continue;
    }
    stored.push_back(physical);
  }
  std::sort(stored.begin(), stored.end());
  for (int64_t physical : stored) {
    QuantizedRow row = synthesize_row(content_seed, table_id, physical, t->elem_count);
    for (size_t e = 0; e < acc.size(); ++e) {
      acc[e] += row.scale * static_cast<float>(row.payload[e]) + row.bias;
    }
  }
  return acc;
}

inline bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return false;
  return a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace sdm::test
