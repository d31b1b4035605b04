#include "sdm/placement.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace sdm {

const char* placement_name(Placement p) {
  switch (p) {
    case Placement::FmDirect: return "fm_direct";
    case Placement::SmCached: return "sm_cached";
    case Placement::SmUncached: return "sm_uncached";
  }
  return "?";
}

PlacementPolicy PlacementPolicy::named(const std::string& name, uint64_t fm_budget_bytes) {
  PlacementPolicy p;
  p.fm_budget_bytes = fm_budget_bytes;
  if (name == "sm_only")
    p.kind = Kind::SmOnly;
  else if (name == "fixed_fm")
    p.kind = Kind::FixedFm;
  else
    throw std::invalid_argument("unknown placement policy '" + name + "'");
  return p;
}

Placement PlacementPlan::of(int32_t table_id) const {
  auto it = assignment.find(table_id);
  if (it == assignment.end())
    throw std::out_of_range("table " + std::to_string(table_id) + " has no placement");
  return it->second;
}

uint32_t stored_row_bytes(const TableMeta& t, bool dequantize_at_load) {
  if (dequantize_at_load) return static_cast<uint32_t>(t.elem_count) * 4u;
  return static_cast<uint32_t>(t.dim_bytes());
}

int64_t stored_rows(const ModelManifest& m, const TableMeta& t, bool deprune) {
  if (deprune && t.pruned) return m.pruning.at(t.table_id).unpruned_rows();
  return t.num_rows;
}

uint64_t stored_table_bytes(const ModelManifest& m, const TableMeta& t, bool deprune,
                            bool dequantize_at_load) {
  return static_cast<uint64_t>(stored_rows(m, t, deprune)) * stored_row_bytes(t, dequantize_at_load);
}

PlacementPlan plan_placement(const ModelManifest& m, const PlacementPolicy& policy, bool deprune,
                             bool dequantize_at_load) {
  m.validate();
  PlacementPlan plan;
  plan.fm_budget_bytes = policy.fm_budget_bytes;
  plan.policy_name = policy.kind == PlacementPolicy::Kind::SmOnly ? "sm_only" : "fixed_fm";

  std::set<int32_t> deny(policy.deny_list.begin(), policy.deny_list.end());
  std::set<int32_t> uncached(policy.low_temporal_locality.begin(),
                             policy.low_temporal_locality.end());
  for (int32_t id : deny)
    if (!m.find(id)) throw std::invalid_argument("deny-list table " + std::to_string(id) + " not in manifest");
  for (int32_t id : uncached)
    if (!m.find(id)) throw std::invalid_argument("uncached table " + std::to_string(id) + " not in manifest");

  if (!deprune)
    for (const auto& [id, map] : m.pruning)
      plan.fm_mapping_bytes += static_cast<uint64_t>(map.fm_bytes(m.find(id)->idx_type_bytes));

  // Mapping tensors are mandatory resident state; they consume the budget
  // only where the budget constrains choices (fixed_fm fills). sm_only
  // places nothing by choice, so only a deny-list can overrun it.
  uint64_t used = policy.kind == PlacementPolicy::Kind::FixedFm ? plan.fm_mapping_bytes : 0;
  for (const auto& t : m.tables) {
    if (!deny.count(t.table_id)) continue;
    plan.assignment[t.table_id] = Placement::FmDirect;
    uint64_t bytes = stored_table_bytes(m, t, deprune, dequantize_at_load);
    plan.fm_direct_bytes += bytes;
    used += bytes;
  }
  if (used > policy.fm_budget_bytes)
    throw std::runtime_error("placement rejected: deny-listed tables plus mappings need " +
                             std::to_string(used) + " bytes of fast memory, budget is " +
                             std::to_string(policy.fm_budget_bytes));

  auto sm_placement = [&](int32_t id) {
    return uncached.count(id) ? Placement::SmUncached : Placement::SmCached;
  };

  if (policy.kind == PlacementPolicy::Kind::SmOnly) {
    for (const auto& t : m.tables)
      if (!deny.count(t.table_id)) plan.assignment[t.table_id] = sm_placement(t.table_id);
    return plan;
  }

  // Bandwidth density: bytes a table moves per query relative to the space it
  // occupies. With uniform rows this reduces to pooling_factor / num_rows.
  struct Scored {
    const TableMeta* t;
    double score;
  };
  std::vector<Scored> rest;
  for (const auto& t : m.tables) {
    if (deny.count(t.table_id)) continue;
    double score = t.avg_pooling_factor * static_cast<double>(t.dim_bytes()) /
                   static_cast<double>(t.table_bytes());
    rest.push_back({&t, score});
  }
  std::sort(rest.begin(), rest.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.t->table_id < b.t->table_id;
  });
  for (const auto& [t, score] : rest) {
    uint64_t bytes = stored_table_bytes(m, *t, deprune, dequantize_at_load);
    if (used + bytes <= policy.fm_budget_bytes) {
      plan.assignment[t->table_id] = Placement::FmDirect;
      plan.fm_direct_bytes += bytes;
      used += bytes;
    } else {
      plan.assignment[t->table_id] = sm_placement(t->table_id);
    }
  }
  return plan;
}

}  // namespace sdm
