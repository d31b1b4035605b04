#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sdm/embedding.hpp"
#include "sdm/pruning.hpp"

namespace sdm {

// Model description: the set of embedding tables plus, for pruned tables, the
// logical-to-physical row mapping loaded from sidecar files.
struct ModelManifest {
  std::vector<TableMeta> tables;
  std::map<int32_t, PruningMap> pruning;  // present exactly for tables with pruned=1

  const TableMeta* find(int32_t table_id) const;
  // Unique ids, per-table validation, pruning maps consistent with row counts.
  void validate() const;
  uint64_t total_bytes() const;
};

// Text format, one table per line:
//   table_id role num_rows elem_count avg_pooling_factor pruned idx_type_bytes
// '#' starts a comment. Pruned tables read/write a binary sidecar named
// "<manifest_path>.<table_id>.pmap" holding the logical-to-physical mapping.
ModelManifest read_manifest(const std::string& path);
void write_manifest(const ModelManifest& m, const std::string& path);

// Deterministic synthetic row content: the same (seed, table, row, elem_count)
// always yields the same quantized row, so stores can be rebuilt bit-for-bit.
QuantizedRow synthesize_row(uint64_t seed, int32_t table_id, int64_t row_id, int32_t elem_count);

class RowSource {
 public:
  virtual ~RowSource() = default;
  // Physical row id, i.e. post-pruning for pruned tables.
  virtual QuantizedRow row(int32_t table_id, int64_t row_id) = 0;
};

std::unique_ptr<RowSource> synthetic_source(uint64_t seed, const ModelManifest& manifest);

}  // namespace sdm
