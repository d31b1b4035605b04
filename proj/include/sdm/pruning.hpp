#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sdm {

// Maps the original (pre-pruning) index space onto the physical rows of a
// pruned table. Entries are either a physical row id or kPruned. Non-sentinel
// entries are unique. The mapping itself occupies fast memory when the table
// is served in its pruned form.
struct PruningMap {
  static constexpr int64_t kPruned = -1;

  std::vector<int64_t> mapping;  // length = original index space size

  int64_t unpruned_rows() const { return static_cast<int64_t>(mapping.size()); }
  int64_t fm_bytes(int32_t idx_type_bytes) const {
    return unpruned_rows() * idx_type_bytes;
  }
  int64_t live_rows() const;
  void validate(int64_t physical_rows) const;  // throws std::invalid_argument
};

// On-disk sidecar: consecutive little-endian entries of idx_type_bytes each;
// the sentinel is the all-ones pattern for the entry width.
PruningMap read_pruning_map(const std::string& path, int32_t idx_type_bytes);
void write_pruning_map(const PruningMap& map, const std::string& path, int32_t idx_type_bytes);

}  // namespace sdm
