#include "sdm/pruning.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sdm {

int64_t PruningMap::live_rows() const {
  int64_t n = 0;
  for (int64_t e : mapping)
    if (e != kPruned) ++n;
  return n;
}

void PruningMap::validate(int64_t physical_rows) const {
  std::vector<bool> seen(static_cast<size_t>(physical_rows), false);
  for (int64_t e : mapping) {
    if (e == kPruned) continue;
    if (e < 0 || e >= physical_rows)
      throw std::invalid_argument("pruning map entry out of physical row range");
    if (seen[static_cast<size_t>(e)])
      throw std::invalid_argument("pruning map entry repeated");
    seen[static_cast<size_t>(e)] = true;
  }
}

PruningMap read_pruning_map(const std::string& path, int32_t idx_type_bytes) {
  if (idx_type_bytes != 4 && idx_type_bytes != 8)
    throw std::invalid_argument("pruning map entry width must be 4 or 8");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open pruning map: " + path);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() % static_cast<size_t>(idx_type_bytes) != 0)
    throw std::runtime_error("pruning map " + path + ": size not a multiple of entry width");

  PruningMap map;
  map.mapping.resize(raw.size() / static_cast<size_t>(idx_type_bytes));
  for (size_t i = 0; i < map.mapping.size(); ++i) {
    if (idx_type_bytes == 4) {
      uint32_t v;
      std::memcpy(&v, raw.data() + i * 4, 4);
      map.mapping[i] = (v == 0xffffffffu) ? PruningMap::kPruned : static_cast<int64_t>(v);
    } else {
      uint64_t v;
      std::memcpy(&v, raw.data() + i * 8, 8);
      map.mapping[i] = (v == ~0ull) ? PruningMap::kPruned : static_cast<int64_t>(v);
    }
  }
  return map;
}

void write_pruning_map(const PruningMap& map, const std::string& path, int32_t idx_type_bytes) {
  if (idx_type_bytes != 4 && idx_type_bytes != 8)
    throw std::invalid_argument("pruning map entry width must be 4 or 8");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write pruning map: " + path);
  for (int64_t e : map.mapping) {
    if (idx_type_bytes == 4) {
      uint32_t v = (e == PruningMap::kPruned) ? 0xffffffffu : static_cast<uint32_t>(e);
      out.write(reinterpret_cast<const char*>(&v), 4);
    } else {
      uint64_t v = (e == PruningMap::kPruned) ? ~0ull : static_cast<uint64_t>(e);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
  }
  if (!out) throw std::runtime_error("short write to pruning map: " + path);
}

}  // namespace sdm
