#include "sdm/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sdm/hashing.hpp"
#include "sdm/rng.hpp"

namespace sdm {

const TableMeta* ModelManifest::find(int32_t table_id) const {
  for (const auto& t : tables)
    if (t.table_id == table_id) return &t;
  return nullptr;
}

void ModelManifest::validate() const {
  std::set<int32_t> ids;
  for (const auto& t : tables) {
    t.validate();
    if (!ids.insert(t.table_id).second)
      throw std::runtime_error("duplicate table id " + std::to_string(t.table_id));
    if (t.pruned) {
      auto it = pruning.find(t.table_id);
      if (it == pruning.end())
        throw std::runtime_error("table " + std::to_string(t.table_id) +
                                 " is pruned but has no mapping");
      it->second.validate(t.num_rows);
      if (it->second.live_rows() != t.num_rows)
        throw std::runtime_error("table " + std::to_string(t.table_id) +
                                 " mapping covers " + std::to_string(it->second.live_rows()) +
                                 " rows, expected " + std::to_string(t.num_rows));
    } else if (pruning.count(t.table_id)) {
      throw std::runtime_error("table " + std::to_string(t.table_id) +
                               " has a mapping but is not marked pruned");
    }
  }
  for (const auto& [id, _] : pruning)
    if (!find(id)) throw std::runtime_error("mapping for unknown table " + std::to_string(id));
}

uint64_t ModelManifest::total_bytes() const {
  uint64_t sum = 0;
  for (const auto& t : tables) sum += t.table_bytes();
  return sum;
}

namespace {

std::string pmap_path(const std::string& manifest_path, int32_t table_id) {
  return manifest_path + "." + std::to_string(table_id) + ".pmap";
}

[[noreturn]] void fail_at(const std::string& path, int line, const std::string& msg) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace

ModelManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  ModelManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    TableMeta t;
    std::string role, first;
    if (!(ls >> first)) continue;  // blank or comment-only line
    try {
      t.table_id = std::stoi(first);
    } catch (const std::exception&) {
      fail_at(path, lineno, "bad table id '" + first + "'");
    }
    int pruned = 0;
    if (!(ls >> role >> t.num_rows >> t.elem_count >> t.avg_pooling_factor >> pruned >>
          t.idx_type_bytes))
      fail_at(path, lineno, "expected: id role rows elems pooling pruned idx_bytes");
    std::string extra;
    if (ls >> extra) fail_at(path, lineno, "trailing field '" + extra + "'");
    if (role == "user")
      t.role = TableRole::User;
    else if (role == "item")
      t.role = TableRole::Item;
    else
      fail_at(path, lineno, "role must be user or item, got '" + role + "'");
    if (pruned != 0 && pruned != 1) fail_at(path, lineno, "pruned must be 0 or 1");
    t.pruned = pruned == 1;
    try {
      t.validate();
    } catch (const std::exception& e) {
      fail_at(path, lineno, e.what());
    }
    m.tables.push_back(t);
    if (t.pruned) m.pruning[t.table_id] = read_pruning_map(pmap_path(path, t.table_id), t.idx_type_bytes);
  }
  m.validate();
  return m;
}

void write_manifest(const ModelManifest& m, const std::string& path) {
  m.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path);
  out << "# id role rows elems pooling pruned idx_bytes\n";
  for (const auto& t : m.tables) {
    out << t.table_id << ' ' << (t.role == TableRole::User ? "user" : "item") << ' ' << t.num_rows
        << ' ' << t.elem_count << ' ' << t.avg_pooling_factor << ' ' << (t.pruned ? 1 : 0) << ' '
        << t.idx_type_bytes << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path);
  for (const auto& [id, map] : m.pruning) write_pruning_map(map, pmap_path(path, id),
                                                            m.find(id)->idx_type_bytes);
}

QuantizedRow synthesize_row(uint64_t seed, int32_t table_id, int64_t row_id, int32_t elem_count) {
  uint64_t stream = hash_combine(static_cast<uint64_t>(static_cast<uint32_t>(table_id)),
                                 static_cast<uint64_t>(row_id));
  SplitMix64 rng(derive_seed(seed, stream));
  std::vector<float> values(static_cast<size_t>(elem_count));
  for (auto& v : values) v = static_cast<float>(rng.next_double() * 2.0 - 1.0);
  return quantize_row(values);
}

namespace {

class SyntheticSource final : public RowSource {
 public:
  SyntheticSource(uint64_t seed, const ModelManifest& manifest) : seed_(seed) {
    for (const auto& t : manifest.tables) elem_count_[t.table_id] = t.elem_count;
  }
  QuantizedRow row(int32_t table_id, int64_t row_id) override {
    auto it = elem_count_.find(table_id);
    if (it == elem_count_.end())
      throw std::out_of_range("no such table " + std::to_string(table_id));
    return synthesize_row(seed_, table_id, row_id, it->second);
  }

 private:
  uint64_t seed_;
  std::map<int32_t, int32_t> elem_count_;
};

}  // namespace

std::unique_ptr<RowSource> synthetic_source(uint64_t seed, const ModelManifest& manifest) {
  return std::make_unique<SyntheticSource>(seed, manifest);
}

}  // namespace sdm
