#include "sdm/workload.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "sdm/hashing.hpp"

namespace sdm {

int64_t Trace::total_lookups() const {
  int64_t n = 0;
  for (const auto& q : queries)
    for (const auto& g : q.groups) n += g.repeat;
  return n;
}

int64_t logical_rows(const ModelManifest& m, const TableMeta& t) {
  if (!t.pruned) return t.num_rows;
  return m.pruning.at(t.table_id).unpruned_rows();
}

SeededPermutation::SeededPermutation(uint64_t seed, uint64_t domain) : domain_(domain) {
  if (domain == 0) throw std::invalid_argument("permutation domain must be positive");
  uint32_t bits = domain > 1 ? static_cast<uint32_t>(std::bit_width(domain - 1)) : 1;
  if (bits % 2) ++bits;
  if (bits < 2) bits = 2;
  half_bits_ = bits / 2;
  half_mask_ = (uint64_t{1} << half_bits_) - 1;
  SplitMix64 rng(derive_seed(seed, 0xfe15e1));
  for (auto& k : keys_) k = rng.next();
}

uint64_t SeededPermutation::round_once(uint64_t x) const {
  uint64_t left = x >> half_bits_;
  uint64_t right = x & half_mask_;
  for (uint64_t key : keys_) {
    uint64_t f = mix64(right ^ key) & half_mask_;
    uint64_t next_right = left ^ f;
    left = right;
    right = next_right;
  }
  return (left << half_bits_) | right;
}

uint64_t SeededPermutation::operator()(uint64_t x) const {
  if (x >= domain_) throw std::out_of_range("permutation input outside domain");
  do {
    x = round_once(x);
  } while (x >= domain_);  // cycle-walk: the walk stays inside one permutation cycle
  return x;
}

ZipfSampler::ZipfSampler(double s, uint64_t n) : s_(s), n_(n) {
  if (n == 0) throw std::invalid_argument("zipf domain must be positive");
  if (s < 0) throw std::invalid_argument("zipf exponent must be non-negative");
  if (n > (uint64_t{1} << 32)) throw std::invalid_argument("zipf domain too large for alias table");
  std::vector<double> w(n);
  double total = 0;
  for (uint64_t r = 0; r < n; ++r) {
    w[r] = std::pow(static_cast<double>(r + 1), -s);
    total += w[r];
  }
  // Vose alias construction over normalized weights.
  accept_.assign(n, 1.0);
  alias_.assign(n, 0);
  std::vector<uint32_t> small, large;
  small.reserve(n);
  large.reserve(n);
  double scale = static_cast<double>(n) / total;
  for (uint64_t r = 0; r < n; ++r) {
    w[r] *= scale;
    (w[r] < 1.0 ? small : large).push_back(static_cast<uint32_t>(r));
  }
  while (!small.empty() && !large.empty()) {
    uint32_t s_idx = small.back();
    small.pop_back();
    uint32_t l_idx = large.back();
    accept_[s_idx] = w[s_idx];
    alias_[s_idx] = l_idx;
    w[l_idx] -= 1.0 - w[s_idx];
    if (w[l_idx] < 1.0) {
      large.pop_back();
      small.push_back(l_idx);
    }
  }
  // Leftovers are 1.0 within rounding.
}

uint64_t ZipfSampler::sample(SplitMix64& rng) const {
  uint64_t slot = rng.next_below(n_);
  return rng.next_double() < accept_[slot] ? slot : alias_[slot];
}

double ZipfSampler::top_share(double fraction) const {
  if (fraction <= 0) return 0.0;
  if (fraction >= 1) return 1.0;
  uint64_t k = static_cast<uint64_t>(std::ceil(fraction * static_cast<double>(n_)));
  double top = 0, total = 0;
  for (uint64_t r = 0; r < n_; ++r) {
    double w = std::pow(static_cast<double>(r + 1), -s_);
    total += w;
    if (r < k) top += w;
  }
  return top / total;
}

Trace generate_trace(const ModelManifest& m, const WorkloadSpec& spec) {
  m.validate();
  if (spec.num_queries < 0) throw std::invalid_argument("num_queries must be non-negative");
  if (spec.repeat_rho < 0 || spec.repeat_rho > 1)
    throw std::invalid_argument("repeat_rho must be in [0, 1]");
  if (spec.item_batch == 0) throw std::invalid_argument("item_batch must be positive");

  constexpr size_t kReservoirCap = 256;
  struct PerTable {
    const TableMeta* meta;
    ZipfSampler zipf;
    SeededPermutation perm;
    SplitMix64 rng;
    std::deque<std::vector<int64_t>> reservoir;
  };
  std::vector<PerTable> tables;
  tables.reserve(m.tables.size());
  Trace out;
  for (const auto& t : m.tables) {
    int64_t rows = logical_rows(m, t);
    double s = spec.zipf_s;
    if (auto it = spec.zipf_s_per_table.find(t.table_id); it != spec.zipf_s_per_table.end())
      s = it->second;
    uint64_t tid = static_cast<uint64_t>(static_cast<uint32_t>(t.table_id));
    tables.push_back(PerTable{
        &t,
        ZipfSampler(s, static_cast<uint64_t>(rows)),
        SeededPermutation(derive_seed(spec.seed, hash_combine(0x9e37, tid)), static_cast<uint64_t>(rows)),
        SplitMix64(derive_seed(spec.seed, hash_combine(0x7ace, tid))),
        {}});
    out.table_ids.push_back(t.table_id);
  }

  out.queries.reserve(static_cast<size_t>(spec.num_queries));
  for (int64_t q = 0; q < spec.num_queries; ++q) {
    QueryRecord rec;
    rec.query_id = q;
    rec.groups.reserve(tables.size());
    for (auto& pt : tables) {
      LookupGroup g;
      g.table_id = pt.meta->table_id;
      g.repeat = pt.meta->role == TableRole::Item ? spec.item_batch : 1;
      double coin = pt.rng.next_double();
      if (coin < spec.repeat_rho && !pt.reservoir.empty()) {
        g.indices = pt.reservoir[pt.rng.next_below(pt.reservoir.size())];
      } else {
        uint64_t k = std::max<uint64_t>(1, pt.rng.poisson(pt.meta->avg_pooling_factor));
        g.indices.reserve(k);
        for (uint64_t i = 0; i < k; ++i)
          g.indices.push_back(static_cast<int64_t>(pt.perm(pt.zipf.sample(pt.rng))));
        if (pt.reservoir.size() == kReservoirCap) pt.reservoir.pop_front();
        pt.reservoir.push_back(g.indices);
      }
      rec.groups.push_back(std::move(g));
    }
    out.queries.push_back(std::move(rec));
  }
  return out;
}

std::vector<double> temporal_cdf(const Trace& t, int32_t table_id, int64_t num_rows) {
  if (num_rows <= 0) throw std::invalid_argument("num_rows must be positive");
  std::vector<uint64_t> counts(static_cast<size_t>(num_rows), 0);
  uint64_t total = 0;
  for (const auto& q : t.queries) {
    for (const auto& g : q.groups) {
      if (g.table_id != table_id) continue;
      for (int64_t idx : g.indices) {
        if (idx < 0 || idx >= num_rows)
          throw std::out_of_range("trace index " + std::to_string(idx) + " outside table");
        counts[static_cast<size_t>(idx)] += g.repeat;
        total += g.repeat;
      }
    }
  }
  if (total == 0) return {};
  std::sort(counts.begin(), counts.end(), std::greater<>());
  std::vector<double> cdf(counts.size());
  uint64_t running = 0;
  for (size_t i = 0; i < counts.size(); ++i) {
    running += counts[i];
    cdf[i] = static_cast<double>(running) / static_cast<double>(total);
  }
  return cdf;
}

std::vector<double> spatial_locality(const Trace& t, int32_t table_id, int32_t dim_bytes,
                                     int64_t window) {
  if (dim_bytes <= 0) throw std::invalid_argument("dim_bytes must be positive");
  if (window < 1) throw std::invalid_argument("window must be at least 1");
  int64_t rows_per_block = 4096 / dim_bytes;
  if (rows_per_block == 0) rows_per_block = 1;

  std::vector<double> metrics;
  std::unordered_set<int64_t> rows, blocks;
  int64_t filled = 0;
  auto flush = [&] {
    if (filled == 0) return;
    double u = static_cast<double>(rows.size());
    double b = static_cast<double>(blocks.size());
    metrics.push_back(std::min(1.0, u / b / static_cast<double>(rows_per_block)));
    rows.clear();
    blocks.clear();
    filled = 0;
  };
  for (const auto& q : t.queries) {
    for (const auto& g : q.groups) {
      if (g.table_id != table_id) continue;
      for (uint32_t rep = 0; rep < g.repeat; ++rep) {
        for (int64_t idx : g.indices) {
          rows.insert(idx);
          blocks.insert(idx * dim_bytes / 4096);
          if (++filled == window) flush();
        }
      }
    }
  }
  flush();  // trailing partial window
  return metrics;
}

void write_trace(const Trace& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace " + path);
  out << "TABLES ";
  for (size_t i = 0; i < t.table_ids.size(); ++i) {
    if (i) out << ',';
    out << t.table_ids[i];
  }
  out << '\n';
  for (const auto& q : t.queries) {
    out << "Q " << q.query_id;
    for (const auto& g : q.groups) {
      out << " | " << g.table_id;
      if (g.repeat != 1) out << 'x' << g.repeat;
      out << ':';
      for (size_t i = 0; i < g.indices.size(); ++i) {
        if (i) out << ',';
        out << g.indices[i];
      }
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

namespace {

[[noreturn]] void trace_fail(const std::string& path, int line, const std::string& msg) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

template <typename Int>
Int parse_int(std::string_view text, const std::string& path, int line, const char* what) {
  Int value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    trace_fail(path, line, std::string("bad ") + what + " '" + std::string(text) + "'");
  return value;
}

}  // namespace

Trace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace " + path);
  Trace t;
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  std::unordered_set<int32_t> known;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line.rfind("TABLES ", 0) != 0) trace_fail(path, lineno, "expected TABLES header");
      std::string_view rest(line);
      rest.remove_prefix(7);
      size_t pos = 0;
      while (pos <= rest.size()) {
        size_t comma = rest.find(',', pos);
        std::string_view tok = rest.substr(pos, comma == std::string_view::npos ? rest.size() - pos : comma - pos);
        int32_t id = parse_int<int32_t>(tok, path, lineno, "table id");
        t.table_ids.push_back(id);
        known.insert(id);
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
      }
      header_seen = true;
      continue;
    }
    if (line.rfind("Q ", 0) != 0) trace_fail(path, lineno, "expected query record");
    std::string_view rest(line);
    rest.remove_prefix(2);
    size_t bar = rest.find(" | ");
    std::string_view id_tok = bar == std::string_view::npos ? rest : rest.substr(0, bar);
    QueryRecord rec;
    rec.query_id = parse_int<int64_t>(id_tok, path, lineno, "query id");
    while (bar != std::string_view::npos) {
      rest.remove_prefix(bar + 3);
      bar = rest.find(" | ");
      std::string_view seg = bar == std::string_view::npos ? rest : rest.substr(0, bar);
      size_t colon = seg.find(':');
      if (colon == std::string_view::npos) trace_fail(path, lineno, "group missing ':'");
      std::string_view head = seg.substr(0, colon);
      LookupGroup g;
      size_t x = head.find('x');
      if (x == std::string_view::npos) {
        g.table_id = parse_int<int32_t>(head, path, lineno, "table id");
      } else {
        g.table_id = parse_int<int32_t>(head.substr(0, x), path, lineno, "table id");
        g.repeat = parse_int<uint32_t>(head.substr(x + 1), path, lineno, "repeat count");
        if (g.repeat == 0) trace_fail(path, lineno, "repeat count must be positive");
      }
      if (!known.count(g.table_id))
        trace_fail(path, lineno, "table " + std::to_string(g.table_id) + " not in header");
      std::string_view list = seg.substr(colon + 1);
      if (list.empty()) trace_fail(path, lineno, "empty index list");
      size_t pos = 0;
      while (pos <= list.size()) {
        size_t comma = list.find(',', pos);
        std::string_view tok = list.substr(pos, comma == std::string_view::npos ? list.size() - pos : comma - pos);
        g.indices.push_back(parse_int<int64_t>(tok, path, lineno, "index"));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
      }
      rec.groups.push_back(std::move(g));
    }
    t.queries.push_back(std::move(rec));
  }
  return t;
}

}  // namespace sdm
