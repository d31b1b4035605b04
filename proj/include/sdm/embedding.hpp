#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sdm {

// Per-row quantization parameters stored ahead of the codes: fp32 scale, fp32 bias.
inline constexpr int32_t kRowParamBytes = 8;

enum class TableRole : uint8_t { User, Item };

struct TableMeta {
  int32_t table_id = 0;
  int64_t num_rows = 0;  // physical rows as stored (post-pruning for pruned tables)
  int32_t elem_count = 0;
  TableRole role = TableRole::User;
  double avg_pooling_factor = 1.0;
  bool pruned = false;
  int32_t idx_type_bytes = 4;  // pruning map entry width: 4 or 8

  int32_t dim_bytes() const { return elem_count + kRowParamBytes; }
  int64_t table_bytes() const { return num_rows * static_cast<int64_t>(dim_bytes()); }
  void validate() const;  // throws std::invalid_argument
};

struct QuantizedRow {
  float scale = 0.0f;
  float bias = 0.0f;
  std::vector<uint8_t> payload;  // one code per element, [0, 255]

  size_t elem_count() const { return payload.size(); }
  size_t serialized_bytes() const { return payload.size() + kRowParamBytes; }
};

// Row-wise asymmetric quantization: scale = (max - min) / 255, bias = min.
// A constant row quantizes to scale 0 with all-zero codes.
QuantizedRow quantize_row(std::span<const float> values);
std::vector<float> dequantize_row(const QuantizedRow& row);
QuantizedRow zero_row(int32_t elem_count);

// Element-wise fp32 sum accumulated in input order. Empty input pools to zeros.
std::vector<float> pool_rows(std::span<const QuantizedRow> rows, int32_t elem_count);

// Serialized layout: 4B LE fp32 scale, 4B LE fp32 bias, elem_count code bytes.
// Row r of a table starts at byte r * dim_bytes.
void serialize_row(const QuantizedRow& row, std::span<uint8_t> out);
std::vector<uint8_t> serialize_row(const QuantizedRow& row);
QuantizedRow parse_row(std::span<const uint8_t> bytes);

// Pre-dequantized layout used when a table is expanded at load time:
// elem_count LE fp32 values per row, no row parameters.
std::vector<uint8_t> expand_row(const QuantizedRow& row);

// Accumulate one stored row into acc. The two overloads must produce
// bit-identical sums for the same logical row; both evaluate
// scale * code + bias per element in fp32 (expansion just caches the result).
void accumulate_quantized(std::span<const uint8_t> row_bytes, std::span<float> acc);
void accumulate_raw(std::span<const uint8_t> row_bytes, std::span<float> acc);

}  // namespace sdm
