#include "sdm/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace sdm {

namespace {

void put_f32(float v, uint8_t* out) { std::memcpy(out, &v, 4); }

float get_f32(const uint8_t* in) {
  float v;
  std::memcpy(&v, in, 4);
  return v;
}

}  // namespace

void TableMeta::validate() const {
  if (num_rows < 0) throw std::invalid_argument("table " + std::to_string(table_id) + ": negative num_rows");
  if (elem_count <= 0) throw std::invalid_argument("table " + std::to_string(table_id) + ": elem_count must be positive");
  if (avg_pooling_factor <= 0.0) throw std::invalid_argument("table " + std::to_string(table_id) + ": avg_pooling_factor must be positive");
  if (idx_type_bytes != 4 && idx_type_bytes != 8)
    throw std::invalid_argument("table " + std::to_string(table_id) + ": idx_type_bytes must be 4 or 8");
}

QuantizedRow quantize_row(std::span<const float> values) {
  if (values.empty()) throw std::invalid_argument("quantize_row: empty input");
  float lo = values[0];
  float hi = values[0];
  for (float v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("quantize_row: non-finite input");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  QuantizedRow row;
  row.scale = (hi - lo) / 255.0f;
  // A -0.0f bias would make otherwise identical rows pool to sums that differ
  // in sign bit; normalize it away so row content alone decides the bits.
  row.bias = lo + 0.0f;
  row.payload.resize(values.size());
  if (row.scale == 0.0f) return row;  // constant row, codes stay zero
  for (size_t i = 0; i < values.size(); ++i) {
    long code = std::lroundf((values[i] - row.bias) / row.scale);
    row.payload[i] = static_cast<uint8_t>(std::clamp(code, 0l, 255l));
  }
  return row;
}

std::vector<float> dequantize_row(const QuantizedRow& row) {
  std::vector<float> out(row.payload.size());
  for (size_t i = 0; i < row.payload.size(); ++i)
    out[i] = row.scale * static_cast<float>(row.payload[i]) + row.bias;
  return out;
}

QuantizedRow zero_row(int32_t elem_count) {
  QuantizedRow row;
  row.payload.assign(static_cast<size_t>(elem_count), 0);
  return row;
}

std::vector<float> pool_rows(std::span<const QuantizedRow> rows, int32_t elem_count) {
  std::vector<float> acc(static_cast<size_t>(elem_count), 0.0f);
  for (const QuantizedRow& row : rows) {
    if (row.payload.size() != acc.size()) throw std::invalid_argument("pool_rows: elem_count mismatch");
    for (size_t i = 0; i < acc.size(); ++i)
      acc[i] += row.scale * static_cast<float>(row.payload[i]) + row.bias;
  }
  return acc;
}

void serialize_row(const QuantizedRow& row, std::span<uint8_t> out) {
  if (out.size() != row.serialized_bytes()) throw std::invalid_argument("serialize_row: bad output size");
  put_f32(row.scale, out.data());
  put_f32(row.bias, out.data() + 4);
  std::memcpy(out.data() + kRowParamBytes, row.payload.data(), row.payload.size());
}

std::vector<uint8_t> serialize_row(const QuantizedRow& row) {
  std::vector<uint8_t> out(row.serialized_bytes());
  serialize_row(row, out);
  return out;
}

QuantizedRow parse_row(std::span<const uint8_t> bytes) {
  if (bytes.size() < static_cast<size_t>(kRowParamBytes) + 1)
    throw std::invalid_argument("parse_row: row shorter than header plus one code");
  QuantizedRow row;
  row.scale = get_f32(bytes.data());
  row.bias = get_f32(bytes.data() + 4);
  row.payload.assign(bytes.begin() + kRowParamBytes, bytes.end());
  return row;
}

std::vector<uint8_t> expand_row(const QuantizedRow& row) {
  std::vector<uint8_t> out(row.payload.size() * 4);
  for (size_t i = 0; i < row.payload.size(); ++i) {
    float v = row.scale * static_cast<float>(row.payload[i]) + row.bias;
    put_f32(v, out.data() + i * 4);
  }
  return out;
}

void accumulate_quantized(std::span<const uint8_t> row_bytes, std::span<float> acc) {
  if (row_bytes.size() != acc.size() + kRowParamBytes)
    throw std::invalid_argument("accumulate_quantized: size mismatch");
  float scale = get_f32(row_bytes.data());
  float bias = get_f32(row_bytes.data() + 4);
  const uint8_t* codes = row_bytes.data() + kRowParamBytes;
  for (size_t i = 0; i < acc.size(); ++i)
    acc[i] += scale * static_cast<float>(codes[i]) + bias;
}

void accumulate_raw(std::span<const uint8_t> row_bytes, std::span<float> acc) {
  if (row_bytes.size() != acc.size() * 4)
    throw std::invalid_argument("accumulate_raw: size mismatch");
  for (size_t i = 0; i < acc.size(); ++i)
    acc[i] += get_f32(row_bytes.data() + i * 4);
}

}  // namespace sdm
