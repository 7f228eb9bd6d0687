#include "fedtrust/quantize.hpp"

#include <cmath>
#include <cstring>

namespace fedtrust {

size_t quantized_size_bytes(int dim, int bits) {
  return 4 + 1 + 8 + (size_t(dim) * bits + 7) / 8;
}

size_t QuantizedUpdate::serialized_size_bytes() const {
  return quantized_size_bytes(dim, bits);
}

QuantizedUpdate quantize(const Vecf& v, int bits, RngStream stream) {
  if (bits < 2 || bits > 16)
    throw ConfigError("quantizer bits must be in [2, 16]");
  QuantizedUpdate q;
  q.bits = bits;
  q.dim = (int)v.size();
  q.level_count = (1 << (bits - 1)) - 1;
  q.levels.resize(q.dim);
  q.signs.resize(q.dim);
  q.norm = v.cast<double>().norm();
  if (q.norm == 0.0) {
    std::fill(q.levels.begin(), q.levels.end(), 0);
    std::fill(q.signs.begin(), q.signs.end(), int8_t(1));
    return q;
  }
  const double s = double(q.level_count);
  for (int i = 0; i < q.dim; ++i) {
    double r = std::abs(double(v[i])) / q.norm * s;
    double fl = std::floor(r);
    int level = (int)fl;
    double p = r - fl;
    if (stream.u01() < p) ++level;
    if (level > q.level_count) level = q.level_count;
    q.levels[i] = (uint16_t)level;
    q.signs[i] = v[i] < 0.f ? int8_t(-1) : int8_t(1);
  }
  return q;
}

Vecf dequantize(const QuantizedUpdate& q) {
  Vecf v(q.dim);
  if (q.norm == 0.0) {
    v.setZero();
    return v;
  }
  const double s = double(q.level_count);
  for (int i = 0; i < q.dim; ++i)
    v[i] = float(double(q.signs[i]) * double(q.levels[i]) / s * q.norm);
  return v;
}

std::vector<uint8_t> quantized_to_bytes(const QuantizedUpdate& q) {
  std::vector<uint8_t> out(quantized_size_bytes(q.dim, q.bits), 0);
  uint32_t dim = (uint32_t)q.dim;
  std::memcpy(out.data(), &dim, 4);
  out[4] = (uint8_t)q.bits;
  std::memcpy(out.data() + 5, &q.norm, 8);
  size_t bitpos = 0;
  uint8_t* payload = out.data() + 13;
  for (int i = 0; i < q.dim; ++i) {
    uint32_t code = q.levels[i];
    if (q.signs[i] < 0) code |= 1u << (q.bits - 1);
    for (int b = 0; b < q.bits; ++b, ++bitpos)
      if (code & (1u << b)) payload[bitpos >> 3] |= uint8_t(1u << (bitpos & 7));
  }
  return out;
}

QuantizedUpdate quantized_from_bytes(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 13) throw DataError("quantized stream truncated");
  QuantizedUpdate q;
  uint32_t dim;
  std::memcpy(&dim, bytes.data(), 4);
  q.dim = (int)dim;
  q.bits = bytes[4];
  std::memcpy(&q.norm, bytes.data() + 5, 8);
  if (q.bits < 2 || q.bits > 16) throw DataError("quantized stream corrupt");
  if (bytes.size() < quantized_size_bytes(q.dim, q.bits))
    throw DataError("quantized stream truncated");
  q.level_count = (1 << (q.bits - 1)) - 1;
  q.levels.resize(q.dim);
  q.signs.resize(q.dim);
  const uint8_t* payload = bytes.data() + 13;
  size_t bitpos = 0;
  for (int i = 0; i < q.dim; ++i) {
    uint32_t code = 0;
    for (int b = 0; b < q.bits; ++b, ++bitpos)
      if (payload[bitpos >> 3] & (1u << (bitpos & 7))) code |= 1u << b;
    q.signs[i] = (code & (1u << (q.bits - 1))) ? int8_t(-1) : int8_t(1);
    q.levels[i] = (uint16_t)(code & ((1u << (q.bits - 1)) - 1));
  }
  return q;
}

}  // namespace fedtrust
