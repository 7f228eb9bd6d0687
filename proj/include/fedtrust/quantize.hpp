#pragma once

#include <cstdint>
#include <vector>

#include "fedtrust/rng.hpp"
#include "fedtrust/types.hpp"

namespace fedtrust {

// Stochastic uniform quantization relative to the vector norm (unbiased by
// construction). `bits` is the full per-coordinate budget: one sign bit plus
// bits-1 magnitude bits, so 8-bit coordinates pack into exactly one byte and
// the serialized stream is a 4x reduction over 32-bit reals.
struct QuantizedUpdate {
  double norm = 0.0;
  int bits = 8;
  int dim = 0;
  int level_count = 0;            // s = 2^(bits-1) - 1 magnitude levels
  std::vector<uint16_t> levels;   // in [0, s]
  std::vector<int8_t> signs;      // +1 / -1

  size_t serialized_size_bytes() const;
};

QuantizedUpdate quantize(const Vecf& v, int bits, RngStream stream);
Vecf dequantize(const QuantizedUpdate& q);

// Packed byte stream: u32 dim, u8 bits, f64 norm, then `bits` bits per
// coordinate (sign in the top bit), little-endian bit order.
std::vector<uint8_t> quantized_to_bytes(const QuantizedUpdate& q);
QuantizedUpdate quantized_from_bytes(const std::vector<uint8_t>& bytes);

size_t quantized_size_bytes(int dim, int bits);

}  // namespace fedtrust
