// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace csr {

// IEEE 754 binary16 conversions. Narrowing rounds to nearest, ties to even;
// widening is exact. No dependency on compiler __fp16 support.
uint16_t f32_to_f16_bits(float f);
float f16_bits_to_f32(uint16_t h);

// f32 -> f16 -> f32, i.e. the value actually stored when a float is kept at
// half precision.
inline float quantize_f16(float f) { return f16_bits_to_f32(f32_to_f16_bits(f)); }

} // namespace csr
