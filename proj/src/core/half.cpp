// SPDX-License-Identifier: Apache-2.0

#include "core/half.hpp"

#include <bit>

namespace csr {

uint16_t f32_to_f16_bits(float f) {
    uint32_t x = std::bit_cast<uint32_t>(f);
    uint16_t sign = uint16_t((x >> 16) & 0x8000u);
    uint32_t expo = (x >> 23) & 0xffu;
    uint32_t mant = x & 0x7fffffu;

    if (expo == 0xffu) { // inf or nan
        if (mant == 0) return sign | 0x7c00u;
        uint32_t m = mant >> 13;
        if (m == 0) m = 0x200u; // keep nan a nan even if payload bits shift out
        return uint16_t(sign | 0x7c00u | m);
    }

    int e = int(expo) - 127 + 15;
    if (e >= 31) return sign | 0x7c00u; // overflow to inf

    if (e <= 0) {
        // target is subnormal (or zero)
        if (e < -10) return sign;
        uint32_t m = mant | 0x800000u;
        int shift = 14 - e;
        uint32_t q = m >> shift;
        uint32_t rem = m & ((1u << shift) - 1);
        uint32_t half = 1u << (shift - 1);
        if (rem > half || (rem == half && (q & 1u))) ++q;
        // a carry out of the mantissa lands in the exponent field and is
        // exactly the right encoding, so no fixup needed
        return uint16_t(sign | q);
    }

    uint32_t q = mant >> 13;
    uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (q & 1u))) {
        ++q;
        if (q == 0x400u) {
            q = 0;
            if (++e >= 31) return sign | 0x7c00u;
        }
    }
    return uint16_t(sign | uint32_t(e) << 10 | q);
}

float f16_bits_to_f32(uint16_t h) {
    uint32_t sign = uint32_t(h & 0x8000u) << 16;
    uint32_t expo = (h >> 10) & 0x1fu;
    uint32_t mant = h & 0x3ffu;

    if (expo == 31u) return std::bit_cast<float>(sign | 0x7f800000u | (mant << 13));
    if (expo == 0u) {
        if (mant == 0) return std::bit_cast<float>(sign);
        int k = 0;
        while (!(mant & 0x400u)) {
            mant <<= 1;
            ++k;
        }
        return std::bit_cast<float>(sign | uint32_t(113 - k) << 23 | ((mant & 0x3ffu) << 13));
    }
    return std::bit_cast<float>(sign | (expo + 112u) << 23 | (mant << 13));
}

} // namespace csr
