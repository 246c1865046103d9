// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "core/half.hpp"

using namespace csr;

TEST_SUITE("half") {

TEST_CASE("widen then narrow is the identity on every bit pattern") {
    for (uint32_t bits = 0; bits <= 0xffff; ++bits) {
        uint16_t h = uint16_t(bits);
        float f = f16_bits_to_f32(h);
        uint16_t back = f32_to_f16_bits(f);
        if (std::isnan(f)) {
            // any NaN encoding may map to a canonical NaN, but must stay NaN
            CHECK(std::isnan(f16_bits_to_f32(back)));
        } else {
            CHECK(back == h);
        }
    }
}

TEST_CASE("exact values survive") {
    CHECK(f16_bits_to_f32(0x0000) == 0.0f);
    CHECK(f16_bits_to_f32(0x3c00) == 1.0f);
    CHECK(f16_bits_to_f32(0xc000) == -2.0f);
    CHECK(f16_bits_to_f32(0x7bff) == 65504.0f);   // largest finite half
    CHECK(f16_bits_to_f32(0x0001) == 0x1p-24f);   // smallest subnormal
    CHECK(f16_bits_to_f32(0x0400) == 0x1p-14f);   // smallest normal
    CHECK(f32_to_f16_bits(0.5f) == 0x3800);
    CHECK(f32_to_f16_bits(-0.0f) == 0x8000);
}

TEST_CASE("round to nearest even at the halfway point") {
    // 1 + 2^-11 sits exactly between 1.0 and the next half; even wins
    CHECK(f32_to_f16_bits(1.0f + 0x1p-11f) == 0x3c00);
    // 1 + 3*2^-11 sits between mantissa 1 and 2; rounds up to even 2
    CHECK(f32_to_f16_bits(1.0f + 3.0f * 0x1p-11f) == 0x3c02);
    // just above the halfway point rounds up
    CHECK(f32_to_f16_bits(1.0f + 0x1p-11f + 0x1p-20f) == 0x3c01);
}

TEST_CASE("overflow and underflow") {
    CHECK(f16_bits_to_f32(0x7c00) == INFINITY);
    CHECK(f32_to_f16_bits(65504.0f) == 0x7bff);
    CHECK(f32_to_f16_bits(65520.0f) == 0x7c00);  // rounds past the largest half
    CHECK(f32_to_f16_bits(1e30f) == 0x7c00);
    CHECK(f32_to_f16_bits(-1e30f) == 0xfc00);
    CHECK(f32_to_f16_bits(0x1p-24f) == 0x0001);
    CHECK(f32_to_f16_bits(0x1p-25f) == 0x0000);                // tie to even zero
    CHECK(f32_to_f16_bits(0x1p-25f + 0x1p-27f) == 0x0001);     // above the tie
    CHECK(f32_to_f16_bits(-0x1p-26f) == 0x8000);               // signed zero kept
}

TEST_CASE("subnormal rounding carries into the exponent") {
    // largest subnormal plus half a ulp rounds up into the smallest normal
    float largest_sub = f16_bits_to_f32(0x03ff);
    CHECK(f32_to_f16_bits(largest_sub + 0x1p-25f) == 0x0400);
}

TEST_CASE("nan maps to nan") {
    CHECK((f32_to_f16_bits(NAN) & 0x7c00) == 0x7c00);
    CHECK((f32_to_f16_bits(NAN) & 0x03ff) != 0);
    CHECK(std::isnan(f16_bits_to_f32(0x7e00)));
}

TEST_CASE("quantize matches the bit round trip") {
    for (float v : {0.1f, -3.7f, 1234.5f, 6.1e-5f, 0.0f}) {
        CHECK(quantize_f16(v) == f16_bits_to_f32(f32_to_f16_bits(v)));
    }
}

} // TEST_SUITE
