// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <string>

#include "core/binio.hpp"
#include "helpers.hpp"

using namespace csr;

TEST_SUITE("binio") {

TEST_CASE("scalars round trip little-endian") {
    ByteWriter w;
    w.put_u8(0xab);
    w.put_u16(0x1234);
    w.put_u32(0xdeadbeefu);
    w.put_u64(0x0123456789abcdefull);
    w.put_f32(-1.5f);
    w.put_string("hello");

    std::vector<uint8_t> bytes = w.take();
    CHECK(bytes[0] == 0xab);
    CHECK(bytes[1] == 0x34); // low byte first
    CHECK(bytes[2] == 0x12);

    ByteReader r(bytes);
    CHECK(r.get_u8() == 0xab);
    CHECK(r.get_u16() == 0x1234);
    CHECK(r.get_u32() == 0xdeadbeefu);
    CHECK(r.get_u64() == 0x0123456789abcdefull);
    CHECK(r.get_f32() == -1.5f);
    CHECK(r.get_string() == "hello");
    CHECK(r.at_end());
}

TEST_CASE("reading past the end reports the position") {
    ByteWriter w;
    w.put_u16(7);
    std::vector<uint8_t> bytes = w.take();
    ByteReader r(bytes);
    r.get_u8();
    CHECK_THROWS_WITH_AS(r.get_u32(), "truncated stream: unexpected end of stream at byte 1",
                         Error);
}

TEST_CASE("string length prefix is validated") {
    ByteWriter w;
    w.put_u32(100); // claims 100 bytes, provides none
    std::vector<uint8_t> bytes = w.take();
    ByteReader r(bytes);
    CHECK_THROWS_AS(r.get_string(), Error);
}

TEST_CASE("atomic write leaves only the target file") {
    testutil::TmpDir tmp;
    std::string path = tmp.file("out.bin");
    std::vector<uint8_t> payload = {1, 2, 3, 4, 5};
    write_file_atomic(path, payload);
    CHECK(read_file(path) == payload);

    // second write replaces the first
    std::vector<uint8_t> payload2 = {9, 8};
    write_file_atomic(path, payload2);
    CHECK(read_file(path) == payload2);

    int entries = 0;
    for (const auto& it : std::filesystem::directory_iterator(tmp.path())) {
        (void)it;
        ++entries;
    }
    CHECK(entries == 1); // no temp files left behind
}

TEST_CASE("read_file on a missing path is an io error") {
    testutil::TmpDir tmp;
    CHECK_THROWS_AS(read_file(tmp.file("nope.bin")), Error);
}

TEST_CASE("fnv1a64 known vectors") {
    CHECK(fnv1a64(nullptr, 0) == 0xcbf29ce484222325ull);
    const uint8_t a[] = {'a'};
    CHECK(fnv1a64(a, 1) == 0xaf63dc4c8601ec8cull);
    const uint8_t foobar[] = {'f', 'o', 'o', 'b', 'a', 'r'};
    CHECK(fnv1a64(foobar, 6) == 0x85944171f73967e8ull);
}

} // TEST_SUITE
