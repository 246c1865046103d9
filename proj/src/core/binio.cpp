// SPDX-License-Identifier: Apache-2.0

#include "core/binio.hpp"

#include <atomic>
#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace csr {

void ByteWriter::put_f32(float v) {
    put_u32(std::bit_cast<uint32_t>(v));
}

float ByteReader::get_f32() {
    return std::bit_cast<float>(get_u32());
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    CSR_REQUIRE(in.good(), ErrorCode::Io, "cannot open " + path);
    in.seekg(0, std::ios::end);
    std::streamoff len = in.tellg();
    CSR_REQUIRE(len >= 0, ErrorCode::Io, "cannot stat " + path);
    in.seekg(0, std::ios::beg);
    std::vector<uint8_t> buf(static_cast<size_t>(len));
    if (len > 0) in.read(reinterpret_cast<char*>(buf.data()), len);
    CSR_REQUIRE(in.good(), ErrorCode::Io, "short read from " + path);
    return buf;
}

void write_file_atomic(const std::string& path, const void* data, size_t size) {
    static std::atomic<uint64_t> counter{0};
    std::filesystem::path target(path);
    std::filesystem::path dir = target.parent_path();
    std::string tmp = (dir.empty() ? std::filesystem::path(".") : dir) /
                      (target.filename().string() + ".tmp" + std::to_string(counter.fetch_add(1)));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        CSR_REQUIRE(out.good(), ErrorCode::Io, "cannot create " + tmp);
        if (size > 0) out.write(static_cast<const char*>(data), std::streamsize(size));
        out.flush();
        if (!out.good()) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw Error(ErrorCode::Io, "short write to " + tmp);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
        std::error_code ec2;
        std::filesystem::remove(tmp, ec2);
        throw Error(ErrorCode::Io, "cannot rename " + tmp + " to " + path + ": " + ec.message());
    }
}

void write_file_atomic(const std::string& path, const std::vector<uint8_t>& data) {
    write_file_atomic(path, data.data(), data.size());
}

void write_text_file_atomic(const std::string& path, const std::string& text) {
    write_file_atomic(path, text.data(), text.size());
}

uint64_t fnv1a64(const uint8_t* p, size_t n) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace csr
