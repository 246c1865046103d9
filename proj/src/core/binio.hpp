// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace csr {

// Little-endian byte-level serialization, independent of host endianness.

class ByteWriter {
  public:
    void put_u8(uint8_t v) { buf_.push_back(v); }
    void put_u16(uint16_t v) {
        buf_.push_back(uint8_t(v));
        buf_.push_back(uint8_t(v >> 8));
    }
    void put_u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
    }
    void put_u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
    }
    void put_f32(float v);
    void put_bytes(const void* p, size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    // u32 length prefix + raw bytes
    void put_string(const std::string& s) {
        put_u32(uint32_t(s.size()));
        put_bytes(s.data(), s.size());
    }

    const std::vector<uint8_t>& data() const { return buf_; }
    std::vector<uint8_t> take() { return std::move(buf_); }
    size_t size() const { return buf_.size(); }

  private:
    std::vector<uint8_t> buf_;
};

class ByteReader {
  public:
    ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::vector<uint8_t>& v) : data_(v.data()), size_(v.size()) {}

    uint8_t get_u8() {
        need(1);
        return data_[pos_++];
    }
    uint16_t get_u16() {
        need(2);
        uint16_t v = uint16_t(data_[pos_]) | uint16_t(data_[pos_ + 1]) << 8;
        pos_ += 2;
        return v;
    }
    uint32_t get_u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    uint64_t get_u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    float get_f32();
    void get_bytes(void* p, size_t n) {
        need(n);
        std::memcpy(p, data_ + pos_, n);
        pos_ += n;
    }
    std::string get_string() {
        uint32_t n = get_u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }

    size_t pos() const { return pos_; }
    size_t remaining() const { return size_ - pos_; }
    bool at_end() const { return pos_ == size_; }

  private:
    void need(size_t n) const {
        CSR_REQUIRE(size_ - pos_ >= n, ErrorCode::Truncated,
                    "unexpected end of stream at byte " + std::to_string(pos_));
    }
    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::string& path);

// Writes to a temp file in the same directory, then renames over the target,
// so readers never observe a partial file.
void write_file_atomic(const std::string& path, const void* data, size_t size);
void write_file_atomic(const std::string& path, const std::vector<uint8_t>& data);
void write_text_file_atomic(const std::string& path, const std::string& text);

uint64_t fnv1a64(const uint8_t* p, size_t n);
inline uint64_t fnv1a64(const std::vector<uint8_t>& v) { return fnv1a64(v.data(), v.size()); }

} // namespace csr
