// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace csr {

enum class CaptureKind { Key, Value };
enum class Dtype { F32, F16 };

const char* kind_name(CaptureKind k);
CaptureKind parse_kind(const std::string& s);
const char* dtype_name(Dtype d);
Dtype parse_dtype(const std::string& s);

struct CaptureHeader {
    std::string model_name;
    int num_layers = 0;
    int num_heads = 0;
    int head_dim = 0;
    CaptureKind kind = CaptureKind::Key;
    bool pre_rope = true;
    Dtype dtype = Dtype::F32;

    void validate() const;
};

struct CaptureBlock {
    int layer = 0;
    int head = 0;
    // rows are vectors, head_dim columns
    Eigen::MatrixXf vectors;
};

// One probed cache tensor set: per (layer, head), the captured vectors.
// Immutable after construction; values live as f32 in memory regardless of
// the on-disk dtype.
struct CaptureDataset {
    CaptureHeader header;
    std::vector<CaptureBlock> blocks;

    const CaptureBlock* find_block(int layer, int head) const;
    const CaptureBlock& block(int layer, int head) const; // throws MissingBlock
    void validate() const;
};

// CSRC container: magic, u32 version, length-prefixed JSON metadata, then raw
// blocks until end of stream. Little-endian, row-major, f16 narrowed with
// round-to-nearest-even on write.
std::vector<uint8_t> write_capture(const CaptureDataset& dataset);
CaptureDataset read_capture(const uint8_t* data, size_t size);
CaptureDataset read_capture(const std::vector<uint8_t>& bytes);

void save_capture(const CaptureDataset& dataset, const std::string& path);
CaptureDataset load_capture(const std::string& path);

// Concatenates the (layer, head) blocks for all layers in layer_set (given
// order), then uniform-samples rows without replacement down to max_count.
// Sampled rows keep their concatenation order.
Eigen::MatrixXf sample_vectors(const CaptureDataset& dataset, const std::vector<int>& layer_set,
                               int head, int64_t max_count, uint64_t seed);

} // namespace csr
