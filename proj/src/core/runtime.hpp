// SPDX-License-Identifier: Apache-2.0
//
// Inference-side cache: per (layer, head) lanes of sparse codes over a
// composite dictionary (offline atoms from the trained store plus a
// per-prompt online part sampled from the prefill), decode on demand, memory
// accounting, and snapshot round-tripping.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/capture.hpp"
#include "core/dict_store.hpp"
#include "core/mp.hpp"

namespace csr {

// Composite per-(layer, head) dictionary: for every chunk, the offline atoms
// first, then up to online_size atoms sampled from the prompt ("reverse
// sampling" realized as adding each sampled direction and its negation).
// Chunk slices of sampled vectors are normalized per chunk; a chunk slice
// that is numerically zero contributes no atom to that chunk, so online
// counts may differ across chunks.
struct PromptDictionary {
    std::vector<Dictionary> chunk_dicts; // Composite provenance, offline atoms first
    int offline_atoms = 0;
    std::vector<int> online_atoms; // per chunk

    DictSet dict_set() const;
};

PromptDictionary build_prompt_dictionary(const std::vector<const Dictionary*>& offline,
                                         const Eigen::MatrixXf& prefill_vectors,
                                         int64_t online_size, uint64_t seed);

struct CacheLane {
    PromptDictionary pdict;
    std::vector<SparseCode> codes;     // one per token, outlier raws held inline
    std::vector<int64_t> outlier_tokens; // token indices of outlier codes
};

struct MemoryReport {
    int64_t bytes_codes = 0;
    int64_t bytes_online_dict = 0;
    int64_t bytes_offline_dict_amortized = 0;
    int64_t bytes_outliers = 0;
    int64_t bytes_dense_equivalent = 0;
    double equivalent_bits_per_channel = 0.0;
    double compression_ratio = 0.0;

    json to_json() const;
};

// Coefficients and outlier raws are rounded to f16 when a token enters the
// cache, which is exactly what the snapshot stores, so decoding is
// bit-identical before and after a snapshot round-trip.
class CsrCache {
  public:
    CsrCache() = default;

    int num_layers() const { return num_layers_; }
    int num_heads() const { return num_heads_; }
    int head_dim() const { return codec_.head_dim; }
    CaptureKind kind() const { return kind_; }
    const CodecConfig& codec() const { return codec_; }
    uint64_t dict_hash() const { return dict_hash_; }
    int64_t online_size() const { return online_size_; }

    const CacheLane& lane(int layer, int head) const;
    int64_t token_count(int layer, int head) const;

    void prefill_compress(int layer, int head, const Eigen::MatrixXf& X_prompt);
    void append_token(int layer, int head, const Eigen::VectorXf& x);

    Eigen::MatrixXf decode_range(int layer, int head, int64_t from, int64_t to) const;
    Eigen::MatrixXf decode_all(int layer, int head) const;

    MemoryReport memory_report() const;

    // CSRS snapshot: magic, version, offline-dictionary hash, config JSON,
    // then per lane the online atoms (f32) and the serialized codes.
    std::vector<uint8_t> serialize() const;
    static CsrCache deserialize(const uint8_t* data, size_t size, const DictStore& dicts);
    static CsrCache deserialize(const std::vector<uint8_t>& bytes, const DictStore& dicts);
    void save(const std::string& path) const;
    static CsrCache load(const std::string& path, const DictStore& dicts);

    // Builds prompt dictionaries for every (layer, head) from the capture's
    // blocks and prefill-compresses them.
    static CsrCache build(const CaptureDataset& capture, const DictStore& dicts,
                          const CodecConfig& codec, int64_t online_size, uint64_t seed);

  private:
    CacheLane& lane_mut(int layer, int head);

    int num_layers_ = 0;
    int num_heads_ = 0;
    CaptureKind kind_ = CaptureKind::Key;
    CodecConfig codec_;
    int64_t online_size_ = 0;
    uint64_t seed_ = 0;
    uint64_t dict_hash_ = 0;
    int64_t offline_bytes_f16_ = 0;
    std::vector<CacheLane> lanes_; // layer-major
};

} // namespace csr
