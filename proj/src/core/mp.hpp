// SPDX-License-Identifier: Apache-2.0
//
// Matching Pursuit encode and de-sparse decode over chunked cache vectors.

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "core/binio.hpp"
#include "core/dictionary.hpp"
#include "core/json_util.hpp"

namespace csr {

struct CodecConfig {
    int s = 4;           // MP-level: max atoms kept per chunk
    int s_n = 1;         // number of channel chunks
    std::optional<double> outlier_threshold; // relative residual above which the raw vector is kept
    int head_dim = 0;

    int chunk_dim() const { return head_dim / s_n; }
    void validate() const;
    json to_json() const;
    static CodecConfig from_json(const json& j);
};

struct CodeEntry {
    uint16_t index = 0;
    float coeff = 0.0f;
};

// Sparse form of one head_dim vector: per chunk at most s (index, coefficient)
// entries. Outliers skip encoding entirely and carry the raw vector.
struct SparseCode {
    std::vector<std::vector<CodeEntry>> chunks;
    bool is_outlier = false;
    Eigen::VectorXf raw;
};

struct MpEntry {
    uint16_t index = 0;
    double coeff = 0.0;
};

// One chunk's encode output, kept at full precision for training and
// diagnostics. residual_norms[g] is ||R_{g+1}|| after iteration g.
struct ChunkEncodeResult {
    std::vector<MpEntry> entries;
    Eigen::VectorXd residual;
    std::vector<double> residual_norms;

    double residual_norm() const { return residual.norm(); }
};

// Greedy MP: repeatedly picks the atom with the largest |correlation| against
// the running residual (ties to the lowest index), accumulates the signed
// coefficient, and subtracts the projection. Runs exactly s iterations unless
// the correlations vanish first.
ChunkEncodeResult mp_encode_chunk(const Eigen::VectorXd& x, const Eigen::MatrixXd& atoms, int s);
ChunkEncodeResult mp_encode_chunk(const Eigen::VectorXf& x, const Dictionary& dict, int s);

using DictSet = std::vector<const Dictionary*>; // one per chunk, s_n entries

SparseCode encode_vector(const Eigen::VectorXf& x, const DictSet& dicts, const CodecConfig& cfg);
Eigen::VectorXf desparse(const SparseCode& code, const DictSet& dicts, const CodecConfig& cfg);

std::vector<SparseCode> encode_batch(const Eigen::MatrixXf& X, const DictSet& dicts,
                                     const CodecConfig& cfg);

// Bits per channel implied by the storage model: s*s_n (u16 index + f16
// coefficient) pairs against head_dim fp16 channels.
double equivalent_bits(const CodecConfig& cfg);

// Checks entry counts, duplicate indices, and index ranges against dicts.
void validate_code(const SparseCode& code, const DictSet& dicts, const CodecConfig& cfg);

// Rounds coefficients (and outlier raw values) to their f16 representation,
// which is what serialization stores.
void quantize_code_f16(SparseCode& code);

// Wire form: u8 flags (bit 0 = outlier); outliers carry head_dim f16 raw
// values, others per chunk a u8 count then (u16 index, f16 coefficient) pairs.
void serialize_code(ByteWriter& w, const SparseCode& code, const CodecConfig& cfg);
SparseCode deserialize_code(ByteReader& r, const CodecConfig& cfg);

} // namespace csr
