// SPDX-License-Identifier: Apache-2.0
//
// Quality measurement: reconstruction metrics, a toy-scale attention
// fidelity proxy, sparsity sweeps, analytic footprint curves, and the four
// directional ablation experiments.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/capture.hpp"
#include "core/dict_store.hpp"
#include "core/json_util.hpp"
#include "core/mp.hpp"

namespace csr {

// Cosine similarity with f64 accumulation. Two zero vectors count as 1,
// one zero vector against a nonzero one as 0.
double cosine_similarity(const Eigen::VectorXf& a, const Eigen::VectorXf& b);

struct ReconstructionMetrics {
    double mse = 0.0;             // mean squared residual norm per row
    double mean_cosine = 1.0;     // row vs reconstruction
    double outlier_fraction = 0.0;

    json to_json() const;
};

ReconstructionMetrics reconstruction_metrics(const Eigen::MatrixXf& X,
                                             const std::vector<SparseCode>& codes,
                                             const DictSet& dicts, const CodecConfig& cfg);

// Reference attention O = softmax(Q K^T / sqrt(d_h)) V in f32 with row-max
// subtraction. With causal set, query i attends to keys [0, i + keys - queries].
Eigen::MatrixXf reference_attention(const Eigen::MatrixXf& Q, const Eigen::MatrixXf& K,
                                    const Eigen::MatrixXf& V, bool causal = false);

struct AttentionFidelity {
    double mean_cosine = 1.0; // row-mean cosine between original and decoded outputs
    double max_abs_error = 0.0;

    json to_json() const;
};

// Encodes and decodes K and V row by row with the given per-chunk
// dictionaries, then compares attention outputs against the originals.
AttentionFidelity attention_fidelity(const Eigen::MatrixXf& K, const Eigen::MatrixXf& V,
                                     const Eigen::MatrixXf& Q, const CodecConfig& cfg,
                                     const DictSet& dicts, bool causal = false);

struct LaneMetrics {
    int layer = 0;
    int head = 0;
    ReconstructionMetrics recon;
    AttentionFidelity attention;

    json to_json(bool with_attention) const;
};

struct SweepPoint {
    int s = 0;
    double bits_per_channel = 0.0;
    ReconstructionMetrics recon;  // mse/cosine/outliers averaged over lanes
    AttentionFidelity attention;  // cosine averaged, max-abs maxed over lanes
    std::vector<LaneMetrics> lanes;

    json to_json(bool with_attention) const;
};

extern const char* const kSweepCsvHeader;

struct FidelityReport {
    bool with_attention = true;
    std::vector<SweepPoint> points; // ordered by s

    json to_json() const;
    std::string to_csv() const; // kSweepCsvHeader, then one row per point
};

// Encodes every (layer, head) block at each s (s_n, outlier threshold, and
// head_dim come from the template config) and measures reconstruction and,
// optionally, attention fidelity with the block serving as keys, values, and
// queries. Sweep points run in parallel, the work inside a point is serial.
FidelityReport sweep_s(const CaptureDataset& dataset, const DictStore& dicts,
                       std::vector<int> s_list, const CodecConfig& tmpl,
                       bool with_attention = true);

struct FootprintSpec {
    int num_layers = 32;
    int num_heads = 32;
    int head_dim = 128;
    int batch = 1;
    int s = 8;
    int s_n = 1;
    int64_t online_atoms_per_head = 0; // per-prompt atoms, counted once per head
    int64_t offline_store_bytes = 0;   // shared across prompts, so not scaled by batch
    std::vector<int> quant_bits = {2, 4, 8};

    void validate() const;
    json to_json() const;
};

struct FootprintSample {
    int64_t seq_len = 0;
    int64_t fp16_bytes = 0;
    int64_t csr_code_bytes = 0;
    int64_t csr_online_bytes = 0;
    int64_t csr_offline_bytes = 0;
    int64_t csr_total_bytes = 0;
    std::vector<int64_t> quant_bytes; // aligned with FootprintSpec::quant_bits
};

struct FootprintCurve {
    FootprintSpec spec;
    std::vector<FootprintSample> samples;

    std::string csv_header() const; // quant columns depend on quant_bits
    std::string to_csv() const;
    json to_json() const;
};

// Analytic byte counts per sequence length:
//   fp16  = 2 * head_dim * heads * layers * len * batch
//   csr   = 4 * s * s_n * heads * layers * len * batch        (codes)
//         + 2 * online_atoms_per_head * head_dim * heads * batch
//         + offline_store_bytes
//   k-bit = k * head_dim * heads * layers * len * batch / 8
// The online part is a per-prompt, per-head collection shared across layers,
// so it is constant in both len and layer count.
FootprintCurve footprint_curve(const std::vector<int64_t>& seq_lengths,
                               const FootprintSpec& spec);

struct AblationResult {
    std::string name;
    bool passed = false;
    json details;

    json to_json() const;
};

struct AblationReport {
    uint64_t seed = 0;
    std::vector<AblationResult> results;

    bool all_passed() const;
    json to_json() const;
};

// Four directional experiments on synthetic data, each reporting pass/fail
// plus the measured numbers (failures are report entries, not exceptions):
//   dictionary_size    bigger offline dictionaries reach lower converged loss
//   value_chunking     per-chunk dictionaries beat one flat dictionary at
//                      equal budget on channel-blocked data
//   diversity_loss     the diversity penalty does not hurt converged loss,
//                      averaged over 5 seeds
//   online_dictionary  the per-prompt online part cuts mean residuals at s=2
AblationReport ablation_suite(uint64_t seed);

} // namespace csr
