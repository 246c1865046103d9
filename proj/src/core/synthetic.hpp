// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "core/capture.hpp"
#include "core/json_util.hpp"

namespace csr {

enum class GeneratorType { PlantedDictionary, GaussianMixture, LayerDrift };

// Synthetic calibration data so the pipeline runs end to end without probing
// a model. PlantedDictionary gives ground truth for dictionary recovery;
// LayerDrift makes layer grouping meaningful by rotating a shared base
// distribution a little more at every layer.
struct SyntheticSpec {
    int num_layers = 1;
    int num_heads = 1;
    int head_dim = 16;
    int64_t tokens_per_layer = 256;
    uint64_t seed = 0;

    GeneratorType generator = GeneratorType::PlantedDictionary;
    // PlantedDictionary
    int num_atoms = 16;
    int sparsity = 2;
    double noise_sigma = 0.0;
    // GaussianMixture
    int num_components = 4;
    double spread = 0.25;
    // LayerDrift
    double drift_rate = 0.0;

    CaptureKind kind = CaptureKind::Key;
    bool pre_rope = true;
    Dtype dtype = Dtype::F32;
    std::string model_name = "synthetic";

    void validate() const;
    json to_json() const;
    static SyntheticSpec from_json(const json& j);
};

CaptureDataset generate_synthetic(const SyntheticSpec& spec);

// The atoms PlantedDictionary uses for one (layer, head), for tests that
// compare learned dictionaries against ground truth.
Eigen::MatrixXf planted_atoms(const SyntheticSpec& spec, int layer, int head);

} // namespace csr
