// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "core/capture.hpp"
#include "core/dictionary.hpp"
#include "core/merge.hpp"
#include "core/train.hpp"

namespace csr {

struct DictKey {
    int group = 0;
    int head = 0;
    int chunk = 0;
    auto operator<=>(const DictKey&) const = default;
};

// The trained offline dictionaries for one cache kind, keyed by merge group,
// head, and channel chunk. head_shared stores indexes everything under head 0.
struct DictStore {
    CaptureKind kind = CaptureKind::Key;
    int chunk_dim = 0;
    int s_n = 1;
    int per_head_atoms = 0;
    int num_heads = 0;
    bool head_shared = false;
    MergePlan plan;
    TrainConfig train_config;
    std::map<DictKey, Dictionary> dicts;

    int head_dim() const { return chunk_dim * s_n; }
    int num_groups() const { return int(plan.groups.size()); }

    const Dictionary& dict(int group, int head, int chunk) const;
    const Dictionary& dict_for_layer(int layer, int head, int chunk) const;

    void validate() const;

    // CSRD container: magic, u32 version, length-prefixed JSON metadata, then
    // per sorted (group, head, chunk) key a u32 triple and the column-major
    // f32 atoms.
    std::vector<uint8_t> serialize() const;
    static DictStore deserialize(const uint8_t* data, size_t size);
    static DictStore deserialize(const std::vector<uint8_t>& bytes);
    void save(const std::string& path) const;
    static DictStore load(const std::string& path);

    // FNV-1a over the serialized bytes; snapshots store it so a cache is
    // never decoded against the wrong dictionaries.
    uint64_t content_hash() const;
};

struct MergedTrainResult {
    DictStore store;
    json report;
};

// Trains one dictionary per (merge group, head, chunk): that head's vectors
// are concatenated across the group's layers, split into s_n channel chunks,
// and each chunk position learns per_head_atoms atoms. val_fraction > 0 holds
// out a deterministic slice per (group, head) for the report's validation
// trace. head_shared pools every head's vectors and trains one dictionary
// per (group, chunk).
MergedTrainResult train_on_merged_layers(const CaptureDataset& dataset, const MergePlan& plan,
                                         const TrainConfig& cfg, int per_head_atoms,
                                         double val_fraction = 0.0, bool head_shared = false);

} // namespace csr
