// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Dense>

#include "core/dict_store.hpp"
#include "core/synthetic.hpp"
#include "helpers.hpp"

using namespace csr;

namespace {

CaptureDataset planted_capture(int layers, int heads, int head_dim, uint64_t seed,
                               int64_t tokens = 192) {
    SyntheticSpec spec;
    spec.num_layers = layers;
    spec.num_heads = heads;
    spec.head_dim = head_dim;
    spec.tokens_per_layer = tokens;
    spec.num_atoms = 10;
    spec.sparsity = 2;
    spec.noise_sigma = 0.01;
    spec.seed = seed;
    return generate_synthetic(spec);
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.num_atoms = 6;
    cfg.s_train = 2;
    cfg.s_n = 2;
    cfg.epochs = 2;
    cfg.batch_size = 64;
    cfg.kmeans_iters = 5;
    cfg.seed = 11;
    return cfg;
}

} // namespace

TEST_SUITE("dict_store") {

TEST_CASE("training fills one dictionary per group, head, and chunk") {
    CaptureDataset ds = planted_capture(2, 2, 8, 5);
    MergePlan plan;
    plan.groups = {{0, 1}};
    plan.kind = CaptureKind::Key;

    MergedTrainResult r = train_on_merged_layers(ds, plan, tiny_config(), 6);
    DictStore& store = r.store;
    store.validate();

    CHECK(store.chunk_dim == 4);
    CHECK(store.s_n == 2);
    CHECK(store.head_dim() == 8);
    CHECK(store.num_groups() == 1);
    CHECK(store.dicts.size() == 4); // 1 group x 2 heads x 2 chunks

    for (int h = 0; h < 2; ++h)
        for (int c = 0; c < 2; ++c) {
            const Dictionary& d = store.dict(0, h, c);
            CHECK(d.chunk_dim() == 4);
            CHECK(d.num_atoms() == 6);
            CHECK(&store.dict_for_layer(1, h, c) == &d);
        }
    CHECK_CSR_ERROR(store.dict(3, 0, 0), ErrorCode::MissingBlock);

    CHECK(r.report["schema_version"] == 1);
    CHECK(r.report["dictionaries"].size() == 4);

    MergePlan value_plan = plan;
    value_plan.kind = CaptureKind::Value;
    CHECK_CSR_ERROR(train_on_merged_layers(ds, value_plan, tiny_config(), 6, 0.0, false),
                    ErrorCode::SchemaMismatch);
}

TEST_CASE("serialization round trips byte-exactly") {
    CaptureDataset ds = planted_capture(2, 1, 8, 7);
    MergePlan plan;
    plan.groups = {{0}, {1}};
    plan.kind = CaptureKind::Key;

    DictStore store = train_on_merged_layers(ds, plan, tiny_config(), 6).store;
    std::vector<uint8_t> bytes = store.serialize();

    DictStore back = DictStore::deserialize(bytes);
    CHECK(back.kind == store.kind);
    CHECK(back.chunk_dim == store.chunk_dim);
    CHECK(back.s_n == store.s_n);
    CHECK(back.per_head_atoms == store.per_head_atoms);
    CHECK(back.num_heads == store.num_heads);
    CHECK(back.head_shared == store.head_shared);
    CHECK(back.plan.groups == store.plan.groups);
    CHECK(back.dicts.size() == store.dicts.size());
    for (const auto& [key, d] : store.dicts) CHECK(back.dict(key.group, key.head, key.chunk).atoms() == d.atoms());

    CHECK(back.serialize() == bytes);
    CHECK(back.content_hash() == store.content_hash());

    testutil::TmpDir tmp;
    store.save(tmp.file("dict.csrd"));
    DictStore loaded = DictStore::load(tmp.file("dict.csrd"));
    CHECK(loaded.serialize() == bytes);
}

TEST_CASE("deserialize rejects corrupted streams") {
    CaptureDataset ds = planted_capture(1, 1, 8, 9);
    MergePlan plan;
    plan.groups = {{0}};
    plan.kind = CaptureKind::Key;
    std::vector<uint8_t> bytes =
        train_on_merged_layers(ds, plan, tiny_config(), 4).store.serialize();

    SUBCASE("bad magic") {
        bytes[1] = 'x';
        CHECK_CSR_ERROR(DictStore::deserialize(bytes), ErrorCode::BadMagic);
    }
    SUBCASE("short stream") {
        std::vector<uint8_t> stub(bytes.begin(), bytes.begin() + 3);
        CHECK_CSR_ERROR(DictStore::deserialize(stub), ErrorCode::BadMagic);
    }
    SUBCASE("future version") {
        bytes[4] = 9;
        CHECK_CSR_ERROR(DictStore::deserialize(bytes), ErrorCode::UnsupportedVersion);
    }
    SUBCASE("truncated atoms") {
        std::vector<uint8_t> cut(bytes.begin(), bytes.end() - 3);
        CHECK_CSR_ERROR(DictStore::deserialize(cut), ErrorCode::Truncated);
    }
    SUBCASE("trailing garbage") {
        bytes.push_back(0);
        CHECK_CSR_ERROR(DictStore::deserialize(bytes), ErrorCode::FormatError);
    }
}

TEST_CASE("head_shared pools heads into one dictionary per group and chunk") {
    CaptureDataset ds = planted_capture(2, 3, 8, 13);
    MergePlan plan;
    plan.groups = {{0, 1}};
    plan.kind = CaptureKind::Key;

    DictStore store = train_on_merged_layers(ds, plan, tiny_config(), 6, 0.0, true).store;
    CHECK(store.head_shared);
    CHECK(store.dicts.size() == 2); // 1 group x 1 slot x 2 chunks
    // every head resolves to the shared dictionary
    CHECK(&store.dict_for_layer(0, 2, 1) == &store.dict(0, 0, 1));
    CHECK(&store.dict_for_layer(1, 0, 1) == &store.dict(0, 0, 1));
}

TEST_CASE("validation holdout shows up in the per-dictionary reports") {
    CaptureDataset ds = planted_capture(1, 1, 8, 17, 256);
    MergePlan plan;
    plan.groups = {{0}};
    plan.kind = CaptureKind::Key;

    MergedTrainResult r = train_on_merged_layers(ds, plan, tiny_config(), 6, 0.25, false);
    CHECK(r.report["val_fraction"] == 0.25);
    for (const json& rep : r.report["dictionaries"]) {
        const json& tr = rep["report"];
        CHECK(tr["val_mse"].size() == 2); // one entry per epoch
        for (const json& v : tr["val_mse"]) CHECK(v.get<double>() > 0.0);
        CHECK(tr["init_val_mse"].get<double>() > 0.0);
    }

    CHECK_CSR_ERROR(train_on_merged_layers(ds, plan, tiny_config(), 6, 1.0, false),
                    ErrorCode::ConfigError);
}

TEST_CASE("training is deterministic and the hash tracks content") {
    CaptureDataset ds = planted_capture(2, 1, 8, 19);
    MergePlan plan;
    plan.groups = {{0, 1}};
    plan.kind = CaptureKind::Key;

    TrainConfig cfg = tiny_config();
    DictStore a = train_on_merged_layers(ds, plan, cfg, 6).store;
    DictStore b = train_on_merged_layers(ds, plan, cfg, 6).store;
    CHECK(a.serialize() == b.serialize());
    CHECK(a.content_hash() == b.content_hash());

    cfg.seed = 12;
    DictStore c = train_on_merged_layers(ds, plan, cfg, 6).store;
    CHECK(a.content_hash() != c.content_hash());
}

} // TEST_SUITE
