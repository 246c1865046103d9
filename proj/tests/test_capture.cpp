// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "core/capture.hpp"
#include "core/half.hpp"
#include "helpers.hpp"

using namespace csr;

namespace {

CaptureDataset small_dataset(int layers = 2, int heads = 2, int dim = 4, int tokens = 6) {
    CaptureDataset ds;
    ds.header.model_name = "test-model";
    ds.header.num_layers = layers;
    ds.header.num_heads = heads;
    ds.header.head_dim = dim;
    ds.header.kind = CaptureKind::Key;
    ds.header.pre_rope = true;
    ds.header.dtype = Dtype::F32;
    float v = 0.25f;
    for (int l = 0; l < layers; ++l)
        for (int h = 0; h < heads; ++h) {
            CaptureBlock b;
            b.layer = l;
            b.head = h;
            b.vectors.resize(tokens, dim);
            for (int r = 0; r < tokens; ++r)
                for (int c = 0; c < dim; ++c) {
                    b.vectors(r, c) = v;
                    v += 0.125f;
                }
            ds.blocks.push_back(std::move(b));
        }
    return ds;
}

} // namespace

TEST_SUITE("capture") {

TEST_CASE("round trip is byte exact") {
    CaptureDataset ds = small_dataset();
    std::vector<uint8_t> bytes = write_capture(ds);
    CaptureDataset back = read_capture(bytes);

    CHECK(back.header.model_name == ds.header.model_name);
    CHECK(back.header.num_layers == ds.header.num_layers);
    CHECK(back.header.num_heads == ds.header.num_heads);
    CHECK(back.header.head_dim == ds.header.head_dim);
    CHECK(back.header.kind == ds.header.kind);
    CHECK(back.header.pre_rope == ds.header.pre_rope);
    CHECK(back.header.dtype == ds.header.dtype);
    REQUIRE(back.blocks.size() == ds.blocks.size());
    for (size_t i = 0; i < ds.blocks.size(); ++i)
        CHECK(back.blocks[i].vectors == ds.blocks[i].vectors);

    CHECK(write_capture(back) == bytes);
}

TEST_CASE("save and load through a file") {
    testutil::TmpDir tmp;
    CaptureDataset ds = small_dataset();
    std::string path = tmp.file("cap.csrc");
    save_capture(ds, path);
    CaptureDataset back = load_capture(path);
    CHECK(write_capture(back) == write_capture(ds));
}

TEST_CASE("validate rejects malformed datasets") {
    CaptureDataset ds = small_dataset();

    SUBCASE("duplicate block") {
        ds.blocks.push_back(ds.blocks[0]);
        CHECK_CSR_ERROR(ds.validate(), ErrorCode::DuplicateBlock);
    }
    SUBCASE("layer out of range") {
        ds.blocks[0].layer = 99;
        CHECK_CSR_ERROR(ds.validate(), ErrorCode::IndexOutOfRange);
    }
    SUBCASE("wrong width") {
        ds.blocks[1].vectors.resize(3, 7);
        CHECK_CSR_ERROR(ds.validate(), ErrorCode::DimensionMismatch);
    }
    SUBCASE("non-finite values") {
        ds.blocks[0].vectors(0, 0) = std::nanf("");
        CHECK_CSR_ERROR(ds.validate(), ErrorCode::NonFinite);
    }
    SUBCASE("pre_rope is key-only") {
        ds.header.kind = CaptureKind::Value;
        ds.header.pre_rope = true;
        CHECK_CSR_ERROR(ds.header.validate(), ErrorCode::FormatError);
    }
}

TEST_CASE("read rejects corrupted streams") {
    std::vector<uint8_t> bytes = write_capture(small_dataset());

    SUBCASE("bad magic") {
        bytes[0] = 'X';
        CHECK_CSR_ERROR(read_capture(bytes), ErrorCode::BadMagic);
    }
    SUBCASE("short stream") {
        std::vector<uint8_t> stub(bytes.begin(), bytes.begin() + 2);
        CHECK_CSR_ERROR(read_capture(stub), ErrorCode::BadMagic);
    }
    SUBCASE("future version") {
        bytes[4] = 99;
        CHECK_CSR_ERROR(read_capture(bytes), ErrorCode::UnsupportedVersion);
    }
    SUBCASE("truncated block data") {
        std::vector<uint8_t> cut(bytes.begin(), bytes.end() - 5);
        CHECK_CSR_ERROR(read_capture(cut), ErrorCode::Truncated);
    }
}

TEST_CASE("f16 dtype narrows values on write") {
    CaptureDataset ds = small_dataset(1, 1, 4, 3);
    ds.header.dtype = Dtype::F16;
    ds.blocks[0].vectors(0, 0) = 1.0f / 3.0f; // not representable in binary16
    std::vector<uint8_t> bytes = write_capture(ds);
    CaptureDataset back = read_capture(bytes);
    CHECK(back.blocks[0].vectors(0, 0) == quantize_f16(1.0f / 3.0f));
    CHECK(back.blocks[0].vectors(0, 0) != ds.blocks[0].vectors(0, 0));
    // already-quantized data survives a second pass untouched
    CHECK(write_capture(back) == bytes);
}

TEST_CASE("sample_vectors concatenates in layer order and is deterministic") {
    CaptureDataset ds = small_dataset(3, 1, 4, 5);
    std::vector<int> layer_set = {0, 2};

    Eigen::MatrixXf all = sample_vectors(ds, layer_set, 0, 1000, 7);
    REQUIRE(all.rows() == 10);
    CHECK(all.topRows(5) == ds.block(0, 0).vectors);
    CHECK(all.bottomRows(5) == ds.block(2, 0).vectors);

    Eigen::MatrixXf a = sample_vectors(ds, layer_set, 0, 6, 7);
    Eigen::MatrixXf b = sample_vectors(ds, layer_set, 0, 6, 7);
    REQUIRE(a.rows() == 6);
    CHECK(a == b);

    // sampled rows keep concatenation order: each row appears at or after the
    // previous row's source position
    int cursor = -1;
    for (int r = 0; r < a.rows(); ++r) {
        int found = -1;
        for (int s = cursor + 1; s < all.rows(); ++s)
            if (all.row(s) == a.row(r)) {
                found = s;
                break;
            }
        REQUIRE(found > cursor);
        cursor = found;
    }

    Eigen::MatrixXf c = sample_vectors(ds, layer_set, 0, 6, 8);
    CHECK(a != c); // different seed, different sample (overwhelmingly likely)
}

} // TEST_SUITE
