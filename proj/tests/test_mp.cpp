// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "core/half.hpp"
#include "core/mp.hpp"
#include "helpers.hpp"

using namespace csr;

namespace {

Eigen::MatrixXd two_atoms() {
    Eigen::MatrixXd atoms(2, 2);
    atoms << 1.0, 0.6, //
        0.0, 0.8;
    return atoms;
}

Dictionary make_dict(const Eigen::MatrixXd& atoms) {
    return Dictionary(atoms.cast<float>(), CaptureKind::Key, Provenance::Offline);
}

} // namespace

TEST_SUITE("mp") {

TEST_CASE("worked two-atom example") {
    Eigen::VectorXd x(2);
    x << 1.0, 1.0;
    ChunkEncodeResult r = mp_encode_chunk(x, two_atoms(), 2);

    // iteration 1: correlations (1.0, 1.4) -> atom 1, coefficient 1.4
    // iteration 2: residual (0.16, -0.12), correlations (0.16, 0.0) -> atom 0
    REQUIRE(r.entries.size() == 2);
    CHECK(r.entries[0].index == 1);
    CHECK(r.entries[0].coeff == doctest::Approx(1.4).epsilon(1e-12));
    CHECK(r.entries[1].index == 0);
    CHECK(r.entries[1].coeff == doctest::Approx(0.16).epsilon(1e-12));

    REQUIRE(r.residual_norms.size() == 2);
    CHECK(r.residual_norms[0] == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(r.residual_norms[1] == doctest::Approx(0.12).epsilon(1e-9));
    CHECK(r.residual[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.residual[1] == doctest::Approx(-0.12).epsilon(1e-9));
}

TEST_CASE("worked example through the f32 codec path") {
    Dictionary dict = make_dict(two_atoms());
    DictSet dicts = {&dict};
    CodecConfig cfg;
    cfg.s = 2;
    cfg.s_n = 1;
    cfg.head_dim = 2;

    Eigen::VectorXf x(2);
    x << 1.0f, 1.0f;
    SparseCode code = encode_vector(x, dicts, cfg);
    REQUIRE(!code.is_outlier);
    REQUIRE(code.chunks.size() == 1);
    REQUIRE(code.chunks[0].size() == 2);
    CHECK(code.chunks[0][0].index == 1);
    CHECK(code.chunks[0][0].coeff == doctest::Approx(1.4f).epsilon(1e-6));
    CHECK(code.chunks[0][1].index == 0);
    CHECK(code.chunks[0][1].coeff == doctest::Approx(0.16f).epsilon(1e-4));

    Eigen::VectorXf xhat = desparse(code, dicts, cfg);
    CHECK(xhat[0] == doctest::Approx(1.0f).epsilon(1e-6));
    CHECK(xhat[1] == doctest::Approx(1.12f).epsilon(1e-6));
}

TEST_CASE("ties go to the lowest index") {
    Eigen::MatrixXd atoms(2, 3);
    atoms << 0.0, 1.0, 1.0, //
        1.0, 0.0, 0.0;
    Eigen::VectorXd x(2);
    x << 1.0, 0.0; // atoms 1 and 2 tie exactly
    ChunkEncodeResult r = mp_encode_chunk(x, atoms, 1);
    REQUIRE(r.entries.size() == 1);
    CHECK(r.entries[0].index == 1);
}

TEST_CASE("zero vector encodes to nothing") {
    ChunkEncodeResult r = mp_encode_chunk(Eigen::VectorXd::Zero(2), two_atoms(), 2);
    CHECK(r.entries.empty());
    CHECK(r.residual_norm() == 0.0);
}

TEST_CASE("re-selection accumulates into one entry") {
    // two atoms 45 degrees apart: pursuit revisits the first atom
    Eigen::MatrixXd atoms(2, 2);
    double s2 = std::sqrt(0.5);
    atoms << 1.0, s2, //
        0.0, s2;
    Eigen::VectorXd x(2);
    x << 1.0, 0.3;
    ChunkEncodeResult r = mp_encode_chunk(x, atoms, 4);
    CHECK(r.entries.size() <= 2); // 4 iterations, at most 2 distinct atoms

    auto naive = testutil::naive_mp({1.0, 0.3}, {{1.0, 0.0}, {s2, s2}}, 4);
    CHECK(int(naive.steps.size()) == 4);
    CHECK(naive.entries.size() == r.entries.size());
    for (size_t i = 0; i < r.entries.size(); ++i) {
        CHECK(r.entries[i].index == naive.entries[i].first);
        CHECK(r.entries[i].coeff == doctest::Approx(naive.entries[i].second).epsilon(1e-12));
    }
}

TEST_CASE("residual norm never increases with iteration count") {
    Eigen::MatrixXd atoms(4, 6);
    uint64_t st = 99;
    for (int c = 0; c < 6; ++c) {
        for (int r = 0; r < 4; ++r) {
            st = st * 6364136223846793005ull + 1442695040888963407ull;
            atoms(r, c) = double(int64_t(st >> 33)) / double(1ll << 31) - 0.5;
        }
        atoms.col(c).normalize();
    }
    Eigen::VectorXd x(4);
    x << 0.3, -1.2, 0.8, 0.05;
    ChunkEncodeResult r = mp_encode_chunk(x, atoms, 8);
    double prev = x.norm();
    for (double n : r.residual_norms) {
        CHECK(n <= prev + 1e-12);
        prev = n;
    }
}

TEST_CASE("equivalent bits per channel") {
    CodecConfig cfg;
    cfg.head_dim = 128;
    cfg.s = 4;
    cfg.s_n = 1;
    CHECK(equivalent_bits(cfg) == 1.0);
    cfg.s = 8;
    CHECK(equivalent_bits(cfg) == 2.0);
    cfg.s = 16;
    CHECK(equivalent_bits(cfg) == 4.0);
    cfg.s = 8;
    cfg.s_n = 2;
    CHECK(equivalent_bits(cfg) == 4.0);
}

TEST_CASE("outlier threshold zero keeps the raw vector") {
    Dictionary dict = make_dict(two_atoms());
    DictSet dicts = {&dict};
    CodecConfig cfg;
    cfg.s = 1;
    cfg.s_n = 1;
    cfg.head_dim = 2;
    cfg.outlier_threshold = 0.0; // any nonzero residual trips the fallback

    Eigen::VectorXf x(2);
    x << 1.0f, 1.0f;
    SparseCode code = encode_vector(x, dicts, cfg);
    REQUIRE(code.is_outlier);
    REQUIRE(code.raw.size() == 2);
    CHECK(code.raw == x);
    Eigen::VectorXf xhat = desparse(code, dicts, cfg);
    CHECK(xhat == x);

    // an exactly representable vector stays encoded
    Eigen::VectorXf y(2);
    y << 2.0f, 0.0f;
    SparseCode code2 = encode_vector(y, dicts, cfg);
    CHECK(!code2.is_outlier);
}

TEST_CASE("chunked encode splits channels across dictionaries") {
    Eigen::MatrixXd a0(2, 2), a1(2, 2);
    a0 << 1.0, 0.0, 0.0, 1.0;
    a1 << 0.0, 1.0, 1.0, 0.0;
    Dictionary d0 = make_dict(a0), d1 = make_dict(a1);
    DictSet dicts = {&d0, &d1};
    CodecConfig cfg;
    cfg.s = 2;
    cfg.s_n = 2;
    cfg.head_dim = 4;

    Eigen::VectorXf x(4);
    x << 3.0f, -1.0f, 0.5f, 2.0f;
    SparseCode code = encode_vector(x, dicts, cfg);
    REQUIRE(code.chunks.size() == 2);
    Eigen::VectorXf xhat = desparse(code, dicts, cfg);
    CHECK((xhat - x).norm() < 1e-6f); // orthonormal per-chunk atoms, exact
    validate_code(code, dicts, cfg);
}

TEST_CASE("serialize rounds coefficients to f16 and round trips") {
    Dictionary dict = make_dict(two_atoms());
    DictSet dicts = {&dict};
    CodecConfig cfg;
    cfg.s = 2;
    cfg.s_n = 1;
    cfg.head_dim = 2;

    Eigen::VectorXf x(2);
    x << 1.0f, 1.0f;
    SparseCode code = encode_vector(x, dicts, cfg);
    quantize_code_f16(code);
    CHECK(code.chunks[0][0].coeff == quantize_f16(1.4f));

    ByteWriter w;
    serialize_code(w, code, cfg);
    std::vector<uint8_t> bytes = w.take();
    ByteReader r(bytes);
    SparseCode back = deserialize_code(r, cfg);
    CHECK(r.at_end());
    REQUIRE(back.chunks.size() == 1);
    REQUIRE(back.chunks[0].size() == 2);
    CHECK(back.chunks[0][0].index == code.chunks[0][0].index);
    CHECK(back.chunks[0][0].coeff == code.chunks[0][0].coeff);
    CHECK(back.chunks[0][1].coeff == code.chunks[0][1].coeff);

    // serializing the deserialized code is byte identical
    ByteWriter w2;
    serialize_code(w2, back, cfg);
    CHECK(w2.take() == bytes);
}

TEST_CASE("outlier serialization carries f16 raw values") {
    Dictionary dict = make_dict(two_atoms());
    DictSet dicts = {&dict};
    CodecConfig cfg;
    cfg.s = 1;
    cfg.s_n = 1;
    cfg.head_dim = 2;
    cfg.outlier_threshold = 0.0;

    Eigen::VectorXf x(2);
    x << 0.1f, 0.7f;
    SparseCode code = encode_vector(x, dicts, cfg);
    REQUIRE(code.is_outlier);
    quantize_code_f16(code);

    ByteWriter w;
    serialize_code(w, code, cfg);
    std::vector<uint8_t> bytes = w.take();
    ByteReader r(bytes);
    SparseCode back = deserialize_code(r, cfg);
    REQUIRE(back.is_outlier);
    CHECK(back.raw[0] == quantize_f16(0.1f));
    CHECK(back.raw[1] == quantize_f16(0.7f));
}

TEST_CASE("deserialize rejects malformed codes") {
    Dictionary dict = make_dict(two_atoms());
    DictSet dicts = {&dict};
    CodecConfig cfg;
    cfg.s = 2;
    cfg.s_n = 1;
    cfg.head_dim = 2;

    SUBCASE("entry count above s") {
        ByteWriter w;
        w.put_u8(0);  // flags
        w.put_u8(3);  // count > s
        for (int i = 0; i < 3; ++i) {
            w.put_u16(0);
            w.put_u16(0x3c00);
        }
        std::vector<uint8_t> bytes = w.take();
        ByteReader r(bytes);
        CHECK_CSR_ERROR(deserialize_code(r, cfg), ErrorCode::FormatError);
    }
    SUBCASE("truncated payload") {
        ByteWriter w;
        w.put_u8(0);
        w.put_u8(2);
        w.put_u16(0);
        std::vector<uint8_t> bytes = w.take();
        ByteReader r(bytes);
        CHECK_CSR_ERROR(deserialize_code(r, cfg), ErrorCode::Truncated);
    }
    SUBCASE("index beyond dictionary") {
        ByteWriter w;
        w.put_u8(0);
        w.put_u8(1);
        w.put_u16(7); // dictionary has 2 atoms
        w.put_u16(0x3c00);
        std::vector<uint8_t> bytes = w.take();
        ByteReader r(bytes);
        SparseCode code = deserialize_code(r, cfg); // wire layer cannot know dict size
        CHECK_CSR_ERROR(validate_code(code, dicts, cfg), ErrorCode::IndexOutOfRange);
    }
}

TEST_CASE("config validation") {
    CodecConfig cfg;
    cfg.head_dim = 10;
    cfg.s_n = 3; // does not divide head_dim
    CHECK_CSR_ERROR(cfg.validate(), ErrorCode::ConfigError);
    cfg.s_n = 2;
    cfg.s = 0;
    CHECK_CSR_ERROR(cfg.validate(), ErrorCode::ConfigError);
    cfg.s = 2;
    cfg.outlier_threshold = -0.5;
    CHECK_CSR_ERROR(cfg.validate(), ErrorCode::ConfigError);
    cfg.outlier_threshold.reset();
    cfg.validate();

    CodecConfig back = CodecConfig::from_json(cfg.to_json());
    CHECK(back.s == cfg.s);
    CHECK(back.s_n == cfg.s_n);
    CHECK(back.head_dim == cfg.head_dim);
    CHECK(!back.outlier_threshold.has_value());
}

} // TEST_SUITE
