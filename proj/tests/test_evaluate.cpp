// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "core/evaluate.hpp"
#include "core/synthetic.hpp"
#include "helpers.hpp"

using namespace csr;

namespace {

Dictionary identity_dict(int dim) {
    return Dictionary(Eigen::MatrixXf::Identity(dim, dim), CaptureKind::Key, Provenance::Offline);
}

} // namespace

TEST_SUITE("evaluate") {

TEST_CASE("cosine similarity conventions") {
    Eigen::VectorXf a(2), b(2), z(2);
    a << 1.0f, 0.0f;
    b << 0.0f, 1.0f;
    z.setZero();
    CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_similarity(a, b) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_similarity(a, -a) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(cosine_similarity(z, z) == 1.0);
    CHECK(cosine_similarity(a, z) == 0.0);
}

TEST_CASE("perfect codes give zero error and unit cosine") {
    Dictionary d = identity_dict(4);
    DictSet dicts = {&d};
    CodecConfig cfg;
    cfg.s = 4;
    cfg.s_n = 1;
    cfg.head_dim = 4;

    Eigen::MatrixXf X(3, 4);
    X << 1, 2, 3, 4, //
        -1, 0, 1, 0, //
        0, 0, 0, 0;
    std::vector<SparseCode> codes = encode_batch(X, dicts, cfg);
    ReconstructionMetrics m = reconstruction_metrics(X, codes, dicts, cfg);
    CHECK(m.mse == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m.mean_cosine == doctest::Approx(1.0).epsilon(1e-9)); // zero row counts as 1
    CHECK(m.outlier_fraction == 0.0);
}

TEST_CASE("an all-outlier lane reports mse zero and full outlier fraction") {
    Dictionary d = identity_dict(2);
    DictSet dicts = {&d};
    CodecConfig cfg;
    cfg.s = 1;
    cfg.s_n = 1;
    cfg.head_dim = 2;
    cfg.outlier_threshold = 0.0;

    Eigen::MatrixXf X(2, 2);
    X << 1, 1, //
        2, -1; // both rows need two atoms, so both overflow the budget
    std::vector<SparseCode> codes = encode_batch(X, dicts, cfg);
    REQUIRE(codes[0].is_outlier);
    REQUIRE(codes[1].is_outlier);
    ReconstructionMetrics m = reconstruction_metrics(X, codes, dicts, cfg);
    CHECK(m.mse == 0.0);
    CHECK(m.mean_cosine == 1.0);
    CHECK(m.outlier_fraction == 1.0);
}

TEST_CASE("reconstruction mse matches the worked pursuit example") {
    Eigen::MatrixXf atoms(2, 2);
    atoms << 1.0f, 0.6f, //
        0.0f, 0.8f;
    Dictionary d(atoms, CaptureKind::Key, Provenance::Offline);
    DictSet dicts = {&d};
    CodecConfig cfg;
    cfg.s = 2;
    cfg.s_n = 1;
    cfg.head_dim = 2;

    Eigen::MatrixXf X(1, 2);
    X << 1.0f, 1.0f;
    std::vector<SparseCode> codes = encode_batch(X, dicts, cfg);
    ReconstructionMetrics m = reconstruction_metrics(X, codes, dicts, cfg);
    CHECK(m.mse == doctest::Approx(0.0144).epsilon(1e-6));
    CHECK(m.outlier_fraction == 0.0);
}

TEST_CASE("reference attention basics") {
    Eigen::MatrixXf K(3, 2), V(3, 2), Q(3, 2);
    K << 1, 0, 0, 1, 1, 1;
    V << 1, 0, 0, 1, 0.5, 0.5;
    Q = K;

    SUBCASE("rows are convex combinations of values") {
        Eigen::MatrixXf O = reference_attention(Q, K, V, false);
        REQUIRE(O.rows() == 3);
        for (int r = 0; r < 3; ++r) {
            CHECK(O(r, 0) >= 0.0f);
            CHECK(O(r, 0) + O(r, 1) == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
    SUBCASE("causal first row sees only the first value") {
        Eigen::MatrixXf O = reference_attention(Q, K, V, true);
        CHECK(O(0, 0) == doctest::Approx(1.0).epsilon(1e-7));
        CHECK(O(0, 1) == doctest::Approx(0.0).epsilon(1e-7));
    }
    SUBCASE("causal with more keys than queries offsets the window") {
        Eigen::MatrixXf O = reference_attention(Q.topRows(1), K, V, true);
        // one query, three keys: the window for query 0 covers keys [0, 2]
        Eigen::MatrixXf full = reference_attention(Q, K, V, false);
        CHECK((O.row(0) - full.row(0)).norm() < 1e-7f);
    }
    SUBCASE("more queries than keys is rejected in causal mode") {
        CHECK_CSR_ERROR(reference_attention(Q, K.topRows(1), V.topRows(1), true),
                        ErrorCode::InvalidArgument);
    }
    SUBCASE("softmax survives large logits") {
        Eigen::MatrixXf O = reference_attention(Q * 1000.0f, K * 1000.0f, V, false);
        CHECK(O.allFinite());
    }
}

TEST_CASE("lossless codes make the attention proxy exact") {
    const int d = 8;
    Eigen::MatrixXf basis = testutil::random_orthonormal(d, 3);
    Dictionary dict(basis, CaptureKind::Key, Provenance::Offline);
    DictSet dicts = {&dict};
    CodecConfig cfg;
    cfg.s = d; // complete basis, full sparsity: exact reconstruction
    cfg.s_n = 1;
    cfg.head_dim = d;

    Eigen::MatrixXf K(6, d), V(6, d), Q(6, d);
    Rng rng(17);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < d; ++c) {
            K(r, c) = float(rng.normal());
            V(r, c) = float(rng.normal());
            Q(r, c) = float(rng.normal());
        }

    AttentionFidelity f = attention_fidelity(K, V, Q, cfg, dicts, false);
    CHECK(f.max_abs_error < 1e-6);
    CHECK(f.mean_cosine > 1.0 - 1e-9);
}

TEST_CASE("zero values still count as perfect agreement") {
    const int d = 4;
    Dictionary dict = identity_dict(d);
    DictSet dicts = {&dict};
    CodecConfig cfg;
    cfg.s = d;
    cfg.s_n = 1;
    cfg.head_dim = d;

    Eigen::MatrixXf K = Eigen::MatrixXf::Identity(4, d);
    Eigen::MatrixXf V = Eigen::MatrixXf::Zero(4, d);
    AttentionFidelity f = attention_fidelity(K, V, K, cfg, dicts, false);
    CHECK(f.mean_cosine == 1.0); // zero output rows compare as equal
    CHECK(f.max_abs_error == 0.0);
}

TEST_CASE("sweep orders points by s and emits the exact csv header") {
    SyntheticSpec spec;
    spec.num_layers = 1;
    spec.num_heads = 1;
    spec.head_dim = 8;
    spec.tokens_per_layer = 48;
    spec.num_atoms = 10;
    spec.sparsity = 2;
    spec.noise_sigma = 0.05;
    spec.seed = 3;
    CaptureDataset ds = generate_synthetic(spec);

    MergePlan plan;
    plan.groups = {{0}};
    plan.kind = CaptureKind::Key;
    TrainConfig tc;
    tc.num_atoms = 8;
    tc.s_train = 2;
    tc.epochs = 1;
    tc.batch_size = 48;
    tc.kmeans_iters = 5;
    tc.seed = 5;
    DictStore store = train_on_merged_layers(ds, plan, tc, 8).store;

    CodecConfig tmpl;
    tmpl.s_n = 1;
    tmpl.head_dim = 8;

    FidelityReport rep = sweep_s(ds, store, {4, 1, 2}, tmpl, true);
    REQUIRE(rep.points.size() == 3);
    CHECK(rep.points[0].s == 1);
    CHECK(rep.points[1].s == 2);
    CHECK(rep.points[2].s == 4);
    CHECK(rep.points[0].bits_per_channel == doctest::Approx(4.0));
    // more atoms per token cannot reconstruct worse
    CHECK(rep.points[2].recon.mse <= rep.points[0].recon.mse + 1e-9);

    std::string csv = rep.to_csv();
    std::istringstream lines(csv);
    std::string header;
    std::getline(lines, header);
    CHECK(header ==
          "schema_version,s,bits_per_channel,mse,mean_cosine,outlier_fraction,"
          "attention_cosine,attention_max_abs_error");
    int rows = 0;
    std::string row;
    while (std::getline(lines, row)) {
        if (row.empty()) continue;
        ++rows;
        CHECK(row.substr(0, 2) == "1,"); // schema version leads every row
    }
    CHECK(rows == 3);

    json j = rep.to_json();
    CHECK(j["schema_version"] == 1);
    CHECK(j["points"].size() == 3);
    CHECK(j["points"][0].contains("attention"));

    FidelityReport no_att = sweep_s(ds, store, {2}, tmpl, false);
    std::string csv2 = no_att.to_csv();
    std::istringstream lines2(csv2);
    std::getline(lines2, row); // header
    std::getline(lines2, row);
    // the two attention cells are left empty
    CHECK(row.substr(row.size() - 2) == ",,");
    CHECK(!no_att.to_json()["points"][0].contains("attention"));
}

TEST_CASE("sweep rejects mismatched inputs") {
    SyntheticSpec spec;
    spec.num_layers = 1;
    spec.head_dim = 8;
    spec.tokens_per_layer = 32;
    spec.seed = 3;
    CaptureDataset ds = generate_synthetic(spec);

    MergePlan plan;
    plan.groups = {{0}};
    plan.kind = CaptureKind::Key;
    TrainConfig tc;
    tc.num_atoms = 4;
    tc.s_train = 1;
    tc.epochs = 0;
    tc.seed = 5;
    DictStore store = train_on_merged_layers(ds, plan, tc, 4).store;

    CodecConfig tmpl;
    tmpl.s_n = 1;
    tmpl.head_dim = 8;

    CHECK_CSR_ERROR(sweep_s(ds, store, {}, tmpl, false), ErrorCode::InvalidArgument);

    SyntheticSpec other = spec;
    other.head_dim = 16;
    CaptureDataset wrong = generate_synthetic(other);
    CHECK_CSR_ERROR(sweep_s(wrong, store, {1}, tmpl, false), ErrorCode::SchemaMismatch);
}

TEST_CASE("footprint curve hand arithmetic") {
    FootprintSpec spec; // defaults: L=32, h=32, d_h=128, s=8, s_n=1, b=1
    spec.online_atoms_per_head = 256;

    FootprintCurve curve = footprint_curve({0, 1024, 2048, 4096}, spec);
    REQUIRE(curve.samples.size() == 4);

    const FootprintSample& zero = curve.samples[0];
    CHECK(zero.seq_len == 0);
    CHECK(zero.fp16_bytes == 0);
    CHECK(zero.csr_code_bytes == 0);
    CHECK(zero.csr_online_bytes == 2LL * 256 * 128 * 32); // constant in len
    CHECK(zero.csr_total_bytes == zero.csr_online_bytes);

    const FootprintSample& s1 = curve.samples[1];
    const FootprintSample& s2 = curve.samples[2];
    CHECK(s1.fp16_bytes == 2LL * 128 * 32 * 32 * 1024);
    CHECK(s1.csr_code_bytes == 4LL * 8 * 1 * 32 * 32 * 1024);
    CHECK(s2.fp16_bytes == 2 * s1.fp16_bytes);     // linear in len
    CHECK(s2.csr_code_bytes == 2 * s1.csr_code_bytes);
    CHECK(s2.csr_online_bytes == s1.csr_online_bytes);

    REQUIRE(s1.quant_bytes.size() == 3); // 2, 4, 8 bit rows
    CHECK(s1.quant_bytes[0] == 2LL * 128 * 32 * 32 * 1024 / 8);
    CHECK(s1.quant_bytes[2] == 4 * s1.quant_bytes[0]);

    const FootprintSample& s4 = curve.samples[3];
    double ratio = double(s4.fp16_bytes) / double(s4.csr_total_bytes);
    CHECK(ratio > 7.0);

    std::string csv = curve.to_csv();
    CHECK(csv.rfind("schema_version,seq_len,fp16_bytes", 0) == 0);
    CHECK(curve.to_json()["schema_version"] == 1);
}

TEST_CASE("footprint validation") {
    FootprintSpec spec;
    spec.quant_bits = {3}; // 3 * 128 / 8 is fine; 3 * 100 would not be
    spec.head_dim = 100;
    CHECK_CSR_ERROR(spec.validate(), ErrorCode::ConfigError);
    spec.head_dim = 128;
    spec.validate();
    spec.num_layers = 0;
    CHECK_CSR_ERROR(spec.validate(), ErrorCode::ConfigError);
    spec.num_layers = 32;
    CHECK_CSR_ERROR(footprint_curve({-1}, spec), ErrorCode::InvalidArgument);
}

} // TEST_SUITE
