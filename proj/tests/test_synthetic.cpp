// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Dense>

#include "core/synthetic.hpp"
#include "helpers.hpp"

using namespace csr;

TEST_SUITE("synthetic") {

TEST_CASE("generation is deterministic in the seed") {
    SyntheticSpec spec;
    spec.num_layers = 2;
    spec.num_heads = 2;
    spec.head_dim = 8;
    spec.tokens_per_layer = 64;
    spec.seed = 77;

    CaptureDataset a = generate_synthetic(spec);
    CaptureDataset b = generate_synthetic(spec);
    CHECK(write_capture(a) == write_capture(b));

    spec.seed = 78;
    CaptureDataset c = generate_synthetic(spec);
    CHECK(write_capture(a) != write_capture(c));
}

TEST_CASE("noiseless planted rows lie in the span of an atom pair") {
    SyntheticSpec spec;
    spec.head_dim = 8;
    spec.num_atoms = 12;
    spec.sparsity = 2;
    spec.noise_sigma = 0.0;
    spec.tokens_per_layer = 32;
    spec.seed = 3;

    CaptureDataset ds = generate_synthetic(spec);
    Eigen::MatrixXd atoms = planted_atoms(spec, 0, 0).cast<double>();
    REQUIRE(atoms.rows() == 8);
    REQUIRE(atoms.cols() == 12);
    for (int j = 0; j < atoms.cols(); ++j)
        CHECK(std::abs(atoms.col(j).norm() - 1.0) < 1e-6);

    const Eigen::MatrixXf& X = ds.block(0, 0).vectors;
    double worst = 0.0;
    for (int r = 0; r < X.rows(); ++r) {
        Eigen::VectorXd x = X.row(r).transpose().cast<double>();
        double best = x.norm();
        for (int i = 0; i < atoms.cols(); ++i)
            for (int j = i + 1; j < atoms.cols(); ++j) {
                Eigen::MatrixXd pair(8, 2);
                pair.col(0) = atoms.col(i);
                pair.col(1) = atoms.col(j);
                Eigen::VectorXd c = pair.colPivHouseholderQr().solve(x);
                best = std::min(best, (x - pair * c).norm());
            }
        worst = std::max(worst, best);
    }
    // every row was built from exactly two of the returned atoms, so some
    // pair reconstructs it to f32 round-off
    CHECK(worst < 1e-5);
}

TEST_CASE("zero drift repeats the same block distribution across layers") {
    SyntheticSpec spec;
    spec.generator = GeneratorType::LayerDrift;
    spec.num_layers = 3;
    spec.head_dim = 8;
    spec.tokens_per_layer = 512;
    spec.drift_rate = 0.0;
    spec.seed = 9;

    CaptureDataset ds = generate_synthetic(spec);
    Eigen::VectorXf m0 = ds.block(0, 0).vectors.colwise().mean();
    Eigen::VectorXf m2 = ds.block(2, 0).vectors.colwise().mean();
    // same distribution, independent draws: means agree loosely
    CHECK((m0 - m2).norm() < 0.5);

    spec.drift_rate = 1.0;
    spec.num_layers = 2;
    CaptureDataset drifted = generate_synthetic(spec);
    Eigen::VectorXf d0 = drifted.block(0, 0).vectors.colwise().mean();
    Eigen::VectorXf d1 = drifted.block(1, 0).vectors.colwise().mean();
    // last layer is rotated a quarter turn in the drift plane, so the means
    // separate clearly
    CHECK((d0 - d1).norm() > 0.5);
}

TEST_CASE("value captures are post-rope by construction") {
    SyntheticSpec spec;
    spec.kind = CaptureKind::Value;
    spec.pre_rope = false;
    CaptureDataset ds = generate_synthetic(spec);
    CHECK(ds.header.kind == CaptureKind::Value);
    CHECK(ds.header.pre_rope == false);
    ds.validate();
}

TEST_CASE("spec json round trips including generator fields") {
    SyntheticSpec spec;
    spec.generator = GeneratorType::GaussianMixture;
    spec.num_components = 7;
    spec.spread = 0.5;
    spec.num_layers = 4;
    spec.seed = 123;

    SyntheticSpec back = SyntheticSpec::from_json(spec.to_json());
    CHECK(back.to_json() == spec.to_json());
    CHECK(back.num_components == 7);
    CHECK(back.spread == 0.5);

    json minimal = {{"generator", {{"type", "planted_dictionary"}}}};
    SyntheticSpec defaults = SyntheticSpec::from_json(minimal);
    CHECK(defaults.num_layers == 1); // missing keys fall back to defaults
}

TEST_CASE("invalid counts are named in the error") {
    SyntheticSpec spec;
    spec.num_layers = 0;
    try {
        spec.validate();
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ConfigError);
        CHECK(std::string(e.what()).find("num_layers") != std::string::npos);
    }
}

} // TEST_SUITE
