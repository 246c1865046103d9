// SPDX-License-Identifier: Apache-2.0

#include "core/synthetic.hpp"

#include <cmath>

#include "core/rng.hpp"

namespace csr {

namespace {

const char* generator_name(GeneratorType g) {
    switch (g) {
        case GeneratorType::PlantedDictionary: return "planted_dictionary";
        case GeneratorType::GaussianMixture: return "gaussian_mixture";
        case GeneratorType::LayerDrift: return "layer_drift";
    }
    return "?";
}

GeneratorType parse_generator(const std::string& s) {
    if (s == "planted_dictionary") return GeneratorType::PlantedDictionary;
    if (s == "gaussian_mixture") return GeneratorType::GaussianMixture;
    if (s == "layer_drift") return GeneratorType::LayerDrift;
    throw Error(ErrorCode::ConfigError, "unknown generator \"" + s + "\"");
}

uint64_t block_seed(const SyntheticSpec& spec, int layer, int head) {
    return mix_seed(spec.seed, 0x73796e74686574ull, uint64_t(layer), uint64_t(head));
}

Eigen::MatrixXf planted_block(const SyntheticSpec& spec, int layer, int head) {
    Rng rng(block_seed(spec, layer, head));
    Eigen::MatrixXd atoms(spec.head_dim, spec.num_atoms);
    for (int a = 0; a < spec.num_atoms; ++a) atoms.col(a) = rng.unit_vector(spec.head_dim);

    Eigen::MatrixXf out(spec.tokens_per_layer, spec.head_dim);
    for (int64_t t = 0; t < spec.tokens_per_layer; ++t) {
        auto picks = rng.sample_without_replacement(spec.num_atoms, spec.sparsity);
        Eigen::VectorXd v = Eigen::VectorXd::Zero(spec.head_dim);
        for (int64_t a : picks) v += rng.uniform(0.5, 1.5) * atoms.col(a);
        if (spec.noise_sigma > 0) {
            for (int c = 0; c < spec.head_dim; ++c) v[c] += spec.noise_sigma * rng.normal();
        }
        out.row(t) = v.cast<float>();
    }
    return out;
}

Eigen::MatrixXf mixture_block(const SyntheticSpec& spec, int layer, int head) {
    Rng rng(block_seed(spec, layer, head));
    Eigen::MatrixXd centers(spec.head_dim, spec.num_components);
    for (int k = 0; k < spec.num_components; ++k) centers.col(k) = rng.normal_vector(spec.head_dim);

    Eigen::MatrixXf out(spec.tokens_per_layer, spec.head_dim);
    for (int64_t t = 0; t < spec.tokens_per_layer; ++t) {
        int k = int(rng.uniform_int(spec.num_components));
        Eigen::VectorXd v = centers.col(k);
        for (int c = 0; c < spec.head_dim; ++c) v[c] += spec.spread * rng.normal();
        out.row(t) = v.cast<float>();
    }
    return out;
}

// Two tight, well-separated mixture components in the (0, 1) channel plane,
// rotated in that plane by an angle growing linearly with the layer index.
// The component scales are tuned so that two independent 10k-sample draws of
// the same layer land comfortably under the merge module's grouping
// threshold on a 200x200 histogram: JSD sampling noise stays near 0.02 bits.
struct DriftMixture {
    double wa = 0.6;
    Eigen::Vector2d mean_a{1.6, 0.0}, std_a{0.07, 0.05};
    Eigen::Vector2d mean_b{-1.6, 0.8}, std_b{0.06, 0.07};
    double tail_std = 0.05;
};

Eigen::MatrixXf drift_block(const SyntheticSpec& spec, int layer, int head, int num_layers) {
    DriftMixture mix;
    double frac = num_layers > 1 ? double(layer) / double(num_layers - 1) : 0.0;
    double theta = spec.drift_rate * frac * (M_PI / 2.0);
    double ct = std::cos(theta), st = std::sin(theta);

    Rng rng(block_seed(spec, layer, head));
    Eigen::MatrixXf out(spec.tokens_per_layer, spec.head_dim);
    for (int64_t t = 0; t < spec.tokens_per_layer; ++t) {
        bool a = rng.uniform() < mix.wa;
        const Eigen::Vector2d& mean = a ? mix.mean_a : mix.mean_b;
        const Eigen::Vector2d& sd = a ? mix.std_a : mix.std_b;
        double x = mean[0] + sd[0] * rng.normal();
        double y = mean[1] + sd[1] * rng.normal();
        out(t, 0) = float(ct * x - st * y);
        out(t, 1) = float(st * x + ct * y);
        for (int c = 2; c < spec.head_dim; ++c) out(t, c) = float(mix.tail_std * rng.normal());
    }
    return out;
}

} // namespace

void SyntheticSpec::validate() const {
    CSR_REQUIRE(num_layers >= 1, ErrorCode::ConfigError, "num_layers must be positive");
    CSR_REQUIRE(num_heads >= 1, ErrorCode::ConfigError, "num_heads must be positive");
    CSR_REQUIRE(head_dim >= 1, ErrorCode::ConfigError, "head_dim must be positive");
    CSR_REQUIRE(tokens_per_layer >= 1, ErrorCode::ConfigError,
                "tokens_per_layer must be positive");
    switch (generator) {
        case GeneratorType::PlantedDictionary:
            CSR_REQUIRE(num_atoms >= 1, ErrorCode::ConfigError, "num_atoms must be positive");
            CSR_REQUIRE(sparsity >= 1 && sparsity <= num_atoms, ErrorCode::ConfigError,
                        "sparsity must be in [1, num_atoms]");
            CSR_REQUIRE(noise_sigma >= 0, ErrorCode::ConfigError, "noise_sigma must be >= 0");
            break;
        case GeneratorType::GaussianMixture:
            CSR_REQUIRE(num_components >= 1, ErrorCode::ConfigError,
                        "num_components must be positive");
            CSR_REQUIRE(spread >= 0, ErrorCode::ConfigError, "spread must be >= 0");
            break;
        case GeneratorType::LayerDrift:
            CSR_REQUIRE(drift_rate >= 0.0 && drift_rate <= 1.0, ErrorCode::ConfigError,
                        "drift_rate must be in [0, 1]");
            CSR_REQUIRE(head_dim >= 2, ErrorCode::ConfigError,
                        "layer_drift needs head_dim >= 2");
            break;
    }
    CaptureHeader h;
    h.num_layers = num_layers;
    h.num_heads = num_heads;
    h.head_dim = head_dim;
    h.kind = kind;
    h.pre_rope = pre_rope;
    h.validate();
}

json SyntheticSpec::to_json() const {
    json gen;
    gen["type"] = generator_name(generator);
    switch (generator) {
        case GeneratorType::PlantedDictionary:
            gen["num_atoms"] = num_atoms;
            gen["sparsity"] = sparsity;
            gen["noise_sigma"] = noise_sigma;
            break;
        case GeneratorType::GaussianMixture:
            gen["num_components"] = num_components;
            gen["spread"] = spread;
            break;
        case GeneratorType::LayerDrift:
            gen["drift_rate"] = drift_rate;
            break;
    }
    return json{
        {"num_layers", num_layers},   {"num_heads", num_heads},
        {"head_dim", head_dim},       {"tokens_per_layer", tokens_per_layer},
        {"seed", seed},               {"generator", gen},
        {"kind", kind_name(kind)},    {"pre_rope", pre_rope},
        {"dtype", dtype_name(dtype)}, {"model_name", model_name},
    };
}

SyntheticSpec SyntheticSpec::from_json(const json& j) {
    check_keys(j, "synthetic spec",
               {"num_layers", "num_heads", "head_dim", "tokens_per_layer", "seed", "generator",
                "kind", "pre_rope", "dtype", "model_name"});
    SyntheticSpec s;
    s.num_layers = json_get_or(j, "num_layers", s.num_layers, "synthetic spec");
    s.num_heads = json_get_or(j, "num_heads", s.num_heads, "synthetic spec");
    s.head_dim = json_get_or(j, "head_dim", s.head_dim, "synthetic spec");
    s.tokens_per_layer = json_get_or(j, "tokens_per_layer", s.tokens_per_layer, "synthetic spec");
    s.seed = json_get_or(j, "seed", s.seed, "synthetic spec");
    s.kind = parse_kind(json_get_or<std::string>(j, "kind", kind_name(s.kind), "synthetic spec"));
    s.pre_rope = json_get_or(j, "pre_rope", s.kind == CaptureKind::Key, "synthetic spec");
    s.dtype =
        parse_dtype(json_get_or<std::string>(j, "dtype", dtype_name(s.dtype), "synthetic spec"));
    s.model_name = json_get_or<std::string>(j, "model_name", s.model_name, "synthetic spec");

    if (j.contains("generator")) {
        const json& g = j["generator"];
        check_keys(g, "synthetic generator",
                   {"type", "num_atoms", "sparsity", "noise_sigma", "num_components", "spread",
                    "drift_rate"});
        s.generator = parse_generator(json_get<std::string>(g, "type", "synthetic generator"));
        s.num_atoms = json_get_or(g, "num_atoms", s.num_atoms, "synthetic generator");
        s.sparsity = json_get_or(g, "sparsity", s.sparsity, "synthetic generator");
        s.noise_sigma = json_get_or(g, "noise_sigma", s.noise_sigma, "synthetic generator");
        s.num_components = json_get_or(g, "num_components", s.num_components, "synthetic generator");
        s.spread = json_get_or(g, "spread", s.spread, "synthetic generator");
        s.drift_rate = json_get_or(g, "drift_rate", s.drift_rate, "synthetic generator");
    }
    s.validate();
    return s;
}

CaptureDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();

    CaptureDataset out;
    out.header.model_name = spec.model_name;
    out.header.num_layers = spec.num_layers;
    out.header.num_heads = spec.num_heads;
    out.header.head_dim = spec.head_dim;
    out.header.kind = spec.kind;
    out.header.pre_rope = spec.kind == CaptureKind::Key && spec.pre_rope;
    out.header.dtype = spec.dtype;

    out.blocks.reserve(size_t(spec.num_layers) * size_t(spec.num_heads));
    for (int layer = 0; layer < spec.num_layers; ++layer) {
        for (int head = 0; head < spec.num_heads; ++head) {
            CaptureBlock b;
            b.layer = layer;
            b.head = head;
            switch (spec.generator) {
                case GeneratorType::PlantedDictionary:
                    b.vectors = planted_block(spec, layer, head);
                    break;
                case GeneratorType::GaussianMixture:
                    b.vectors = mixture_block(spec, layer, head);
                    break;
                case GeneratorType::LayerDrift:
                    b.vectors = drift_block(spec, layer, head, spec.num_layers);
                    break;
            }
            out.blocks.push_back(std::move(b));
        }
    }
    return out;
}

Eigen::MatrixXf planted_atoms(const SyntheticSpec& spec, int layer, int head) {
    CSR_REQUIRE(spec.generator == GeneratorType::PlantedDictionary, ErrorCode::InvalidArgument,
                "planted_atoms applies to planted_dictionary specs");
    Rng rng(block_seed(spec, layer, head));
    Eigen::MatrixXf atoms(spec.head_dim, spec.num_atoms);
    for (int a = 0; a < spec.num_atoms; ++a) {
        atoms.col(a) = rng.unit_vector(spec.head_dim).cast<float>();
    }
    return atoms;
}

} // namespace csr
