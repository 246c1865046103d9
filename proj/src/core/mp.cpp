// SPDX-License-Identifier: Apache-2.0

#include "core/mp.hpp"

#include <cmath>

#include "core/half.hpp"
#include "core/parallel.hpp"

namespace csr {

void CodecConfig::validate() const {
    CSR_REQUIRE(head_dim >= 1, ErrorCode::ConfigError, "head_dim must be positive");
    CSR_REQUIRE(s >= 1, ErrorCode::ConfigError, "s must be >= 1");
    CSR_REQUIRE(s_n >= 1, ErrorCode::ConfigError, "s_n must be >= 1");
    CSR_REQUIRE(head_dim % s_n == 0, ErrorCode::ConfigError,
                "head_dim must be divisible by s_n");
    if (outlier_threshold) {
        CSR_REQUIRE(*outlier_threshold >= 0.0 && *outlier_threshold <= 1.0,
                    ErrorCode::ConfigError, "outlier_threshold must be in [0, 1]");
    }
}

json CodecConfig::to_json() const {
    json j = {{"s", s}, {"s_n", s_n}, {"head_dim", head_dim}};
    j["outlier_threshold"] = outlier_threshold ? json(*outlier_threshold) : json(nullptr);
    return j;
}

CodecConfig CodecConfig::from_json(const json& j) {
    check_keys(j, "codec config", {"s", "s_n", "head_dim", "outlier_threshold"});
    CodecConfig cfg;
    cfg.s = json_get<int>(j, "s", "codec config");
    cfg.s_n = json_get<int>(j, "s_n", "codec config");
    cfg.head_dim = json_get<int>(j, "head_dim", "codec config");
    if (j.contains("outlier_threshold") && !j["outlier_threshold"].is_null()) {
        cfg.outlier_threshold = j["outlier_threshold"].get<double>();
    }
    cfg.validate();
    return cfg;
}

ChunkEncodeResult mp_encode_chunk(const Eigen::VectorXd& x, const Eigen::MatrixXd& atoms, int s) {
    CSR_REQUIRE(x.size() == atoms.rows(), ErrorCode::DimensionMismatch,
                "input dimension does not match atom dimension");
    CSR_REQUIRE(x.allFinite(), ErrorCode::NonFinite, "encode input holds non-finite values");
    CSR_REQUIRE(s >= 1, ErrorCode::InvalidArgument, "s must be >= 1");

    ChunkEncodeResult out;
    out.residual = x;
    out.residual_norms.reserve(size_t(s));

    const int n = int(atoms.cols());
    Eigen::VectorXd corr(n);
    for (int g = 0; g < s; ++g) {
        corr.noalias() = atoms.transpose() * out.residual;

        int best = 0;
        double best_abs = std::abs(corr[0]);
        for (int i = 1; i < n; ++i) {
            double a = std::abs(corr[i]);
            if (a > best_abs) {
                best_abs = a;
                best = i;
            }
        }
        // A vanished correlation means the residual is zero or orthogonal to
        // every atom; further iterations would only append zero coefficients.
        if (best_abs == 0.0) break;

        double c = corr[best];
        bool merged = false;
        for (auto& e : out.entries) {
            if (e.index == uint16_t(best)) {
                e.coeff += c;
                merged = true;
                break;
            }
        }
        if (!merged) out.entries.push_back({uint16_t(best), c});

        out.residual -= c * atoms.col(best);
        out.residual_norms.push_back(out.residual.norm());
    }
    return out;
}

ChunkEncodeResult mp_encode_chunk(const Eigen::VectorXf& x, const Dictionary& dict, int s) {
    return mp_encode_chunk(x.cast<double>().eval(), dict.atoms64(), s);
}

namespace {

void check_dicts(const DictSet& dicts, const CodecConfig& cfg) {
    cfg.validate();
    CSR_REQUIRE(int(dicts.size()) == cfg.s_n, ErrorCode::DimensionMismatch,
                "need one dictionary per chunk");
    for (const Dictionary* d : dicts) {
        CSR_REQUIRE(d != nullptr, ErrorCode::InvalidArgument, "null dictionary");
        CSR_REQUIRE(d->chunk_dim() == cfg.chunk_dim(), ErrorCode::DimensionMismatch,
                    "dictionary chunk_dim does not match config");
    }
}

} // namespace

SparseCode encode_vector(const Eigen::VectorXf& x, const DictSet& dicts, const CodecConfig& cfg) {
    check_dicts(dicts, cfg);
    CSR_REQUIRE(int(x.size()) == cfg.head_dim, ErrorCode::DimensionMismatch,
                "vector length does not match head_dim");

    const int cd = cfg.chunk_dim();
    Eigen::VectorXd xd = x.cast<double>();

    SparseCode code;
    code.chunks.resize(size_t(cfg.s_n));
    double residual_sq = 0.0;
    for (int i = 0; i < cfg.s_n; ++i) {
        ChunkEncodeResult r = mp_encode_chunk(xd.segment(i * cd, cd).eval(),
                                              dicts[size_t(i)]->atoms64(), cfg.s);
        residual_sq += r.residual.squaredNorm();
        auto& entries = code.chunks[size_t(i)];
        entries.reserve(r.entries.size());
        for (const MpEntry& e : r.entries) entries.push_back({e.index, float(e.coeff)});
    }

    if (cfg.outlier_threshold) {
        double rel = std::sqrt(residual_sq) / std::max(xd.norm(), 1e-12);
        if (rel > *cfg.outlier_threshold) {
            SparseCode outlier;
            outlier.is_outlier = true;
            outlier.raw = x;
            return outlier;
        }
    }
    return code;
}

Eigen::VectorXf desparse(const SparseCode& code, const DictSet& dicts, const CodecConfig& cfg) {
    check_dicts(dicts, cfg);
    if (code.is_outlier) {
        CSR_REQUIRE(int(code.raw.size()) == cfg.head_dim, ErrorCode::DimensionMismatch,
                    "outlier raw length does not match head_dim");
        return code.raw;
    }
    CSR_REQUIRE(int(code.chunks.size()) == cfg.s_n, ErrorCode::DimensionMismatch,
                "code chunk count does not match config");

    const int cd = cfg.chunk_dim();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(cfg.head_dim);
    for (int i = 0; i < cfg.s_n; ++i) {
        const Eigen::MatrixXd& atoms = dicts[size_t(i)]->atoms64();
        for (const CodeEntry& e : code.chunks[size_t(i)]) {
            CSR_REQUIRE(e.index < atoms.cols(), ErrorCode::IndexOutOfRange,
                        "code references atom " + std::to_string(e.index) +
                            " beyond dictionary size " + std::to_string(atoms.cols()));
            out.segment(i * cd, cd) += double(e.coeff) * atoms.col(e.index);
        }
    }
    return out.cast<float>();
}

std::vector<SparseCode> encode_batch(const Eigen::MatrixXf& X, const DictSet& dicts,
                                     const CodecConfig& cfg) {
    check_dicts(dicts, cfg);
    CSR_REQUIRE(int(X.cols()) == cfg.head_dim || X.rows() == 0, ErrorCode::DimensionMismatch,
                "batch width does not match head_dim");

    std::vector<SparseCode> codes(size_t(X.rows()));
    parallel_for(X.rows(), [&](int64_t i) {
        codes[size_t(i)] = encode_vector(X.row(i).transpose(), dicts, cfg);
    });
    return codes;
}

double equivalent_bits(const CodecConfig& cfg) {
    cfg.validate();
    return 32.0 * double(cfg.s) * double(cfg.s_n) / double(cfg.head_dim);
}

void validate_code(const SparseCode& code, const DictSet& dicts, const CodecConfig& cfg) {
    check_dicts(dicts, cfg);
    if (code.is_outlier) {
        CSR_REQUIRE(code.chunks.empty() ||
                        std::all_of(code.chunks.begin(), code.chunks.end(),
                                    [](const auto& c) { return c.empty(); }),
                    ErrorCode::FormatError, "outlier code must not carry entries");
        CSR_REQUIRE(int(code.raw.size()) == cfg.head_dim, ErrorCode::DimensionMismatch,
                    "outlier raw length does not match head_dim");
        CSR_REQUIRE(code.raw.allFinite(), ErrorCode::NonFinite, "outlier raw is non-finite");
        return;
    }
    CSR_REQUIRE(int(code.chunks.size()) == cfg.s_n, ErrorCode::FormatError,
                "code chunk count does not match config");
    for (int i = 0; i < cfg.s_n; ++i) {
        const auto& entries = code.chunks[size_t(i)];
        CSR_REQUIRE(int(entries.size()) <= cfg.s, ErrorCode::FormatError,
                    "chunk has more than s entries");
        for (size_t a = 0; a < entries.size(); ++a) {
            CSR_REQUIRE(entries[a].index < dicts[size_t(i)]->num_atoms(),
                        ErrorCode::IndexOutOfRange, "code index beyond dictionary size");
            CSR_REQUIRE(std::isfinite(entries[a].coeff), ErrorCode::NonFinite,
                        "non-finite coefficient");
            for (size_t b = a + 1; b < entries.size(); ++b) {
                CSR_REQUIRE(entries[a].index != entries[b].index, ErrorCode::FormatError,
                            "duplicate index within a chunk");
            }
        }
    }
}

void quantize_code_f16(SparseCode& code) {
    if (code.is_outlier) {
        for (Eigen::Index i = 0; i < code.raw.size(); ++i) code.raw[i] = quantize_f16(code.raw[i]);
        return;
    }
    for (auto& chunk : code.chunks) {
        for (auto& e : chunk) e.coeff = quantize_f16(e.coeff);
    }
}

void serialize_code(ByteWriter& w, const SparseCode& code, const CodecConfig& cfg) {
    w.put_u8(code.is_outlier ? 1 : 0);
    if (code.is_outlier) {
        CSR_REQUIRE(int(code.raw.size()) == cfg.head_dim, ErrorCode::DimensionMismatch,
                    "outlier raw length does not match head_dim");
        for (Eigen::Index i = 0; i < code.raw.size(); ++i) w.put_u16(f32_to_f16_bits(code.raw[i]));
        return;
    }
    CSR_REQUIRE(int(code.chunks.size()) == cfg.s_n, ErrorCode::FormatError,
                "code chunk count does not match config");
    for (const auto& chunk : code.chunks) {
        CSR_REQUIRE(int(chunk.size()) <= cfg.s && chunk.size() <= 255, ErrorCode::FormatError,
                    "chunk entry count exceeds budget");
        w.put_u8(uint8_t(chunk.size()));
        for (const CodeEntry& e : chunk) {
            w.put_u16(e.index);
            w.put_u16(f32_to_f16_bits(e.coeff));
        }
    }
}

SparseCode deserialize_code(ByteReader& r, const CodecConfig& cfg) {
    SparseCode code;
    uint8_t flags = r.get_u8();
    CSR_REQUIRE((flags & ~1u) == 0, ErrorCode::FormatError, "unknown code flags");
    code.is_outlier = flags & 1u;
    if (code.is_outlier) {
        code.raw.resize(cfg.head_dim);
        for (int i = 0; i < cfg.head_dim; ++i) code.raw[i] = f16_bits_to_f32(r.get_u16());
        return code;
    }
    code.chunks.resize(size_t(cfg.s_n));
    for (auto& chunk : code.chunks) {
        uint8_t count = r.get_u8();
        CSR_REQUIRE(int(count) <= cfg.s, ErrorCode::FormatError,
                    "serialized chunk has more than s entries");
        chunk.resize(count);
        for (auto& e : chunk) {
            e.index = r.get_u16();
            e.coeff = f16_bits_to_f32(r.get_u16());
        }
    }
    return code;
}

} // namespace csr
