// SPDX-License-Identifier: Apache-2.0

#include "core/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "core/parallel.hpp"
#include "core/rng.hpp"
#include "core/runtime.hpp"
#include "core/synthetic.hpp"
#include "core/train.hpp"

namespace csr {

namespace {

constexpr int kReportSchemaVersion = 1;

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

double cosine_similarity(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
    CSR_REQUIRE(a.size() == b.size(), ErrorCode::DimensionMismatch,
                "cosine of vectors with different sizes");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        double x = a[i], y = b[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    bool za = na <= 1e-30, zb = nb <= 1e-30;
    if (za || zb) return (za && zb) ? 1.0 : 0.0;
    return dot / std::sqrt(na * nb);
}

json ReconstructionMetrics::to_json() const {
    return json{{"mse", mse}, {"mean_cosine", mean_cosine}, {"outlier_fraction", outlier_fraction}};
}

ReconstructionMetrics reconstruction_metrics(const Eigen::MatrixXf& X,
                                             const std::vector<SparseCode>& codes,
                                             const DictSet& dicts, const CodecConfig& cfg) {
    CSR_REQUIRE(size_t(X.rows()) == codes.size(), ErrorCode::DimensionMismatch,
                "row count does not match the number of codes");
    ReconstructionMetrics m;
    if (X.rows() == 0) return m;

    double mse_sum = 0.0, cos_sum = 0.0;
    int64_t outliers = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        Eigen::VectorXf x = X.row(i).transpose();
        Eigen::VectorXf xhat = desparse(codes[size_t(i)], dicts, cfg);
        mse_sum += (x - xhat).cast<double>().squaredNorm();
        cos_sum += cosine_similarity(x, xhat);
        if (codes[size_t(i)].is_outlier) ++outliers;
    }
    m.mse = mse_sum / double(X.rows());
    m.mean_cosine = cos_sum / double(X.rows());
    m.outlier_fraction = double(outliers) / double(X.rows());
    return m;
}

Eigen::MatrixXf reference_attention(const Eigen::MatrixXf& Q, const Eigen::MatrixXf& K,
                                    const Eigen::MatrixXf& V, bool causal) {
    CSR_REQUIRE(Q.cols() == K.cols(), ErrorCode::DimensionMismatch,
                "query and key widths differ");
    CSR_REQUIRE(K.rows() == V.rows(), ErrorCode::DimensionMismatch,
                "key and value counts differ");
    CSR_REQUIRE(K.rows() > 0, ErrorCode::InvalidArgument, "attention over zero keys");
    if (causal) {
        CSR_REQUIRE(Q.rows() <= K.rows(), ErrorCode::InvalidArgument,
                    "causal attention needs at least as many keys as queries");
    }

    const float scale = 1.0f / std::sqrt(float(Q.cols()));
    Eigen::MatrixXf scores = (Q * K.transpose()) * scale;
    const Eigen::Index offset = K.rows() - Q.rows();

    Eigen::MatrixXf out(Q.rows(), V.cols());
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
        Eigen::Index last = causal ? i + offset : K.rows() - 1;
        float mx = scores.row(i).head(last + 1).maxCoeff();
        Eigen::RowVectorXf w = (scores.row(i).head(last + 1).array() - mx).exp();
        out.row(i) = (w / w.sum()) * V.topRows(last + 1);
    }
    return out;
}

json AttentionFidelity::to_json() const {
    return json{{"mean_cosine", mean_cosine}, {"max_abs_error", max_abs_error}};
}

AttentionFidelity attention_fidelity(const Eigen::MatrixXf& K, const Eigen::MatrixXf& V,
                                     const Eigen::MatrixXf& Q, const CodecConfig& cfg,
                                     const DictSet& dicts, bool causal) {
    CSR_REQUIRE(K.cols() == V.cols() && K.cols() == Q.cols(), ErrorCode::DimensionMismatch,
                "keys, values, and queries must share head_dim");
    CSR_REQUIRE(int(K.cols()) == cfg.head_dim, ErrorCode::DimensionMismatch,
                "attention width does not match the codec head_dim");

    auto decode_rows = [&](const Eigen::MatrixXf& M) {
        Eigen::MatrixXf out(M.rows(), M.cols());
        for (Eigen::Index i = 0; i < M.rows(); ++i) {
            SparseCode code = encode_vector(M.row(i).transpose(), dicts, cfg);
            out.row(i) = desparse(code, dicts, cfg).transpose();
        }
        return out;
    };

    Eigen::MatrixXf o_ref = reference_attention(Q, K, V, causal);
    Eigen::MatrixXf o_dec = reference_attention(Q, decode_rows(K), decode_rows(V), causal);

    AttentionFidelity f;
    double cos_sum = 0.0;
    for (Eigen::Index i = 0; i < o_ref.rows(); ++i) {
        cos_sum += cosine_similarity(o_ref.row(i).transpose(), o_dec.row(i).transpose());
    }
    f.mean_cosine = o_ref.rows() > 0 ? cos_sum / double(o_ref.rows()) : 1.0;
    f.max_abs_error = o_ref.rows() > 0 ? double((o_ref - o_dec).cwiseAbs().maxCoeff()) : 0.0;
    return f;
}

json LaneMetrics::to_json(bool with_attention) const {
    json j{{"layer", layer}, {"head", head}, {"reconstruction", recon.to_json()}};
    if (with_attention) j["attention"] = attention.to_json();
    return j;
}

json SweepPoint::to_json(bool with_attention) const {
    json ls = json::array();
    for (const LaneMetrics& lm : lanes) ls.push_back(lm.to_json(with_attention));
    json j{{"s", s},
           {"bits_per_channel", bits_per_channel},
           {"reconstruction", recon.to_json()},
           {"lanes", std::move(ls)}};
    if (with_attention) j["attention"] = attention.to_json();
    return j;
}

const char* const kSweepCsvHeader =
    "schema_version,s,bits_per_channel,mse,mean_cosine,outlier_fraction,"
    "attention_cosine,attention_max_abs_error";

json FidelityReport::to_json() const {
    json pts = json::array();
    for (const SweepPoint& p : points) pts.push_back(p.to_json(with_attention));
    return json{{"schema_version", kReportSchemaVersion},
                {"with_attention", with_attention},
                {"points", std::move(pts)}};
}

std::string FidelityReport::to_csv() const {
    std::string out = kSweepCsvHeader;
    out += '\n';
    for (const SweepPoint& p : points) {
        out += std::to_string(kReportSchemaVersion) + ',' + std::to_string(p.s) + ',';
        out += fmt_double(p.bits_per_channel) + ',' + fmt_double(p.recon.mse) + ',';
        out += fmt_double(p.recon.mean_cosine) + ',' + fmt_double(p.recon.outlier_fraction) + ',';
        if (with_attention) {
            out += fmt_double(p.attention.mean_cosine) + ',' +
                   fmt_double(p.attention.max_abs_error);
        } else {
            out += ',';
        }
        out += '\n';
    }
    return out;
}

FidelityReport sweep_s(const CaptureDataset& dataset, const DictStore& dicts,
                       std::vector<int> s_list, const CodecConfig& tmpl, bool with_attention) {
    dataset.validate();
    dicts.validate();
    CSR_REQUIRE(dataset.header.kind == dicts.kind, ErrorCode::SchemaMismatch,
                "capture kind does not match the dictionary store");
    CSR_REQUIRE(dataset.header.head_dim == dicts.head_dim(), ErrorCode::SchemaMismatch,
                "capture head_dim does not match the dictionary store");
    CSR_REQUIRE(dataset.header.num_heads == dicts.num_heads, ErrorCode::SchemaMismatch,
                "capture head count does not match the dictionary store");
    CSR_REQUIRE(dataset.header.num_layers == dicts.plan.num_layers(), ErrorCode::SchemaMismatch,
                "capture layer count does not match the merge plan");
    CSR_REQUIRE(tmpl.head_dim == dataset.header.head_dim, ErrorCode::ConfigError,
                "codec template head_dim does not match the capture");
    CSR_REQUIRE(tmpl.s_n == dicts.s_n, ErrorCode::ConfigError,
                "codec template s_n does not match the dictionary store");
    CSR_REQUIRE(!s_list.empty(), ErrorCode::InvalidArgument, "empty sparsity list");
    std::sort(s_list.begin(), s_list.end());

    FidelityReport report;
    report.with_attention = with_attention;
    report.points.resize(s_list.size());

    parallel_for(int64_t(s_list.size()), [&](int64_t pi) {
        SweepPoint& point = report.points[size_t(pi)];
        point.s = s_list[size_t(pi)];
        CodecConfig cfg = tmpl;
        cfg.s = point.s;
        cfg.validate();
        point.bits_per_channel = equivalent_bits(cfg);

        double mse_sum = 0.0, cos_sum = 0.0, out_sum = 0.0, att_cos_sum = 0.0;
        double att_max = 0.0;
        for (const CaptureBlock& block : dataset.blocks) {
            DictSet set;
            for (int c = 0; c < dicts.s_n; ++c) {
                set.push_back(&dicts.dict_for_layer(block.layer, block.head, c));
            }
            LaneMetrics lm;
            lm.layer = block.layer;
            lm.head = block.head;
            std::vector<SparseCode> codes;
            codes.reserve(size_t(block.vectors.rows()));
            for (Eigen::Index i = 0; i < block.vectors.rows(); ++i) {
                codes.push_back(encode_vector(block.vectors.row(i).transpose(), set, cfg));
            }
            lm.recon = reconstruction_metrics(block.vectors, codes, set, cfg);
            if (with_attention) {
                lm.attention =
                    attention_fidelity(block.vectors, block.vectors, block.vectors, cfg, set);
                att_cos_sum += lm.attention.mean_cosine;
                att_max = std::max(att_max, lm.attention.max_abs_error);
            }
            mse_sum += lm.recon.mse;
            cos_sum += lm.recon.mean_cosine;
            out_sum += lm.recon.outlier_fraction;
            point.lanes.push_back(std::move(lm));
        }
        double n = double(dataset.blocks.size());
        point.recon.mse = mse_sum / n;
        point.recon.mean_cosine = cos_sum / n;
        point.recon.outlier_fraction = out_sum / n;
        if (with_attention) {
            point.attention.mean_cosine = att_cos_sum / n;
            point.attention.max_abs_error = att_max;
        }
    });
    return report;
}

void FootprintSpec::validate() const {
    CSR_REQUIRE(num_layers >= 1 && num_heads >= 1 && head_dim >= 1, ErrorCode::ConfigError,
                "footprint geometry must be positive");
    CSR_REQUIRE(batch >= 1, ErrorCode::ConfigError, "batch must be positive");
    CSR_REQUIRE(s >= 1 && s_n >= 1, ErrorCode::ConfigError, "s and s_n must be positive");
    CSR_REQUIRE(head_dim % s_n == 0, ErrorCode::ConfigError, "s_n must divide head_dim");
    CSR_REQUIRE(online_atoms_per_head >= 0, ErrorCode::ConfigError,
                "online_atoms_per_head must be >= 0");
    CSR_REQUIRE(offline_store_bytes >= 0, ErrorCode::ConfigError,
                "offline_store_bytes must be >= 0");
    for (int k : quant_bits) {
        CSR_REQUIRE(k >= 1, ErrorCode::ConfigError, "quantization bit widths must be positive");
        CSR_REQUIRE((int64_t(k) * head_dim) % 8 == 0, ErrorCode::ConfigError,
                    "bit width times head_dim must be a whole number of bytes");
    }
}

json FootprintSpec::to_json() const {
    return json{{"num_layers", num_layers},
                {"num_heads", num_heads},
                {"head_dim", head_dim},
                {"batch", batch},
                {"s", s},
                {"s_n", s_n},
                {"online_atoms_per_head", online_atoms_per_head},
                {"offline_store_bytes", offline_store_bytes},
                {"quant_bits", quant_bits}};
}

std::string FootprintCurve::csv_header() const {
    std::string h =
        "schema_version,seq_len,fp16_bytes,csr_code_bytes,csr_online_bytes,"
        "csr_offline_bytes,csr_total_bytes";
    for (int k : spec.quant_bits) h += ",int" + std::to_string(k) + "_bytes";
    return h;
}

std::string FootprintCurve::to_csv() const {
    std::string out = csv_header();
    out += '\n';
    for (const FootprintSample& s : samples) {
        out += std::to_string(kReportSchemaVersion) + ',' + std::to_string(s.seq_len) + ',';
        out += std::to_string(s.fp16_bytes) + ',' + std::to_string(s.csr_code_bytes) + ',';
        out += std::to_string(s.csr_online_bytes) + ',' + std::to_string(s.csr_offline_bytes) +
               ',' + std::to_string(s.csr_total_bytes);
        for (int64_t q : s.quant_bytes) out += ',' + std::to_string(q);
        out += '\n';
    }
    return out;
}

json FootprintCurve::to_json() const {
    json rows = json::array();
    for (const FootprintSample& s : samples) {
        rows.push_back(json{{"seq_len", s.seq_len},
                            {"fp16_bytes", s.fp16_bytes},
                            {"csr_code_bytes", s.csr_code_bytes},
                            {"csr_online_bytes", s.csr_online_bytes},
                            {"csr_offline_bytes", s.csr_offline_bytes},
                            {"csr_total_bytes", s.csr_total_bytes},
                            {"quant_bytes", s.quant_bytes}});
    }
    return json{{"schema_version", kReportSchemaVersion},
                {"spec", spec.to_json()},
                {"samples", std::move(rows)}};
}

FootprintCurve footprint_curve(const std::vector<int64_t>& seq_lengths,
                               const FootprintSpec& spec) {
    spec.validate();
    FootprintCurve curve;
    curve.spec = spec;

    const int64_t lanes = int64_t(spec.num_layers) * spec.num_heads * spec.batch;
    const int64_t online =
        2 * spec.online_atoms_per_head * spec.head_dim * spec.num_heads * spec.batch;

    for (int64_t len : seq_lengths) {
        CSR_REQUIRE(len >= 0, ErrorCode::InvalidArgument, "sequence lengths must be >= 0");
        FootprintSample s;
        s.seq_len = len;
        s.fp16_bytes = 2 * spec.head_dim * lanes * len;
        s.csr_code_bytes = 4LL * spec.s * spec.s_n * lanes * len;
        s.csr_online_bytes = online;
        s.csr_offline_bytes = spec.offline_store_bytes;
        s.csr_total_bytes = s.csr_code_bytes + s.csr_online_bytes + s.csr_offline_bytes;
        for (int k : spec.quant_bits) {
            s.quant_bytes.push_back(int64_t(k) * spec.head_dim / 8 * lanes * len);
        }
        curve.samples.push_back(std::move(s));
    }
    return curve;
}

json AblationResult::to_json() const {
    return json{{"name", name}, {"passed", passed}, {"details", details}};
}

bool AblationReport::all_passed() const {
    for (const AblationResult& r : results) {
        if (!r.passed) return false;
    }
    return true;
}

json AblationReport::to_json() const {
    json rows = json::array();
    for (const AblationResult& r : results) rows.push_back(r.to_json());
    return json{{"schema_version", kReportSchemaVersion},
                {"seed", seed},
                {"all_passed", all_passed()},
                {"results", std::move(rows)}};
}

namespace {

Eigen::MatrixXd synth_block_f64(const SyntheticSpec& spec) {
    return generate_synthetic(spec).blocks[0].vectors.cast<double>();
}

// Larger dictionaries on a rich mixture reach strictly lower held-out loss.
AblationResult ablate_dictionary_size(uint64_t seed) {
    AblationResult r;
    r.name = "dictionary_size";

    SyntheticSpec data;
    data.generator = GeneratorType::GaussianMixture;
    data.head_dim = 16;
    data.tokens_per_layer = 3072;
    data.num_components = 96;
    data.spread = 0.35;
    data.seed = mix_seed(seed, 0x61626c6131ull);
    Eigen::MatrixXd X = synth_block_f64(data);
    Eigen::MatrixXd Xtr = X.topRows(2560);
    Eigen::MatrixXd Xval = X.bottomRows(512);

    const std::vector<int> sizes = {64, 128, 256};
    std::vector<double> losses;
    for (int n : sizes) {
        TrainConfig cfg;
        cfg.num_atoms = n;
        cfg.s_train = 4;
        cfg.epochs = 5;
        cfg.batch_size = 256;
        cfg.learning_rate = 0.01;
        cfg.seed = mix_seed(seed, 0x61626c6132ull);
        losses.push_back(train_neural_dict(Xtr, cfg, Xval).report.val_mse.back());
    }
    r.passed = losses[0] > losses[1] && losses[1] > losses[2];
    r.details = json{{"sizes", sizes}, {"val_mse", losses}};
    return r;
}

// Channel-blocked data: two independent planted halves, so two half-width
// dictionaries should beat one flat dictionary at an equal code and atom
// budget (2x s=2 over 32 atoms vs s=4 over 64 atoms).
AblationResult ablate_value_chunking(uint64_t seed) {
    AblationResult r;
    r.name = "value_chunking";

    SyntheticSpec half;
    half.generator = GeneratorType::PlantedDictionary;
    half.head_dim = 8;
    half.num_atoms = 20;
    half.sparsity = 2;
    half.noise_sigma = 0.02;
    half.tokens_per_layer = 3072;
    half.seed = mix_seed(seed, 0x61626c6233ull);
    Eigen::MatrixXd A = synth_block_f64(half);
    half.seed = mix_seed(seed, 0x61626c6234ull);
    Eigen::MatrixXd B = synth_block_f64(half);
    Eigen::MatrixXd X(A.rows(), A.cols() + B.cols());
    X << A, B;

    const Eigen::Index ntr = 2560;
    TrainConfig base;
    base.epochs = 5;
    base.batch_size = 256;
    base.learning_rate = 0.01;
    base.seed = mix_seed(seed, 0x61626c6235ull);

    TrainConfig chunk_cfg = base;
    chunk_cfg.num_atoms = 32;
    chunk_cfg.s_train = 2;
    double chunked = 0.0;
    for (int c = 0; c < 2; ++c) {
        Eigen::MatrixXd Xc = X.middleCols(c * 8, 8);
        chunked += train_neural_dict(Xc.topRows(ntr), chunk_cfg, Xc.bottomRows(X.rows() - ntr))
                       .report.val_mse.back();
    }

    TrainConfig flat_cfg = base;
    flat_cfg.num_atoms = 64;
    flat_cfg.s_train = 4;
    double flat = train_neural_dict(X.topRows(ntr), flat_cfg, X.bottomRows(X.rows() - ntr))
                      .report.val_mse.back();

    r.passed = chunked <= flat;
    r.details = json{{"chunked_val_mse", chunked}, {"flat_val_mse", flat}};
    return r;
}

// With a 4x overcomplete dictionary on a few tight clusters, k-means leaves
// many near-duplicate atoms; the diversity penalty spreads them, so the
// converged loss with the penalty should not exceed the loss without it.
AblationResult ablate_diversity_loss(uint64_t seed) {
    AblationResult r;
    r.name = "diversity_loss";

    const int runs = 5;
    std::vector<double> on_losses, off_losses;
    for (int k = 0; k < runs; ++k) {
        SyntheticSpec data;
        data.generator = GeneratorType::GaussianMixture;
        data.head_dim = 16;
        data.tokens_per_layer = 2048;
        data.num_components = 4;
        data.spread = 0.12;
        data.seed = mix_seed(seed, 0x61626c6336ull, uint64_t(k));
        Eigen::MatrixXd X = synth_block_f64(data);
        Eigen::MatrixXd Xtr = X.topRows(1792);
        Eigen::MatrixXd Xval = X.bottomRows(256);

        TrainConfig on;
        on.num_atoms = 16;
        on.s_train = 2;
        on.epochs = 6;
        on.batch_size = 256;
        on.learning_rate = 0.01;
        on.seed = mix_seed(seed, 0x61626c6337ull, uint64_t(k));
        TrainConfig off = on;
        off.beta_scale = 0.0;
        off.beta_cap = 0.0;

        on_losses.push_back(train_neural_dict(Xtr, on, Xval).report.val_mse.back());
        off_losses.push_back(train_neural_dict(Xtr, off, Xval).report.val_mse.back());
    }
    double mean_on = 0.0, mean_off = 0.0;
    for (int k = 0; k < runs; ++k) {
        mean_on += on_losses[size_t(k)] / runs;
        mean_off += off_losses[size_t(k)] / runs;
    }
    r.passed = mean_on <= mean_off + 1e-6;
    r.details = json{{"mean_val_mse_with_penalty", mean_on},
                     {"mean_val_mse_without_penalty", mean_off},
                     {"per_seed_with", on_losses},
                     {"per_seed_without", off_losses}};
    return r;
}

// An offline dictionary trained on one mixture meets a prompt drawn from a
// different one; atoms sampled from the prompt itself should cut the mean
// residual at a small budget.
AblationResult ablate_online_dictionary(uint64_t seed) {
    AblationResult r;
    r.name = "online_dictionary";

    SyntheticSpec calib;
    calib.generator = GeneratorType::GaussianMixture;
    calib.head_dim = 16;
    calib.tokens_per_layer = 2048;
    calib.num_components = 8;
    calib.spread = 0.25;
    calib.seed = mix_seed(seed, 0x61626c6438ull);
    Eigen::MatrixXd Xc = synth_block_f64(calib);

    SyntheticSpec prompt = calib;
    prompt.tokens_per_layer = 512;
    prompt.seed = mix_seed(seed, 0x61626c6439ull);
    Eigen::MatrixXf Xp = generate_synthetic(prompt).blocks[0].vectors;

    TrainConfig cfg;
    cfg.num_atoms = 32;
    cfg.s_train = 2;
    cfg.epochs = 5;
    cfg.batch_size = 256;
    cfg.learning_rate = 0.01;
    cfg.seed = mix_seed(seed, 0x61626c643aull);
    TrainResult trained = train_neural_dict(Xc, cfg, Eigen::MatrixXd());
    Dictionary offline(trained.W.cast<float>(), CaptureKind::Key, Provenance::Offline);

    PromptDictionary pdict = build_prompt_dictionary({&offline}, Xp, 64,
                                                     mix_seed(seed, 0x61626c643bull));

    const int s = 2;
    double resid_off = 0.0, resid_on = 0.0;
    for (Eigen::Index i = 0; i < Xp.rows(); ++i) {
        Eigen::VectorXf x = Xp.row(i).transpose();
        resid_off += mp_encode_chunk(x, offline, s).residual_norm();
        resid_on += mp_encode_chunk(x, pdict.chunk_dicts[0], s).residual_norm();
    }
    resid_off /= double(Xp.rows());
    resid_on /= double(Xp.rows());

    r.passed = resid_on <= resid_off;
    r.details = json{{"mean_residual_offline_only", resid_off},
                     {"mean_residual_with_online", resid_on},
                     {"online_atoms", pdict.online_atoms[0]}};
    return r;
}

} // namespace

AblationReport ablation_suite(uint64_t seed) {
    AblationReport report;
    report.seed = seed;
    report.results.push_back(ablate_dictionary_size(seed));
    report.results.push_back(ablate_value_chunking(seed));
    report.results.push_back(ablate_diversity_loss(seed));
    report.results.push_back(ablate_online_dictionary(seed));
    return report;
}

} // namespace csr
