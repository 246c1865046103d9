// SPDX-License-Identifier: Apache-2.0

#include "csr/csr.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include "core/capture.hpp"
#include "core/dict_store.hpp"
#include "core/evaluate.hpp"
#include "core/json_util.hpp"
#include "core/merge.hpp"
#include "core/mp.hpp"
#include "core/parallel.hpp"
#include "core/runtime.hpp"
#include "core/synthetic.hpp"

struct csr_capture {
    csr::CaptureDataset value;
};
struct csr_merge_plan {
    csr::MergePlan value;
};
struct csr_dict_store {
    csr::DictStore value;
};
struct csr_cache {
    csr::CsrCache value;
};

namespace {

using csr::json;

thread_local std::string g_last_error;

csr_status map_code(csr::ErrorCode code) {
    using csr::ErrorCode;
    switch (code) {
        case ErrorCode::InvalidArgument: return CSR_ERR_INVALID_ARGUMENT;
        case ErrorCode::Io: return CSR_ERR_IO;
        case ErrorCode::BadMagic: return CSR_ERR_BAD_MAGIC;
        case ErrorCode::UnsupportedVersion: return CSR_ERR_UNSUPPORTED_VERSION;
        case ErrorCode::Truncated: return CSR_ERR_TRUNCATED;
        case ErrorCode::FormatError: return CSR_ERR_FORMAT;
        case ErrorCode::DuplicateBlock: return CSR_ERR_DUPLICATE_BLOCK;
        case ErrorCode::IndexOutOfRange: return CSR_ERR_INDEX_OUT_OF_RANGE;
        case ErrorCode::DimensionMismatch: return CSR_ERR_DIMENSION_MISMATCH;
        case ErrorCode::NonFinite: return CSR_ERR_NON_FINITE;
        case ErrorCode::DegenerateData: return CSR_ERR_DEGENERATE_DATA;
        case ErrorCode::MissingBlock: return CSR_ERR_MISSING_BLOCK;
        case ErrorCode::IndexSpaceOverflow: return CSR_ERR_INDEX_SPACE_OVERFLOW;
        case ErrorCode::SchemaMismatch: return CSR_ERR_SCHEMA_MISMATCH;
        case ErrorCode::ConfigError: return CSR_ERR_CONFIG;
        case ErrorCode::Internal: return CSR_ERR_INTERNAL;
    }
    return CSR_ERR_INTERNAL;
}

template <typename F>
csr_status wrap(F&& fn) noexcept {
    try {
        fn();
        g_last_error.clear();
        return CSR_OK;
    } catch (const csr::Error& e) {
        g_last_error = e.what();
        return map_code(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return CSR_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return CSR_ERR_INTERNAL;
    }
}

void require_arg(bool ok, const char* msg) {
    if (!ok) throw csr::Error(csr::ErrorCode::InvalidArgument, msg);
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void emit(char** slot, const std::string& text) {
    if (slot != nullptr) *slot = dup_string(text);
}

std::string hash_hex(uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json parse_options(const char* options_json, const char* what) {
    if (options_json == nullptr || options_json[0] == '\0') return json::object();
    return csr::parse_json(options_json, what);
}

struct MergeOptions {
    double delta1 = 0.20;
    double delta2 = 1.0;
    csr::HeadAggregation agg = csr::HeadAggregation::Pooled;
    int64_t sample_cap = 8192;
    uint64_t seed = 0;
};

MergeOptions parse_merge_options(const char* options_json) {
    json j = parse_options(options_json, "merge options");
    csr::check_keys(j, "merge options", {"delta1", "delta2", "head", "sample_cap", "seed"});
    MergeOptions o;
    o.delta1 = csr::json_get_or(j, "delta1", o.delta1, "merge options");
    o.delta2 = csr::json_get_or(j, "delta2", o.delta2, "merge options");
    std::string head = csr::json_get_or<std::string>(j, "head", "pooled", "merge options");
    if (head == "pooled") {
        o.agg = csr::HeadAggregation::Pooled;
    } else if (head == "mean") {
        o.agg = csr::HeadAggregation::PerHeadMean;
    } else {
        throw csr::Error(csr::ErrorCode::ConfigError, "head must be \"pooled\" or \"mean\"");
    }
    o.sample_cap = csr::json_get_or(j, "sample_cap", o.sample_cap, "merge options");
    o.seed = csr::json_get_or(j, "seed", o.seed, "merge options");
    return o;
}

json capture_info_json(const csr::CaptureDataset& ds) {
    json blocks = json::array();
    int64_t total = 0;
    for (const csr::CaptureBlock& b : ds.blocks) {
        blocks.push_back(json{{"layer", b.layer}, {"head", b.head}, {"tokens", b.vectors.rows()}});
        total += b.vectors.rows();
    }
    return json{{"model_name", ds.header.model_name},
                {"num_layers", ds.header.num_layers},
                {"num_heads", ds.header.num_heads},
                {"head_dim", ds.header.head_dim},
                {"kind", csr::kind_name(ds.header.kind)},
                {"pre_rope", ds.header.pre_rope},
                {"dtype", csr::dtype_name(ds.header.dtype)},
                {"total_tokens", total},
                {"blocks", std::move(blocks)}};
}

} // namespace

extern "C" {

const char* csr_version(void) {
    return "0.1.0";
}

const char* csr_last_error(void) {
    return g_last_error.c_str();
}

void csr_string_free(char* s) {
    std::free(s);
}

void csr_set_threads(int n) {
    csr::set_num_threads(n);
}

double csr_equivalent_bits(int head_dim, int s, int s_n) {
    csr::CodecConfig cfg;
    cfg.s = s;
    cfg.s_n = s_n;
    cfg.head_dim = head_dim;
    try {
        cfg.validate();
        return csr::equivalent_bits(cfg);
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return -1.0;
    }
}

csr_status csr_capture_synth(const char* spec_json, csr_capture** out) {
    return wrap([&] {
        require_arg(spec_json != nullptr && out != nullptr, "spec_json and out must be non-null");
        csr::SyntheticSpec spec =
            csr::SyntheticSpec::from_json(csr::parse_json(spec_json, "synthetic spec"));
        auto handle = std::make_unique<csr_capture>();
        handle->value = csr::generate_synthetic(spec);
        *out = handle.release();
    });
}

csr_status csr_capture_read(const char* path, csr_capture** out) {
    return wrap([&] {
        require_arg(path != nullptr && out != nullptr, "path and out must be non-null");
        auto handle = std::make_unique<csr_capture>();
        handle->value = csr::load_capture(path);
        *out = handle.release();
    });
}

csr_status csr_capture_write(const csr_capture* cap, const char* path) {
    return wrap([&] {
        require_arg(cap != nullptr && path != nullptr, "capture and path must be non-null");
        csr::save_capture(cap->value, path);
    });
}

csr_status csr_capture_info(const csr_capture* cap, char** out_json) {
    return wrap([&] {
        require_arg(cap != nullptr && out_json != nullptr,
                    "capture and out_json must be non-null");
        emit(out_json, capture_info_json(cap->value).dump(2));
    });
}

void csr_capture_free(csr_capture* cap) {
    delete cap;
}

csr_status csr_merge_plan_build(const csr_capture* cap, const char* options_json,
                                csr_merge_plan** out) {
    return wrap([&] {
        require_arg(cap != nullptr && out != nullptr, "capture and out must be non-null");
        MergeOptions o = parse_merge_options(options_json);
        auto handle = std::make_unique<csr_merge_plan>();
        handle->value =
            csr::build_merge_plan(cap->value, o.delta1, o.delta2, o.agg, o.sample_cap, o.seed);
        *out = handle.release();
    });
}

csr_status csr_merge_plan_to_json(const csr_merge_plan* plan, char** out_json) {
    return wrap([&] {
        require_arg(plan != nullptr && out_json != nullptr, "plan and out_json must be non-null");
        emit(out_json, plan->value.to_json().dump(2));
    });
}

csr_status csr_merge_plan_parse(const char* json_text, csr_merge_plan** out) {
    return wrap([&] {
        require_arg(json_text != nullptr && out != nullptr,
                    "json_text and out must be non-null");
        auto handle = std::make_unique<csr_merge_plan>();
        handle->value = csr::MergePlan::from_json(csr::parse_json(json_text, "merge plan"));
        *out = handle.release();
    });
}

csr_status csr_merge_plan_validate(const csr_merge_plan* plan, const csr_capture* cap,
                                   const char* options_json) {
    return wrap([&] {
        require_arg(plan != nullptr && cap != nullptr, "plan and capture must be non-null");
        MergeOptions o = parse_merge_options(options_json);
        csr::validate_plan(plan->value, cap->value, o.agg, o.sample_cap, o.seed);
    });
}

void csr_merge_plan_free(csr_merge_plan* plan) {
    delete plan;
}

csr_status csr_train(const csr_capture* cap, const csr_merge_plan* plan,
                     const char* options_json, csr_dict_store** out_store,
                     char** out_report_json) {
    return wrap([&] {
        require_arg(cap != nullptr && plan != nullptr, "capture and plan must be non-null");
        require_arg(out_store != nullptr, "out_store must be non-null");
        json j = parse_options(options_json, "train options");
        csr::check_keys(j, "train options",
                        {"train", "per_head_atoms", "val_fraction", "head_shared"});
        csr::TrainConfig cfg = csr::TrainConfig::from_json(
            csr::json_get_or(j, "train", json::object(), "train options"));
        int per_head_atoms =
            csr::json_get_or(j, "per_head_atoms", cfg.num_atoms, "train options");
        double val_fraction = csr::json_get_or(j, "val_fraction", 0.0, "train options");
        bool head_shared = csr::json_get_or(j, "head_shared", false, "train options");

        csr::MergedTrainResult result = csr::train_on_merged_layers(
            cap->value, plan->value, cfg, per_head_atoms, val_fraction, head_shared);
        emit(out_report_json, result.report.dump(2));
        auto handle = std::make_unique<csr_dict_store>();
        handle->value = std::move(result.store);
        *out_store = handle.release();
    });
}

csr_status csr_dict_store_save(const csr_dict_store* store, const char* path) {
    return wrap([&] {
        require_arg(store != nullptr && path != nullptr, "store and path must be non-null");
        store->value.save(path);
    });
}

csr_status csr_dict_store_load(const char* path, csr_dict_store** out) {
    return wrap([&] {
        require_arg(path != nullptr && out != nullptr, "path and out must be non-null");
        auto handle = std::make_unique<csr_dict_store>();
        handle->value = csr::DictStore::load(path);
        *out = handle.release();
    });
}

csr_status csr_dict_store_info(const csr_dict_store* store, char** out_json) {
    return wrap([&] {
        require_arg(store != nullptr && out_json != nullptr,
                    "store and out_json must be non-null");
        const csr::DictStore& s = store->value;
        json info{{"kind", csr::kind_name(s.kind)},
                  {"chunk_dim", s.chunk_dim},
                  {"s_n", s.s_n},
                  {"per_head_atoms", s.per_head_atoms},
                  {"num_heads", s.num_heads},
                  {"head_shared", s.head_shared},
                  {"num_groups", s.num_groups()},
                  {"merge_plan", s.plan.to_json()},
                  {"train_config", s.train_config.to_json()},
                  {"content_hash", hash_hex(s.content_hash())}};
        emit(out_json, info.dump(2));
    });
}

void csr_dict_store_free(csr_dict_store* store) {
    delete store;
}

csr_status csr_compress(const csr_capture* cap, const csr_dict_store* store,
                        const char* options_json, csr_cache** out_cache) {
    return wrap([&] {
        require_arg(cap != nullptr && store != nullptr, "capture and store must be non-null");
        require_arg(out_cache != nullptr, "out_cache must be non-null");
        json j = parse_options(options_json, "compress options");
        csr::check_keys(j, "compress options", {"codec", "online_size", "seed"});
        csr::CodecConfig codec = csr::CodecConfig::from_json(
            csr::json_get<json>(j, "codec", "compress options"));
        int64_t online_size = csr::json_get_or<int64_t>(j, "online_size", 0, "compress options");
        uint64_t seed = csr::json_get_or<uint64_t>(j, "seed", 0, "compress options");

        auto handle = std::make_unique<csr_cache>();
        handle->value = csr::CsrCache::build(cap->value, store->value, codec, online_size, seed);
        *out_cache = handle.release();
    });
}

csr_status csr_cache_save(const csr_cache* cache, const char* path) {
    return wrap([&] {
        require_arg(cache != nullptr && path != nullptr, "cache and path must be non-null");
        cache->value.save(path);
    });
}

csr_status csr_cache_load(const char* path, const csr_dict_store* store, csr_cache** out) {
    return wrap([&] {
        require_arg(path != nullptr && store != nullptr && out != nullptr,
                    "path, store, and out must be non-null");
        auto handle = std::make_unique<csr_cache>();
        handle->value = csr::CsrCache::load(path, store->value);
        *out = handle.release();
    });
}

csr_status csr_cache_decode(const csr_cache* cache, int layer, int head, int64_t from,
                            int64_t to, float* out, size_t out_len) {
    return wrap([&] {
        require_arg(cache != nullptr && out != nullptr, "cache and out must be non-null");
        Eigen::MatrixXf decoded = cache->value.decode_range(layer, head, from, to);
        size_t need = size_t(decoded.rows()) * size_t(decoded.cols());
        require_arg(out_len >= need, "output buffer too small for the decoded range");
        for (Eigen::Index i = 0; i < decoded.rows(); ++i) {
            for (Eigen::Index c = 0; c < decoded.cols(); ++c) {
                out[size_t(i) * size_t(decoded.cols()) + size_t(c)] = decoded(i, c);
            }
        }
    });
}

csr_status csr_cache_token_count(const csr_cache* cache, int layer, int head, int64_t* out) {
    return wrap([&] {
        require_arg(cache != nullptr && out != nullptr, "cache and out must be non-null");
        *out = cache->value.token_count(layer, head);
    });
}

csr_status csr_cache_memory_report(const csr_cache* cache, char** out_json) {
    return wrap([&] {
        require_arg(cache != nullptr && out_json != nullptr,
                    "cache and out_json must be non-null");
        emit(out_json, cache->value.memory_report().to_json().dump(2));
    });
}

csr_status csr_cache_info(const csr_cache* cache, char** out_json) {
    return wrap([&] {
        require_arg(cache != nullptr && out_json != nullptr,
                    "cache and out_json must be non-null");
        const csr::CsrCache& c = cache->value;
        int64_t total = 0;
        for (int l = 0; l < c.num_layers(); ++l) {
            for (int h = 0; h < c.num_heads(); ++h) total += c.token_count(l, h);
        }
        json info{{"kind", csr::kind_name(c.kind())},
                  {"num_layers", c.num_layers()},
                  {"num_heads", c.num_heads()},
                  {"head_dim", c.head_dim()},
                  {"codec", c.codec().to_json()},
                  {"online_size", c.online_size()},
                  {"dict_hash", hash_hex(c.dict_hash())},
                  {"total_tokens", total}};
        emit(out_json, info.dump(2));
    });
}

void csr_cache_free(csr_cache* cache) {
    delete cache;
}

csr_status csr_eval_sweep(const csr_capture* cap, const csr_dict_store* store,
                          const char* options_json, char** out_report_json, char** out_csv) {
    return wrap([&] {
        require_arg(cap != nullptr && store != nullptr, "capture and store must be non-null");
        json j = parse_options(options_json, "eval options");
        csr::check_keys(j, "eval options", {"codec", "s_list", "attention"});
        csr::CodecConfig tmpl =
            csr::CodecConfig::from_json(csr::json_get<json>(j, "codec", "eval options"));
        std::vector<int> s_list =
            csr::json_get<std::vector<int>>(j, "s_list", "eval options");
        bool attention = csr::json_get_or(j, "attention", true, "eval options");

        csr::FidelityReport report =
            csr::sweep_s(cap->value, store->value, s_list, tmpl, attention);
        emit(out_report_json, report.to_json().dump(2));
        emit(out_csv, report.to_csv());
    });
}

csr_status csr_eval_snapshot(const csr_cache* cache, const csr_capture* cap_or_null,
                             char** out_report_json) {
    return wrap([&] {
        require_arg(cache != nullptr && out_report_json != nullptr,
                    "cache and out_report_json must be non-null");
        const csr::CsrCache& c = cache->value;

        json lanes = json::array();
        int64_t total = 0;
        for (int l = 0; l < c.num_layers(); ++l) {
            for (int h = 0; h < c.num_heads(); ++h) {
                const csr::CacheLane& ln = c.lane(l, h);
                lanes.push_back(json{{"layer", l},
                                     {"head", h},
                                     {"tokens", ln.codes.size()},
                                     {"outliers", ln.outlier_tokens.size()}});
                total += int64_t(ln.codes.size());
            }
        }
        json report{{"schema_version", 1},
                    {"kind", csr::kind_name(c.kind())},
                    {"num_layers", c.num_layers()},
                    {"num_heads", c.num_heads()},
                    {"head_dim", c.head_dim()},
                    {"codec", c.codec().to_json()},
                    {"online_size", c.online_size()},
                    {"dict_hash", hash_hex(c.dict_hash())},
                    {"total_tokens", total},
                    {"memory", c.memory_report().to_json()},
                    {"lanes", std::move(lanes)}};

        if (cap_or_null != nullptr) {
            const csr::CaptureDataset& ds = cap_or_null->value;
            CSR_REQUIRE(ds.header.kind == c.kind() && ds.header.num_layers == c.num_layers() &&
                            ds.header.num_heads == c.num_heads() &&
                            ds.header.head_dim == c.head_dim(),
                        csr::ErrorCode::SchemaMismatch,
                        "capture geometry does not match the snapshot");
            json recon = json::array();
            double mse_sum = 0.0, cos_sum = 0.0;
            int64_t lane_count = 0;
            for (const csr::CaptureBlock& b : ds.blocks) {
                CSR_REQUIRE(b.vectors.rows() == c.token_count(b.layer, b.head),
                            csr::ErrorCode::SchemaMismatch,
                            "capture token count does not match the snapshot");
                Eigen::MatrixXf decoded = c.decode_all(b.layer, b.head);
                double mse = (b.vectors - decoded).cast<double>().rowwise().squaredNorm().mean();
                double cs = 0.0;
                for (Eigen::Index i = 0; i < decoded.rows(); ++i) {
                    cs += csr::cosine_similarity(b.vectors.row(i).transpose(),
                                                 decoded.row(i).transpose());
                }
                cs = decoded.rows() > 0 ? cs / double(decoded.rows()) : 1.0;
                recon.push_back(json{{"layer", b.layer},
                                     {"head", b.head},
                                     {"mse", mse},
                                     {"mean_cosine", cs}});
                mse_sum += mse;
                cos_sum += cs;
                ++lane_count;
            }
            report["reconstruction"] =
                json{{"mse", lane_count > 0 ? mse_sum / double(lane_count) : 0.0},
                     {"mean_cosine", lane_count > 0 ? cos_sum / double(lane_count) : 1.0},
                     {"lanes", std::move(recon)}};
        }
        emit(out_report_json, report.dump(2));
    });
}

csr_status csr_footprint_curve(const char* options_json, char** out_json, char** out_csv) {
    return wrap([&] {
        json j = parse_options(options_json, "footprint options");
        csr::check_keys(j, "footprint options",
                        {"seq_lengths", "num_layers", "num_heads", "head_dim", "batch", "s",
                         "s_n", "online_atoms_per_head", "offline_store_bytes", "quant_bits"});
        std::vector<int64_t> lengths =
            csr::json_get<std::vector<int64_t>>(j, "seq_lengths", "footprint options");
        csr::FootprintSpec spec;
        spec.num_layers = csr::json_get_or(j, "num_layers", spec.num_layers, "footprint options");
        spec.num_heads = csr::json_get_or(j, "num_heads", spec.num_heads, "footprint options");
        spec.head_dim = csr::json_get_or(j, "head_dim", spec.head_dim, "footprint options");
        spec.batch = csr::json_get_or(j, "batch", spec.batch, "footprint options");
        spec.s = csr::json_get_or(j, "s", spec.s, "footprint options");
        spec.s_n = csr::json_get_or(j, "s_n", spec.s_n, "footprint options");
        spec.online_atoms_per_head = csr::json_get_or(j, "online_atoms_per_head",
                                                      spec.online_atoms_per_head,
                                                      "footprint options");
        spec.offline_store_bytes = csr::json_get_or(j, "offline_store_bytes",
                                                    spec.offline_store_bytes,
                                                    "footprint options");
        spec.quant_bits = csr::json_get_or(j, "quant_bits", spec.quant_bits,
                                           "footprint options");

        csr::FootprintCurve curve = csr::footprint_curve(lengths, spec);
        emit(out_json, curve.to_json().dump(2));
        emit(out_csv, curve.to_csv());
    });
}

csr_status csr_ablate(uint64_t seed, char** out_report_json) {
    return wrap([&] {
        require_arg(out_report_json != nullptr, "out_report_json must be non-null");
        emit(out_report_json, csr::ablation_suite(seed).to_json().dump(2));
    });
}

} // extern "C"
