// SPDX-License-Identifier: Apache-2.0

#include "core/dict_store.hpp"

#include <mutex>

#include "core/binio.hpp"
#include "core/parallel.hpp"

namespace csr {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'R', 'D'};
constexpr uint32_t kVersion = 1;

} // namespace

const Dictionary& DictStore::dict(int group, int head, int chunk) const {
    DictKey key{group, head_shared ? 0 : head, chunk};
    auto it = dicts.find(key);
    CSR_REQUIRE(it != dicts.end(), ErrorCode::MissingBlock,
                "no dictionary for group " + std::to_string(group) + ", head " +
                    std::to_string(head) + ", chunk " + std::to_string(chunk));
    return it->second;
}

const Dictionary& DictStore::dict_for_layer(int layer, int head, int chunk) const {
    return dict(plan.group_of(layer), head, chunk);
}

void DictStore::validate() const {
    CSR_REQUIRE(chunk_dim >= 1 && s_n >= 1 && per_head_atoms >= 1 && num_heads >= 1,
                ErrorCode::FormatError, "dictionary store fields must be positive");
    CSR_REQUIRE(per_head_atoms <= kMaxAtoms, ErrorCode::IndexSpaceOverflow,
                "per_head_atoms exceeds the u16 index space");
    plan.validate_structure(plan.num_layers());

    size_t heads = head_shared ? 1 : size_t(num_heads);
    size_t expect = plan.groups.size() * heads * size_t(s_n);
    CSR_REQUIRE(dicts.size() == expect, ErrorCode::FormatError,
                "dictionary store holds " + std::to_string(dicts.size()) + " entries, expected " +
                    std::to_string(expect));
    for (const auto& [key, d] : dicts) {
        CSR_REQUIRE(key.group >= 0 && key.group < num_groups(), ErrorCode::IndexOutOfRange,
                    "dictionary key group out of range");
        CSR_REQUIRE(key.head >= 0 && key.head < (head_shared ? 1 : num_heads),
                    ErrorCode::IndexOutOfRange, "dictionary key head out of range");
        CSR_REQUIRE(key.chunk >= 0 && key.chunk < s_n, ErrorCode::IndexOutOfRange,
                    "dictionary key chunk out of range");
        CSR_REQUIRE(d.chunk_dim() == chunk_dim && d.num_atoms() == per_head_atoms,
                    ErrorCode::DimensionMismatch, "dictionary shape does not match store header");
        d.validate();
    }
}

std::vector<uint8_t> DictStore::serialize() const {
    validate();
    json meta = {{"kind", kind_name(kind)},
                 {"chunk_dim", chunk_dim},
                 {"s_n", s_n},
                 {"per_head_atoms", per_head_atoms},
                 {"num_heads", num_heads},
                 {"head_shared", head_shared},
                 {"merge_plan", plan.to_json()},
                 {"train_config", train_config.to_json()},
                 {"seed", train_config.seed}};

    ByteWriter w;
    w.put_bytes(kMagic, 4);
    w.put_u32(kVersion);
    w.put_string(meta.dump());
    for (const auto& [key, d] : dicts) { // std::map iterates keys in sorted order
        w.put_u32(uint32_t(key.group));
        w.put_u32(uint32_t(key.head));
        w.put_u32(uint32_t(key.chunk));
        const Eigen::MatrixXf& atoms = d.atoms();
        for (Eigen::Index c = 0; c < atoms.cols(); ++c) {
            for (Eigen::Index r = 0; r < atoms.rows(); ++r) w.put_f32(atoms(r, c));
        }
    }
    return w.take();
}

DictStore DictStore::deserialize(const uint8_t* data, size_t size) {
    ByteReader r(data, size);
    char magic[4];
    try {
        r.get_bytes(magic, 4);
    } catch (const Error&) {
        throw Error(ErrorCode::BadMagic, "stream shorter than magic");
    }
    CSR_REQUIRE(std::memcmp(magic, kMagic, 4) == 0, ErrorCode::BadMagic,
                "expected CSRD container");
    uint32_t version = r.get_u32();
    CSR_REQUIRE(version == kVersion, ErrorCode::UnsupportedVersion,
                "CSRD version " + std::to_string(version) + " not supported");

    json meta = parse_json(r.get_string(), "CSRD metadata");
    check_keys(meta, "CSRD metadata",
               {"kind", "chunk_dim", "s_n", "per_head_atoms", "num_heads", "head_shared",
                "merge_plan", "train_config", "seed"});

    DictStore out;
    out.kind = parse_kind(json_get<std::string>(meta, "kind", "CSRD metadata"));
    out.chunk_dim = json_get<int>(meta, "chunk_dim", "CSRD metadata");
    out.s_n = json_get<int>(meta, "s_n", "CSRD metadata");
    out.per_head_atoms = json_get<int>(meta, "per_head_atoms", "CSRD metadata");
    out.num_heads = json_get<int>(meta, "num_heads", "CSRD metadata");
    out.head_shared = json_get<bool>(meta, "head_shared", "CSRD metadata");
    out.plan = MergePlan::from_json(json_get<json>(meta, "merge_plan", "CSRD metadata"));
    out.train_config = TrainConfig::from_json(json_get<json>(meta, "train_config", "CSRD metadata"));
    CSR_REQUIRE(json_get<uint64_t>(meta, "seed", "CSRD metadata") == out.train_config.seed,
                ErrorCode::FormatError, "CSRD seed does not match the train config echo");
    CSR_REQUIRE(out.chunk_dim >= 1 && out.s_n >= 1 && out.per_head_atoms >= 1 &&
                    out.num_heads >= 1,
                ErrorCode::FormatError, "CSRD metadata fields must be positive");

    int heads = out.head_shared ? 1 : out.num_heads;
    size_t count = out.plan.groups.size() * size_t(heads) * size_t(out.s_n);
    for (size_t i = 0; i < count; ++i) {
        CSR_REQUIRE(r.remaining() >= 12, ErrorCode::Truncated, "truncated dictionary key");
        DictKey key;
        key.group = int(r.get_u32());
        key.head = int(r.get_u32());
        key.chunk = int(r.get_u32());
        CSR_REQUIRE(key.group >= 0 && key.group < int(out.plan.groups.size()) && key.head >= 0 &&
                        key.head < heads && key.chunk >= 0 && key.chunk < out.s_n,
                    ErrorCode::IndexOutOfRange, "dictionary key out of range");
        CSR_REQUIRE(!out.dicts.count(key), ErrorCode::DuplicateBlock,
                    "dictionary key appears more than once");

        size_t vals = size_t(out.chunk_dim) * size_t(out.per_head_atoms);
        CSR_REQUIRE(r.remaining() >= vals * 4, ErrorCode::Truncated,
                    "truncated dictionary atoms for group " + std::to_string(key.group));
        Eigen::MatrixXf atoms(out.chunk_dim, out.per_head_atoms);
        for (Eigen::Index c = 0; c < atoms.cols(); ++c) {
            for (Eigen::Index row = 0; row < atoms.rows(); ++row) atoms(row, c) = r.get_f32();
        }
        out.dicts.emplace(key, Dictionary(std::move(atoms), out.kind, Provenance::Offline));
    }
    CSR_REQUIRE(r.at_end(), ErrorCode::FormatError, "trailing bytes after dictionary entries");
    out.validate();
    return out;
}

DictStore DictStore::deserialize(const std::vector<uint8_t>& bytes) {
    return deserialize(bytes.data(), bytes.size());
}

void DictStore::save(const std::string& path) const {
    write_file_atomic(path, serialize());
}

DictStore DictStore::load(const std::string& path) {
    return deserialize(read_file(path));
}

uint64_t DictStore::content_hash() const {
    return fnv1a64(serialize());
}

MergedTrainResult train_on_merged_layers(const CaptureDataset& dataset, const MergePlan& plan,
                                         const TrainConfig& cfg, int per_head_atoms,
                                         double val_fraction, bool head_shared) {
    cfg.validate();
    dataset.validate();
    plan.validate_structure(dataset.header.num_layers);
    CSR_REQUIRE(plan.kind == dataset.header.kind, ErrorCode::SchemaMismatch,
                "merge plan kind does not match the dataset");
    CSR_REQUIRE(per_head_atoms >= 1 && per_head_atoms <= kMaxAtoms, ErrorCode::IndexSpaceOverflow,
                "per_head_atoms must be in [1, 65535]");
    CSR_REQUIRE(val_fraction >= 0.0 && val_fraction < 1.0, ErrorCode::ConfigError,
                "val_fraction must be in [0, 1)");
    CSR_REQUIRE(dataset.header.head_dim % cfg.s_n == 0, ErrorCode::ConfigError,
                "head_dim must be divisible by s_n");
    const int chunk_dim = dataset.header.head_dim / cfg.s_n;

    MergedTrainResult out;
    out.store.kind = dataset.header.kind;
    out.store.chunk_dim = chunk_dim;
    out.store.s_n = cfg.s_n;
    out.store.per_head_atoms = per_head_atoms;
    out.store.num_heads = dataset.header.num_heads;
    out.store.head_shared = head_shared;
    out.store.plan = plan;
    out.store.train_config = cfg;
    out.store.train_config.num_atoms = per_head_atoms;

    const int groups = int(plan.groups.size());
    const int heads = head_shared ? 1 : dataset.header.num_heads;

    struct Task {
        DictKey key;
    };
    std::vector<Task> tasks;
    for (int g = 0; g < groups; ++g) {
        for (int h = 0; h < heads; ++h) {
            for (int c = 0; c < cfg.s_n; ++c) tasks.push_back({DictKey{g, h, c}});
        }
    }

    std::mutex mu;
    std::map<DictKey, Dictionary> dicts;
    std::map<DictKey, json> reports;

    parallel_for(int64_t(tasks.size()), [&](int64_t ti) {
        const DictKey key = tasks[size_t(ti)].key;

        // gather this head's vectors across the group's layers
        int h0 = head_shared ? 0 : key.head;
        int h1 = head_shared ? dataset.header.num_heads : key.head + 1;
        int64_t total = 0;
        for (int layer : plan.groups[size_t(key.group)]) {
            for (int h = h0; h < h1; ++h) total += dataset.block(layer, h).vectors.rows();
        }
        CSR_REQUIRE(total >= 1, ErrorCode::DegenerateData,
                    "no vectors for group " + std::to_string(key.group));

        Eigen::MatrixXd all(total, chunk_dim);
        int64_t at = 0;
        for (int layer : plan.groups[size_t(key.group)]) {
            for (int h = h0; h < h1; ++h) {
                const Eigen::MatrixXf& v = dataset.block(layer, h).vectors;
                all.middleRows(at, v.rows()) =
                    v.middleCols(key.chunk * chunk_dim, chunk_dim).cast<double>();
                at += v.rows();
            }
        }

        // deterministic holdout, identical across the chunks of one (group, head)
        int64_t val_count = int64_t(val_fraction * double(total));
        Eigen::MatrixXd train_rows = all, val_rows(0, chunk_dim);
        if (val_count > 0) {
            Rng split_rng(mix_seed(cfg.seed, 0x76616cull, uint64_t(key.group), uint64_t(key.head)));
            std::vector<int64_t> val_idx = split_rng.sample_without_replacement(total, val_count);
            std::vector<bool> is_val(size_t(total), false);
            for (int64_t i : val_idx) is_val[size_t(i)] = true;
            train_rows.resize(total - val_count, chunk_dim);
            val_rows.resize(val_count, chunk_dim);
            int64_t tr = 0, va = 0;
            for (int64_t i = 0; i < total; ++i) {
                if (is_val[size_t(i)]) {
                    val_rows.row(va++) = all.row(i);
                } else {
                    train_rows.row(tr++) = all.row(i);
                }
            }
        }

        TrainConfig task_cfg = cfg;
        task_cfg.num_atoms = per_head_atoms;
        task_cfg.seed = mix_seed(cfg.seed, 0x6d657267656400ull, uint64_t(key.group),
                                 uint64_t(key.head) << 16 | uint64_t(key.chunk));

        TrainResult r = train_neural_dict(train_rows, task_cfg, val_rows);

        json rep = {{"group", key.group},
                    {"head", key.head},
                    {"chunk", key.chunk},
                    {"samples", total},
                    {"report", r.report.to_json()}};

        Dictionary d(r.W.cast<float>(), dataset.header.kind, Provenance::Offline);
        std::lock_guard<std::mutex> lock(mu);
        dicts.emplace(key, std::move(d));
        reports.emplace(key, std::move(rep));
    });

    out.store.dicts = std::move(dicts);
    out.store.validate();

    json per_dict = json::array();
    for (auto& [key, rep] : reports) per_dict.push_back(std::move(rep));
    out.report = {{"schema_version", 1},
                  {"kind", kind_name(dataset.header.kind)},
                  {"per_head_atoms", per_head_atoms},
                  {"head_shared", head_shared},
                  {"val_fraction", val_fraction},
                  {"train_config", cfg.to_json()},
                  {"merge_plan", plan.to_json()},
                  {"dictionaries", std::move(per_dict)}};
    return out;
}

} // namespace csr
