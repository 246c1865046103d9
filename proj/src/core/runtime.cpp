// SPDX-License-Identifier: Apache-2.0

#include "core/runtime.hpp"

#include <cstring>

#include "core/binio.hpp"
#include "core/half.hpp"
#include "core/rng.hpp"

namespace csr {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'R', 'S'};
constexpr uint32_t kVersion = 1;

} // namespace

DictSet PromptDictionary::dict_set() const {
    DictSet set;
    set.reserve(chunk_dicts.size());
    for (const Dictionary& d : chunk_dicts) set.push_back(&d);
    return set;
}

PromptDictionary build_prompt_dictionary(const std::vector<const Dictionary*>& offline,
                                         const Eigen::MatrixXf& prefill_vectors,
                                         int64_t online_size, uint64_t seed) {
    CSR_REQUIRE(!offline.empty(), ErrorCode::InvalidArgument, "no offline dictionaries given");
    const int s_n = int(offline.size());
    const int chunk_dim = offline[0]->chunk_dim();
    for (const Dictionary* d : offline) {
        CSR_REQUIRE(d != nullptr && d->chunk_dim() == chunk_dim, ErrorCode::DimensionMismatch,
                    "offline chunk dictionaries disagree on chunk_dim");
    }
    CSR_REQUIRE(online_size >= 0, ErrorCode::InvalidArgument, "online_size must be >= 0");
    const int offline_atoms = offline[0]->num_atoms();
    for (const Dictionary* d : offline) {
        CSR_REQUIRE(d->num_atoms() == offline_atoms, ErrorCode::DimensionMismatch,
                    "offline chunk dictionaries disagree on atom count");
    }
    // every index plus the reserved outlier sentinel must fit u16
    CSR_REQUIRE(int64_t(offline_atoms) + online_size <= kMaxAtoms, ErrorCode::IndexSpaceOverflow,
                "offline + online atoms exceed the index space limit of " +
                    std::to_string(kMaxAtoms));

    PromptDictionary out;
    out.offline_atoms = offline_atoms;
    out.online_atoms.assign(size_t(s_n), 0);

    std::vector<Eigen::MatrixXf> online(static_cast<size_t>(s_n));
    if (online_size > 0) {
        CSR_REQUIRE(prefill_vectors.rows() > 0, ErrorCode::InvalidArgument,
                    "online part requested but the prefill is empty");
        CSR_REQUIRE(int(prefill_vectors.cols()) == chunk_dim * s_n, ErrorCode::DimensionMismatch,
                    "prefill width does not match the dictionary layout");

        const int64_t n = prefill_vectors.rows();
        const int64_t pairs = (online_size + 1) / 2;
        Rng rng(mix_seed(seed, 0x6f6e6c696e65ull));
        std::vector<int64_t> picks;
        if (pairs <= n) {
            picks = rng.sample_without_replacement(n, pairs);
        } else {
            picks = rng.sample_without_replacement(n, n);
            for (int64_t i = n; i < pairs; ++i) picks.push_back(rng.uniform_int(n));
        }

        for (int c = 0; c < s_n; ++c) {
            Eigen::MatrixXf atoms(chunk_dim, online_size);
            int made = 0;
            for (int64_t pick : picks) {
                Eigen::VectorXd slice = prefill_vectors.row(pick)
                                            .segment(c * chunk_dim, chunk_dim)
                                            .cast<double>();
                double norm = slice.norm();
                if (norm <= 1e-12) continue; // this chunk of the token carries no direction
                Eigen::VectorXf unit = (slice / norm).cast<float>();
                if (made < online_size) atoms.col(made++) = unit;
                if (made < online_size) atoms.col(made++) = -unit;
                if (made == online_size) break;
            }
            online[size_t(c)] = atoms.leftCols(made);
            out.online_atoms[size_t(c)] = made;
        }
    }

    for (int c = 0; c < s_n; ++c) {
        int total = offline_atoms + out.online_atoms[size_t(c)];
        Eigen::MatrixXf atoms(chunk_dim, total);
        atoms.leftCols(offline_atoms) = offline[size_t(c)]->atoms();
        if (out.online_atoms[size_t(c)] > 0) {
            atoms.rightCols(out.online_atoms[size_t(c)]) = online[size_t(c)];
        }
        out.chunk_dicts.emplace_back(std::move(atoms), offline[size_t(c)]->kind(),
                                     Provenance::Composite, offline_atoms);
    }
    return out;
}

json MemoryReport::to_json() const {
    return json{{"bytes_codes", bytes_codes},
                {"bytes_online_dict", bytes_online_dict},
                {"bytes_offline_dict_amortized", bytes_offline_dict_amortized},
                {"bytes_outliers", bytes_outliers},
                {"bytes_dense_equivalent", bytes_dense_equivalent},
                {"equivalent_bits_per_channel", equivalent_bits_per_channel},
                {"compression_ratio", compression_ratio}};
}

const CacheLane& CsrCache::lane(int layer, int head) const {
    CSR_REQUIRE(layer >= 0 && layer < num_layers_ && head >= 0 && head < num_heads_,
                ErrorCode::IndexOutOfRange,
                "no lane for layer " + std::to_string(layer) + ", head " + std::to_string(head));
    return lanes_[size_t(layer) * size_t(num_heads_) + size_t(head)];
}

CacheLane& CsrCache::lane_mut(int layer, int head) {
    return const_cast<CacheLane&>(lane(layer, head));
}

int64_t CsrCache::token_count(int layer, int head) const {
    return int64_t(lane(layer, head).codes.size());
}

void CsrCache::prefill_compress(int layer, int head, const Eigen::MatrixXf& X_prompt) {
    CacheLane& ln = lane_mut(layer, head);
    std::vector<SparseCode> codes = encode_batch(X_prompt, ln.pdict.dict_set(), codec_);
    for (SparseCode& code : codes) {
        quantize_code_f16(code);
        if (code.is_outlier) ln.outlier_tokens.push_back(int64_t(ln.codes.size()));
        ln.codes.push_back(std::move(code));
    }
}

void CsrCache::append_token(int layer, int head, const Eigen::VectorXf& x) {
    CacheLane& ln = lane_mut(layer, head);
    SparseCode code = encode_vector(x, ln.pdict.dict_set(), codec_);
    quantize_code_f16(code);
    if (code.is_outlier) ln.outlier_tokens.push_back(int64_t(ln.codes.size()));
    ln.codes.push_back(std::move(code));
}

Eigen::MatrixXf CsrCache::decode_range(int layer, int head, int64_t from, int64_t to) const {
    const CacheLane& ln = lane(layer, head);
    CSR_REQUIRE(from >= 0 && from <= to && to <= int64_t(ln.codes.size()),
                ErrorCode::IndexOutOfRange, "decode range outside the token count");
    Eigen::MatrixXf out(to - from, codec_.head_dim);
    DictSet dicts = ln.pdict.dict_set();
    for (int64_t t = from; t < to; ++t) {
        out.row(t - from) = desparse(ln.codes[size_t(t)], dicts, codec_).transpose();
    }
    return out;
}

Eigen::MatrixXf CsrCache::decode_all(int layer, int head) const {
    return decode_range(layer, head, 0, token_count(layer, head));
}

MemoryReport CsrCache::memory_report() const {
    MemoryReport rep;
    rep.bytes_offline_dict_amortized = offline_bytes_f16_;

    int64_t total_entries = 0;
    int64_t total_tokens = 0;
    int64_t total_outliers = 0;
    for (const CacheLane& ln : lanes_) {
        total_tokens += int64_t(ln.codes.size());
        total_outliers += int64_t(ln.outlier_tokens.size());
        for (const SparseCode& code : ln.codes) {
            if (code.is_outlier) continue;
            for (const auto& chunk : code.chunks) total_entries += int64_t(chunk.size());
        }
        for (size_t c = 0; c < ln.pdict.chunk_dicts.size(); ++c) {
            rep.bytes_online_dict +=
                2LL * ln.pdict.online_atoms[c] * ln.pdict.chunk_dicts[c].chunk_dim();
        }
    }
    rep.bytes_codes = 4 * total_entries; // u16 index + f16 coefficient per entry
    rep.bytes_outliers = 2LL * codec_.head_dim * total_outliers;
    rep.bytes_dense_equivalent = 2LL * codec_.head_dim * total_tokens;

    if (total_tokens > 0) {
        if (total_outliers == 0) {
            rep.equivalent_bits_per_channel = equivalent_bits(codec_);
        } else {
            double channels = double(total_tokens) * double(codec_.head_dim);
            rep.equivalent_bits_per_channel =
                8.0 * double(rep.bytes_codes + rep.bytes_outliers) / channels;
        }
    }
    int64_t denom = rep.bytes_codes + rep.bytes_online_dict + rep.bytes_outliers;
    rep.compression_ratio = denom > 0 ? double(rep.bytes_dense_equivalent) / double(denom) : 0.0;
    return rep;
}

std::vector<uint8_t> CsrCache::serialize() const {
    json meta = {{"kind", kind_name(kind_)},
                 {"num_layers", num_layers_},
                 {"num_heads", num_heads_},
                 {"codec", codec_.to_json()},
                 {"online_size", online_size_},
                 {"seed", seed_},
                 {"offline_bytes_f16", offline_bytes_f16_}};

    ByteWriter w;
    w.put_bytes(kMagic, 4);
    w.put_u32(kVersion);
    w.put_u64(dict_hash_);
    w.put_string(meta.dump());

    for (int layer = 0; layer < num_layers_; ++layer) {
        for (int head = 0; head < num_heads_; ++head) {
            const CacheLane& ln = lane(layer, head);
            w.put_u32(uint32_t(layer));
            w.put_u32(uint32_t(head));
            w.put_u64(uint64_t(ln.codes.size()));
            for (size_t c = 0; c < ln.pdict.chunk_dicts.size(); ++c) {
                const Dictionary& d = ln.pdict.chunk_dicts[c];
                int online = ln.pdict.online_atoms[c];
                w.put_u32(uint32_t(online));
                // online atoms stay f32: they must reload exactly, and the
                // memory model already charges them at 2 bytes per element
                for (int a = 0; a < online; ++a) {
                    for (int r = 0; r < d.chunk_dim(); ++r) {
                        w.put_f32(d.atoms()(r, d.offline_count() + a));
                    }
                }
            }
            for (const SparseCode& code : ln.codes) serialize_code(w, code, codec_);
        }
    }
    return w.take();
}

CsrCache CsrCache::deserialize(const uint8_t* data, size_t size, const DictStore& dicts) {
    ByteReader r(data, size);
    char magic[4];
    try {
        r.get_bytes(magic, 4);
    } catch (const Error&) {
        throw Error(ErrorCode::BadMagic, "stream shorter than magic");
    }
    CSR_REQUIRE(std::memcmp(magic, kMagic, 4) == 0, ErrorCode::BadMagic,
                "expected CSRS container");
    uint32_t version = r.get_u32();
    CSR_REQUIRE(version == kVersion, ErrorCode::UnsupportedVersion,
                "CSRS version " + std::to_string(version) + " not supported");

    uint64_t hash = r.get_u64();
    CSR_REQUIRE(hash == dicts.content_hash(), ErrorCode::SchemaMismatch,
                "snapshot references a different offline dictionary store");

    json meta = parse_json(r.get_string(), "CSRS metadata");
    check_keys(meta, "CSRS metadata",
               {"kind", "num_layers", "num_heads", "codec", "online_size", "seed",
                "offline_bytes_f16"});

    CsrCache out;
    out.kind_ = parse_kind(json_get<std::string>(meta, "kind", "CSRS metadata"));
    out.num_layers_ = json_get<int>(meta, "num_layers", "CSRS metadata");
    out.num_heads_ = json_get<int>(meta, "num_heads", "CSRS metadata");
    out.codec_ = CodecConfig::from_json(json_get<json>(meta, "codec", "CSRS metadata"));
    out.online_size_ = json_get<int64_t>(meta, "online_size", "CSRS metadata");
    out.seed_ = json_get<uint64_t>(meta, "seed", "CSRS metadata");
    out.offline_bytes_f16_ = json_get<int64_t>(meta, "offline_bytes_f16", "CSRS metadata");
    out.dict_hash_ = hash;

    CSR_REQUIRE(out.kind_ == dicts.kind, ErrorCode::SchemaMismatch,
                "snapshot kind does not match the dictionary store");
    CSR_REQUIRE(out.num_layers_ == dicts.plan.num_layers() && out.num_heads_ == dicts.num_heads,
                ErrorCode::SchemaMismatch, "snapshot geometry does not match the store");
    CSR_REQUIRE(out.codec_.s_n == dicts.s_n && out.codec_.head_dim == dicts.head_dim(),
                ErrorCode::SchemaMismatch, "snapshot codec does not match the store layout");
    CSR_REQUIRE(out.num_layers_ >= 1 && out.num_heads_ >= 1, ErrorCode::FormatError,
                "snapshot geometry must be positive");

    out.lanes_.resize(size_t(out.num_layers_) * size_t(out.num_heads_));
    const int chunk_dim = out.codec_.chunk_dim();

    for (int layer = 0; layer < out.num_layers_; ++layer) {
        for (int head = 0; head < out.num_heads_; ++head) {
            CSR_REQUIRE(r.remaining() >= 16, ErrorCode::Truncated, "truncated lane header");
            uint32_t got_layer = r.get_u32();
            uint32_t got_head = r.get_u32();
            CSR_REQUIRE(int(got_layer) == layer && int(got_head) == head, ErrorCode::FormatError,
                        "snapshot lanes out of order");
            uint64_t count = r.get_u64();

            CacheLane& ln = out.lanes_[size_t(layer) * size_t(out.num_heads_) + size_t(head)];
            ln.pdict.offline_atoms = dicts.per_head_atoms;
            ln.pdict.online_atoms.assign(size_t(out.codec_.s_n), 0);
            for (int c = 0; c < out.codec_.s_n; ++c) {
                uint32_t online = r.get_u32();
                CSR_REQUIRE(int64_t(online) <= out.online_size_, ErrorCode::FormatError,
                            "snapshot online part larger than configured");
                const Dictionary& off = dicts.dict_for_layer(layer, head, c);
                Eigen::MatrixXf atoms(chunk_dim, dicts.per_head_atoms + int(online));
                atoms.leftCols(dicts.per_head_atoms) = off.atoms();
                for (uint32_t a = 0; a < online; ++a) {
                    for (int row = 0; row < chunk_dim; ++row) {
                        atoms(row, dicts.per_head_atoms + int(a)) = r.get_f32();
                    }
                }
                ln.pdict.online_atoms[size_t(c)] = int(online);
                ln.pdict.chunk_dicts.emplace_back(std::move(atoms), out.kind_,
                                                  Provenance::Composite, dicts.per_head_atoms);
            }

            DictSet set = ln.pdict.dict_set();
            ln.codes.reserve(size_t(count));
            for (uint64_t t = 0; t < count; ++t) {
                SparseCode code = deserialize_code(r, out.codec_);
                validate_code(code, set, out.codec_);
                if (code.is_outlier) ln.outlier_tokens.push_back(int64_t(t));
                ln.codes.push_back(std::move(code));
            }
        }
    }
    CSR_REQUIRE(r.at_end(), ErrorCode::FormatError, "trailing bytes after snapshot lanes");
    return out;
}

CsrCache CsrCache::deserialize(const std::vector<uint8_t>& bytes, const DictStore& dicts) {
    return deserialize(bytes.data(), bytes.size(), dicts);
}

void CsrCache::save(const std::string& path) const {
    write_file_atomic(path, serialize());
}

CsrCache CsrCache::load(const std::string& path, const DictStore& dicts) {
    return deserialize(read_file(path), dicts);
}

CsrCache CsrCache::build(const CaptureDataset& capture, const DictStore& dicts,
                         const CodecConfig& codec, int64_t online_size, uint64_t seed) {
    capture.validate();
    dicts.validate();
    codec.validate();
    CSR_REQUIRE(capture.header.kind == dicts.kind, ErrorCode::SchemaMismatch,
                "capture kind does not match the dictionary store");
    CSR_REQUIRE(capture.header.head_dim == dicts.head_dim(), ErrorCode::SchemaMismatch,
                "capture head_dim does not match the dictionary store");
    CSR_REQUIRE(capture.header.num_heads == dicts.num_heads, ErrorCode::SchemaMismatch,
                "capture head count does not match the dictionary store");
    CSR_REQUIRE(capture.header.num_layers == dicts.plan.num_layers(), ErrorCode::SchemaMismatch,
                "capture layer count does not match the merge plan");
    CSR_REQUIRE(codec.head_dim == capture.header.head_dim, ErrorCode::SchemaMismatch,
                "codec head_dim does not match the capture");
    CSR_REQUIRE(codec.s_n == dicts.s_n, ErrorCode::SchemaMismatch,
                "codec s_n does not match the dictionary store");

    CsrCache out;
    out.num_layers_ = capture.header.num_layers;
    out.num_heads_ = capture.header.num_heads;
    out.kind_ = capture.header.kind;
    out.codec_ = codec;
    out.online_size_ = online_size;
    out.seed_ = seed;
    out.dict_hash_ = dicts.content_hash();
    out.offline_bytes_f16_ = 2LL * int64_t(dicts.dicts.size()) * dicts.chunk_dim *
                             dicts.per_head_atoms;
    out.lanes_.resize(size_t(out.num_layers_) * size_t(out.num_heads_));

    for (int layer = 0; layer < out.num_layers_; ++layer) {
        for (int head = 0; head < out.num_heads_; ++head) {
            const CaptureBlock& block = capture.block(layer, head);
            std::vector<const Dictionary*> offline;
            for (int c = 0; c < dicts.s_n; ++c) offline.push_back(&dicts.dict_for_layer(layer, head, c));

            CacheLane& ln = out.lanes_[size_t(layer) * size_t(out.num_heads_) + size_t(head)];
            ln.pdict = build_prompt_dictionary(
                offline, block.vectors, online_size,
                mix_seed(seed, 0x6c616e65ull, uint64_t(layer), uint64_t(head)));
            out.prefill_compress(layer, head, block.vectors);
        }
    }
    return out;
}

} // namespace csr
