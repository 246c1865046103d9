// SPDX-License-Identifier: Apache-2.0

#include "core/capture.hpp"

#include <set>

#include "core/binio.hpp"
#include "core/half.hpp"
#include "core/json_util.hpp"
#include "core/rng.hpp"

namespace csr {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'R', 'C'};
constexpr uint32_t kVersion = 1;

} // namespace

const char* kind_name(CaptureKind k) {
    return k == CaptureKind::Key ? "key" : "value";
}

CaptureKind parse_kind(const std::string& s) {
    if (s == "key") return CaptureKind::Key;
    if (s == "value") return CaptureKind::Value;
    throw Error(ErrorCode::ConfigError, "kind must be \"key\" or \"value\", got \"" + s + "\"");
}

const char* dtype_name(Dtype d) {
    return d == Dtype::F32 ? "f32" : "f16";
}

Dtype parse_dtype(const std::string& s) {
    if (s == "f32") return Dtype::F32;
    if (s == "f16") return Dtype::F16;
    throw Error(ErrorCode::ConfigError, "dtype must be \"f32\" or \"f16\", got \"" + s + "\"");
}

void CaptureHeader::validate() const {
    CSR_REQUIRE(num_layers >= 1, ErrorCode::FormatError, "num_layers must be >= 1");
    CSR_REQUIRE(num_heads >= 1, ErrorCode::FormatError, "num_heads must be >= 1");
    CSR_REQUIRE(head_dim >= 1, ErrorCode::FormatError, "head_dim must be >= 1");
    CSR_REQUIRE(kind == CaptureKind::Key || !pre_rope, ErrorCode::FormatError,
                "pre_rope applies to key captures only");
}

const CaptureBlock* CaptureDataset::find_block(int layer, int head) const {
    for (const auto& b : blocks) {
        if (b.layer == layer && b.head == head) return &b;
    }
    return nullptr;
}

const CaptureBlock& CaptureDataset::block(int layer, int head) const {
    const CaptureBlock* b = find_block(layer, head);
    CSR_REQUIRE(b != nullptr, ErrorCode::MissingBlock,
                "no block for layer " + std::to_string(layer) + ", head " + std::to_string(head));
    return *b;
}

void CaptureDataset::validate() const {
    header.validate();
    std::set<std::pair<int, int>> seen;
    for (const auto& b : blocks) {
        std::string id = "block (layer " + std::to_string(b.layer) + ", head " +
                         std::to_string(b.head) + ")";
        CSR_REQUIRE(b.layer >= 0 && b.layer < header.num_layers, ErrorCode::IndexOutOfRange,
                    id + ": layer outside header range");
        CSR_REQUIRE(b.head >= 0 && b.head < header.num_heads, ErrorCode::IndexOutOfRange,
                    id + ": head outside header range");
        CSR_REQUIRE(seen.insert({b.layer, b.head}).second, ErrorCode::DuplicateBlock,
                    id + " appears more than once");
        CSR_REQUIRE(b.vectors.cols() == header.head_dim, ErrorCode::DimensionMismatch,
                    id + ": vector width != head_dim");
        CSR_REQUIRE(b.vectors.allFinite(), ErrorCode::NonFinite, id + " holds non-finite values");
    }
}

std::vector<uint8_t> write_capture(const CaptureDataset& dataset) {
    dataset.validate();
    const CaptureHeader& h = dataset.header;

    json meta = {
        {"model_name", h.model_name}, {"num_layers", h.num_layers}, {"num_heads", h.num_heads},
        {"head_dim", h.head_dim},     {"kind", kind_name(h.kind)},  {"pre_rope", h.pre_rope},
        {"dtype", dtype_name(h.dtype)},
    };

    ByteWriter w;
    w.put_bytes(kMagic, 4);
    w.put_u32(kVersion);
    w.put_string(meta.dump());

    for (const auto& b : dataset.blocks) {
        w.put_u32(uint32_t(b.layer));
        w.put_u32(uint32_t(b.head));
        w.put_u64(uint64_t(b.vectors.rows()));
        for (Eigen::Index r = 0; r < b.vectors.rows(); ++r) {
            for (Eigen::Index c = 0; c < b.vectors.cols(); ++c) {
                if (h.dtype == Dtype::F32) {
                    w.put_f32(b.vectors(r, c));
                } else {
                    w.put_u16(f32_to_f16_bits(b.vectors(r, c)));
                }
            }
        }
    }
    return w.take();
}

CaptureDataset read_capture(const uint8_t* data, size_t size) {
    ByteReader r(data, size);

    char magic[4];
    try {
        r.get_bytes(magic, 4);
    } catch (const Error&) {
        throw Error(ErrorCode::BadMagic, "stream shorter than magic");
    }
    CSR_REQUIRE(std::memcmp(magic, kMagic, 4) == 0, ErrorCode::BadMagic,
                "expected CSRC container");
    uint32_t version = r.get_u32();
    CSR_REQUIRE(version == kVersion, ErrorCode::UnsupportedVersion,
                "CSRC version " + std::to_string(version) + " not supported");

    json meta = parse_json(r.get_string(), "CSRC metadata");
    check_keys(meta, "CSRC metadata",
               {"model_name", "num_layers", "num_heads", "head_dim", "kind", "pre_rope", "dtype"});

    CaptureDataset out;
    out.header.model_name = json_get<std::string>(meta, "model_name", "CSRC metadata");
    out.header.num_layers = json_get<int>(meta, "num_layers", "CSRC metadata");
    out.header.num_heads = json_get<int>(meta, "num_heads", "CSRC metadata");
    out.header.head_dim = json_get<int>(meta, "head_dim", "CSRC metadata");
    out.header.kind = parse_kind(json_get<std::string>(meta, "kind", "CSRC metadata"));
    out.header.pre_rope = json_get<bool>(meta, "pre_rope", "CSRC metadata");
    out.header.dtype = parse_dtype(json_get<std::string>(meta, "dtype", "CSRC metadata"));
    out.header.validate();

    size_t elem = out.header.dtype == Dtype::F32 ? 4 : 2;
    size_t stride = elem * size_t(out.header.head_dim);

    while (!r.at_end()) {
        CSR_REQUIRE(r.remaining() >= 16, ErrorCode::Truncated,
                    "truncated block header at byte " + std::to_string(r.pos()));
        CaptureBlock b;
        b.layer = int(r.get_u32());
        b.head = int(r.get_u32());
        uint64_t count = r.get_u64();
        std::string id = "block (layer " + std::to_string(b.layer) + ", head " +
                         std::to_string(b.head) + ")";
        CSR_REQUIRE(count <= r.remaining() / stride, ErrorCode::Truncated, id + " is truncated");

        b.vectors.resize(Eigen::Index(count), out.header.head_dim);
        for (Eigen::Index row = 0; row < b.vectors.rows(); ++row) {
            for (Eigen::Index col = 0; col < b.vectors.cols(); ++col) {
                b.vectors(row, col) = out.header.dtype == Dtype::F32
                                          ? r.get_f32()
                                          : f16_bits_to_f32(r.get_u16());
            }
        }
        out.blocks.push_back(std::move(b));
    }

    out.validate();
    return out;
}

CaptureDataset read_capture(const std::vector<uint8_t>& bytes) {
    return read_capture(bytes.data(), bytes.size());
}

void save_capture(const CaptureDataset& dataset, const std::string& path) {
    write_file_atomic(path, write_capture(dataset));
}

CaptureDataset load_capture(const std::string& path) {
    return read_capture(read_file(path));
}

Eigen::MatrixXf sample_vectors(const CaptureDataset& dataset, const std::vector<int>& layer_set,
                               int head, int64_t max_count, uint64_t seed) {
    CSR_REQUIRE(max_count > 0, ErrorCode::InvalidArgument, "max_count must be positive");

    int64_t total = 0;
    std::vector<const CaptureBlock*> parts;
    parts.reserve(layer_set.size());
    for (int layer : layer_set) {
        const CaptureBlock& b = dataset.block(layer, head);
        parts.push_back(&b);
        total += b.vectors.rows();
    }

    Eigen::MatrixXf all(total, dataset.header.head_dim);
    int64_t at = 0;
    for (const CaptureBlock* b : parts) {
        all.middleRows(at, b->vectors.rows()) = b->vectors;
        at += b->vectors.rows();
    }
    if (total <= max_count) return all;

    Rng rng(mix_seed(seed, 0x73616d70ull, uint64_t(head)));
    std::vector<int64_t> keep = rng.sample_without_replacement(total, max_count);
    Eigen::MatrixXf out(max_count, all.cols());
    for (int64_t i = 0; i < max_count; ++i) out.row(i) = all.row(keep[size_t(i)]);
    return out;
}

} // namespace csr
