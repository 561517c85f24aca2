#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "elsa/errors.hpp"
#include "elsa/lsbpack.hpp"
#include "elsa/network.hpp"
#include "elsa/param_set.hpp"
#include "elsa/sha256.hpp"

namespace elsa {

// ---------------------------------------------------------------------------
// Packed checkpoint: the on-disk dense model with LSB-stamped weights.
//
// Layout, all integers little-endian:
//   magic        "ELSA"
//   version      u16   (= 1)
//   T            u16   number of embedded sparsity levels
//   tau          u8    stamped LSB count; readers accept tau >= ceil(log2(T+1))
//   layer_count  u32
//   per layer:   name_len u32, name bytes, prunable u8, rank u32, dims u32[rank]
//   payload:     per layer, row-major float32 words
//   bn_set_count u32   (T+1 sets: levels 1..T then full; or 1 full-only; or 0)
//   per set:     bn_layer_count u32, then per BN layer:
//                dim u32, mean f32[dim], var f32[dim]
//   checksum     u64   FNV-1a 64 over every preceding byte
// ---------------------------------------------------------------------------

struct LayerRecord {
    std::string name;
    bool prunable = false;
    std::vector<std::uint32_t> dims;

    std::size_t weight_count() const {
        std::size_t n = 1;
        for (const auto d : dims) n *= d;
        return n;
    }
};

struct PackedCheckpoint {
    std::uint16_t version = 1;
    std::uint16_t t_levels = 0;
    std::uint8_t tau = 0;
    std::vector<LayerRecord> layers;
    std::vector<std::vector<float>> payload; // aligned with layers
    std::vector<BatchNormStats> bn_sets;

    std::size_t total_weights() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weight_count();
        return n;
    }

    std::size_t header_bytes() const {
        std::size_t n = 4 + 2 + 2 + 1 + 4;
        for (const auto& l : layers) n += 4 + l.name.size() + 1 + 4 + 4 * l.dims.size();
        return n;
    }

    std::size_t bn_bytes() const {
        std::size_t n = 4;
        for (const auto& s : bn_sets) {
            n += 4;
            for (const auto& pl : s.layers) n += 4 + 8 * pl.mean.size();
        }
        return n;
    }

    std::size_t file_bytes() const {
        return header_bytes() + 4 * total_weights() + bn_bytes() + 8;
    }
};

inline constexpr char kMagic[4] = {'E', 'L', 'S', 'A'};
inline constexpr std::uint16_t kFormatVersion = 1;

namespace detail {

class ByteWriter {
public:
    explicit ByteWriter(std::ostream& out) : out_(out) {}

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write failure");
        fnv_.update(p, n);
        written_ += n;
    }

    void u8(std::uint8_t v) { bytes(&v, 1); }

    void u16(std::uint16_t v) {
        const std::uint8_t b[2] = {std::uint8_t(v), std::uint8_t(v >> 8)};
        bytes(b, 2);
    }

    void u32(std::uint32_t v) {
        const std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8),
                                   std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
        bytes(b, 4);
    }

    void u64_raw(std::uint64_t v) { // does not feed the checksum
        std::uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = std::uint8_t(v >> (8 * i));
        out_.write(reinterpret_cast<const char*>(b), 8);
        if (!out_) throw IoError("write failure");
        written_ += 8;
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    std::uint64_t checksum() const { return fnv_.value(); }
    std::size_t written() const { return written_; }

private:
    std::ostream& out_;
    Fnv64 fnv_;
    std::size_t written_ = 0;
};

class ByteReader {
public:
    explicit ByteReader(std::istream& in) : in_(in) {}

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw IntegrityError("unexpected end of stream at offset " +
                                 std::to_string(offset_));
        fnv_.update(p, n);
        offset_ += n;
    }

    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }

    std::uint16_t u16() {
        std::uint8_t b[2];
        bytes(b, 2);
        return std::uint16_t(b[0]) | (std::uint16_t(b[1]) << 8);
    }

    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
               (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
    }

    std::uint64_t u64_raw() { // does not feed the checksum
        std::uint8_t b[8];
        in_.read(reinterpret_cast<char*>(b), 8);
        if (in_.gcount() != 8)
            throw IntegrityError("unexpected end of stream at offset " +
                                 std::to_string(offset_));
        offset_ += 8;
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::uint64_t checksum() const { return fnv_.value(); }
    std::size_t offset() const { return offset_; }

private:
    std::istream& in_;
    Fnv64 fnv_;
    std::size_t offset_ = 0;
};

inline void write_header(ByteWriter& w, std::uint16_t t_levels, std::uint8_t tau,
                         const std::vector<LayerRecord>& layers) {
    w.bytes(kMagic, 4);
    w.u16(kFormatVersion);
    w.u16(t_levels);
    w.u8(tau);
    w.u32(static_cast<std::uint32_t>(layers.size()));
    for (const auto& l : layers) {
        w.u32(static_cast<std::uint32_t>(l.name.size()));
        w.bytes(l.name.data(), l.name.size());
        w.u8(l.prunable ? 1 : 0);
        w.u32(static_cast<std::uint32_t>(l.dims.size()));
        for (const auto d : l.dims) w.u32(d);
    }
}

inline void write_bn_set(ByteWriter& w, const BatchNormStats& s) {
    w.u32(static_cast<std::uint32_t>(s.layers.size()));
    for (const auto& pl : s.layers) {
        w.u32(static_cast<std::uint32_t>(pl.mean.size()));
        for (const auto v : pl.mean) w.f32(v);
        for (const auto v : pl.var) w.f32(v);
    }
}

struct ParsedHeader {
    std::uint16_t version = 0;
    std::uint16_t t_levels = 0;
    std::uint8_t tau = 0;
    std::vector<LayerRecord> layers;
};

inline ParsedHeader read_header(ByteReader& r) {
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw IntegrityError("bad magic: not a packed model file");
    ParsedHeader h;
    h.version = r.u16();
    if (h.version != kFormatVersion)
        throw IntegrityError("unsupported format version " +
                             std::to_string(h.version));
    h.t_levels = r.u16();
    h.tau = r.u8();
    if (h.t_levels > 0 && h.tau < tau_for(h.t_levels))
        throw IntegrityError("tau too small for level count");
    const std::uint32_t layer_count = r.u32();
    h.layers.resize(layer_count);
    for (auto& l : h.layers) {
        const std::uint32_t name_len = r.u32();
        if (name_len > 4096)
            throw IntegrityError("implausible layer name length at offset " +
                                 std::to_string(r.offset() - 4));
        l.name.resize(name_len);
        r.bytes(l.name.data(), name_len);
        l.prunable = r.u8() != 0;
        const std::uint32_t rank = r.u32();
        if (rank > 8)
            throw IntegrityError("implausible tensor rank at offset " +
                                 std::to_string(r.offset() - 4));
        l.dims.resize(rank);
        for (auto& d : l.dims) d = r.u32();
    }
    return h;
}

} // namespace detail

inline void write_checkpoint(std::ostream& out, const PackedCheckpoint& ckpt) {
    // a finalized payload never carries a stamp above T
    for (std::size_t li = 0; li < ckpt.layers.size(); ++li) {
        if (!ckpt.layers[li].prunable) continue;
        for (const float v : ckpt.payload[li]) {
            const auto lsb = read_lsb(std::bit_cast<std::uint32_t>(v), ckpt.tau);
            if (lsb > ckpt.t_levels)
                throw ContractError("payload not finalized: stamp " +
                                    std::to_string(lsb) + " exceeds T");
        }
    }
    detail::ByteWriter w(out);
    detail::write_header(w, ckpt.t_levels, ckpt.tau, ckpt.layers);
    for (std::size_t li = 0; li < ckpt.layers.size(); ++li) {
        if (ckpt.payload[li].size() != ckpt.layers[li].weight_count())
            throw DimensionError("payload size mismatch for layer " +
                                 ckpt.layers[li].name);
        for (const float v : ckpt.payload[li]) w.f32(v);
    }
    w.u32(static_cast<std::uint32_t>(ckpt.bn_sets.size()));
    for (const auto& s : ckpt.bn_sets) detail::write_bn_set(w, s);
    w.u64_raw(w.checksum());
}

inline void write_checkpoint_file(const std::string& path,
                                  const PackedCheckpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    write_checkpoint(out, ckpt);
    out.flush();
    if (!out) throw IoError("write failure: " + path);
}

// Whole-checkpoint read with up-front checksum verification: a truncated
// or bit-flipped file is rejected before any content is interpreted.
inline PackedCheckpoint read_checkpoint(std::istream& in) {
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const std::string data = buffer.str();
    if (data.size() < 21)
        throw IntegrityError("file too short to be a packed model");
    Fnv64 fnv;
    fnv.update(data.data(), data.size() - 8);
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i)
        stored |= std::uint64_t(std::uint8_t(data[data.size() - 8 + i])) << (8 * i);
    if (stored != fnv.value())
        throw IntegrityError("checksum mismatch: file is corrupt or truncated");

    std::istringstream body(data);
    detail::ByteReader r(body);
    const auto h = detail::read_header(r);
    PackedCheckpoint ckpt;
    ckpt.version = h.version;
    ckpt.t_levels = h.t_levels;
    ckpt.tau = h.tau;
    ckpt.layers = h.layers;
    ckpt.payload.resize(ckpt.layers.size());
    for (std::size_t li = 0; li < ckpt.layers.size(); ++li) {
        ckpt.payload[li].resize(ckpt.layers[li].weight_count());
        for (auto& v : ckpt.payload[li]) v = r.f32();
    }
    const std::uint32_t set_count = r.u32();
    if (set_count != 0 && set_count != 1 &&
        set_count != static_cast<std::uint32_t>(ckpt.t_levels) + 1)
        throw IntegrityError("unexpected batchnorm set count " +
                             std::to_string(set_count));
    ckpt.bn_sets.resize(set_count);
    for (std::uint32_t si = 0; si < set_count; ++si) {
        const std::uint32_t bn_layers = r.u32();
        auto& s = ckpt.bn_sets[si];
        s.level = (set_count == static_cast<std::uint32_t>(ckpt.t_levels) + 1 &&
                   si < ckpt.t_levels)
                      ? static_cast<int>(si) + 1
                      : 0;
        s.layers.resize(bn_layers);
        for (auto& pl : s.layers) {
            const std::uint32_t dim = r.u32();
            if (dim > (1u << 24))
                throw IntegrityError("implausible batchnorm dim at offset " +
                                     std::to_string(r.offset() - 4));
            pl.mean.resize(dim);
            for (auto& v : pl.mean) v = r.f32();
            pl.var.resize(dim);
            for (auto& v : pl.var) v = r.f32();
        }
    }
    if (r.offset() != data.size() - 8)
        throw IntegrityError("trailing bytes before checksum at offset " +
                             std::to_string(r.offset()));
    return ckpt;
}

inline PackedCheckpoint read_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file: " + path);
    return read_checkpoint(in);
}

// ---------------------------------------------------------------------------
// ParamSet conversion
// ---------------------------------------------------------------------------

inline PackedCheckpoint make_checkpoint(const ParamSet& params,
                                        std::uint16_t t_levels, std::uint8_t tau,
                                        std::vector<BatchNormStats> bn_sets) {
    PackedCheckpoint ckpt;
    ckpt.t_levels = t_levels;
    ckpt.tau = tau;
    ckpt.bn_sets = std::move(bn_sets);
    for (const auto& e : params.entries()) {
        LayerRecord rec;
        rec.name = e.name;
        rec.prunable = e.prunable;
        rec.dims = e.tensor.shape;
        ckpt.layers.push_back(std::move(rec));
        ckpt.payload.push_back(e.tensor.values);
    }
    return ckpt;
}

inline ParamSet checkpoint_params(const PackedCheckpoint& ckpt) {
    std::vector<ParamEntry> entries;
    entries.reserve(ckpt.layers.size());
    for (std::size_t li = 0; li < ckpt.layers.size(); ++li) {
        Tensor t;
        t.shape = ckpt.layers[li].dims;
        t.values = ckpt.payload[li];
        t.check();
        entries.push_back({ckpt.layers[li].name, std::move(t), ckpt.layers[li].prunable});
    }
    return ParamSet(std::move(entries));
}

// ---------------------------------------------------------------------------
// Extraction (offline): keep prunable words with 0 < lsb <= level, zero the
// rest; non-prunable layers pass through. Stamps are preserved so the
// output supports further extraction of lower levels.
// ---------------------------------------------------------------------------

inline const BatchNormStats* stats_for(const PackedCheckpoint& ckpt, int level) {
    // level 0 = the file's full model
    if (ckpt.bn_sets.empty()) return nullptr;
    if (ckpt.bn_sets.size() == static_cast<std::size_t>(ckpt.t_levels) + 1) {
        if (level == 0) return &ckpt.bn_sets.back();
        if (level >= 1 && level <= ckpt.t_levels)
            return &ckpt.bn_sets[static_cast<std::size_t>(level) - 1];
        return nullptr;
    }
    // single-set file: the set describes the full model only
    if (level == 0 || level == ckpt.t_levels) return &ckpt.bn_sets.front();
    return nullptr;
}

inline PackedCheckpoint extract_packed(const PackedCheckpoint& ckpt,
                                       std::uint16_t level) {
    if (level < 1 || level > ckpt.t_levels)
        throw ConfigError("extraction level " + std::to_string(level) +
                          " out of range [1, " + std::to_string(ckpt.t_levels) + "]");
    PackedCheckpoint out;
    out.t_levels = level;
    out.tau = ckpt.tau;
    out.layers = ckpt.layers;
    out.payload.resize(ckpt.payload.size());
    for (std::size_t li = 0; li < ckpt.layers.size(); ++li) {
        if (!ckpt.layers[li].prunable) {
            out.payload[li] = ckpt.payload[li];
            continue;
        }
        auto& dst = out.payload[li];
        dst.resize(ckpt.payload[li].size());
        for (std::size_t k = 0; k < dst.size(); ++k) {
            const std::uint32_t word = std::bit_cast<std::uint32_t>(ckpt.payload[li][k]);
            const std::uint32_t lsb = read_lsb(word, ckpt.tau);
            dst[k] = (lsb >= 1 && lsb <= level) ? ckpt.payload[li][k] : 0.0f;
        }
    }
    if (const auto* s = stats_for(ckpt, level)) {
        BatchNormStats copy = *s;
        copy.level = 0; // it is the extracted file's full-model set now
        out.bn_sets.push_back(std::move(copy));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Extraction (streaming): one sequential pass, memory bounded by the
// header, one payload word, and the batchnorm section. Output bytes are
// identical to write_checkpoint(extract_packed(...)).
// ---------------------------------------------------------------------------

inline void extract_streaming(std::istream& in, std::uint16_t level,
                              std::ostream& out) {
    detail::ByteReader r(in);
    const auto h = detail::read_header(r);
    if (level < 1 || level > h.t_levels)
        throw ConfigError("extraction level " + std::to_string(level) +
                          " out of range [1, " + std::to_string(h.t_levels) + "]");

    detail::ByteWriter w(out);
    detail::write_header(w, level, h.tau, h.layers);

    for (const auto& l : h.layers) {
        const std::size_t count = l.weight_count();
        for (std::size_t k = 0; k < count; ++k) {
            std::uint32_t word = r.u32();
            if (l.prunable) {
                const std::uint32_t lsb = read_lsb(word, h.tau);
                if (lsb < 1 || lsb > level) word = 0;
            }
            w.u32(word);
        }
    }

    const std::uint32_t set_count = r.u32();
    if (set_count != 0 && set_count != 1 &&
        set_count != static_cast<std::uint32_t>(h.t_levels) + 1)
        throw IntegrityError("unexpected batchnorm set count at offset " +
                             std::to_string(r.offset() - 4));
    const bool full_table = set_count == static_cast<std::uint32_t>(h.t_levels) + 1;
    const bool single_full = set_count == 1 && level == h.t_levels;
    BatchNormStats wanted;
    bool have_wanted = false;
    for (std::uint32_t si = 0; si < set_count; ++si) {
        const bool keep = (full_table && si == std::uint32_t(level) - 1) ||
                          (single_full && si == 0);
        const std::uint32_t bn_layers = r.u32();
        BatchNormStats s;
        if (keep) s.layers.resize(bn_layers);
        for (std::uint32_t bi = 0; bi < bn_layers; ++bi) {
            const std::uint32_t dim = r.u32();
            if (dim > (1u << 24))
                throw IntegrityError("implausible batchnorm dim at offset " +
                                     std::to_string(r.offset() - 4));
            if (keep) {
                auto& pl = s.layers[bi];
                pl.mean.resize(dim);
                for (auto& v : pl.mean) v = r.f32();
                pl.var.resize(dim);
                for (auto& v : pl.var) v = r.f32();
            } else {
                for (std::uint32_t k = 0; k < 2 * dim; ++k) (void)r.u32();
            }
        }
        if (keep) {
            wanted = std::move(s);
            have_wanted = true;
        }
    }
    const std::uint64_t stored = r.u64_raw();
    if (stored != r.checksum())
        throw IntegrityError("checksum mismatch at offset " +
                             std::to_string(r.offset() - 8) +
                             ": file is corrupt or truncated");

    w.u32(have_wanted ? 1u : 0u);
    if (have_wanted) detail::write_bn_set(w, wanted);
    w.u64_raw(w.checksum());
}

// ---------------------------------------------------------------------------
// Digests: SHA-256 over the prunable payload words in flat order, the
// definition of "bit-identical" used by snapshots and `verify`.
// ---------------------------------------------------------------------------

inline std::string prunable_digest(const ParamSet& params) {
    Sha256 h;
    params.for_each_prunable([&](std::size_t, float v) {
        const std::uint32_t w = std::bit_cast<std::uint32_t>(v);
        const std::uint8_t b[4] = {std::uint8_t(w), std::uint8_t(w >> 8),
                                   std::uint8_t(w >> 16), std::uint8_t(w >> 24)};
        h.update(b, 4);
    });
    return Sha256::hex(h.finish());
}

inline std::string prunable_digest(const PackedCheckpoint& ckpt) {
    Sha256 h;
    for (std::size_t li = 0; li < ckpt.layers.size(); ++li) {
        if (!ckpt.layers[li].prunable) continue;
        for (const float v : ckpt.payload[li]) {
            const std::uint32_t w = std::bit_cast<std::uint32_t>(v);
            const std::uint8_t b[4] = {std::uint8_t(w), std::uint8_t(w >> 8),
                                       std::uint8_t(w >> 16), std::uint8_t(w >> 24)};
            h.update(b, 4);
        }
    }
    return Sha256::hex(h.finish());
}

} // namespace elsa
