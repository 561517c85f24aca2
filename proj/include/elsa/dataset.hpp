#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "elsa/errors.hpp"
#include "elsa/network.hpp"
#include "elsa/rng.hpp"

namespace elsa {

// Gaussian blobs: `classes` unit-variance clusters whose centers are
// `separation` apart along seeded random directions. Balanced labels in
// round-robin order; deterministic for a fixed seed.
inline LabeledData make_blobs(std::uint32_t classes, std::uint32_t dim,
                              float separation, std::size_t n,
                              std::uint64_t seed) {
    if (classes < 2 || dim == 0 || n == 0)
        throw DataError("blobs: need classes >= 2, dim >= 1, n >= 1");
    Rng rng(Rng::derive(seed, "blobs"));

    // Centers: random unit directions scaled to separation/2 from origin,
    // re-drawn until pairwise distances reach the requested separation.
    std::vector<std::vector<float>> centers;
    for (std::uint32_t c = 0; c < classes; ++c) {
        for (int attempt = 0;; ++attempt) {
            std::vector<float> dir(dim);
            double norm = 0.0;
            for (auto& v : dir) {
                v = rng.normal();
                norm += static_cast<double>(v) * v;
            }
            norm = std::sqrt(norm);
            if (norm < 1e-9) continue;
            const float radius = separation * (0.5f + 0.5f * static_cast<float>(c));
            for (auto& v : dir) v = static_cast<float>(v / norm) * radius;
            bool ok = true;
            for (const auto& other : centers) {
                double d2 = 0.0;
                for (std::uint32_t k = 0; k < dim; ++k) {
                    const double d = dir[k] - other[k];
                    d2 += d * d;
                }
                if (std::sqrt(d2) < separation) { ok = false; break; }
            }
            if (ok || attempt > 256) {
                centers.push_back(std::move(dir));
                break;
            }
        }
    }

    LabeledData data;
    data.n = n;
    data.dim = dim;
    data.classes = classes;
    data.features.resize(n * dim);
    data.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t c = static_cast<std::uint32_t>(i % classes);
        data.labels[i] = static_cast<std::int32_t>(c);
        for (std::uint32_t k = 0; k < dim; ++k)
            data.features[i * dim + k] = centers[c][k] + rng.normal();
    }
    return data;
}

// Two interleaved spirals in the plane, the classic non-linearly-separable
// toy problem.
inline LabeledData make_two_spirals(std::size_t n, float noise, std::uint64_t seed) {
    if (n == 0) throw DataError("spirals: n must be >= 1");
    Rng rng(Rng::derive(seed, "spirals"));
    LabeledData data;
    data.n = n;
    data.dim = 2;
    data.classes = 2;
    data.features.resize(n * 2);
    data.labels.resize(n);
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 2);
        const double t = 0.25 + 3.0 * (static_cast<double>(i / 2) /
                                       std::max<std::size_t>(1, n / 2));
        const double angle = t * 2.0 * pi + (cls == 1 ? pi : 0.0);
        const double r = t;
        data.features[i * 2 + 0] =
            static_cast<float>(r * std::cos(angle)) + noise * rng.normal();
        data.features[i * 2 + 1] =
            static_cast<float>(r * std::sin(angle)) + noise * rng.normal();
        data.labels[i] = cls;
    }
    return data;
}

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, std::size_t& offset,
                                 const std::string& path) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in)
        throw DataError("IDX parse error in " + path + " at offset " +
                        std::to_string(offset) + ": truncated header");
    offset += 4;
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

} // namespace detail

// Standard IDX file (unsigned-byte payload): magic 0x0000'08'<ndims>,
// big-endian u32 dims, then raw bytes.
struct IdxTensor {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;
};

inline IdxTensor read_idx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open IDX file: " + path);
    std::size_t offset = 0;
    const std::uint32_t magic = detail::read_u32_be(in, offset, path);
    if ((magic >> 16) != 0)
        throw DataError("IDX parse error in " + path +
                        " at offset 0: bad magic high bytes");
    const std::uint32_t type = (magic >> 8) & 0xff;
    if (type != 0x08)
        throw DataError("IDX parse error in " + path +
                        " at offset 2: unsupported data type " + std::to_string(type));
    const std::uint32_t ndims = magic & 0xff;
    if (ndims == 0 || ndims > 4)
        throw DataError("IDX parse error in " + path +
                        " at offset 3: bad dimension count " + std::to_string(ndims));
    IdxTensor t;
    std::size_t total = 1;
    for (std::uint32_t i = 0; i < ndims; ++i) {
        const std::uint32_t d = detail::read_u32_be(in, offset, path);
        t.dims.push_back(d);
        total *= d;
    }
    t.data.resize(total);
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(total));
    if (static_cast<std::size_t>(in.gcount()) != total)
        throw DataError("IDX parse error in " + path + " at offset " +
                        std::to_string(offset + static_cast<std::size_t>(in.gcount())) +
                        ": truncated payload");
    return t;
}

// Pairs an IDX image file (n x r x c or n x d) with an IDX label file (n).
// Pixels are scaled to [0, 1].
inline LabeledData load_idx_dataset(const std::string& images_path,
                                    const std::string& labels_path) {
    const IdxTensor images = read_idx(images_path);
    const IdxTensor labels = read_idx(labels_path);
    if (labels.dims.size() != 1)
        throw DataError("IDX labels must be 1-d: " + labels_path);
    if (images.dims.empty() || images.dims[0] != labels.dims[0])
        throw DataError("IDX image/label counts differ");
    LabeledData data;
    data.n = images.dims[0];
    if (data.n == 0) throw DataError("IDX dataset is empty");
    std::size_t dim = 1;
    for (std::size_t i = 1; i < images.dims.size(); ++i) dim *= images.dims[i];
    data.dim = dim;
    data.features.resize(data.n * dim);
    for (std::size_t i = 0; i < data.features.size(); ++i)
        data.features[i] = static_cast<float>(images.data[i]) / 255.0f;
    data.labels.resize(data.n);
    std::int32_t max_label = 0;
    for (std::size_t i = 0; i < data.n; ++i) {
        data.labels[i] = static_cast<std::int32_t>(labels.data[i]);
        max_label = std::max(max_label, data.labels[i]);
    }
    data.classes = static_cast<std::uint32_t>(max_label) + 1;
    return data;
}

} // namespace elsa
