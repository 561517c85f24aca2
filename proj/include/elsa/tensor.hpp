#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "elsa/errors.hpp"

namespace elsa {

// Dense row-major float32 tensor. The innermost (last) dimension varies
// fastest; N:M grouping and weight layouts rely on that.
struct Tensor {
    std::vector<std::uint32_t> shape;
    std::vector<float> values;

    Tensor() = default;

    explicit Tensor(std::vector<std::uint32_t> dims, float fill = 0.0f)
        : shape(std::move(dims)) {
        values.assign(element_count(shape), fill);
    }

    static std::size_t element_count(const std::vector<std::uint32_t>& dims) {
        std::size_t n = 1;
        for (const auto d : dims) {
            if (d == 0) throw DimensionError("tensor dimension must be positive");
            n *= d;
        }
        return n;
    }

    std::size_t size() const { return values.size(); }

    std::uint32_t innermost_dim() const {
        return shape.empty() ? 1u : shape.back();
    }

    void check() const {
        if (element_count(shape) != values.size())
            throw DimensionError("tensor shape/value count mismatch");
    }
};

} // namespace elsa
