#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "elsa/errors.hpp"
#include "elsa/tensor.hpp"

namespace elsa {

struct ParamEntry {
    std::string name;
    Tensor tensor;
    bool prunable = false;
};

// Per-prunable-weight binary mask: 1 = learnable, 0 = frozen.
using Mask = std::vector<std::uint8_t>;

// Per-prunable-weight first-freeze step; T+1 = never frozen.
using Counter = std::vector<std::uint16_t>;

// Ordered, named collection of weight tensors. Prunable scalars form a
// flat index space [0, D) in entry order; masks, counters, scores and
// keepsets are all indexed by it. D is fixed for a given architecture.
class ParamSet {
public:
    ParamSet() = default;

    explicit ParamSet(std::vector<ParamEntry> entries)
        : entries_(std::move(entries)) {
        rebuild_index();
    }

    void add(std::string name, Tensor tensor, bool prunable) {
        tensor.check();
        entries_.push_back({std::move(name), std::move(tensor), prunable});
        rebuild_index();
    }

    const std::vector<ParamEntry>& entries() const { return entries_; }
    std::vector<ParamEntry>& entries() { return entries_; }

    std::size_t prunable_count() const { return d_; }

    std::size_t total_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.tensor.size();
        return n;
    }

    bool has(const std::string& name) const {
        return by_name_.count(name) != 0;
    }

    const Tensor& tensor(const std::string& name) const {
        return entries_.at(entry_index(name)).tensor;
    }

    Tensor& tensor(const std::string& name) {
        return entries_.at(entry_index(name)).tensor;
    }

    std::size_t entry_index(const std::string& name) const {
        const auto it = by_name_.find(name);
        if (it == by_name_.end()) throw Error("unknown parameter: " + name);
        return it->second;
    }

    // Flat-index resolution: (entry, offset) for prunable scalar i.
    std::pair<std::size_t, std::size_t> locate(std::size_t flat) const {
        std::size_t lo = 0, hi = prunable_entries_.size();
        while (lo + 1 < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (prefix_[mid] <= flat) lo = mid; else hi = mid;
        }
        return {prunable_entries_[lo], flat - prefix_[lo]};
    }

    float get_flat(std::size_t flat) const {
        const auto [e, off] = locate(flat);
        return entries_[e].tensor.values[off];
    }

    void set_flat(std::size_t flat, float v) {
        const auto [e, off] = locate(flat);
        entries_[e].tensor.values[off] = v;
    }

    std::uint32_t bits_flat(std::size_t flat) const {
        return std::bit_cast<std::uint32_t>(get_flat(flat));
    }

    void set_bits_flat(std::size_t flat, std::uint32_t w) {
        set_flat(flat, std::bit_cast<float>(w));
    }

    // Copies the prunable scalars, in flat order, into a contiguous vector.
    std::vector<float> prunable_values() const {
        std::vector<float> out;
        out.reserve(d_);
        for (const auto e : prunable_entries_) {
            const auto& v = entries_[e].tensor.values;
            out.insert(out.end(), v.begin(), v.end());
        }
        return out;
    }

    template <typename Fn> // Fn(std::size_t flat, float& value)
    void for_each_prunable(Fn&& fn) {
        std::size_t flat = 0;
        for (const auto e : prunable_entries_)
            for (auto& v : entries_[e].tensor.values) fn(flat++, v);
    }

    template <typename Fn> // Fn(std::size_t flat, float value)
    void for_each_prunable(Fn&& fn) const {
        std::size_t flat = 0;
        for (const auto e : prunable_entries_)
            for (const auto v : entries_[e].tensor.values) fn(flat++, v);
    }

    // Prunable entry indices in flat order, with their flat-space ranges.
    const std::vector<std::size_t>& prunable_entries() const {
        return prunable_entries_;
    }

    std::pair<std::size_t, std::size_t> flat_range(std::size_t entry) const {
        for (std::size_t k = 0; k < prunable_entries_.size(); ++k)
            if (prunable_entries_[k] == entry)
                return {prefix_[k], prefix_[k] + entries_[entry].tensor.size()};
        throw Error("parameter is not prunable: " + entries_.at(entry).name);
    }

private:
    void rebuild_index() {
        by_name_.clear();
        prunable_entries_.clear();
        prefix_.clear();
        d_ = 0;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (!by_name_.emplace(entries_[i].name, i).second)
                throw Error("duplicate parameter name: " + entries_[i].name);
            if (entries_[i].prunable) {
                prunable_entries_.push_back(i);
                prefix_.push_back(d_);
                d_ += entries_[i].tensor.size();
            }
        }
    }

    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, std::size_t> by_name_;
    std::vector<std::size_t> prunable_entries_; // entry index per prunable tensor
    std::vector<std::size_t> prefix_;           // flat-space start per prunable tensor
    std::size_t d_ = 0;
};

} // namespace elsa
