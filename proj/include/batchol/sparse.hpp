#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace batchol {

struct Feature {
    std::uint32_t index;
    double value;

    friend bool operator==(const Feature&, const Feature&) = default;
};

/// Sparse feature vector. Indices are strictly increasing and values finite.
class SparseVector {
public:
    SparseVector() = default;
    /// Validates ordering and finiteness; throws InvalidArgument otherwise.
    explicit SparseVector(std::vector<Feature> entries);
    SparseVector(std::initializer_list<std::pair<std::uint32_t, double>> entries);

    std::span<const Feature> entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    /// One past the largest index, or 0 when empty.
    std::size_t min_dimension() const noexcept {
        return entries_.empty() ? 0 : entries_.back().index + std::size_t{1};
    }

    friend bool operator==(const SparseVector&, const SparseVector&) = default;

private:
    std::vector<Feature> entries_;
};

struct Example {
    SparseVector features;
    int label = 0;  // 0 = no click, 1 = click

    friend bool operator==(const Example&, const Example&) = default;
};

/// One day of traffic.
struct Batch {
    std::int64_t id = 0;
    std::vector<Example> examples;

    std::size_t size() const noexcept { return examples.size(); }
    bool empty() const noexcept { return examples.empty(); }

    friend bool operator==(const Batch&, const Batch&) = default;
};

/// Largest feature index + 1 over a set of batches.
std::size_t min_dimension(std::span<const Batch> batches);

/// Concatenates batches in order; the result carries the id of the last one.
Batch concatenate(std::span<const Batch> batches);

}  // namespace batchol
