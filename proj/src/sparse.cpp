#include "batchol/sparse.hpp"

#include <cmath>
#include <string>

#include "batchol/error.hpp"

namespace batchol {

SparseVector::SparseVector(std::vector<Feature> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!std::isfinite(entries_[i].value)) {
            throw InvalidArgument("non-finite feature value at index " +
                                  std::to_string(entries_[i].index));
        }
        if (i > 0 && entries_[i].index <= entries_[i - 1].index) {
            throw InvalidArgument("feature indices must be strictly increasing (index " +
                                  std::to_string(entries_[i].index) + ")");
        }
    }
}

SparseVector::SparseVector(std::initializer_list<std::pair<std::uint32_t, double>> entries)
    : SparseVector([&] {
          std::vector<Feature> v;
          v.reserve(entries.size());
          for (const auto& [i, x] : entries) v.push_back({i, x});
          return v;
      }()) {}

std::size_t min_dimension(std::span<const Batch> batches) {
    std::size_t d = 0;
    for (const auto& b : batches) {
        for (const auto& e : b.examples) d = std::max(d, e.features.min_dimension());
    }
    return d;
}

Batch concatenate(std::span<const Batch> batches) {
    Batch out;
    std::size_t n = 0;
    for (const auto& b : batches) n += b.size();
    out.examples.reserve(n);
    for (const auto& b : batches) {
        out.examples.insert(out.examples.end(), b.examples.begin(), b.examples.end());
        out.id = b.id;
    }
    return out;
}

}  // namespace batchol
