#include "batchol/objective.hpp"

#include <algorithm>
#include <string>

#include "batchol/error.hpp"
#include "compensated_sum.hpp"

namespace batchol {

double Objective::value_and_gradient(std::span<const double> w, std::span<double> out) const {
    gradient(w, out);
    return value(w);
}

void StochasticObjective::count_occurrences(std::span<const std::size_t> rows,
                                            std::span<std::uint64_t> counts) const {
    for (auto& c : counts) c += rows.size();
}

// ---------------------------------------------------------------------------

LogisticObjective::LogisticObjective(const Batch& batch, std::size_t dimension)
    : dimension_(dimension) {
    if (batch.empty()) throw EmptyBatch();
    append(batch);
}

LogisticObjective::LogisticObjective(std::span<const Batch> batches, std::size_t dimension)
    : dimension_(dimension) {
    for (const auto& b : batches) append(b);
    if (labels_.empty()) throw EmptyBatch();
}

void LogisticObjective::append(const Batch& batch) {
    for (const auto& e : batch.examples) {
        for (const auto& f : e.features.entries()) {
            if (f.index >= dimension_) {
                throw DimensionMismatch("feature index " + std::to_string(f.index) +
                                        " out of range for dimension " +
                                        std::to_string(dimension_));
            }
            indices_.push_back(f.index);
            values_.push_back(f.value);
        }
        row_start_.push_back(indices_.size());
        labels_.push_back(e.label);
    }
}

double LogisticObjective::margin(std::span<const double> w, std::size_t row) const {
    double z = w[dimension_];
    for (std::size_t k = row_start_[row]; k < row_start_[row + 1]; ++k) {
        z += w[indices_[k]] * values_[k];
    }
    return z;
}

double LogisticObjective::value(std::span<const double> w) const {
    detail::CompensatedSum s;
    for (std::size_t i = 0; i < labels_.size(); ++i) s.add(example_loss(margin(w, i), labels_[i]));
    return s.value();
}

void LogisticObjective::gradient(std::span<const double> w, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    double bias_grad = 0.0;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        const double r = sigmoid(margin(w, i)) - labels_[i];
        for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) {
            out[indices_[k]] += r * values_[k];
        }
        bias_grad += r;
    }
    out[dimension_] = bias_grad;
}

double LogisticObjective::value_and_gradient(std::span<const double> w,
                                             std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    detail::CompensatedSum s;
    double bias_grad = 0.0;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        const double z = margin(w, i);
        const double r = sigmoid(z) - labels_[i];
        s.add(example_loss(z, labels_[i]));
        for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) {
            out[indices_[k]] += r * values_[k];
        }
        bias_grad += r;
    }
    out[dimension_] = bias_grad;
    return s.value();
}

void LogisticObjective::partial_gradient(std::span<const double> w,
                                         std::span<const std::size_t> rows,
                                         std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    double bias_grad = 0.0;
    for (const std::size_t i : rows) {
        const double r = sigmoid(margin(w, i)) - labels_[i];
        for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) {
            out[indices_[k]] += r * values_[k];
        }
        bias_grad += r;
    }
    out[dimension_] = bias_grad;
}

void LogisticObjective::count_occurrences(std::span<const std::size_t> rows,
                                          std::span<std::uint64_t> counts) const {
    for (const std::size_t i : rows) {
        for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) ++counts[indices_[k]];
        ++counts[dimension_];
    }
}

void LogisticObjective::fisher_diagonal(std::span<const double> w, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    double bias_term = 0.0;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        const double p = sigmoid(margin(w, i));
        const double h = p * (1.0 - p);
        for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) {
            out[indices_[k]] += h * values_[k] * values_[k];
        }
        bias_term += h;
    }
    out[dimension_] = bias_term;
}

// ---------------------------------------------------------------------------

ProxObjective::ProxObjective(const Objective& base, ProxConfig cfg)
    : base_(base), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.anchor.dimension() + 1 != base_.size()) {
        throw DimensionMismatch("proximal anchor has dimension " +
                                std::to_string(cfg_.anchor.dimension()) +
                                ", objective expects " + std::to_string(base_.size() - 1));
    }
}

double ProxObjective::value(std::span<const double> w) const {
    return base_.value(w) + prox_penalty(w, cfg_);
}

void ProxObjective::gradient(std::span<const double> w, std::span<double> out) const {
    base_.gradient(w, out);
    add_prox_penalty_gradient(w, cfg_, out);
}

double ProxObjective::value_and_gradient(std::span<const double> w, std::span<double> out) const {
    const double f = base_.value_and_gradient(w, out);
    add_prox_penalty_gradient(w, cfg_, out);
    return f + prox_penalty(w, cfg_);
}

// ---------------------------------------------------------------------------

FunctionObjective::FunctionObjective(std::size_t size, ValueFn value, GradientFn gradient)
    : size_(size), value_(std::move(value)), gradient_(std::move(gradient)) {}

FunctionObjective make_quadratic(std::vector<double> center) {
    std::vector<double> curvature(center.size(), 1.0);
    return make_diagonal_quadratic(std::move(curvature), std::move(center));
}

FunctionObjective make_diagonal_quadratic(std::vector<double> curvature, std::vector<double> center) {
    if (curvature.size() != center.size()) {
        throw DimensionMismatch("curvature and center lengths differ");
    }
    const std::size_t n = center.size();
    auto value = [curvature, center](std::span<const double> w) {
        double s = 0.0;
        for (std::size_t r = 0; r < center.size(); ++r) {
            const double d = w[r] - center[r];
            s += curvature[r] * d * d;
        }
        return 0.5 * s;
    };
    auto grad = [curvature = std::move(curvature), center = std::move(center)](
                    std::span<const double> w, std::span<double> out) {
        for (std::size_t r = 0; r < center.size(); ++r) out[r] = curvature[r] * (w[r] - center[r]);
    };
    return FunctionObjective(n, std::move(value), std::move(grad));
}

}  // namespace batchol
