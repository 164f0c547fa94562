#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "batchol/model.hpp"
#include "batchol/sparse.hpp"

namespace batchol {

/// Smooth objective over a flat parameter vector.
class Objective {
public:
    virtual ~Objective() = default;

    /// Number of parameters.
    virtual std::size_t size() const = 0;
    virtual double value(std::span<const double> w) const = 0;
    /// Overwrites out (length size()) with the gradient at w.
    virtual void gradient(std::span<const double> w, std::span<double> out) const = 0;
    virtual double value_and_gradient(std::span<const double> w, std::span<double> out) const;
};

/// Objective that is a sum over examples and can be evaluated on subsets.
class StochasticObjective : public Objective {
public:
    virtual std::size_t num_examples() const = 0;

    /// Gradient of the sum restricted to rows. Rows are summed in the order given.
    virtual void partial_gradient(std::span<const double> w, std::span<const std::size_t> rows,
                                  std::span<double> out) const = 0;

    /// Adds, per coordinate, how many of the rows touch it. The default
    /// treats every row as touching every coordinate.
    virtual void count_occurrences(std::span<const std::size_t> rows,
                                   std::span<std::uint64_t> counts) const;
};

/// Summed logistic loss of a batch over a model of fixed dimension.
///
/// The batch is flattened into CSR arrays once at construction. Parameters
/// are d weights followed by the bias.
class LogisticObjective final : public StochasticObjective {
public:
    /// Throws EmptyBatch or DimensionMismatch.
    LogisticObjective(const Batch& batch, std::size_t dimension);
    LogisticObjective(std::span<const Batch> batches, std::size_t dimension);

    std::size_t size() const override { return dimension_ + 1; }
    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t num_examples() const override { return labels_.size(); }

    double value(std::span<const double> w) const override;
    void gradient(std::span<const double> w, std::span<double> out) const override;
    double value_and_gradient(std::span<const double> w, std::span<double> out) const override;
    void partial_gradient(std::span<const double> w, std::span<const std::size_t> rows,
                          std::span<double> out) const override;
    void count_occurrences(std::span<const std::size_t> rows,
                           std::span<std::uint64_t> counts) const override;

    /// Diagonal of the Hessian (the Fisher information for logistic loss) at w.
    void fisher_diagonal(std::span<const double> w, std::span<double> out) const;

    double margin(std::span<const double> w, std::size_t row) const;
    std::span<const int> labels() const noexcept { return labels_; }

private:
    void append(const Batch& batch);

    std::size_t dimension_;
    std::vector<std::size_t> row_start_{0};
    std::vector<std::uint32_t> indices_;
    std::vector<double> values_;
    std::vector<int> labels_;
};

/// base(w) plus the proximal penalty of cfg. Holds a reference to base.
class ProxObjective final : public Objective {
public:
    ProxObjective(const Objective& base, ProxConfig cfg);

    std::size_t size() const override { return base_.size(); }
    double value(std::span<const double> w) const override;
    void gradient(std::span<const double> w, std::span<double> out) const override;
    double value_and_gradient(std::span<const double> w, std::span<double> out) const override;

    const ProxConfig& config() const noexcept { return cfg_; }

private:
    const Objective& base_;
    ProxConfig cfg_;
};

/// Objective built from two callables; mostly for closed-form test problems.
class FunctionObjective final : public Objective {
public:
    using ValueFn = std::function<double(std::span<const double>)>;
    using GradientFn = std::function<void(std::span<const double>, std::span<double>)>;

    FunctionObjective(std::size_t size, ValueFn value, GradientFn gradient);

    std::size_t size() const override { return size_; }
    double value(std::span<const double> w) const override { return value_(w); }
    void gradient(std::span<const double> w, std::span<double> out) const override {
        gradient_(w, out);
    }

private:
    std::size_t size_;
    ValueFn value_;
    GradientFn gradient_;
};

/// F(w) = 0.5 * ||w - center||^2.
FunctionObjective make_quadratic(std::vector<double> center);

/// F(w) = 0.5 * sum_r curvature_r * (w_r - center_r)^2.
FunctionObjective make_diagonal_quadratic(std::vector<double> curvature, std::vector<double> center);

}  // namespace batchol
