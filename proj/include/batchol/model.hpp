#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "batchol/sparse.hpp"

namespace batchol {

/// Predicted probabilities are clamped to [kProbClamp, 1 - kProbClamp] before taking logs.
inline constexpr double kProbClamp = 1e-15;

/// Logistic-regression weights plus bias.
///
/// The flat parameter layout used by every optimizer is the d weights followed
/// by the bias, so the bias behaves as coordinate d with an implicit feature
/// value of 1.
class LinearModel {
public:
    LinearModel() = default;
    /// Zero model of the given dimension.
    explicit LinearModel(std::size_t dimension);
    /// Throws InvalidArgument on non-finite entries.
    LinearModel(std::vector<double> weights, double bias);

    /// Builds a model from a d+1 parameter vector (bias last).
    static LinearModel from_params(std::span<const double> params);

    std::size_t dimension() const noexcept { return weights_.size(); }
    std::span<const double> weights() const noexcept { return weights_; }
    double bias() const noexcept { return bias_; }

    /// d+1 parameter vector, bias last.
    std::vector<double> params() const;

    /// w.x + b. Throws DimensionMismatch if x has an index >= dimension().
    double margin(const SparseVector& x) const;

    friend bool operator==(const LinearModel&, const LinearModel&) = default;

private:
    std::vector<double> weights_;
    double bias_ = 0.0;
};

/// Anchor and strength of the proximal penalty.
///
/// A uniform lambda gives (lambda/2) * ||w - anchor||^2. A per-coordinate
/// vector (length d+1, bias last) gives sum_r lambda_r * (w_r - anchor_r)^2,
/// without the 1/2 factor; per_coordinate_from_uniform() converts between
/// the two.
struct ProxConfig {
    LinearModel anchor;
    std::variant<double, std::vector<double>> lambda = 1.0;
    /// Only consulted for the uniform form.
    bool regularize_bias = true;

    /// Throws InvalidArgument / DimensionMismatch when the invariants fail.
    void validate() const;
    bool uniform() const noexcept { return std::holds_alternative<double>(lambda); }
};

/// Per-coordinate weights lambda_r = lambda/2 reproducing the uniform penalty.
std::vector<double> per_coordinate_from_uniform(double lambda, std::size_t dimension,
                                                bool regularize_bias = true);

double sigmoid(double z) noexcept;

/// Clamped negative log-likelihood of one label given the margin.
double example_loss(double margin, int label) noexcept;

double predict(const LinearModel& model, const SparseVector& x);

/// Unregularized summed log-loss F(w) of the batch.
double logistic_loss(const LinearModel& model, const Batch& batch);

/// Gradient of logistic_loss, length d+1 with the bias last.
std::vector<double> gradient(const LinearModel& model, const Batch& batch);

/// F(w) plus the proximal penalty described by cfg.
double prox_objective(const LinearModel& model, const Batch& batch, const ProxConfig& cfg);

std::vector<double> prox_gradient(const LinearModel& model, const Batch& batch,
                                  const ProxConfig& cfg);

/// Value of the penalty term alone at params.
double prox_penalty(std::span<const double> params, const ProxConfig& cfg);

/// Adds the gradient of the penalty term at params into out.
void add_prox_penalty_gradient(std::span<const double> params, const ProxConfig& cfg,
                               std::span<double> out);

}  // namespace batchol
