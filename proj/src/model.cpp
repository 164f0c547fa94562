#include "batchol/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "batchol/error.hpp"
#include "batchol/objective.hpp"

namespace batchol {

LinearModel::LinearModel(std::size_t dimension) : weights_(dimension, 0.0) {}

LinearModel::LinearModel(std::vector<double> weights, double bias)
    : weights_(std::move(weights)), bias_(bias) {
    if (!std::isfinite(bias_) ||
        !std::all_of(weights_.begin(), weights_.end(), [](double w) { return std::isfinite(w); })) {
        throw InvalidArgument("model weights must be finite");
    }
}

LinearModel LinearModel::from_params(std::span<const double> params) {
    if (params.empty()) throw InvalidArgument("parameter vector must hold at least the bias");
    return LinearModel(std::vector<double>(params.begin(), params.end() - 1), params.back());
}

std::vector<double> LinearModel::params() const {
    std::vector<double> p(weights_.begin(), weights_.end());
    p.push_back(bias_);
    return p;
}

double LinearModel::margin(const SparseVector& x) const {
    double z = bias_;
    for (const auto& f : x.entries()) {
        if (f.index >= weights_.size()) {
            throw DimensionMismatch("feature index " + std::to_string(f.index) +
                                    " out of range for dimension " +
                                    std::to_string(weights_.size()));
        }
        z += weights_[f.index] * f.value;
    }
    return z;
}

void ProxConfig::validate() const {
    const std::size_t n = anchor.dimension() + 1;
    if (const auto* u = std::get_if<double>(&lambda)) {
        if (!(*u > 0.0) || !std::isfinite(*u)) {
            throw InvalidArgument("uniform proximal lambda must be finite and > 0");
        }
        return;
    }
    const auto& v = std::get<std::vector<double>>(lambda);
    if (v.size() != n) {
        throw DimensionMismatch("per-coordinate lambda has length " + std::to_string(v.size()) +
                                ", expected " + std::to_string(n));
    }
    for (double l : v) {
        if (!(l >= 0.0) || !std::isfinite(l)) {
            throw InvalidArgument("per-coordinate lambda must be finite and >= 0");
        }
    }
}

std::vector<double> per_coordinate_from_uniform(double lambda, std::size_t dimension,
                                                bool regularize_bias) {
    std::vector<double> v(dimension + 1, lambda / 2.0);
    if (!regularize_bias) v.back() = 0.0;
    return v;
}

double sigmoid(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double example_loss(double margin, int label) noexcept {
    // probability assigned to the observed label
    double q = sigmoid(label == 1 ? margin : -margin);
    q = std::clamp(q, kProbClamp, 1.0 - kProbClamp);
    return -std::log(q);
}

double predict(const LinearModel& model, const SparseVector& x) {
    return sigmoid(model.margin(x));
}

double logistic_loss(const LinearModel& model, const Batch& batch) {
    const LogisticObjective f(batch, model.dimension());
    return f.value(model.params());
}

std::vector<double> gradient(const LinearModel& model, const Batch& batch) {
    const LogisticObjective f(batch, model.dimension());
    std::vector<double> g(f.size());
    f.gradient(model.params(), g);
    return g;
}

namespace {

void check_anchor(std::span<const double> params, const ProxConfig& cfg) {
    if (params.size() != cfg.anchor.dimension() + 1) {
        throw DimensionMismatch("proximal anchor has dimension " +
                                std::to_string(cfg.anchor.dimension()) + ", model has " +
                                std::to_string(params.size() - 1));
    }
}

double anchor_at(const ProxConfig& cfg, std::size_t r) {
    return r < cfg.anchor.dimension() ? cfg.anchor.weights()[r] : cfg.anchor.bias();
}

}  // namespace

double prox_penalty(std::span<const double> params, const ProxConfig& cfg) {
    check_anchor(params, cfg);
    double s = 0.0;
    const std::size_t n = params.size();
    if (const auto* u = std::get_if<double>(&cfg.lambda)) {
        const std::size_t m = cfg.regularize_bias ? n : n - 1;
        for (std::size_t r = 0; r < m; ++r) {
            const double d = params[r] - anchor_at(cfg, r);
            s += d * d;
        }
        return 0.5 * *u * s;
    }
    const auto& lam = std::get<std::vector<double>>(cfg.lambda);
    for (std::size_t r = 0; r < n; ++r) {
        const double d = params[r] - anchor_at(cfg, r);
        s += lam[r] * d * d;
    }
    return s;
}

void add_prox_penalty_gradient(std::span<const double> params, const ProxConfig& cfg,
                               std::span<double> out) {
    check_anchor(params, cfg);
    const std::size_t n = params.size();
    if (const auto* u = std::get_if<double>(&cfg.lambda)) {
        const std::size_t m = cfg.regularize_bias ? n : n - 1;
        for (std::size_t r = 0; r < m; ++r) out[r] += *u * (params[r] - anchor_at(cfg, r));
        return;
    }
    const auto& lam = std::get<std::vector<double>>(cfg.lambda);
    for (std::size_t r = 0; r < n; ++r) out[r] += 2.0 * lam[r] * (params[r] - anchor_at(cfg, r));
}

double prox_objective(const LinearModel& model, const Batch& batch, const ProxConfig& cfg) {
    cfg.validate();
    if (cfg.anchor.dimension() != model.dimension()) {
        throw DimensionMismatch("proximal anchor and model dimensions differ");
    }
    const auto p = model.params();
    return LogisticObjective(batch, model.dimension()).value(p) + prox_penalty(p, cfg);
}

std::vector<double> prox_gradient(const LinearModel& model, const Batch& batch,
                                  const ProxConfig& cfg) {
    cfg.validate();
    if (cfg.anchor.dimension() != model.dimension()) {
        throw DimensionMismatch("proximal anchor and model dimensions differ");
    }
    const auto p = model.params();
    std::vector<double> g(p.size());
    LogisticObjective(batch, model.dimension()).gradient(p, g);
    add_prox_penalty_gradient(p, cfg, g);
    return g;
}

}  // namespace batchol
