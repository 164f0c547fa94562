#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "batchol/objective.hpp"

namespace batchol {

/// Iterates whose max-abs coordinate exceeds this are treated as divergent.
inline constexpr double kDivergenceThreshold = 1e100;

struct GdConfig {
    double learning_rate = 1e-5;
    int iterations = 10;

    void validate() const;
};

struct SgdConfig {
    double learning_rate = 1e-5;
    int epochs = 10;
    std::size_t minibatch_size = 1000;
    std::uint64_t seed = 0;
    bool shuffle = true;

    void validate() const;
};

/// How often each coordinate has been seen across all rounds so far.
struct PerCoordState {
    std::vector<std::uint64_t> counts;

    PerCoordState() = default;
    explicit PerCoordState(std::size_t n) : counts(n, 0) {}

    /// Step size for coordinate r: scale / max(n_r, 1).
    double rate(std::size_t r, double scale = 1.0) const {
        return scale / static_cast<double>(counts[r] == 0 ? 1 : counts[r]);
    }

    friend bool operator==(const PerCoordState&, const PerCoordState&) = default;
};

struct PerCoordConfig {
    int epochs = 1;
    std::size_t minibatch_size = 1;
    std::uint64_t seed = 0;
    bool shuffle = false;
    /// Multiplier on 1/n_r.
    double rate_scale = 1.0;

    void validate() const;
};

/// Limited-memory BFGS with backtracking Armijo line search.
struct LbfgsConfig {
    int memory = 10;
    /// Convergence when ||grad||_inf <= gradient_tolerance.
    double gradient_tolerance = 1e-8;
    int max_iterations = 500;
    double armijo_c = 1e-4;
    double shrink = 0.5;
    int max_halvings = 60;

    void validate() const;
};

/// Iterates w_0..w_k and, for full-batch engines, grad F(w_0)..grad F(w_k).
///
/// SGD engines record end-of-pass iterates only and leave gradients empty.
struct Trajectory {
    std::vector<std::vector<double>> iterates;
    std::vector<std::vector<double>> gradients;

    std::size_t steps() const noexcept { return iterates.empty() ? 0 : iterates.size() - 1; }
    const std::vector<double>& last() const { return iterates.back(); }
};

struct LbfgsResult {
    std::vector<double> minimizer;
    double value = 0.0;
    int iterations = 0;
    double final_grad_norm = 0.0;
    /// False when max_iterations was reached first.
    bool converged = false;
};

/// Exactly cfg.iterations steps of w <- w - alpha * grad F(w), no early exit.
/// The returned gradients include grad F at the final iterate.
Trajectory run_gd(const Objective& f, std::span<const double> w0, const GdConfig& cfg);

/// Gradient descent with a fixed per-coordinate step vector.
Trajectory run_gd_per_coordinate(const Objective& f, std::span<const double> w0,
                                 std::span<const double> rates, int iterations);

/// cfg.epochs passes of minibatch SGD on the summed objective. Minibatch
/// gradients are sums (not means); the final short minibatch is kept.
Trajectory run_sgd(const StochasticObjective& f, std::span<const double> w0, const SgdConfig& cfg);

/// SGD where coordinate r steps with rate_scale / max(n_r, 1); counts are
/// bumped after each minibatch step.
std::pair<Trajectory, PerCoordState> run_sgd_percoord(const StochasticObjective& f,
                                                      std::span<const double> w0,
                                                      PerCoordState state,
                                                      const PerCoordConfig& cfg);

/// Throws LineSearchStall when a step cannot be accepted after max_halvings.
LbfgsResult lbfgs_minimize(const Objective& f, std::span<const double> w0, const LbfgsConfig& cfg);

double inf_norm(std::span<const double> v) noexcept;
double l2_norm(std::span<const double> v) noexcept;

}  // namespace batchol
