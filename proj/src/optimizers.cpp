#include "batchol/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "batchol/error.hpp"

namespace batchol {

void GdConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidArgument("learning rate must be finite and >= 0");
    }
    if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
}

void SgdConfig::validate() const {
    GdConfig{learning_rate, epochs}.validate();
    if (minibatch_size < 1) throw InvalidArgument("minibatch size must be >= 1");
}

void PerCoordConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (minibatch_size < 1) throw InvalidArgument("minibatch size must be >= 1");
    if (!(rate_scale >= 0.0) || !std::isfinite(rate_scale)) {
        throw InvalidArgument("rate scale must be finite and >= 0");
    }
}

void LbfgsConfig::validate() const {
    if (memory < 1 || memory > 50) throw InvalidArgument("LBFGS memory must be in [1, 50]");
    if (!(gradient_tolerance > 0.0)) throw InvalidArgument("gradient tolerance must be > 0");
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw InvalidArgument("armijo_c must be in (0,1)");
    if (!(shrink > 0.0 && shrink < 1.0)) throw InvalidArgument("shrink must be in (0,1)");
}

double inf_norm(std::span<const double> v) noexcept {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double l2_norm(std::span<const double> v) noexcept {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void check_finite(std::span<const double> v, const char* what, long iteration) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw Divergence(std::string("non-finite ") + what + " at iteration " +
                                 std::to_string(iteration),
                             iteration);
        }
        if (std::abs(x) > kDivergenceThreshold) {
            throw Divergence(std::string(what) + " exceeded finite range at iteration " +
                                 std::to_string(iteration),
                             iteration);
        }
    }
}

void check_size(const Objective& f, std::span<const double> w0) {
    if (w0.size() != f.size()) {
        throw DimensionMismatch("initial point has " + std::to_string(w0.size()) +
                                " parameters, objective expects " + std::to_string(f.size()));
    }
}

// Epoch-ordered row lists split into minibatches with each minibatch's rows
// sorted, so a single full minibatch sums in the same order as run_gd.
std::vector<std::size_t> epoch_order(std::size_t n, bool shuffle, std::mt19937_64& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) std::shuffle(order.begin(), order.end(), rng);
    return order;
}

template <typename StepFn>
void for_each_minibatch(std::vector<std::size_t>& order, std::size_t mb, StepFn&& step) {
    for (std::size_t start = 0; start < order.size(); start += mb) {
        const std::size_t end = std::min(order.size(), start + mb);
        std::sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                  order.begin() + static_cast<std::ptrdiff_t>(end));
        step(std::span<const std::size_t>(order.data() + start, end - start));
    }
}

}  // namespace

Trajectory run_gd_per_coordinate(const Objective& f, std::span<const double> w0,
                                 std::span<const double> rates, int iterations) {
    check_size(f, w0);
    if (rates.size() != w0.size()) throw DimensionMismatch("rate vector length mismatch");
    if (iterations < 1) throw InvalidArgument("iterations must be >= 1");

    Trajectory t;
    t.iterates.reserve(static_cast<std::size_t>(iterations) + 1);
    t.gradients.reserve(static_cast<std::size_t>(iterations) + 1);
    std::vector<double> w(w0.begin(), w0.end());
    std::vector<double> g(w.size());
    check_finite(w, "initial point", 0);
    t.iterates.push_back(w);
    for (int i = 0; i < iterations; ++i) {
        f.gradient(w, g);
        check_finite(g, "gradient", i);
        t.gradients.push_back(g);
        for (std::size_t r = 0; r < w.size(); ++r) w[r] -= rates[r] * g[r];
        check_finite(w, "iterate", i + 1);
        t.iterates.push_back(w);
    }
    f.gradient(w, g);
    check_finite(g, "gradient", iterations);
    t.gradients.push_back(std::move(g));
    return t;
}

Trajectory run_gd(const Objective& f, std::span<const double> w0, const GdConfig& cfg) {
    cfg.validate();
    const std::vector<double> rates(w0.size(), cfg.learning_rate);
    return run_gd_per_coordinate(f, w0, rates, cfg.iterations);
}

Trajectory run_sgd(const StochasticObjective& f, std::span<const double> w0, const SgdConfig& cfg) {
    cfg.validate();
    check_size(f, w0);
    std::mt19937_64 rng(cfg.seed);
    Trajectory t;
    std::vector<double> w(w0.begin(), w0.end());
    std::vector<double> g(w.size());
    t.iterates.push_back(w);
    long step = 0;
    for (int e = 0; e < cfg.epochs; ++e) {
        auto order = epoch_order(f.num_examples(), cfg.shuffle, rng);
        for_each_minibatch(order, cfg.minibatch_size, [&](std::span<const std::size_t> rows) {
            f.partial_gradient(w, rows, g);
            check_finite(g, "gradient", step);
            for (std::size_t r = 0; r < w.size(); ++r) w[r] -= cfg.learning_rate * g[r];
            ++step;
            check_finite(w, "iterate", step);
        });
        t.iterates.push_back(w);
    }
    return t;
}

std::pair<Trajectory, PerCoordState> run_sgd_percoord(const StochasticObjective& f,
                                                      std::span<const double> w0,
                                                      PerCoordState state,
                                                      const PerCoordConfig& cfg) {
    cfg.validate();
    check_size(f, w0);
    if (state.counts.size() != w0.size()) {
        throw DimensionMismatch("per-coordinate counts have length " +
                                std::to_string(state.counts.size()) + ", expected " +
                                std::to_string(w0.size()));
    }
    std::mt19937_64 rng(cfg.seed);
    Trajectory t;
    std::vector<double> w(w0.begin(), w0.end());
    std::vector<double> g(w.size());
    t.iterates.push_back(w);
    long step = 0;
    for (int e = 0; e < cfg.epochs; ++e) {
        auto order = epoch_order(f.num_examples(), cfg.shuffle, rng);
        for_each_minibatch(order, cfg.minibatch_size, [&](std::span<const std::size_t> rows) {
            f.partial_gradient(w, rows, g);
            check_finite(g, "gradient", step);
            for (std::size_t r = 0; r < w.size(); ++r) w[r] -= state.rate(r, cfg.rate_scale) * g[r];
            f.count_occurrences(rows, state.counts);
            ++step;
            check_finite(w, "iterate", step);
        });
        t.iterates.push_back(w);
    }
    return {std::move(t), std::move(state)};
}

LbfgsResult lbfgs_minimize(const Objective& f, std::span<const double> w0, const LbfgsConfig& cfg) {
    cfg.validate();
    check_size(f, w0);
    const std::size_t n = w0.size();

    std::vector<double> x(w0.begin(), w0.end());
    std::vector<double> g(n), xn(n), gn(n), d(n);
    double fx = f.value_and_gradient(x, g);
    check_finite(g, "gradient", 0);

    struct Pair {
        std::vector<double> s, y;
        double rho;
    };
    std::deque<Pair> memory;
    std::vector<double> alpha(static_cast<std::size_t>(cfg.memory));

    LbfgsResult res;
    int it = 0;
    for (;; ++it) {
        const double gnorm = inf_norm(g);
        if (gnorm <= cfg.gradient_tolerance) {
            res.converged = true;
            break;
        }
        if (it >= cfg.max_iterations) break;

        // two-loop recursion
        for (std::size_t r = 0; r < n; ++r) d[r] = -g[r];
        for (std::size_t m = memory.size(); m-- > 0;) {
            alpha[m] = memory[m].rho * dot(memory[m].s, d);
            for (std::size_t r = 0; r < n; ++r) d[r] -= alpha[m] * memory[m].y[r];
        }
        if (!memory.empty()) {
            const auto& last = memory.back();
            const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
            for (auto& v : d) v *= gamma;
        }
        for (std::size_t m = 0; m < memory.size(); ++m) {
            const double beta = memory[m].rho * dot(memory[m].y, d);
            for (std::size_t r = 0; r < n; ++r) d[r] += (alpha[m] - beta) * memory[m].s[r];
        }

        double slope = dot(g, d);
        double step = 1.0;
        if (!(slope < 0.0) || !std::isfinite(slope)) {
            memory.clear();
            for (std::size_t r = 0; r < n; ++r) d[r] = -g[r];
            slope = dot(g, d);
        }
        if (memory.empty()) step = std::min(1.0, 1.0 / l2_norm(g));

        // Function values carry rounding noise of order eps*|f|; the slack keeps
        // the sufficient-decrease test meaningful near the optimum.
        const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::abs(fx);
        double fn = 0.0;
        int halvings = 0;
        for (;;) {
            for (std::size_t r = 0; r < n; ++r) xn[r] = x[r] + step * d[r];
            fn = f.value_and_gradient(xn, gn);
            if (std::isfinite(fn) && fn <= fx + cfg.armijo_c * step * slope + slack) break;
            if (++halvings > cfg.max_halvings) {
                std::ostringstream msg;
                msg << "line search stalled at iteration " << it << " after " << cfg.max_halvings
                    << " halvings (f=" << fx << ", ||grad||_inf=" << gnorm
                    << ", slope=" << slope << ")";
                throw LineSearchStall(msg.str());
            }
            step *= cfg.shrink;
        }
        check_finite(xn, "iterate", it + 1);

        Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
        for (std::size_t r = 0; r < n; ++r) {
            p.s[r] = xn[r] - x[r];
            p.y[r] = gn[r] - g[r];
        }
        const double sy = dot(p.s, p.y);
        if (sy > 1e-12 * l2_norm(p.s) * l2_norm(p.y) && sy > 0.0) {
            p.rho = 1.0 / sy;
            memory.push_back(std::move(p));
            if (memory.size() > static_cast<std::size_t>(cfg.memory)) memory.pop_front();
        }
        x.swap(xn);
        g.swap(gn);
        fx = fn;
    }
    res.minimizer = std::move(x);
    res.value = fx;
    res.iterations = it;
    res.final_grad_norm = inf_norm(g);
    return res;
}

}  // namespace batchol
