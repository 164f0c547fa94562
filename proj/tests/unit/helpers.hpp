#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "batchol/model.hpp"
#include "batchol/objective.hpp"
#include "batchol/sparse.hpp"

namespace batchol::test {

inline Batch random_batch(std::mt19937_64& rng, std::size_t d, std::size_t n, std::int64_t id = 0,
                          double density = 0.4) {
    std::uniform_real_distribution<double> val(-1.5, 1.5);
    std::bernoulli_distribution on(density), click(0.35);
    Batch b;
    b.id = id;
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<Feature> f;
        for (std::uint32_t r = 0; r < d; ++r) {
            if (on(rng)) f.push_back({r, val(rng)});
        }
        b.examples.push_back({SparseVector(std::move(f)), click(rng) ? 1 : 0});
    }
    return b;
}

inline LinearModel random_model(std::mt19937_64& rng, std::size_t d, double scale = 0.7) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> w(d);
    for (auto& x : w) x = g(rng);
    return {w, g(rng)};
}

/// Central differences of a scalar function of the parameter vector.
template <class F>
std::vector<double> numeric_gradient(F&& f, std::vector<double> p, double h = 1e-5) {
    std::vector<double> g(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p[i];
        p[i] = keep + h;
        const double up = f(p);
        p[i] = keep - h;
        const double down = f(p);
        p[i] = keep;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

/// |a - b| / max(1, |b|).
inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace batchol::test
