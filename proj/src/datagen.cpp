#include "batchol/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "batchol/error.hpp"
#include "batchol/model.hpp"
#include "batchol/seed.hpp"

namespace batchol {

void StreamSpec::validate() const {
    if (dimension < 1 || days < 1 || examples_per_day < 1 || active_features < 1) {
        throw InvalidArgument("stream dimension, days, examples_per_day and active_features must be >= 1");
    }
    if (active_features > dimension) throw InvalidArgument("active_features exceeds dimension");
    if (!(drift_rate >= 0.0) || !(distribution_shift_rate >= 0.0) || !(weight_scale >= 0.0)) {
        throw InvalidArgument("drift and scale rates must be >= 0");
    }
    if (!(base_ctr > 0.0 && base_ctr < 1.0)) throw InvalidArgument("base_ctr must be in (0,1)");
    if (!(holiday_shock >= 0.0)) throw InvalidArgument("holiday_shock must be >= 0");
    if (!(popularity_scale >= 0.0)) throw InvalidArgument("popularity_scale must be >= 0");
    for (const auto* range : {&value_shape_a, &value_shape_b}) {
        if (!((*range)[0] > 0.0 && (*range)[0] <= (*range)[1] && std::isfinite((*range)[1]))) {
            throw InvalidArgument("Beta shape ranges need 0 < lo <= hi");
        }
    }
}

void CorruptionSpec::validate() const {
    if (mode == CorruptionMode::CtrSpike) {
        if (!std::isfinite(amount)) throw InvalidArgument("ctr-spike shift must be finite");
        return;
    }
    if (!(amount >= 0.0 && amount <= 1.0)) {
        throw InvalidArgument("corruption fraction must be in [0, 1]");
    }
}

CorruptionMode parse_corruption_mode(const std::string& name) {
    if (name == "label-flip") return CorruptionMode::LabelFlip;
    if (name == "ctr-spike") return CorruptionMode::CtrSpike;
    if (name == "volume-drop") return CorruptionMode::VolumeDrop;
    if (name == "feature-zeroing") return CorruptionMode::FeatureZeroing;
    throw InvalidArgument("unknown corruption mode '" + name + "'");
}

std::string to_string(CorruptionMode mode) {
    switch (mode) {
    case CorruptionMode::LabelFlip: return "label-flip";
    case CorruptionMode::CtrSpike: return "ctr-spike";
    case CorruptionMode::VolumeDrop: return "volume-drop";
    case CorruptionMode::FeatureZeroing: return "feature-zeroing";
    }
    return "unknown";
}

namespace {

struct FeatureModel {
    std::vector<double> beta_a, beta_b;
};

double sample_beta(std::mt19937_64& rng, double a, double b) {
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    return x / (x + y);
}

struct Popularity {
    std::discrete_distribution<std::uint32_t> pick;
    std::vector<double> inv_weight;
};

Popularity make_popularity(std::span<const double> logits) {
    std::vector<double> p(logits.size()), inv(logits.size());
    for (std::size_t r = 0; r < p.size(); ++r) {
        p[r] = std::exp(logits[r]);
        inv[r] = 1.0 / p[r];
    }
    return {std::discrete_distribution<std::uint32_t>(p.begin(), p.end()), std::move(inv)};
}

// Draws `k` distinct indices with probability proportional to the popularity weights.
std::vector<std::uint32_t> sample_active(std::mt19937_64& rng, Popularity& pop, std::size_t k) {
    const std::size_t d = pop.inv_weight.size();
    std::vector<std::uint32_t> out;
    out.reserve(k);
    if (4 * k <= d) {
        while (out.size() < k) {
            const auto r = pop.pick(rng);
            if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
        }
    } else {
        // Efraimidis-Spirakis keys: largest log(u)/w.
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<std::pair<double, std::uint32_t>> keys(d);
        for (std::size_t r = 0; r < d; ++r) {
            keys[r] = {std::log(u(rng)) * pop.inv_weight[r], static_cast<std::uint32_t>(r)};
        }
        std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k), keys.end(),
                          [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t i = 0; i < k; ++i) out.push_back(keys[i].second);
    }
    std::sort(out.begin(), out.end());
    return out;
}

SparseVector sample_features(std::mt19937_64& rng, Popularity& pop, const FeatureModel& fm,
                             std::size_t k) {
    const auto idx = sample_active(rng, pop, k);
    std::vector<Feature> fs;
    fs.reserve(idx.size());
    for (const auto r : idx) fs.push_back({r, sample_beta(rng, fm.beta_a[r], fm.beta_b[r])});
    return SparseVector(std::move(fs));
}

double feature_logit(std::span<const double> w, const SparseVector& x) {
    double z = 0.0;
    for (const auto& f : x.entries()) z += w[f.index] * f.value;
    return z;
}

}  // namespace

GeneratedStream generate_stream(const StreamSpec& spec) {
    spec.validate();
    const std::size_t d = spec.dimension;
    const auto days = static_cast<std::size_t>(spec.days);

    // Sequential part: feature model, weight and popularity random walks.
    std::mt19937_64 truth_rng(derive_seed(spec.seed, seed_tag::kTruth));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> ua(spec.value_shape_a[0], spec.value_shape_a[1]);
    std::uniform_real_distribution<double> ub(spec.value_shape_b[0], spec.value_shape_b[1]);

    FeatureModel fm;
    fm.beta_a.resize(d);
    fm.beta_b.resize(d);
    for (std::size_t r = 0; r < d; ++r) {
        fm.beta_a[r] = ua(truth_rng);
        fm.beta_b[r] = ub(truth_rng);
    }

    std::vector<std::vector<double>> weights(days, std::vector<double>(d));
    std::vector<std::vector<double>> popularity(days, std::vector<double>(d));
    for (std::size_t r = 0; r < d; ++r) {
        weights[0][r] = spec.weight_scale * normal(truth_rng);
        popularity[0][r] = spec.popularity_scale * normal(truth_rng);
    }
    auto is_holiday = [&](std::size_t t) {
        return std::find(spec.holiday_days.begin(), spec.holiday_days.end(), static_cast<int>(t)) !=
               spec.holiday_days.end();
    };
    for (std::size_t t = 1; t < days; ++t) {
        const double shift = spec.distribution_shift_rate * (is_holiday(t) ? spec.holiday_shock : 1.0);
        for (std::size_t r = 0; r < d; ++r) {
            weights[t][r] = weights[t - 1][r] + spec.drift_rate * normal(truth_rng);
            popularity[t][r] = popularity[t - 1][r] + shift * normal(truth_rng);
        }
    }

    // Bias calibrated on a day-0 sample so the base CTR is close to spec.base_ctr.
    std::vector<double> calib;
    {
        std::mt19937_64 rng(derive_seed(spec.seed, seed_tag::kCalibration));
        auto pop = make_popularity(popularity[0]);
        const std::size_t m = std::max<std::size_t>(spec.examples_per_day, 20000);
        calib.reserve(m);
        for (std::size_t i = 0; i < m; ++i) {
            calib.push_back(feature_logit(weights[0],
                                          sample_features(rng, pop, fm, spec.active_features)));
        }
    }
    auto mean_ctr = [&](double b) {
        double s = 0.0;
        for (double z : calib) s += sigmoid(z + b);
        return s / static_cast<double>(calib.size());
    };
    double lo = -50.0, hi = 50.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mean_ctr(mid) < spec.base_ctr ? lo : hi) = mid;
    }
    const double bias = 0.5 * (lo + hi);

    GeneratedStream out;
    out.batches.resize(days);
    for (std::size_t t = 0; t < days; ++t) {
        std::mt19937_64 rng(derive_seed(spec.seed, seed_tag::kDay, t));
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        auto pop = make_popularity(popularity[t]);
        const double shock = is_holiday(t) ? spec.holiday_shock : 1.0;
        Batch& b = out.batches[t];
        b.id = static_cast<std::int64_t>(t);
        b.examples.reserve(spec.examples_per_day);
        for (std::size_t i = 0; i < spec.examples_per_day; ++i) {
            auto x = sample_features(rng, pop, fm, spec.active_features);
            const double p = sigmoid(bias + shock * feature_logit(weights[t], x));
            const int y = u01(rng) < p ? 1 : 0;
            b.examples.push_back({std::move(x), y});
        }
    }
    out.truth.weights = std::move(weights);
    out.truth.bias.assign(days, bias);
    return out;
}

Batch corrupt_batch(const Batch& batch, const CorruptionSpec& spec, std::size_t dimension,
                    std::uint64_t stream_seed) {
    spec.validate();
    Batch b = batch;
    std::mt19937_64 rng(derive_seed(stream_seed, seed_tag::kCorruption,
                                    static_cast<std::uint64_t>(spec.day)));
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    switch (spec.mode) {
    case CorruptionMode::LabelFlip:
        for (auto& e : b.examples) {
            if (u01(rng) < spec.amount) e.label = 1 - e.label;
        }
        break;
    case CorruptionMode::CtrSpike: {
        if (b.empty()) break;
        double pos = 0.0;
        for (const auto& e : b.examples) pos += e.label;
        const double c = std::clamp(pos / static_cast<double>(b.size()), 1e-6, 1.0 - 1e-6);
        const double target = sigmoid(std::log(c / (1.0 - c)) + spec.amount);
        // Negatives become positives (or the reverse for a negative shift) so the
        // expected CTR moves to `target`.
        if (target >= c) {
            const double q = (target - c) / (1.0 - c);
            for (auto& e : b.examples) {
                if (e.label == 0 && u01(rng) < q) e.label = 1;
            }
        } else {
            const double q = (c - target) / c;
            for (auto& e : b.examples) {
                if (e.label == 1 && u01(rng) < q) e.label = 0;
            }
        }
        break;
    }
    case CorruptionMode::VolumeDrop: {
        const std::size_t n = b.size();
        const auto drop = static_cast<std::size_t>(std::llround(spec.amount * static_cast<double>(n)));
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(n - drop);
        std::sort(idx.begin(), idx.end());
        std::vector<Example> kept;
        kept.reserve(idx.size());
        for (const auto i : idx) kept.push_back(std::move(b.examples[i]));
        b.examples = std::move(kept);
        break;
    }
    case CorruptionMode::FeatureZeroing: {
        const auto m = static_cast<std::size_t>(std::llround(spec.amount * static_cast<double>(dimension)));
        std::vector<std::uint32_t> coords(dimension);
        std::iota(coords.begin(), coords.end(), 0U);
        std::shuffle(coords.begin(), coords.end(), rng);
        std::vector<bool> zeroed(dimension, false);
        for (std::size_t i = 0; i < m; ++i) zeroed[coords[i]] = true;
        for (auto& e : b.examples) {
            std::vector<Feature> fs;
            for (const auto& f : e.features.entries()) {
                if (f.index >= dimension || !zeroed[f.index]) fs.push_back(f);
            }
            e.features = SparseVector(std::move(fs));
        }
        break;
    }
    }
    return b;
}

std::vector<Batch> inject_corruption(std::span<const Batch> batches, const CorruptionSpec& spec,
                                     std::size_t dimension, std::uint64_t stream_seed) {
    spec.validate();
    std::vector<Batch> out(batches.begin(), batches.end());
    const auto it = std::find_if(out.begin(), out.end(), [&](const Batch& b) { return b.id == spec.day; });
    if (it == out.end()) {
        throw InvalidArgument("corruption day " + std::to_string(spec.day) + " is not in the stream");
    }
    *it = corrupt_batch(*it, spec, dimension, stream_seed);
    return out;
}

}  // namespace batchol
