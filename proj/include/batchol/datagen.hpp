#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "batchol/sparse.hpp"

namespace batchol {

/// Synthetic drifting click stream.
///
/// Feature r, when active, takes a Beta(a_r, b_r) value in [0,1]. Which
/// features are active follows popularity logits that random-walk with
/// `distribution_shift_rate`; the true weights random-walk with `drift_rate`.
/// On a holiday the feature part of the logit and that day's popularity step
/// are both scaled by `holiday_shock`.
struct StreamSpec {
    std::size_t dimension = 200;
    int days = 90;
    std::size_t examples_per_day = 20000;
    std::size_t active_features = 10;
    double drift_rate = 0.02;
    double distribution_shift_rate = 0.3;
    std::vector<int> holiday_days;
    double holiday_shock = 2.0;
    /// The true bias is calibrated so day 0 has roughly this CTR.
    double base_ctr = 0.05;
    /// Standard deviation of the initial true weights.
    double weight_scale = 0.6;
    /// Standard deviation of the initial popularity logits.
    double popularity_scale = 0.5;
    /// Per-feature Beta shapes are drawn uniformly from these ranges.
    std::array<double, 2> value_shape_a{4.0, 8.0};
    std::array<double, 2> value_shape_b{1.0, 2.0};
    std::uint64_t seed = 42;

    void validate() const;
};

/// True parameters used to label each day. Diagnostics only.
struct GroundTruth {
    std::vector<std::vector<double>> weights;
    std::vector<double> bias;
};

struct GeneratedStream {
    std::vector<Batch> batches;
    GroundTruth truth;
};

/// Deterministic per seed; days are seeded independently from the master seed.
GeneratedStream generate_stream(const StreamSpec& spec);

enum class CorruptionMode { LabelFlip, CtrSpike, VolumeDrop, FeatureZeroing };

struct CorruptionSpec {
    std::int64_t day = 0;
    CorruptionMode mode = CorruptionMode::LabelFlip;
    /// Fraction for LabelFlip / VolumeDrop / FeatureZeroing; additive logit
    /// shift of the day's CTR for CtrSpike.
    double amount = 0.0;

    void validate() const;
};

CorruptionMode parse_corruption_mode(const std::string& name);
std::string to_string(CorruptionMode mode);

/// Corrupted copy of one batch; the randomness depends only on stream_seed and spec.day.
Batch corrupt_batch(const Batch& batch, const CorruptionSpec& spec, std::size_t dimension,
                    std::uint64_t stream_seed);

/// Copy of `batches` with only the batch whose id is spec.day modified.
/// Throws InvalidArgument if no such batch exists.
std::vector<Batch> inject_corruption(std::span<const Batch> batches, const CorruptionSpec& spec,
                                     std::size_t dimension, std::uint64_t stream_seed);

}  // namespace batchol
