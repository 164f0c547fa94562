#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "batchol/metrics.hpp"
#include "batchol/model.hpp"
#include "batchol/optimizers.hpp"
#include "batchol/sparse.hpp"

namespace batchol {

enum class EsAlgorithm { Gd, Sgd, SgdPerCoordinate, Lbfgs };

/// Early-stopping update: k passes of an iterative solver started at the
/// previous round's model.
struct EsStrategy {
    EsAlgorithm algorithm = EsAlgorithm::Gd;
    double learning_rate = 1e-5;
    int passes = 10;
    std::size_t minibatch_size = 1000;
    bool shuffle = true;
    std::uint64_t seed = 0;
    /// Multiplier on 1/n_r for SgdPerCoordinate.
    double rate_scale = 1.0;
};

enum class LambdaSource { Uniform, Fixed, Fisher };

/// Proximal update anchored at the previous round's model.
struct ProxStrategy {
    LambdaSource source = LambdaSource::Uniform;
    /// Uniform strength, penalty (lambda/2) * ||w - w_prev||^2.
    double lambda = 1e4;
    /// Fixed per-coordinate weights (length d+1) for LambdaSource::Fixed.
    std::vector<double> per_coordinate;
    /// Fisher accumulation: state <- decay * state + fisher(batch).
    double fisher_decay = 1.0;
    /// lambda_r = max(lambda_floor, fisher_scale * state_r). The default scale
    /// makes the penalty's Hessian equal the accumulated Fisher diagonal.
    double fisher_scale = 0.5;
    double lambda_floor = 1.0;
    bool regularize_bias = true;
    LbfgsConfig solver{};
};

using UpdateStrategy = std::variant<EsStrategy, ProxStrategy>;

/// Model plus whatever per-round state the strategy carries.
struct LearnerState {
    LinearModel model;
    std::optional<PerCoordState> per_coord;
    std::optional<std::vector<double>> fisher;
};

struct Snapshot {
    LinearModel model;
    std::int64_t batch_id = 0;
    std::optional<PerCoordState> per_coord;
    std::optional<std::vector<double>> fisher;

    friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

struct EsResult {
    LinearModel model;
    std::optional<PerCoordState> per_coord;
    Trajectory trajectory;
};

/// Runs the ES solver for strategy.passes passes from `model`. The SGD seed
/// for the round is derived from strategy.seed and batch.id. Optimizer
/// failures are rethrown with the batch id in the message.
EsResult es_update(const LinearModel& model, const Batch& batch, const EsStrategy& strategy,
                   std::optional<PerCoordState> per_coord = std::nullopt);

/// Per-coordinate lambda vector (no 1/2 factor) for a Fisher-driven strategy.
std::vector<double> fisher_lambda(const ProxStrategy& strategy, std::span<const double> fisher_state);

/// argmin of batch loss + proximal penalty anchored at `model`.
/// `fisher_state` is required when strategy.source is Fisher.
LinearModel prox_update(const LinearModel& model, const Batch& batch, const ProxStrategy& strategy,
                        const LbfgsConfig& solver,
                        std::span<const double> fisher_state = {});

/// Per coordinate: sum_j p_j (1 - p_j) x_jr^2; bias coordinate sum_j p_j (1 - p_j).
std::vector<double> fisher_diag(const LinearModel& model, const Batch& batch);

/// decay * prev + batch_fisher.
std::vector<double> fisher_accumulate(std::span<const double> prev,
                                      std::span<const double> batch_fisher, double decay);

struct StreamOptions {
    /// Skip the update on any batch whose evaluation fails a safeguard check.
    bool quarantine = false;
    SafeguardThresholds thresholds{};
    /// Evaluation of the batch before the first one, for resumed streams.
    std::optional<MetricRecord> previous;
};

struct StreamResult {
    std::vector<MetricRecord> records;
    std::vector<Snapshot> snapshots;
    /// Batch ids evaluated but not trained on (quarantine) or not evaluated (no history).
    std::vector<std::int64_t> skipped;
    /// Set when an update threw; records and snapshots stop at the failing batch.
    std::optional<std::string> failure;
};

/// Progressive validation: evaluate each batch with the current model, then
/// update on it and snapshot.
StreamResult run_stream(std::span<const Batch> batches, const LearnerState& initial,
                        const UpdateStrategy& strategy, const StreamOptions& options = {});

/// Metrics of a frozen model on every batch.
std::vector<MetricRecord> evaluate_stream(std::span<const Batch> batches, const LinearModel& model);

/// Full (to-convergence) logistic fit with a small ridge, starting from zero.
struct TrainerConfig {
    double ridge = 1e-6;
    LbfgsConfig solver{.gradient_tolerance = 1e-6, .max_iterations = 1000};
};

LinearModel train_full(std::span<const Batch> window, std::size_t dimension,
                       const TrainerConfig& cfg);

/// Daily retrain on the previous window_days batches, evaluated on the next one.
/// Batches without a full window of history are listed in `skipped`.
StreamResult run_moving_window(std::span<const Batch> batches, std::size_t dimension,
                               int window_days, const TrainerConfig& cfg);

struct DelayRow {
    std::string label;
    /// Days between the snapshot's last training batch and the first eval batch.
    std::optional<int> delay;
    std::optional<std::int64_t> trained_through;
    /// Absent when the snapshot for this delay does not exist.
    std::optional<MetricRecord> metrics;
};

/// Evaluates, on the pooled eval window, the snapshot trained through
/// eval_start - delay for each delay, plus an optional retrained baseline row.
std::vector<DelayRow> run_delay_analysis(std::span<const Snapshot> snapshots,
                                         std::span<const Batch> eval_batches,
                                         std::span<const int> delays,
                                         const LinearModel* retrained_baseline = nullptr,
                                         std::string baseline_label = "retrained");

struct InitializationRun {
    std::int64_t first_train_batch = 0;
    std::int64_t first_eval_batch = 0;
    std::vector<MetricRecord> records;
};

/// One OL run per start offset: base model trained on `base_window_days`
/// batches starting at the offset, then streamed over the remaining batches.
std::vector<InitializationRun> run_initialization_study(std::span<const Batch> batches,
                                                        std::size_t dimension,
                                                        std::span<const int> start_offsets,
                                                        int base_window_days,
                                                        const UpdateStrategy& strategy,
                                                        const TrainerConfig& trainer);

/// max - min of RIG across runs at one batch id; nullopt if any run lacks it.
std::optional<double> rig_spread(std::span<const InitializationRun> runs, std::int64_t batch_id);

}  // namespace batchol
