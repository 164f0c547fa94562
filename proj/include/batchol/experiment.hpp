#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "batchol/datagen.hpp"
#include "batchol/learner.hpp"
#include "batchol/metrics.hpp"
#include "batchol/theory.hpp"

namespace batchol {

inline constexpr int kConfigSchemaVersion = 1;

/// Either a generated stream or example files (concatenated in order).
struct DataSource {
    std::optional<StreamSpec> generate;
    std::vector<std::filesystem::path> files;
    /// Required with files; ignored for generated data.
    std::size_t dimension = 0;
};

struct NamedStrategy {
    std::string label;
    UpdateStrategy strategy;
};

/// One strategy per value of `parameter` ("passes", "learning_rate" or "lambda").
struct SweepConfig {
    std::string label;
    UpdateStrategy base;
    std::string parameter;
    std::vector<double> values;
};

struct BaselineConfig {
    bool stale = true;
    bool moving_window = true;
    int window_days = 7;
};

/// Replays the listed strategies (and the moving window) with one corrupted day.
struct CorruptionStudyConfig {
    CorruptionSpec spec;
    std::vector<std::string> strategies;
    bool moving_window = true;
    /// Also replay each strategy with safeguard quarantine on, clean and
    /// corrupted alike, reported as "<label>+quarantine".
    bool quarantine_variants = false;
};

struct DelayConfig {
    /// Label of a strategy run whose snapshots are evaluated.
    std::string strategy;
    std::int64_t eval_start = 80;
    int eval_days = 10;
    std::vector<int> delays{1, 7, 15, 30, 60};
    /// Full retrain on `retrain_window_days` batches ending `retrain_lag_days` before eval_start.
    int retrain_window_days = 7;
    int retrain_lag_days = 30;
};

struct InitStudyConfig {
    UpdateStrategy strategy;
    std::vector<int> offsets{0, 7, 14, 21};
    int base_window_days = 7;
};

struct TheoremTriple {
    double alpha = 0.0;
    int k = 0;
    double lambda = 0.0;
};

/// Bound checks on one day's loss started from the base model, plus the
/// random-instance guarantee suite.
struct TheoremGridConfig {
    std::int64_t day = 7;
    std::vector<TheoremTriple> configs;
    int guarantee_instances = 200;
    LbfgsConfig solver{.gradient_tolerance = 1e-10, .max_iterations = 5000};
};

struct ExperimentConfig {
    int schema_version = kConfigSchemaVersion;
    std::uint64_t seed = 42;
    DataSource data;
    int base_window_days = 7;
    TrainerConfig trainer;
    std::vector<NamedStrategy> strategies;
    std::vector<SweepConfig> sweeps;
    BaselineConfig baselines;
    std::vector<CorruptionStudyConfig> corruptions;
    std::optional<DelayConfig> delay;
    std::optional<InitStudyConfig> init_study;
    std::optional<TheoremGridConfig> theorem_grid;
    SafeguardThresholds safeguards;
    bool quarantine = false;
    /// First batch id of the summary range in comparison.csv.
    std::int64_t report_from = 30;
    bool write_snapshots = true;

    // Execution settings, not part of the config hash.
    std::filesystem::path output_dir = "out";
    int workers = 1;

    void validate() const;
};

/// Strict parse: unknown keys, wrong types and a schema_version other than
/// kConfigSchemaVersion raise ConfigError. Relative data paths are resolved
/// against `base_dir`.
ExperimentConfig parse_config(const std::string& json_text,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Normalized JSON with every field spelled out, keys sorted. With
/// `include_execution` false the output_dir and workers fields are dropped.
std::string config_to_json(const ExperimentConfig& cfg, bool include_execution = true);

/// Hex SHA-256 of config_to_json(cfg, false).
std::string config_hash(const ExperimentConfig& cfg);

/// strategies followed by one entry per sweep value.
std::vector<NamedStrategy> expand_strategies(const ExperimentConfig& cfg);

struct LoadedData {
    std::vector<Batch> batches;
    std::size_t dimension = 0;
    std::optional<GroundTruth> truth;
};

LoadedData load_data(const ExperimentConfig& cfg);

/// Full fit on the first cfg.base_window_days batches.
LinearModel train_base(const ExperimentConfig& cfg, std::span<const Batch> batches,
                       std::size_t dimension);

/// Gains of a run against the stale and moving-window baselines.
struct ComparisonRow {
    std::string label;
    std::size_t days = 0;
    double rig_gain_vs_stale = 0.0;
    double auc_gain_vs_stale = 0.0;
    std::size_t positive_days_vs_stale = 0;
    std::size_t report_days = 0;
    double report_rig_gain_vs_stale = 0.0;
    std::size_t report_positive_days = 0;
    std::size_t window_days = 0;
    double rig_gain_vs_window = 0.0;
    double auc_gain_vs_window = 0.0;
    std::optional<std::string> failure;
};

ComparisonRow compare(const std::string& label, std::span<const MetricRecord> records,
                      std::span<const MetricRecord> stale, std::span<const MetricRecord> window,
                      std::int64_t report_from);

struct StrategyRun {
    std::string label;
    StreamResult result;
};

struct CorruptionOutcome {
    CorruptionSpec spec;
    std::string label;
    std::vector<MetricRecord> clean;
    std::vector<MetricRecord> corrupted;
    /// Largest RIG increase (corrupted minus clean) on days after the corrupted one.
    double worst_drop = 0.0;
    std::int64_t worst_drop_day = -1;
    /// Safeguard verdict on the corrupted day's evaluation in the corrupted run.
    bool flagged = false;
    std::optional<std::string> failure;
};

struct ExperimentResult {
    std::string config_hash;
    LinearModel base;
    std::int64_t base_batch_id = 0;
    std::vector<MetricRecord> stale;
    std::optional<StreamResult> moving_window;
    std::vector<StrategyRun> runs;
    std::vector<ComparisonRow> comparison;
    std::vector<CorruptionOutcome> corruptions;
    std::vector<DelayRow> delay;
    std::vector<InitializationRun> init_runs;
    std::vector<std::pair<std::string, BoundReport>> bounds;
    std::optional<GuaranteeSuiteResult> guarantee;
    std::vector<std::string> failures;
    /// Paths relative to the output directory, in write order.
    std::vector<std::string> outputs;
    double wall_clock_seconds = 0.0;

    const StrategyRun* find_run(const std::string& label) const;
    /// A bound check with alpha*lambda*k = 1 that did not hold.
    bool theorem_violation() const;
};

struct Stages {
    bool strategies = true;
    bool baselines = true;
    bool corruptions = true;
    bool delay = true;
    bool init_study = true;
    bool theorem = true;

    static Stages all() { return {}; }
    static Stages none() { return {false, false, false, false, false, false}; }
};

struct RunOptions {
    Stages stages = Stages::all();
    bool write = true;
    /// Progress messages; null for silence.
    std::function<void(const std::string&)> log;
};

/// Runs the configured experiment. When options.write is set, CSVs, snapshots
/// and the normalized config go under cfg.output_dir and manifest.json is
/// written last. Output bytes do not depend on cfg.workers.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

/// Runs `n` independent tasks on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& task);

/// Hex SHA-256 of a byte string / file contents.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace batchol
