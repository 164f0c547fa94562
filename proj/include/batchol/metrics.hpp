#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "batchol/model.hpp"
#include "batchol/sparse.hpp"

namespace batchol {

/// Evaluation of one model on one batch.
///
/// Log-losses are per-example means. `rig` follows the literal definition
/// (logloss_model - logloss_ctr) / logloss_ctr, so a better model has a more
/// negative value. `rig` and `auc` are absent when the batch has one class.
struct MetricRecord {
    std::int64_t batch_id = 0;
    std::size_t n = 0;
    double ctr = 0.0;
    double logloss_model = 0.0;
    double logloss_ctr = 0.0;
    std::optional<double> rig;
    std::optional<double> auc;

    friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

/// Rank statistic with midranks for tied scores. Throws UndefinedMetric when
/// only one class is present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// (logloss_model - logloss_ctr) / logloss_ctr. Throws UndefinedMetric when
/// logloss_ctr is not meaningfully positive.
double rig(double logloss_model, double logloss_ctr);

/// Summed log-loss of the constant predictor p = mean(labels), clamped.
double empirical_ctr_logloss(std::span<const int> labels);

MetricRecord evaluate(const LinearModel& model, const Batch& batch);

/// One record over the concatenation of several batches; carries the id of the last.
MetricRecord evaluate_pooled(const LinearModel& model, std::span<const Batch> batches);

/// Improvement of `model` over `baseline` in RIG, positive = better.
std::optional<double> rig_gain(const MetricRecord& model, const MetricRecord& baseline);
/// auc(model) - auc(baseline).
std::optional<double> auc_gain(const MetricRecord& model, const MetricRecord& baseline);

struct SafeguardThresholds {
    double max_delta_rig = 0.02;
    double max_delta_auc = 0.005;
    /// Minimum RIG gain over the stale base model.
    double min_gain_vs_stale = 0.0;
    /// Largest tolerated RIG shortfall against the moving-window baseline.
    double max_loss_vs_window = 0.01;
    /// Relative band on day-over-day CTR.
    double ctr_band = 0.30;
    /// Relative band on day-over-day example volume.
    double volume_band = 0.50;
};

struct SafeguardCheck {
    std::string name;
    double observed = 0.0;
    double threshold = 0.0;
    bool passed = false;
};

struct SafeguardReport {
    std::vector<SafeguardCheck> checks;
    /// All executed checks passed.
    bool passed = true;
    /// False when a baseline record or a metric needed by a check was missing.
    bool complete = true;
};

/// Day-over-day production checks. A failed report means the snapshot trained
/// on `today` must not be promoted.
SafeguardReport safeguard_check(const MetricRecord& today, const MetricRecord& yesterday,
                                const SafeguardThresholds& thresholds,
                                const MetricRecord* stale_today = nullptr,
                                const MetricRecord* window_today = nullptr);

/// Fixed column order: batch_id,n,ctr,logloss_model,logloss_ctr,rig,auc followed
/// by one column per extra name.
std::string metric_csv_header(std::span<const std::string> extra_columns = {});
std::string metric_csv_row(const MetricRecord& r, std::span<const std::optional<double>> extra = {});

/// Inverse of metric_csv_row for the first seven columns.
MetricRecord parse_metric_csv_row(const std::string& line);

/// Shortest round-trip decimal text of a double, or "" for nullopt.
std::string format_double(double v);
std::string format_optional(const std::optional<double>& v);

}  // namespace batchol
