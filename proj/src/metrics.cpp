#include "batchol/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "batchol/error.hpp"
#include "compensated_sum.hpp"

namespace batchol {

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw DimensionMismatch("scores and labels differ in length");
    }
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        // ranks i+1..j share the midrank
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                positive_rank_sum += midrank;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        throw UndefinedMetric("AUC is undefined when only one class is present");
    }
    const double np = static_cast<double>(positives);
    const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(negatives));
}

double rig(double logloss_model, double logloss_ctr) {
    if (!(logloss_ctr > 1e-12) || !std::isfinite(logloss_ctr)) {
        throw UndefinedMetric("RIG is undefined for a degenerate CTR log-loss");
    }
    return (logloss_model - logloss_ctr) / logloss_ctr;
}

double empirical_ctr_logloss(std::span<const int> labels) {
    if (labels.empty()) throw EmptyBatch();
    std::size_t positives = 0;
    for (int y : labels) positives += y == 1 ? 1 : 0;
    const double n = static_cast<double>(labels.size());
    const double p = std::clamp(static_cast<double>(positives) / n, kProbClamp, 1.0 - kProbClamp);
    const double np = static_cast<double>(positives);
    return -(np * std::log(p) + (n - np) * std::log(1.0 - p));
}

namespace {

MetricRecord evaluate_rows(const LinearModel& model, std::span<const Batch> batches) {
    std::vector<double> scores;
    std::vector<int> labels;
    detail::CompensatedSum loss;
    std::size_t positives = 0;
    for (const auto& b : batches) {
        for (const auto& e : b.examples) {
            const double z = model.margin(e.features);
            loss.add(example_loss(z, e.label));
            scores.push_back(z);
            labels.push_back(e.label);
            positives += e.label == 1 ? 1 : 0;
        }
    }
    if (labels.empty()) throw EmptyBatch();

    MetricRecord r;
    r.batch_id = batches.back().id;
    r.n = labels.size();
    const double n = static_cast<double>(r.n);
    r.ctr = static_cast<double>(positives) / n;
    r.logloss_model = loss.value() / n;
    r.logloss_ctr = empirical_ctr_logloss(labels) / n;
    if (positives > 0 && positives < r.n) {
        r.rig = rig(r.logloss_model, r.logloss_ctr);
        // margins rank identically to probabilities and do not saturate
        r.auc = auc(scores, labels);
    }
    return r;
}

}  // namespace

MetricRecord evaluate(const LinearModel& model, const Batch& batch) {
    return evaluate_rows(model, std::span<const Batch>(&batch, 1));
}

MetricRecord evaluate_pooled(const LinearModel& model, std::span<const Batch> batches) {
    if (batches.empty()) throw EmptyBatch();
    return evaluate_rows(model, batches);
}

std::optional<double> rig_gain(const MetricRecord& model, const MetricRecord& baseline) {
    if (!model.rig || !baseline.rig) return std::nullopt;
    return *baseline.rig - *model.rig;
}

std::optional<double> auc_gain(const MetricRecord& model, const MetricRecord& baseline) {
    if (!model.auc || !baseline.auc) return std::nullopt;
    return *model.auc - *baseline.auc;
}

SafeguardReport safeguard_check(const MetricRecord& today, const MetricRecord& yesterday,
                                const SafeguardThresholds& t, const MetricRecord* stale_today,
                                const MetricRecord* window_today) {
    SafeguardReport rep;
    auto add = [&](std::string name, double observed, double threshold, bool ok) {
        rep.checks.push_back({std::move(name), observed, threshold, ok});
        rep.passed = rep.passed && ok;
    };

    if (today.rig && yesterday.rig) {
        const double d = std::abs(*today.rig - *yesterday.rig);
        add("delta_rig", d, t.max_delta_rig, d <= t.max_delta_rig);
    } else {
        rep.complete = false;
    }
    if (today.auc && yesterday.auc) {
        const double d = std::abs(*today.auc - *yesterday.auc);
        add("delta_auc", d, t.max_delta_auc, d <= t.max_delta_auc);
    } else {
        rep.complete = false;
    }

    if (stale_today != nullptr) {
        if (const auto g = rig_gain(today, *stale_today)) {
            add("gain_vs_stale", *g, t.min_gain_vs_stale, *g >= t.min_gain_vs_stale);
        } else {
            rep.complete = false;
        }
    } else {
        rep.complete = false;
    }
    if (window_today != nullptr) {
        if (const auto g = rig_gain(today, *window_today)) {
            add("loss_vs_window", -*g, t.max_loss_vs_window, -*g <= t.max_loss_vs_window);
        } else {
            rep.complete = false;
        }
    } else {
        rep.complete = false;
    }

    const double ctr_rel = yesterday.ctr > 0.0 ? std::abs(today.ctr - yesterday.ctr) / yesterday.ctr
                                               : (today.ctr > 0.0 ? INFINITY : 0.0);
    add("ctr_band", ctr_rel, t.ctr_band, ctr_rel <= t.ctr_band);
    const double vol_rel =
        yesterday.n > 0 ? std::abs(static_cast<double>(today.n) - static_cast<double>(yesterday.n)) /
                              static_cast<double>(yesterday.n)
                        : (today.n > 0 ? INFINITY : 0.0);
    add("volume_band", vol_rel, t.volume_band, vol_rel <= t.volume_band);
    return rep;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string format_optional(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

std::string metric_csv_header(std::span<const std::string> extra_columns) {
    std::string h = "batch_id,n,ctr,logloss_model,logloss_ctr,rig,auc";
    for (const auto& c : extra_columns) h += "," + c;
    return h;
}

std::string metric_csv_row(const MetricRecord& r, std::span<const std::optional<double>> extra) {
    std::string s = std::to_string(r.batch_id) + "," + std::to_string(r.n) + "," +
                    format_double(r.ctr) + "," + format_double(r.logloss_model) + "," +
                    format_double(r.logloss_ctr) + "," + format_optional(r.rig) + "," +
                    format_optional(r.auc);
    for (const auto& e : extra) s += "," + format_optional(e);
    return s;
}

namespace {

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ParseError("malformed number '" + s + "'", 0);
    }
    return v;
}

}  // namespace

MetricRecord parse_metric_csv_row(const std::string& line) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (!line.empty() && line.back() == ',') cols.emplace_back();
    if (cols.size() < 7) throw ParseError("metric row needs at least 7 columns", 0);
    MetricRecord r;
    r.batch_id = std::stoll(cols[0]);
    r.n = std::stoull(cols[1]);
    r.ctr = parse_double(cols[2]);
    r.logloss_model = parse_double(cols[3]);
    r.logloss_ctr = parse_double(cols[4]);
    if (!cols[5].empty()) r.rig = parse_double(cols[5]);
    if (!cols[6].empty()) r.auc = parse_double(cols[6]);
    return r;
}

}  // namespace batchol
