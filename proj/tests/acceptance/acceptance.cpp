// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "batchol/experiment.hpp"
#include "batchol/model.hpp"
#include "batchol/objective.hpp"
#include "batchol/optimizers.hpp"
#include "batchol/seed.hpp"
#include "batchol/theory.hpp"

using namespace batchol;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kGradRelTol = 1e-6;
constexpr double kGradSeconds = 10.0;
constexpr double kQuadraticTol = 1e-8;
constexpr double kIdentityTol = 1e-12;
constexpr double kSuiteIdentityTol = 1e-10;
constexpr double kSuiteSeconds = 120.0;
constexpr int kSuiteInstances = 200;
constexpr double kGridOrders = 1.0;
constexpr double kStalePositiveShare = 0.80;
constexpr std::int64_t kStaleFrom = 30;
constexpr double kCorruptionRatio = 1.5;
constexpr double kDelayBand = 0.001;
constexpr double kInitRatio = 0.25;
constexpr double kRunSeconds = 1800.0;

int failures = 0;

void verdict(int id, bool pass, const std::string& detail) {
    std::printf("CRITERION %d %s: %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    failures += pass ? 0 : 1;
}

void info(const std::string& line) {
    std::printf("  info: %s\n", line.c_str());
    std::fflush(stdout);
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Batch random_batch(std::mt19937_64& rng, std::size_t d, std::size_t n) {
    std::uniform_real_distribution<double> val(-1.5, 1.5);
    std::bernoulli_distribution on(0.4), click(0.3);
    Batch b;
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<Feature> f;
        for (std::uint32_t r = 0; r < d; ++r) {
            if (on(rng)) f.push_back({r, val(rng)});
        }
        b.examples.push_back({SparseVector(std::move(f)), click(rng) ? 1 : 0});
    }
    return b;
}

std::vector<double> random_params(std::mt19937_64& rng, std::size_t n, double scale) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> p(n);
    for (auto& x : p) x = g(rng);
    return p;
}

// Summed log-loss written out from the definition, bias last.
double oracle_loss(const std::vector<double>& p, const Batch& b) {
    const std::size_t d = p.size() - 1;
    double s = 0.0;
    for (const auto& e : b.examples) {
        double z = p[d];
        for (const auto& f : e.features.entries()) z += p[f.index] * f.value;
        const double q = 1.0 / (1.0 + std::exp(-z));
        s -= e.label == 1 ? std::log(q) : std::log(1.0 - q);
    }
    return s;
}

// Dense gradient written out from the definition.
std::vector<double> oracle_gradient(const std::vector<double>& p, const Batch& b) {
    const std::size_t d = p.size() - 1;
    std::vector<double> g(p.size(), 0.0);
    for (const auto& e : b.examples) {
        double z = p[d];
        for (const auto& f : e.features.entries()) z += p[f.index] * f.value;
        const double r = 1.0 / (1.0 + std::exp(-z)) - e.label;
        for (const auto& f : e.features.entries()) g[f.index] += r * f.value;
        g[d] += r;
    }
    return g;
}

void criterion_gradients() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t d = 1 + rng() % 15;
        const auto batch = random_batch(rng, d, 5 + rng() % 60);
        auto p = random_params(rng, d + 1, 0.6);
        const auto g = gradient(LinearModel::from_params(p), batch);
        const double h = 1e-5;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double keep = p[i];
            p[i] = keep + h;
            const double up = oracle_loss(p, batch);
            p[i] = keep - h;
            const double down = oracle_loss(p, batch);
            p[i] = keep;
            const double fd = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(g[i] - fd) / std::max(1.0, std::abs(fd)));
        }
    }
    const double secs = seconds_since(t0);
    verdict(1, worst < kGradRelTol && secs < kGradSeconds,
            "100 random instances, max relative error " + fmt(worst) + " (< " + fmt(kGradRelTol) + "), " +
                fmt(secs, 3) + " s (< " + fmt(kGradSeconds) + " s)");
}

void criterion_optimizers() {
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double worst_quad = 0.0;
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 2 + rng() % 20;
        std::vector<double> m(n * n), c(n), a(n * n, 0.0);
        for (auto& x : m) x = u(rng);
        for (auto& x : c) x = u(rng);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t r = 0; r < n; ++r) a[i * n + j] += m[r * n + i] * m[r * n + j];
            }
            a[i * n + i] += 0.5;
        }
        auto grad = [=](std::span<const double> w, std::span<double> out) {
            for (std::size_t i = 0; i < n; ++i) {
                out[i] = 0.0;
                for (std::size_t j = 0; j < n; ++j) out[i] += a[i * n + j] * (w[j] - c[j]);
            }
        };
        const FunctionObjective f(
            n,
            [=](std::span<const double> w) {
                std::vector<double> g(n);
                grad(w, g);
                double v = 0.0;
                for (std::size_t i = 0; i < n; ++i) v += 0.5 * g[i] * (w[i] - c[i]);
                return v;
            },
            grad);
        const auto res =
            lbfgs_minimize(f, std::vector<double>(n, 0.0), {.gradient_tolerance = 1e-12, .max_iterations = 5000});
        for (std::size_t i = 0; i < n; ++i) worst_quad = std::max(worst_quad, std::abs(res.minimizer[i] - c[i]));
    }

    // grad F(w_k) + lambda (w_k - w0) against grad F(w_k) - lambda alpha sum_{j<k} grad F(w_j),
    // both sides from the oracle gradient
    double worst_id = 0.0;
    for (int t = 0; t < 50; ++t) {
        const std::size_t d = 2 + rng() % 12;
        const auto batch = random_batch(rng, d, 20 + rng() % 80);
        const LogisticObjective f(batch, d);
        const auto w0 = random_params(rng, d + 1, 0.3);
        const int k = 1 + static_cast<int>(rng() % 40);
        const double alpha = 1e-3;
        const double lambda = 1.0 / (alpha * k);
        const auto traj = run_gd(f, w0, {.learning_rate = alpha, .iterations = k});
        const auto gk = oracle_gradient(traj.last(), batch);
        std::vector<double> sum(d + 1, 0.0);
        for (int j = 0; j < k; ++j) {
            const auto gj = oracle_gradient(traj.iterates[static_cast<std::size_t>(j)], batch);
            for (std::size_t r = 0; r <= d; ++r) sum[r] += gj[r];
        }
        for (std::size_t r = 0; r <= d; ++r) {
            const double lhs = gk[r] + lambda * (traj.last()[r] - w0[r]);
            const double rhs = gk[r] - lambda * alpha * sum[r];
            worst_id = std::max(worst_id, std::abs(lhs - rhs));
        }
    }
    verdict(2, worst_quad < kQuadraticTol && worst_id < kIdentityTol,
            "LBFGS max |w - c| " + fmt(worst_quad) + " (< " + fmt(kQuadraticTol) + "), GD summation identity max deviation " +
                fmt(worst_id) + " (< " + fmt(kIdentityTol) + ")");
}

void criterion_guarantee(std::uint64_t seed) {
    const auto t0 = Clock::now();
    const auto res = run_guarantee_suite(kSuiteInstances, seed, {.gradient_tolerance = 1e-10, .max_iterations = 5000});
    const double secs = seconds_since(t0);
    int held = 0;
    bool matched = true;
    for (const auto& r : res.reports) {
        held += r.lhs <= r.rhs + kBoundToleranceScale * (1.0 + std::abs(r.g_wstar)) ? 1 : 0;
        matched = matched && std::abs(r.product - 1.0) <= 1e-9;
    }
    verdict(3,
            held == kSuiteInstances && res.diverged == 0 && matched &&
                res.max_identity_deviation < kSuiteIdentityTol && secs < kSuiteSeconds,
            std::to_string(held) + "/" + std::to_string(kSuiteInstances) + " held (" + std::to_string(res.diverged) +
                " diverged), max identity deviation " + fmt(res.max_identity_deviation) + " (< " +
                fmt(kSuiteIdentityTol) + "), " + fmt(secs, 3) + " s (< " + fmt(kSuiteSeconds) + " s)");
    info("intermediate gradient bound (k-1)*eps violated on " + std::to_string(res.intermediate_violations) +
         " instances (not asserted)");
}

// Every grid triple has alpha*lambda*k = 1; the two regimes are told apart by membership.
bool matched_triple(const BoundReport& r) {
    constexpr std::array<std::array<double, 3>, 4> matched{{{1e-5, 5, 2e4}, {1e-5, 10, 1e4}, {5e-6, 5, 4e4}, {1e-6, 10, 1e5}}};
    for (const auto& [a, k, l] : matched) {
        if (std::abs(r.alpha / a - 1.0) < 1e-9 && r.k == static_cast<int>(k) && std::abs(r.lambda / l - 1.0) < 1e-9) return true;
    }
    return false;
}

void criterion_grid(const ExperimentResult& res) {
    double matched_max = -INFINITY, mismatched_min = INFINITY;
    std::vector<std::pair<double, double>> pts;
    int n_matched = 0, n_mismatched = 0;
    for (const auto& [label, r] : res.bounds) {
        if (label.rfind("grid-", 0) != 0) continue;
        const double ll = std::log10(std::max(r.lhs, 1e-300));
        info(label + " alpha=" + fmt(r.alpha) + " k=" + std::to_string(r.k) + " lambda=" + fmt(r.lambda) +
             " log10(lhs)=" + fmt(ll) + " log10(rhs)=" + fmt(std::log10(std::max(r.rhs, 1e-300))));
        pts.emplace_back(r.lhs, r.rhs);
        if (matched_triple(r)) {
            matched_max = std::max(matched_max, ll);
            ++n_matched;
        } else {
            mismatched_min = std::min(mismatched_min, ll);
            ++n_mismatched;
        }
    }
    // rhs ordering agrees with lhs ordering on every pair
    int discordant = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            if ((pts[i].first - pts[j].first) * (pts[i].second - pts[j].second) < 0) ++discordant;
        }
    }
    const bool pass = n_matched == 4 && n_mismatched == 2 && mismatched_min - matched_max >= kGridOrders &&
                      discordant == 0;
    verdict(4, pass,
            "max matched log10(lhs) " + fmt(matched_max) + ", min mismatched " + fmt(mismatched_min) + " (gap " +
                fmt(mismatched_min - matched_max) + " >= " + fmt(kGridOrders) + "), discordant rhs/lhs pairs " +
                std::to_string(discordant));
}

const StrategyRun& need_run(const ExperimentResult& res, const std::string& label) {
    const auto* r = res.find_run(label);
    if (r == nullptr) throw std::runtime_error("fixture result has no run '" + label + "'");
    return *r;
}

std::map<std::int64_t, double> rig_by_day(std::span<const MetricRecord> rs) {
    std::map<std::int64_t, double> m;
    for (const auto& r : rs) {
        if (r.rig) m[r.batch_id] = *r.rig;
    }
    return m;
}

// Sum of stale RIG minus run RIG over days >= from, and the count of positive days.
std::pair<double, std::pair<int, int>> gain_vs_stale(const ExperimentResult& res, const std::string& label,
                                                     std::int64_t from) {
    const auto stale = rig_by_day(res.stale);
    double sum = 0.0;
    int pos = 0, n = 0;
    for (const auto& [day, rig] : rig_by_day(need_run(res, label).result.records)) {
        if (day < from) continue;
        const auto it = stale.find(day);
        if (it == stale.end()) continue;
        sum += it->second - rig;
        pos += it->second - rig > 0 ? 1 : 0;
        ++n;
    }
    return {sum, {pos, n}};
}

void criterion_staleness(const ExperimentResult& res) {
    const auto [sum, counts] = gain_vs_stale(res, "es", kStaleFrom);
    const double share = counts.second > 0 ? static_cast<double>(counts.first) / counts.second : 0.0;
    verdict(5, sum > 0.0 && share >= kStalePositiveShare && counts.second > 0,
            "ES(k=10) vs frozen base over days " + std::to_string(kStaleFrom) + "+: cumulative RIG gain " + fmt(sum) +
                ", positive on " + std::to_string(counts.first) + "/" + std::to_string(counts.second) + " days (" +
                fmt(100 * share, 3) + "% >= " + fmt(100 * kStalePositiveShare) + "%)");
}

void criterion_interior(const ExperimentResult& res, const ExperimentConfig& cfg) {
    bool pass = !cfg.sweeps.empty();
    std::string detail;
    for (const auto& sw : cfg.sweeps) {
        std::size_t best = 0;
        double best_gain = -INFINITY;
        std::string row;
        for (std::size_t i = 0; i < sw.values.size(); ++i) {
            const auto label = sw.label + "-" + format_double(sw.values[i]);
            const double g = gain_vs_stale(res, label, 0).first;
            row += " " + format_double(sw.values[i]) + ":" + fmt(g);
            if (g > best_gain) {
                best_gain = g;
                best = i;
            }
        }
        const bool interior = best > 0 && best + 1 < sw.values.size();
        pass = pass && interior;
        info(sw.parameter + " sweep cumulative RIG gain vs stale:" + row);
        detail += (detail.empty() ? "" : "; ") + sw.parameter + " best " + format_double(sw.values[best]) +
                  (interior ? " (interior)" : " (endpoint)");
    }
    verdict(6, pass, detail);
}

// Largest RIG increase of the corrupted replay over the clean one after the corrupted day.
double worst_drop(const CorruptionOutcome& c) {
    const auto clean = rig_by_day(c.clean);
    double worst = -INFINITY;
    for (const auto& [day, rig] : rig_by_day(c.corrupted)) {
        if (day <= c.spec.day) continue;
        if (const auto it = clean.find(day); it != clean.end()) worst = std::max(worst, rig - it->second);
    }
    return worst;
}

void criterion_corruption(const ExperimentResult& res) {
    const CorruptionOutcome* window = nullptr;
    std::vector<const CorruptionOutcome*> gated, plain;
    for (const auto& c : res.corruptions) {
        if (c.spec.mode != CorruptionMode::LabelFlip) continue;
        if (c.label == "moving-window") {
            window = &c;
        } else if (c.label.size() > 11 && c.label.ends_with("+quarantine")) {
            gated.push_back(&c);
        } else {
            plain.push_back(&c);
        }
    }
    if (window == nullptr || gated.empty()) {
        verdict(7, false, "fixture has no label-flip study with moving window and quarantine variants");
        return;
    }
    const double mw = worst_drop(*window);
    bool pass = true;
    std::string detail = "moving-window worst drop " + fmt(mw);
    for (const auto* c : gated) {
        const double d = worst_drop(*c);
        const double ratio = d > 0 ? mw / d : INFINITY;
        pass = pass && ratio >= kCorruptionRatio && c->flagged && !c->failure;
        detail += "; " + c->label + " " + fmt(d) + " (ratio " + fmt(ratio) + ", flagged " +
                  (c->flagged ? "yes" : "no") + ")";
    }
    verdict(7, pass, detail + ", need ratio >= " + fmt(kCorruptionRatio));
    for (const auto* c : plain) {
        const double d = worst_drop(*c);
        info("without quarantine " + c->label + " worst drop " + fmt(d) + " (ratio " + fmt(d > 0 ? mw / d : INFINITY) +
             ", flagged " + (c->flagged ? "yes" : "no") + ")");
    }
}

// Non-increasing in the delay order, tolerating one inversion no larger than band.
bool weakly_decreasing(const std::vector<double>& v, double band, int& inversions) {
    inversions = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[i - 1]) {
            ++inversions;
            if (v[i] - v[i - 1] > band) return false;
        }
    }
    return inversions <= 1;
}

void criterion_delay(const ExperimentResult& res) {
    std::vector<double> aucs, quality;
    std::optional<MetricRecord> d60, retrain;
    std::string row;
    for (const auto& r : res.delay) {
        if (!r.metrics || !r.metrics->auc || !r.metrics->rig) continue;
        if (r.delay) {
            aucs.push_back(*r.metrics->auc);
            quality.push_back(-*r.metrics->rig);
            row += " d" + std::to_string(*r.delay) + ": auc " + fmt(*r.metrics->auc, 6) + " rig " +
                   fmt(*r.metrics->rig, 5) + ";";
            if (*r.delay == 60) d60 = r.metrics;
        } else {
            retrain = r.metrics;
            row += " " + r.label + ": auc " + fmt(*r.metrics->auc, 6) + " rig " + fmt(*r.metrics->rig, 5) + ";";
        }
    }
    info("delay rows:" + row);
    int inv_auc = 0, inv_rig = 0;
    const bool auc_ok = aucs.size() == 5 && weakly_decreasing(aucs, kDelayBand, inv_auc);
    const bool rig_ok = quality.size() == 5 && weakly_decreasing(quality, kDelayBand, inv_rig);
    const bool beats = d60 && retrain && *d60->auc > *retrain->auc && *d60->rig < *retrain->rig;
    verdict(8, auc_ok && rig_ok && beats,
            "AUC inversions " + std::to_string(inv_auc) + ", RIG inversions " + std::to_string(inv_rig) +
                " (at most one, within " + fmt(kDelayBand) + "); 60-day snapshot vs retrain: " +
                (beats ? "better" : "not better") + " on AUC and RIG");
}

void criterion_init(const ExperimentResult& res) {
    if (res.init_runs.size() < 2) {
        verdict(9, false, "fixture produced no initialization runs");
        return;
    }
    std::int64_t first = 0, last = INT64_MAX;
    for (const auto& r : res.init_runs) {
        first = std::max(first, r.first_eval_batch);
        last = std::min(last, r.records.back().batch_id);
    }
    auto spread = [&](std::int64_t day) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& r : res.init_runs) {
            for (const auto& m : r.records) {
                if (m.batch_id == day && m.rig) {
                    lo = std::min(lo, *m.rig);
                    hi = std::max(hi, *m.rig);
                }
            }
        }
        return hi - lo;
    };
    const double s0 = spread(first), s1 = spread(last);
    verdict(9, s0 > 0 && s1 < kInitRatio * s0,
            std::to_string(res.init_runs.size()) + " runs, RIG spread " + fmt(s0) + " at batch " + std::to_string(first) +
                ", " + fmt(s1) + " at batch " + std::to_string(last) + " (ratio " + fmt(s0 > 0 ? s1 / s0 : INFINITY) +
                " < " + fmt(kInitRatio) + ")");
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_determinism(const ExperimentResult& a, const fs::path& dir_a, const ExperimentResult& b,
                           const fs::path& dir_b, int workers_b) {
    std::size_t csvs = 0, differing = 0;
    bool same_list = a.outputs == b.outputs;
    for (const auto& rel : a.outputs) {
        if (!rel.ends_with(".csv")) continue;
        ++csvs;
        if (!fs::exists(dir_b / rel) || slurp(dir_a / rel) != slurp(dir_b / rel)) {
            ++differing;
            info("differs: " + rel);
        }
    }
    const double slowest = std::max(a.wall_clock_seconds, b.wall_clock_seconds);
    verdict(10, same_list && csvs > 0 && differing == 0 && slowest < kRunSeconds,
            std::to_string(csvs) + " CSVs compared between 1 and " + std::to_string(workers_b) + " workers, " +
                std::to_string(differing) + " differ; run times " + fmt(a.wall_clock_seconds, 4) + " s and " +
                fmt(b.wall_clock_seconds, 4) + " s (< " + fmt(kRunSeconds) + " s)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    std::string config = BATCHOL_FIXTURE_CONFIG;
    std::string scratch = (fs::temp_directory_path() / "batchol_acceptance").string();
    int workers = static_cast<int>(std::max(2u, std::min(4u, std::thread::hardware_concurrency())));
    bool quick = false;
    app.add_option("-c,--config", config, "fixture config");
    app.add_option("-o,--scratch", scratch, "directory for the two fixture runs");
    app.add_option("-j,--workers", workers, "worker threads for the second run")->check(CLI::Range(2, 64));
    app.add_flag("--quick", quick, "criteria 1-3 only");
    CLI11_PARSE(app, argc, argv);

    try {
        criterion_gradients();
        criterion_optimizers();
        auto cfg = load_config(config);
        criterion_guarantee(derive_seed(cfg.seed, seed_tag::kTheorem));
        if (quick) return failures == 0 ? 0 : 1;

        const fs::path root(scratch);
        fs::remove_all(root);
        auto log = [](const std::string& m) { std::fprintf(stderr, "[fixture] %s\n", m.c_str()); };

        cfg.output_dir = root / "run1";
        cfg.workers = 1;
        const auto first = run_experiment(cfg, {.stages = Stages::all(), .write = true, .log = log});
        for (const auto& f : first.failures) info("run failure: " + f);

        criterion_grid(first);
        criterion_staleness(first);
        criterion_interior(first, cfg);
        criterion_corruption(first);
        criterion_delay(first);
        criterion_init(first);

        cfg.output_dir = root / "run2";
        cfg.workers = workers;
        const auto second = run_experiment(cfg, {.stages = Stages::all(), .write = true, .log = log});
        criterion_determinism(first, root / "run1", second, root / "run2", workers);
    } catch (const std::exception& e) {
        std::printf("acceptance aborted: %s\n", e.what());
        return 2;
    }
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
