#include "batchol/learner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "batchol/error.hpp"
#include "batchol/objective.hpp"

namespace batchol {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::int64_t id) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(id) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string batch_context(const Batch& b, const std::string& what) {
    return "batch " + std::to_string(b.id) + ": " + what;
}

}  // namespace

EsResult es_update(const LinearModel& model, const Batch& batch, const EsStrategy& s,
                   std::optional<PerCoordState> per_coord) {
    const LogisticObjective f(batch, model.dimension());
    const auto w0 = model.params();
    EsResult out;
    try {
        switch (s.algorithm) {
        case EsAlgorithm::Gd:
            out.trajectory = run_gd(f, w0, GdConfig{s.learning_rate, s.passes});
            break;
        case EsAlgorithm::Sgd:
            out.trajectory = run_sgd(f, w0,
                                     SgdConfig{s.learning_rate, s.passes, s.minibatch_size,
                                               mix_seed(s.seed, batch.id), s.shuffle});
            break;
        case EsAlgorithm::SgdPerCoordinate: {
            PerCoordState state = per_coord ? std::move(*per_coord) : PerCoordState(w0.size());
            PerCoordConfig cfg{s.passes, s.minibatch_size, mix_seed(s.seed, batch.id), s.shuffle,
                               s.rate_scale};
            auto [traj, next] = run_sgd_percoord(f, w0, std::move(state), cfg);
            out.trajectory = std::move(traj);
            out.per_coord = std::move(next);
            break;
        }
        case EsAlgorithm::Lbfgs: {
            LbfgsConfig cfg;
            cfg.max_iterations = s.passes;
            cfg.gradient_tolerance = 1e-12;
            const auto res = lbfgs_minimize(f, w0, cfg);
            out.trajectory.iterates = {w0, res.minimizer};
            break;
        }
        }
    } catch (const Divergence& e) {
        throw Divergence(batch_context(batch, e.what()), e.iteration());
    } catch (const LineSearchStall& e) {
        throw LineSearchStall(batch_context(batch, e.what()));
    }
    out.model = LinearModel::from_params(out.trajectory.last());
    return out;
}

std::vector<double> fisher_lambda(const ProxStrategy& s, std::span<const double> fisher_state) {
    std::vector<double> lam(fisher_state.size());
    for (std::size_t r = 0; r < lam.size(); ++r) {
        lam[r] = std::max(s.lambda_floor, s.fisher_scale * fisher_state[r]);
    }
    if (!s.regularize_bias && !lam.empty()) lam.back() = 0.0;
    return lam;
}

LinearModel prox_update(const LinearModel& model, const Batch& batch, const ProxStrategy& s,
                        const LbfgsConfig& solver, std::span<const double> fisher_state) {
    ProxConfig cfg;
    cfg.anchor = model;
    cfg.regularize_bias = s.regularize_bias;
    switch (s.source) {
    case LambdaSource::Uniform:
        cfg.lambda = s.lambda;
        break;
    case LambdaSource::Fixed:
        cfg.lambda = s.per_coordinate;
        break;
    case LambdaSource::Fisher:
        if (fisher_state.size() != model.dimension() + 1) {
            throw DimensionMismatch(batch_context(batch, "Fisher state has wrong length"));
        }
        cfg.lambda = fisher_lambda(s, fisher_state);
        break;
    }
    const LogisticObjective f(batch, model.dimension());
    const ProxObjective g(f, std::move(cfg));
    try {
        return LinearModel::from_params(lbfgs_minimize(g, model.params(), solver).minimizer);
    } catch (const LineSearchStall& e) {
        throw LineSearchStall(batch_context(batch, e.what()));
    } catch (const Divergence& e) {
        throw Divergence(batch_context(batch, e.what()), e.iteration());
    }
}

std::vector<double> fisher_diag(const LinearModel& model, const Batch& batch) {
    const LogisticObjective f(batch, model.dimension());
    std::vector<double> out(f.size());
    f.fisher_diagonal(model.params(), out);
    return out;
}

std::vector<double> fisher_accumulate(std::span<const double> prev,
                                      std::span<const double> batch_fisher, double decay) {
    if (prev.size() != batch_fisher.size()) throw DimensionMismatch("Fisher vectors differ in length");
    if (!(decay >= 0.0 && decay <= 1.0)) throw InvalidArgument("Fisher decay must be in [0, 1]");
    std::vector<double> out(prev.size());
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = decay * prev[r] + batch_fisher[r];
    return out;
}

std::vector<MetricRecord> evaluate_stream(std::span<const Batch> batches, const LinearModel& model) {
    std::vector<MetricRecord> out;
    out.reserve(batches.size());
    for (const auto& b : batches) out.push_back(evaluate(model, b));
    return out;
}

namespace {

void check_ids(std::span<const Batch> batches) {
    for (std::size_t i = 1; i < batches.size(); ++i) {
        if (batches[i].id <= batches[i - 1].id) {
            throw InvalidArgument("batch ids must be strictly increasing (" +
                                  std::to_string(batches[i - 1].id) + " then " +
                                  std::to_string(batches[i].id) + ")");
        }
    }
}

}  // namespace

StreamResult run_stream(std::span<const Batch> batches, const LearnerState& initial,
                        const UpdateStrategy& strategy, const StreamOptions& options) {
    if (batches.empty()) throw InvalidArgument("run_stream needs at least one batch");
    check_ids(batches);

    LearnerState state = initial;
    const std::size_t n_params = state.model.dimension() + 1;
    if (const auto* p = std::get_if<ProxStrategy>(&strategy);
        p != nullptr && p->source == LambdaSource::Fisher && !state.fisher) {
        state.fisher = std::vector<double>(n_params, 0.0);
    }
    if (const auto* e = std::get_if<EsStrategy>(&strategy);
        e != nullptr && e->algorithm == EsAlgorithm::SgdPerCoordinate && !state.per_coord) {
        state.per_coord = PerCoordState(n_params);
    }

    StreamResult res;
    for (const auto& batch : batches) {
        res.records.push_back(evaluate(state.model, batch));

        const MetricRecord* yesterday = res.records.size() >= 2 ? &res.records[res.records.size() - 2]
                                        : options.previous   ? &*options.previous
                                                             : nullptr;
        if (options.quarantine && yesterday != nullptr) {
            const auto rep = safeguard_check(res.records.back(), *yesterday, options.thresholds);
            if (!rep.passed) {
                res.skipped.push_back(batch.id);
                res.snapshots.push_back({state.model, batch.id, state.per_coord, state.fisher});
                continue;
            }
        }

        try {
            if (const auto* es = std::get_if<EsStrategy>(&strategy)) {
                auto upd = es_update(state.model, batch, *es, state.per_coord);
                state.model = std::move(upd.model);
                if (upd.per_coord) state.per_coord = std::move(upd.per_coord);
            } else {
                const auto& px = std::get<ProxStrategy>(strategy);
                std::span<const double> fs;
                if (state.fisher) fs = *state.fisher;
                state.model = prox_update(state.model, batch, px, px.solver, fs);
                if (px.source == LambdaSource::Fisher) {
                    state.fisher =
                        fisher_accumulate(*state.fisher, fisher_diag(state.model, batch), px.fisher_decay);
                }
            }
        } catch (const Error& e) {
            res.failure = e.what();
            return res;
        }
        res.snapshots.push_back({state.model, batch.id, state.per_coord, state.fisher});
    }
    return res;
}

LinearModel train_full(std::span<const Batch> window, std::size_t dimension,
                       const TrainerConfig& cfg) {
    const LogisticObjective f(window, dimension);
    ProxConfig ridge;
    ridge.anchor = LinearModel(dimension);
    ridge.lambda = cfg.ridge;
    const ProxObjective g(f, std::move(ridge));
    const std::vector<double> w0(dimension + 1, 0.0);
    return LinearModel::from_params(lbfgs_minimize(g, w0, cfg.solver).minimizer);
}

StreamResult run_moving_window(std::span<const Batch> batches, std::size_t dimension,
                               int window_days, const TrainerConfig& cfg) {
    if (window_days < 1) throw InvalidArgument("window_days must be >= 1");
    check_ids(batches);
    StreamResult res;
    const auto w = static_cast<std::size_t>(window_days);
    for (std::size_t i = 0; i < batches.size(); ++i) {
        if (i < w) {
            res.skipped.push_back(batches[i].id);
            continue;
        }
        try {
            auto model = train_full(batches.subspan(i - w, w), dimension, cfg);
            res.records.push_back(evaluate(model, batches[i]));
            res.snapshots.push_back({std::move(model), batches[i - 1].id, std::nullopt, std::nullopt});
        } catch (const Error& e) {
            res.failure = batch_context(batches[i], e.what());
            return res;
        }
    }
    return res;
}

std::vector<DelayRow> run_delay_analysis(std::span<const Snapshot> snapshots,
                                         std::span<const Batch> eval_batches,
                                         std::span<const int> delays,
                                         const LinearModel* retrained_baseline,
                                         std::string baseline_label) {
    if (eval_batches.empty()) throw InvalidArgument("delay analysis needs eval batches");
    std::map<std::int64_t, const Snapshot*> by_id;
    for (const auto& s : snapshots) by_id[s.batch_id] = &s;

    const std::int64_t eval_start = eval_batches.front().id;
    std::vector<DelayRow> rows;
    for (const int d : delays) {
        DelayRow row;
        row.label = "delay_" + std::to_string(d);
        row.delay = d;
        row.trained_through = eval_start - d;
        if (const auto it = by_id.find(eval_start - d); it != by_id.end()) {
            row.metrics = evaluate_pooled(it->second->model, eval_batches);
        }
        rows.push_back(std::move(row));
    }
    if (retrained_baseline != nullptr) {
        DelayRow row;
        row.label = std::move(baseline_label);
        row.metrics = evaluate_pooled(*retrained_baseline, eval_batches);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<InitializationRun> run_initialization_study(std::span<const Batch> batches,
                                                        std::size_t dimension,
                                                        std::span<const int> start_offsets,
                                                        int base_window_days,
                                                        const UpdateStrategy& strategy,
                                                        const TrainerConfig& trainer) {
    if (start_offsets.size() < 2) throw InvalidArgument("initialization study needs >= 2 starts");
    if (base_window_days < 1) throw InvalidArgument("base window must be >= 1 day");
    std::vector<InitializationRun> runs;
    const auto w = static_cast<std::size_t>(base_window_days);
    for (const int off : start_offsets) {
        if (off < 0 || static_cast<std::size_t>(off) + w >= batches.size()) {
            throw InvalidArgument("start offset " + std::to_string(off) + " leaves no batches to stream");
        }
        const auto start = static_cast<std::size_t>(off);
        const auto base = train_full(batches.subspan(start, w), dimension, trainer);
        auto stream = run_stream(batches.subspan(start + w), LearnerState{base, {}, {}}, strategy);
        if (stream.failure) throw Error("initialization run failed: " + *stream.failure);
        runs.push_back({batches[start].id, batches[start + w].id, std::move(stream.records)});
    }
    return runs;
}

std::optional<double> rig_spread(std::span<const InitializationRun> runs, std::int64_t batch_id) {
    double lo = INFINITY;
    double hi = -INFINITY;
    for (const auto& run : runs) {
        const auto it = std::find_if(run.records.begin(), run.records.end(),
                                     [&](const MetricRecord& r) { return r.batch_id == batch_id; });
        if (it == run.records.end() || !it->rig) return std::nullopt;
        lo = std::min(lo, *it->rig);
        hi = std::max(hi, *it->rig);
    }
    if (runs.empty()) return std::nullopt;
    return hi - lo;
}

}  // namespace batchol
