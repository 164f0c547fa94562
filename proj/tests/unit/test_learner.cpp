#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "batchol/datagen.hpp"
#include "batchol/error.hpp"
#include "batchol/learner.hpp"
#include "batchol/objective.hpp"
#include "helpers.hpp"

using namespace batchol;

namespace {

GeneratedStream stream(int days = 10, double drift = 0.05, std::uint64_t seed = 3) {
    StreamSpec s;
    s.dimension = 20;
    s.days = days;
    s.examples_per_day = 1500;
    s.active_features = 6;
    s.drift_rate = drift;
    s.distribution_shift_rate = drift;
    s.weight_scale = 0.25;
    s.seed = seed;
    return generate_stream(s);
}

EsStrategy gd(double lr, int k) {
    EsStrategy e;
    e.algorithm = EsAlgorithm::Gd;
    e.learning_rate = lr;
    e.passes = k;
    return e;
}

const TrainerConfig kTrainer{};

}  // namespace

TEST(Fisher, ZeroModelClosedForm) {
    Batch b;
    b.examples.push_back({SparseVector({{0, 2.0}, {2, 1.0}}), 1});
    b.examples.push_back({SparseVector({{0, -1.0}}), 0});
    const auto f = fisher_diag(LinearModel(3), b);
    EXPECT_DOUBLE_EQ(f[0], 0.25 * 5.0);
    EXPECT_DOUBLE_EQ(f[1], 0.0);
    EXPECT_DOUBLE_EQ(f[2], 0.25);
    EXPECT_DOUBLE_EQ(f[3], 0.5);
}

TEST(Fisher, SaturatedModelIsNearZero) {
    Batch b;
    b.examples.push_back({SparseVector({{0, 1.0}}), 1});
    for (double v : fisher_diag(LinearModel({80.0}, 0.0), b)) EXPECT_LT(v, 1e-30);
}

TEST(Fisher, MatchesHessianDiagonal) {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 20; ++t) {
        const std::size_t d = 2 + rng() % 8;
        const auto batch = test::random_batch(rng, d, 30);
        const auto m = test::random_model(rng, d);
        const auto f = fisher_diag(m, batch);
        auto p = m.params();
        const double h = 1e-5;
        for (std::size_t r = 0; r < p.size(); ++r) {
            const double keep = p[r];
            p[r] = keep + h;
            const double up = gradient(LinearModel::from_params(p), batch)[r];
            p[r] = keep - h;
            const double down = gradient(LinearModel::from_params(p), batch)[r];
            p[r] = keep;
            const double fd = (up - down) / (2 * h);
            EXPECT_LT(test::rel_err(f[r], fd), 1e-5);
        }
    }
}

TEST(Fisher, Accumulation) {
    const std::vector<double> f{1.0, 2.0, 0.5};
    const std::vector<double> zero(3, 0.0);
    EXPECT_EQ(fisher_accumulate(zero, f, 1.0), f);
    EXPECT_EQ(fisher_accumulate(std::vector<double>{9.0, 9.0, 9.0}, f, 0.0), f);
    auto s = fisher_accumulate(zero, f, 0.9);
    s = fisher_accumulate(s, f, 0.9);
    s = fisher_accumulate(s, f, 0.9);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(s[r], 2.71 * f[r], 1e-14);
}

TEST(EsUpdate, ZeroRateKeepsModel) {
    const auto s = stream(2);
    std::mt19937_64 rng(1);
    const auto m = test::random_model(rng, 20, 0.1);
    EXPECT_EQ(es_update(m, s.batches[0], gd(0.0, 5)).model, m);
}

TEST(EsUpdate, GdMatchesDirectRecurrence) {
    const auto s = stream(2);
    const LogisticObjective f(s.batches[0], 20);
    const std::vector<double> w0(21, 0.0);
    const auto direct = run_gd(f, w0, {.learning_rate = 1e-4, .iterations = 5});
    EXPECT_EQ(es_update(LinearModel(20), s.batches[0], gd(1e-4, 5)).model.params(), direct.last());
}

TEST(ProxUpdate, StationaryPoint) {
    const auto s = stream(2);
    ProxStrategy p;
    p.lambda = 50.0;
    p.solver = {.gradient_tolerance = 1e-9, .max_iterations = 2000};
    const LinearModel anchor(20);
    const auto m = prox_update(anchor, s.batches[0], p, p.solver);
    const auto g = prox_gradient(m, s.batches[0], ProxConfig{anchor, 50.0, true});
    for (double x : g) EXPECT_LT(std::abs(x), 1e-8);
}

TEST(ProxUpdate, HugeLambdaPinsModel) {
    const auto s = stream(2);
    std::mt19937_64 rng(2);
    const auto anchor = test::random_model(rng, 20, 0.2);
    ProxStrategy p;
    p.lambda = 1e12;
    const auto m = prox_update(anchor, s.batches[0], p, p.solver);
    for (std::size_t r = 0; r < 21; ++r) EXPECT_NEAR(m.params()[r], anchor.params()[r], 1e-6);
}

TEST(ProxUpdate, FisherLambdaUsesFloorAndScale) {
    ProxStrategy p;
    p.source = LambdaSource::Fisher;
    p.fisher_scale = 0.5;
    p.lambda_floor = 1.0;
    const auto l = fisher_lambda(p, std::vector<double>{0.5, 10.0, 4.0});
    EXPECT_EQ(l, (std::vector<double>{1.0, 5.0, 2.0}));
    p.regularize_bias = false;
    EXPECT_EQ(fisher_lambda(p, std::vector<double>{0.5, 10.0, 4.0}).back(), 0.0);
}

TEST(Stream, FrozenModelEqualsStale) {
    const auto s = stream(6);
    const LinearModel base = train_full(std::span(s.batches).first(2), 20, kTrainer);
    const auto rest = std::span(s.batches).subspan(2);
    const auto res = run_stream(rest, LearnerState{base, {}, {}}, gd(0.0, 3));
    EXPECT_EQ(res.records, evaluate_stream(rest, base));
    EXPECT_EQ(res.snapshots.size(), rest.size());
}

TEST(Stream, ReplayFromSnapshots) {
    const auto s = stream(8);
    const LinearModel base = train_full(std::span(s.batches).first(2), 20, kTrainer);
    const auto rest = std::span(s.batches).subspan(2);
    for (const UpdateStrategy& strat : std::vector<UpdateStrategy>{gd(1e-4, 10), ProxStrategy{}}) {
        const auto res = run_stream(rest, LearnerState{base, {}, {}}, strat);
        ASSERT_FALSE(res.failure);
        EXPECT_EQ(res.records[0], evaluate(base, rest[0]));
        for (std::size_t i = 1; i < rest.size(); ++i) {
            EXPECT_EQ(res.records[i], evaluate(res.snapshots[i - 1].model, rest[i]));
            EXPECT_EQ(res.snapshots[i].batch_id, rest[i].id);
        }
    }
}

TEST(Stream, OnlineLearningBeatsStaleUnderDrift) {
    const auto s = stream(20, 0.08);
    const LinearModel base = train_full(std::span(s.batches).first(4), 20, kTrainer);
    const auto rest = std::span(s.batches).subspan(4);
    ProxStrategy p;
    p.lambda = 300.0;
    const auto ol = run_stream(rest, LearnerState{base, {}, {}}, p);
    const auto stale = evaluate_stream(rest, base);
    double gain = 0.0;
    for (std::size_t i = 0; i < rest.size(); ++i) gain += *rig_gain(ol.records[i], stale[i]);
    EXPECT_GT(gain, 0.0);
}

TEST(Stream, PerCoordinateCountsCarryOver) {
    const auto s = stream(4);
    EsStrategy e;
    e.algorithm = EsAlgorithm::SgdPerCoordinate;
    e.minibatch_size = 1;
    e.passes = 1;
    e.rate_scale = 0.1;
    const auto res = run_stream(s.batches, LearnerState{LinearModel(20), {}, {}}, e);
    ASSERT_FALSE(res.failure);
    EXPECT_EQ(res.snapshots[0].per_coord->counts.back(), 1500u);
    EXPECT_EQ(res.snapshots[3].per_coord->counts.back(), 6000u);
}

TEST(Stream, FisherStateAccumulates) {
    const auto s = stream(3);
    ProxStrategy p;
    p.source = LambdaSource::Fisher;
    const auto res = run_stream(s.batches, LearnerState{LinearModel(20), {}, {}}, p);
    ASSERT_TRUE(res.snapshots[2].fisher);
    EXPECT_GT(res.snapshots[2].fisher->back(), res.snapshots[0].fisher->back());
}

TEST(Stream, FailureStopsWithPartialResult) {
    auto s = stream(3);
    // opposite labels on one huge feature: the summed gradient is +-1e120
    s.batches[1].examples[0] = {SparseVector({{0, 1e120}}), 0};
    s.batches[1].examples[1] = {SparseVector({{0, 1e120}}), 1};
    const auto res = run_stream(s.batches, LearnerState{LinearModel(20), {}, {}}, gd(1.0, 2));
    ASSERT_TRUE(res.failure);
    EXPECT_NE(res.failure->find("batch 1"), std::string::npos) << *res.failure;
    EXPECT_EQ(res.snapshots.size(), 1u);
    EXPECT_EQ(res.records.size(), 2u);
}

TEST(Stream, QuarantineSkipsCorruptedDay) {
    const auto s = stream(8);
    const auto bad = inject_corruption(s.batches, {5, CorruptionMode::CtrSpike, 2.5}, 20, 3);
    StreamOptions opts;
    opts.quarantine = true;
    const auto res = run_stream(bad, LearnerState{LinearModel(20), {}, {}}, gd(1e-4, 5), opts);
    EXPECT_NE(std::find(res.skipped.begin(), res.skipped.end(), 5), res.skipped.end());
    EXPECT_EQ(res.snapshots[5].model, res.snapshots[4].model);
}

TEST(MovingWindow, SkipsShortHistoryAndMatchesRetrain) {
    const auto s = stream(6, 0.0);
    const auto res = run_moving_window(s.batches, 20, 3, kTrainer);
    EXPECT_EQ(res.skipped, (std::vector<std::int64_t>{0, 1, 2}));
    ASSERT_EQ(res.records.size(), 3u);
    for (std::size_t i = 3; i < 6; ++i) {
        const auto m = train_full(std::span(s.batches).subspan(i - 3, 3), 20, kTrainer);
        EXPECT_EQ(res.records[i - 3], evaluate(m, s.batches[i]));
    }
}

TEST(MovingWindow, StationaryStreamCloseToOnline) {
    const auto s = stream(16, 0.0);
    const auto mw = run_moving_window(s.batches, 20, 7, kTrainer);
    const LinearModel base = train_full(std::span(s.batches).first(7), 20, kTrainer);
    ProxStrategy p;
    p.lambda = 1000.0;
    const auto ol = run_stream(std::span(s.batches).subspan(7), LearnerState{base, {}, {}}, p);
    for (std::size_t i = 2; i < mw.records.size(); ++i) EXPECT_NEAR(*mw.records[i].rig, *ol.records[i].rig, 0.02);
}

TEST(Delay, RowsAndMissingSnapshots) {
    const auto s = stream(8);
    const auto res = run_stream(s.batches, LearnerState{LinearModel(20), {}, {}}, gd(1e-4, 5));
    const auto eval = std::span(s.batches).subspan(6);
    const std::vector<int> delays{1, 3, 10};
    const LinearModel retrained(20);
    const auto rows = run_delay_analysis(res.snapshots, eval, delays, &retrained, "retrain");
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(*rows[0].trained_through, 5);
    EXPECT_EQ(*rows[0].metrics, evaluate_pooled(res.snapshots[5].model, eval));
    EXPECT_EQ(*rows[1].metrics, evaluate_pooled(res.snapshots[3].model, eval));
    EXPECT_FALSE(rows[2].metrics);
    EXPECT_EQ(rows[3].label, "retrain");
    EXPECT_EQ(*rows[3].metrics, evaluate_pooled(retrained, eval));
}

TEST(InitStudy, IdenticalOffsetsGiveIdenticalSeries) {
    const auto s = stream(10);
    const std::vector<int> offs{0, 0, 2};
    const auto runs = run_initialization_study(s.batches, 20, offs, 3, gd(1e-4, 5), kTrainer);
    ASSERT_EQ(runs.size(), 3u);
    EXPECT_EQ(runs[0].records, runs[1].records);
    EXPECT_EQ(runs[2].first_eval_batch, 5);
    const std::vector<InitializationRun> same{runs[0], runs[1]};
    EXPECT_EQ(*rig_spread(same, 6), 0.0);
    EXPECT_TRUE(rig_spread(runs, 5));
    EXPECT_FALSE(rig_spread(runs, 3));
    const std::vector<int> one{0};
    EXPECT_THROW(run_initialization_study(s.batches, 20, one, 3, gd(1e-4, 5), kTrainer), InvalidArgument);
}
