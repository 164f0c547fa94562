#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "batchol/objective.hpp"
#include "batchol/optimizers.hpp"
#include "batchol/theory.hpp"
#include "helpers.hpp"

using namespace batchol;

namespace {

const LbfgsConfig kSolver{.gradient_tolerance = 1e-13, .max_iterations = 2000};

}  // namespace

TEST(Epsilon, QuadraticRecurrence) {
    const auto f = make_quadratic({0.0});
    const std::vector<double> w0{1.0};
    EXPECT_NEAR(epsilon_of(run_gd(f, w0, {.learning_rate = 0.1, .iterations = 5})), 0.1, 1e-15);
    EXPECT_NEAR(epsilon_of(run_gd(f, w0, {.learning_rate = 0.5, .iterations = 5})), 0.5, 1e-15);
    Trajectory single;
    single.iterates = {w0};
    single.gradients = {w0};
    EXPECT_EQ(epsilon_of(single), 0.0);
}

TEST(Epsilon, LinearObjectiveIsZero) {
    FunctionObjective lin(
        2, [](std::span<const double> w) { return 3 * w[0] - w[1]; },
        [](std::span<const double>, std::span<double> out) {
            out[0] = 3.0;
            out[1] = -1.0;
        });
    EXPECT_EQ(epsilon_of(run_gd(lin, std::vector<double>{0.0, 0.0}, {.learning_rate = 0.2, .iterations = 6})), 0.0);
}

TEST(Bound, QuadraticClosedForm) {
    // G(w) = w^2/2 + (w - 1)^2, minimized at 2/3 with G = 1/3
    const auto f = make_quadratic({0.0});
    const auto r = theorem1_check(f, std::vector<double>{1.0}, 0.1, 5, 2.0, kSolver);
    const double w5 = 0.59049;
    const double g5 = w5 * w5 / 2 + (w5 - 1) * (w5 - 1);
    EXPECT_NEAR(r.g_wk, g5, 1e-15);
    EXPECT_NEAR(r.g_wk, 0.342037, 1e-6);
    EXPECT_NEAR(r.g_wstar, 1.0 / 3.0, 1e-14);
    EXPECT_NEAR(r.lhs, g5 - 1.0 / 3.0, 1e-13);
    EXPECT_NEAR(r.lhs, 0.008704, 1e-6);
    EXPECT_NEAR(r.epsilon, 0.1, 1e-15);
    EXPECT_NEAR(r.distance, 2.0 / 3.0 - w5, 1e-12);
    EXPECT_NEAR(r.rhs, 0.1 * 4 * (2.0 / 3.0 - w5), 1e-12);
    EXPECT_NEAR(r.rhs, 0.030472, 2e-6);  // 0.4 * (2/3 - 0.59049) = 0.0304707
    EXPECT_TRUE(r.holds);
    EXPECT_TRUE(r.guaranteed);
    EXPECT_FALSE(r.degenerate);
    EXPECT_LT(r.identity_deviation, 1e-12);
}

// With k = 2 the bound on ||grad G(w_k)|| by (k-1) * epsilon fails while the
// theorem's conclusion still holds.
TEST(Bound, IntermediateInequalityCounterexample) {
    const auto f = make_quadratic({0.0});
    const auto r = theorem1_check(f, std::vector<double>{1.0}, 0.1, 2, 5.0, kSolver);
    EXPECT_TRUE(r.guaranteed);
    EXPECT_NEAR(r.grad_norm_g_wk, 0.14, 1e-12);
    EXPECT_NEAR(r.epsilon, 0.1, 1e-15);
    EXPECT_FALSE(r.intermediate_holds);
    EXPECT_LE(r.grad_norm_g_wk, r.epsilon * (r.k + 1) / 2.0 + 1e-12);
    EXPECT_TRUE(r.holds);
}

TEST(Bound, SingleStepIsExploratory) {
    const auto f = make_quadratic({0.0});
    const auto r = theorem1_check(f, std::vector<double>{1.0}, 0.1, 1, 10.0, kSolver);
    EXPECT_TRUE(r.degenerate);
    EXPECT_FALSE(r.guaranteed);
    EXPECT_EQ(r.rhs, 0.0);
    EXPECT_GT(r.lhs, 0.0);
    EXPECT_FALSE(r.holds);
    EXPECT_LT(r.identity_deviation, 1e-15);
}

TEST(Corollary, UniformMatchesTheorem) {
    std::mt19937_64 rng(2);
    const auto batch = test::random_batch(rng, 4, 40);
    const LogisticObjective f(batch, 4);
    const auto w0 = test::random_model(rng, 4, 0.3).params();
    const double alpha = 0.01, lambda = 10.0;
    const int k = 10;
    const auto t = theorem1_check(f, w0, alpha, k, lambda, kSolver);
    const std::vector<double> as(5, alpha), ls(5, lambda);
    const auto c = corollary1_check(f, w0, as, k, ls, kSolver);
    EXPECT_NEAR(c.lhs, t.lhs, 1e-12);
    EXPECT_NEAR(c.rhs, t.rhs, 1e-12);
    EXPECT_EQ(c.holds, t.holds);
    EXPECT_EQ(c.guaranteed, t.guaranteed);
    EXPECT_TRUE(c.per_coordinate);
}

TEST(Corollary, SeparableQuadraticDistinctRates) {
    const auto f = make_diagonal_quadratic({1.0, 4.0}, {0.0, 0.0});
    const std::vector<double> w0{1.0, -2.0}, as{0.1, 0.05};
    const int k = 8;
    const std::vector<double> ls{1.0 / (0.1 * k), 1.0 / (0.05 * k)};
    const auto r = corollary1_check(f, w0, as, k, ls, kSolver);
    EXPECT_TRUE(r.guaranteed);
    EXPECT_TRUE(r.holds);
    EXPECT_LT(r.identity_deviation, 1e-12);

    // per coordinate the iterates follow w <- (1 - a_r c_r) w
    const auto traj = run_gd_per_coordinate(f, w0, as, k);
    EXPECT_NEAR(traj.last()[0], std::pow(0.9, k), 1e-14);
    EXPECT_NEAR(traj.last()[1], -2.0 * std::pow(0.8, k), 1e-14);
}

TEST(Corollary, MismatchedCoordinateIsNotGuaranteed) {
    const auto f = make_diagonal_quadratic({1.0, 4.0}, {0.0, 0.0});
    const std::vector<double> w0{1.0, -2.0}, as{0.1, 0.05}, ls{1.25, 50.0};
    const auto r = corollary1_check(f, w0, as, 8, ls, kSolver);
    EXPECT_FALSE(r.guaranteed);
    EXPECT_NEAR(r.product, 0.05 * 50.0 * 8, 1e-12);
}

TEST(Identity, SingleStep) {
    const auto f = make_quadratic({0.0, 0.0});
    const auto traj = run_gd(f, std::vector<double>{1.0, 2.0}, {.learning_rate = 0.3, .iterations = 1});
    EXPECT_LT(grad_identity_check(traj, 7.0, 0.3), 1e-15);
}

TEST(Identity, RandomLogisticInstance) {
    std::mt19937_64 rng(13);
    const auto batch = test::random_batch(rng, 10, 100);
    const LogisticObjective f(batch, 10);
    const auto traj = run_gd(f, test::random_model(rng, 10, 0.3).params(), {.learning_rate = 0.005, .iterations = 10});
    EXPECT_LT(grad_identity_check(traj, 20.0, 0.005), 1e-10);
}

TEST(GuaranteeSuite, AllHold) {
    const auto res = run_guarantee_suite(60, 99, {.gradient_tolerance = 1e-10, .max_iterations = 5000});
    EXPECT_EQ(res.instances, 60);
    EXPECT_EQ(res.held + res.diverged, 60);
    EXPECT_EQ(res.diverged, 0);
    EXPECT_LT(res.max_identity_deviation, 1e-10);
    for (const auto& r : res.reports) {
        EXPECT_TRUE(r.guaranteed);
        EXPECT_NEAR(r.product, 1.0, 1e-9);
    }
}

TEST(BoundCsv, ColumnsLineUp) {
    const auto f = make_quadratic({0.0});
    const auto r = theorem1_check(f, std::vector<double>{1.0}, 0.1, 5, 2.0, kSolver);
    const auto header = bound_csv_header();
    const auto row = bound_csv_row(r, "x");
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
}
