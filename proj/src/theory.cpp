#include "batchol/theory.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "batchol/error.hpp"
#include "batchol/metrics.hpp"
#include "batchol/model.hpp"

namespace batchol {

double epsilon_of(const Trajectory& t) {
    double eps = 0.0;
    for (std::size_t i = 1; i < t.gradients.size(); ++i) {
        double s = 0.0;
        for (std::size_t r = 0; r < t.gradients[i].size(); ++r) {
            const double d = t.gradients[i][r] - t.gradients[i - 1][r];
            s += d * d;
        }
        eps = std::max(eps, std::sqrt(s));
    }
    return eps;
}

double grad_identity_check(const Trajectory& t, std::span<const double> lambdas,
                           std::span<const double> alphas) {
    const std::size_t k = t.steps();
    if (k == 0 || t.gradients.size() < k + 1) {
        throw InvalidArgument("identity check needs a full-batch trajectory with gradients");
    }
    const auto& w0 = t.iterates.front();
    const auto& wk = t.iterates.back();
    const auto& gk = t.gradients[k];
    const std::size_t n = w0.size();
    auto at = [](std::span<const double> v, std::size_t r) { return v.size() == 1 ? v[0] : v[r]; };

    double dev = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double lam = at(lambdas, r);
        const double direct = gk[r] + lam * (wk[r] - w0[r]);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += t.gradients[j][r];
        const double via_sum = gk[r] - lam * at(alphas, r) * sum;
        dev = std::max(dev, std::abs(direct - via_sum));
    }
    return dev;
}

double grad_identity_check(const Trajectory& t, double lambda, double alpha) {
    const double l[] = {lambda};
    const double a[] = {alpha};
    return grad_identity_check(t, l, a);
}

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.size(); ++r) s += (a[r] - b[r]) * (a[r] - b[r]);
    return std::sqrt(s);
}

void fill_report(BoundReport& rep, const Objective& f, const Trajectory& traj, ProxConfig cfg,
                 const LbfgsConfig& solver, double tolerance_scale) {
    const ProxObjective g(f, std::move(cfg));
    const auto& wk = traj.last();
    const auto sol = lbfgs_minimize(g, wk, solver);

    std::vector<double> grad(wk.size());
    rep.g_wk = g.value_and_gradient(wk, grad);
    rep.grad_norm_g_wk = l2_norm(grad);
    rep.g_wstar = sol.value;
    rep.solver_converged = sol.converged;
    rep.lhs = std::abs(rep.g_wk - rep.g_wstar);
    rep.epsilon = epsilon_of(traj);
    rep.distance = distance(wk, sol.minimizer);
    rep.rhs = rep.epsilon * static_cast<double>(rep.k - 1) * rep.distance;
    rep.tolerance = tolerance_scale * (1.0 + std::abs(rep.g_wstar));
    rep.holds = rep.lhs <= rep.rhs + rep.tolerance;
    rep.intermediate_holds =
        rep.grad_norm_g_wk <= static_cast<double>(rep.k - 1) * rep.epsilon + rep.tolerance;
    rep.degenerate = rep.k == 1;
}

}  // namespace

BoundReport theorem1_check(const Objective& f, std::span<const double> w0, double alpha, int k,
                           double lambda, const LbfgsConfig& solver, double tolerance_scale) {
    BoundReport rep;
    rep.alpha = alpha;
    rep.k = k;
    rep.lambda = lambda;
    rep.product = alpha * lambda * k;
    rep.guaranteed = std::abs(rep.product - 1.0) <= 1e-9 && k >= 2;

    const auto traj = run_gd(f, w0, GdConfig{alpha, k});
    rep.identity_deviation = grad_identity_check(traj, lambda, alpha);

    ProxConfig cfg;
    cfg.anchor = LinearModel::from_params(w0);
    cfg.lambda = lambda;
    fill_report(rep, f, traj, std::move(cfg), solver, tolerance_scale);
    return rep;
}

BoundReport corollary1_check(const Objective& f, std::span<const double> w0,
                             std::span<const double> alphas, int k,
                             std::span<const double> lambdas, const LbfgsConfig& solver,
                             double tolerance_scale) {
    if (alphas.size() != w0.size() || lambdas.size() != w0.size()) {
        throw DimensionMismatch("per-coordinate rates and strengths must match the parameter count");
    }
    BoundReport rep;
    rep.per_coordinate = true;
    rep.k = k;
    rep.alpha = *std::max_element(alphas.begin(), alphas.end());
    rep.lambda = *std::max_element(lambdas.begin(), lambdas.end());
    bool matched = k >= 2;
    for (std::size_t r = 0; r < w0.size(); ++r) {
        const double p = alphas[r] * lambdas[r] * k;
        rep.product = std::max(rep.product, p);
        matched = matched && std::abs(p - 1.0) <= 1e-9;
    }
    rep.guaranteed = matched;

    const auto traj = run_gd_per_coordinate(f, w0, alphas, k);
    rep.identity_deviation = grad_identity_check(traj, lambdas, alphas);

    ProxConfig cfg;
    cfg.anchor = LinearModel::from_params(w0);
    std::vector<double> literal(lambdas.size());
    for (std::size_t r = 0; r < literal.size(); ++r) literal[r] = lambdas[r] / 2.0;
    cfg.lambda = std::move(literal);
    fill_report(rep, f, traj, std::move(cfg), solver, tolerance_scale);
    return rep;
}

namespace {

// 0.25 * largest eigenvalue of Z^T Z (Z = [X, 1]) by power iteration: a
// Lipschitz constant for the logistic gradient.
double logistic_lipschitz(const Batch& batch, std::size_t d) {
    std::vector<double> v(d + 1, 1.0), u(d + 1);
    double eig = 0.0;
    for (int it = 0; it < 200; ++it) {
        std::fill(u.begin(), u.end(), 0.0);
        for (const auto& e : batch.examples) {
            double z = v[d];
            for (const auto& f : e.features.entries()) z += v[f.index] * f.value;
            for (const auto& f : e.features.entries()) u[f.index] += z * f.value;
            u[d] += z;
        }
        const double norm = l2_norm(u);
        if (norm == 0.0) break;
        eig = norm / l2_norm(v);
        for (std::size_t r = 0; r <= d; ++r) v[r] = u[r] / norm;
    }
    return 0.25 * eig;
}

}  // namespace

GuaranteeSuiteResult run_guarantee_suite(int instances, std::uint64_t seed,
                                         const LbfgsConfig& solver) {
    GuaranteeSuiteResult out;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dim_dist(1, 20), n_dist(10, 200), k_dist(2, 30);
    std::uniform_real_distribution<double> unit(-1.0, 1.0), frac(0.05, 1.0), coin(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    for (int inst = 0; inst < instances; ++inst) {
        const auto d = static_cast<std::size_t>(dim_dist(rng));
        const int n = n_dist(rng);
        std::vector<double> truth(d + 1);
        for (auto& t : truth) t = normal(rng);
        Batch batch;
        for (int i = 0; i < n; ++i) {
            std::vector<Feature> fs;
            for (std::uint32_t r = 0; r < d; ++r) {
                if (coin(rng) < 0.5) fs.push_back({r, unit(rng)});
            }
            double z = truth[d];
            for (const auto& f : fs) z += truth[f.index] * f.value;
            batch.examples.push_back({SparseVector(std::move(fs)), coin(rng) < sigmoid(z) ? 1 : 0});
        }
        std::vector<double> w0(d + 1);
        for (auto& w : w0) w = 0.5 * normal(rng);

        const double lip = logistic_lipschitz(batch, d);
        const double alpha = frac(rng) / lip;
        const int k = k_dist(rng);
        const double lambda = 1.0 / (alpha * k);

        const LogisticObjective f(batch, d);
        ++out.instances;
        try {
            auto rep = theorem1_check(f, w0, alpha, k, lambda, solver);
            out.held += rep.holds ? 1 : 0;
            out.intermediate_violations += rep.intermediate_holds ? 0 : 1;
            out.max_identity_deviation = std::max(out.max_identity_deviation, rep.identity_deviation);
            out.worst_margin = std::max(out.worst_margin, rep.lhs - rep.rhs - rep.tolerance);
            out.reports.push_back(rep);
        } catch (const Divergence&) {
            ++out.diverged;
        }
    }
    return out;
}

std::string bound_csv_header() {
    return "label,alpha,k,lambda,alpha_lambda_k,per_coordinate,g_wk,g_wstar,lhs,epsilon,distance,rhs,"
           "grad_norm_g_wk,tolerance,holds,intermediate_holds,guaranteed,degenerate,"
           "identity_deviation,log10_lhs,log10_rhs";
}

std::string bound_csv_row(const BoundReport& r, const std::string& label) {
    auto b = [](bool v) { return std::string(v ? "1" : "0"); };
    auto lg = [](double v) { return v > 0.0 ? format_double(std::log10(v)) : std::string("-inf"); };
    return label + "," + format_double(r.alpha) + "," + std::to_string(r.k) + "," +
           format_double(r.lambda) + "," + format_double(r.product) + "," + b(r.per_coordinate) +
           "," + format_double(r.g_wk) + "," + format_double(r.g_wstar) + "," +
           format_double(r.lhs) + "," + format_double(r.epsilon) + "," +
           format_double(r.distance) + "," + format_double(r.rhs) + "," +
           format_double(r.grad_norm_g_wk) + "," + format_double(r.tolerance) + "," + b(r.holds) +
           "," + b(r.intermediate_holds) + "," + b(r.guaranteed) + "," + b(r.degenerate) + "," +
           format_double(r.identity_deviation) + "," + lg(r.lhs) + "," + lg(r.rhs);
}

}  // namespace batchol
