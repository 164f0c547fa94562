// batchol: command-line harness for the batch online learning experiments.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "batchol/error.hpp"
#include "batchol/experiment.hpp"
#include "batchol/io.hpp"

namespace fs = std::filesystem;
using namespace batchol;

namespace {

enum Exit { kOk = 0, kRunFailure = 1, kConfigError = 2, kTheoremViolation = 3 };

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> workers;
    bool quiet = false;
};

void add_common(CLI::App* app, Common& c, bool needs_config = true) {
    auto* opt = app->add_option("-c,--config", c.config, "experiment config (JSON)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "override the master seed");
    app->add_option("-o,--out", c.out, "output directory (default: $BATCHOL_OUT or the config's output_dir)");
    app->add_option("-j,--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
    app->add_flag("-q,--quiet", c.quiet, "no progress output");
}

ExperimentConfig resolve(const Common& c) {
    auto cfg = load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.out.empty()) {
        cfg.output_dir = c.out;
    } else if (const char* env = std::getenv("BATCHOL_OUT"); env != nullptr && *env != '\0') {
        cfg.output_dir = env;
    }
    if (c.workers) cfg.workers = *c.workers;
    cfg.validate();
    return cfg;
}

RunOptions options(const Common& c, Stages stages) {
    RunOptions o;
    o.stages = stages;
    if (!c.quiet) o.log = [](const std::string& m) { std::cerr << "[batchol] " << m << '\n'; };
    return o;
}

void print_bounds(const ExperimentResult& res) {
    for (const auto& [label, r] : res.bounds) {
        if (label.rfind("grid-", 0) != 0) continue;
        std::cout << label << " alpha=" << format_double(r.alpha) << " k=" << r.k
                  << " lambda=" << format_double(r.lambda) << " lhs=" << format_double(r.lhs)
                  << " rhs=" << format_double(r.rhs) << " holds=" << (r.holds ? "yes" : "no") << '\n';
    }
    if (res.guarantee) {
        const auto& g = *res.guarantee;
        std::cout << "guarantee suite: " << g.held << "/" << (g.instances - g.diverged) << " held, "
                  << g.diverged << " diverged, max identity deviation "
                  << format_double(g.max_identity_deviation) << '\n';
    }
}

int finish(const ExperimentResult& res, const ExperimentConfig& cfg, bool quiet) {
    if (!quiet) {
        std::cerr << "[batchol] wrote " << res.outputs.size() + 1 << " files to " << cfg.output_dir.string()
                  << " in " << res.wall_clock_seconds << " s\n";
    }
    for (const auto& f : res.failures) std::cerr << "failure: " << f << '\n';
    if (res.theorem_violation()) return kTheoremViolation;
    if (res.guarantee && res.guarantee->held < res.guarantee->instances - res.guarantee->diverged) {
        return kTheoremViolation;
    }
    return res.failures.empty() ? kOk : kRunFailure;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(std::move(cells));
    }
    return rows;
}

void print_table(const fs::path& path, std::ostream& os) {
    const auto rows = read_csv(path);
    if (rows.empty()) return;
    std::vector<std::size_t> width;
    for (const auto& r : rows) {
        if (width.size() < r.size()) width.resize(r.size(), 0);
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    }
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            os << r[i] << std::string(width[i] - r[i].size() + 2, ' ');
        }
        os << '\n';
    }
}

// Recomputes every metric row of every strategy from its stored snapshots.
int verify(const fs::path& dir, bool quiet) {
    if (!fs::exists(dir / "manifest.json")) {
        std::cerr << dir.string() << " has no manifest.json (incomplete run)\n";
        return kRunFailure;
    }
    auto cfg = load_config(dir / "config.json");
    const auto data = load_data(cfg);
    std::map<std::int64_t, const Batch*> by_id;
    for (const auto& b : data.batches) by_id[b.id] = &b;
    const auto base = read_snapshot(dir / "snapshots" / "base.snap");

    std::size_t checked = 0, mismatched = 0;
    for (const auto& s : expand_strategies(cfg)) {
        const auto csv = dir / "metrics" / (s.label + ".csv");
        const auto snaps = dir / "snapshots" / s.label;
        if (!fs::exists(csv) || !fs::exists(snaps)) continue;
        std::ifstream in(csv);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            const auto rec = parse_metric_csv_row(line);
            const auto it = by_id.find(rec.batch_id);
            if (it == by_id.end() || it == by_id.begin()) {
                throw Error("batch " + std::to_string(rec.batch_id) + " is not in the regenerated data");
            }
            const std::int64_t prev_id = std::prev(it)->first;
            const auto model = prev_id == base.batch_id
                                   ? base.model
                                   : read_snapshot(snaps / (std::to_string(prev_id) + ".snap")).model;
            const auto again = evaluate(model, *it->second);
            ++checked;
            if (metric_csv_row(again) != metric_csv_row(rec)) {
                ++mismatched;
                std::cerr << s.label << " batch " << rec.batch_id << ": stored and recomputed metrics differ\n";
            }
        }
    }
    if (!quiet) std::cout << "verified " << checked << " metric rows, " << mismatched << " mismatched\n";
    return mismatched == 0 && checked > 0 ? kOk : kRunFailure;
}

int report(const fs::path& dir) {
    const auto manifest = dir / "manifest.json";
    std::cout << "run directory: " << dir.string() << (fs::exists(manifest) ? "" : " (incomplete: no manifest)")
              << "\n\n";
    for (const char* name : {"comparison.csv", "corruption_summary.csv", "delay.csv"}) {
        if (!fs::exists(dir / name)) continue;
        std::cout << "== " << name << '\n';
        print_table(dir / name, std::cout);
        std::cout << '\n';
    }
    if (fs::exists(dir / "bounds.csv")) {
        std::cout << "== bounds.csv (grid rows)\n";
        const auto rows = read_csv(dir / "bounds.csv");
        std::size_t held = 0, guaranteed = 0;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i][0].rfind("grid-", 0) == 0) {
                std::cout << rows[i][0] << " alpha=" << rows[i][1] << " k=" << rows[i][2] << " lambda=" << rows[i][3]
                          << " log10_lhs=" << rows[i][19] << " log10_rhs=" << rows[i][20] << '\n';
            }
            if (rows[i][16] == "1") {
                ++guaranteed;
                held += rows[i][14] == "1" ? 1 : 0;
            }
        }
        std::cout << held << "/" << guaranteed << " guaranteed checks held\n";
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Batch online learning experiments for logistic click prediction"};
    app.set_version_flag("--version", std::string(BATCHOL_VERSION));
    app.require_subcommand(1);

    Common gen, base, run, delay, init, theorem, ver, rep;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate the synthetic stream and write it as text");
    add_common(gen_cmd, gen);
    auto* base_cmd = app.add_subcommand("train-base", "train the base model on the initial window");
    add_common(base_cmd, base);
    auto* run_cmd = app.add_subcommand("run", "run every configured experiment");
    add_common(run_cmd, run);
    auto* delay_cmd = app.add_subcommand("delay", "snapshot delay analysis");
    add_common(delay_cmd, delay);
    auto* init_cmd = app.add_subcommand("init-study", "initialization convergence study");
    add_common(init_cmd, init);
    auto* thm_cmd = app.add_subcommand("verify-theorem", "bound checks and the random-instance guarantee suite");
    add_common(thm_cmd, theorem);
    auto* ver_cmd = app.add_subcommand("verify", "recompute stored metrics from snapshots and regenerated data");
    add_common(ver_cmd, ver, false);
    auto* rep_cmd = app.add_subcommand("report", "print the summary tables of a finished run");
    add_common(rep_cmd, rep, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        auto out_dir = [](const Common& c) -> fs::path {
            if (!c.out.empty()) return c.out;
            if (const char* env = std::getenv("BATCHOL_OUT"); env != nullptr && *env != '\0') return env;
            if (!c.config.empty()) return load_config(c.config).output_dir;
            return "out";
        };

        if (*gen_cmd) {
            const auto cfg = resolve(gen);
            if (!cfg.data.generate) throw ConfigError("gen-data needs data.generate in the config");
            const auto data = load_data(cfg);
            write_examples(cfg.output_dir / "data" / "examples.txt", data.batches);
            write_ground_truth(cfg.output_dir / "data" / "truth.txt", *data.truth);
            if (!gen.quiet) {
                std::cerr << "[batchol] wrote " << data.batches.size() << " days to "
                          << (cfg.output_dir / "data").string() << '\n';
            }
            return kOk;
        }
        if (*base_cmd) {
            const auto cfg = resolve(base);
            const auto data = load_data(cfg);
            const auto model = train_base(cfg, data.batches, data.dimension);
            const auto w = static_cast<std::size_t>(cfg.base_window_days);
            write_snapshot(cfg.output_dir / "snapshots" / "base.snap", {model, data.batches[w - 1].id, {}, {}});
            const auto m = evaluate(model, data.batches[w]);
            std::cout << metric_csv_header() << '\n' << metric_csv_row(m) << '\n';
            return kOk;
        }
        if (*run_cmd) {
            const auto cfg = resolve(run);
            const auto res = run_experiment(cfg, options(run, Stages::all()));
            return finish(res, cfg, run.quiet);
        }
        if (*delay_cmd) {
            const auto cfg = resolve(delay);
            auto st = Stages::none();
            st.delay = true;
            const auto res = run_experiment(cfg, options(delay, st));
            if (!delay.quiet) print_table(cfg.output_dir / "delay.csv", std::cout);
            return finish(res, cfg, delay.quiet);
        }
        if (*init_cmd) {
            const auto cfg = resolve(init);
            auto st = Stages::none();
            st.init_study = true;
            const auto res = run_experiment(cfg, options(init, st));
            return finish(res, cfg, init.quiet);
        }
        if (*thm_cmd) {
            const auto cfg = resolve(theorem);
            if (!cfg.theorem_grid) throw ConfigError("verify-theorem needs theorem_grid in the config");
            auto st = Stages::none();
            st.theorem = true;
            const auto res = run_experiment(cfg, options(theorem, st));
            if (!theorem.quiet) print_bounds(res);
            return finish(res, cfg, theorem.quiet);
        }
        if (*ver_cmd) return verify(out_dir(ver), ver.quiet);
        if (*rep_cmd) return report(out_dir(rep));
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRunFailure;
    }
    return kOk;
}
