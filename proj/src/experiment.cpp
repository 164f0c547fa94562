#include "batchol/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "batchol/error.hpp"
#include "batchol/io.hpp"
#include "batchol/objective.hpp"
#include "batchol/seed.hpp"

namespace batchol {

using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Strict JSON reading

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& at(const std::string& key) {
        if (!has(key)) throw ConfigError(path_ + ": missing required key '" + key + "'");
        return j_.at(key);
    }

    std::string where(const std::string& key) const { return path_ + "." + key; }

    template <typename T>
    T get(const std::string& key, T fallback) {
        if (!has(key)) return fallback;
        return convert<T>(j_.at(key), where(key));
    }

    template <typename T>
    T require(const std::string& key) {
        return convert<T>(at(key), where(key));
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
        }
    }

    template <typename T>
    static T convert(const json& v, const std::string& where) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(where + ": expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(where + ": expected a number");
            return v.get<T>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_unsigned()) return v.get<T>();
                throw ConfigError(where + ": expected a non-negative integer");
            } else {
                return v.get<T>();
            }
        } else {
            if (!v.is_array()) throw ConfigError(where + ": expected an array");
            T out;
            for (std::size_t i = 0; i < v.size(); ++i) {
                out.push_back(convert<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
            }
            return out;
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::array<double, 2> read_range(Reader& r, const std::string& key, std::array<double, 2> fallback) {
    if (!r.has(key)) return fallback;
    const auto v = Reader::convert<std::vector<double>>(r.at(key), r.where(key));
    if (v.size() != 2) throw ConfigError(r.where(key) + ": expected [lo, hi]");
    return {v[0], v[1]};
}

LbfgsConfig read_solver(const json& j, const std::string& path, LbfgsConfig c) {
    Reader r(j, path);
    c.memory = r.get("memory", c.memory);
    c.gradient_tolerance = r.get("gradient_tolerance", c.gradient_tolerance);
    c.max_iterations = r.get("max_iterations", c.max_iterations);
    r.finish();
    return c;
}

json solver_json(const LbfgsConfig& c) {
    return {{"memory", c.memory}, {"gradient_tolerance", c.gradient_tolerance},
            {"max_iterations", c.max_iterations}};
}

EsAlgorithm parse_algorithm(const std::string& s, const std::string& where) {
    if (s == "gd") return EsAlgorithm::Gd;
    if (s == "sgd") return EsAlgorithm::Sgd;
    if (s == "sgd-per-coordinate") return EsAlgorithm::SgdPerCoordinate;
    if (s == "lbfgs") return EsAlgorithm::Lbfgs;
    throw ConfigError(where + ": unknown algorithm '" + s + "'");
}

std::string algorithm_name(EsAlgorithm a) {
    switch (a) {
    case EsAlgorithm::Gd: return "gd";
    case EsAlgorithm::Sgd: return "sgd";
    case EsAlgorithm::SgdPerCoordinate: return "sgd-per-coordinate";
    case EsAlgorithm::Lbfgs: return "lbfgs";
    }
    return "gd";
}

LambdaSource parse_source(const std::string& s, const std::string& where) {
    if (s == "uniform") return LambdaSource::Uniform;
    if (s == "fixed") return LambdaSource::Fixed;
    if (s == "fisher") return LambdaSource::Fisher;
    throw ConfigError(where + ": unknown lambda_source '" + s + "'");
}

std::string source_name(LambdaSource s) {
    switch (s) {
    case LambdaSource::Uniform: return "uniform";
    case LambdaSource::Fixed: return "fixed";
    case LambdaSource::Fisher: return "fisher";
    }
    return "uniform";
}

UpdateStrategy read_strategy(const json& j, const std::string& path, std::string* label) {
    Reader r(j, path);
    if (label != nullptr) *label = r.require<std::string>("label");
    const auto type = r.require<std::string>("type");
    if (type == "es") {
        EsStrategy s;
        if (r.has("algorithm")) s.algorithm = parse_algorithm(r.require<std::string>("algorithm"), path);
        s.learning_rate = r.get("learning_rate", s.learning_rate);
        s.passes = r.get("passes", s.passes);
        s.minibatch_size = r.get("minibatch_size", s.minibatch_size);
        s.shuffle = r.get("shuffle", s.shuffle);
        s.rate_scale = r.get("rate_scale", s.rate_scale);
        r.finish();
        return s;
    }
    if (type == "prox") {
        ProxStrategy s;
        if (r.has("lambda_source")) s.source = parse_source(r.require<std::string>("lambda_source"), path);
        s.lambda = r.get("lambda", s.lambda);
        s.per_coordinate = r.get("per_coordinate", s.per_coordinate);
        s.fisher_decay = r.get("fisher_decay", s.fisher_decay);
        s.fisher_scale = r.get("fisher_scale", s.fisher_scale);
        s.lambda_floor = r.get("lambda_floor", s.lambda_floor);
        s.regularize_bias = r.get("regularize_bias", s.regularize_bias);
        if (r.has("solver")) s.solver = read_solver(r.at("solver"), r.where("solver"), s.solver);
        r.finish();
        return s;
    }
    throw ConfigError(path + ": type must be 'es' or 'prox'");
}

json strategy_json(const UpdateStrategy& st) {
    if (const auto* e = std::get_if<EsStrategy>(&st)) {
        return {{"type", "es"},
                {"algorithm", algorithm_name(e->algorithm)},
                {"learning_rate", e->learning_rate},
                {"passes", e->passes},
                {"minibatch_size", e->minibatch_size},
                {"shuffle", e->shuffle},
                {"rate_scale", e->rate_scale}};
    }
    const auto& p = std::get<ProxStrategy>(st);
    return {{"type", "prox"},
            {"lambda_source", source_name(p.source)},
            {"lambda", p.lambda},
            {"per_coordinate", p.per_coordinate},
            {"fisher_decay", p.fisher_decay},
            {"fisher_scale", p.fisher_scale},
            {"lambda_floor", p.lambda_floor},
            {"regularize_bias", p.regularize_bias},
            {"solver", solver_json(p.solver)}};
}

StreamSpec read_stream_spec(const json& j, const std::string& path) {
    Reader r(j, path);
    StreamSpec s;
    s.dimension = r.get("dimension", s.dimension);
    s.days = r.get("days", s.days);
    s.examples_per_day = r.get("examples_per_day", s.examples_per_day);
    s.active_features = r.get("active_features", s.active_features);
    s.drift_rate = r.get("drift_rate", s.drift_rate);
    s.distribution_shift_rate = r.get("distribution_shift_rate", s.distribution_shift_rate);
    s.holiday_days = r.get("holiday_days", s.holiday_days);
    s.holiday_shock = r.get("holiday_shock", s.holiday_shock);
    s.base_ctr = r.get("base_ctr", s.base_ctr);
    s.weight_scale = r.get("weight_scale", s.weight_scale);
    s.popularity_scale = r.get("popularity_scale", s.popularity_scale);
    s.value_shape_a = read_range(r, "value_shape_a", s.value_shape_a);
    s.value_shape_b = read_range(r, "value_shape_b", s.value_shape_b);
    r.finish();
    return s;
}

json stream_spec_json(const StreamSpec& s) {
    return {{"dimension", s.dimension},
            {"days", s.days},
            {"examples_per_day", s.examples_per_day},
            {"active_features", s.active_features},
            {"drift_rate", s.drift_rate},
            {"distribution_shift_rate", s.distribution_shift_rate},
            {"holiday_days", s.holiday_days},
            {"holiday_shock", s.holiday_shock},
            {"base_ctr", s.base_ctr},
            {"weight_scale", s.weight_scale},
            {"popularity_scale", s.popularity_scale},
            {"value_shape_a", s.value_shape_a},
            {"value_shape_b", s.value_shape_b}};
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

bool valid_label(const std::string& s) {
    if (s.empty() || s == "." || s == "..") return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' || c == '=' || c == '+';
    });
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
    if (schema_version != kConfigSchemaVersion) {
        throw ConfigError("unsupported schema_version " + std::to_string(schema_version));
    }
    if (data.generate.has_value() == !data.files.empty()) {
        throw ConfigError("data needs exactly one of 'generate' or 'files'");
    }
    try {
        if (data.generate) data.generate->validate();
        trainer.solver.validate();
        for (const auto& c : corruptions) c.spec.validate();
        if (theorem_grid) theorem_grid->solver.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    if (!data.files.empty()) {
        if (data.dimension < 1) throw ConfigError("data.dimension is required with data.files");
        for (const auto& f : data.files) {
            if (!std::filesystem::exists(f)) throw ConfigError("data file not found: " + f.string());
        }
    }
    if (base_window_days < 1) throw ConfigError("base_window_days must be >= 1");
    if (data.generate && base_window_days >= data.generate->days) {
        throw ConfigError("base_window_days leaves no generated days to evaluate");
    }
    if (!(trainer.ridge >= 0.0)) throw ConfigError("trainer.ridge must be >= 0");
    if (baselines.window_days < 1) throw ConfigError("baselines.window_days must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");

    const auto all = expand_strategies(*this);
    if (all.empty() && !baselines.stale && !baselines.moving_window) {
        throw ConfigError("at least one strategy or baseline is required");
    }
    std::set<std::string> labels;
    for (const auto& s : all) {
        if (!valid_label(s.label)) throw ConfigError("invalid strategy label '" + s.label + "'");
        if (!labels.insert(s.label).second) throw ConfigError("duplicate strategy label '" + s.label + "'");
        if (s.label == "stale" || s.label == "moving-window") {
            throw ConfigError("strategy label '" + s.label + "' is reserved");
        }
        if (const auto* e = std::get_if<EsStrategy>(&s.strategy)) {
            if (e->passes < 1) throw ConfigError(s.label + ": passes must be >= 1");
            if (!(e->learning_rate >= 0.0) || !std::isfinite(e->learning_rate)) {
                throw ConfigError(s.label + ": learning_rate must be finite and >= 0");
            }
            if (e->minibatch_size < 1) throw ConfigError(s.label + ": minibatch_size must be >= 1");
        } else {
            const auto& p = std::get<ProxStrategy>(s.strategy);
            if (p.source == LambdaSource::Uniform && !(p.lambda > 0.0)) {
                throw ConfigError(s.label + ": lambda must be > 0");
            }
            if (p.source == LambdaSource::Fixed && p.per_coordinate.empty()) {
                throw ConfigError(s.label + ": fixed lambda_source needs per_coordinate");
            }
            try {
                p.solver.validate();
            } catch (const InvalidArgument& e) {
                throw ConfigError(s.label + ": " + e.what());
            }
        }
    }
    for (const auto& sw : sweeps) {
        if (sw.parameter != "passes" && sw.parameter != "learning_rate" && sw.parameter != "lambda") {
            throw ConfigError("sweep " + sw.label + ": parameter must be passes, learning_rate or lambda");
        }
        const bool es = std::holds_alternative<EsStrategy>(sw.base);
        if ((sw.parameter == "lambda") == es) {
            throw ConfigError("sweep " + sw.label + ": parameter does not apply to the base strategy");
        }
        if (sw.values.empty()) throw ConfigError("sweep " + sw.label + ": values are empty");
        if (sw.parameter == "passes") {
            for (const double v : sw.values) {
                if (v != std::floor(v)) throw ConfigError("sweep " + sw.label + ": passes must be integers");
            }
        }
    }
    for (const auto& c : corruptions) {
        if (c.spec.amount == 0.0 && c.spec.mode != CorruptionMode::CtrSpike) {
            throw ConfigError("corruption amount must be in (0, 1]");
        }
        for (const auto& l : c.strategies) {
            if (!labels.count(l)) throw ConfigError("corruption refers to unknown strategy '" + l + "'");
        }
    }
    if (delay) {
        if (!labels.count(delay->strategy)) {
            throw ConfigError("delay refers to unknown strategy '" + delay->strategy + "'");
        }
        if (delay->eval_days < 1 || delay->retrain_window_days < 1 || delay->retrain_lag_days < 0) {
            throw ConfigError("delay window sizes must be positive");
        }
        for (const int d : delay->delays) {
            if (d < 1) throw ConfigError("delays must be >= 1");
        }
    }
    if (init_study) {
        if (init_study->offsets.empty() || init_study->base_window_days < 1) {
            throw ConfigError("init_study needs offsets and base_window_days >= 1");
        }
        for (const int o : init_study->offsets) {
            if (o < 0) throw ConfigError("init_study offsets must be >= 0");
        }
    }
    if (theorem_grid) {
        for (const auto& t : theorem_grid->configs) {
            if (t.k < 1 || !(t.alpha >= 0.0) || !(t.lambda > 0.0)) {
                throw ConfigError("theorem_grid configs need k >= 1, alpha >= 0, lambda > 0");
            }
        }
        if (theorem_grid->guarantee_instances < 0) throw ConfigError("guarantee_instances must be >= 0");
    }
}

ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    ExperimentConfig c;
    Reader r(j, "config");
    c.schema_version = r.require<int>("schema_version");
    if (c.schema_version != kConfigSchemaVersion) {
        throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version));
    }
    c.seed = r.get("seed", c.seed);

    {
        Reader d(r.at("data"), "config.data");
        if (d.has("generate")) c.data.generate = read_stream_spec(d.at("generate"), "config.data.generate");
        for (const auto& f : d.get("files", std::vector<std::string>{})) {
            std::filesystem::path p(f);
            c.data.files.push_back(p.is_relative() && !base_dir.empty() ? base_dir / p : p);
        }
        c.data.dimension = d.get("dimension", c.data.dimension);
        d.finish();
    }

    c.base_window_days = r.get("base_window_days", c.base_window_days);
    if (r.has("trainer")) {
        Reader t(r.at("trainer"), "config.trainer");
        c.trainer.ridge = t.get("ridge", c.trainer.ridge);
        if (t.has("solver")) c.trainer.solver = read_solver(t.at("solver"), "config.trainer.solver", c.trainer.solver);
        t.finish();
    }
    if (r.has("strategies")) {
        const auto& arr = r.at("strategies");
        if (!arr.is_array()) throw ConfigError("config.strategies: expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            NamedStrategy ns;
            ns.strategy = read_strategy(arr[i], "config.strategies[" + std::to_string(i) + "]", &ns.label);
            c.strategies.push_back(std::move(ns));
        }
    }
    if (r.has("sweeps")) {
        const auto& arr = r.at("sweeps");
        if (!arr.is_array()) throw ConfigError("config.sweeps: expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string path = "config.sweeps[" + std::to_string(i) + "]";
            Reader s(arr[i], path);
            SweepConfig sw;
            sw.label = s.require<std::string>("label");
            sw.base = read_strategy(s.at("base"), path + ".base", nullptr);
            sw.parameter = s.require<std::string>("parameter");
            sw.values = s.require<std::vector<double>>("values");
            s.finish();
            c.sweeps.push_back(std::move(sw));
        }
    }
    if (r.has("baselines")) {
        Reader b(r.at("baselines"), "config.baselines");
        c.baselines.stale = b.get("stale", c.baselines.stale);
        c.baselines.moving_window = b.get("moving_window", c.baselines.moving_window);
        c.baselines.window_days = b.get("window_days", c.baselines.window_days);
        b.finish();
    }
    if (r.has("corruptions")) {
        const auto& arr = r.at("corruptions");
        if (!arr.is_array()) throw ConfigError("config.corruptions: expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            Reader s(arr[i], "config.corruptions[" + std::to_string(i) + "]");
            CorruptionStudyConfig cs;
            cs.spec.day = s.require<std::int64_t>("day");
            try {
                cs.spec.mode = parse_corruption_mode(s.require<std::string>("mode"));
            } catch (const InvalidArgument& e) {
                throw ConfigError(e.what());
            }
            cs.spec.amount = s.require<double>("amount");
            cs.strategies = s.get("strategies", cs.strategies);
            cs.moving_window = s.get("moving_window", cs.moving_window);
            cs.quarantine_variants = s.get("quarantine_variants", cs.quarantine_variants);
            s.finish();
            c.corruptions.push_back(std::move(cs));
        }
    }
    if (r.has("delay")) {
        Reader s(r.at("delay"), "config.delay");
        DelayConfig d;
        d.strategy = s.require<std::string>("strategy");
        d.eval_start = s.get("eval_start", d.eval_start);
        d.eval_days = s.get("eval_days", d.eval_days);
        d.delays = s.get("delays", d.delays);
        d.retrain_window_days = s.get("retrain_window_days", d.retrain_window_days);
        d.retrain_lag_days = s.get("retrain_lag_days", d.retrain_lag_days);
        s.finish();
        c.delay = std::move(d);
    }
    if (r.has("init_study")) {
        Reader s(r.at("init_study"), "config.init_study");
        InitStudyConfig is;
        is.strategy = read_strategy(s.at("strategy"), "config.init_study.strategy", nullptr);
        is.offsets = s.get("offsets", is.offsets);
        is.base_window_days = s.get("base_window_days", is.base_window_days);
        s.finish();
        c.init_study = std::move(is);
    }
    if (r.has("theorem_grid")) {
        Reader s(r.at("theorem_grid"), "config.theorem_grid");
        TheoremGridConfig t;
        t.day = s.get("day", t.day);
        if (s.has("configs")) {
            const auto& arr = s.at("configs");
            if (!arr.is_array()) throw ConfigError("config.theorem_grid.configs: expected an array");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                Reader e(arr[i], "config.theorem_grid.configs[" + std::to_string(i) + "]");
                TheoremTriple tr;
                tr.alpha = e.require<double>("alpha");
                tr.k = e.require<int>("k");
                tr.lambda = e.require<double>("lambda");
                e.finish();
                t.configs.push_back(tr);
            }
        }
        t.guarantee_instances = s.get("guarantee_instances", t.guarantee_instances);
        if (s.has("solver")) t.solver = read_solver(s.at("solver"), "config.theorem_grid.solver", t.solver);
        s.finish();
        c.theorem_grid = std::move(t);
    }
    if (r.has("safeguards")) {
        Reader s(r.at("safeguards"), "config.safeguards");
        auto& t = c.safeguards;
        t.max_delta_rig = s.get("max_delta_rig", t.max_delta_rig);
        t.max_delta_auc = s.get("max_delta_auc", t.max_delta_auc);
        t.min_gain_vs_stale = s.get("min_gain_vs_stale", t.min_gain_vs_stale);
        t.max_loss_vs_window = s.get("max_loss_vs_window", t.max_loss_vs_window);
        t.ctr_band = s.get("ctr_band", t.ctr_band);
        t.volume_band = s.get("volume_band", t.volume_band);
        s.finish();
    }
    c.quarantine = r.get("quarantine", c.quarantine);
    c.report_from = r.get("report_from", c.report_from);
    c.write_snapshots = r.get("write_snapshots", c.write_snapshots);
    if (r.has("output_dir")) c.output_dir = r.require<std::string>("output_dir");
    c.workers = r.get("workers", c.workers);
    r.finish();
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

std::string config_to_json(const ExperimentConfig& c, bool include_execution) {
    json j;
    j["schema_version"] = c.schema_version;
    j["seed"] = c.seed;
    json data = json::object();
    if (c.data.generate) {
        data["generate"] = stream_spec_json(*c.data.generate);
    } else {
        std::vector<std::string> files;
        for (const auto& f : c.data.files) files.push_back(f.string());
        data["files"] = files;
        data["dimension"] = c.data.dimension;
    }
    j["data"] = data;
    j["base_window_days"] = c.base_window_days;
    j["trainer"] = {{"ridge", c.trainer.ridge}, {"solver", solver_json(c.trainer.solver)}};
    j["strategies"] = json::array();
    for (const auto& s : c.strategies) {
        auto e = strategy_json(s.strategy);
        e["label"] = s.label;
        j["strategies"].push_back(e);
    }
    j["sweeps"] = json::array();
    for (const auto& s : c.sweeps) {
        j["sweeps"].push_back({{"label", s.label},
                               {"base", strategy_json(s.base)},
                               {"parameter", s.parameter},
                               {"values", s.values}});
    }
    j["baselines"] = {{"stale", c.baselines.stale},
                      {"moving_window", c.baselines.moving_window},
                      {"window_days", c.baselines.window_days}};
    j["corruptions"] = json::array();
    for (const auto& s : c.corruptions) {
        j["corruptions"].push_back({{"day", s.spec.day},
                                    {"mode", to_string(s.spec.mode)},
                                    {"amount", s.spec.amount},
                                    {"strategies", s.strategies},
                                    {"moving_window", s.moving_window},
                                    {"quarantine_variants", s.quarantine_variants}});
    }
    if (c.delay) {
        j["delay"] = {{"strategy", c.delay->strategy},
                      {"eval_start", c.delay->eval_start},
                      {"eval_days", c.delay->eval_days},
                      {"delays", c.delay->delays},
                      {"retrain_window_days", c.delay->retrain_window_days},
                      {"retrain_lag_days", c.delay->retrain_lag_days}};
    }
    if (c.init_study) {
        j["init_study"] = {{"strategy", strategy_json(c.init_study->strategy)},
                           {"offsets", c.init_study->offsets},
                           {"base_window_days", c.init_study->base_window_days}};
    }
    if (c.theorem_grid) {
        json cfgs = json::array();
        for (const auto& t : c.theorem_grid->configs) {
            cfgs.push_back({{"alpha", t.alpha}, {"k", t.k}, {"lambda", t.lambda}});
        }
        j["theorem_grid"] = {{"day", c.theorem_grid->day},
                             {"configs", cfgs},
                             {"guarantee_instances", c.theorem_grid->guarantee_instances},
                             {"solver", solver_json(c.theorem_grid->solver)}};
    }
    const auto& t = c.safeguards;
    j["safeguards"] = {{"max_delta_rig", t.max_delta_rig},         {"max_delta_auc", t.max_delta_auc},
                       {"min_gain_vs_stale", t.min_gain_vs_stale}, {"max_loss_vs_window", t.max_loss_vs_window},
                       {"ctr_band", t.ctr_band},                   {"volume_band", t.volume_band}};
    j["quarantine"] = c.quarantine;
    j["report_from"] = c.report_from;
    j["write_snapshots"] = c.write_snapshots;
    if (include_execution) {
        j["output_dir"] = c.output_dir.string();
        j["workers"] = c.workers;
    }
    return j.dump(2) + "\n";
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 failed");
    }
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += digits[md[i] >> 4];
        out += digits[md[i] & 15];
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

std::string config_hash(const ExperimentConfig& cfg) { return sha256_hex(config_to_json(cfg, false)); }

std::vector<NamedStrategy> expand_strategies(const ExperimentConfig& cfg) {
    std::vector<NamedStrategy> out = cfg.strategies;
    for (const auto& sw : cfg.sweeps) {
        for (const double v : sw.values) {
            NamedStrategy ns{sw.label + "-" + format_double(v), sw.base};
            if (auto* e = std::get_if<EsStrategy>(&ns.strategy)) {
                if (sw.parameter == "passes") e->passes = static_cast<int>(v);
                if (sw.parameter == "learning_rate") e->learning_rate = v;
            } else {
                std::get<ProxStrategy>(ns.strategy).lambda = v;
            }
            out.push_back(std::move(ns));
        }
    }
    for (auto& ns : out) {
        if (auto* e = std::get_if<EsStrategy>(&ns.strategy)) {
            e->seed = derive_seed(cfg.seed, seed_tag::kStrategy, fnv1a(ns.label));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Data and helpers

LoadedData load_data(const ExperimentConfig& cfg) {
    LoadedData out;
    if (cfg.data.generate) {
        auto spec = *cfg.data.generate;
        spec.seed = cfg.seed;
        auto gs = generate_stream(spec);
        out.batches = std::move(gs.batches);
        out.truth = std::move(gs.truth);
        out.dimension = spec.dimension;
        return out;
    }
    out.dimension = cfg.data.dimension;
    for (const auto& f : cfg.data.files) {
        auto part = parse_examples(f);
        for (auto& b : part) {
            if (!out.batches.empty() && b.id <= out.batches.back().id) {
                throw ConfigError("batch ids must increase across data files (" + f.string() + ")");
            }
            out.batches.push_back(std::move(b));
        }
    }
    if (min_dimension(out.batches) > out.dimension) {
        throw ConfigError("data has feature indices beyond data.dimension");
    }
    return out;
}

LinearModel train_base(const ExperimentConfig& cfg, std::span<const Batch> batches, std::size_t dimension) {
    const auto w = static_cast<std::size_t>(cfg.base_window_days);
    if (batches.size() <= w) {
        throw ConfigError("stream has " + std::to_string(batches.size()) +
                          " batches; base_window_days leaves nothing to evaluate");
    }
    return train_full(batches.subspan(0, w), dimension, cfg.trainer);
}

ComparisonRow compare(const std::string& label, std::span<const MetricRecord> records,
                      std::span<const MetricRecord> stale, std::span<const MetricRecord> window,
                      std::int64_t report_from) {
    std::map<std::int64_t, const MetricRecord*> s, w;
    for (const auto& r : stale) s[r.batch_id] = &r;
    for (const auto& r : window) w[r.batch_id] = &r;
    ComparisonRow row;
    row.label = label;
    for (const auto& r : records) {
        ++row.days;
        if (const auto it = s.find(r.batch_id); it != s.end()) {
            if (const auto g = rig_gain(r, *it->second)) {
                row.rig_gain_vs_stale += *g;
                row.positive_days_vs_stale += *g > 0.0 ? 1 : 0;
                if (r.batch_id >= report_from) {
                    ++row.report_days;
                    row.report_rig_gain_vs_stale += *g;
                    row.report_positive_days += *g > 0.0 ? 1 : 0;
                }
            }
            if (const auto g = auc_gain(r, *it->second)) row.auc_gain_vs_stale += *g;
        }
        if (const auto it = w.find(r.batch_id); it != w.end()) {
            if (const auto g = rig_gain(r, *it->second)) {
                ++row.window_days;
                row.rig_gain_vs_window += *g;
            }
            if (const auto g = auc_gain(r, *it->second)) row.auc_gain_vs_window += *g;
        }
    }
    return row;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& task) {
    const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    task(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!first) first = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first) std::rethrow_exception(first);
}

const StrategyRun* ExperimentResult::find_run(const std::string& label) const {
    for (const auto& r : runs) {
        if (r.label == label) return &r;
    }
    return nullptr;
}

bool ExperimentResult::theorem_violation() const {
    for (const auto& [label, rep] : bounds) {
        if (rep.guaranteed && !rep.holds) return true;
    }
    return false;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
    return std::chrono::duration<double>(Clock::now() - t).count();
}

class Log {
public:
    explicit Log(std::function<void(const std::string&)> sink) : sink_(std::move(sink)) {}
    void operator()(const std::string& msg) {
        if (!sink_) return;
        std::lock_guard<std::mutex> lock(mu_);
        sink_(msg);
    }

private:
    std::function<void(const std::string&)> sink_;
    std::mutex mu_;
};

std::string fixed(double v, int digits = 1) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

std::size_t index_of(std::span<const Batch> batches, std::int64_t id) {
    for (std::size_t i = 0; i < batches.size(); ++i) {
        if (batches[i].id == id) return i;
    }
    throw ConfigError("batch " + std::to_string(id) + " is not in the stream");
}

const MetricRecord* find_record(std::span<const MetricRecord> records, std::int64_t id) {
    for (const auto& r : records) {
        if (r.batch_id == id) return &r;
    }
    return nullptr;
}

// Initial learner state for replaying `run` from batch index i (the state after i-1).
std::optional<LearnerState> state_before(const StrategyRun& run, std::int64_t prev_id,
                                         const LinearModel& base, std::int64_t base_id) {
    if (prev_id == base_id) return LearnerState{base, {}, {}};
    for (const auto& s : run.result.snapshots) {
        if (s.batch_id == prev_id) return LearnerState{s.model, s.per_coord, s.fisher};
    }
    return std::nullopt;
}

CorruptionOutcome summarize_corruption(const CorruptionSpec& spec, std::string label,
                                       std::vector<MetricRecord> clean,
                                       std::vector<MetricRecord> corrupted,
                                       const MetricRecord* yesterday,
                                       const MetricRecord* stale_today,
                                       const MetricRecord* window_today,
                                       const SafeguardThresholds& thresholds) {
    CorruptionOutcome out;
    out.spec = spec;
    out.label = std::move(label);
    for (const auto& c : corrupted) {
        if (c.batch_id <= spec.day) continue;
        const auto* k = find_record(clean, c.batch_id);
        if (k == nullptr || !c.rig || !k->rig) continue;
        const double drop = *c.rig - *k->rig;
        if (out.worst_drop_day < 0 || drop > out.worst_drop) {
            out.worst_drop = drop;
            out.worst_drop_day = c.batch_id;
        }
    }
    if (const auto* today = find_record(corrupted, spec.day); today != nullptr && yesterday != nullptr) {
        out.flagged = !safeguard_check(*today, *yesterday, thresholds, stale_today, window_today).passed;
    }
    out.clean = std::move(clean);
    out.corrupted = std::move(corrupted);
    return out;
}

std::vector<MetricRecord> records_from(std::span<const MetricRecord> records, std::int64_t first,
                                       std::int64_t last) {
    std::vector<MetricRecord> out;
    for (const auto& r : records) {
        if (r.batch_id >= first && r.batch_id <= last) out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output

class Writer {
public:
    Writer(std::filesystem::path root, std::vector<std::string>& outputs)
        : root_(std::move(root)), outputs_(outputs) {}

    void text(const std::string& rel, const std::string& body) {
        const auto path = root_ / rel;
        std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot write " + path.string());
        out << body;
        if (!out) throw Error("write failed for " + path.string());
        outputs_.push_back(rel);
    }

    void snapshot(const std::string& rel, const Snapshot& s) {
        std::ostringstream os;
        write_snapshot(os, s);
        text(rel, os.str());
    }

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
    std::vector<std::string>& outputs_;
};

std::string metrics_csv(std::span<const MetricRecord> records, std::span<const MetricRecord> stale,
                        std::span<const MetricRecord> window) {
    const std::vector<std::string> extra{"rig_gain_vs_stale", "auc_gain_vs_stale", "rig_gain_vs_window",
                                         "auc_gain_vs_window"};
    std::string out = metric_csv_header(extra) + "\n";
    for (const auto& r : records) {
        std::vector<std::optional<double>> cols(4);
        if (const auto* s = find_record(stale, r.batch_id)) {
            cols[0] = rig_gain(r, *s);
            cols[1] = auc_gain(r, *s);
        }
        if (const auto* w = find_record(window, r.batch_id)) {
            cols[2] = rig_gain(r, *w);
            cols[3] = auc_gain(r, *w);
        }
        out += metric_csv_row(r, cols) + "\n";
    }
    return out;
}

std::string plain_metrics_csv(std::span<const MetricRecord> records) {
    std::string out = metric_csv_header() + "\n";
    for (const auto& r : records) out += metric_csv_row(r) + "\n";
    return out;
}

std::string safeguard_csv(std::span<const MetricRecord> records, std::span<const MetricRecord> stale,
                          std::span<const MetricRecord> window, std::span<const std::int64_t> skipped,
                          const SafeguardThresholds& thresholds) {
    std::string out = "batch_id,passed,complete,failed_checks,quarantined\n";
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& today = records[i];
        const auto rep = safeguard_check(today, records[i - 1], thresholds, find_record(stale, today.batch_id),
                                         find_record(window, today.batch_id));
        std::string failed;
        for (const auto& c : rep.checks) {
            if (c.passed) continue;
            if (!failed.empty()) failed += ';';
            failed += c.name;
        }
        const bool q = std::find(skipped.begin(), skipped.end(), today.batch_id) != skipped.end();
        out += std::to_string(today.batch_id) + "," + (rep.passed ? "1" : "0") + "," +
               (rep.complete ? "1" : "0") + "," + failed + "," + (q ? "1" : "0") + "\n";
    }
    return out;
}

std::string comparison_csv(std::span<const ComparisonRow> rows) {
    std::string out =
        "label,days,rig_gain_vs_stale,auc_gain_vs_stale,positive_days_vs_stale,report_days,"
        "report_rig_gain_vs_stale,report_positive_days,window_days,rig_gain_vs_window,auc_gain_vs_window,"
        "failed\n";
    for (const auto& r : rows) {
        out += r.label + "," + std::to_string(r.days) + "," + format_double(r.rig_gain_vs_stale) + "," +
               format_double(r.auc_gain_vs_stale) + "," + std::to_string(r.positive_days_vs_stale) + "," +
               std::to_string(r.report_days) + "," + format_double(r.report_rig_gain_vs_stale) + "," +
               std::to_string(r.report_positive_days) + "," + std::to_string(r.window_days) + "," +
               format_double(r.rig_gain_vs_window) + "," + format_double(r.auc_gain_vs_window) + "," +
               (r.failure ? "1" : "0") + "\n";
    }
    return out;
}

std::string manifest_json(const ExperimentResult& res, const ExperimentConfig& cfg, const Writer& w) {
    json outputs = json::array();
    for (const auto& rel : res.outputs) {
        outputs.push_back({{"path", rel}, {"sha256", sha256_file(w.root() / rel)}});
    }
    json j;
    j["config_hash"] = res.config_hash;
    j["version"] = BATCHOL_VERSION;
    j["seed"] = cfg.seed;
    j["workers"] = cfg.workers;
    j["outputs"] = outputs;
    j["failures"] = res.failures;
    j["theorem_violation"] = res.theorem_violation();
    j["wall_clock_seconds"] = res.wall_clock_seconds;
    if (res.guarantee) {
        j["guarantee"] = {{"instances", res.guarantee->instances},
                          {"held", res.guarantee->held},
                          {"diverged", res.guarantee->diverged},
                          {"max_identity_deviation", res.guarantee->max_identity_deviation}};
    }
    return j.dump(2) + "\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// Orchestration

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
    cfg.validate();
    const auto t0 = Clock::now();
    Log log(options.log);
    const Stages& st = options.stages;

    ExperimentResult res;
    res.config_hash = config_hash(cfg);

    log("loading data");
    auto data = load_data(cfg);
    auto& batches = data.batches;
    const std::size_t d = data.dimension;
    const auto wbase = static_cast<std::size_t>(cfg.base_window_days);

    log("training base model on " + std::to_string(wbase) + " batches");
    res.base = train_base(cfg, batches, d);
    res.base_batch_id = batches[wbase - 1].id;
    const std::span<const Batch> all(batches);
    const auto eval = all.subspan(wbase);
    StreamOptions stream_opts;
    stream_opts.quarantine = cfg.quarantine;
    stream_opts.thresholds = cfg.safeguards;

    // Which strategy runs are needed.
    const auto expanded = expand_strategies(cfg);
    std::set<std::string> needed;
    for (const auto& s : expanded) {
        if (st.strategies) needed.insert(s.label);
    }
    if (st.delay && cfg.delay) needed.insert(cfg.delay->strategy);
    if (st.corruptions) {
        for (const auto& c : cfg.corruptions) needed.insert(c.strategies.begin(), c.strategies.end());
    }
    for (const auto& s : expanded) {
        if (needed.count(s.label)) res.runs.push_back({s.label, {}});
    }

    std::mutex fail_mu;
    auto fail = [&](const std::string& what) {
        std::lock_guard<std::mutex> lock(fail_mu);
        res.failures.push_back(what);
    };

    // Independent tasks, each writing only its own slot.
    std::vector<std::function<void()>> tasks;
    res.stale = evaluate_stream(eval, res.base);
    const bool want_window = cfg.baselines.moving_window && (st.baselines || st.corruptions);
    if (want_window) {
        res.moving_window.emplace();
        tasks.push_back([&] {
            const auto t = Clock::now();
            *res.moving_window = run_moving_window(all, d, cfg.baselines.window_days, cfg.trainer);
            log("moving-window done in " + fixed(seconds_since(t)) + " s");
        });
    }
    for (auto& run : res.runs) {
        const auto it = std::find_if(expanded.begin(), expanded.end(),
                                     [&](const NamedStrategy& s) { return s.label == run.label; });
        tasks.push_back([&, strategy = it->strategy] {
            const auto t = Clock::now();
            run.result = run_stream(eval, LearnerState{res.base, {}, {}}, strategy, stream_opts);
            log(run.label + " done in " + fixed(seconds_since(t)) + " s" +
                (run.result.failure ? " (failed)" : ""));
        });
    }

    std::vector<std::optional<BoundReport>> grid;
    std::optional<LogisticObjective> day_objective;
    if (st.theorem && cfg.theorem_grid) {
        const auto& tg = *cfg.theorem_grid;
        grid.resize(tg.configs.size());
        if (!tg.configs.empty()) day_objective.emplace(batches[index_of(all, tg.day)], d);
        const auto w0 = res.base.params();
        for (std::size_t i = 0; i < tg.configs.size(); ++i) {
            tasks.push_back([&, i, w0] {
                const auto& c = tg.configs[i];
                try {
                    grid[i] = theorem1_check(*day_objective, w0, c.alpha, c.k, c.lambda, tg.solver);
                } catch (const Error& e) {
                    fail("theorem grid " + std::to_string(i) + ": " + e.what());
                }
            });
        }
        if (tg.guarantee_instances > 0) {
            tasks.push_back([&] {
                const auto t = Clock::now();
                res.guarantee = run_guarantee_suite(tg.guarantee_instances,
                                                    derive_seed(cfg.seed, seed_tag::kTheorem), tg.solver);
                log("guarantee suite done in " + fixed(seconds_since(t)) + " s");
            });
        }
    }

    if (st.init_study && cfg.init_study) {
        tasks.push_back([&] {
            const auto& is = *cfg.init_study;
            const auto t = Clock::now();
            try {
                res.init_runs = run_initialization_study(all, d, is.offsets, is.base_window_days, is.strategy,
                                                         cfg.trainer);
            } catch (const Error& e) {
                fail(std::string("init study: ") + e.what());
            }
            log("init study done in " + fixed(seconds_since(t)) + " s");
        });
    }

    std::optional<LinearModel> retrained;
    if (st.delay && cfg.delay) {
        tasks.push_back([&] {
            const auto& dc = *cfg.delay;
            const std::int64_t end = dc.eval_start - dc.retrain_lag_days;
            std::vector<Batch> window;
            for (const auto& b : batches) {
                if (b.id >= end - dc.retrain_window_days && b.id < end) window.push_back(b);
            }
            if (window.empty()) {
                fail("delay retrain window is empty");
                return;
            }
            retrained = train_full(window, d, cfg.trainer);
        });
    }

    log("running " + std::to_string(tasks.size()) + " tasks on " + std::to_string(cfg.workers) + " worker(s)");
    parallel_for(tasks.size(), cfg.workers, [&](std::size_t i) {
        try {
            tasks[i]();
        } catch (const Error& e) {
            fail(e.what());
        }
    });

    if (res.moving_window && res.moving_window->failure) fail("moving-window: " + *res.moving_window->failure);
    for (const auto& r : res.runs) {
        if (r.result.failure) fail(r.label + ": " + *r.result.failure);
    }
    if (cfg.theorem_grid) {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (grid[i]) res.bounds.emplace_back("grid-" + std::to_string(i), *grid[i]);
        }
        if (res.guarantee) {
            for (std::size_t i = 0; i < res.guarantee->reports.size(); ++i) {
                res.bounds.emplace_back("guarantee-" + std::to_string(i), res.guarantee->reports[i]);
            }
        }
    }

    static const std::vector<MetricRecord> kNone;
    const auto& window_records = res.moving_window ? res.moving_window->records : kNone;

    // Corruption replays: swap the corrupted day in place, replay from the day before, swap back.
    if (st.corruptions) {
        for (const auto& cs : cfg.corruptions) {
            const auto t = Clock::now();
            std::size_t ic = 0;
            try {
                ic = index_of(all, cs.spec.day);
            } catch (const ConfigError& e) {
                fail(std::string("corruption: ") + e.what());
                continue;
            }
            if (ic < wbase + 1) {
                fail("corruption day " + std::to_string(cs.spec.day) + " must come after the first eval batch");
                continue;
            }
            const std::int64_t prev_id = batches[ic - 1].id;
            std::vector<std::vector<MetricRecord>> clean_replays(cs.strategies.size());
            if (cs.quarantine_variants && !stream_opts.quarantine) {
                StreamOptions gated = stream_opts;
                gated.quarantine = true;
                parallel_for(cs.strategies.size(), cfg.workers, [&](std::size_t k) {
                    const auto* run = res.find_run(cs.strategies[k]);
                    const auto init = state_before(*run, prev_id, res.base, res.base_batch_id);
                    if (!init) return;
                    const auto it = std::find_if(expanded.begin(), expanded.end(),
                                                 [&](const NamedStrategy& s) { return s.label == run->label; });
                    StreamOptions opts = gated;
                    if (const auto* p = find_record(run->result.records, prev_id)) opts.previous = *p;
                    clean_replays[k] = run_stream(all.subspan(ic), *init, it->strategy, opts).records;
                });
            }
            Batch corrupted = corrupt_batch(batches[ic], cs.spec, d, cfg.seed);
            std::swap(batches[ic], corrupted);
            const MetricRecord stale_today = evaluate(res.base, batches[ic]);

            const std::size_t ns = cs.strategies.size();
            const std::size_t nv = cs.quarantine_variants ? 2 : 1;
            std::vector<CorruptionOutcome> outcomes(ns * nv + 1);
            std::vector<std::function<void()>> ctasks;
            for (std::size_t k = 0; k < ns * nv; ++k) {
                ctasks.push_back([&, k] {
                    const bool gated = k >= ns;
                    const auto* run = res.find_run(cs.strategies[k % ns]);
                    auto& out = outcomes[k];
                    out.label = run->label + (gated ? "+quarantine" : "");
                    const auto init = state_before(*run, prev_id, res.base, res.base_batch_id);
                    if (!init) {
                        out.failure = "no snapshot before the corrupted day";
                        return;
                    }
                    const auto it = std::find_if(expanded.begin(), expanded.end(),
                                                 [&](const NamedStrategy& s) { return s.label == run->label; });
                    StreamOptions opts = stream_opts;
                    opts.quarantine = opts.quarantine || gated;
                    if (const auto* p = find_record(run->result.records, prev_id)) opts.previous = *p;
                    auto replay = run_stream(all.subspan(ic), *init, it->strategy, opts);
                    // Gated variants compare against a gated clean replay.
                    std::vector<MetricRecord> clean;
                    if (gated && !stream_opts.quarantine) {
                        clean = clean_replays[k % ns];
                    } else {
                        clean = records_from(run->result.records, cs.spec.day, INT64_MAX);
                    }
                    out = summarize_corruption(cs.spec, out.label, std::move(clean), replay.records,
                                               find_record(run->result.records, prev_id), &stale_today, nullptr,
                                               cfg.safeguards);
                    if (replay.failure) out.failure = *replay.failure;
                });
            }
            const auto wmw = static_cast<std::size_t>(cfg.baselines.window_days);
            const bool do_window = cs.moving_window && res.moving_window && ic >= wmw;
            if (do_window) {
                ctasks.push_back([&] {
                    const std::size_t first = ic - wmw;
                    const std::size_t last = std::min(all.size(), ic + wmw + 1);
                    auto replay = run_moving_window(all.subspan(first, last - first), d, cfg.baselines.window_days,
                                                    cfg.trainer);
                    auto& out = outcomes.back();
                    out = summarize_corruption(cs.spec, "moving-window",
                                               records_from(window_records, cs.spec.day, batches[last - 1].id),
                                               replay.records, find_record(window_records, prev_id),
                                               &stale_today, nullptr, cfg.safeguards);
                    if (replay.failure) out.failure = *replay.failure;
                });
            }
            parallel_for(ctasks.size(), cfg.workers, [&](std::size_t i) {
                try {
                    ctasks[i]();
                } catch (const Error& e) {
                    fail(e.what());
                }
            });
            std::swap(batches[ic], corrupted);
            if (!do_window) outcomes.pop_back();
            for (auto& o : outcomes) {
                if (o.failure) fail("corruption " + o.label + ": " + *o.failure);
                res.corruptions.push_back(std::move(o));
            }
            log("corruption day " + std::to_string(cs.spec.day) + " done in " + fixed(seconds_since(t)) + " s");
        }
    }

    if (st.delay && cfg.delay) {
        const auto& dc = *cfg.delay;
        const auto* run = res.find_run(dc.strategy);
        std::vector<Batch> eval_window;
        for (const auto& b : batches) {
            if (b.id >= dc.eval_start && b.id < dc.eval_start + dc.eval_days) eval_window.push_back(b);
        }
        if (run == nullptr || eval_window.empty()) {
            fail("delay: no eval batches or no run for " + dc.strategy);
        } else {
            std::vector<Snapshot> snaps;
            snaps.push_back({res.base, res.base_batch_id, std::nullopt, std::nullopt});
            snaps.insert(snaps.end(), run->result.snapshots.begin(), run->result.snapshots.end());
            const std::string label = "retrain_w" + std::to_string(dc.retrain_window_days) + "_lag" +
                                      std::to_string(dc.retrain_lag_days);
            res.delay = run_delay_analysis(snaps, eval_window, dc.delays, retrained ? &*retrained : nullptr, label);
        }
    }

    for (const auto& r : res.runs) {
        auto row = compare(r.label, r.result.records, res.stale, window_records, cfg.report_from);
        row.failure = r.result.failure;
        res.comparison.push_back(std::move(row));
    }
    if (res.moving_window) {
        res.comparison.push_back(
            compare("moving-window", res.moving_window->records, res.stale, {}, cfg.report_from));
        res.comparison.back().failure = res.moving_window->failure;
    }

    res.wall_clock_seconds = seconds_since(t0);
    if (!options.write) return res;

    // Files. The manifest is removed first and written last, so its presence marks completion.
    std::filesystem::create_directories(cfg.output_dir);
    std::filesystem::remove(cfg.output_dir / "manifest.json");
    Writer w(cfg.output_dir, res.outputs);
    w.text("config.json", config_to_json(cfg, false));
    w.snapshot("snapshots/base.snap", {res.base, res.base_batch_id, std::nullopt, std::nullopt});
    if (cfg.baselines.stale || st.baselines) w.text("metrics/stale.csv", plain_metrics_csv(res.stale));
    if (res.moving_window && st.baselines) {
        w.text("metrics/moving-window.csv", metrics_csv(res.moving_window->records, res.stale, {}));
    }
    for (const auto& r : res.runs) {
        w.text("metrics/" + r.label + ".csv", metrics_csv(r.result.records, res.stale, window_records));
        w.text("safeguards/" + r.label + ".csv",
               safeguard_csv(r.result.records, res.stale, window_records, r.result.skipped, cfg.safeguards));
        if (cfg.write_snapshots) {
            for (const auto& s : r.result.snapshots) {
                w.snapshot("snapshots/" + r.label + "/" + std::to_string(s.batch_id) + ".snap", s);
            }
        }
    }
    if (!res.comparison.empty()) w.text("comparison.csv", comparison_csv(res.comparison));

    if (!res.corruptions.empty()) {
        std::string detail = "day,mode,amount,label,batch_id,rig_clean,rig_corrupted,drop\n";
        std::string summary = "day,mode,amount,label,worst_drop,worst_drop_day,flagged,failed\n";
        for (const auto& o : res.corruptions) {
            const std::string head = std::to_string(o.spec.day) + "," + to_string(o.spec.mode) + "," +
                                     format_double(o.spec.amount) + "," + o.label + ",";
            for (const auto& c : o.corrupted) {
                const auto* k = find_record(o.clean, c.batch_id);
                std::optional<double> drop;
                if (k != nullptr && k->rig && c.rig) drop = *c.rig - *k->rig;
                detail += head + std::to_string(c.batch_id) + "," +
                          format_optional(k ? k->rig : std::nullopt) + "," + format_optional(c.rig) + "," +
                          format_optional(drop) + "\n";
            }
            summary += head + format_double(o.worst_drop) + "," + std::to_string(o.worst_drop_day) + "," +
                       (o.flagged ? "1" : "0") + "," + (o.failure ? "1" : "0") + "\n";
        }
        w.text("corruption.csv", detail);
        w.text("corruption_summary.csv", summary);
    }

    if (!res.delay.empty()) {
        std::string out = "label,delay,trained_through," + metric_csv_header() + "\n";
        for (const auto& r : res.delay) {
            out += r.label + "," + (r.delay ? std::to_string(*r.delay) : "") + "," +
                   (r.trained_through ? std::to_string(*r.trained_through) : "") + ",";
            out += r.metrics ? metric_csv_row(*r.metrics) : std::string(",,,,,,");
            out += "\n";
        }
        w.text("delay.csv", out);
    }

    if (!res.init_runs.empty()) {
        std::string out = "first_train_batch,first_eval_batch," + metric_csv_header() + "\n";
        std::set<std::int64_t> ids;
        for (const auto& run : res.init_runs) {
            for (const auto& r : run.records) {
                out += std::to_string(run.first_train_batch) + "," + std::to_string(run.first_eval_batch) + "," +
                       metric_csv_row(r) + "\n";
                ids.insert(r.batch_id);
            }
        }
        w.text("init_study.csv", out);
        std::string spread = "batch_id,rig_spread\n";
        for (const auto id : ids) {
            if (const auto s = rig_spread(res.init_runs, id)) {
                spread += std::to_string(id) + "," + format_double(*s) + "\n";
            }
        }
        w.text("init_spread.csv", spread);
    }

    if (!res.bounds.empty()) {
        std::string out = bound_csv_header() + "\n";
        for (const auto& [label, rep] : res.bounds) out += bound_csv_row(rep, label) + "\n";
        w.text("bounds.csv", out);
    }

    res.wall_clock_seconds = seconds_since(t0);
    {
        const auto path = cfg.output_dir / "manifest.json";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot write " + path.string());
        out << manifest_json(res, cfg, w);
    }
    return res;
}

}  // namespace batchol
