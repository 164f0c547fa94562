#include "batchol/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "batchol/error.hpp"
#include "batchol/metrics.hpp"

namespace batchol {

namespace {

constexpr const char* kSnapshotMagic = "batchol-snapshot";
constexpr int kSnapshotVersion = 1;

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        const std::size_t j = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
        if (i > j) out.push_back(s.substr(j, i - j));
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out,
                  std::chars_format fmt = std::chars_format::general) {
    std::from_chars_result r{};
    if constexpr (std::is_floating_point_v<T>) {
        r = std::from_chars(s.data(), s.data() + s.size(), out, fmt);
    } else {
        r = std::from_chars(s.data(), s.data() + s.size(), out);
    }
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

std::string hex(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
    return std::string(buf, r.ptr);
}

double parse_hex(std::string_view s, long line) {
    double v = 0.0;
    bool neg = false;
    if (!s.empty() && s.front() == '-') {
        neg = true;
        s.remove_prefix(1);
    }
    if (!parse_number(s, v, std::chars_format::hex)) {
        throw ParseError("malformed hexadecimal float '" + std::string(s) + "'", line);
    }
    return neg ? -v : v;
}

}  // namespace

std::vector<Batch> parse_examples(std::istream& in) {
    std::vector<Batch> out;
    std::string raw;
    long line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto tok = split_ws(line);
            if (tok.empty() || tok[0] != "#day") continue;
            std::int64_t id = 0;
            if (tok.size() != 2 || !parse_number(tok[1], id) || id < 0) {
                throw ParseError("malformed day marker", line_no);
            }
            if (!out.empty() && id <= out.back().id) {
                throw ParseError("day markers must be strictly increasing (day " + std::to_string(id) +
                                     " after " + std::to_string(out.back().id) + ")",
                                 line_no);
            }
            out.push_back(Batch{id, {}});
            continue;
        }
        if (out.empty()) throw ParseError("example line before the first '#day' marker", line_no);

        const auto tok = split_ws(line);
        int label = -1;
        if (!parse_number(tok[0], label) || (label != 0 && label != 1)) {
            throw ParseError("label must be 0 or 1, got '" + std::string(tok[0]) + "'", line_no);
        }
        std::vector<Feature> fs;
        fs.reserve(tok.size() - 1);
        for (std::size_t i = 1; i < tok.size(); ++i) {
            const auto colon = tok[i].find(':');
            std::uint32_t idx = 0;
            double val = 0.0;
            if (colon == std::string_view::npos || !parse_number(tok[i].substr(0, colon), idx) ||
                !parse_number(tok[i].substr(colon + 1), val) || !std::isfinite(val)) {
                throw ParseError("malformed feature '" + std::string(tok[i]) + "'", line_no);
            }
            if (!fs.empty() && idx == fs.back().index) {
                throw ParseError("duplicate feature index " + std::to_string(idx), line_no);
            }
            if (!fs.empty() && idx < fs.back().index) {
                throw ParseError("feature indices must be increasing (" + std::to_string(idx) + ")",
                                 line_no);
            }
            fs.push_back({idx, val});
        }
        out.back().examples.push_back({SparseVector(std::move(fs)), label});
    }
    return out;
}

std::vector<Batch> parse_examples(const std::filesystem::path& path) {
    auto in = open_in(path);
    return parse_examples(in);
}

void write_examples(std::ostream& out, std::span<const Batch> batches) {
    std::string line;
    for (const auto& b : batches) {
        out << "#day " << b.id << '\n';
        for (const auto& e : b.examples) {
            line.clear();
            line += e.label == 1 ? '1' : '0';
            for (const auto& f : e.features.entries()) {
                line += ' ';
                line += std::to_string(f.index);
                line += ':';
                line += format_double(f.value);
            }
            line += '\n';
            out << line;
        }
    }
}

void write_examples(const std::filesystem::path& path, std::span<const Batch> batches) {
    auto out = open_out(path);
    write_examples(out, batches);
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth) {
    auto out = open_out(path);
    out << "# day bias weights...\n";
    for (std::size_t t = 0; t < truth.weights.size(); ++t) {
        out << t << ' ' << format_double(truth.bias[t]);
        for (double w : truth.weights[t]) out << ' ' << format_double(w);
        out << '\n';
    }
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
    auto in = open_in(path);
    GroundTruth g;
    std::string raw;
    long line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto tok = split_ws(line);
        if (tok.size() < 2) throw ParseError("truth line needs day and bias", line_no);
        double b = 0.0;
        if (!parse_number(tok[1], b)) throw ParseError("malformed bias", line_no);
        std::vector<double> w(tok.size() - 2);
        for (std::size_t i = 2; i < tok.size(); ++i) {
            if (!parse_number(tok[i], w[i - 2])) throw ParseError("malformed weight", line_no);
        }
        g.bias.push_back(b);
        g.weights.push_back(std::move(w));
    }
    return g;
}

void write_snapshot(std::ostream& out, const Snapshot& s) {
    out << kSnapshotMagic << ' ' << kSnapshotVersion << '\n';
    out << "dimension " << s.model.dimension() << '\n';
    out << "batch_id " << s.batch_id << '\n';
    out << "bias " << hex(s.model.bias()) << '\n';
    out << "weights";
    for (double w : s.model.weights()) out << ' ' << hex(w);
    out << '\n';
    if (s.per_coord) {
        out << "counts";
        for (auto c : s.per_coord->counts) out << ' ' << c;
        out << '\n';
    }
    if (s.fisher) {
        out << "fisher";
        for (double f : *s.fisher) out << ' ' << hex(f);
        out << '\n';
    }
    out << "end\n";
}

void write_snapshot(const std::filesystem::path& path, const Snapshot& s) {
    auto out = open_out(path);
    write_snapshot(out, s);
}

Snapshot read_snapshot(std::istream& in) {
    std::string raw;
    long line_no = 0;
    auto next = [&]() -> std::vector<std::string_view> {
        if (!std::getline(in, raw)) throw ParseError("truncated snapshot", line_no);
        ++line_no;
        return split_ws(trim(raw));
    };

    auto tok = next();
    int version = 0;
    if (tok.size() != 2 || tok[0] != kSnapshotMagic || !parse_number(tok[1], version)) {
        throw ParseError("not a snapshot file", line_no);
    }
    if (version != kSnapshotVersion) {
        throw ParseError("unsupported snapshot version " + std::to_string(version), line_no);
    }

    std::size_t d = 0;
    std::int64_t batch_id = 0;
    double bias = 0.0;
    std::vector<double> weights;
    bool have_weights = false;
    Snapshot s;
    for (;;) {
        tok = next();
        if (tok.empty()) continue;
        const auto key = tok[0];
        if (key == "end") break;
        if (key == "dimension") {
            if (tok.size() != 2 || !parse_number(tok[1], d)) throw ParseError("bad dimension", line_no);
        } else if (key == "batch_id") {
            if (tok.size() != 2 || !parse_number(tok[1], batch_id)) throw ParseError("bad batch_id", line_no);
        } else if (key == "bias") {
            if (tok.size() != 2) throw ParseError("bad bias", line_no);
            bias = parse_hex(tok[1], line_no);
        } else if (key == "weights") {
            if (tok.size() != d + 1) throw ParseError("weights length does not match dimension", line_no);
            weights.resize(d);
            for (std::size_t i = 0; i < d; ++i) weights[i] = parse_hex(tok[i + 1], line_no);
            have_weights = true;
        } else if (key == "counts") {
            if (tok.size() != d + 2) throw ParseError("counts length must be dimension+1", line_no);
            PerCoordState st(d + 1);
            for (std::size_t i = 0; i <= d; ++i) {
                if (!parse_number(tok[i + 1], st.counts[i])) throw ParseError("bad count", line_no);
            }
            s.per_coord = std::move(st);
        } else if (key == "fisher") {
            if (tok.size() != d + 2) throw ParseError("fisher length must be dimension+1", line_no);
            std::vector<double> f(d + 1);
            for (std::size_t i = 0; i <= d; ++i) f[i] = parse_hex(tok[i + 1], line_no);
            s.fisher = std::move(f);
        } else {
            throw ParseError("unknown snapshot field '" + std::string(key) + "'", line_no);
        }
    }
    if (!have_weights) throw ParseError("snapshot has no weights", line_no);
    s.model = LinearModel(std::move(weights), bias);
    s.batch_id = batch_id;
    return s;
}

Snapshot read_snapshot(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_snapshot(in);
}

}  // namespace batchol
