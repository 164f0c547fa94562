#include <filesystem>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "batchol/datagen.hpp"
#include "batchol/error.hpp"
#include "batchol/io.hpp"
#include "helpers.hpp"

using namespace batchol;
namespace fs = std::filesystem;

namespace {

long parse_error_line(const std::string& text) {
    std::istringstream in(text);
    try {
        parse_examples(in);
    } catch (const ParseError& e) {
        return e.line();
    }
    return -1;
}

}  // namespace

TEST(Examples, RoundTrip) {
    std::mt19937_64 rng(1);
    std::vector<Batch> bs{test::random_batch(rng, 9, 25, 0), test::random_batch(rng, 9, 1, 3),
                          test::random_batch(rng, 9, 40, 4)};
    std::ostringstream out;
    write_examples(out, bs);
    std::istringstream in(out.str());
    EXPECT_EQ(parse_examples(in), bs);
}

TEST(Examples, CommentsAndBlankLines) {
    std::istringstream in("# header\n#day 2\n\n1 0:0.5 3:1\n# note\n0\n#day 5\n0 1:2\n");
    const auto bs = parse_examples(in);
    ASSERT_EQ(bs.size(), 2u);
    EXPECT_EQ(bs[0].id, 2);
    EXPECT_EQ(bs[0].size(), 2u);
    EXPECT_TRUE(bs[0].examples[1].features.empty());
    EXPECT_EQ(bs[1].examples[0].features, SparseVector({{1, 2.0}}));
}

TEST(Examples, ErrorsCarryLineNumbers) {
    EXPECT_EQ(parse_error_line("1 0:1\n"), 1);
    EXPECT_EQ(parse_error_line("#day 0\n2 0:1\n"), 2);
    EXPECT_EQ(parse_error_line("#day 0\n1 0:1\n1 3:1 2:1\n"), 3);
    EXPECT_EQ(parse_error_line("#day 0\n1 2:1 2:1\n"), 2);
    EXPECT_EQ(parse_error_line("#day 0\n1 a:1\n"), 2);
    EXPECT_EQ(parse_error_line("#day 0\n1 0:nan\n"), 2);
    EXPECT_EQ(parse_error_line("#day 3\n1 0:1\n#day 3\n"), 3);
    EXPECT_EQ(parse_error_line("#day x\n"), 1);
}

TEST(Examples, MissingFile) {
    EXPECT_THROW(parse_examples(fs::path("/nonexistent/batchol/examples.txt")), Error);
}

TEST(Snapshot, RoundTripIsExact) {
    std::mt19937_64 rng(2);
    Snapshot s{test::random_model(rng, 7), 41, {}, {}};
    for (const bool extras : {false, true}) {
        if (extras) {
            PerCoordState st(8);
            for (std::size_t r = 0; r < 8; ++r) st.counts[r] = rng();
            s.per_coord = st;
            s.fisher = std::vector<double>(8);
            for (auto& v : *s.fisher) v = std::ldexp(static_cast<double>(rng() >> 11), -40);
        }
        std::ostringstream out;
        write_snapshot(out, s);
        std::istringstream in(out.str());
        EXPECT_EQ(read_snapshot(in), s);
    }
}

TEST(Snapshot, FileRoundTrip) {
    const auto dir = fs::temp_directory_path() / "batchol_io_test";
    fs::remove_all(dir);
    const Snapshot s{LinearModel({0.1, -1e-300, 3.0}, -0.25), 7, {}, {}};
    write_snapshot(dir / "a" / "b.snap", s);
    EXPECT_EQ(read_snapshot(dir / "a" / "b.snap"), s);
    fs::remove_all(dir);
}

TEST(Snapshot, RejectsMalformed) {
    auto bad = [](const std::string& text) {
        std::istringstream in(text);
        EXPECT_THROW(read_snapshot(in), ParseError) << text;
    };
    bad("");
    bad("something else\n");
    bad("batchol-snapshot 2\n");
    bad("batchol-snapshot 1\ndimension 2\nbatch_id 0\nbias 0x0p+0\nweights 0x0p+0\nend\n");
    bad("batchol-snapshot 1\ndimension 1\nbatch_id 0\nbias 0x0p+0\nweights 0x0p+0\nfoo 1\nend\n");
    bad("batchol-snapshot 1\ndimension 1\nbatch_id 0\nbias zz\nweights 0x0p+0\nend\n");
    bad("batchol-snapshot 1\ndimension 1\nbatch_id 0\nbias 0x0p+0\nweights 0x0p+0\n");
}

TEST(GroundTruth, RoundTrip) {
    StreamSpec spec;
    spec.dimension = 6;
    spec.days = 4;
    spec.examples_per_day = 10;
    spec.active_features = 2;
    const auto s = generate_stream(spec);
    const auto path = fs::temp_directory_path() / "batchol_truth_test.txt";
    write_ground_truth(path, s.truth);
    const auto t = read_ground_truth(path);
    EXPECT_EQ(t.weights, s.truth.weights);
    EXPECT_EQ(t.bias, s.truth.bias);
    fs::remove(path);
}
