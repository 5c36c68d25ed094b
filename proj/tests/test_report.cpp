#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "onebit/errors.hpp"
#include "onebit/report.hpp"
#include "support.hpp"

using namespace onebit;

TEST(Accuracy, PerfectAndConstantPredictors) {
    const std::vector<int> truth{0, 1, 2, 3, 0, 1, 2, 3};
    EXPECT_EQ(accuracy(truth, truth), 1.0);
    const std::vector<int> constant(8, 2);
    EXPECT_EQ(accuracy(constant, truth), 0.25);
}

TEST(Accuracy, RandomPredictorNearChance) {
    std::mt19937_64 rng(1);
    std::vector<int> truth(10000);
    std::vector<int> pred(10000);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        truth[i] = static_cast<int>(i % 10);
        pred[i] = static_cast<int>(rng() % 10);
    }
    // Binomial sd is 0.003 at N = 10,000.
    EXPECT_NEAR(accuracy(pred, truth), 0.1, 0.01);
}

TEST(Accuracy, EmptyOrMismatchedThrows) {
    EXPECT_THROW(accuracy(std::vector<int>{}, std::vector<int>{}), std::invalid_argument);
    EXPECT_THROW(accuracy(std::vector<int>{1}, std::vector<int>{1, 2}), ShapeError);
    Dataset empty{"e", 2, 2, {}, {}};
    EXPECT_THROW(evaluate(ClassifierState(Architecture{2, {2}, 2}, 1).teacher(), empty), std::invalid_argument);
}

TEST(Evaluate, ZeroNetworkPredictsClassZero) {
    const auto s = ClassifierState::zeros(Architecture{2, {3}, 4});
    Dataset d{"d", 2, 4, std::vector<float>(16, 1.0f), {0, 1, 2, 3, 0, 1, 2, 3}};
    d.features.resize(16);
    EXPECT_EQ(evaluate(s.teacher(), d), 0.25);
}

TEST(GroupHistogram, BalancedIsAllMiddle) {
    std::vector<int> pred;
    for (int c = 0; c < 10; ++c) pred.insert(pred.end(), 10, c);
    EXPECT_EQ(class_group_histogram(pred, 10, 1.0), (GroupCounts{0, 100, 0}));
}

TEST(GroupHistogram, SingleClassGoesToTopGroup) {
    const std::vector<int> pred(100, 4);
    EXPECT_EQ(class_group_histogram(pred, 10, 10.0), (GroupCounts{0, 0, 100}));
}

TEST(GroupHistogram, InfiniteBandIsAllMiddle) {
    const std::vector<int> pred{0, 0, 0, 1, 2, 2};
    EXPECT_EQ(class_group_histogram(pred, 5, INFINITY), (GroupCounts{0, 6, 0}));
}

TEST(GroupHistogram, PartitionsOnRandomInputs) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        const int classes = 2 + static_cast<int>(rng() % 10);
        std::vector<int> pred(rng() % 300);
        for (int& p : pred) p = static_cast<int>(rng() % static_cast<unsigned>(classes));
        const auto g = class_group_histogram(pred, classes, static_cast<double>(rng() % 20));
        EXPECT_EQ(g.g0 + g.g1 + g.g2, pred.size());
    }
}

TEST(GroupHistogram, NegativeBandThrows) {
    EXPECT_THROW(class_group_histogram(std::vector<int>{0}, 2, -1.0), DomainError);
}

TEST(DefaultBand, TenPercentOfMeanAtLeastOne) {
    EXPECT_EQ(default_band(1000, 10), 10.0);
    EXPECT_EQ(default_band(100, 10), 1.0);
    EXPECT_EQ(default_band(10000, 100), 10.0);
}

TEST(AccuracyArrow, TwoDecimalPercent) {
    std::vector<StageResult> s(3);
    s[0].accuracy = 0.5147;
    s[1].accuracy = 0.6782;
    s[2].accuracy = 0.7376;
    EXPECT_EQ(accuracy_arrow(s), "51.47→67.82→73.76");
}

namespace {

Report sample_report() {
    Report r;
    r.name = "demo";
    r.arm = "one_bit";
    r.config = {{"name", "demo"}};
    for (int t = 0; t < 3; ++t) {
        StageResult s;
        s.stage = t;
        s.accuracy = 0.1 + 0.123456789 * t;
        s.n_pos = static_cast<std::size_t>(5 * t);
        s.n_neg = static_cast<std::size_t>(3 * t);
        s.bits = 99.65784284662087 + 8.0 * t;
        s.guess_accuracy = t == 0 ? 0.0 : static_cast<double>(s.n_pos) / static_cast<double>(s.n_pos + s.n_neg);
        s.groups = {1, 2, 3};
        r.stages.push_back(s);
    }
    r.ledger = {120.0, 115.65784284662087, 30, 16};
    return r;
}

}  // namespace

TEST(WriteReport, MetricsRoundTrip) {
    TempDir tmp;
    const Report r = sample_report();
    write_report(r, tmp.path);
    const auto back = read_metrics(tmp / "metrics.csv");
    ASSERT_EQ(back.size(), r.stages.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].stage, r.stages[i].stage);
        EXPECT_EQ(back[i].accuracy, r.stages[i].accuracy);
        EXPECT_EQ(back[i].n_pos, r.stages[i].n_pos);
        EXPECT_EQ(back[i].n_neg, r.stages[i].n_neg);
        EXPECT_EQ(back[i].bits, r.stages[i].bits);
        EXPECT_EQ(back[i].guess_accuracy, r.stages[i].guess_accuracy);
    }
    EXPECT_EQ(read_groups(tmp / "groups.csv").size(), 3u);
    const auto summary = read_summary(tmp.path);
    EXPECT_EQ(summary.stage_count, 3u);
    EXPECT_EQ(summary.ledger.spent_bits, r.ledger.spent_bits);
}

TEST(WriteReport, ExactHeaders) {
    TempDir tmp;
    write_report(sample_report(), tmp.path);
    const std::string metrics = slurp(tmp / "metrics.csv");
    EXPECT_EQ(metrics.substr(0, metrics.find('\n')), "stage,accuracy,n_pos,n_neg,bits");
    const std::string groups = slurp(tmp / "groups.csv");
    EXPECT_EQ(groups.substr(0, groups.find('\n')), "stage,g0,g1,g2");
    EXPECT_EQ(slurp(tmp / "querylog.csv"), "stage,sample,guess,answer\n");
    EXPECT_TRUE(std::filesystem::exists(tmp / "config.json"));
}

TEST(WriteReport, ByteIdenticalForIdenticalReports) {
    TempDir tmp;
    write_report(sample_report(), tmp / "a");
    write_report(sample_report(), tmp / "b");
    for (const char* f : {"metrics.csv", "groups.csv", "querylog.csv", "config.json", "summary.json"}) {
        EXPECT_EQ(slurp(tmp / "a" / f), slurp(tmp / "b" / f)) << f;
    }
}

TEST(WriteReport, UnwritableDirectoryNamesPath) {
    try {
        write_report(sample_report(), "/proc/onebit-cannot-write-here");
        FAIL() << "expected filesystem_error";
    } catch (const std::filesystem::filesystem_error& e) {
        EXPECT_NE(std::string(e.what()).find("onebit-cannot-write-here"), std::string::npos);
    }
}

TEST(ReadMetrics, MissingFileAndBadHeader) {
    TempDir tmp;
    EXPECT_THROW(read_metrics(tmp / "nope.csv"), std::filesystem::filesystem_error);
    std::ofstream(tmp / "bad.csv") << "stage,acc\n0,1\n";
    EXPECT_THROW(read_metrics(tmp / "bad.csv"), std::runtime_error);
}
