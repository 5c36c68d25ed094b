#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "onebit/annotation.hpp"
#include "onebit/errors.hpp"

using namespace onebit;

namespace {

std::vector<int> cyclic_truth(std::size_t n, int classes) {
    std::vector<int> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
    return t;
}

}  // namespace

TEST(Oracle, NoiselessAnswersAreTruthful) {
    Oracle o(cyclic_truth(100, 10), 0.0, 1);
    for (std::size_t i = 0; i < 100; ++i) {
        for (int g = 0; g < 10; ++g) EXPECT_EQ(o.answer(i, g), g == static_cast<int>(i % 10));
    }
}

TEST(Oracle, RejectsInvalidNoise) {
    EXPECT_THROW(Oracle(cyclic_truth(4, 2), 0.5, 1), DomainError);
    EXPECT_THROW(Oracle(cyclic_truth(4, 2), -0.1, 1), DomainError);
}

TEST(Oracle, HumanNoiseRateWithinBinomialBand) {
    const std::size_t n = 100000;
    Oracle o(std::vector<int>(n, 0), kHumanNoiseRate, 3);
    std::size_t flips = 0;
    for (std::size_t i = 0; i < n; ++i) flips += o.answer(i, 0) ? 0 : 1;
    const double rate = static_cast<double>(flips) / static_cast<double>(n);
    EXPECT_GE(rate, 0.075);
    EXPECT_LE(rate, 0.079);
}

TEST(Oracle, FalseYesRateOnWrongGuesses) {
    const std::size_t n = 20000;
    Oracle o(std::vector<int>(n, 0), kHumanNoiseRate, 8);
    std::size_t yes = 0;
    for (std::size_t i = 0; i < n; ++i) yes += o.answer(i, 1) ? 1 : 0;
    const double q = kHumanNoiseRate;
    const double sigma = std::sqrt(q * (1 - q) / static_cast<double>(n));
    EXPECT_NEAR(static_cast<double>(yes) / static_cast<double>(n), q, 3 * sigma);
}

TEST(Oracle, ReplayIsDeterministic) {
    Oracle a(cyclic_truth(500, 7), 0.2, 11);
    Oracle b(cyclic_truth(500, 7), 0.2, 11);
    for (std::size_t i = 0; i < 500; ++i) EXPECT_EQ(a.answer(i, 3), b.answer(i, 3));
}

TEST(AnswerQuery, ChargesOneBitAndLogs) {
    Oracle o(cyclic_truth(10, 5), 0.0, 1);
    BitBudget b(100.0, 5);
    QueryLog log;
    const auto yes = answer_query(o, b, log, 3, 3, 1);
    EXPECT_TRUE(yes.answer);
    const auto no = answer_query(o, b, log, 4, 0, 1);
    EXPECT_FALSE(no.answer);
    EXPECT_EQ(b.spent_bits(), 2.0);
    EXPECT_EQ(log.size(), 2u);
    EXPECT_EQ(log.records()[0], (QueryRecord{3, 3, true, 1, 1.0}));
}

TEST(AnswerQuery, ExhaustedBudgetIsQuotaError) {
    Oracle o(cyclic_truth(10, 5), 0.0, 1);
    BitBudget b(1.5, 5);
    QueryLog log;
    answer_query(o, b, log, 0, 0, 1);
    EXPECT_THROW(answer_query(o, b, log, 1, 0, 1), QuotaError);
    EXPECT_EQ(log.size(), 1u);
}

TEST(AnswerQuery, DuplicateSampleIsProtocolError) {
    Oracle o(cyclic_truth(10, 5), 0.0, 1);
    BitBudget b(100.0, 5);
    QueryLog log;
    answer_query(o, b, log, 2, 0, 1);
    EXPECT_THROW(answer_query(o, b, log, 2, 1, 2), ProtocolError);
    EXPECT_EQ(b.spent_bits(), 1.0);
}

TEST(AnswerQuery, RequeryAllowsNewGuessOnly) {
    Oracle o(cyclic_truth(10, 5), 0.0, 1);
    BitBudget b(100.0, 5);
    QueryLog log;
    answer_query(o, b, log, 2, 0, 1, true);
    EXPECT_THROW(answer_query(o, b, log, 2, 0, 2, true), ProtocolError);
    EXPECT_TRUE(answer_query(o, b, log, 2, 2, 2, true).answer);
    EXPECT_THROW(answer_query(o, b, log, 2, 3, 3, true), ProtocolError);
    EXPECT_EQ(log.rejected_classes(2), std::vector<int>{0});
    EXPECT_EQ(log.sample_records(2).size(), 2u);
}

TEST(AnswerQuery, LedgerMatchesLog) {
    Oracle o(cyclic_truth(50, 5), 0.1, 1);
    BitBudget b(200.0, 5);
    b.charge_full(7);
    QueryLog log;
    for (std::size_t i = 0; i < 50; ++i) {
        answer_query(o, b, log, i, 1, 1);
        EXPECT_NEAR(b.spent_bits(), 7 * std::log2(5.0) + static_cast<double>(log.size()), 1e-12);
    }
}

TEST(BatchQuery, EmptySequence) {
    Oracle o(cyclic_truth(10, 5), 0.0, 1);
    BitBudget b(10.0, 5);
    QueryLog log;
    EXPECT_TRUE(batch_query(o, b, log, {}, 1).empty());
    EXPECT_EQ(b.spent_bits(), 0.0);
}

TEST(BatchQuery, OverQuotaChargesNothing) {
    Oracle o(cyclic_truth(10, 5), 0.0, 1);
    BitBudget b(3.0, 5);
    QueryLog log;
    const std::vector<std::pair<std::size_t, int>> pairs{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    EXPECT_THROW(batch_query(o, b, log, pairs, 1), QuotaError);
    EXPECT_EQ(b.spent_bits(), 0.0);
    EXPECT_EQ(log.size(), 0u);
}

TEST(BatchQuery, DuplicatesRejectedBeforeIssuing) {
    Oracle o(cyclic_truth(10, 5), 0.0, 1);
    BitBudget b(30.0, 5);
    QueryLog log;
    const std::vector<std::pair<std::size_t, int>> pairs{{0, 0}, {1, 1}, {0, 2}};
    EXPECT_THROW(batch_query(o, b, log, pairs, 1), ProtocolError);
    EXPECT_EQ(b.spent_bits(), 0.0);
}

TEST(BatchQuery, PreservesOrder) {
    Oracle o(cyclic_truth(10, 5), 0.0, 1);
    BitBudget b(30.0, 5);
    QueryLog log;
    const std::vector<std::pair<std::size_t, int>> pairs{{7, 2}, {1, 1}, {4, 0}};
    const auto r = batch_query(o, b, log, pairs, 2);
    ASSERT_EQ(r.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(r[i].sample, pairs[i].first);
        EXPECT_EQ(r[i].guess, pairs[i].second);
        EXPECT_EQ(r[i].stage, 2);
    }
    EXPECT_EQ(log.stage_records(2), r);
}

TEST(QueryLog, CsvFormat) {
    Oracle o(cyclic_truth(10, 5), 0.0, 1);
    BitBudget b(30.0, 5);
    QueryLog log;
    answer_query(o, b, log, 3, 3, 1);
    answer_query(o, b, log, 5, 1, 2);
    std::ostringstream out;
    log.write_csv(out);
    EXPECT_EQ(out.str(), "stage,sample,guess,answer\n1,3,3,yes\n2,5,1,no\n");
}
