#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "onebit/data.hpp"
#include "onebit/random.hpp"

namespace onebit {

/// Labeler precision measured for human yes/no answers was 92.3%.
inline constexpr double kHumanNoiseRate = 0.077;

/// Simulated yes/no labeler. Each answer is truthful except with probability
/// `noise_rate`, symmetric in yes/no.
class Oracle {
public:
    Oracle(std::vector<int> truth, double noise_rate, std::uint64_t seed);

    /// Answers "does `sample` belong to class `guess`?". Consumes one draw from
    /// the oracle's stream per call, so answers depend only on the seed and the
    /// query sequence.
    bool answer(std::size_t sample, int guess);

    double noise_rate() const noexcept { return noise_rate_; }
    int truth(std::size_t sample) const { return truth_.at(sample); }

private:
    std::vector<int> truth_;
    double noise_rate_;
    Rng rng_;
};

struct QueryRecord {
    std::size_t sample = 0;
    int guess = 0;
    bool answer = false;
    int stage = 0;
    double bit_cost = 1.0;

    bool operator==(const QueryRecord&) const = default;
};

/// Append-only record of every query issued in an experiment.
class QueryLog {
public:
    const std::vector<QueryRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool contains(std::size_t sample) const;
    /// Classes already answered "no" for `sample`, in query order.
    std::vector<int> rejected_classes(std::size_t sample) const;
    std::vector<QueryRecord> stage_records(int stage) const;
    /// Records for one sample, in query order.
    std::vector<QueryRecord> sample_records(std::size_t sample) const;

    void append(const QueryRecord& r);

    /// CSV with header "stage,sample,guess,answer"; answers are "yes"/"no".
    void write_csv(std::ostream& out) const;

private:
    std::vector<QueryRecord> records_;
    std::vector<std::vector<std::size_t>> by_sample_;  // record indices per sample
};

/// Issues one query and charges one bit. Throws QuotaError when the budget
/// cannot cover it and ProtocolError for a sample already in the log (with
/// `allow_requery`, only a repeated (sample, guess) pair is rejected).
QueryRecord answer_query(Oracle& oracle, BitBudget& budget, QueryLog& log, std::size_t sample, int guess,
                         int stage, bool allow_requery = false);

/// Validates the whole sequence first (quota, duplicates, prior queries), then
/// issues the queries in order. Nothing is charged when validation fails.
std::vector<QueryRecord> batch_query(Oracle& oracle, BitBudget& budget, QueryLog& log,
                                     std::span<const std::pair<std::size_t, int>> pairs, int stage,
                                     bool allow_requery = false);

}  // namespace onebit
