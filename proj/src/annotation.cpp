#include "onebit/annotation.hpp"

#include <algorithm>
#include <ostream>
#include <set>
#include <string>

#include "onebit/errors.hpp"

namespace onebit {

Oracle::Oracle(std::vector<int> truth, double noise_rate, std::uint64_t seed)
    : truth_(std::move(truth)), noise_rate_(noise_rate), rng_(seed) {
    if (!(noise_rate >= 0.0 && noise_rate < 0.5)) {
        throw DomainError("oracle noise rate must lie in [0, 0.5)");
    }
}

bool Oracle::answer(std::size_t sample, int guess) {
    const bool truthful = truth_.at(sample) == guess;
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    return u < noise_rate_ ? !truthful : truthful;
}

bool QueryLog::contains(std::size_t sample) const {
    return sample < by_sample_.size() && !by_sample_[sample].empty();
}

std::vector<QueryRecord> QueryLog::sample_records(std::size_t sample) const {
    std::vector<QueryRecord> out;
    if (sample >= by_sample_.size()) return out;
    for (std::size_t idx : by_sample_[sample]) out.push_back(records_[idx]);
    return out;
}

std::vector<int> QueryLog::rejected_classes(std::size_t sample) const {
    std::vector<int> out;
    for (const auto& r : sample_records(sample)) {
        if (!r.answer) out.push_back(r.guess);
    }
    return out;
}

std::vector<QueryRecord> QueryLog::stage_records(int stage) const {
    std::vector<QueryRecord> out;
    std::copy_if(records_.begin(), records_.end(), std::back_inserter(out),
                 [stage](const QueryRecord& r) { return r.stage == stage; });
    return out;
}

void QueryLog::append(const QueryRecord& r) {
    if (r.sample >= by_sample_.size()) by_sample_.resize(r.sample + 1);
    by_sample_[r.sample].push_back(records_.size());
    records_.push_back(r);
}

void QueryLog::write_csv(std::ostream& out) const {
    out << "stage,sample,guess,answer\n";
    for (const auto& r : records_) {
        out << r.stage << ',' << r.sample << ',' << r.guess << ',' << (r.answer ? "yes" : "no") << '\n';
    }
}

namespace {

void check_pair(const QueryLog& log, std::size_t sample, int guess, bool allow_requery) {
    if (!log.contains(sample)) return;
    if (!allow_requery) {
        throw ProtocolError("sample " + std::to_string(sample) + " was already queried");
    }
    for (const auto& r : log.sample_records(sample)) {
        if (r.guess == guess || r.answer) {
            throw ProtocolError("sample " + std::to_string(sample) + " already answered for class " +
                                std::to_string(r.guess));
        }
    }
}

}  // namespace

QueryRecord answer_query(Oracle& oracle, BitBudget& budget, QueryLog& log, std::size_t sample, int guess,
                         int stage, bool allow_requery) {
    check_pair(log, sample, guess, allow_requery);
    budget.charge_query();
    QueryRecord r{sample, guess, oracle.answer(sample, guess), stage, BitBudget::cost_query()};
    log.append(r);
    return r;
}

std::vector<QueryRecord> batch_query(Oracle& oracle, BitBudget& budget, QueryLog& log,
                                     std::span<const std::pair<std::size_t, int>> pairs, int stage,
                                     bool allow_requery) {
    if (pairs.size() > budget.remaining_queries()) {
        throw QuotaError("batch of " + std::to_string(pairs.size()) + " queries exceeds remaining quota of " +
                         std::to_string(budget.remaining_queries()));
    }
    std::set<std::size_t> seen;
    for (const auto& [sample, guess] : pairs) {
        if (!seen.insert(sample).second) {
            throw ProtocolError("sample " + std::to_string(sample) + " appears twice in one batch");
        }
        check_pair(log, sample, guess, allow_requery);
    }
    std::vector<QueryRecord> out;
    out.reserve(pairs.size());
    for (const auto& [sample, guess] : pairs) {
        out.push_back(answer_query(oracle, budget, log, sample, guess, stage, allow_requery));
    }
    return out;
}

}  // namespace onebit
