#include "onebit/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "binary_io.hpp"
#include "onebit/errors.hpp"
#include "onebit/random.hpp"

namespace onebit {

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
    for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
    return counts;
}

GaussianMixture make_mixture(int classes, std::size_t dim, double separation, std::uint64_t seed) {
    if (classes < 2) throw DomainError("classes must be >= 2");
    if (dim < 2) throw DomainError("dim must be >= 2");
    if (!(separation > 0.0)) throw DomainError("separation must be > 0");

    GaussianMixture m{classes, dim, separation, {}};
    m.means.resize(static_cast<std::size_t>(classes) * dim);
    Rng rng(derive_seed(seed, 0));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : m.means) v = separation * normal(rng);
    return m;
}

Dataset sample_mixture(const GaussianMixture& mixture, std::size_t per_class, std::uint64_t seed,
                       std::string name) {
    if (per_class < 2) throw DomainError("per_class must be >= 2");
    const auto classes = static_cast<std::size_t>(mixture.classes);
    Dataset d;
    d.name = std::move(name);
    d.dim = mixture.dim;
    d.classes = mixture.classes;
    d.features.reserve(classes * per_class * mixture.dim);
    d.labels.reserve(classes * per_class);

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t c = 0; c < classes; ++c) {
        const double* mean = mixture.means.data() + c * mixture.dim;
        for (std::size_t n = 0; n < per_class; ++n) {
            for (std::size_t j = 0; j < mixture.dim; ++j) {
                d.features.push_back(static_cast<float>(mean[j] + normal(rng)));
            }
            d.labels.push_back(static_cast<int>(c));
        }
    }
    return d;
}

Dataset generate_synthetic(int classes, std::size_t per_class, std::size_t dim, double separation,
                           std::uint64_t seed) {
    return sample_mixture(make_mixture(classes, dim, separation, seed), per_class, derive_seed(seed, 1),
                          "synthetic-train");
}

Dataset generate_heldout(int classes, std::size_t per_class, std::size_t dim, double separation,
                         std::uint64_t seed) {
    return sample_mixture(make_mixture(classes, dim, separation, seed), per_class, derive_seed(seed, 2),
                          "synthetic-test");
}

// ---------------------------------------------------------------------------
// Serialization

std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
    if (d.classes < 2 || d.classes > std::numeric_limits<std::uint16_t>::max()) {
        throw DomainError("class count not representable in the dataset format");
    }
    if (d.features.size() != d.size() * d.dim) {
        throw ShapeError("feature buffer does not match N*d");
    }
    detail::ByteWriter w;
    w.magic("OBS1");
    w.u32(static_cast<std::uint32_t>(d.size()));
    w.u32(static_cast<std::uint32_t>(d.dim));
    w.u32(static_cast<std::uint32_t>(d.classes));
    for (float f : d.features) w.f32(f);
    for (int y : d.labels) {
        if (y < 0 || y >= d.classes) throw DomainError("label out of range");
        w.u16(static_cast<std::uint16_t>(y));
    }
    return std::move(w).take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes, std::string name) {
    detail::ByteReader r(bytes);
    r.expect_magic("OBS1");
    const std::uint32_t n = r.u32("N");
    const std::uint32_t dim = r.u32("d");
    const std::size_t classes_offset = r.offset();
    const std::uint32_t classes = r.u32("C");
    if (classes < 2 || classes > std::numeric_limits<std::uint16_t>::max()) {
        throw FormatError("invalid class count " + std::to_string(classes), classes_offset);
    }

    const std::size_t payload = static_cast<std::size_t>(n) * dim * 4 + static_cast<std::size_t>(n) * 2;
    r.need(payload, "feature and label payload");

    Dataset d;
    d.name = std::move(name);
    d.dim = dim;
    d.classes = static_cast<int>(classes);
    d.features.resize(static_cast<std::size_t>(n) * dim);
    for (float& f : d.features) f = r.f32("feature");
    d.labels.resize(n);
    for (int& y : d.labels) {
        const std::size_t at = r.offset();
        const std::uint16_t v = r.u16("label");
        if (v >= classes) {
            throw FormatError("label " + std::to_string(v) + " >= C=" + std::to_string(classes), at);
        }
        y = v;
    }
    if (!r.at_end()) throw FormatError("trailing bytes after label block", r.offset());
    return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    detail::write_file(path, encode_dataset(d));
}

Dataset load_dataset(const std::filesystem::path& path) {
    return decode_dataset(detail::read_file(path), path.stem().string());
}

// ---------------------------------------------------------------------------
// Budget

BudgetPlan plan_budget(double total_bits, int classes, std::size_t n_full, bool allow_overshoot) {
    if (classes < 2) throw DomainError("classes must be >= 2");
    if (!(total_bits >= 0.0)) throw BudgetError("total bits must be non-negative");
    const double cost_full = std::log2(static_cast<double>(classes));
    const double full_bits = static_cast<double>(n_full) * cost_full;
    if (full_bits > total_bits) {
        throw BudgetError(std::to_string(n_full) + " full labels need " + std::to_string(full_bits) +
                          " bits, budget is " + std::to_string(total_bits));
    }
    BudgetPlan plan;
    plan.n_full = n_full;
    plan.total_bits = total_bits;
    const double left = total_bits - full_bits;
    plan.n_queries = static_cast<std::size_t>(std::floor(left));
    if (allow_overshoot) {
        plan.n_queries = static_cast<std::size_t>(std::ceil(left / 1000.0)) * 1000;
    }
    plan.planned_bits = full_bits + static_cast<double>(plan.n_queries);
    return plan;
}

BitBudget::BitBudget(double total_bits, int classes)
    : total_(total_bits), cost_full_(std::log2(static_cast<double>(classes))) {
    if (classes < 2) throw DomainError("classes must be >= 2");
    if (!(total_bits >= 0.0)) throw BudgetError("total bits must be non-negative");
}

double BitBudget::spent_bits() const noexcept {
    return static_cast<double>(n_full_) * cost_full_ + static_cast<double>(n_queries_);
}

std::size_t BitBudget::remaining_queries() const noexcept {
    const double left = remaining_bits();
    return left <= 0.0 ? 0 : static_cast<std::size_t>(std::floor(left));
}

void BitBudget::charge_full(std::size_t count) {
    const double after = static_cast<double>(n_full_ + count) * cost_full_ + static_cast<double>(n_queries_);
    if (after > total_) {
        throw BudgetError("full labels would exceed the budget: " + std::to_string(after) + " > " +
                          std::to_string(total_));
    }
    n_full_ += count;
}

void BitBudget::charge_query() {
    if (spent_bits() + cost_query() > total_) {
        throw QuotaError("query quota exhausted: " + std::to_string(spent_bits()) + " of " +
                         std::to_string(total_) + " bits spent");
    }
    ++n_queries_;
}

// ---------------------------------------------------------------------------
// Split

SplitState::SplitState(std::size_t n)
    : membership_(n, Membership::Unlabeled), label_(n, -1), queried_(n, 0) {}

int SplitState::positive_label(std::size_t i) const {
    const Membership m = membership_.at(i);
    if (m != Membership::Full && m != Membership::Positive) {
        throw ProtocolError("sample " + std::to_string(i) + " has no positive label");
    }
    return label_[i];
}

int SplitState::negative_label(std::size_t i) const {
    if (membership_.at(i) != Membership::Negative) {
        throw ProtocolError("sample " + std::to_string(i) + " has no negative label");
    }
    return label_[i];
}

std::vector<std::size_t> SplitState::members(Membership m) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < membership_.size(); ++i) {
        if (membership_[i] == m) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> SplitState::remaining() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < membership_.size(); ++i) {
        if (membership_[i] == Membership::Negative || membership_[i] == Membership::Unlabeled) out.push_back(i);
    }
    return out;
}

std::size_t SplitState::count(Membership m) const {
    return static_cast<std::size_t>(std::count(membership_.begin(), membership_.end(), m));
}

void SplitState::assign_full(std::size_t sample, int label) {
    if (membership_.at(sample) != Membership::Unlabeled || queried_[sample]) {
        throw ProtocolError("sample " + std::to_string(sample) + " is not fresh and cannot join S");
    }
    membership_[sample] = Membership::Full;
    label_[sample] = label;
}

void SplitState::apply_answer(std::size_t sample, int guess, bool answer, bool allow_requery) {
    const Membership m = membership_.at(sample);
    if (m == Membership::Full) {
        throw ProtocolError("sample " + std::to_string(sample) + " already has a full label");
    }
    if (m == Membership::Positive) {
        throw ProtocolError("sample " + std::to_string(sample) + " already has a positive label");
    }
    if (queried_[sample] && !allow_requery) {
        throw ProtocolError("sample " + std::to_string(sample) + " can only be guessed once");
    }
    queried_[sample] = 1;
    membership_[sample] = answer ? Membership::Positive : Membership::Negative;
    label_[sample] = guess;
}

std::pair<SplitState, BitBudget> make_initial_split(const Dataset& d, std::size_t n_full, double total_bits,
                                                    std::uint64_t seed) {
    if (n_full > d.size()) throw DomainError("n_full exceeds dataset size");
    BitBudget budget(total_bits, d.classes);
    budget.charge_full(n_full);

    SplitState split(d.size());
    Rng rng(seed);
    const auto classes = static_cast<std::size_t>(d.classes);
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < d.size(); ++i) by_class[static_cast<std::size_t>(d.labels[i])].push_back(i);

    const std::size_t per_class = n_full / classes;
    std::vector<std::size_t> leftovers;
    std::size_t taken = 0;
    for (auto& members : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        const std::size_t k = std::min(per_class, members.size());
        for (std::size_t j = 0; j < k; ++j) split.assign_full(members[j], d.labels[members[j]]);
        taken += k;
        leftovers.insert(leftovers.end(), members.begin() + static_cast<std::ptrdiff_t>(k), members.end());
    }
    std::sort(leftovers.begin(), leftovers.end());
    std::shuffle(leftovers.begin(), leftovers.end(), rng);
    for (std::size_t j = 0; taken < n_full; ++j, ++taken) {
        split.assign_full(leftovers[j], d.labels[leftovers[j]]);
    }
    return {std::move(split), budget};
}

}  // namespace onebit
