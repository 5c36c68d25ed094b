#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace onebit {

/// Feature matrix with ground-truth labels. Features are float32 row-major,
/// matching the on-disk layout.
struct Dataset {
    std::string name;
    std::size_t dim = 0;
    int classes = 0;
    std::vector<float> features;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const float> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
    std::vector<std::size_t> class_counts() const;

    bool operator==(const Dataset&) const = default;
};

/// Isotropic Gaussian mixture with one mean per class.
struct GaussianMixture {
    int classes = 0;
    std::size_t dim = 0;
    double separation = 0.0;
    std::vector<double> means;  // classes x dim, row-major
};

GaussianMixture make_mixture(int classes, std::size_t dim, double separation, std::uint64_t seed);

/// Draws exactly `per_class` samples per class, ordered by class.
Dataset sample_mixture(const GaussianMixture& mixture, std::size_t per_class, std::uint64_t seed,
                       std::string name = "synthetic");

/// Training draw of the mixture seeded by `seed`.
Dataset generate_synthetic(int classes, std::size_t per_class, std::size_t dim, double separation,
                           std::uint64_t seed);

/// Held-out draw from the same mixture as generate_synthetic(..., seed), using
/// an independent sample stream.
Dataset generate_heldout(int classes, std::size_t per_class, std::size_t dim, double separation,
                         std::uint64_t seed);

/// Binary format, little-endian: "OBS1", u32 N, u32 d, u32 C, N*d float32
/// features row-major, N u16 labels.
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dataset(const Dataset& d);
Dataset decode_dataset(std::span<const std::uint8_t> bytes, std::string name = "dataset");

// ---------------------------------------------------------------------------
// Supervision budget

struct BudgetPlan {
    std::size_t n_full = 0;
    std::size_t n_queries = 0;
    double total_bits = 0.0;
    double planned_bits = 0.0;  // n_full*log2(C) + n_queries
};

/// Splits `total_bits` into `n_full` full labels plus as many one-bit queries
/// as fit. With `allow_overshoot` the query count is rounded up to the next
/// thousand, the granularity at which budget tables are usually reported, and
/// may exceed the budget by less than 1000 bits.
BudgetPlan plan_budget(double total_bits, int classes, std::size_t n_full,
                       bool allow_overshoot = false);

/// Bits spent so far. Full labels cost log2(C), queries cost 1.
class BitBudget {
public:
    BitBudget(double total_bits, int classes);

    double total_bits() const noexcept { return total_; }
    double spent_bits() const noexcept;
    double remaining_bits() const noexcept { return total_ - spent_bits(); }
    double cost_full() const noexcept { return cost_full_; }
    static constexpr double cost_query() noexcept { return 1.0; }
    std::size_t n_full() const noexcept { return n_full_; }
    std::size_t n_queries() const noexcept { return n_queries_; }

    /// Whole queries still affordable.
    std::size_t remaining_queries() const noexcept;

    void charge_full(std::size_t count);
    void charge_query();

private:
    double total_;
    double cost_full_;
    std::size_t n_full_ = 0;
    std::size_t n_queries_ = 0;
};

// ---------------------------------------------------------------------------
// Partition of the training pool

enum class Membership : std::uint8_t { Full, Positive, Negative, Unlabeled };

/// Partition of [0, N) into full labels (S), correct guesses (O+), incorrect
/// guesses (O-) and unlabeled samples (U). Each sample has exactly one
/// membership, so the four sets are disjoint and cover the pool by
/// construction. O- samples carry one negative class.
class SplitState {
public:
    explicit SplitState(std::size_t n);

    std::size_t size() const noexcept { return membership_.size(); }
    int stage() const noexcept { return stage_; }
    void advance_stage() noexcept { ++stage_; }

    Membership membership(std::size_t i) const { return membership_.at(i); }
    /// Known class for S and O+ samples.
    int positive_label(std::size_t i) const;
    /// Stored negative class for O- samples.
    int negative_label(std::size_t i) const;
    bool queried(std::size_t i) const { return queried_.at(i) != 0; }

    std::vector<std::size_t> full() const { return members(Membership::Full); }
    std::vector<std::size_t> positives() const { return members(Membership::Positive); }
    std::vector<std::size_t> negatives() const { return members(Membership::Negative); }
    std::vector<std::size_t> unlabeled() const { return members(Membership::Unlabeled); }
    /// O- and U: samples without an accurate label.
    std::vector<std::size_t> remaining() const;
    std::size_t count(Membership m) const;

    /// Moves an unlabeled sample into S with its true label.
    void assign_full(std::size_t sample, int label);

    /// Records a yes/no answer. "yes" moves the sample to O+ with label
    /// `guess`; "no" moves it to O- with negative class `guess`. Throws
    /// ProtocolError for samples in S or O+, and for an already queried sample
    /// unless `allow_requery` is set (the stored negative is then replaced).
    void apply_answer(std::size_t sample, int guess, bool answer, bool allow_requery = false);

    bool operator==(const SplitState&) const = default;

private:
    std::vector<std::size_t> members(Membership m) const;

    std::vector<Membership> membership_;
    std::vector<int> label_;
    std::vector<std::uint8_t> queried_;
    int stage_ = 0;
};

/// Class-stratified initial full-label set: floor(n_full/C) random samples from
/// each class, remainder drawn uniformly from the rest. Charges the budget.
std::pair<SplitState, BitBudget> make_initial_split(const Dataset& d, std::size_t n_full,
                                                    double total_bits, std::uint64_t seed);

}  // namespace onebit
