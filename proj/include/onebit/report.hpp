#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "onebit/annotation.hpp"
#include "onebit/data.hpp"
#include "onebit/model.hpp"

namespace onebit {

/// Argmax predictions of `model` on every sample of `d`.
std::vector<int> predict(const Parameters& model, const Dataset& d);

/// Top-1 accuracy of `model` (pass the teacher) on a held-out set.
double evaluate(const Parameters& model, const Dataset& test);

/// Accuracy of precomputed predictions; throws on an empty set.
double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Samples grouped by how many predictions their predicted class received,
/// relative to the balanced count mu = N/C:
///   g0: classes with count < mu - band
///   g1: classes with count in [mu - band, mu + band]
///   g2: classes with count > mu + band
/// Each group reports the summed count of its classes, so g0 + g1 + g2 = N.
/// The lower edge is clamped at 0.
struct GroupCounts {
    std::size_t g0 = 0;
    std::size_t g1 = 0;
    std::size_t g2 = 0;

    bool operator==(const GroupCounts&) const = default;
};

GroupCounts class_group_histogram(std::span<const int> predicted, int classes, double band);

/// max(1, round(0.1 * N / C)).
double default_band(std::size_t n, int classes);

struct StageResult {
    int stage = 0;
    double accuracy = 0.0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    /// Cumulative bits spent after this stage.
    double bits = 0.0;
    /// Share of this stage's queries answered "yes"; 0 when none were issued.
    double guess_accuracy = 0.0;
    /// |S| + |O+| after this stage.
    std::size_t n_labeled = 0;
    GroupCounts groups;
    /// Training mode used for this stage's retraining.
    std::string mode;

    bool operator==(const StageResult&) const = default;
};

struct BitsLedger {
    double total_bits = 0.0;
    double spent_bits = 0.0;
    std::size_t n_full = 0;
    std::size_t n_queries = 0;
};

struct Report {
    std::string name;
    std::string arm;
    nlohmann::json config;
    std::vector<StageResult> stages;
    BitsLedger ledger;
    QueryLog log;
    /// Over every training batch: largest teacher probability on a suppressed
    /// negative class, and largest softmax normalization error.
    double max_suppressed_prob = 0.0;
    double max_normalization_error = 0.0;

    double final_accuracy() const { return stages.empty() ? 0.0 : stages.back().accuracy; }
};

/// Per-stage accuracies in percent with two decimals joined by arrows, e.g.
/// "51.47→67.82→73.76".
std::string accuracy_arrow(std::span<const StageResult> stages);

/// Writes metrics.csv, groups.csv, querylog.csv, config.json and summary.json
/// into `dir` (created if needed). Output is byte-identical for identical
/// reports.
void write_report(const Report& report, const std::filesystem::path& dir);

/// Parses metrics.csv (stage,accuracy,n_pos,n_neg,bits).
std::vector<StageResult> read_metrics(const std::filesystem::path& path);
/// Parses groups.csv (stage,g0,g1,g2).
std::vector<GroupCounts> read_groups(const std::filesystem::path& path);

struct ReportSummary {
    std::string name;
    std::string arm;
    BitsLedger ledger;
    double final_accuracy = 0.0;
    std::size_t stage_count = 0;
};

ReportSummary read_summary(const std::filesystem::path& dir);

}  // namespace onebit
