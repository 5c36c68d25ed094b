#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "onebit/annotation.hpp"
#include "onebit/config.hpp"
#include "onebit/data.hpp"
#include "onebit/model.hpp"
#include "onebit/report.hpp"

namespace onebit {

struct ExperimentData {
    Dataset train;
    Dataset test;
};

/// Generates or loads the train/test pair named by the config.
ExperimentData load_experiment_data(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Training

/// Rows fed to one training run, with their labels (-1 when absent).
struct TrainingRows {
    std::vector<std::size_t> rows;
    std::vector<int> positive;
    std::vector<int> negative;

    std::size_t size() const noexcept { return rows.size(); }
};

/// Every sample: S and O+ with their class, O- with its negative class.
TrainingRows semi_supervised_rows(const SplitState& split);
/// Only S, O+ and O- samples.
TrainingRows labeled_rows(const SplitState& split);

struct TrainStats {
    double max_suppressed_prob = 0.0;
    double max_normalization_error = 0.0;
    std::size_t steps = 0;
    double last_loss = 0.0;

    void merge(const TrainStats& other);
};

/// Minibatch SGD over `epochs` passes with EMA teacher updates after every
/// step. Mean-teacher runs ramp lambda linearly over the first
/// `spec.rampup_fraction` of the epochs. `global_step` counts steps across
/// calls; the EMA decay is capped at 1 - 1/(step + 1) so a fresh teacher
/// tracks the student early on.
TrainStats train_model(ClassifierState& state, const Dataset& data, const TrainingRows& rows, TrainingMode mode,
                       const LossConfig& loss, const TrainingSpec& spec, std::size_t epochs, std::uint64_t seed,
                       std::size_t& global_step);

// ---------------------------------------------------------------------------
// Multi-stage protocol

/// One experiment: owns the split, budget, oracle, query log and model.
/// Not thread-safe; run independent arms in separate instances.
class Experiment {
public:
    Experiment(ExperimentConfig config, ExperimentData data);

    /// Stage 0: loads or trains M_0 and records its result.
    const StageResult& train_initial();

    /// Stage t >= 1: score the remaining pool with the teacher, select `quota`
    /// samples, guess each one's argmax class, query the oracle, update the
    /// split and retrain.
    const StageResult& run_stage(std::size_t quota);

    /// One pure one-bit stage: queries `query_fraction` of the pool without a
    /// positive label (O- samples may be asked again with a new class), then
    /// retrains semi-supervised while |O+|/N is below the switch threshold and
    /// by fine-tuning once it is reached.
    const StageResult& run_pure_stage();

    Report report() const;

    const ExperimentConfig& config() const noexcept { return config_; }
    const ExperimentData& data() const noexcept { return data_; }
    const SplitState& split() const noexcept { return split_; }
    const BitBudget& budget() const noexcept { return budget_; }
    const QueryLog& log() const noexcept { return log_; }
    const ClassifierState& model() const;
    const std::vector<StageResult>& stages() const noexcept { return stages_; }
    const TrainStats& train_stats() const noexcept { return stats_; }

    Architecture architecture() const;
    /// Training mode for pure one-bit stages given the current O+ share.
    static TrainingMode pure_mode_for(double positive_share, double switch_threshold);

private:
    ClassifierState fresh_model() const;
    LossConfig stage_loss() const;
    void retrain(TrainingMode mode, std::size_t epochs, std::uint64_t seed);
    Eigen::MatrixXd pool_scores(const std::vector<std::size_t>& candidates, bool exclude_rejected) const;
    const StageResult& record_stage(std::size_t n_pos, std::size_t n_neg, TrainingMode mode);
    void query(const std::vector<std::size_t>& chosen, const Eigen::MatrixXd& probs,
               const std::vector<std::size_t>& candidates, bool allow_requery, std::size_t& n_pos,
               std::size_t& n_neg);

    ExperimentConfig config_;
    ExperimentData data_;
    SplitState split_;
    BitBudget budget_;
    Oracle oracle_;
    QueryLog log_;
    std::optional<ClassifierState> model_;
    std::vector<StageResult> stages_;
    TrainStats stats_;
    std::size_t global_step_ = 0;
    int stage_ = 0;
};

// Each runner copies the final student/teacher pair into `final_model` when
// it is non-null.

/// train_initial followed by one run_stage per entry of stage_quotas.
Report run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                      ClassifierState* final_model = nullptr);

/// Pure one-bit mode: checkpoint start, no full labels, up to pure_stages
/// stages; stops early once accuracy changes by less than `plateau` or the
/// pool or budget is exhausted.
Report run_pure_one_bit(const ExperimentConfig& config, const ExperimentData& data,
                        ClassifierState* final_model = nullptr);

/// Baseline arm: floor(total_bits / log2 C) full labels, trained once for the
/// one-bit arm's total epoch count.
Report run_baseline(const ExperimentConfig& config, const ExperimentData& data,
                    ClassifierState* final_model = nullptr);

/// Dispatches on arm and mode.
Report run(const ExperimentConfig& config, const ExperimentData& data, ClassifierState* final_model = nullptr);

}  // namespace onebit
