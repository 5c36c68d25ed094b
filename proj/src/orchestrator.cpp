#include "onebit/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "onebit/errors.hpp"
#include "onebit/random.hpp"
#include "onebit/sampling.hpp"
#include "onebit/theory.hpp"

namespace onebit {

namespace {

// Seed streams derived from the experiment seed.
enum Stream : std::uint64_t {
    kSplitStream = 1,
    kInitStream = 2,
    kInitialTrainStream = 3,
    kOracleStream = 4,
    kSelectStream = 100,
    kUncertaintyStream = 200,
    kStageTrainStream = 300,
};

const char* mode_name(TrainingMode m) { return m == TrainingMode::MeanTeacher ? "mean_teacher" : "finetune"; }

std::size_t total_quota(const ExperimentConfig& c) {
    return std::accumulate(c.stage_quotas.begin(), c.stage_quotas.end(), std::size_t{0});
}

double budget_for(const ExperimentConfig& c, const Dataset& train) {
    double total = resolve_total_bits(c, train.classes, train.size());
    if (c.allow_overshoot && c.arm == Arm::OneBit && !c.pure_one_bit) {
        const double planned = static_cast<double>(c.n_full) * std::log2(static_cast<double>(train.classes)) +
                               static_cast<double>(total_quota(c));
        total = std::max(total, planned);
    }
    return total;
}

std::size_t full_labels_for(const ExperimentConfig& c, const Dataset& train, double total_bits) {
    if (c.arm == Arm::OneBit) return c.n_full;
    const double cost = std::log2(static_cast<double>(train.classes));
    // The epsilon absorbs rounding in total = k * log2(C).
    const auto n = static_cast<std::size_t>(std::floor(total_bits / cost + 1e-9));
    return std::min(n, train.size());
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& config) {
    if (const auto& s = config.dataset.synthetic) {
        return {generate_synthetic(s->classes, s->per_class, s->dim, s->separation, s->seed),
                generate_heldout(s->classes, s->test_per_class, s->dim, s->separation, s->seed)};
    }
    ExperimentData d{load_dataset(config.dataset.train_path), load_dataset(config.dataset.test_path)};
    if (d.train.dim != d.test.dim || d.train.classes != d.test.classes) {
        throw ConfigError("/dataset", "train and test files disagree on dimension or class count");
    }
    return d;
}

// ---------------------------------------------------------------------------
// Training

TrainingRows semi_supervised_rows(const SplitState& split) {
    TrainingRows r;
    for (std::size_t i = 0; i < split.size(); ++i) {
        r.rows.push_back(i);
        switch (split.membership(i)) {
            case Membership::Full:
            case Membership::Positive:
                r.positive.push_back(split.positive_label(i));
                r.negative.push_back(-1);
                break;
            case Membership::Negative:
                r.positive.push_back(-1);
                r.negative.push_back(split.negative_label(i));
                break;
            case Membership::Unlabeled:
                r.positive.push_back(-1);
                r.negative.push_back(-1);
                break;
        }
    }
    return r;
}

TrainingRows labeled_rows(const SplitState& split) {
    TrainingRows all = semi_supervised_rows(split);
    TrainingRows r;
    for (std::size_t k = 0; k < all.size(); ++k) {
        if (all.positive[k] < 0 && all.negative[k] < 0) continue;
        r.rows.push_back(all.rows[k]);
        r.positive.push_back(all.positive[k]);
        r.negative.push_back(all.negative[k]);
    }
    return r;
}

void TrainStats::merge(const TrainStats& other) {
    max_suppressed_prob = std::max(max_suppressed_prob, other.max_suppressed_prob);
    max_normalization_error = std::max(max_normalization_error, other.max_normalization_error);
    steps += other.steps;
    last_loss = other.last_loss;
}

TrainStats train_model(ClassifierState& state, const Dataset& data, const TrainingRows& rows, TrainingMode mode,
                       const LossConfig& loss, const TrainingSpec& spec, std::size_t epochs, std::uint64_t seed,
                       std::size_t& global_step) {
    TrainStats stats;
    if (rows.size() == 0 || epochs == 0) return stats;

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);

    const auto rampup_epochs = static_cast<std::size_t>(std::ceil(spec.rampup_fraction * static_cast<double>(epochs)));
    LossConfig step_loss = loss;

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double ramp = rampup_epochs == 0
                                ? 1.0
                                : std::min(1.0, static_cast<double>(epoch + 1) / static_cast<double>(rampup_epochs));
        step_loss.lambda_consistency = loss.lambda_consistency * ramp;

        for (std::size_t start = 0; start < order.size(); start += spec.batch_size) {
            const std::size_t end = std::min(order.size(), start + spec.batch_size);
            std::vector<std::size_t> sample_rows;
            Batch batch;
            for (std::size_t k = start; k < end; ++k) {
                sample_rows.push_back(rows.rows[order[k]]);
                batch.positive.push_back(rows.positive[order[k]]);
                batch.negative.push_back(rows.negative[order[k]]);
            }
            batch.features = gather_rows(data.features, data.dim, sample_rows);
            if (mode == TrainingMode::MeanTeacher) batch.teacher_features = batch.features;
            if (spec.input_noise > 0.0) {
                for (Eigen::Index i = 0; i < batch.features.size(); ++i) {
                    batch.features.data()[i] += spec.input_noise * normal(rng);
                }
                for (Eigen::Index i = 0; i < batch.teacher_features.size(); ++i) {
                    batch.teacher_features.data()[i] += spec.input_noise * normal(rng);
                }
            }

            const LossResult r = mode == TrainingMode::MeanTeacher ? mean_teacher_loss(state, batch, step_loss)
                                                                   : finetune_loss(state, batch, step_loss);
            sgd_step(state, r.gradient, spec.lr, spec.weight_decay, global_step);
            const double warmup = 1.0 - 1.0 / static_cast<double>(global_step + 1);
            ema_update(state, std::min(loss.ema_decay, warmup));
            ++global_step;

            stats.max_suppressed_prob = std::max(stats.max_suppressed_prob, r.max_suppressed_prob);
            stats.max_normalization_error = std::max(stats.max_normalization_error, r.max_normalization_error);
            stats.last_loss = r.loss;
            ++stats.steps;
        }
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Experiment

Experiment::Experiment(ExperimentConfig config, ExperimentData data)
    : config_(std::move(config)),
      data_(std::move(data)),
      split_(data_.train.size()),
      budget_(budget_for(config_, data_.train), data_.train.classes),
      oracle_(data_.train.labels, config_.oracle_noise, derive_seed(config_.seed, kOracleStream)) {
    const Dataset& train = data_.train;
    if (train.dim != data_.test.dim || train.classes != data_.test.classes) {
        throw ShapeError("train and test sets disagree on dimension or class count");
    }
    const double total = budget_.total_bits();
    const std::size_t n_full = full_labels_for(config_, train, total);
    if (n_full > train.size()) throw BudgetError("n_full exceeds the training pool");

    if (config_.arm == Arm::OneBit && !config_.pure_one_bit) {
        const std::size_t queries = total_quota(config_);
        const double planned = static_cast<double>(n_full) * budget_.cost_full() + static_cast<double>(queries);
        if (planned > total) {
            throw BudgetError("stage quotas need " + std::to_string(planned) + " bits, budget is " +
                              std::to_string(total));
        }
        if (queries > train.size() - n_full) {
            throw BudgetError("stage quotas exceed the " + std::to_string(train.size() - n_full) +
                              " samples available for querying");
        }
    }
    auto [split, budget] = make_initial_split(train, n_full, total, derive_seed(config_.seed, kSplitStream));
    split_ = std::move(split);
    budget_ = budget;
}

Architecture Experiment::architecture() const {
    return Architecture{data_.train.dim, config_.hidden, data_.train.classes};
}

const ClassifierState& Experiment::model() const {
    if (!model_) throw std::logic_error("model not trained yet; call train_initial first");
    return *model_;
}

ClassifierState Experiment::fresh_model() const {
    if (!config_.checkpoint.empty()) return load_checkpoint(config_.checkpoint, architecture());
    return ClassifierState(architecture(), derive_seed(config_.seed, kInitStream));
}

LossConfig Experiment::stage_loss() const {
    LossConfig loss = config_.loss;
    loss.class_weights.clear();
    if (config_.weights == WeightScheme::None) return loss;
    std::vector<std::size_t> counts(static_cast<std::size_t>(data_.train.classes), 0);
    for (std::size_t i = 0; i < split_.size(); ++i) {
        const Membership m = split_.membership(i);
        if (m == Membership::Full || m == Membership::Positive) ++counts[static_cast<std::size_t>(split_.positive_label(i))];
    }
    if (*std::max_element(counts.begin(), counts.end()) == 0) return loss;
    loss.class_weights = class_weights(counts, config_.weights == WeightScheme::Inverse);
    return loss;
}

void Experiment::retrain(TrainingMode mode, std::size_t epochs, std::uint64_t seed) {
    const TrainingRows rows =
        mode == TrainingMode::MeanTeacher ? semi_supervised_rows(split_) : labeled_rows(split_);
    stats_.merge(train_model(*model_, data_.train, rows, mode, stage_loss(), config_.train, epochs, seed, global_step_));
}

const StageResult& Experiment::record_stage(std::size_t n_pos, std::size_t n_neg, TrainingMode mode) {
    const auto predicted = predict(model_->teacher(), data_.test);
    StageResult s;
    s.stage = stage_;
    s.accuracy = accuracy(predicted, data_.test.labels);
    s.n_pos = n_pos;
    s.n_neg = n_neg;
    s.bits = budget_.spent_bits();
    const std::size_t queried = n_pos + n_neg;
    s.guess_accuracy = queried == 0 ? 0.0 : static_cast<double>(n_pos) / static_cast<double>(queried);
    s.n_labeled = split_.count(Membership::Full) + split_.count(Membership::Positive);
    s.groups = class_group_histogram(predicted, data_.test.classes, default_band(data_.test.size(), data_.test.classes));
    s.mode = mode_name(mode);
    stages_.push_back(s);
    return stages_.back();
}

const StageResult& Experiment::train_initial() {
    if (model_) throw std::logic_error("train_initial called twice");
    model_ = fresh_model();
    const std::uint64_t seed = derive_seed(config_.seed, kInitialTrainStream);
    std::size_t epochs = config_.train.epochs_initial;
    TrainingMode mode = TrainingMode::MeanTeacher;
    if (config_.arm == Arm::Baseline) {
        epochs += config_.stage_quotas.size() * config_.train.epochs_per_stage;
        mode = config_.training_mode;
    } else if (!config_.checkpoint.empty()) {
        mode = config_.training_mode;
        if (split_.count(Membership::Full) == 0 || !config_.finetune_checkpoint) epochs = 0;
    }
    retrain(mode, epochs, seed);
    return record_stage(0, 0, mode);
}

Eigen::MatrixXd Experiment::pool_scores(const std::vector<std::size_t>& candidates, bool exclude_rejected) const {
    Eigen::MatrixXd logits = forward(model_->teacher(), gather_rows(data_.train.features, data_.train.dim, candidates));
    if (exclude_rejected) {
        for (std::size_t r = 0; r < candidates.size(); ++r) {
            for (int c : log_.rejected_classes(candidates[r])) {
                logits(static_cast<Eigen::Index>(r), c) = config_.loss.suppression_constant;
            }
        }
    }
    return softmax_rows(logits);
}

void Experiment::query(const std::vector<std::size_t>& chosen, const Eigen::MatrixXd& probs,
                       const std::vector<std::size_t>& candidates, bool allow_requery, std::size_t& n_pos,
                       std::size_t& n_neg) {
    std::vector<std::pair<std::size_t, int>> pairs;
    pairs.reserve(chosen.size());
    for (std::size_t sample : chosen) {
        const auto it = std::lower_bound(candidates.begin(), candidates.end(), sample);
        const auto row = static_cast<Eigen::Index>(it - candidates.begin());
        const Eigen::VectorXd p = probs.row(row).transpose();
        const auto guess = static_cast<int>(theory::argmax_query_class({p.data(), static_cast<std::size_t>(p.size())}));
        pairs.emplace_back(sample, guess);
    }
    const auto records = batch_query(oracle_, budget_, log_, pairs, stage_, allow_requery);
    for (const auto& r : records) {
        split_.apply_answer(r.sample, r.guess, r.answer, allow_requery);
        (r.answer ? n_pos : n_neg) += 1;
    }
}

const StageResult& Experiment::run_stage(std::size_t quota) {
    if (!model_) throw std::logic_error("run_stage before train_initial");
    ++stage_;
    split_.advance_stage();

    const std::vector<std::size_t> candidates = split_.unlabeled();
    if (quota > budget_.remaining_queries()) {
        throw QuotaError("stage " + std::to_string(stage_) + " quota " + std::to_string(quota) +
                         " exceeds the remaining " + std::to_string(budget_.remaining_queries()) + " queries");
    }
    if (quota > candidates.size()) {
        throw ProtocolError("stage " + std::to_string(stage_) + " quota " + std::to_string(quota) + " exceeds the " +
                            std::to_string(candidates.size()) + " unqueried samples");
    }

    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    if (quota > 0) {
        const Eigen::MatrixXd probs = pool_scores(candidates, false);
        std::vector<double> uncertainty;
        if (config_.strategy.kind == StrategyKind::UncertaintyStd) {
            uncertainty = uncertainty_scores(model_->teacher(),
                                             gather_rows(data_.train.features, data_.train.dim, candidates),
                                             config_.strategy.repeats, config_.strategy.noise_scale,
                                             derive_seed(config_.seed, kUncertaintyStream + static_cast<std::uint64_t>(stage_)));
        }
        const auto chosen = select(config_.strategy, probs, candidates, quota,
                                   derive_seed(config_.seed, kSelectStream + static_cast<std::uint64_t>(stage_)), uncertainty);
        query(chosen, probs, candidates, false, n_pos, n_neg);
    }

    std::size_t epochs = config_.train.epochs_per_stage;
    if (config_.cold_start) {
        model_ = fresh_model();
        epochs = config_.train.epochs_initial;
    }
    retrain(config_.training_mode, epochs, derive_seed(config_.seed, kStageTrainStream + static_cast<std::uint64_t>(stage_)));
    return record_stage(n_pos, n_neg, config_.training_mode);
}

TrainingMode Experiment::pure_mode_for(double positive_share, double switch_threshold) {
    return positive_share < switch_threshold ? TrainingMode::MeanTeacher : TrainingMode::Finetune;
}

const StageResult& Experiment::run_pure_stage() {
    if (!model_) throw std::logic_error("run_pure_stage before train_initial");
    ++stage_;
    split_.advance_stage();

    const auto classes = static_cast<std::size_t>(data_.train.classes);
    std::vector<std::size_t> candidates;
    for (std::size_t i : split_.remaining()) {
        if (log_.rejected_classes(i).size() < classes) candidates.push_back(i);
    }
    const auto wanted = static_cast<std::size_t>(
        std::ceil(config_.pure_query_fraction * static_cast<double>(candidates.size())));
    const std::size_t quota = std::min({wanted, candidates.size(), budget_.remaining_queries()});

    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    if (quota > 0) {
        const Eigen::MatrixXd probs = pool_scores(candidates, true);
        std::vector<double> uncertainty;
        if (config_.strategy.kind == StrategyKind::UncertaintyStd) {
            uncertainty = uncertainty_scores(model_->teacher(),
                                             gather_rows(data_.train.features, data_.train.dim, candidates),
                                             config_.strategy.repeats, config_.strategy.noise_scale,
                                             derive_seed(config_.seed, kUncertaintyStream + static_cast<std::uint64_t>(stage_)));
        }
        const auto chosen = select(config_.strategy, probs, candidates, quota,
                                   derive_seed(config_.seed, kSelectStream + static_cast<std::uint64_t>(stage_)), uncertainty);
        query(chosen, probs, candidates, true, n_pos, n_neg);
    }

    const double share = static_cast<double>(split_.count(Membership::Positive) + split_.count(Membership::Full)) /
                         static_cast<double>(split_.size());
    const TrainingMode mode = pure_mode_for(share, config_.switch_threshold);
    retrain(mode, config_.train.epochs_per_stage,
            derive_seed(config_.seed, kStageTrainStream + static_cast<std::uint64_t>(stage_)));
    return record_stage(n_pos, n_neg, mode);
}

Report Experiment::report() const {
    Report r;
    r.name = config_.name;
    r.arm = config_.arm == Arm::OneBit ? "one_bit" : "baseline";
    r.config = config_to_json(config_);
    r.stages = stages_;
    r.ledger = {budget_.total_bits(), budget_.spent_bits(), budget_.n_full(), budget_.n_queries()};
    r.log = log_;
    r.max_suppressed_prob = stats_.max_suppressed_prob;
    r.max_normalization_error = stats_.max_normalization_error;
    return r;
}

namespace {

Report finish(const Experiment& e, ClassifierState* final_model) {
    if (final_model != nullptr) *final_model = e.model();
    return e.report();
}

}  // namespace

Report run_experiment(const ExperimentConfig& config, const ExperimentData& data, ClassifierState* final_model) {
    Experiment e(config, data);
    e.train_initial();
    for (std::size_t quota : config.stage_quotas) e.run_stage(quota);
    return finish(e, final_model);
}

Report run_pure_one_bit(const ExperimentConfig& config, const ExperimentData& data, ClassifierState* final_model) {
    if (config.checkpoint.empty()) throw ConfigError("/init", "pure one-bit mode needs a checkpoint");
    if (config.n_full != 0) throw ConfigError("/n_full", "pure one-bit mode starts without full labels");
    Experiment e(config, data);
    e.train_initial();
    for (std::size_t t = 0; t < config.pure_stages; ++t) {
        if (e.split().remaining().empty() || e.budget().remaining_queries() == 0) break;
        const double before = e.stages().back().accuracy;
        const double after = e.run_pure_stage().accuracy;
        if (std::abs(after - before) < config.plateau) break;
    }
    return finish(e, final_model);
}

Report run_baseline(const ExperimentConfig& config, const ExperimentData& data, ClassifierState* final_model) {
    ExperimentConfig c = config;
    c.arm = Arm::Baseline;
    Experiment e(c, data);
    e.train_initial();
    return finish(e, final_model);
}

Report run(const ExperimentConfig& config, const ExperimentData& data, ClassifierState* final_model) {
    if (config.arm == Arm::Baseline) return run_baseline(config, data, final_model);
    if (config.pure_one_bit) return run_pure_one_bit(config, data, final_model);
    return run_experiment(config, data, final_model);
}

}  // namespace onebit
