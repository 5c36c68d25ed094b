#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "onebit/model.hpp"
#include "onebit/sampling.hpp"

namespace onebit {

struct SyntheticSpec {
    int classes = 10;
    std::size_t per_class = 200;
    std::size_t test_per_class = 100;
    std::size_t dim = 16;
    /// Chosen so a 100-label initial model scores 40-60% at C = 10.
    double separation = 0.55;
    std::uint64_t seed = 7;
};

/// Either a synthetic mixture or a pair of dataset files.
struct DatasetSpec {
    std::optional<SyntheticSpec> synthetic;
    std::filesystem::path train_path;
    std::filesystem::path test_path;
};

struct TrainingSpec {
    std::size_t epochs_initial = 60;
    std::size_t epochs_per_stage = 30;
    double lr = 0.05;
    std::size_t batch_size = 64;
    double weight_decay = 1e-4;
    /// Std of additive Gaussian feature noise, drawn independently for the
    /// student and teacher passes.
    double input_noise = 0.1;
    /// Fraction of each training run over which lambda ramps linearly to its
    /// full value.
    double rampup_fraction = 0.2;
};

enum class TrainingMode { MeanTeacher, Finetune };
/// one_bit: full labels plus staged queries. baseline: the whole budget spent
/// on full labels, trained once.
enum class Arm { OneBit, Baseline };
enum class WeightScheme { None, Balance, Inverse };

struct ExperimentConfig {
    std::string name = "experiment";
    DatasetSpec dataset;
    Arm arm = Arm::OneBit;

    std::size_t n_full = 30;
    std::vector<std::size_t> stage_quotas;
    /// Budget in bits. When unset it is n_full*log2(C) + sum(stage_quotas), or
    /// N*log2(C) in pure one-bit mode.
    std::optional<double> total_bits;
    /// Alternative budget: the cost of this many full labels, N*log2(C).
    std::optional<double> full_equivalent;
    bool allow_overshoot = false;

    Strategy strategy;
    TrainingMode training_mode = TrainingMode::MeanTeacher;
    std::vector<std::size_t> hidden{64};
    TrainingSpec train;
    LossConfig loss;
    WeightScheme weights = WeightScheme::None;

    /// Empty means random initialization.
    std::filesystem::path checkpoint;
    /// Fine-tune a loaded checkpoint on the full labels before stage 1.
    bool finetune_checkpoint = true;
    /// Re-initialize instead of resuming from the previous stage's model.
    bool cold_start = false;

    double oracle_noise = 0.0;

    bool pure_one_bit = false;
    double switch_threshold = 0.8;
    std::size_t pure_stages = 5;
    /// Fraction of the remaining pool queried per pure one-bit stage.
    double pure_query_fraction = 1.0;
    /// Stop pure one-bit stages once accuracy moves by less than this.
    double plateau = 0.001;

    std::uint64_t seed = 1;
};

/// Parses and validates a config document. Unknown keys and type errors throw
/// ConfigError carrying the JSON pointer of the offending key.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Normalized echo of a config; parse_config(config_to_json(c)) == c.
nlohmann::json config_to_json(const ExperimentConfig& config);

/// The budget in bits the experiment runs under.
double resolve_total_bits(const ExperimentConfig& config, int classes, std::size_t pool_size);

/// Same dataset, seed and budget, with every bit spent on full labels. The
/// baseline arm trains once for as many epochs as the one-bit arm trains in
/// total.
ExperimentConfig make_baseline(const ExperimentConfig& config);

}  // namespace onebit
