#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "onebit/model.hpp"

namespace onebit {

enum class StrategyKind { Random, Easy, Hard, ClassBalance, HardClassBalance, UncertaintyStd };

struct Strategy {
    StrategyKind kind = StrategyKind::Random;
    /// Augmented passes per sample for UncertaintyStd.
    std::size_t repeats = 8;
    /// Std of the additive Gaussian feature noise for UncertaintyStd.
    double noise_scale = 0.1;
};

/// Config names: random, easy, hard, class_balance, hard_class_balance,
/// uncertainty_std. Throws std::invalid_argument for anything else.
StrategyKind parse_strategy(std::string_view name);
std::string_view strategy_name(StrategyKind kind);

/// Gap between the two largest probabilities of each row.
std::vector<double> top2_margins(const Eigen::MatrixXd& probs);
/// Row-wise argmax, lowest index on ties.
std::vector<int> predicted_classes(const Eigen::MatrixXd& probs);

/// Chooses k distinct candidates to query.
///
/// `probs` holds one probability row per candidate, in the same order as
/// `candidates`. `uncertainty` is required for UncertaintyStd only and is
/// aligned the same way. Ties are broken by the lower sample index, so the
/// score-ordered strategies select the same set for any candidate order.
///
///   random             seeded uniform draw without replacement
///   easy               k largest max-probability
///   hard               k smallest top-2 margin
///   class_balance      round-robin over predicted classes, at most ceil(k/C)
///                      each, random within a class; any shortfall is filled
///                      at random
///   hard_class_balance as class_balance, but each class is ordered by
///                      ascending margin and the shortfall by global margin
///   uncertainty_std    k largest uncertainty
std::vector<std::size_t> select(const Strategy& strategy, const Eigen::MatrixXd& probs,
                                std::span<const std::size_t> candidates, std::size_t k, std::uint64_t seed,
                                std::span<const double> uncertainty = {});

/// Per-sample spread of predictions under input noise: `repeats` forward
/// passes with independent N(0, noise_scale^2) feature noise, per-class std of
/// the softmax outputs, reduced by max over classes.
std::vector<double> uncertainty_scores(const Parameters& model, const Eigen::MatrixXd& features,
                                       std::size_t repeats, double noise_scale, std::uint64_t seed);

}  // namespace onebit
