#include "onebit/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "onebit/random.hpp"

namespace onebit {

namespace {

struct NamedKind {
    std::string_view name;
    StrategyKind kind;
};

constexpr NamedKind kKinds[] = {
    {"random", StrategyKind::Random},
    {"easy", StrategyKind::Easy},
    {"hard", StrategyKind::Hard},
    {"class_balance", StrategyKind::ClassBalance},
    {"hard_class_balance", StrategyKind::HardClassBalance},
    {"uncertainty_std", StrategyKind::UncertaintyStd},
};

// Positions into `candidates`, sorted by key then by sample index.
std::vector<std::size_t> order_by(std::span<const std::size_t> candidates, std::span<const double> key) {
    std::vector<std::size_t> pos(candidates.size());
    std::iota(pos.begin(), pos.end(), 0);
    std::sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) {
        if (key[a] != key[b]) return key[a] < key[b];
        return candidates[a] < candidates[b];
    });
    return pos;
}

std::vector<std::size_t> by_sample_index(std::span<const std::size_t> candidates) {
    std::vector<std::size_t> pos(candidates.size());
    std::iota(pos.begin(), pos.end(), 0);
    std::sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) { return candidates[a] < candidates[b]; });
    return pos;
}

// Round-robin over per-class queues (positions already in preference order),
// taking at most ceil(k/C) from each class. Leftover positions are returned
// through `rest`.
std::vector<std::size_t> round_robin(std::vector<std::vector<std::size_t>>& queues, std::size_t k,
                                     std::vector<std::size_t>& rest) {
    const std::size_t classes = queues.size();
    const std::size_t cap = (k + classes - 1) / classes;
    std::vector<std::size_t> picked;
    std::vector<std::size_t> taken(classes, 0);
    for (std::size_t round = 0; round < cap && picked.size() < k; ++round) {
        for (std::size_t c = 0; c < classes && picked.size() < k; ++c) {
            if (taken[c] < queues[c].size()) picked.push_back(queues[c][taken[c]++]);
        }
    }
    for (std::size_t c = 0; c < classes; ++c) {
        rest.insert(rest.end(), queues[c].begin() + static_cast<std::ptrdiff_t>(taken[c]), queues[c].end());
    }
    return picked;
}

}  // namespace

StrategyKind parse_strategy(std::string_view name) {
    for (const auto& k : kKinds) {
        if (k.name == name) return k.kind;
    }
    throw std::invalid_argument("unknown sampling strategy \"" + std::string(name) + "\"");
}

std::string_view strategy_name(StrategyKind kind) {
    for (const auto& k : kKinds) {
        if (k.kind == kind) return k.name;
    }
    return "?";
}

std::vector<double> top2_margins(const Eigen::MatrixXd& probs) {
    std::vector<double> m(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        double first = -1.0;
        double second = -1.0;
        for (Eigen::Index c = 0; c < probs.cols(); ++c) {
            const double v = probs(i, c);
            if (v > first) {
                second = first;
                first = v;
            } else if (v > second) {
                second = v;
            }
        }
        m[static_cast<std::size_t>(i)] = first - second;
    }
    return m;
}

std::vector<int> predicted_classes(const Eigen::MatrixXd& probs) {
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < probs.cols(); ++c) {
            if (probs(i, c) > probs(i, best)) best = c;
        }
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

std::vector<std::size_t> select(const Strategy& strategy, const Eigen::MatrixXd& probs,
                                std::span<const std::size_t> candidates, std::size_t k, std::uint64_t seed,
                                std::span<const double> uncertainty) {
    if (k > candidates.size()) {
        throw std::invalid_argument("cannot select " + std::to_string(k) + " of " +
                                    std::to_string(candidates.size()) + " candidates");
    }
    if (static_cast<std::size_t>(probs.rows()) != candidates.size()) {
        throw std::invalid_argument("score table rows do not match candidates");
    }

    Rng rng(seed);
    std::vector<std::size_t> pos;  // chosen positions into candidates

    switch (strategy.kind) {
        case StrategyKind::Random: {
            pos = by_sample_index(candidates);
            std::shuffle(pos.begin(), pos.end(), rng);
            pos.resize(k);
            break;
        }
        case StrategyKind::Easy: {
            std::vector<double> key(candidates.size());
            for (Eigen::Index i = 0; i < probs.rows(); ++i) key[static_cast<std::size_t>(i)] = -probs.row(i).maxCoeff();
            pos = order_by(candidates, key);
            pos.resize(k);
            break;
        }
        case StrategyKind::Hard: {
            const auto margins = top2_margins(probs);
            pos = order_by(candidates, margins);
            pos.resize(k);
            break;
        }
        case StrategyKind::UncertaintyStd: {
            if (uncertainty.size() != candidates.size()) {
                throw std::invalid_argument("uncertainty_std needs one uncertainty score per candidate");
            }
            std::vector<double> key(uncertainty.begin(), uncertainty.end());
            for (double& v : key) v = -v;
            pos = order_by(candidates, key);
            pos.resize(k);
            break;
        }
        case StrategyKind::ClassBalance:
        case StrategyKind::HardClassBalance: {
            const bool hard = strategy.kind == StrategyKind::HardClassBalance;
            const auto predicted = predicted_classes(probs);
            const auto margins = top2_margins(probs);
            const std::vector<std::size_t> order = hard ? order_by(candidates, margins) : by_sample_index(candidates);
            std::vector<std::vector<std::size_t>> queues(static_cast<std::size_t>(probs.cols()));
            for (std::size_t p : order) queues[static_cast<std::size_t>(predicted[p])].push_back(p);
            if (!hard) {
                for (auto& q : queues) std::shuffle(q.begin(), q.end(), rng);
            }
            std::vector<std::size_t> rest;
            pos = round_robin(queues, k, rest);
            if (pos.size() < k) {
                if (hard) {
                    std::sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) {
                        if (margins[a] != margins[b]) return margins[a] < margins[b];
                        return candidates[a] < candidates[b];
                    });
                } else {
                    std::sort(rest.begin(), rest.end(),
                              [&](std::size_t a, std::size_t b) { return candidates[a] < candidates[b]; });
                    std::shuffle(rest.begin(), rest.end(), rng);
                }
                rest.resize(k - pos.size());
                pos.insert(pos.end(), rest.begin(), rest.end());
            }
            break;
        }
    }

    std::vector<std::size_t> out;
    out.reserve(pos.size());
    for (std::size_t p : pos) out.push_back(candidates[p]);
    return out;
}

std::vector<double> uncertainty_scores(const Parameters& model, const Eigen::MatrixXd& features,
                                       std::size_t repeats, double noise_scale, std::uint64_t seed) {
    if (repeats < 2) throw std::invalid_argument("uncertainty_scores needs at least 2 repeats");
    if (!(noise_scale >= 0.0)) throw std::invalid_argument("noise scale must be >= 0");

    const Eigen::Index n = features.rows();
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    // Welford accumulation: identical passes leave the variance exactly 0.
    Eigen::MatrixXd mean;
    Eigen::MatrixXd m2;
    for (std::size_t r = 0; r < repeats; ++r) {
        Eigen::MatrixXd noisy = features;
        if (noise_scale > 0.0) {
            for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += noise_scale * normal(rng);
        }
        const Eigen::MatrixXd p = softmax_rows(forward(model, noisy));
        if (r == 0) {
            mean = p;
            m2 = Eigen::MatrixXd::Zero(p.rows(), p.cols());
            continue;
        }
        const Eigen::MatrixXd delta = p - mean;
        mean += delta / static_cast<double>(r + 1);
        m2 += delta.cwiseProduct(p - mean);
    }

    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double var = m2.row(i).maxCoeff() / static_cast<double>(repeats);
        out[static_cast<std::size_t>(i)] = var > 0.0 ? std::sqrt(var) : 0.0;
    }
    return out;
}

}  // namespace onebit
