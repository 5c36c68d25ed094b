#include "onebit/theory.hpp"

#include <cmath>
#include <string>

#include "onebit/errors.hpp"

namespace onebit::theory {

namespace {

double plogp(double p) { return p > 0.0 ? p * std::log2(p) : 0.0; }

void check_classes(int classes) {
    if (classes < 2) {
        throw DomainError("class count must be >= 2, got " + std::to_string(classes));
    }
}

}  // namespace

void validate_probabilities(std::span<const double> p) {
    if (p.size() < 2) {
        throw DomainError("probability vector needs at least 2 entries");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!(p[i] >= 0.0 && p[i] <= 1.0)) {
            throw DomainError("probability " + std::to_string(i) + " outside [0,1]");
        }
        sum += p[i];
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
        throw DomainError("probabilities sum to " + std::to_string(sum) + ", expected 1");
    }
}

double binary_entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("binary_entropy: p outside [0,1]");
    }
    return -plogp(p) - plogp(1.0 - p);
}

double full_entropy(std::span<const double> p) {
    validate_probabilities(p);
    double h = 0.0;
    for (double v : p) h -= plogp(v);
    // Rounding can leave -0.0 or a few ulps below zero for point masses.
    return h > 0.0 ? h : 0.0;
}

double average_bits_full(int classes) {
    check_classes(classes);
    return std::log2(static_cast<double>(classes));
}

bool one_bit_efficiency_condition(std::span<const double> p, std::size_t c) {
    validate_probabilities(p);
    if (c >= p.size()) throw DomainError("class index out of range");
    const double bits = average_bits_full(static_cast<int>(p.size()));
    return binary_entropy(p[c]) >= full_entropy(p) / bits;
}

double efficiency_curve(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("efficiency_curve: p must lie in (0,1)");
    }
    return binary_entropy(p) / (1.0 - p);
}

double efficiency_rhs(int classes) {
    check_classes(classes);
    const double c = static_cast<double>(classes);
    return std::log2(c - 1.0) / (std::log2(c) - 1.0);
}

double efficiency_threshold(int classes) {
    check_classes(classes);
    if (classes == 2) return 0.0;

    const double target = efficiency_rhs(classes);
    double lo = 1e-9;
    double hi = 0.5;
    // Invariant: f(lo) < target <= f(hi). f(0.5) = 2 >= target for every C.
    while (hi - lo > 1e-6) {
        const double mid = 0.5 * (lo + hi);
        if (efficiency_curve(mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return hi;
}

double entropy_ratio(std::span<const double> p, std::size_t c) {
    const double h = full_entropy(p);
    if (c >= p.size()) throw DomainError("class index out of range");
    if (h <= 0.0) {
        throw DomainError("entropy_ratio undefined for a zero-entropy distribution");
    }
    return binary_entropy(p[c]) / h;
}

std::size_t argmax_query_class(std::span<const double> p) {
    validate_probabilities(p);
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (p[i] > p[best]) best = i;
    }
    return best;
}

}  // namespace onebit::theory
