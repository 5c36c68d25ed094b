#pragma once

// Information-theoretic quantities behind one-bit querying. All entropies are
// in bits (log base 2) and use the convention 0*log(0) = 0.

#include <cstddef>
#include <span>

namespace onebit::theory {

/// Tolerance on sum(p) - 1 accepted by validate_probabilities.
inline constexpr double kSimplexTolerance = 1e-9;

/// Throws DomainError unless p has at least two entries, each in [0,1],
/// summing to 1 within kSimplexTolerance.
void validate_probabilities(std::span<const double> p);

/// Entropy of a Bernoulli(p) variable.
double binary_entropy(double p);

/// Entropy of a categorical distribution.
double full_entropy(std::span<const double> p);

/// Information carried by one full label over `classes` classes, log2(C).
double average_bits_full(int classes);

/// True when asking "is it class c?" yields at least as much entropy per bit
/// as a full label: H(p_c) >= H(p) / log2(C).
bool one_bit_efficiency_condition(std::span<const double> p, std::size_t c);

/// f(p) = H(p) / (1 - p): the left-hand side of the sufficient condition for
/// one-bit efficiency. Nondecreasing on (0,1), f(1/2) = 2.
double efficiency_curve(double p);

/// log2(C-1) / (log2(C) - 1), the right-hand side f must reach.
double efficiency_rhs(int classes);

/// Smallest top-class probability p* <= 1/2 with f(p*) >= efficiency_rhs(C),
/// found by bisection on (1e-9, 0.5] to 1e-6. Returns 0 for C = 2.
double efficiency_threshold(int classes);

/// H(p_c) / H(p). Throws DomainError when H(p) is zero.
double entropy_ratio(std::span<const double> p, std::size_t c);

/// Class maximizing p_c, lowest index on ties. The same class maximizes the
/// binary entropy H(p_c) whenever the maximum is unique.
std::size_t argmax_query_class(std::span<const double> p);

}  // namespace onebit::theory
