#pragma once

// Divergences and similarities between discrete distributions. Every
// selection score reduces to these four functions.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "s3vaada/errors.hpp"

namespace s3vaada {

/// Floor applied to the second KL argument before the log.
inline constexpr double kProbFloor = 1e-12;
/// BC is clamped to 1 - kSimilarityClamp so the similarity stays finite.
inline constexpr double kSimilarityClamp = 1e-6;

/// Normalized probability vector over K >= 2 classes.
class ProbDist {
public:
    ProbDist() = default;

    /// Validates non-negativity, K >= 2 and unit sum (within `tol`).
    explicit ProbDist(std::vector<double> values, double tol = 1e-9) : values_(std::move(values)) {
        if (values_.size() < 2) throw ValidationError("ProbDist needs at least 2 classes");
        double sum = 0.0;
        for (double v : values_) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("ProbDist entry negative or non-finite");
            sum += v;
        }
        if (std::abs(sum - 1.0) > tol) {
            throw ValidationError("ProbDist entries sum to " + std::to_string(sum));
        }
    }

    /// Wraps values known to be a distribution (softmax output) without checks.
    static ProbDist trusted(std::vector<double> values) {
        ProbDist p;
        p.values_ = std::move(values);
        return p;
    }

    static ProbDist uniform(std::size_t k) { return trusted(std::vector<double>(k, 1.0 / static_cast<double>(k))); }

    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t k) const { return values_[k]; }
    std::span<const double> values() const { return values_; }
    auto begin() const { return values_.begin(); }
    auto end() const { return values_.end(); }

    bool operator==(const ProbDist&) const = default;

private:
    std::vector<double> values_;
};

namespace detail {
inline void require_same_length(const ProbDist& p, const ProbDist& q) {
    if (p.size() != q.size()) {
        throw DimensionError("distribution lengths differ: " + std::to_string(p.size()) + " vs " +
                             std::to_string(q.size()));
    }
}
}  // namespace detail

/// KL(p || q) = sum_k p_k ln(p_k / q_k), with 0 ln 0 = 0 and q floored at kProbFloor.
inline double kl_divergence(const ProbDist& p, const ProbDist& q) {
    detail::require_same_length(p, q);
    double kl = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double pk = p[k];
        if (pk <= 0.0) continue;
        kl += pk * (std::log(pk) - std::log(std::max(q[k], kProbFloor)));
    }
    // Rounding can leave tiny negative residue for p == q.
    return std::max(kl, 0.0);
}

inline double entropy(const ProbDist& p) {
    double h = 0.0;
    for (double pk : p) {
        if (pk > 0.0) h -= pk * std::log(pk);
    }
    return std::clamp(h, 0.0, std::log(static_cast<double>(p.size())));
}

/// Bhattacharyya coefficient sum_k sqrt(p_k q_k), in [0, 1].
inline double bhattacharyya(const ProbDist& p, const ProbDist& q) {
    detail::require_same_length(p, q);
    double bc = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) bc += std::sqrt(p[k] * q[k]);
    return std::clamp(bc, 0.0, 1.0);
}

/// -ln(1 - BC(p, q)), with BC clamped at 1 - kSimilarityClamp.
inline double similarity(const ProbDist& p, const ProbDist& q) {
    const double bc = std::min(bhattacharyya(p, q), 1.0 - kSimilarityClamp);
    return -std::log1p(-bc);
}

}  // namespace s3vaada
