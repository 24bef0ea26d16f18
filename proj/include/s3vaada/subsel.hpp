#pragma once

// Submodular batch selection. The gain of adding x_i to S is
//
//   alpha * VAP(x_i) + beta * d(S, x_i) + (1 - alpha - beta) * R(S, x_i)
//
// with d(S, x_i) = min_{x in S} KL(x || x_i) and the facility-location gain
// R(S, x_i) = sum_k max(0, s_ki - max_{j in S} s_kj). Scores are normalized with
// constants fixed once per pool, so gains keep their diminishing-returns shape.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "s3vaada/perturb.hpp"
#include "s3vaada/prob_metrics.hpp"
#include "s3vaada/selection.hpp"

namespace s3vaada {

struct MixWeights {
    double alpha = 0.5;
    double beta = 0.3;

    double gamma() const { return 1.0 - alpha - beta; }

    void validate() const {
        if (!(alpha >= 0.0) || !(beta >= 0.0) || alpha + beta > 1.0 + 1e-12) {
            throw ValidationError("mix weights need 0 <= alpha, 0 <= beta, alpha + beta <= 1");
        }
    }
};

inline void to_json(nlohmann::json& j, const MixWeights& w) { j = {{"alpha", w.alpha}, {"beta", w.beta}}; }
inline void from_json(const nlohmann::json& j, MixWeights& w) {
    w.alpha = j.value("alpha", w.alpha);
    w.beta = j.value("beta", w.beta);
}

/// Mean pairwise KL among the clean output and the N perturbed outputs.
inline double vap_score(const ProbDist& original, std::span<const ProbDist> perturbed) {
    const std::size_t n = perturbed.size();
    if (n == 0) throw ValidationError("vap_score: bundle has no perturbed outputs");
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += kl_divergence(original, perturbed[i]);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) sum += kl_divergence(perturbed[i], perturbed[j]);
        }
    }
    return sum / static_cast<double>(n * n);
}

inline double vap_score(const PerturbationBundle& b) { return vap_score(b.original, b.perturbed); }

/// Fixed per-pool normalization constants.
struct Normalization {
    double vap_min = 0.0;
    double vap_range = 0.0;  // max - min
    double d_max = 0.0;      // max pairwise KL; also d(empty, x_i)
    double rep_max = 0.0;    // max_i sum_k s_ki

    double vap(double raw) const { return vap_range > 0.0 ? (raw - vap_min) / vap_range : 0.0; }
    double diversity(double raw) const { return d_max > 0.0 ? raw / d_max : 0.0; }
    double representativeness(double raw) const { return rep_max > 0.0 ? raw / rep_max : 0.0; }
};

/// Min-max normalization of a score vector; all-equal input maps to zeros.
inline std::vector<double> min_max_normalize(std::span<const double> scores) {
    std::vector<double> out(scores.size(), 0.0);
    if (scores.empty()) return out;
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - *lo) / range;
    return out;
}

/// Per-candidate VAP plus the pairwise KL and similarity tables.
class CandidatePool {
public:
    CandidatePool() = default;

    /// kl(j, i) = D(x_j, x_i); sim(k, i) = s_ki. Both square over the pool.
    CandidatePool(std::vector<double> vap, Matrix kl, Matrix sim)
        : vap_(std::move(vap)), kl_(std::move(kl)), sim_(std::move(sim)) {
        const auto n = static_cast<Eigen::Index>(vap_.size());
        if (n == 0) throw ValidationError("candidate pool is empty");
        if (kl_.rows() != n || kl_.cols() != n || sim_.rows() != n || sim_.cols() != n) {
            throw DimensionError("candidate tables must be square over the pool");
        }
        for (double v : vap_) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("VAP scores must be finite and >= 0");
        }
        if (!kl_.allFinite() || (kl_.array() < 0.0).any()) throw ValidationError("KL table must be finite and >= 0");
        if (!sim_.allFinite() || (sim_.array() < 0.0).any()) {
            throw ValidationError("similarity table must be finite and >= 0");
        }
        compute_normalization();
    }

    /// Builds tables from the clean outputs of each bundle.
    static CandidatePool from_bundles(std::span<const PerturbationBundle> bundles) {
        std::vector<double> vap;
        std::vector<ProbDist> originals;
        vap.reserve(bundles.size());
        for (const auto& b : bundles) {
            vap.push_back(vap_score(b));
            originals.push_back(b.original);
        }
        return from_distributions(std::move(vap), originals);
    }

    static CandidatePool from_distributions(std::vector<double> vap, std::span<const ProbDist> originals) {
        const auto n = static_cast<Eigen::Index>(originals.size());
        Matrix kl = Matrix::Zero(n, n);
        Matrix sim = Matrix::Zero(n, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i < n; ++i) {
                if (i != j) kl(j, i) = kl_divergence(originals[static_cast<std::size_t>(j)], originals[static_cast<std::size_t>(i)]);
            }
            for (Eigen::Index i = j; i < n; ++i) {
                const double s = similarity(originals[static_cast<std::size_t>(j)], originals[static_cast<std::size_t>(i)]);
                sim(j, i) = s;
                sim(i, j) = s;
            }
        }
        return CandidatePool(std::move(vap), std::move(kl), std::move(sim));
    }

    std::size_t size() const { return vap_.size(); }
    double vap(std::size_t i) const { return vap_[i]; }
    std::span<const double> vap_scores() const { return vap_; }
    double kl(std::size_t j, std::size_t i) const { return kl_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)); }
    double sim(std::size_t k, std::size_t i) const { return sim_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)); }
    const Matrix& kl_table() const { return kl_; }
    const Matrix& sim_table() const { return sim_; }
    const Normalization& normalization() const { return norm_; }

private:
    void compute_normalization() {
        const auto [lo, hi] = std::minmax_element(vap_.begin(), vap_.end());
        norm_.vap_min = *lo;
        norm_.vap_range = *hi - *lo;
        norm_.d_max = kl_.maxCoeff();
        norm_.rep_max = sim_.colwise().sum().maxCoeff();
    }

    std::vector<double> vap_;
    Matrix kl_;
    Matrix sim_;
    Normalization norm_;
};

/// Constants are a function of the pool alone; exposed for reporting.
inline Normalization normalize_scores(const CandidatePool& pool) { return pool.normalization(); }

/// Selected set with incremental caches:
///   min_div[i] = min_{j in S} kl(j, i)  (d_max while S is empty)
///   max_sim[k] = max_{j in S} sim(k, j) (0 while S is empty)
/// Holds a reference to the pool, which must outlive it.
class SelectionState {
public:
    explicit SelectionState(const CandidatePool& pool)
        : pool_(&pool),
          in_set_(pool.size(), false),
          min_div_(pool.size(), pool.normalization().d_max),
          max_sim_(pool.size(), 0.0) {}

    const CandidatePool& pool() const { return *pool_; }
    const std::vector<std::size_t>& selected() const { return selected_; }
    bool contains(std::size_t i) const { return in_set_.at(i); }
    double min_div(std::size_t i) const { return min_div_[i]; }
    double max_sim(std::size_t k) const { return max_sim_[k]; }
    std::span<const double> min_div_cache() const { return min_div_; }
    std::span<const double> max_sim_cache() const { return max_sim_; }
    double accumulated() const { return accumulated_; }

    void add(std::size_t i, double gain = 0.0) {
        if (i >= in_set_.size()) throw ValidationError("candidate index out of range");
        if (in_set_[i]) throw ValidationError("candidate " + std::to_string(i) + " already selected");
        in_set_[i] = true;
        selected_.push_back(i);
        accumulated_ += gain;
        const std::size_t n = pool_->size();
        for (std::size_t c = 0; c < n; ++c) {
            min_div_[c] = std::min(min_div_[c], pool_->kl(i, c));
            max_sim_[c] = std::max(max_sim_[c], pool_->sim(c, i));
        }
    }

private:
    const CandidatePool* pool_;
    std::vector<bool> in_set_;
    std::vector<std::size_t> selected_;
    std::vector<double> min_div_;
    std::vector<double> max_sim_;
    double accumulated_ = 0.0;
};

namespace detail {
inline void require_candidate(const SelectionState& s, std::size_t i) {
    if (i >= s.pool().size()) throw ValidationError("candidate index out of range");
    if (s.contains(i)) throw ValidationError("candidate " + std::to_string(i) + " already selected");
}
}  // namespace detail

/// d(S, x_i), raw (un-normalized).
inline double diversity_score(const SelectionState& s, std::size_t i) {
    detail::require_candidate(s, i);
    return s.min_div(i);
}

/// R(S, x_i), raw. Coverage targets are every pool member, selected or not.
inline double representativeness_score(const SelectionState& s, std::size_t i) {
    detail::require_candidate(s, i);
    const CandidatePool& pool = s.pool();
    double r = 0.0;
    for (std::size_t k = 0; k < pool.size(); ++k) r += std::max(0.0, pool.sim(k, i) - s.max_sim(k));
    return r;
}

inline GainBreakdown marginal_gain(const SelectionState& s, std::size_t i, const MixWeights& w) {
    w.validate();
    const Normalization& norm = s.pool().normalization();
    GainBreakdown g;
    g.vap_raw = s.pool().vap(i);
    g.diversity_raw = diversity_score(s, i);
    g.representativeness_raw = representativeness_score(s, i);
    g.vap = norm.vap(g.vap_raw);
    g.diversity = norm.diversity(g.diversity_raw);
    g.representativeness = norm.representativeness(g.representativeness_raw);
    g.gain = w.alpha * g.vap + w.beta * g.diversity + w.gamma() * g.representativeness;
    return g;
}

/// Greedy maximization: B picks of the best marginal gain, ties to the lowest index.
inline Selection greedy_select(const CandidatePool& pool, std::size_t budget, const MixWeights& w) {
    w.validate();
    Selection out;
    out.sampler = "s3";
    if (budget > pool.size()) {
        out.warnings.push_back("budget " + std::to_string(budget) + " exceeds pool size " +
                               std::to_string(pool.size()) + "; selecting the whole pool");
        budget = pool.size();
    }
    SelectionState state(pool);
    for (std::size_t step = 0; step < budget; ++step) {
        std::size_t best = pool.size();
        GainBreakdown best_gain;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (state.contains(i)) continue;
            const GainBreakdown g = marginal_gain(state, i, w);
            if (best == pool.size() || g.gain > best_gain.gain) {
                best = i;
                best_gain = g;
            }
        }
        state.add(best, best_gain.gain);
        out.indices.push_back(best);
        out.steps.push_back({best, best_gain.gain, state.accumulated(), best_gain});
    }
    out.accumulated_gain = state.accumulated();
    return out;
}

/// Sum of marginal gains when inserting `order` one element at a time.
inline double accumulated_gain(const CandidatePool& pool, std::span<const std::size_t> order, const MixWeights& w) {
    SelectionState state(pool);
    for (std::size_t i : order) state.add(i, marginal_gain(state, i, w).gain);
    return state.accumulated();
}

struct BruteForceResult {
    std::vector<std::size_t> indices;  // sorted
    double value = 0.0;
};

inline double binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0.0;
    double c = 1.0;
    for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    return c;
}

/// Exhaustive optimum over all size-B subsets. KL asymmetry makes accumulated gain
/// order dependent, so a subset is scored by its best insertion order.
inline BruteForceResult brute_force_best_subset(const CandidatePool& pool, std::size_t budget, const MixWeights& w) {
    w.validate();
    const std::size_t n = pool.size();
    if (budget == 0 || budget > n) throw ValidationError("brute force budget must be in [1, pool size]");
    if (budget > 5 || binomial(n, budget) > 1e6) throw ValidationError("instance too large for brute force");

    BruteForceResult best;
    best.value = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> combo(budget);
    std::iota(combo.begin(), combo.end(), std::size_t{0});
    while (true) {
        std::vector<std::size_t> order = combo;
        double value = -std::numeric_limits<double>::infinity();
        do {
            value = std::max(value, accumulated_gain(pool, order, w));
        } while (std::next_permutation(order.begin(), order.end()));
        if (value > best.value) {
            best.value = value;
            best.indices = combo;
        }
        // next combination in lexicographic order
        std::size_t k = budget;
        while (k > 0 && combo[k - 1] == n - budget + k - 1) --k;
        if (k == 0) break;
        ++combo[k - 1];
        for (std::size_t m = k; m < budget; ++m) combo[m] = combo[m - 1] + 1;
    }
    return best;
}

}  // namespace s3vaada
