#pragma once

// Reference samplers: random, entropy, margin (BvSB), k-center (Core-Set),
// AADA importance weighting and BADGE k-means++ seeding.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "s3vaada/nn.hpp"
#include "s3vaada/prob_metrics.hpp"
#include "s3vaada/rng.hpp"
#include "s3vaada/selection.hpp"

namespace s3vaada {

namespace detail {
inline std::size_t clamp_budget(Selection& out, std::size_t budget, std::size_t n) {
    if (budget > n) {
        out.warnings.push_back("budget " + std::to_string(budget) + " exceeds pool size " + std::to_string(n) +
                               "; selecting the whole pool");
        return n;
    }
    return budget;
}

/// Top-B by score, descending; equal scores keep the lower index first.
inline Selection top_by_score(std::string name, std::span<const double> scores, std::size_t budget) {
    Selection out;
    out.sampler = std::move(name);
    budget = clamp_budget(out, budget, scores.size());
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double acc = 0.0;
    for (std::size_t k = 0; k < budget; ++k) {
        acc += scores[order[k]];
        out.indices.push_back(order[k]);
        out.steps.push_back({order[k], scores[order[k]], acc, std::nullopt});
    }
    out.accumulated_gain = acc;
    return out;
}
}  // namespace detail

/// Uniform sample without replacement (partial Fisher-Yates).
inline Selection random_select(std::size_t pool_size, std::size_t budget, Rng& rng) {
    Selection out;
    out.sampler = "random";
    budget = detail::clamp_budget(out, budget, pool_size);
    std::vector<std::size_t> idx(pool_size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = 0; k < budget; ++k) {
        const std::size_t j = k + static_cast<std::size_t>(rng.below(pool_size - k));
        std::swap(idx[k], idx[j]);
        out.indices.push_back(idx[k]);
        out.steps.push_back({idx[k], 0.0, 0.0, std::nullopt});
    }
    return out;
}

inline Selection entropy_select(std::span<const ProbDist> probs, std::size_t budget) {
    std::vector<double> scores;
    scores.reserve(probs.size());
    for (const auto& p : probs) scores.push_back(entropy(p));
    return detail::top_by_score("entropy", scores, budget);
}

/// Top-1 minus top-2 probability.
inline double margin(const ProbDist& p) {
    if (p.size() < 2) throw ValidationError("margin needs K >= 2");
    double first = -1.0, second = -1.0;
    for (double v : p) {
        if (v > first) {
            second = first;
            first = v;
        } else if (v > second) {
            second = v;
        }
    }
    return first - second;
}

/// Smallest margins first.
inline Selection margin_select(std::span<const ProbDist> probs, std::size_t budget) {
    std::vector<double> neg;
    neg.reserve(probs.size());
    for (const auto& p : probs) neg.push_back(-margin(p));
    Selection s = detail::top_by_score("margin", neg, budget);
    for (auto& st : s.steps) st.score = -st.score;
    s.accumulated_gain = -s.accumulated_gain;
    return s;
}

/// Greedy farthest-point selection in embedding space. `seeds` are the embeddings of
/// the already-labeled pool; with no seeds every candidate starts at +inf.
inline Selection kcenter_select(std::span<const Vector> candidates, std::span<const Vector> seeds, std::size_t budget) {
    Selection out;
    out.sampler = "kcenter";
    budget = detail::clamp_budget(out, budget, candidates.size());
    const std::size_t n = candidates.size();
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        for (const Vector& s : seeds) dist[i] = std::min(dist[i], (candidates[i] - s).norm());
    }
    std::vector<bool> taken(n, false);
    for (std::size_t step = 0; step < budget; ++step) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            if (best == n || dist[i] > dist[best]) best = i;
        }
        taken[best] = true;
        out.indices.push_back(best);
        out.steps.push_back({best, dist[best], 0.0, std::nullopt});
        for (std::size_t i = 0; i < n; ++i) dist[i] = std::min(dist[i], (candidates[i] - candidates[best]).norm());
    }
    return out;
}

inline constexpr double kDiscClamp = 1e-6;

/// entropy(h(x)) * (1 - D(x)) / D(x), D = probability of the labeled pool.
inline double aada_score(const ProbDist& p, double disc) {
    const double d = std::clamp(disc, kDiscClamp, 1.0 - kDiscClamp);
    return entropy(p) * (1.0 - d) / d;
}

inline Selection aada_select(std::span<const ProbDist> probs, std::span<const double> disc, std::size_t budget) {
    if (probs.size() != disc.size()) throw DimensionError("aada_select: probs and discriminator outputs differ in length");
    std::vector<double> scores;
    scores.reserve(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) scores.push_back(aada_score(probs[i], disc[i]));
    return detail::top_by_score("aada", scores, budget);
}

/// Flattened (h(x) - onehot(argmax h(x))) outer g(x), row-major by class.
inline Vector gradient_embedding(const ProbDist& p, const Vector& embedding) {
    std::size_t top = 0;
    for (std::size_t k = 1; k < p.size(); ++k) {
        if (p[k] > p[top]) top = k;
    }
    const auto e = embedding.size();
    Vector g(static_cast<Eigen::Index>(p.size()) * e);
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double coeff = p[k] - (k == top ? 1.0 : 0.0);
        g.segment(static_cast<Eigen::Index>(k) * e, e) = coeff * embedding;
    }
    return g;
}

enum class BadgeMode { Sampled, Deterministic };

/// k-means++ seeding on gradient embeddings. The first center is drawn with
/// probability proportional to the squared norm; in deterministic mode every
/// draw is replaced by the argmax weight.
inline Selection badge_select(std::span<const ProbDist> probs, std::span<const Vector> embeddings, std::size_t budget,
                              Rng& rng, BadgeMode mode = BadgeMode::Sampled) {
    if (probs.size() != embeddings.size()) throw DimensionError("badge_select: probs and embeddings differ in length");
    Selection out;
    out.sampler = "badge";
    const std::size_t n = probs.size();
    budget = detail::clamp_budget(out, budget, n);
    std::vector<Vector> g;
    g.reserve(n);
    for (std::size_t i = 0; i < n; ++i) g.push_back(gradient_embedding(probs[i], embeddings[i]));

    std::vector<double> weight(n);
    for (std::size_t i = 0; i < n; ++i) weight[i] = g[i].squaredNorm();
    std::vector<bool> taken(n, false);

    for (std::size_t step = 0; step < budget; ++step) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!taken[i]) total += weight[i];
        }
        std::size_t pick = n;
        if (!(total > 0.0)) {
            for (std::size_t i = 0; i < n && pick == n; ++i) {
                if (!taken[i]) pick = i;
            }
            out.warnings.push_back("all remaining gradient embeddings coincide with chosen centers; took lowest index");
        } else if (mode == BadgeMode::Deterministic) {
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && (pick == n || weight[i] > weight[pick])) pick = i;
            }
        } else {
            const double r = rng.uniform() * total;
            double cum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i] || weight[i] <= 0.0) continue;
                cum += weight[i];
                pick = i;
                if (cum > r) break;
            }
        }
        taken[pick] = true;
        out.indices.push_back(pick);
        out.steps.push_back({pick, weight[pick], 0.0, std::nullopt});
        for (std::size_t i = 0; i < n; ++i) {
            const double d2 = (g[i] - g[pick]).squaredNorm();
            weight[i] = step == 0 ? d2 : std::min(weight[i], d2);
        }
    }
    return out;
}

}  // namespace s3vaada
