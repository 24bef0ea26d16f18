#pragma once

// Virtual adversarial perturbations found with the power method, the
// N-restart bundles behind the VAP score, and the VAT smoothness loss.

#include <cmath>
#include <span>
#include <vector>

#include "s3vaada/nn.hpp"

namespace s3vaada {

struct VatConfig {
    double epsilon = 5.0;     // perturbation norm
    double xi_scale = 1e-2;   // probe scale relative to the input RMS
    int power_iters = 1;
    int restarts = 5;         // N

    void validate() const {
        if (!(epsilon > 0.0)) throw ValidationError("vat.epsilon must be > 0");
        if (!(xi_scale > 0.0)) throw ValidationError("vat.xi_scale must be > 0");
        if (power_iters < 1) throw ValidationError("vat.power_iters must be >= 1");
        if (restarts < 1) throw ValidationError("vat.restarts must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const VatConfig& c) {
    j = {{"epsilon", c.epsilon}, {"xi_scale", c.xi_scale}, {"power_iters", c.power_iters}, {"restarts", c.restarts}};
}
inline void from_json(const nlohmann::json& j, VatConfig& c) {
    c.epsilon = j.value("epsilon", c.epsilon);
    c.xi_scale = j.value("xi_scale", c.xi_scale);
    c.power_iters = j.value("power_iters", c.power_iters);
    c.restarts = j.value("restarts", c.restarts);
}

struct Perturbation {
    Vector r;
    /// The KL gradient vanished; r is epsilon times the random start direction.
    bool fallback = false;
};

inline Vector random_unit_vector(std::size_t dim, Rng& rng) {
    Vector u(static_cast<Eigen::Index>(dim));
    double n = 0.0;
    while (n == 0.0) {
        for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.normal();
        n = u.norm();
    }
    return u / n;
}

/// Probe scale for the finite step x + xi u.
inline double probe_scale(const Vector& x, const VatConfig& cfg) {
    const double rms = x.size() > 0 ? std::sqrt(x.squaredNorm() / static_cast<double>(x.size())) : 0.0;
    return cfg.xi_scale * (rms > 0.0 ? rms : 1.0);
}

/// Power-method direction for max_{|r| = eps} KL(h(x) || h(x + r)), given the clean output
/// `clean_probs` = h(x).
inline Perturbation vat_perturbation(const NetParams& params, const Vector& x, const Vector& clean_probs,
                                     const VatConfig& cfg, Rng& rng) {
    Vector u = random_unit_vector(static_cast<std::size_t>(x.size()), rng);
    const double xi = probe_scale(x, cfg);
    for (int it = 0; it < cfg.power_iters; ++it) {
        const ClassifierTrace probe = trace_classifier(params, x + xi * u);
        // d KL(p || q) / d logits(q) = q - p
        const Vector d_logits = probe.probs - clean_probs;
        const Vector g = backward_classifier(params, probe, d_logits, nullptr);
        const double gn = g.norm();
        if (!(gn > 0.0) || !std::isfinite(gn)) return {cfg.epsilon * u, true};
        u = g / gn;
    }
    return {cfg.epsilon * u, false};
}

inline Perturbation vat_perturbation(const NetParams& params, const Vector& x, const VatConfig& cfg, Rng& rng) {
    return vat_perturbation(params, x, trace_classifier(params, x).probs, cfg, rng);
}

struct PerturbationBundle {
    ProbDist original;
    std::vector<ProbDist> perturbed;
    std::size_t fallbacks = 0;
};

/// N independent power-method restarts evaluated at x + r_i.
inline PerturbationBundle make_bundle(const NetParams& params, const Vector& x, const VatConfig& cfg, Rng& rng) {
    const ClassifierTrace clean = trace_classifier(params, x);
    PerturbationBundle b;
    b.original = clean.distribution();
    b.perturbed.reserve(static_cast<std::size_t>(cfg.restarts));
    for (int i = 0; i < cfg.restarts; ++i) {
        const Perturbation p = vat_perturbation(params, x, clean.probs, cfg, rng);
        if (p.fallback) ++b.fallbacks;
        b.perturbed.push_back(forward_classifier(params, x + p.r));
    }
    return b;
}

/// Clean targets h(x) and perturbations r for a batch, held fixed while differentiating.
struct FrozenVat {
    std::vector<Vector> target_probs;
    std::vector<Vector> target_log_probs;
    std::vector<Vector> perturbations;
    std::size_t fallbacks = 0;

    std::size_t size() const { return perturbations.size(); }
};

inline FrozenVat freeze_vat(const NetParams& params, std::span<const Vector> batch, const VatConfig& cfg, Rng& rng) {
    FrozenVat f;
    f.target_probs.reserve(batch.size());
    f.target_log_probs.reserve(batch.size());
    f.perturbations.reserve(batch.size());
    for (const Vector& x : batch) {
        const ClassifierTrace clean = trace_classifier(params, x);
        Perturbation p = vat_perturbation(params, x, clean.probs, cfg, rng);
        if (p.fallback) ++f.fallbacks;
        f.target_probs.push_back(clean.probs);
        f.target_log_probs.push_back(clean.log_probs);
        f.perturbations.push_back(std::move(p.r));
    }
    return f;
}

/// Mean KL(target || h(x + r)) with targets and r frozen. Accumulates
/// scale * gradient into `grad` when given.
inline double vat_loss_frozen(const NetParams& params, std::span<const Vector> batch, const FrozenVat& frozen,
                              GradientSet* grad, double scale = 1.0) {
    if (batch.empty()) return 0.0;
    if (frozen.size() != batch.size()) throw DimensionError("frozen VAT data does not match batch size");
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const ClassifierTrace t = trace_classifier(params, batch[i] + frozen.perturbations[i]);
        const Vector& p = frozen.target_probs[i];
        double kl = 0.0;
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            if (p(k) > 0.0) kl += p(k) * (frozen.target_log_probs[i](k) - t.log_probs(k));
        }
        total += kl;
        if (grad != nullptr) backward_classifier(params, t, (scale * inv_b) * (t.probs - p), grad);
    }
    return std::max(total * inv_b, 0.0);
}

struct VatLoss {
    double value = 0.0;
    GradientSet grad;
    FrozenVat frozen;
};

/// VAT objective over a batch: mean KL(h(x) || h(x + r)) with r from the power method.
/// Gradient flows only through h(x + r).
inline VatLoss vat_loss(const NetParams& params, std::span<const Vector> batch, const VatConfig& cfg, Rng& rng) {
    VatLoss out;
    out.grad = GradientSet::zeros_like(params);
    out.frozen = freeze_vat(params, batch, cfg, rng);
    out.value = vat_loss_frozen(params, batch, out.frozen, &out.grad);
    return out;
}

}  // namespace s3vaada
