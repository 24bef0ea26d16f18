#pragma once

// Adaptation objective: supervised NLL + lambda_d * domain BCE
// + lambda_s * VAT(labeled) + lambda_t * (VAT(unlabeled) + conditional entropy),
// and the minibatch SGD loop that optimizes it with global gradient clipping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s3vaada/nn.hpp"
#include "s3vaada/perturb.hpp"

namespace s3vaada {

struct LossWeights {
    double lambda_d = 0.01;
    double lambda_s = 1.0;
    double lambda_t = 0.01;

    void validate() const {
        if (!(lambda_d >= 0.0) || !(lambda_s >= 0.0) || !(lambda_t >= 0.0)) {
            throw ValidationError("loss weights must be >= 0");
        }
    }
};

inline void to_json(nlohmann::json& j, const LossWeights& w) {
    j = {{"lambda_d", w.lambda_d}, {"lambda_s", w.lambda_s}, {"lambda_t", w.lambda_t}};
}
inline void from_json(const nlohmann::json& j, LossWeights& w) {
    w.lambda_d = j.value("lambda_d", w.lambda_d);
    w.lambda_s = j.value("lambda_s", w.lambda_s);
    w.lambda_t = j.value("lambda_t", w.lambda_t);
}

struct TrainConfig {
    std::size_t batch_size = 16;
    int epochs = 100;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    double clip_norm = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size == 0) throw ValidationError("train.batch_size must be > 0");
        if (epochs < 0) throw ValidationError("train.epochs must be >= 0");
        if (!(learning_rate > 0.0)) throw ValidationError("train.learning_rate must be > 0");
        if (!(momentum >= 0.0)) throw ValidationError("train.momentum must be >= 0");
        if (!(weight_decay >= 0.0)) throw ValidationError("train.weight_decay must be >= 0");
        if (!(clip_norm > 0.0)) throw ValidationError("train.clip_norm must be > 0");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"batch_size", c.batch_size}, {"epochs", c.epochs},       {"learning_rate", c.learning_rate},
         {"momentum", c.momentum},     {"weight_decay", c.weight_decay}, {"clip_norm", c.clip_norm}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
}

// ---------------------------------------------------------------------------
// Individual terms. Each returns the batch mean and, when `grad` is given,
// accumulates scale * d(term)/d(params) into it.

/// Mean negative log-likelihood of the true labels.
inline double supervised_loss(const NetParams& params, std::span<const Vector> xs, std::span<const int> ys,
                              GradientSet* grad = nullptr, double scale = 1.0) {
    if (xs.empty()) throw ValidationError("supervised_loss: empty batch");
    if (xs.size() != ys.size()) throw DimensionError("supervised_loss: features and labels differ in length");
    const double inv_b = 1.0 / static_cast<double>(xs.size());
    const auto k = static_cast<int>(params.classifier.out());
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (ys[i] < 0 || ys[i] >= k) throw ValidationError("supervised_loss: label out of range");
        const ClassifierTrace t = trace_classifier(params, xs[i]);
        total -= t.log_probs(ys[i]);
        if (grad != nullptr) {
            Vector d = t.probs;
            d(ys[i]) -= 1.0;
            backward_classifier(params, t, (scale * inv_b) * d, grad);
        }
    }
    return total * inv_b;
}

/// Mean prediction entropy over an unlabeled batch.
inline double conditional_entropy_loss(const NetParams& params, std::span<const Vector> xs,
                                       GradientSet* grad = nullptr, double scale = 1.0) {
    if (xs.empty()) throw ValidationError("conditional_entropy_loss: empty batch");
    const double inv_b = 1.0 / static_cast<double>(xs.size());
    double total = 0.0;
    for (const Vector& x : xs) {
        const ClassifierTrace t = trace_classifier(params, x);
        const double h = -(t.probs.array() * t.log_probs.array()).sum();
        total += h;
        if (grad != nullptr) {
            // dH/dz_j = -p_j (ln p_j + H)
            const Vector d = -(t.probs.array() * (t.log_probs.array() + h)).matrix();
            backward_classifier(params, t, (scale * inv_b) * d, grad);
        }
    }
    return total * inv_b;
}

struct DomainLoss {
    double value = 0.0;          // labeled side + unlabeled side
    double labeled_side = 0.0;   // mean -ln D(g(x)) over the labeled pool
    double unlabeled_side = 0.0; // mean -ln(1 - D(g(x))) over D_u
};

/// Discriminator binary cross-entropy, labeled pool = 1, unlabeled target = 0.
/// `grad` receives the plain (unreversed) gradient w.r.t. discriminator and feature blocks.
inline DomainLoss domain_loss(const NetParams& params, std::span<const Vector> labeled, std::span<const Vector> unlabeled,
                              GradientSet* grad = nullptr, double scale = 1.0) {
    if (labeled.empty() || unlabeled.empty()) throw ValidationError("domain_loss: empty batch");
    DomainLoss out;
    auto side = [&](std::span<const Vector> xs, bool is_labeled) {
        const double inv_b = 1.0 / static_cast<double>(xs.size());
        double total = 0.0;
        for (const Vector& x : xs) {
            const FeatureTrace f = trace_features(params, x);
            const DiscriminatorTrace d = trace_discriminator(params, f.embedding);
            total += is_labeled ? softplus(-d.logit) : softplus(d.logit);
            if (grad != nullptr) {
                const double d_logit = (is_labeled ? d.prob - 1.0 : d.prob) * scale * inv_b;
                const Vector d_emb = backward_discriminator(params, d, d_logit, grad);
                backward_features(params, f, d_emb, grad);
            }
        }
        return total * inv_b;
    };
    out.labeled_side = side(labeled, true);
    out.unlabeled_side = side(unlabeled, false);
    out.value = out.labeled_side + out.unlabeled_side;
    return out;
}

/// Gradient-reversal routing of the domain term: discriminator blocks keep the
/// minimizing gradient, feature blocks get -lambda_d times it, classifier gets nothing.
inline GradientSet route_domain_gradient(const GradientSet& raw, double lambda_d) {
    GradientSet out = raw;
    out.for_each_layer([&](std::string_view, BlockGroup group, Dense& l) {
        if (group == BlockGroup::Feature) {
            l.weight *= -lambda_d;
            l.bias *= -lambda_d;
        } else if (group == BlockGroup::Classifier) {
            l.weight.setZero();
            l.bias.setZero();
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Combined objective

struct LossBatches {
    std::vector<Vector> labeled_x;
    std::vector<int> labeled_y;
    std::vector<Vector> unlabeled_x;
    // Separate stream for the discriminator.
    std::vector<Vector> disc_labeled_x;
    std::vector<Vector> disc_unlabeled_x;
};

struct FrozenTerms {
    FrozenVat labeled;
    FrozenVat unlabeled;
};

/// Which terms to evaluate. A term with zero weight can be skipped during training.
struct TermMask {
    bool domain = true;
    bool vat_labeled = true;
    bool unlabeled = true;

    static TermMask from_weights(const LossWeights& w) {
        return {w.lambda_d != 0.0, w.lambda_s != 0.0, w.lambda_t != 0.0};
    }
};

enum class Term { Supervised, Domain, VatLabeled, VatUnlabeled, Entropy };
inline constexpr std::array<Term, 5> kAllTerms = {Term::Supervised, Term::Domain, Term::VatLabeled,
                                                  Term::VatUnlabeled, Term::Entropy};

inline std::string_view term_name(Term t) {
    switch (t) {
        case Term::Supervised: return "supervised";
        case Term::Domain: return "domain";
        case Term::VatLabeled: return "vat_labeled";
        case Term::VatUnlabeled: return "vat_unlabeled";
        case Term::Entropy: return "conditional_entropy";
    }
    return "?";
}

struct TermValues {
    double supervised = 0.0;
    double domain = 0.0;
    double vat_labeled = 0.0;
    double vat_unlabeled = 0.0;
    double entropy = 0.0;

    double get(Term t) const {
        switch (t) {
            case Term::Supervised: return supervised;
            case Term::Domain: return domain;
            case Term::VatLabeled: return vat_labeled;
            case Term::VatUnlabeled: return vat_unlabeled;
            case Term::Entropy: return entropy;
        }
        return 0.0;
    }

    double weighted(const LossWeights& w) const {
        return supervised + w.lambda_d * domain + w.lambda_s * vat_labeled + w.lambda_t * (vat_unlabeled + entropy);
    }
};

/// Per-term values and plain (unreversed, unweighted) gradients.
struct LossTerms {
    TermValues values;
    GradientSet g_supervised, g_domain, g_vat_labeled, g_vat_unlabeled, g_entropy;

    const GradientSet& gradient(Term t) const {
        switch (t) {
            case Term::Supervised: return g_supervised;
            case Term::Domain: return g_domain;
            case Term::VatLabeled: return g_vat_labeled;
            case Term::VatUnlabeled: return g_vat_unlabeled;
            case Term::Entropy: return g_entropy;
        }
        return g_supervised;
    }
};

inline FrozenTerms freeze_terms(const NetParams& params, const LossBatches& b, const VatConfig& cfg, Rng& rng,
                                TermMask mask = {}) {
    FrozenTerms f;
    if (mask.vat_labeled) f.labeled = freeze_vat(params, b.labeled_x, cfg, rng);
    if (mask.unlabeled && !b.unlabeled_x.empty()) f.unlabeled = freeze_vat(params, b.unlabeled_x, cfg, rng);
    return f;
}

/// Evaluates every (unmasked) term with frozen VAT perturbations. Terms on D_u and the
/// domain term are zero when their batches are empty.
inline LossTerms evaluate_terms(const NetParams& params, const LossBatches& b, const FrozenTerms& frozen,
                                TermMask mask = {}) {
    LossTerms t;
    for (GradientSet* g : {&t.g_supervised, &t.g_domain, &t.g_vat_labeled, &t.g_vat_unlabeled, &t.g_entropy}) {
        *g = GradientSet::zeros_like(params);
    }
    t.values.supervised = supervised_loss(params, b.labeled_x, b.labeled_y, &t.g_supervised);
    if (mask.domain && !b.disc_labeled_x.empty() && !b.disc_unlabeled_x.empty()) {
        t.values.domain = domain_loss(params, b.disc_labeled_x, b.disc_unlabeled_x, &t.g_domain).value;
    }
    if (mask.vat_labeled) t.values.vat_labeled = vat_loss_frozen(params, b.labeled_x, frozen.labeled, &t.g_vat_labeled);
    if (mask.unlabeled && !b.unlabeled_x.empty()) {
        t.values.vat_unlabeled = vat_loss_frozen(params, b.unlabeled_x, frozen.unlabeled, &t.g_vat_unlabeled);
        t.values.entropy = conditional_entropy_loss(params, b.unlabeled_x, &t.g_entropy);
    }
    return t;
}

/// Gradient of the scalar objective (no reversal). This is what finite differences see.
inline GradientSet scalar_gradient(const LossTerms& t, const LossWeights& w) {
    GradientSet g = t.g_supervised;
    g.add_scaled(t.g_domain, w.lambda_d);
    g.add_scaled(t.g_vat_labeled, w.lambda_s);
    g.add_scaled(t.g_vat_unlabeled, w.lambda_t);
    g.add_scaled(t.g_entropy, w.lambda_t);
    return g;
}

/// Gradient applied by the optimizer: weighted term gradients with the domain term reversed.
inline GradientSet update_gradient(const LossTerms& t, const LossWeights& w) {
    GradientSet g = t.g_supervised;
    g.add_scaled(route_domain_gradient(t.g_domain, w.lambda_d), 1.0);
    g.add_scaled(t.g_vat_labeled, w.lambda_s);
    g.add_scaled(t.g_vat_unlabeled, w.lambda_t);
    g.add_scaled(t.g_entropy, w.lambda_t);
    return g;
}

struct TotalLoss {
    double value = 0.0;
    LossTerms terms;
    GradientSet update;  // with reversal, before clipping
};

inline TotalLoss total_loss(const NetParams& params, const LossBatches& b, const LossWeights& w, const VatConfig& cfg,
                            Rng& rng, TermMask mask = {}) {
    const FrozenTerms frozen = freeze_terms(params, b, cfg, rng, mask);
    TotalLoss out;
    out.terms = evaluate_terms(params, b, frozen, mask);
    out.value = out.terms.values.weighted(w);
    out.update = update_gradient(out.terms, w);
    return out;
}

// ---------------------------------------------------------------------------
// Training loop

struct LabeledSet {
    std::vector<Vector> x;
    std::vector<int> y;

    std::size_t size() const { return x.size(); }
    bool empty() const { return x.empty(); }
};

/// Index of the largest entry; ties go to the lowest index.
inline int argmax_lowest(const Vector& v) {
    int best = 0;
    for (Eigen::Index k = 1; k < v.size(); ++k) {
        if (v(k) > v(best)) best = static_cast<int>(k);
    }
    return best;
}

inline double accuracy(const NetParams& params, std::span<const Vector> xs, std::span<const int> ys) {
    if (xs.empty()) throw ValidationError("accuracy: empty set");
    if (xs.size() != ys.size()) throw DimensionError("accuracy: features and labels differ in length");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (argmax_lowest(trace_classifier(params, xs[i]).logits) == ys[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(xs.size());
}

/// Endless reshuffled pass over [0, n).
class IndexStream {
public:
    IndexStream(std::size_t n, Rng rng) : order_(n), rng_(std::move(rng)) {
        for (std::size_t i = 0; i < n; ++i) order_[i] = i;
        pos_ = n;
    }

    std::vector<std::size_t> next(std::size_t count) {
        std::vector<std::size_t> out;
        if (order_.empty()) return out;
        out.reserve(count);
        while (out.size() < count) {
            if (pos_ == order_.size()) {
                rng_.shuffle(order_);
                pos_ = 0;
            }
            out.push_back(order_[pos_++]);
        }
        return out;
    }

private:
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    Rng rng_;
};

struct EpochRecord {
    int epoch = 0;
    TermValues terms;  // epoch means
    double total = 0.0;
    double val_accuracy = 0.0;
};

struct StepInfo {
    int epoch = 0;
    std::size_t step = 0;
    double pre_clip_norm = 0.0;
    double post_clip_norm = 0.0;
};

struct FitHooks {
    std::function<void(const StepInfo&)> on_step;
    std::function<void(int epoch, const NetParams&)> on_epoch;
};

struct FitResult {
    NetParams params;  // best-validation snapshot
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val_accuracy = 0.0;
};

struct TrainData {
    const LabeledSet* labeled = nullptr;           // D_s and D_t
    const std::vector<Vector>* unlabeled = nullptr;  // D_u
    const LabeledSet* validation = nullptr;
};

inline void require_finite_terms(const TermValues& v, int epoch) {
    for (Term t : kAllTerms) {
        if (!std::isfinite(v.get(t))) {
            throw NumericsError("non-finite " + std::string(term_name(t)) + " loss at epoch " + std::to_string(epoch));
        }
    }
}

/// Minibatch SGD on the combined objective. Labeled, unlabeled and discriminator
/// batches come from three independently shuffled streams; one epoch is one pass
/// over the labeled stream. Returns the snapshot with the best validation accuracy
/// (earliest on ties), or the initial parameters when epochs == 0.
inline FitResult fit(const TrainData& data, NetParams params, const TrainConfig& cfg, const LossWeights& weights,
                     const VatConfig& vat, const FitHooks& hooks = {}) {
    cfg.validate();
    weights.validate();
    vat.validate();
    if (data.labeled == nullptr || data.labeled->empty()) throw ValidationError("fit: labeled pool is empty");
    static const std::vector<Vector> kNoUnlabeled;
    const std::vector<Vector>& unlabeled = data.unlabeled ? *data.unlabeled : kNoUnlabeled;
    const LabeledSet& labeled = *data.labeled;

    FitResult result;
    result.params = params;
    if (cfg.epochs == 0) return result;

    const TermMask mask = TermMask::from_weights(weights);
    IndexStream lab_stream(labeled.size(), Rng::derive(cfg.seed, 1));
    IndexStream unl_stream(unlabeled.size(), Rng::derive(cfg.seed, 2));
    IndexStream disc_lab_stream(labeled.size(), Rng::derive(cfg.seed, 3));
    IndexStream disc_unl_stream(unlabeled.size(), Rng::derive(cfg.seed, 4));
    Rng vat_rng = Rng::derive(cfg.seed, 5);
    OptimState opt = OptimState::for_params(params, cfg.learning_rate, cfg.momentum, cfg.weight_decay);

    const std::size_t steps = (labeled.size() + cfg.batch_size - 1) / cfg.batch_size;
    const bool have_val = data.validation != nullptr && !data.validation->empty();
    result.best_val_accuracy = -1.0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t s = 0; s < steps; ++s) {
            LossBatches b;
            for (std::size_t i : lab_stream.next(cfg.batch_size)) {
                b.labeled_x.push_back(labeled.x[i]);
                b.labeled_y.push_back(labeled.y[i]);
            }
            if (!unlabeled.empty()) {
                if (mask.unlabeled) {
                    for (std::size_t i : unl_stream.next(cfg.batch_size)) b.unlabeled_x.push_back(unlabeled[i]);
                }
                if (mask.domain) {
                    for (std::size_t i : disc_lab_stream.next(cfg.batch_size)) b.disc_labeled_x.push_back(labeled.x[i]);
                    for (std::size_t i : disc_unl_stream.next(cfg.batch_size)) b.disc_unlabeled_x.push_back(unlabeled[i]);
                }
            }
            TotalLoss loss = total_loss(params, b, weights, vat, vat_rng, mask);
            require_finite_terms(loss.terms.values, epoch);

            StepInfo info{epoch, s, global_norm(loss.update), 0.0};
            GradientSet clipped = clip_gradients(std::move(loss.update), cfg.clip_norm);
            info.post_clip_norm = global_norm(clipped);
            if (!std::isfinite(info.pre_clip_norm)) {
                throw NumericsError("non-finite gradient at epoch " + std::to_string(epoch));
            }
            if (hooks.on_step) hooks.on_step(info);
            sgd_step(params, clipped, opt);

            const TermValues& v = loss.terms.values;
            rec.terms.supervised += v.supervised;
            rec.terms.domain += v.domain;
            rec.terms.vat_labeled += v.vat_labeled;
            rec.terms.vat_unlabeled += v.vat_unlabeled;
            rec.terms.entropy += v.entropy;
            rec.total += loss.value;
        }
        const double inv = 1.0 / static_cast<double>(steps);
        rec.terms.supervised *= inv;
        rec.terms.domain *= inv;
        rec.terms.vat_labeled *= inv;
        rec.terms.vat_unlabeled *= inv;
        rec.terms.entropy *= inv;
        rec.total *= inv;
        if (!params.all_finite()) throw NumericsError("non-finite parameters at epoch " + std::to_string(epoch));

        rec.val_accuracy = have_val ? accuracy(params, data.validation->x, data.validation->y) : 0.0;
        if (!have_val || rec.val_accuracy > result.best_val_accuracy) {
            result.best_val_accuracy = rec.val_accuracy;
            result.best_epoch = epoch;
            result.params = params;
        }
        result.history.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(epoch, params);
    }
    return result;
}

}  // namespace s3vaada
