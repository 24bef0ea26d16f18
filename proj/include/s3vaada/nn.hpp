#pragma once

// Small fully-connected model: feature extractor (d -> H -> E), linear softmax
// classifier (E -> K) and a logistic domain discriminator (E -> Hd -> Hd -> 1).
// Gradients are written out by hand; every backward routine accumulates into
// a caller-owned GradientSet so loss terms can be summed without copies.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "s3vaada/errors.hpp"
#include "s3vaada/prob_metrics.hpp"
#include "s3vaada/rng.hpp"

namespace s3vaada {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct NetDims {
    std::size_t input = 2;
    std::size_t hidden = 32;
    std::size_t embedding = 16;
    std::size_t classes = 2;
    std::size_t disc_hidden = 32;

    bool operator==(const NetDims&) const = default;
};

inline void to_json(nlohmann::json& j, const NetDims& d) {
    j = {{"input", d.input}, {"hidden", d.hidden}, {"embedding", d.embedding},
         {"classes", d.classes}, {"disc_hidden", d.disc_hidden}};
}

inline void from_json(const nlohmann::json& j, NetDims& d) {
    d.input = j.value("input", d.input);
    d.hidden = j.value("hidden", d.hidden);
    d.embedding = j.value("embedding", d.embedding);
    d.classes = j.value("classes", d.classes);
    d.disc_hidden = j.value("disc_hidden", d.disc_hidden);
}

struct Dense {
    Matrix weight;  // out x in
    Vector bias;    // out

    Dense() = default;
    Dense(std::size_t in, std::size_t out)
        : weight(Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in))),
          bias(Vector::Zero(static_cast<Eigen::Index>(out))) {}

    Vector apply(const Vector& x) const { return weight * x + bias; }
    std::size_t in() const { return static_cast<std::size_t>(weight.cols()); }
    std::size_t out() const { return static_cast<std::size_t>(weight.rows()); }
};

enum class BlockGroup { Feature, Classifier, Discriminator };

/// One weight/bias set per layer. Tagged so that parameters and gradients
/// are distinct types with identical layout.
template <typename Tag>
struct LayerSet {
    Dense feature1;
    Dense feature2;
    Dense classifier;
    Dense disc1;
    Dense disc2;
    Dense disc3;

    static constexpr std::array<std::string_view, 6> kLayerNames = {
        "feature1", "feature2", "classifier", "disc1", "disc2", "disc3"};

    static LayerSet zeros(const NetDims& d) {
        LayerSet s;
        s.feature1 = Dense(d.input, d.hidden);
        s.feature2 = Dense(d.hidden, d.embedding);
        s.classifier = Dense(d.embedding, d.classes);
        s.disc1 = Dense(d.embedding, d.disc_hidden);
        s.disc2 = Dense(d.disc_hidden, d.disc_hidden);
        s.disc3 = Dense(d.disc_hidden, 1);
        return s;
    }

    template <typename Other>
    static LayerSet zeros_like(const Other& other) {
        return zeros(other.dims());
    }

    NetDims dims() const {
        return {feature1.in(), feature1.out(), feature2.out(), classifier.out(), disc1.out()};
    }

    std::array<Dense*, 6> layers() { return {&feature1, &feature2, &classifier, &disc1, &disc2, &disc3}; }
    std::array<const Dense*, 6> layers() const {
        return {&feature1, &feature2, &classifier, &disc1, &disc2, &disc3};
    }

    static BlockGroup group_of(std::size_t layer_index) {
        if (layer_index < 2) return BlockGroup::Feature;
        if (layer_index == 2) return BlockGroup::Classifier;
        return BlockGroup::Discriminator;
    }

    /// f(name, group, Dense&) for each layer, in fixed order.
    template <typename F>
    void for_each_layer(F&& f) {
        auto ls = layers();
        for (std::size_t i = 0; i < ls.size(); ++i) f(kLayerNames[i], group_of(i), *ls[i]);
    }
    template <typename F>
    void for_each_layer(F&& f) const {
        auto ls = layers();
        for (std::size_t i = 0; i < ls.size(); ++i) f(kLayerNames[i], group_of(i), *ls[i]);
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Dense* l : layers()) n += static_cast<std::size_t>(l->weight.size() + l->bias.size());
        return n;
    }

    /// Flat view index -> scalar reference, weights (row-major) then bias, layer by layer.
    double& at(std::size_t flat) {
        for (Dense* l : layers()) {
            const auto nw = static_cast<std::size_t>(l->weight.size());
            if (flat < nw) {
                const auto cols = static_cast<std::size_t>(l->weight.cols());
                return l->weight(static_cast<Eigen::Index>(flat / cols), static_cast<Eigen::Index>(flat % cols));
            }
            flat -= nw;
            const auto nb = static_cast<std::size_t>(l->bias.size());
            if (flat < nb) return l->bias(static_cast<Eigen::Index>(flat));
            flat -= nb;
        }
        throw DimensionError("flat parameter index out of range");
    }
    double at(std::size_t flat) const { return const_cast<LayerSet*>(this)->at(flat); }

    template <typename Other>
    void require_same_shape(const Other& other) const {
        auto a = layers();
        auto b = other.layers();
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i]->weight.rows() != b[i]->weight.rows() || a[i]->weight.cols() != b[i]->weight.cols() ||
                a[i]->bias.size() != b[i]->bias.size()) {
                throw DimensionError("parameter block shape mismatch in " + std::string(kLayerNames[i]));
            }
        }
    }

    /// this += scale * other
    template <typename Other>
    void add_scaled(const Other& other, double scale) {
        require_same_shape(other);
        auto a = layers();
        auto b = other.layers();
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i]->weight += scale * b[i]->weight;
            a[i]->bias += scale * b[i]->bias;
        }
    }

    void scale(double s) {
        for (Dense* l : layers()) {
            l->weight *= s;
            l->bias *= s;
        }
    }

    double squared_norm() const {
        double n = 0.0;
        for (const Dense* l : layers()) n += l->weight.squaredNorm() + l->bias.squaredNorm();
        return n;
    }

    bool all_finite() const {
        for (const Dense* l : layers()) {
            if (!l->weight.allFinite() || !l->bias.allFinite()) return false;
        }
        return true;
    }

    bool operator==(const LayerSet& o) const {
        auto a = layers();
        auto b = o.layers();
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i]->weight.rows() != b[i]->weight.rows() || a[i]->weight.cols() != b[i]->weight.cols() ||
                a[i]->bias.size() != b[i]->bias.size() || a[i]->weight != b[i]->weight || a[i]->bias != b[i]->bias) {
                return false;
            }
        }
        return true;
    }
};

struct ParamsTag {};
struct GradTag {};
using NetParams = LayerSet<ParamsTag>;
using GradientSet = LayerSet<GradTag>;

/// Glorot-uniform weights, zero biases.
inline NetParams init_params(const NetDims& dims, Rng& rng) {
    NetParams p = NetParams::zeros(dims);
    p.for_each_layer([&](std::string_view, BlockGroup, Dense& l) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.in() + l.out()));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = rng.uniform(-limit, limit);
        }
    });
    return p;
}

// ---------------------------------------------------------------------------
// Forward passes

inline Vector relu(const Vector& z) { return z.cwiseMax(0.0); }

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// Clamped to the open interval (0, 1) in double precision.
inline double logistic(double x) {
    double p;
    if (x >= 0.0) {
        p = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        p = e / (1.0 + e);
    }
    return std::clamp(p, std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
}

inline Vector log_softmax(const Vector& logits) {
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return (logits.array() - lse).matrix();
}

struct FeatureTrace {
    Vector input;
    Vector pre1;
    Vector hidden1;
    Vector embedding;
};

struct ClassifierTrace {
    FeatureTrace features;
    Vector logits;
    Vector log_probs;
    Vector probs;

    ProbDist distribution() const {
        return ProbDist::trusted(std::vector<double>(probs.data(), probs.data() + probs.size()));
    }
};

struct DiscriminatorTrace {
    Vector embedding;
    Vector pre1, hidden1, pre2, hidden2;
    double logit = 0.0;
    double prob = 0.5;
};

inline FeatureTrace trace_features(const NetParams& params, const Vector& x) {
    if (static_cast<std::size_t>(x.size()) != params.feature1.in()) {
        throw DimensionError("input has length " + std::to_string(x.size()) + ", network expects " +
                             std::to_string(params.feature1.in()));
    }
    FeatureTrace t;
    t.input = x;
    t.pre1 = params.feature1.apply(x);
    t.hidden1 = relu(t.pre1);
    t.embedding = params.feature2.apply(t.hidden1);
    return t;
}

/// g(x): the embedding fed to both heads.
inline Vector forward_features(const NetParams& params, const Vector& x) {
    return trace_features(params, x).embedding;
}

inline ClassifierTrace trace_classifier_from(const NetParams& params, FeatureTrace features) {
    ClassifierTrace t;
    t.features = std::move(features);
    t.logits = params.classifier.apply(t.features.embedding);
    t.log_probs = log_softmax(t.logits);
    t.probs = t.log_probs.array().exp().matrix();
    return t;
}

inline ClassifierTrace trace_classifier(const NetParams& params, const Vector& x) {
    return trace_classifier_from(params, trace_features(params, x));
}

/// h(x) = softmax(classifier(g(x))).
inline ProbDist forward_classifier(const NetParams& params, const Vector& x) {
    return trace_classifier(params, x).distribution();
}

inline DiscriminatorTrace trace_discriminator(const NetParams& params, const Vector& embedding) {
    DiscriminatorTrace t;
    t.embedding = embedding;
    t.pre1 = params.disc1.apply(embedding);
    t.hidden1 = relu(t.pre1);
    t.pre2 = params.disc2.apply(t.hidden1);
    t.hidden2 = relu(t.pre2);
    t.logit = params.disc3.apply(t.hidden2)(0);
    t.prob = logistic(t.logit);
    return t;
}

/// Probability that x belongs to the labeled pool.
inline double forward_discriminator(const NetParams& params, const Vector& x) {
    return trace_discriminator(params, forward_features(params, x)).prob;
}

// ---------------------------------------------------------------------------
// Backward passes

namespace detail {
inline Vector dense_backward(const Dense& layer, Dense* grad, const Vector& input, const Vector& d_out) {
    if (grad != nullptr) {
        grad->weight.noalias() += d_out * input.transpose();
        grad->bias += d_out;
    }
    return layer.weight.transpose() * d_out;
}

inline Vector relu_backward(const Vector& pre, const Vector& d_out) {
    return (pre.array() > 0.0).select(d_out, 0.0);
}
}  // namespace detail

/// Accumulates dL/d(feature params) into `grad` (if non-null) given dL/d(embedding);
/// returns dL/d(input).
inline Vector backward_features(const NetParams& params, const FeatureTrace& t, const Vector& d_embedding,
                                GradientSet* grad) {
    Vector d_hidden = detail::dense_backward(params.feature2, grad ? &grad->feature2 : nullptr, t.hidden1, d_embedding);
    Vector d_pre1 = detail::relu_backward(t.pre1, d_hidden);
    return detail::dense_backward(params.feature1, grad ? &grad->feature1 : nullptr, t.input, d_pre1);
}

/// Backpropagates dL/d(logits) through classifier and features. Returns dL/d(input).
inline Vector backward_classifier(const NetParams& params, const ClassifierTrace& t, const Vector& d_logits,
                                  GradientSet* grad) {
    Vector d_embedding =
        detail::dense_backward(params.classifier, grad ? &grad->classifier : nullptr, t.features.embedding, d_logits);
    return backward_features(params, t.features, d_embedding, grad);
}

/// Accumulates discriminator-block gradients for dL/d(logit); returns dL/d(embedding).
inline Vector backward_discriminator(const NetParams& params, const DiscriminatorTrace& t, double d_logit,
                                     GradientSet* grad) {
    Vector d3(1);
    d3(0) = d_logit;
    Vector d_h2 = detail::dense_backward(params.disc3, grad ? &grad->disc3 : nullptr, t.hidden2, d3);
    Vector d_h1 = detail::dense_backward(params.disc2, grad ? &grad->disc2 : nullptr, t.hidden1,
                                         detail::relu_backward(t.pre2, d_h2));
    return detail::dense_backward(params.disc1, grad ? &grad->disc1 : nullptr, t.embedding,
                                  detail::relu_backward(t.pre1, d_h1));
}

/// Smallest |pre-activation| over every rectifier in the traces; finite-difference
/// checks reject instances where this is below the kink margin.
inline double min_abs_preactivation(const FeatureTrace& t) { return t.pre1.cwiseAbs().minCoeff(); }
inline double min_abs_preactivation(const DiscriminatorTrace& t) {
    return std::min(t.pre1.cwiseAbs().minCoeff(), t.pre2.cwiseAbs().minCoeff());
}

// ---------------------------------------------------------------------------
// Optimization

inline double global_norm(const GradientSet& g) { return std::sqrt(g.squared_norm()); }

/// Rescales all blocks jointly so the global L2 norm is at most `max_norm`.
inline GradientSet clip_gradients(GradientSet g, double max_norm = 1.0) {
    const double norm = global_norm(g);
    if (norm > max_norm) g.scale(max_norm / norm);
    return g;
}

struct OptimState {
    GradientSet velocity;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0005;

    static OptimState for_params(const NetParams& p, double lr = 0.01, double momentum = 0.9, double wd = 0.0005) {
        return {GradientSet::zeros_like(p), lr, momentum, wd};
    }
};

/// v <- mu v + (g + wd theta); theta <- theta - lr v. One learning rate for every block.
inline void sgd_step(NetParams& params, const GradientSet& grad, OptimState& opt) {
    params.require_same_shape(grad);
    params.require_same_shape(opt.velocity);
    auto p = params.layers();
    auto g = grad.layers();
    auto v = opt.velocity.layers();
    for (std::size_t i = 0; i < p.size(); ++i) {
        v[i]->weight = opt.momentum * v[i]->weight + g[i]->weight + opt.weight_decay * p[i]->weight;
        v[i]->bias = opt.momentum * v[i]->bias + g[i]->bias + opt.weight_decay * p[i]->bias;
        p[i]->weight -= opt.learning_rate * v[i]->weight;
        p[i]->bias -= opt.learning_rate * v[i]->bias;
    }
}

// ---------------------------------------------------------------------------
// Checkpoints: {"dims": {...}, "blocks": {"<layer>.weight": {"shape": [r, c], "data": [...]}, ...}}
// with row-major data.

template <typename Tag>
nlohmann::json to_checkpoint(const LayerSet<Tag>& params) {
    nlohmann::json blocks = nlohmann::json::object();
    params.for_each_layer([&](std::string_view name, BlockGroup, const Dense& l) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.weight.size()));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
        }
        blocks[std::string(name) + ".weight"] = {{"shape", {l.weight.rows(), l.weight.cols()}}, {"data", w}};
        blocks[std::string(name) + ".bias"] = {
            {"shape", {l.bias.size()}},
            {"data", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}};
    });
    return {{"dims", params.dims()}, {"blocks", blocks}};
}

inline NetParams from_checkpoint(const nlohmann::json& j) {
    if (!j.contains("dims") || !j.contains("blocks")) throw ValidationError("checkpoint missing dims or blocks");
    NetParams p = NetParams::zeros(j.at("dims").get<NetDims>());
    const auto& blocks = j.at("blocks");
    p.for_each_layer([&](std::string_view name, BlockGroup, Dense& l) {
        const std::string wname = std::string(name) + ".weight";
        const std::string bname = std::string(name) + ".bias";
        if (!blocks.contains(wname) || !blocks.contains(bname)) {
            throw ValidationError("checkpoint missing block " + std::string(name));
        }
        const auto w = blocks.at(wname).at("data").get<std::vector<double>>();
        const auto b = blocks.at(bname).at("data").get<std::vector<double>>();
        if (w.size() != static_cast<std::size_t>(l.weight.size()) || b.size() != static_cast<std::size_t>(l.bias.size())) {
            throw DimensionError("checkpoint block " + std::string(name) + " has wrong size");
        }
        std::size_t k = 0;
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = w[k++];
        }
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = b[static_cast<std::size_t>(r)];
    });
    return p;
}

}  // namespace s3vaada
