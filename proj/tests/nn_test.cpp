#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace s3vaada;
using namespace s3vaada::testing;

namespace {

// Slow reference forward pass with explicit loops.
std::vector<double> naive_dense(const Dense& l, const std::vector<double>& x, bool rectify) {
    std::vector<double> out(l.out());
    for (std::size_t r = 0; r < l.out(); ++r) {
        double s = l.bias(static_cast<Eigen::Index>(r));
        for (std::size_t c = 0; c < l.in(); ++c) {
            s += l.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * x[c];
        }
        out[r] = rectify ? (s > 0.0 ? s : 0.0) : s;
    }
    return out;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

std::vector<double> naive_embedding(const NetParams& p, const Vector& x) {
    return naive_dense(p.feature2, naive_dense(p.feature1, to_std(x), true), false);
}

std::vector<double> naive_probs(const NetParams& p, const Vector& x) {
    const auto z = naive_dense(p.classifier, naive_embedding(p, x), false);
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double s = 0.0;
    std::vector<double> e;
    for (double v : z) {
        e.push_back(std::exp(v - m));
        s += e.back();
    }
    for (auto& v : e) v /= s;
    return e;
}

double naive_disc(const NetParams& p, const Vector& x) {
    const auto h = naive_dense(p.disc2, naive_dense(p.disc1, naive_embedding(p, x), true), true);
    const double z = naive_dense(p.disc3, h, false)[0];
    return 1.0 / (1.0 + std::exp(-z));
}

const NetDims kDims{3, 5, 4, 3, 6};

}  // namespace

TEST(Forward, ZeroWeightsGiveZeroEmbedding) {
    const NetParams p = NetParams::zeros(kDims);
    Vector x(3);
    x << 1.5, -2.0, 7.0;
    EXPECT_EQ(forward_features(p, x), Vector::Zero(4));
}

TEST(Forward, IdentityLayersRectify) {
    NetParams p = NetParams::zeros({2, 2, 2, 2, 2});
    p.feature1.weight = Matrix::Identity(2, 2);
    p.feature2.weight = Matrix::Identity(2, 2);
    Vector x(2);
    x << 1.0, -1.0;
    const Vector e = forward_features(p, x);
    EXPECT_EQ(e(0), 1.0);
    EXPECT_EQ(e(1), 0.0);
}

TEST(Forward, WrongInputLengthThrows) {
    const NetParams p = NetParams::zeros(kDims);
    EXPECT_THROW(forward_features(p, Vector::Zero(2)), DimensionError);
    EXPECT_THROW(forward_classifier(p, Vector::Zero(4)), DimensionError);
    EXPECT_THROW(forward_discriminator(p, Vector::Zero(1)), DimensionError);
}

TEST(Forward, MatchesNaiveOracle) {
    Rng rng(21);
    for (int t = 0; t < 50; ++t) {
        const NetParams p = random_params(kDims, rng);
        const Vector x = random_vector(3, rng, 2.0);
        const auto e_ref = naive_embedding(p, x);
        const Vector e = forward_features(p, x);
        for (std::size_t i = 0; i < e_ref.size(); ++i) EXPECT_NEAR(e(static_cast<Eigen::Index>(i)), e_ref[i], 1e-12);
        const auto q_ref = naive_probs(p, x);
        const ProbDist q = forward_classifier(p, x);
        for (std::size_t k = 0; k < q_ref.size(); ++k) EXPECT_NEAR(q[k], q_ref[k], 1e-12);
        EXPECT_NEAR(forward_discriminator(p, x), naive_disc(p, x), 1e-12);
    }
}

TEST(Forward, ZeroClassifierGivesUniform) {
    Rng rng(22);
    NetParams p = random_params(kDims, rng);
    p.classifier = Dense(4, 3);
    const ProbDist q = forward_classifier(p, random_vector(3, rng));
    for (double v : q) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Forward, SoftmaxShiftInvariance) {
    Rng rng(23);
    NetParams p = random_params(kDims, rng);
    const Vector x = random_vector(3, rng);
    const ProbDist a = forward_classifier(p, x);
    p.classifier.bias.array() += 3.7;
    const ProbDist b = forward_classifier(p, x);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
}

TEST(Forward, DiscriminatorRange) {
    Rng rng(24);
    NetParams p = random_params(kDims, rng);
    p.disc3 = Dense(6, 1);
    EXPECT_EQ(forward_discriminator(p, random_vector(3, rng)), 0.5);
    p = random_params(kDims, rng, 3.0);
    for (int t = 0; t < 200; ++t) {
        const double d = forward_discriminator(p, random_vector(3, rng, 5.0));
        EXPECT_GT(d, 0.0);
        EXPECT_LT(d, 1.0);
    }
}

TEST(Forward, Deterministic) {
    Rng rng(25);
    const NetParams p = random_params(kDims, rng);
    const Vector x = random_vector(3, rng);
    EXPECT_EQ(trace_classifier(p, x).logits, trace_classifier(p, x).logits);
    EXPECT_EQ(forward_discriminator(p, x), forward_discriminator(p, x));
}

TEST(Init, GlorotBoundsAndZeroBiases) {
    Rng rng(26);
    const NetParams p = init_params(kDims, rng);
    p.for_each_layer([](std::string_view, BlockGroup, const Dense& l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(l.in() + l.out()));
        EXPECT_LE(l.weight.cwiseAbs().maxCoeff(), bound);
        EXPECT_EQ(l.bias, Vector::Zero(l.bias.size()));
    });
}

namespace {

// Scalar test loss touching every block: sum_k c_k log p_k + a * logit(D).
double probe_loss(const NetParams& p, const std::vector<Vector>& xs, const Vector& c, double a, GradientSet* g) {
    double total = 0.0;
    for (const Vector& x : xs) {
        const ClassifierTrace t = trace_classifier(p, x);
        total += c.dot(t.log_probs);
        const DiscriminatorTrace d = trace_discriminator(p, t.features.embedding);
        total += a * d.logit;
        if (g != nullptr) {
            // d(c . log softmax)/d logits = c - sum(c) * probs
            backward_classifier(p, t, c - c.sum() * t.probs, g);
            const Vector d_emb = backward_discriminator(p, d, a, g);
            backward_features(p, t.features, d_emb, g);
        }
    }
    return total;
}

}  // namespace

TEST(Backward, MatchesCentralFiniteDifferences) {
    Rng rng(27);
    int checked = 0;
    for (int t = 0; t < 20 && checked < 5; ++t) {
        const NetParams p = random_params(kDims, rng);
        const auto xs = random_batch(4, 3, rng);
        bool kink = false;
        for (const Vector& x : xs) {
            const ClassifierTrace tr = trace_classifier(p, x);
            kink = kink || min_abs_preactivation(tr.features) < 1e-4 ||
                   min_abs_preactivation(trace_discriminator(p, tr.features.embedding)) < 1e-4;
        }
        if (kink) continue;
        ++checked;
        const Vector c = random_vector(3, rng);
        const double a = rng.normal();
        GradientSet g = GradientSet::zeros_like(p);
        probe_loss(p, xs, c, a, &g);
        NetParams w = p;
        const double h = 1e-5;
        for (std::size_t i = 0; i < w.parameter_count(); ++i) {
            const double orig = w.at(i);
            w.at(i) = orig + h;
            const double fp = probe_loss(w, xs, c, a, nullptr);
            w.at(i) = orig - h;
            const double fm = probe_loss(w, xs, c, a, nullptr);
            w.at(i) = orig;
            const double num = (fp - fm) / (2 * h);
            const double rel = relative_error(g.at(i), num, 1e-6);
            EXPECT_LE(rel, 1e-4) << "parameter " << i;
        }
    }
    EXPECT_EQ(checked, 5);
}

TEST(Backward, ZeroUpstreamGivesZeroGradient) {
    Rng rng(28);
    const NetParams p = random_params(kDims, rng);
    GradientSet g = GradientSet::zeros_like(p);
    probe_loss(p, random_batch(4, 3, rng), Vector::Zero(3), 0.0, &g);
    EXPECT_EQ(g.squared_norm(), 0.0);
}

TEST(Backward, DoublingLossScaleDoublesGradient) {
    Rng rng(29);
    const NetParams p = random_params(kDims, rng);
    const auto xs = random_batch(4, 3, rng);
    const Vector c = random_vector(3, rng);
    GradientSet g1 = GradientSet::zeros_like(p), g2 = GradientSet::zeros_like(p);
    probe_loss(p, xs, c, 0.4, &g1);
    probe_loss(p, xs, 2.0 * c, 0.8, &g2);
    for (std::size_t i = 0; i < p.parameter_count(); ++i) {
        EXPECT_LE(std::abs(g2.at(i) - 2.0 * g1.at(i)), 1e-9 * std::max(1.0, std::abs(g2.at(i))));
    }
}

TEST(Clip, UnderThresholdUnchanged) {
    GradientSet g = GradientSet::zeros(kDims);
    g.at(0) = 0.3;
    g.at(5) = 0.4;
    EXPECT_EQ(clip_gradients(g), g);
}

TEST(Clip, ScalesToUnitNormPreservingDirection) {
    GradientSet g = GradientSet::zeros(kDims);
    g.at(1) = 2.0;
    g.at(7) = 2.0;
    g.at(20) = 2.0;
    g.at(40) = 2.0;
    ASSERT_DOUBLE_EQ(global_norm(g), 4.0);
    const GradientSet c = clip_gradients(g);
    EXPECT_NEAR(global_norm(c), 1.0, 1e-9);
    for (std::size_t i = 0; i < g.parameter_count(); ++i) EXPECT_NEAR(c.at(i), g.at(i) / 4.0, 1e-15);
}

TEST(Clip, ZeroStaysZero) {
    const GradientSet g = GradientSet::zeros(kDims);
    EXPECT_EQ(clip_gradients(g), g);
}

TEST(Clip, NeverIncreasesNorm) {
    Rng rng(30);
    for (int t = 0; t < 100; ++t) {
        GradientSet g = GradientSet::zeros(kDims);
        const double s = std::exp(rng.uniform(-4.0, 4.0));
        for (std::size_t i = 0; i < g.parameter_count(); ++i) g.at(i) = rng.normal(0.0, s);
        const GradientSet c = clip_gradients(g);
        EXPECT_LE(global_norm(c), std::min(global_norm(g), 1.0) + 1e-12);
        const double cos = [&] {
            double dot = 0.0;
            for (std::size_t i = 0; i < g.parameter_count(); ++i) dot += g.at(i) * c.at(i);
            return dot / (global_norm(g) * global_norm(c));
        }();
        EXPECT_NEAR(cos, 1.0, 1e-12);
    }
}

TEST(Sgd, ZeroEverythingLeavesParams) {
    Rng rng(31);
    NetParams p = random_params(kDims, rng);
    const NetParams before = p;
    OptimState opt = OptimState::for_params(p, 0.01, 0.0, 0.0);
    sgd_step(p, GradientSet::zeros_like(p), opt);
    EXPECT_EQ(p, before);
}

TEST(Sgd, HandStepOnOneScalar) {
    NetParams p = NetParams::zeros({1, 1, 1, 2, 1});
    p.feature1.weight(0, 0) = 1.0;
    GradientSet g = GradientSet::zeros_like(p);
    g.feature1.weight(0, 0) = 1.0;
    OptimState opt = OptimState::for_params(p, 0.01, 0.9, 0.0);
    sgd_step(p, g, opt);
    EXPECT_DOUBLE_EQ(p.feature1.weight(0, 0), 0.99);
    EXPECT_DOUBLE_EQ(opt.velocity.feature1.weight(0, 0), 1.0);
    sgd_step(p, g, opt);
    EXPECT_DOUBLE_EQ(opt.velocity.feature1.weight(0, 0), 1.9);
    EXPECT_DOUBLE_EQ(p.feature1.weight(0, 0), 0.99 - 0.019);
}

TEST(Sgd, WeightDecayEntersVelocity) {
    NetParams p = NetParams::zeros({1, 1, 1, 2, 1});
    p.disc1.weight(0, 0) = 2.0;
    OptimState opt = OptimState::for_params(p, 0.1, 0.9, 0.5);
    sgd_step(p, GradientSet::zeros_like(p), opt);
    EXPECT_DOUBLE_EQ(opt.velocity.disc1.weight(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(p.disc1.weight(0, 0), 1.9);
}

TEST(Sgd, SameLearningRateForEveryBlock) {
    Rng rng(32);
    NetParams p = random_params(kDims, rng);
    const NetParams before = p;
    GradientSet g = GradientSet::zeros_like(p);
    for (std::size_t i = 0; i < g.parameter_count(); ++i) g.at(i) = rng.normal() + 3.0;
    OptimState opt = OptimState::for_params(p, 0.01, 0.9, 0.0);
    sgd_step(p, g, opt);
    for (std::size_t i = 0; i < g.parameter_count(); ++i) {
        EXPECT_NEAR((before.at(i) - p.at(i)) / g.at(i), 0.01, 1e-12) << "parameter " << i;
    }
}

TEST(Sgd, ShapeMismatchThrows) {
    NetParams p = NetParams::zeros(kDims);
    OptimState opt = OptimState::for_params(p);
    EXPECT_THROW(sgd_step(p, GradientSet::zeros({2, 5, 4, 3, 6}), opt), DimensionError);
}

TEST(Checkpoint, JsonRoundTripIsExact) {
    Rng rng(33);
    const NetParams p = random_params(kDims, rng);
    const nlohmann::json j = to_checkpoint(p);
    EXPECT_EQ(j.at("blocks").at("feature1.weight").at("shape"), nlohmann::json::array({5, 3}));
    EXPECT_EQ(j.at("blocks").at("feature1.weight").at("data")[1].get<double>(), p.feature1.weight(0, 1));
    const NetParams q = from_checkpoint(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(p, q);
}

TEST(Checkpoint, MissingBlockRejected) {
    nlohmann::json j = to_checkpoint(NetParams::zeros(kDims));
    j["blocks"].erase("disc2.bias");
    EXPECT_THROW(from_checkpoint(j), ValidationError);
}
