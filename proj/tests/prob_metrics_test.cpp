#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_support.hpp"

using namespace s3vaada;
using s3vaada::testing::random_dist;

namespace {
ProbDist pd(std::vector<double> v) { return ProbDist(std::move(v)); }
}  // namespace

TEST(ProbDist, RejectsInvalidVectors) {
    EXPECT_THROW(pd({1.0}), ValidationError);
    EXPECT_THROW(pd({0.6, 0.6}), ValidationError);
    EXPECT_THROW(pd({1.2, -0.2}), ValidationError);
    EXPECT_THROW(pd({std::nan(""), 1.0}), ValidationError);
    EXPECT_NO_THROW(pd({0.5, 0.5 + 1e-10}));
}

TEST(KlDivergence, ClosedFormValues) {
    EXPECT_NEAR(kl_divergence(pd({0.3, 0.7}), pd({0.3, 0.7})), 0.0, 1e-15);
    EXPECT_NEAR(kl_divergence(pd({1, 0}), pd({0.5, 0.5})), std::numbers::ln2, 1e-12);
    EXPECT_NEAR(kl_divergence(pd({0.5, 0.5}), pd({0.25, 0.75})), 0.5 * std::log(4.0 / 3.0), 1e-12);
    EXPECT_NEAR(0.5 * std::log(4.0 / 3.0), 0.143841, 1e-6);
}

TEST(KlDivergence, FloorKeepsZeroSecondArgumentFinite) {
    const double v = kl_divergence(pd({0.5, 0.5}), pd({1.0, 0.0}));
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, 0.5 * std::log(0.5 / 1.0) + 0.5 * std::log(0.5 / kProbFloor), 1e-9);
}

TEST(KlDivergence, LengthMismatchThrows) {
    EXPECT_THROW(kl_divergence(pd({0.5, 0.5}), pd({0.2, 0.3, 0.5})), DimensionError);
    EXPECT_THROW(bhattacharyya(pd({0.5, 0.5}), pd({0.2, 0.3, 0.5})), DimensionError);
}

TEST(KlDivergence, GibbsInequalityOnRandomPairs) {
    Rng rng(11);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t k = 2 + rng.below(8);
        const ProbDist p = random_dist(k, rng, 3.0 * rng.uniform());
        const ProbDist q = random_dist(k, rng, 3.0 * rng.uniform());
        EXPECT_GE(kl_divergence(p, q), -1e-9);
        EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-9);
    }
}

TEST(Entropy, ClosedFormValues) {
    EXPECT_EQ(entropy(pd({1, 0, 0})), 0.0);
    EXPECT_NEAR(entropy(ProbDist::uniform(4)), std::log(4.0), 1e-12);
    EXPECT_NEAR(entropy(pd({0.5, 0.25, 0.25})), 1.5 * std::numbers::ln2, 1e-12);
}

TEST(Entropy, BoundedByLogK) {
    Rng rng(12);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t k = 2 + rng.below(8);
        const double h = entropy(random_dist(k, rng, 4.0 * rng.uniform()));
        EXPECT_GE(h, 0.0);
        EXPECT_LE(h, std::log(static_cast<double>(k)));
    }
}

TEST(Bhattacharyya, ClosedFormValues) {
    const ProbDist p = pd({0.2, 0.3, 0.5});
    EXPECT_NEAR(bhattacharyya(p, p), 1.0, 1e-12);
    EXPECT_EQ(bhattacharyya(pd({1, 0}), pd({0, 1})), 0.0);
    EXPECT_NEAR(bhattacharyya(pd({0.5, 0.5}), pd({0.25, 0.75})), std::sqrt(0.125) + std::sqrt(0.375), 1e-12);
}

TEST(Bhattacharyya, SymmetricAndInUnitInterval) {
    Rng rng(13);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t k = 2 + rng.below(6);
        const ProbDist p = random_dist(k, rng, 2.0);
        const ProbDist q = random_dist(k, rng, 2.0);
        const double a = bhattacharyya(p, q);
        EXPECT_LE(std::abs(a - bhattacharyya(q, p)), 1e-12);
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
}

TEST(Similarity, ClosedFormValues) {
    EXPECT_EQ(similarity(pd({1, 0}), pd({0, 1})), 0.0);
    const ProbDist p = pd({0.1, 0.9});
    EXPECT_NEAR(similarity(p, p), -std::log(kSimilarityClamp), 1e-6);
    EXPECT_NEAR(similarity(p, p), 13.8155, 1e-4);
    const double bc = std::sqrt(0.125) + std::sqrt(0.375);
    EXPECT_NEAR(similarity(pd({0.5, 0.5}), pd({0.25, 0.75})), -std::log(1.0 - bc), 1e-9);
    EXPECT_NEAR(similarity(pd({0.5, 0.5}), pd({0.25, 0.75})), 3.3792, 1e-4);
}

TEST(Similarity, MonotoneInBhattacharyya) {
    Rng rng(14);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t k = 2 + rng.below(5);
        const ProbDist p = random_dist(k, rng, 2.0);
        ProbDist q = random_dist(k, rng, 2.0);
        ProbDist r = random_dist(k, rng, 2.0);
        if (bhattacharyya(p, q) > bhattacharyya(p, r)) std::swap(q, r);
        EXPECT_LE(similarity(p, q), similarity(p, r));
        EXPECT_TRUE(std::isfinite(similarity(p, r)));
        EXPECT_EQ(similarity(p, q), similarity(q, p));
    }
}
