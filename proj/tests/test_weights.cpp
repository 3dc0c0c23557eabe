#include <cmath>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "stmc/weights.hpp"

using namespace stmc;

namespace {

SuperBox single(int cameras, int camera, const Embedding& feat, GroundPoint p = {}) {
    Detection d;
    d.camera = camera;
    d.feat = feat;
    d.pos_bev = p;
    d.bbox = {0, 0, 10, 10};
    const Detection* ptr = &d;
    return fill_missing(make_superbox(cameras, 0, std::span(&ptr, 1)));
}

Embedding unit2(double angle) {
    Embedding v(2);
    v << std::cos(angle), std::sin(angle);
    return v;
}

Embedding random_unit(int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Embedding v(dim);
    for (int i = 0; i < dim; ++i) v(i) = g(rng);
    return v.normalized();
}

}  // namespace

TEST(FeatureSimilarity, Examples) {
    const auto a = single(2, 0, unit2(0.3));
    EXPECT_DOUBLE_EQ(scaled_feature_similarity(a, a, 0.8), 1.0);
    EXPECT_DOUBLE_EQ(rescale_cosine(0.8, 0.8), 0.0);
    EXPECT_DOUBLE_EQ(rescale_cosine(-1.0, 0.8), -1.0);
    const auto b = single(2, 1, unit2(0.3 + M_PI));
    EXPECT_DOUBLE_EQ(scaled_feature_similarity(a, b, 0.8), -1.0);
}

TEST(FeatureSimilarity, MeanOverCameras) {
    // Camera 0 rows agree, camera 1 rows are orthogonal: raw = 0.5.
    Detection d0, d1, e0, e1;
    d0.camera = e0.camera = 0;
    d1.camera = e1.camera = 1;
    d0.feat = unit2(0);
    e0.feat = unit2(0);
    d1.feat = unit2(0);
    e1.feat = unit2(M_PI / 2);
    const Detection* da[] = {&d0, &d1};
    const Detection* ea[] = {&e0, &e1};
    const auto a = fill_missing(make_superbox(2, 0, da));
    const auto b = fill_missing(make_superbox(2, 0, ea));
    EXPECT_NEAR(scaled_feature_similarity(a, b, 0.0), 0.5, 1e-15);
}

TEST(FeatureSimilarity, MonotoneAndContinuousAtTheta) {
    for (double theta : {-0.5, 0.0, 0.7, 0.8}) {
        double last = -std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 2000; ++i) {
            const double raw = -1.0 + i * 0.001;
            const double s = rescale_cosine(raw, theta);
            EXPECT_GE(s, last);
            EXPECT_GE(s, -1.0);
            EXPECT_LE(s, 1.0);
            last = s;
        }
        EXPECT_NEAR(rescale_cosine(theta - 1e-9, theta), rescale_cosine(theta + 1e-9, theta), 1e-8);
    }
}

TEST(PositionalSimilarity, Examples) {
    EXPECT_DOUBLE_EQ(positional_similarity({1, 1}, {1, 1}, 4.0), 1.0);
    EXPECT_DOUBLE_EQ(positional_similarity({0, 0}, {4, 0}, 4.0), 0.0);
    EXPECT_DOUBLE_EQ(positional_similarity({0, 0}, {12, 0}, 4.0), -1.0);
}

TEST(Combine, Examples) {
    EXPECT_DOUBLE_EQ(combine(0.3, -0.7, 1.0), 0.3);
    EXPECT_DOUBLE_EQ(combine(0.3, -0.7, 0.0), -0.7);
    EXPECT_NEAR(combine(1.0, -1.0, 0.4), -0.2, 1e-15);
}

TEST(Combine, BetweenInputs) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1, 1), l(0, 1);
    for (int i = 0; i < 1000; ++i) {
        const double f = u(rng), p = u(rng), lam = l(rng);
        const double c = combine(f, p, lam);
        EXPECT_GE(c, std::min(f, p) - 1e-15);
        EXPECT_LE(c, std::max(f, p) + 1e-15);
    }
}

TEST(MarkInfeasible, SameCameraSameFrame) {
    TrackerConfig cfg;
    EvidenceLog a(2), b(2), c(2);
    a.record(0, 5);
    b.record(0, 5);
    c.record(1, 5);
    const SuperBox sb = single(2, 0, unit2(0));
    EXPECT_TRUE(mark_infeasible({&sb, {0, 0}, &a, false, 0}, {&sb, {0, 0}, &b, false, 0}, cfg));
    EXPECT_FALSE(mark_infeasible({&sb, {0, 0}, &a, false, 0}, {&sb, {0, 0}, &c, false, 0}, cfg));
}

TEST(MarkInfeasible, DistanceGateWaivedForLost) {
    TrackerConfig cfg;
    EvidenceLog a(1), b(1);
    a.record(0, 1);
    b.record(0, 2);
    const SuperBox sb = single(1, 0, unit2(0));
    const double far = 10 * cfg.distance_gate();
    EXPECT_TRUE(mark_infeasible({&sb, {0, 0}, &a, false, 0}, {&sb, {far, 0}, &b, false, 0}, cfg));
    EXPECT_FALSE(mark_infeasible({&sb, {0, 0}, &a, false, 0}, {&sb, {far, 0}, &b, true, 3}, cfg));
    // Same-camera co-occurrence still applies to lost tracks.
    EvidenceLog c(1);
    c.record(0, 1);
    EXPECT_TRUE(mark_infeasible({&sb, {0, 0}, &a, false, 0}, {&sb, {far, 0}, &c, true, 3}, cfg));
    // Exactly at the gate is still feasible.
    EXPECT_FALSE(mark_infeasible({&sb, {0, 0}, nullptr, false, 0}, {&sb, {cfg.distance_gate(), 0}, nullptr, false, 0}, cfg));
}

TEST(FinalizeWeight, Examples) {
    TrackerConfig cfg;
    EXPECT_EQ(finalize_weight({0.7, false}, cfg).value, 0.7);
    EXPECT_EQ(finalize_weight({0.9, true}, cfg).value, -100.0);
    EXPECT_EQ(finalize_weight({-0.3, true}, cfg).value, -100.0);
}

TEST(DecaySimilarity, Examples) {
    EXPECT_NEAR(decay_similarity(0.8, 1, 0.9), 0.72, 1e-15);
    EXPECT_EQ(decay_similarity(0.0, 25, 0.9), 0.0);
    EXPECT_NEAR(decay_similarity(1.0, 10, 0.9), 0.3486784401, 1e-10);
}

TEST(NodeSimilarity, DecayOnlyTouchesFeatureTermOfLostNodes) {
    TrackerConfig cfg;
    cfg.enable_decay = true;
    cfg.beta_decay = 0.5;
    const auto a = single(1, 0, unit2(0));
    const auto b = single(1, 0, unit2(0.2));
    const double feat = scaled_feature_similarity(a, b, cfg.theta_feat);
    const double pos = positional_similarity({0, 0}, {1, 0}, cfg.theta_pos);
    const NodeView active{&a, {0, 0}, nullptr, false, 0};
    const NodeView lost{&b, {1, 0}, nullptr, true, 2};
    EXPECT_DOUBLE_EQ(node_similarity(active, lost, cfg), combine(0.25 * feat, pos, cfg.lambda));
    cfg.enable_decay = false;
    EXPECT_DOUBLE_EQ(node_similarity(active, lost, cfg), combine(feat, pos, cfg.lambda));
    cfg.lost_use_position = false;
    EXPECT_DOUBLE_EQ(node_similarity(active, lost, cfg), feat);
}

TEST(NodeSimilarity, SymmetricBitExact) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-20, 20);
    std::uniform_int_distribution<int> k(0, 20);
    std::bernoulli_distribution coin(0.5);
    TrackerConfig cfg;
    cfg.enable_decay = true;
    for (int i = 0; i < 500; ++i) {
        const auto a = single(3, 0, random_unit(16, rng));
        const auto b = single(3, 2, random_unit(16, rng));
        const NodeView x{&a, {u(rng), u(rng)}, nullptr, coin(rng), k(rng) + 1};
        const NodeView y{&b, {u(rng), u(rng)}, nullptr, coin(rng), k(rng) + 1};
        const double xy = node_similarity(x, y, cfg);
        const double yx = node_similarity(y, x, cfg);
        EXPECT_EQ(std::memcmp(&xy, &yx, sizeof xy), 0);
        EXPECT_EQ(mark_infeasible(x, y, cfg), mark_infeasible(y, x, cfg));
    }
}

TEST(Cosine, ZeroVectorGuard) {
    EXPECT_EQ(cosine(Embedding::Zero(3), Embedding::Ones(3)), 0.0);
}
