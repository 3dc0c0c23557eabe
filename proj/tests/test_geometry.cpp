#include <random>

#include <gtest/gtest.h>

#include "stmc/geometry.hpp"

using namespace stmc;

namespace {

CameraCalibration identity_cal() {
    return CameraCalibration::from_row_major("c", {1, 0, 0, 0, 1, 0, 0, 0, 1});
}

}  // namespace

TEST(ProjectToGround, IdentityHomographyUsesAlphaHeight) {
    const BBox b{0, 0, 2, 2};
    const auto p = project_to_ground(b, identity_cal(), 0.85);
    EXPECT_DOUBLE_EQ(p.x, 1.0);
    EXPECT_DOUBLE_EQ(p.y, 1.7);
}

TEST(ProjectToGround, AlphaOneIsBottomCenter) {
    const auto p = project_to_ground({0, 0, 2, 2}, identity_cal(), 1.0);
    EXPECT_DOUBLE_EQ(p.x, 1.0);
    EXPECT_DOUBLE_EQ(p.y, 2.0);
}

TEST(ProjectToGround, ScalingHomography) {
    const auto cal = CameraCalibration::from_row_major("c", {2, 0, 0, 0, 2, 0, 0, 0, 1});
    const auto p = project_to_ground({0, 0, 2, 2}, cal, 0.85);
    EXPECT_DOUBLE_EQ(p.x, 2.0);
    EXPECT_DOUBLE_EQ(p.y, 3.4);
}

TEST(ProjectToGround, HorizonIsRejected) {
    // Third row maps pixel row 10 to z = 0.
    const auto cal = CameraCalibration::from_row_major("c", {1, 0, 0, 0, 1, 0, 0, 1, -10});
    EXPECT_THROW(project_to_ground({0, 0, 4, 10}, cal, 1.0), DegenerateProjection);
    EXPECT_NO_THROW(project_to_ground({0, 0, 4, 20}, cal, 1.0));
}

TEST(ProjectToGround, AlphaOutOfRangeThrows) {
    EXPECT_THROW(project_to_ground({0, 0, 2, 2}, identity_cal(), 1.5), std::invalid_argument);
    EXPECT_THROW(project_to_ground({0, 0, 2, 2}, identity_cal(), -0.1), std::invalid_argument);
}

TEST(CameraCalibration, SingularMatrixRejected) {
    EXPECT_THROW(CameraCalibration::from_row_major("c", {1, 2, 3, 2, 4, 6, 0, 0, 1}), std::invalid_argument);
}

TEST(CameraCalibration, RowMajorRoundTrip) {
    const std::array<double, 9> h{1.5, 0.2, -3, 0.1, 2, 4, 0.001, 0.002, 1};
    const auto cal = CameraCalibration::from_row_major("x", h);
    EXPECT_EQ(cal.row_major(), h);
    EXPECT_EQ(cal.homography(0, 2), -3);
    EXPECT_EQ(cal.homography(2, 1), 0.002);
}

TEST(ProjectToGround, InverseRecoversReferencePixel) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int checked = 0;
    for (int trial = 0; trial < 500; ++trial) {
        std::array<double, 9> h{};
        for (auto& x : h) x = u(rng);
        h[8] += 3.0;  // keep the plane mostly in front
        std::optional<CameraCalibration> cal;
        try {
            cal = CameraCalibration::from_row_major("r", h);
        } catch (const std::invalid_argument&) {
            continue;
        }
        const BBox b{u(rng) * 5, u(rng) * 5, 1 + std::abs(u(rng)), 1 + std::abs(u(rng))};
        const double alpha = 0.5 * (u(rng) + 1.0);
        GroundPoint g;
        try {
            g = project_to_ground(b, *cal, alpha);
        } catch (const DegenerateProjection&) {
            continue;
        }
        const Vec2 back = ground_to_image(g, *cal);
        const Vec2 ref = reference_pixel(b, alpha);
        const double scale = std::max(1.0, ref.norm());
        EXPECT_LE(distance(back, ref) / scale, 1e-6);
        ++checked;
    }
    EXPECT_GT(checked, 400);
}

TEST(PredictLinear, ZeroVelocity) {
    const auto p = predict_linear(GroundPoint{3, 4}, Velocity{0, 0});
    EXPECT_EQ(p, (GroundPoint{3, 4}));
}

TEST(PredictLinear, Componentwise) {
    EXPECT_EQ(predict_linear(GroundPoint{3, 4}, Velocity{1, -2}), (GroundPoint{4, 2}));
}

TEST(PredictLinear, BoxSizeCarried) {
    const BBox b = predict_linear(BBox{10, 10, 5, 5}, Velocity{2, 0});
    EXPECT_EQ(b.l, 12);
    EXPECT_EQ(b.t, 10);
    EXPECT_EQ(b.w, 5);
    EXPECT_EQ(b.h, 5);
}

TEST(PredictLinear, Additive) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> u(-1000, 1000);
    for (int i = 0; i < 200; ++i) {
        // Dyadic values keep the comparison exact.
        const GroundPoint p{u(rng) / 8.0, u(rng) / 8.0};
        const Velocity v{u(rng) / 16.0, u(rng) / 16.0};
        EXPECT_EQ(predict_linear(predict_linear(p, v), v), predict_linear(p, 2.0 * v));
    }
}

TEST(UpdateVelocity, Examples) {
    const auto a = update_velocity({0, 0}, {2, 2}, 0.9);
    EXPECT_NEAR(a.x, 0.2, 1e-15);
    EXPECT_NEAR(a.y, 0.2, 1e-15);
    for (double g : {0.0, 0.3, 0.9, 1.0}) EXPECT_EQ(update_velocity({1, 1}, {1, 1}, g), (Velocity{1, 1}));
    EXPECT_EQ(update_velocity({4, 0}, {0, 0}, 0.5), (Velocity{2, 0}));
}
