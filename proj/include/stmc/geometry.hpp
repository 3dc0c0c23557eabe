#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace stmc {

/// Plain 2-vector used for ground points, image points and velocities.
struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
    friend Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
    friend bool operator==(Vec2 a, Vec2 b) = default;
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }

    double norm() const { return std::hypot(x, y); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

using GroundPoint = Vec2;
using Velocity = Vec2;

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Axis-aligned image box, top-left corner plus extent, in pixels.
struct BBox {
    double l = 0.0;
    double t = 0.0;
    double w = 0.0;
    double h = 0.0;

    friend bool operator==(const BBox&, const BBox&) = default;

    bool valid() const { return w > 0.0 && h > 0.0 && std::isfinite(l) && std::isfinite(t); }
    double area() const { return w * h; }
    double right() const { return l + w; }
    double bottom() const { return t + h; }
};

class DegenerateProjection : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Image-to-ground homography of one static camera.
struct CameraCalibration {
    std::string camera_id;
    Eigen::Matrix3d homography = Eigen::Matrix3d::Identity();  // pixel -> world

    static constexpr double kMinDeterminant = 1e-12;

    bool invertible() const { return std::abs(homography.determinant()) > kMinDeterminant; }

    static CameraCalibration from_row_major(std::string id, const std::array<double, 9>& h) {
        CameraCalibration cal;
        cal.camera_id = std::move(id);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) cal.homography(r, c) = h[static_cast<std::size_t>(3 * r + c)];
        if (!cal.invertible())
            throw std::invalid_argument("homography of camera '" + cal.camera_id + "' is singular");
        return cal;
    }

    std::array<double, 9> row_major() const {
        std::array<double, 9> out{};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(3 * r + c)] = homography(r, c);
        return out;
    }
};

namespace detail {
inline constexpr double kHorizonEps = 1e-9;

inline Vec2 apply_homography(const Eigen::Matrix3d& h, Vec2 p) {
    const Eigen::Vector3d q = h * Eigen::Vector3d(p.x, p.y, 1.0);
    if (std::abs(q.z()) < kHorizonEps)
        throw DegenerateProjection("point maps to the line at infinity");
    return {q.x() / q.z(), q.y() / q.z()};
}
}  // namespace detail

/// Pixel used as the ground contact of a box: horizontal center, `alpha` of the height down from the top.
inline Vec2 reference_pixel(const BBox& b, double alpha) {
    return {b.l + 0.5 * b.w, b.t + alpha * b.h};
}

inline GroundPoint project_to_ground(const BBox& b, const CameraCalibration& cal, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("alpha_proj must lie in [0, 1]");
    return detail::apply_homography(cal.homography, reference_pixel(b, alpha));
}

/// Inverse mapping: ground point back to the image plane of `cal`.
inline Vec2 ground_to_image(GroundPoint p, const CameraCalibration& cal) {
    return detail::apply_homography(cal.homography.inverse(), p);
}

// Linear motion model: positions advance by one frame of velocity, box size is carried.
inline GroundPoint predict_linear(GroundPoint pos, Velocity velo) { return pos + velo; }

inline BBox predict_linear(const BBox& b, Velocity velo) {
    return {b.l + velo.x, b.t + velo.y, b.w, b.h};
}

/// EMA of successive position deltas; `ema_gamma` is the retention factor.
inline Velocity update_velocity(Velocity old_velo, Velocity new_delta, double ema_gamma) {
    return ema_gamma * old_velo + (1.0 - ema_gamma) * new_delta;
}

}  // namespace stmc
