#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "geometry.hpp"
#include "io.hpp"
#include "metrics.hpp"

namespace stmc {

struct NoiseSpec {
    double drop_prob = 0.0;
    double fp_rate = 0.0;         // expected false positives per camera-frame
    double bbox_jitter_px = 0.0;  // std-dev on l, t, w, h
    double embed_noise = 0.0;     // std-dev per embedding component before renormalization
    double calib_jitter = 0.0;    // relative std-dev on emitted homography entries
    std::vector<int> frame_offset;  // per camera, frames of delay; missing entries are 0
};

/// Synthetic scene. Cameras are placed evenly on a circle around the origin, all looking
/// at it, so every camera sees the square of half-size `coverage_half_extent`; vehicles
/// roam the square of half-size `world_half_extent`.
struct ScenarioSpec {
    std::uint64_t seed = 0;
    int num_cameras = 3;
    int num_vehicles = 10;
    int num_frames = 200;
    double world_half_extent = 15.0;
    double coverage_half_extent = 15.0;
    int embedding_dim = 16;
    double min_separation = 2.0;
    double speed_min = 0.2;  // meters per frame
    double speed_max = 0.5;
    double vehicle_width = 4.0;
    double vehicle_height = 1.6;
    int image_width = 1280;
    int image_height = 720;
    double focal_px = 900.0;
    double camera_height = 30.0;
    double camera_distance = 45.0;
    NoiseSpec noise;

    void validate() const {
        auto fail = [](const std::string& what) { throw std::invalid_argument("scenario: " + what); };
        if (num_cameras < 2) fail("num_cameras must be >= 2");
        if (num_vehicles < 0) fail("num_vehicles must be >= 0");
        if (num_frames < 0) fail("num_frames must be >= 0");
        if (embedding_dim < 1) fail("embedding_dim must be >= 1");
        if (!(world_half_extent > 0.0) || !(coverage_half_extent > 0.0)) fail("extents must be positive");
        if (!(speed_min >= 0.0 && speed_max >= speed_min)) fail("need 0 <= speed_min <= speed_max");
        if (!(vehicle_width > 0.0 && vehicle_height > 0.0)) fail("vehicle dimensions must be positive");
        if (image_width <= 0 || image_height <= 0 || !(focal_px > 0.0)) fail("bad image geometry");
        if (!(camera_height > vehicle_height)) fail("camera_height must exceed vehicle_height");
        auto prob = [&](double p, const char* name) {
            if (!(p >= 0.0 && p <= 1.0)) fail(std::string(name) + " must lie in [0,1]");
        };
        prob(noise.drop_prob, "drop_prob");
        if (!(noise.fp_rate >= 0.0)) fail("fp_rate must be >= 0");
        if (!(noise.bbox_jitter_px >= 0.0) || !(noise.embed_noise >= 0.0) || !(noise.calib_jitter >= 0.0))
            fail("noise std-devs must be >= 0");
        for (int off : noise.frame_offset)
            if (off < 0) fail("frame_offset must be >= 0");
    }
};

inline void to_json(nlohmann::json& j, const NoiseSpec& n) {
    j = {{"drop_prob", n.drop_prob},       {"fp_rate", n.fp_rate},         {"bbox_jitter_px", n.bbox_jitter_px},
         {"embed_noise", n.embed_noise},   {"calib_jitter", n.calib_jitter}, {"frame_offset", n.frame_offset}};
}

inline void from_json(const nlohmann::json& j, NoiseSpec& n) {
    n.drop_prob = j.value("drop_prob", n.drop_prob);
    n.fp_rate = j.value("fp_rate", n.fp_rate);
    n.bbox_jitter_px = j.value("bbox_jitter_px", n.bbox_jitter_px);
    n.embed_noise = j.value("embed_noise", n.embed_noise);
    n.calib_jitter = j.value("calib_jitter", n.calib_jitter);
    n.frame_offset = j.value("frame_offset", n.frame_offset);
}

inline void to_json(nlohmann::json& j, const ScenarioSpec& s) {
    j = {{"seed", s.seed},
         {"num_cameras", s.num_cameras},
         {"num_vehicles", s.num_vehicles},
         {"num_frames", s.num_frames},
         {"world_half_extent", s.world_half_extent},
         {"coverage_half_extent", s.coverage_half_extent},
         {"embedding_dim", s.embedding_dim},
         {"min_separation", s.min_separation},
         {"speed_min", s.speed_min},
         {"speed_max", s.speed_max},
         {"vehicle_width", s.vehicle_width},
         {"vehicle_height", s.vehicle_height},
         {"image_width", s.image_width},
         {"image_height", s.image_height},
         {"focal_px", s.focal_px},
         {"camera_height", s.camera_height},
         {"camera_distance", s.camera_distance},
         {"noise", s.noise}};
}

inline void from_json(const nlohmann::json& j, ScenarioSpec& s) {
    static const std::set<std::string> known = {
        "seed",          "num_cameras",    "num_vehicles", "num_frames",      "world_half_extent",
        "coverage_half_extent", "embedding_dim", "min_separation", "speed_min", "speed_max",
        "vehicle_width", "vehicle_height", "image_width",  "image_height",    "focal_px",
        "camera_height", "camera_distance", "noise"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw std::invalid_argument("scenario: unknown key '" + key + "'");
    s.seed = j.value("seed", s.seed);
    s.num_cameras = j.value("num_cameras", s.num_cameras);
    s.num_vehicles = j.value("num_vehicles", s.num_vehicles);
    s.num_frames = j.value("num_frames", s.num_frames);
    s.world_half_extent = j.value("world_half_extent", s.world_half_extent);
    s.coverage_half_extent = j.value("coverage_half_extent", s.coverage_half_extent);
    s.embedding_dim = j.value("embedding_dim", s.embedding_dim);
    s.min_separation = j.value("min_separation", s.min_separation);
    s.speed_min = j.value("speed_min", s.speed_min);
    s.speed_max = j.value("speed_max", s.speed_max);
    s.vehicle_width = j.value("vehicle_width", s.vehicle_width);
    s.vehicle_height = j.value("vehicle_height", s.vehicle_height);
    s.image_width = j.value("image_width", s.image_width);
    s.image_height = j.value("image_height", s.image_height);
    s.focal_px = j.value("focal_px", s.focal_px);
    s.camera_height = j.value("camera_height", s.camera_height);
    s.camera_distance = j.value("camera_distance", s.camera_distance);
    if (j.contains("noise")) s.noise = j.at("noise").get<NoiseSpec>();
}

/// Pinhole camera looking at the ground plane z = 0.
struct SimCamera {
    std::string id;
    Eigen::Matrix3d ground_to_image;  // K [r1 r2 t]; third coordinate is the camera depth
    CameraCalibration calibration;     // exact image -> ground homography
    int width = 0;
    int height = 0;
    std::vector<GroundPoint> fov;  // ground footprint of the image, convex, counter-clockwise

    /// Image point and depth of a ground point.
    std::pair<Vec2, double> project(GroundPoint p) const {
        const Eigen::Vector3d q = ground_to_image * Eigen::Vector3d(p.x, p.y, 1.0);
        return {{q.x() / q.z(), q.y() / q.z()}, q.z()};
    }

    bool sees(GroundPoint p) const {
        const std::size_t n = fov.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2 a = fov[i], b = fov[(i + 1) % n];
            if ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) < 0.0) return false;
        }
        return true;
    }
};

/// Ground truth attached to each emitted detection (vehicle 0 marks a false positive).
struct DetectionTruth {
    int vehicle = 0;
    int world_frame = 0;
    GroundPoint ground;
};

struct Scenario {
    ScenarioSpec spec;
    std::vector<SimCamera> cameras;
    std::vector<CameraCalibration> calibrations;  // as emitted, including calib_jitter
    std::vector<DetectionRecord> detections;      // sorted by frame, then camera
    std::vector<DetectionTruth> truth;            // parallel to `detections`
    ImageTrajectories gt_image;
    GroundTrajectories gt_ground;
    std::vector<std::vector<GroundPoint>> paths;  // vehicle -> position per world frame
};

namespace detail {

inline SimCamera make_camera(const ScenarioSpec& s, int index) {
    const double angle = 2.0 * std::numbers::pi * index / s.num_cameras + std::numbers::pi / 4.0;
    const Eigen::Vector3d center(s.camera_distance * std::cos(angle), s.camera_distance * std::sin(angle),
                                 s.camera_height);
    const Eigen::Vector3d forward = (Eigen::Vector3d::Zero() - center).normalized();
    const Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ()).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d rot;
    rot.row(0) = right.transpose();
    rot.row(1) = down.transpose();
    rot.row(2) = forward.transpose();
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = k(1, 1) = s.focal_px;
    k(0, 2) = 0.5 * s.image_width;
    k(1, 2) = 0.5 * s.image_height;

    Eigen::Matrix3d rt;
    rt.col(0) = rot.col(0);
    rt.col(1) = rot.col(1);
    rt.col(2) = -rot * center;

    SimCamera cam;
    cam.id = "c" + std::to_string(index);
    cam.ground_to_image = k * rt;
    cam.calibration.camera_id = cam.id;
    cam.calibration.homography = cam.ground_to_image.inverse();
    cam.width = s.image_width;
    cam.height = s.image_height;
    const std::array<Vec2, 4> corners{Vec2{0.0, 0.0}, Vec2{0.0, static_cast<double>(s.image_height)},
                                      Vec2{static_cast<double>(s.image_width), static_cast<double>(s.image_height)},
                                      Vec2{static_cast<double>(s.image_width), 0.0}};
    for (const Vec2 c : corners) {
        const Eigen::Vector3d g = cam.calibration.homography * Eigen::Vector3d(c.x, c.y, 1.0);
        if (g.z() <= 0.0)
            throw std::invalid_argument("scenario: camera " + cam.id + " sees the horizon; increase camera_height");
        cam.fov.push_back({g.x() / g.z(), g.y() / g.z()});
    }
    // Ensure counter-clockwise order.
    double area = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        const Vec2 a = cam.fov[i], b = cam.fov[(i + 1) % 4];
        area += a.x * b.y - b.x * a.y;
    }
    if (area < 0.0) std::reverse(cam.fov.begin(), cam.fov.end());
    const double e = s.coverage_half_extent;
    for (const Vec2 c : {Vec2{-e, -e}, Vec2{-e, e}, Vec2{e, e}, Vec2{e, -e}})
        if (!cam.sees(c))
            throw std::invalid_argument("scenario: camera " + cam.id + " does not cover the coverage square");
    return cam;
}

/// Box with its bottom-center on the ground point, sized by the vehicle dimensions over depth.
inline BBox footprint_box(const SimCamera& cam, GroundPoint p, double width_m, double height_m, double focal) {
    const auto [px, depth] = cam.project(p);
    const double w = focal * width_m / depth;
    const double h = focal * height_m / depth;
    return {px.x - 0.5 * w, px.y - h, w, h};
}

inline std::vector<GroundPoint> sample_path(const ScenarioSpec& s, std::mt19937_64& rng) {
    const double e = s.world_half_extent;
    std::uniform_real_distribution<double> coord(-e, e);
    std::uniform_real_distribution<double> speed_dist(s.speed_min, s.speed_max);
    const double speed = speed_dist(rng);
    GroundPoint pos{coord(rng), coord(rng)};
    GroundPoint target{coord(rng), coord(rng)};
    std::vector<GroundPoint> path;
    path.reserve(static_cast<std::size_t>(s.num_frames));
    for (int f = 0; f < s.num_frames; ++f) {
        path.push_back(pos);
        double budget = speed;
        while (budget > 0.0) {
            const Vec2 to = target - pos;
            const double d = to.norm();
            if (d <= budget) {
                pos = target;
                budget -= d;
                target = {coord(rng), coord(rng)};
                if (budget <= 1e-12) break;
            } else {
                pos += (budget / d) * to;
                budget = 0.0;
            }
        }
    }
    return path;
}

inline Embedding random_unit(int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Embedding v(dim);
    do {
        for (int i = 0; i < dim; ++i) v(i) = gauss(rng);
    } while (v.norm() == 0.0);
    return v.normalized();
}

}  // namespace detail

/// Generates ground truth, calibrations and the noisy detection stream; fully determined by the seed.
inline Scenario generate(const ScenarioSpec& spec) {
    spec.validate();
    Scenario sc;
    sc.spec = spec;
    std::mt19937_64 rng(spec.seed);

    for (int m = 0; m < spec.num_cameras; ++m) sc.cameras.push_back(detail::make_camera(spec, m));

    std::normal_distribution<double> gauss(0.0, 1.0);
    for (const auto& cam : sc.cameras) {
        CameraCalibration cal = cam.calibration;
        if (spec.noise.calib_jitter > 0.0) {
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) cal.homography(r, c) *= 1.0 + spec.noise.calib_jitter * gauss(rng);
        }
        sc.calibrations.push_back(cal);
    }

    // Paths: spawn points at least `min_separation` apart; whole-trajectory separation is
    // attempted by rejection and relaxed to spawn-only after a bounded number of tries.
    constexpr int kTries = 500;
    for (int v = 0; v < spec.num_vehicles; ++v) {
        std::vector<GroundPoint> best;
        for (int attempt = 0;; ++attempt) {
            auto path = detail::sample_path(spec, rng);
            bool spawn_ok = true, all_ok = true;
            for (const auto& other : sc.paths) {
                for (std::size_t f = 0; f < path.size(); ++f) {
                    if (distance(path[f], other[f]) < spec.min_separation) {
                        all_ok = false;
                        if (f == 0) spawn_ok = false;
                        break;
                    }
                }
                if (!spawn_ok) break;
            }
            if (spawn_ok && best.empty()) best = path;
            if (all_ok) {
                best = std::move(path);
                break;
            }
            if (attempt >= kTries && !best.empty()) break;
            if (attempt >= 10 * kTries) throw std::runtime_error("scenario: cannot place vehicles apart");
        }
        sc.paths.push_back(std::move(best));
    }

    std::vector<Embedding> identity;
    for (int v = 0; v < spec.num_vehicles; ++v) identity.push_back(detail::random_unit(spec.embedding_dim, rng));

    auto offset_of = [&](int m) {
        return m < static_cast<int>(spec.noise.frame_offset.size()) ? spec.noise.frame_offset[static_cast<std::size_t>(m)]
                                                                    : 0;
    };

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::poisson_distribution<int> fp_count(spec.noise.fp_rate > 0.0 ? spec.noise.fp_rate : 1.0);

    for (int f = 0; f < spec.num_frames; ++f) {
        for (int v = 0; v < spec.num_vehicles; ++v) {
            const GroundPoint p = sc.paths[static_cast<std::size_t>(v)][static_cast<std::size_t>(f)];
            if (std::any_of(sc.cameras.begin(), sc.cameras.end(), [&](const SimCamera& c) { return c.sees(p); }))
                sc.gt_ground.add(v + 1, f, kGroundPlane, p);
        }
        for (int m = 0; m < spec.num_cameras; ++m) {
            const SimCamera& cam = sc.cameras[static_cast<std::size_t>(m)];
            const int world = f - offset_of(m);
            if (world < 0) continue;
            for (int v = 0; v < spec.num_vehicles; ++v) {
                const GroundPoint p = sc.paths[static_cast<std::size_t>(v)][static_cast<std::size_t>(world)];
                if (!cam.sees(p)) continue;
                const BBox box = detail::footprint_box(cam, p, spec.vehicle_width, spec.vehicle_height, spec.focal_px);
                sc.gt_image.add(v + 1, f, m, box);
                if (unit(rng) < spec.noise.drop_prob) continue;
                DetectionRecord r;
                r.camera_id = cam.id;
                r.frame = f;
                r.bbox = box;
                if (spec.noise.bbox_jitter_px > 0.0) {
                    const double j = spec.noise.bbox_jitter_px;
                    r.bbox.l += j * gauss(rng);
                    r.bbox.t += j * gauss(rng);
                    r.bbox.w = std::max(2.0, r.bbox.w + j * gauss(rng));
                    r.bbox.h = std::max(2.0, r.bbox.h + j * gauss(rng));
                }
                r.confidence = 0.5 + 0.5 * unit(rng);
                Embedding e = identity[static_cast<std::size_t>(v)];
                if (spec.noise.embed_noise > 0.0)
                    for (int i = 0; i < spec.embedding_dim; ++i) e(i) += spec.noise.embed_noise * gauss(rng);
                e.normalize();
                r.embedding.assign(e.data(), e.data() + e.size());
                sc.detections.push_back(std::move(r));
                sc.truth.push_back({v + 1, world, p});
            }
            if (spec.noise.fp_rate > 0.0) {
                const int count = fp_count(rng);
                for (int k = 0; k < count; ++k) {
                    // Random ground point inside the footprint, via a random pixel below the top rows.
                    GroundPoint g;
                    do {
                        const Vec2 px{unit(rng) * cam.width, (0.1 + 0.9 * unit(rng)) * cam.height};
                        g = detail::apply_homography(cam.calibration.homography, px);
                    } while (!cam.sees(g));
                    const double scale = 0.5 + unit(rng);
                    DetectionRecord r;
                    r.camera_id = cam.id;
                    r.frame = f;
                    r.bbox = detail::footprint_box(cam, g, scale * spec.vehicle_width, scale * spec.vehicle_height,
                                                   spec.focal_px);
                    r.confidence = 0.1 + 0.8 * unit(rng);
                    const Embedding e = detail::random_unit(spec.embedding_dim, rng);
                    r.embedding.assign(e.data(), e.data() + e.size());
                    sc.detections.push_back(std::move(r));
                    sc.truth.push_back({0, world, g});
                }
            }
        }
    }
    return sc;
}

/// Writes detections.jsonl, calibration.json, scenario.json and gt/{cam_<id>.txt, ground.txt}.
inline void write_scenario(const Scenario& sc, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "gt");
    write_calibrations(dir / "calibration.json", sc.calibrations);
    {
        std::ofstream out(dir / "scenario.json", std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write scenario.json");
        out << nlohmann::json(sc.spec).dump(2) << '\n';
    }
    {
        std::ofstream out(dir / "detections.jsonl", std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write detections.jsonl");
        for (const auto& r : sc.detections) out << to_json_line(r) << '\n';
    }
    for (std::size_t m = 0; m < sc.cameras.size(); ++m) {
        std::ofstream out(dir / "gt" / ("cam_" + sc.cameras[m].id + ".txt"), std::ios::binary | std::ios::trunc);
        std::vector<std::tuple<int, int, BBox>> rows;  // frame, id, box
        for (const auto& [id, entries] : sc.gt_image.tracks())
            for (const auto& e : entries)
                if (e.camera == static_cast<int>(m)) rows.emplace_back(e.frame, id, e.pos);
        std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
            return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
        });
        for (const auto& [frame, id, box] : rows) {
            const GroundPoint g = detail::apply_homography(sc.cameras[m].calibration.homography, reference_pixel(box, 1.0));
            out << mot_line(frame, id, box, 1.0, g);
        }
    }
    std::ofstream ground(dir / "gt" / "ground.txt", std::ios::binary | std::ios::trunc);
    std::vector<std::tuple<int, int, GroundPoint>> rows;
    for (const auto& [id, entries] : sc.gt_ground.tracks())
        for (const auto& e : entries) rows.emplace_back(e.frame, id, e.pos);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
    });
    for (const auto& [frame, id, p] : rows) ground << ground_line(frame, id, p);
}

}  // namespace stmc
