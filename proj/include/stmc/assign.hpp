#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "config.hpp"
#include "geometry.hpp"

namespace stmc {

inline double iou(const BBox& a, const BBox& b) {
    const double iw = std::min(a.right(), b.right()) - std::max(a.l, b.l);
    const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.t, b.t);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

/// Dense row-major matrix of assignment values.
struct CostMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    CostMatrix() = default;
    CostMatrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

using Match = std::pair<int, int>;

/// Minimum-cost assignment of min(rows, cols) pairs (Kuhn-Munkres with potentials, O(n^2 m)).
/// Pairs are returned sorted by row.
inline std::vector<Match> solve_lap_min(const CostMatrix& c) {
    if (c.rows == 0 || c.cols == 0) return {};
    const bool transposed = c.rows > c.cols;
    const int n = transposed ? c.cols : c.rows;  // n <= m
    const int m = transposed ? c.rows : c.cols;
    auto cost = [&](int i, int j) { return transposed ? c(j, i) : c(i, j); };

    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(m) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(m) + 1, kInf);
        std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            double delta = kInf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                const auto sj = static_cast<std::size_t>(j);
                if (used[sj]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[sj];
                if (cur < minv[sj]) {
                    minv[sj] = cur;
                    way[sj] = j0;
                }
                if (minv[sj] < delta) {
                    delta = minv[sj];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                const auto sj = static_cast<std::size_t>(j);
                if (used[sj]) {
                    u[static_cast<std::size_t>(p[sj])] += delta;
                    v[sj] -= delta;
                } else {
                    minv[sj] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<Match> out;
    for (int j = 1; j <= m; ++j) {
        const int i = p[static_cast<std::size_t>(j)];
        if (i == 0) continue;
        out.push_back(transposed ? Match{j - 1, i - 1} : Match{i - 1, j - 1});
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Maximum-value assignment; pairs whose value is <= `min_value` are dropped afterwards.
inline std::vector<Match> solve_lap_max(const CostMatrix& values, double min_value) {
    CostMatrix negated = values;
    for (auto& x : negated.data) x = -x;
    std::vector<Match> out;
    for (const auto& [r, c] : solve_lap_min(negated))
        if (values(r, c) > min_value) out.push_back({r, c});
    return out;
}

/// A track's motion-predicted image boxes, addressed by its graph node index.
struct PrematchTrack {
    int node = 0;
    std::span<const std::optional<BBox>> boxes;  // per camera
};

/// A detection's image box, addressed by its graph node index.
struct PrematchDetection {
    int node = 0;
    int camera = 0;
    BBox box;
};

using NodePair = std::pair<int, int>;  // (track node, detection node)

struct PrematchResult {
    std::map<NodePair, double> bias;
    std::set<NodePair> pruned;
};

/// Per-camera IoU matching between predicted track boxes and detections.
///
/// Matched pairs receive `iou_bias`. With pruning enabled, every other track-detection pair
/// in that camera sharing a matched track or a matched detection is listed in `pruned`.
inline PrematchResult prematch_bias(std::span<const PrematchTrack> tracks,
                                    std::span<const PrematchDetection> detections, int cameras,
                                    const TrackerConfig& cfg) {
    PrematchResult out;
    for (int cam = 0; cam < cameras; ++cam) {
        std::vector<const PrematchTrack*> rows;
        for (const auto& t : tracks)
            if (cam < static_cast<int>(t.boxes.size()) && t.boxes[static_cast<std::size_t>(cam)]) rows.push_back(&t);
        std::vector<const PrematchDetection*> cols;
        for (const auto& d : detections)
            if (d.camera == cam) cols.push_back(&d);
        if (rows.empty() || cols.empty()) continue;

        CostMatrix values(static_cast<int>(rows.size()), static_cast<int>(cols.size()));
        for (int r = 0; r < values.rows; ++r)
            for (int c = 0; c < values.cols; ++c)
                values(r, c) = iou(*rows[static_cast<std::size_t>(r)]->boxes[static_cast<std::size_t>(cam)],
                                   cols[static_cast<std::size_t>(c)]->box);

        const auto matches = solve_lap_max(values, 0.0);
        std::set<int> matched_rows, matched_cols;
        for (const auto& [r, c] : matches) {
            out.bias[{rows[static_cast<std::size_t>(r)]->node, cols[static_cast<std::size_t>(c)]->node}] = cfg.iou_bias;
            matched_rows.insert(r);
            matched_cols.insert(c);
        }
        if (!cfg.enable_prune) continue;
        for (int r = 0; r < values.rows; ++r) {
            for (int c = 0; c < values.cols; ++c) {
                const NodePair key{rows[static_cast<std::size_t>(r)]->node, cols[static_cast<std::size_t>(c)]->node};
                if (out.bias.count(key)) continue;
                if (matched_rows.count(r) || matched_cols.count(c)) out.pruned.insert(key);
            }
        }
    }
    return out;
}

}  // namespace stmc
