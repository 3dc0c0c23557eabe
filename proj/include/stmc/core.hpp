#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "geometry.hpp"

namespace stmc {

using Embedding = Eigen::VectorXd;

/// One camera-frame observation.
struct Detection {
    int camera = 0;
    int frame = 0;
    BBox bbox;
    double confidence = 1.0;
    Embedding feat;  // unit norm
    GroundPoint pos_bev;
};

/// Raw evidence held in one camera slot of a superbox.
struct Measurement {
    Embedding feat;
    BBox bbox;
    GroundPoint pos_bev;
};

inline Embedding normalized(const Embedding& v) {
    const double n = v.norm();
    if (n == 0.0) return v;
    return v / n;
}

/// Cross-camera collection of at most one measurement per camera.
///
/// `slots` holds the raw evidence. The `feat`, `pos_bev` and `pos_2d` arrays are the filled
/// values the weights are computed from: after fill_missing every camera row of `feat` and
/// `pos_bev` is populated, while `pos_2d` stays camera-local and may be empty for a camera.
/// For a track aggregate `slots` records only the most recent evidence.
struct SuperBox {
    std::vector<std::optional<Measurement>> slots;
    Eigen::MatrixXd feat;  // cameras x feature dimension
    std::vector<GroundPoint> pos_bev;
    std::vector<std::optional<BBox>> pos_2d;
    int frame = 0;

    int cameras() const { return static_cast<int>(slots.size()); }
    int dim() const { return static_cast<int>(feat.cols()); }

    bool present(int m) const { return slots[static_cast<std::size_t>(m)].has_value(); }

    int present_count() const {
        int n = 0;
        for (const auto& s : slots) n += s.has_value();
        return n;
    }

    /// Mean of the per-camera ground points.
    GroundPoint ground_position() const {
        GroundPoint p;
        for (const auto& g : pos_bev) p += g;
        return p / static_cast<double>(pos_bev.size());
    }
};

/// Superbox with exactly the given measurements placed in their camera slots (not yet filled).
inline SuperBox make_superbox(int cameras, int frame, std::span<const Detection* const> dets) {
    if (dets.empty()) throw std::invalid_argument("superbox needs at least one detection");
    const auto dim = dets.front()->feat.size();
    SuperBox sb;
    sb.frame = frame;
    sb.slots.resize(static_cast<std::size_t>(cameras));
    sb.feat = Eigen::MatrixXd::Zero(cameras, dim);
    sb.pos_bev.assign(static_cast<std::size_t>(cameras), GroundPoint{});
    sb.pos_2d.assign(static_cast<std::size_t>(cameras), std::nullopt);
    for (const Detection* d : dets) {
        if (d->camera < 0 || d->camera >= cameras) throw std::out_of_range("detection camera index");
        if (d->feat.size() != dim) throw std::invalid_argument("inconsistent embedding dimension");
        auto& slot = sb.slots[static_cast<std::size_t>(d->camera)];
        if (slot) throw std::invalid_argument("two measurements for the same camera in one superbox");
        slot = Measurement{d->feat, d->bbox, d->pos_bev};
        sb.feat.row(d->camera) = d->feat.transpose();
        sb.pos_bev[static_cast<std::size_t>(d->camera)] = d->pos_bev;
        sb.pos_2d[static_cast<std::size_t>(d->camera)] = d->bbox;
    }
    return sb;
}

/// Replaces every absent camera row by the aggregate of the present evidence.
///
/// Features take the renormalized mean of the present rows, ground points the mean of the
/// present points. Image boxes are never copied across cameras. Present slots are written
/// from their raw measurement, so the operation is idempotent.
inline SuperBox fill_missing(SuperBox sb) {
    const int m_count = sb.cameras();
    int present = 0;
    Embedding mean_feat = Embedding::Zero(sb.dim());
    GroundPoint mean_pos;
    for (int m = 0; m < m_count; ++m) {
        const auto& slot = sb.slots[static_cast<std::size_t>(m)];
        if (!slot) continue;
        ++present;
        mean_feat += slot->feat;
        mean_pos += slot->pos_bev;
    }
    if (present == 0) throw std::invalid_argument("fill_missing on an empty superbox");
    mean_feat = normalized(mean_feat / present);
    mean_pos = mean_pos / present;
    for (int m = 0; m < m_count; ++m) {
        const auto i = static_cast<std::size_t>(m);
        if (const auto& slot = sb.slots[i]) {
            sb.feat.row(m) = slot->feat.transpose();
            sb.pos_bev[i] = slot->pos_bev;
            sb.pos_2d[i] = slot->bbox;
        } else {
            sb.feat.row(m) = mean_feat.transpose();
            sb.pos_bev[i] = mean_pos;
        }
    }
    return sb;
}

class DimensionMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Per-camera exponential moving average of a track aggregate with new filled evidence.
///
/// Feature rows are renormalized after blending. An image box is blended when both sides
/// have one for the camera, otherwise whichever side has it is kept.
inline SuperBox ema_merge(const SuperBox& old_sb, const SuperBox& new_sb, double ema_gamma) {
    if (old_sb.cameras() != new_sb.cameras() || old_sb.dim() != new_sb.dim())
        throw DimensionMismatch("ema_merge: superboxes differ in camera count or feature dimension");
    const double keep = ema_gamma;
    const double take = 1.0 - ema_gamma;
    SuperBox out = new_sb;
    for (int m = 0; m < out.cameras(); ++m) {
        const auto i = static_cast<std::size_t>(m);
        Embedding row = keep * old_sb.feat.row(m).transpose() + take * new_sb.feat.row(m).transpose();
        out.feat.row(m) = normalized(row).transpose();
        out.pos_bev[i] = keep * old_sb.pos_bev[i] + take * new_sb.pos_bev[i];
        const auto& a = old_sb.pos_2d[i];
        const auto& b = new_sb.pos_2d[i];
        if (a && b) {
            out.pos_2d[i] = BBox{keep * a->l + take * b->l, keep * a->t + take * b->t,
                                 keep * a->w + take * b->w, keep * a->h + take * b->h};
        } else {
            out.pos_2d[i] = a ? a : b;
        }
    }
    out.frame = new_sb.frame;
    return out;
}

enum class TrackStatus { Active, Inactive, Lost };

/// Lifecycle state; `frames` counts consecutive unmatched frames within Inactive or Lost.
struct TrackState {
    TrackStatus status = TrackStatus::Active;
    int frames = 0;

    static TrackState active() { return {}; }
    static TrackState inactive(int k) { return {TrackStatus::Inactive, k}; }
    static TrackState lost(int k) { return {TrackStatus::Lost, k}; }

    bool is_lost() const { return status == TrackStatus::Lost; }
    friend bool operator==(const TrackState&, const TrackState&) = default;
};

/// Per-camera frames at which a node had evidence, oldest first.
struct EvidenceLog {
    std::vector<std::deque<int>> frames;  // indexed by camera

    explicit EvidenceLog(int cameras = 0) : frames(static_cast<std::size_t>(cameras)) {}

    void record(int camera, int frame) {
        auto& q = frames[static_cast<std::size_t>(camera)];
        if (q.empty() || q.back() < frame) q.push_back(frame);
    }

    void forget_before(int frame) {
        for (auto& q : frames)
            while (!q.empty() && q.front() < frame) q.pop_front();
    }

    void absorb(const EvidenceLog& other) {
        for (std::size_t m = 0; m < frames.size(); ++m) {
            std::deque<int> merged;
            const auto& a = frames[m];
            const auto& b = other.frames[m];
            std::size_t i = 0, j = 0;
            while (i < a.size() || j < b.size()) {
                int next;
                if (j == b.size() || (i < a.size() && a[i] <= b[j]))
                    next = a[i++];
                else
                    next = b[j++];
                if (merged.empty() || merged.back() != next) merged.push_back(next);
            }
            frames[m] = std::move(merged);
        }
    }

    /// True if both logs hold evidence in the same camera at the same frame.
    bool overlaps(const EvidenceLog& other) const {
        for (std::size_t m = 0; m < frames.size() && m < other.frames.size(); ++m) {
            const auto& a = frames[m];
            const auto& b = other.frames[m];
            std::size_t i = 0, j = 0;
            while (i < a.size() && j < b.size()) {
                if (a[i] == b[j]) return true;
                if (a[i] < b[j])
                    ++i;
                else
                    ++j;
            }
        }
        return false;
    }
};

/// A spatial-temporal cluster represented by one EMA-aggregated superbox.
struct Track {
    int identity = 0;
    SuperBox rep;
    Velocity velo_bev;
    std::vector<Velocity> velo_2d;  // per camera
    TrackState state;
    int last_seen = 0;
    std::vector<std::optional<int>> camera_last_seen;
    EvidenceLog evidence;

    // Raw observations behind the velocity estimates.
    GroundPoint last_observed_bev;
    std::vector<std::optional<BBox>> last_observed_box;
};

}  // namespace stmc
