#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "assign.hpp"
#include "geometry.hpp"

namespace stmc {

/// Camera index used for ground-plane entries.
inline constexpr int kGroundPlane = -1;

template <class Pos>
struct TrajectoryEntry {
    int frame = 0;
    int camera = kGroundPlane;
    Pos pos;
};

/// identity -> time-ordered entries; at most one entry per (identity, frame, camera).
template <class Pos>
class TrajectorySet {
public:
    void add(int identity, int frame, int camera, const Pos& pos) {
        auto [it, inserted] = keys_.insert({identity, frame, camera});
        if (!inserted)
            throw std::invalid_argument("identity " + std::to_string(identity) + " has two entries at frame " +
                                        std::to_string(frame) + " camera " + std::to_string(camera));
        auto& list = tracks_[identity];
        TrajectoryEntry<Pos> e{frame, camera, pos};
        auto pos_it = std::upper_bound(list.begin(), list.end(), e, [](const auto& a, const auto& b) {
            return std::tie(a.frame, a.camera) < std::tie(b.frame, b.camera);
        });
        list.insert(pos_it, e);
    }

    const std::map<int, std::vector<TrajectoryEntry<Pos>>>& tracks() const { return tracks_; }
    std::size_t size() const { return keys_.size(); }
    bool empty() const { return keys_.empty(); }

private:
    std::map<int, std::vector<TrajectoryEntry<Pos>>> tracks_;
    std::set<std::tuple<int, int, int>> keys_;
};

using ImageTrajectories = TrajectorySet<BBox>;
using GroundTrajectories = TrajectorySet<GroundPoint>;

/// Image-plane match: IoU at or above the threshold.
struct IouMatcher {
    double threshold = 0.5;
    bool matches(const BBox& a, const BBox& b) const { return iou(a, b) >= threshold; }
    double dissimilarity(const BBox& a, const BBox& b) const { return 1.0 - iou(a, b); }
};

/// Ground-plane match: Euclidean distance within the radius.
struct RadiusMatcher {
    double radius = 1.0;
    bool matches(GroundPoint a, GroundPoint b) const { return distance(a, b) <= radius; }
    double dissimilarity(GroundPoint a, GroundPoint b) const { return distance(a, b); }
};

struct IdMetrics {
    double idf1 = 0.0;
    double idp = 0.0;
    double idr = 0.0;
    long idtp = 0;
    long idfp = 0;
    long idfn = 0;
};

inline IdMetrics id_metrics_from_counts(long idtp, long idfp, long idfn) {
    IdMetrics r{0.0, 0.0, 0.0, idtp, idfp, idfn};
    if (idtp + idfp + idfn == 0) {
        r.idf1 = r.idp = r.idr = 1.0;
        return r;
    }
    r.idp = idtp + idfp > 0 ? static_cast<double>(idtp) / static_cast<double>(idtp + idfp) : 0.0;
    r.idr = idtp + idfn > 0 ? static_cast<double>(idtp) / static_cast<double>(idtp + idfn) : 0.0;
    r.idf1 = static_cast<double>(2 * idtp) / static_cast<double>(2 * idtp + idfp + idfn);
    return r;
}

namespace detail {

template <class Pos>
using SlotIndex = std::map<std::pair<int, int>, std::vector<std::pair<int, Pos>>>;  // (frame, cam) -> (id, pos)

template <class Pos>
SlotIndex<Pos> index_slots(const TrajectorySet<Pos>& set) {
    SlotIndex<Pos> out;
    for (const auto& [id, entries] : set.tracks())
        for (const auto& e : entries) out[{e.frame, e.camera}].push_back({id, e.pos});
    return out;
}

}  // namespace detail

/// Identity precision / recall / F1 under the globally optimal one-to-one mapping
/// between ground-truth and predicted identities.
///
/// The mapping is solved on the padded (G+P) x (G+P) matrix: real pairs cost the slots
/// they disagree on, each identity may instead map to its own dummy at the cost of its
/// full length, and dummy-dummy pairs are free.
template <class Pos, class Matcher>
IdMetrics id_metrics(const TrajectorySet<Pos>& gt, const TrajectorySet<Pos>& pred, const Matcher& matcher) {
    std::vector<int> gt_ids, pred_ids;
    std::map<int, int> gt_row, pred_col;
    std::vector<long> gt_len, pred_len;
    for (const auto& [id, entries] : gt.tracks()) {
        gt_row[id] = static_cast<int>(gt_ids.size());
        gt_ids.push_back(id);
        gt_len.push_back(static_cast<long>(entries.size()));
    }
    for (const auto& [id, entries] : pred.tracks()) {
        pred_col[id] = static_cast<int>(pred_ids.size());
        pred_ids.push_back(id);
        pred_len.push_back(static_cast<long>(entries.size()));
    }
    const int g = static_cast<int>(gt_ids.size());
    const int p = static_cast<int>(pred_ids.size());
    const long total_gt = static_cast<long>(gt.size());
    const long total_pred = static_cast<long>(pred.size());
    if (g == 0 || p == 0) return id_metrics_from_counts(0, total_pred, total_gt);

    std::vector<long> overlap(static_cast<std::size_t>(g) * static_cast<std::size_t>(p), 0);
    const auto gt_slots = detail::index_slots(gt);
    const auto pred_slots = detail::index_slots(pred);
    for (const auto& [slot, gts] : gt_slots) {
        const auto it = pred_slots.find(slot);
        if (it == pred_slots.end()) continue;
        for (const auto& [gid, gpos] : gts)
            for (const auto& [pid, ppos] : it->second)
                if (matcher.matches(gpos, ppos))
                    ++overlap[static_cast<std::size_t>(gt_row[gid]) * static_cast<std::size_t>(p) +
                              static_cast<std::size_t>(pred_col[pid])];
    }

    const int size = g + p;
    const double forbidden = 1e15;
    CostMatrix cost(size, size, forbidden);
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < p; ++j)
            cost(i, j) = static_cast<double>(gt_len[static_cast<std::size_t>(i)] + pred_len[static_cast<std::size_t>(j)] -
                                             2 * overlap[static_cast<std::size_t>(i) * static_cast<std::size_t>(p) +
                                                         static_cast<std::size_t>(j)]);
    for (int i = 0; i < g; ++i) cost(i, p + i) = static_cast<double>(gt_len[static_cast<std::size_t>(i)]);
    for (int j = 0; j < p; ++j) cost(g + j, j) = static_cast<double>(pred_len[static_cast<std::size_t>(j)]);
    for (int a = g; a < size; ++a)
        for (int b = p; b < size; ++b) cost(a, b) = 0.0;

    long idtp = 0;
    for (const auto& [r, c] : solve_lap_min(cost))
        if (r < g && c < p)
            idtp += overlap[static_cast<std::size_t>(r) * static_cast<std::size_t>(p) + static_cast<std::size_t>(c)];
    return id_metrics_from_counts(idtp, total_pred - idtp, total_gt - idtp);
}

struct MotaResult {
    double mota = 0.0;
    long num_gt = 0;
    long matches = 0;
    long fn = 0;
    long fp = 0;
    long idsw = 0;
};

/// CLEAR MOTA with frame-by-frame matching that keeps last frame's correspondences while
/// they still satisfy the threshold. Each camera (or the ground plane) is its own stream.
template <class Pos, class Matcher>
MotaResult clear_mota(const TrajectorySet<Pos>& gt, const TrajectorySet<Pos>& pred, const Matcher& matcher) {
    MotaResult r;
    const auto gt_slots = detail::index_slots(gt);
    const auto pred_slots = detail::index_slots(pred);
    std::set<std::pair<int, int>> slots;
    for (const auto& [k, v] : gt_slots) slots.insert(k);
    for (const auto& [k, v] : pred_slots) slots.insert(k);

    std::map<std::pair<int, int>, int> previous;  // (camera, gt id) -> pred id matched last time
    for (const auto& slot : slots) {
        const int camera = slot.second;
        static const std::vector<std::pair<int, Pos>> none;
        const auto git = gt_slots.find(slot);
        const auto pit = pred_slots.find(slot);
        const auto& gts = git == gt_slots.end() ? none : git->second;
        const auto& preds = pit == pred_slots.end() ? none : pit->second;
        r.num_gt += static_cast<long>(gts.size());

        std::vector<int> gt_match(gts.size(), -1);
        std::vector<bool> pred_taken(preds.size(), false);
        for (std::size_t i = 0; i < gts.size(); ++i) {
            const auto prev = previous.find({camera, gts[i].first});
            if (prev == previous.end()) continue;
            for (std::size_t j = 0; j < preds.size(); ++j) {
                if (pred_taken[j] || preds[j].first != prev->second) continue;
                if (matcher.matches(gts[i].second, preds[j].second)) {
                    gt_match[i] = static_cast<int>(j);
                    pred_taken[j] = true;
                }
                break;
            }
        }

        std::vector<int> free_g, free_p;
        for (std::size_t i = 0; i < gts.size(); ++i)
            if (gt_match[i] < 0) free_g.push_back(static_cast<int>(i));
        for (std::size_t j = 0; j < preds.size(); ++j)
            if (!pred_taken[j]) free_p.push_back(static_cast<int>(j));
        if (!free_g.empty() && !free_p.empty()) {
            const double forbidden = 1e9;
            CostMatrix cost(static_cast<int>(free_g.size()), static_cast<int>(free_p.size()), forbidden);
            for (int a = 0; a < cost.rows; ++a)
                for (int b = 0; b < cost.cols; ++b) {
                    const auto& gp = gts[static_cast<std::size_t>(free_g[static_cast<std::size_t>(a)])].second;
                    const auto& pp = preds[static_cast<std::size_t>(free_p[static_cast<std::size_t>(b)])].second;
                    if (matcher.matches(gp, pp)) cost(a, b) = matcher.dissimilarity(gp, pp);
                }
            for (const auto& [a, b] : solve_lap_min(cost)) {
                if (cost(a, b) >= forbidden) continue;
                const auto gi = static_cast<std::size_t>(free_g[static_cast<std::size_t>(a)]);
                const auto pj = static_cast<std::size_t>(free_p[static_cast<std::size_t>(b)]);
                gt_match[gi] = static_cast<int>(pj);
                pred_taken[pj] = true;
                const auto prev = previous.find({camera, gts[gi].first});
                if (prev != previous.end() && prev->second != preds[pj].first) ++r.idsw;
            }
        }

        for (std::size_t i = 0; i < gts.size(); ++i) {
            if (gt_match[i] < 0) {
                ++r.fn;
                continue;
            }
            ++r.matches;
            previous[{camera, gts[i].first}] = preds[static_cast<std::size_t>(gt_match[i])].first;
        }
        for (bool taken : pred_taken) r.fp += !taken;
    }
    if (r.num_gt == 0)
        r.mota = r.fp == 0 ? 1.0 : -std::numeric_limits<double>::infinity();
    else
        r.mota = 1.0 - static_cast<double>(r.fn + r.fp + r.idsw) / static_cast<double>(r.num_gt);
    return r;
}

/// Averages several ground points reported for one identity in one frame.
inline GroundTrajectories collapse_ground(const std::vector<std::tuple<int, int, GroundPoint>>& records) {
    std::map<std::pair<int, int>, std::pair<GroundPoint, int>> acc;  // (id, frame) -> sum, count
    for (const auto& [id, frame, p] : records) {
        auto& slot = acc[{id, frame}];
        slot.first += p;
        ++slot.second;
    }
    GroundTrajectories out;
    for (const auto& [key, sum] : acc) out.add(key.first, key.second, kGroundPlane, sum.first / sum.second);
    return out;
}

}  // namespace stmc
