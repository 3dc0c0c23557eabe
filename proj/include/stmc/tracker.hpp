#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "assign.hpp"
#include "config.hpp"
#include "core.hpp"
#include "multicut.hpp"
#include "weights.hpp"

namespace stmc {

class FrameMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One assigned detection in the output.
struct BoxRecord {
    int identity = 0;
    int camera = 0;
    BBox box;
    double confidence = 0.0;
    GroundPoint pos_bev;
};

/// One identity's ground-plane point for the frame (mean over its detections).
struct GroundRecord {
    int identity = 0;
    GroundPoint pos;
};

struct MergeEvent {
    int retired = 0;
    int pivot = 0;
};

struct FrameResult {
    int frame = 0;
    std::vector<std::optional<int>> assignments;  // per input detection; empty below min_confidence
    std::vector<int> born, updated, deactivated, lost, killed;
    std::vector<MergeEvent> merged;
    std::vector<BoxRecord> boxes;    // sorted by (camera, identity)
    std::vector<GroundRecord> ground;  // sorted by identity
    int nodes = 0;
    int infeasible_edges = 0;
    int penalty_violations = 0;  // infeasible pairs the solver left in one cluster (repaired)
};

/// What happened to one solver cluster.
struct ClusterAction {
    int identity = 0;
    bool born = false;
    bool matched = false;
    std::vector<int> absorbed;
};

namespace detail {

template <class Fn>
void parallel_rows(int count, int threads, Fn&& fn) {
    if (threads <= 1 || count < 64) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (int i = t; i < count; i += threads) fn(i);
        });
}

}  // namespace detail

/// State transition for one unmatched frame, as applied by the tracker. Returns nullopt when killed.
inline std::optional<TrackState> advance_unmatched(TrackState s, const TrackerConfig& cfg) {
    switch (s.status) {
        case TrackStatus::Active: s = TrackState::inactive(1); break;
        case TrackStatus::Inactive: s = TrackState::inactive(s.frames + 1); break;
        case TrackStatus::Lost: s = TrackState::lost(s.frames + 1); break;
    }
    if (s.status == TrackStatus::Inactive && s.frames > cfg.patience) s = TrackState::lost(1);
    if (s.status == TrackStatus::Lost && s.frames > cfg.memory) return std::nullopt;
    return s;
}

/// Online spatial-temporal multicut tracker for one scene.
///
/// Each step builds one graph over all live tracks and the frame's detections, solves a
/// single multicut and turns the clusters into identity updates.
class Tracker {
public:
    Tracker(TrackerConfig cfg, int cameras, int start_frame = 0)
        : cfg_(std::move(cfg)), cameras_(cameras), frame_(start_frame) {
        validate(cfg_);
        if (cameras_ <= 0) throw std::invalid_argument("tracker needs at least one camera");
    }

    const TrackerConfig& config() const { return cfg_; }
    int cameras() const { return cameras_; }
    int frame() const { return frame_; }
    int next_identity() const { return next_identity_; }
    const std::map<int, Track>& tracks() const { return tracks_; }
    void set_threads(int n) { threads_ = std::max(1, n); }

    /// Inserts an existing track, e.g. when restoring state.
    void adopt_track(Track t) {
        if (t.identity <= 0) throw std::invalid_argument("track identity must be positive");
        if (tracks_.count(t.identity)) throw std::invalid_argument("duplicate track identity");
        next_identity_ = std::max(next_identity_, t.identity + 1);
        tracks_.emplace(t.identity, std::move(t));
    }

    FrameResult step(std::span<const Detection> detections) {
        const int t = frame_;
        FrameResult result;
        result.frame = t;
        result.assignments.assign(detections.size(), std::nullopt);

        std::vector<int> kept;  // indices into `detections`
        for (std::size_t i = 0; i < detections.size(); ++i) {
            const auto& d = detections[i];
            if (d.frame != t)
                throw FrameMismatch("detection for frame " + std::to_string(d.frame) + " passed to step " +
                                    std::to_string(t));
            if (d.camera < 0 || d.camera >= cameras_) throw std::out_of_range("detection camera index");
            if (d.confidence >= cfg_.min_confidence) kept.push_back(static_cast<int>(i));
        }

        // Nodes: tracks in identity order, then detections.
        std::vector<int> track_ids;
        for (const auto& [id, tr] : tracks_) track_ids.push_back(id);
        const int num_tracks = static_cast<int>(track_ids.size());
        const int n = num_tracks + static_cast<int>(kept.size());
        result.nodes = n;

        std::vector<SuperBox> det_boxes;
        std::vector<EvidenceLog> det_evidence;
        det_boxes.reserve(kept.size());
        det_evidence.reserve(kept.size());
        for (int idx : kept) {
            const Detection* d = &detections[static_cast<std::size_t>(idx)];
            det_boxes.push_back(fill_missing(make_superbox(cameras_, t, std::span(&d, 1))));
            EvidenceLog log(cameras_);
            log.record(d->camera, t);
            det_evidence.push_back(std::move(log));
        }

        std::vector<NodeView> views(static_cast<std::size_t>(n));
        for (int i = 0; i < num_tracks; ++i) {
            const Track& tr = tracks_.at(track_ids[static_cast<std::size_t>(i)]);
            views[static_cast<std::size_t>(i)] = {&tr.rep, tr.rep.ground_position(), &tr.evidence,
                                                  tr.state.is_lost(), tr.state.is_lost() ? tr.state.frames : 0};
        }
        for (std::size_t k = 0; k < kept.size(); ++k) {
            const auto& d = detections[static_cast<std::size_t>(kept[k])];
            views[static_cast<std::size_t>(num_tracks) + k] = {&det_boxes[k], d.pos_bev, &det_evidence[k], false, 0};
        }

        // Pairwise weights, computed once per unordered pair.
        std::vector<EdgeWeight> weights(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
        auto at = [&](int i, int j) -> EdgeWeight& {
            return weights[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
        };
        detail::parallel_rows(n, threads_, [&](int i) {
            for (int j = i + 1; j < n; ++j) {
                const auto& a = views[static_cast<std::size_t>(i)];
                const auto& b = views[static_cast<std::size_t>(j)];
                at(i, j) = EdgeWeight{node_similarity(a, b, cfg_), mark_infeasible(a, b, cfg_)};
            }
        });

        if (cfg_.enable_prematch) apply_prematch(track_ids, detections, kept, at);

        WeightedGraph graph(n);
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                const EdgeWeight w = finalize_weight(at(i, j), cfg_);
                if (!std::isfinite(w.value)) throw std::logic_error("non-finite edge weight");
                at(i, j) = w;
                result.infeasible_edges += w.infeasible;
                if (w.value != 0.0) graph.add_edge(i, j, w.value);
            }
        }

        const Partition partition = solve_heuristic(graph);

        // Split any cluster that still joins an infeasible pair; the first node keeps the slot.
        std::vector<std::vector<int>> clusters;
        for (auto cluster : clusters_of(partition)) {
            std::stable_sort(cluster.begin(), cluster.end(), [&](int a, int b) {
                return node_priority(a, b, track_ids, num_tracks);
            });
            std::vector<std::vector<int>> parts;
            for (int node : cluster) {
                bool placed = false;
                for (auto& part : parts) {
                    const bool clash = std::any_of(part.begin(), part.end(), [&](int other) {
                        return at(std::min(node, other), std::max(node, other)).infeasible;
                    });
                    if (!clash) {
                        part.push_back(node);
                        placed = true;
                        break;
                    }
                }
                if (!placed) parts.push_back({node});
            }
            result.penalty_violations += static_cast<int>(parts.size()) - 1;
            for (auto& part : parts) clusters.push_back(std::move(part));
        }

        std::set<int> matched;
        std::set<int> born;
        for (const auto& cluster : clusters) {
            std::vector<int> ids;
            std::vector<const Detection*> dets;
            std::vector<int> det_indices;
            for (int node : cluster) {
                if (node < num_tracks) {
                    ids.push_back(track_ids[static_cast<std::size_t>(node)]);
                } else {
                    const int idx = kept[static_cast<std::size_t>(node - num_tracks)];
                    dets.push_back(&detections[static_cast<std::size_t>(idx)]);
                    det_indices.push_back(idx);
                }
            }
            const ClusterAction action = assign_cluster(ids, dets);
            for (int retired : action.absorbed) result.merged.push_back({retired, action.identity});
            if (action.born) born.insert(action.identity);
            if (action.matched && !action.born) matched.insert(action.identity);
            if (dets.empty()) continue;

            GroundPoint mean;
            for (std::size_t k = 0; k < dets.size(); ++k) {
                const Detection& d = *dets[k];
                result.assignments[static_cast<std::size_t>(det_indices[k])] = action.identity;
                result.boxes.push_back({action.identity, d.camera, d.bbox, d.confidence, d.pos_bev});
                mean += d.pos_bev;
            }
            result.ground.push_back({action.identity, mean / static_cast<double>(dets.size())});
        }

        lifecycle_update(matched, born, result);
        result.born.assign(born.begin(), born.end());
        result.updated.assign(matched.begin(), matched.end());

        for (auto& [id, tr] : tracks_) {
            tr.evidence.forget_before(t - (cfg_.memory + cfg_.patience));
            project(tr);
        }

        std::sort(result.boxes.begin(), result.boxes.end(), [](const BoxRecord& a, const BoxRecord& b) {
            return std::tie(a.camera, a.identity) < std::tie(b.camera, b.identity);
        });
        std::sort(result.ground.begin(), result.ground.end(),
                  [](const GroundRecord& a, const GroundRecord& b) { return a.identity < b.identity; });
        ++frame_;
        return result;
    }

    /// Turns one solver cluster into an identity action at the current frame.
    ///
    /// Without tracks a new identity is minted. Otherwise the track seen most recently
    /// (ties: lowest identity) is the pivot: the frame's detections are aggregated into one
    /// superbox and blended into it, and every other track in the cluster is retired into it.
    ClusterAction assign_cluster(std::span<const int> track_ids, std::span<const Detection* const> dets) {
        const int t = frame_;
        ClusterAction action;
        if (track_ids.empty()) {
            if (dets.empty()) return action;
            Track tr;
            tr.identity = next_identity_++;
            tr.rep = fill_missing(make_superbox(cameras_, t, dets));
            tr.velo_2d.assign(static_cast<std::size_t>(cameras_), Velocity{});
            tr.state = TrackState::active();
            tr.last_seen = t;
            tr.camera_last_seen.assign(static_cast<std::size_t>(cameras_), std::nullopt);
            tr.last_observed_box.assign(static_cast<std::size_t>(cameras_), std::nullopt);
            tr.evidence = EvidenceLog(cameras_);
            tr.last_observed_bev = tr.rep.ground_position();
            for (const Detection* d : dets) {
                const auto m = static_cast<std::size_t>(d->camera);
                tr.evidence.record(d->camera, t);
                tr.camera_last_seen[m] = t;
                tr.last_observed_box[m] = d->bbox;
            }
            action.identity = tr.identity;
            action.born = true;
            action.matched = true;
            tracks_.emplace(tr.identity, std::move(tr));
            return action;
        }

        int pivot_id = track_ids.front();
        for (int id : track_ids) {
            const Track& cand = tracks_.at(id);
            const Track& best = tracks_.at(pivot_id);
            if (cand.last_seen > best.last_seen || (cand.last_seen == best.last_seen && id < pivot_id))
                pivot_id = id;
        }
        Track& pivot = tracks_.at(pivot_id);
        action.identity = pivot_id;

        for (int id : track_ids) {
            if (id == pivot_id) continue;
            absorb(pivot, tracks_.at(id));
            tracks_.erase(id);
            action.absorbed.push_back(id);
        }
        std::sort(action.absorbed.begin(), action.absorbed.end());

        if (dets.empty()) return action;

        const SuperBox observed = fill_missing(make_superbox(cameras_, t, dets));
        const GroundPoint observed_bev = observed.ground_position();
        const int gap = std::max(1, t - pivot.last_seen);
        pivot.velo_bev = update_velocity(pivot.velo_bev, (observed_bev - pivot.last_observed_bev) / gap, cfg_.ema_gamma);
        pivot.last_observed_bev = observed_bev;
        for (const Detection* d : dets) {
            const auto m = static_cast<std::size_t>(d->camera);
            if (pivot.last_observed_box[m] && pivot.camera_last_seen[m]) {
                const int cam_gap = std::max(1, t - *pivot.camera_last_seen[m]);
                const BBox& prev = *pivot.last_observed_box[m];
                const Velocity delta{(d->bbox.l - prev.l) / cam_gap, (d->bbox.t - prev.t) / cam_gap};
                pivot.velo_2d[m] = update_velocity(pivot.velo_2d[m], delta, cfg_.ema_gamma);
            }
            pivot.last_observed_box[m] = d->bbox;
            pivot.camera_last_seen[m] = t;
            pivot.evidence.record(d->camera, t);
        }
        pivot.rep = ema_merge(pivot.rep, observed, cfg_.ema_gamma);
        pivot.last_seen = t;
        action.matched = true;
        return action;
    }

private:
    // Clusters are processed pivot-first: tracks by recency, then detections by index.
    bool node_priority(int a, int b, const std::vector<int>& track_ids, int num_tracks) const {
        const bool ta = a < num_tracks, tb = b < num_tracks;
        if (ta != tb) return ta;
        if (!ta) return a < b;
        const Track& x = tracks_.at(track_ids[static_cast<std::size_t>(a)]);
        const Track& y = tracks_.at(track_ids[static_cast<std::size_t>(b)]);
        if (x.last_seen != y.last_seen) return x.last_seen > y.last_seen;
        return x.identity < y.identity;
    }

    template <class At>
    void apply_prematch(const std::vector<int>& track_ids, std::span<const Detection> detections,
                        const std::vector<int>& kept, At&& at) {
        const int num_tracks = static_cast<int>(track_ids.size());
        std::vector<PrematchTrack> rows;
        for (int i = 0; i < num_tracks; ++i) {
            const Track& tr = tracks_.at(track_ids[static_cast<std::size_t>(i)]);
            if (tr.state.is_lost()) continue;
            rows.push_back({i, tr.rep.pos_2d});
        }
        std::vector<PrematchDetection> cols;
        for (std::size_t k = 0; k < kept.size(); ++k) {
            const auto& d = detections[static_cast<std::size_t>(kept[k])];
            cols.push_back({num_tracks + static_cast<int>(k), d.camera, d.bbox});
        }
        const PrematchResult pm = prematch_bias(rows, cols, cameras_, cfg_);
        for (const auto& [key, bias] : pm.bias) at(key.first, key.second).value += bias;
        for (const auto& key : pm.pruned) at(key.first, key.second).value = 0.0;
    }

    void absorb(Track& pivot, const Track& other) {
        pivot.evidence.absorb(other.evidence);
        for (int m = 0; m < cameras_; ++m) {
            const auto i = static_cast<std::size_t>(m);
            if (!pivot.rep.pos_2d[i] && other.rep.pos_2d[i]) {
                pivot.rep.pos_2d[i] = other.rep.pos_2d[i];
                pivot.velo_2d[i] = other.velo_2d[i];
            }
            if (!pivot.last_observed_box[i] && other.last_observed_box[i]) {
                pivot.last_observed_box[i] = other.last_observed_box[i];
                pivot.camera_last_seen[i] = other.camera_last_seen[i];
            }
        }
    }

    void lifecycle_update(const std::set<int>& matched, const std::set<int>& born, FrameResult& result) {
        std::vector<int> dead;
        for (auto& [id, tr] : tracks_) {
            if (born.count(id)) continue;
            if (matched.count(id)) {
                tr.state = TrackState::active();
                continue;
            }
            const TrackStatus before = tr.state.status;
            const auto next = advance_unmatched(tr.state, cfg_);
            if (before == TrackStatus::Active) result.deactivated.push_back(id);
            if (!next) {
                dead.push_back(id);
                continue;
            }
            if (before != TrackStatus::Lost && next->is_lost()) result.lost.push_back(id);
            tr.state = *next;
        }
        for (int id : dead) {
            tracks_.erase(id);
            result.killed.push_back(id);
        }
    }

    void project(Track& tr) const {
        for (int m = 0; m < cameras_; ++m) {
            const auto i = static_cast<std::size_t>(m);
            tr.rep.pos_bev[i] = predict_linear(tr.rep.pos_bev[i], tr.velo_bev);
            if (tr.rep.pos_2d[i]) tr.rep.pos_2d[i] = predict_linear(*tr.rep.pos_2d[i], tr.velo_2d[i]);
        }
    }

    TrackerConfig cfg_;
    int cameras_;
    int frame_;
    int next_identity_ = 1;
    int threads_ = 1;
    std::map<int, Track> tracks_;
};

}  // namespace stmc
