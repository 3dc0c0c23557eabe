#pragma once

#include <algorithm>
#include <cmath>

#include "config.hpp"
#include "core.hpp"

namespace stmc {

struct EdgeWeight {
    double value = 0.0;
    bool infeasible = false;
};

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

/// Maps a cosine in [-1, 1] piecewise-linearly so that `theta` goes to 0 and the endpoints stay fixed.
inline double rescale_cosine(double raw, double theta) {
    if (raw >= theta) return (raw - theta) / (1.0 - theta);
    return (raw - theta) / (1.0 + theta);
}

/// Mean over cameras of the row-wise cosine, rescaled around `theta_feat`.
inline double scaled_feature_similarity(const SuperBox& a, const SuperBox& b, double theta_feat) {
    const int m_count = a.cameras();
    double sum = 0.0;
    for (int m = 0; m < m_count; ++m)
        sum += cosine(a.feat.row(m).transpose(), b.feat.row(m).transpose());
    const double raw = std::clamp(sum / m_count, -1.0, 1.0);
    return rescale_cosine(raw, theta_feat);
}

inline double positional_similarity(GroundPoint a, GroundPoint b, double theta_pos) {
    return std::max(-1.0, 1.0 - distance(a, b) / theta_pos);
}

inline double combine(double feat_sim, double pos_sim, double lambda) {
    return lambda * feat_sim + (1.0 - lambda) * pos_sim;
}

/// What the weight computation needs to know about a graph node.
struct NodeView {
    const SuperBox* rep = nullptr;
    GroundPoint position;
    const EvidenceLog* evidence = nullptr;
    bool lost = false;
    int lost_for = 0;
};

/// Same-camera co-occurrence, or a distance beyond the gate between two non-lost nodes.
inline bool mark_infeasible(const NodeView& a, const NodeView& b, const TrackerConfig& cfg) {
    if (a.evidence && b.evidence && a.evidence->overlaps(*b.evidence)) return true;
    if (a.lost || b.lost) return false;
    return distance(a.position, b.position) > cfg.distance_gate();
}

inline EdgeWeight finalize_weight(EdgeWeight edge, const TrackerConfig& cfg) {
    if (edge.infeasible) edge.value = cfg.rho;
    return edge;
}

/// Geometric down-weighting of a lost track's appearance similarity.
inline double decay_similarity(double raw_sim, int lost_for, double beta) {
    return std::pow(beta, lost_for) * raw_sim;
}

/// Combined similarity of two nodes before bias, pruning and penalties.
inline double node_similarity(const NodeView& a, const NodeView& b, const TrackerConfig& cfg) {
    double feat = scaled_feature_similarity(*a.rep, *b.rep, cfg.theta_feat);
    if (cfg.enable_decay && (a.lost || b.lost)) {
        // One combined factor keeps w(a, b) == w(b, a) bit-exactly.
        const double fa = a.lost ? std::pow(cfg.beta_decay, a.lost_for) : 1.0;
        const double fb = b.lost ? std::pow(cfg.beta_decay, b.lost_for) : 1.0;
        feat *= fa * fb;
    }
    if (!cfg.lost_use_position && (a.lost || b.lost)) return feat;
    return combine(feat, positional_similarity(a.position, b.position, cfg.theta_pos), cfg.lambda);
}

}  // namespace stmc
