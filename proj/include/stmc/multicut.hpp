#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace stmc {

struct WeightedEdge {
    int u = 0;
    int v = 0;
    double w = 0.0;
};

/// Undirected graph; pairs without an edge carry weight 0.
struct WeightedGraph {
    int n = 0;
    std::vector<WeightedEdge> edges;

    WeightedGraph() = default;
    explicit WeightedGraph(int nodes) : n(nodes) {}

    /// Inserts `u < v` (the pair is reordered when needed).
    void add_edge(int u, int v, double w) {
        if (u == v) throw std::invalid_argument("self-loop in multicut graph");
        if (u > v) std::swap(u, v);
        if (u < 0 || v >= n) throw std::out_of_range("edge endpoint out of range");
        if (!std::isfinite(w)) throw std::invalid_argument("non-finite edge weight");
        edges.push_back({u, v, w});
    }
};

/// Node labels, dense cluster ids from 0 in order of each cluster's smallest member.
struct Partition {
    std::vector<int> labels;

    friend bool operator==(const Partition&, const Partition&) = default;

    int num_clusters() const {
        return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    }
};

inline Partition canonicalize(const std::vector<int>& raw) {
    std::map<int, int> remap;
    Partition p;
    p.labels.reserve(raw.size());
    for (int label : raw) {
        auto [it, inserted] = remap.try_emplace(label, static_cast<int>(remap.size()));
        p.labels.push_back(it->second);
    }
    return p;
}

inline double cut_cost(const WeightedGraph& g, const Partition& p) {
    double cost = 0.0;
    for (const auto& e : g.edges)
        if (p.labels[static_cast<std::size_t>(e.u)] != p.labels[static_cast<std::size_t>(e.v)]) cost += e.w;
    return cost;
}

inline std::vector<std::vector<int>> clusters_of(const Partition& p) {
    const Partition dense = canonicalize(p.labels);
    std::vector<std::vector<int>> out(static_cast<std::size_t>(dense.num_clusters()));
    for (std::size_t i = 0; i < dense.labels.size(); ++i)
        out[static_cast<std::size_t>(dense.labels[i])].push_back(static_cast<int>(i));
    return out;
}

namespace detail {

// Dense symmetric weight table; only used for the small exact solver.
inline std::vector<double> dense_weights(const WeightedGraph& g) {
    std::vector<double> w(static_cast<std::size_t>(g.n * g.n), 0.0);
    for (const auto& e : g.edges) {
        w[static_cast<std::size_t>(e.u * g.n + e.v)] += e.w;
        w[static_cast<std::size_t>(e.v * g.n + e.u)] += e.w;
    }
    return w;
}

}  // namespace detail

inline constexpr int kMaxExactNodes = 12;

/// Globally optimal multicut by enumerating every set partition (restricted growth strings).
inline Partition solve_exact(const WeightedGraph& g) {
    if (g.n > kMaxExactNodes)
        throw std::invalid_argument("solve_exact: at most " + std::to_string(kMaxExactNodes) + " nodes");
    const int n = g.n;
    if (n == 0) return {};
    const auto w = detail::dense_weights(g);

    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    std::vector<int> best = labels;
    double best_cost = std::numeric_limits<double>::infinity();

    // Assign node i given labels of 0..i-1; cost accumulates cut edges towards earlier nodes.
    auto recurse = [&](auto&& self, int i, int used, double cost) -> void {
        if (i == n) {
            if (cost < best_cost) {
                best_cost = cost;
                best = labels;
            }
            return;
        }
        for (int c = 0; c <= used && c < n; ++c) {
            double add = 0.0;
            for (int j = 0; j < i; ++j)
                if (labels[static_cast<std::size_t>(j)] != c) add += w[static_cast<std::size_t>(i * n + j)];
            labels[static_cast<std::size_t>(i)] = c;
            self(self, i + 1, std::max(used, c + 1), cost + add);
        }
    };
    labels[0] = 0;
    recurse(recurse, 1, 1, 0.0);
    return canonicalize(best);
}

namespace detail {

using Adjacency = std::vector<std::map<int, double>>;

inline Adjacency adjacency(const WeightedGraph& g) {
    Adjacency adj(static_cast<std::size_t>(g.n));
    for (const auto& e : g.edges) {
        adj[static_cast<std::size_t>(e.u)][e.v] += e.w;
        adj[static_cast<std::size_t>(e.v)][e.u] += e.w;
    }
    return adj;
}

/// Greedy additive edge contraction: contract the heaviest positive edge until none is left.
/// Clusters are named by their smallest node; ties prefer the lexicographically smallest pair.
inline std::vector<int> greedy_additive(const WeightedGraph& g) {
    const int n = g.n;
    Adjacency adj = adjacency(g);
    std::vector<int> parent(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;

    struct Item {
        double w;
        int u, v;
    };
    auto worse = [](const Item& a, const Item& b) {
        if (a.w != b.w) return a.w < b.w;
        return std::tie(a.u, a.v) > std::tie(b.u, b.v);
    };
    std::priority_queue<Item, std::vector<Item>, decltype(worse)> heap(worse);
    for (int u = 0; u < n; ++u)
        for (const auto& [v, w] : adj[static_cast<std::size_t>(u)])
            if (u < v && w > 0.0) heap.push({w, u, v});

    while (!heap.empty()) {
        const Item top = heap.top();
        heap.pop();
        // Stale entries: the edge vanished in a contraction or its weight changed since.
        const auto& row = adj[static_cast<std::size_t>(top.u)];
        const auto it = row.find(top.v);
        if (it == row.end() || it->second != top.w) continue;

        // Contract v into u; u < v keeps the smallest node as the representative.
        auto& au = adj[static_cast<std::size_t>(top.u)];
        auto& av = adj[static_cast<std::size_t>(top.v)];
        au.erase(top.v);
        for (const auto& [x, w] : av) {
            if (x == top.u) continue;
            auto& ax = adj[static_cast<std::size_t>(x)];
            ax.erase(top.v);
            const double merged = (au[x] += w);
            ax[top.u] = merged;
        }
        av.clear();
        for (auto& p : parent)
            if (p == top.v) p = top.u;
        for (const auto& [x, w] : au)
            if (w > 0.0) heap.push({w, std::min(top.u, x), std::max(top.u, x)});
    }
    return parent;
}

/// Single-node moves between clusters (or into a fresh singleton) and pairwise cluster
/// joins, applied while they strictly lower the cut cost.
inline void local_search(const WeightedGraph& g, std::vector<int>& labels, int max_rounds = 100) {
    constexpr double kEps = 1e-12;
    const int n = g.n;
    const Adjacency adj = adjacency(g);
    for (int round = 0; round < max_rounds; ++round) {
        bool improved = false;

        for (int v = 0; v < n; ++v) {
            const int own = labels[static_cast<std::size_t>(v)];
            std::map<int, double> towards;  // cluster label -> weight from v
            for (const auto& [x, w] : adj[static_cast<std::size_t>(v)]) towards[labels[static_cast<std::size_t>(x)]] += w;
            const double stay = towards.count(own) ? towards[own] : 0.0;
            // Moving v from `own` to `c` changes the cost by stay - towards[c].
            double best_delta = stay;  // fresh singleton
            int best_label = -1;
            for (const auto& [c, w] : towards) {
                if (c == own) continue;
                const double delta = stay - w;
                if (delta < best_delta - kEps) {
                    best_delta = delta;
                    best_label = c;
                }
            }
            if (best_delta < -kEps) {
                if (best_label == -1) {
                    // Fresh label: any unused id works, canonicalization renumbers later.
                    best_label = *std::max_element(labels.begin(), labels.end()) + 1;
                }
                labels[static_cast<std::size_t>(v)] = best_label;
                improved = true;
            }
        }

        // Join the pair of clusters with the largest positive connecting weight.
        std::map<std::pair<int, int>, double> between;
        for (const auto& e : g.edges) {
            int a = labels[static_cast<std::size_t>(e.u)], b = labels[static_cast<std::size_t>(e.v)];
            if (a == b) continue;
            if (a > b) std::swap(a, b);
            between[{a, b}] += e.w;
        }
        double best_join = kEps;
        std::pair<int, int> join{-1, -1};
        for (const auto& [key, w] : between) {
            if (w > best_join) {
                best_join = w;
                join = key;
            }
        }
        if (join.first >= 0) {
            for (auto& l : labels)
                if (l == join.second) l = join.first;
            improved = true;
        }

        if (!improved) break;
    }
}

/// Variable-depth pass: each node moves once to its best cluster (or a fresh one), even
/// uphill; the best prefix of the move sequence is kept. Returns true if it lowered the cost.
inline bool kernighan_lin(const WeightedGraph& g, std::vector<int>& labels) {
    constexpr double kEps = 1e-12;
    const int n = g.n;
    const Adjacency adj = adjacency(g);
    int fresh = *std::max_element(labels.begin(), labels.end()) + 1;
    std::map<int, int> size;
    for (int l : labels) ++size[l];
    std::vector<bool> moved(static_cast<std::size_t>(n), false);
    std::vector<std::pair<int, int>> undo;  // node, previous label
    double cum = 0.0, best_cum = 0.0;
    std::size_t best_len = 0;
    for (int step = 0; step < n; ++step) {
        double best_delta = std::numeric_limits<double>::infinity();
        int best_v = -1, best_label = -1;
        for (int v = 0; v < n; ++v) {
            if (moved[static_cast<std::size_t>(v)]) continue;
            const int own = labels[static_cast<std::size_t>(v)];
            std::map<int, double> towards;
            for (const auto& [x, w] : adj[static_cast<std::size_t>(v)]) towards[labels[static_cast<std::size_t>(x)]] += w;
            const double stay = towards.count(own) ? towards[own] : 0.0;
            const bool alone = size[own] == 1;
            for (const auto& [c, w] : towards) {
                if (c == own) continue;
                if (stay - w < best_delta - kEps) {
                    best_delta = stay - w;
                    best_v = v;
                    best_label = c;
                }
            }
            if (!alone && stay < best_delta - kEps) {
                best_delta = stay;
                best_v = v;
                best_label = -1;
            }
        }
        if (best_v < 0) break;
        undo.emplace_back(best_v, labels[static_cast<std::size_t>(best_v)]);
        --size[labels[static_cast<std::size_t>(best_v)]];
        labels[static_cast<std::size_t>(best_v)] = best_label < 0 ? fresh++ : best_label;
        ++size[labels[static_cast<std::size_t>(best_v)]];
        moved[static_cast<std::size_t>(best_v)] = true;
        cum += best_delta;
        if (cum < best_cum - kEps) {
            best_cum = cum;
            best_len = undo.size();
        }
    }
    while (undo.size() > best_len) {
        labels[static_cast<std::size_t>(undo.back().first)] = undo.back().second;
        undo.pop_back();
    }
    return best_len > 0;
}

}  // namespace detail

/// Greedy additive edge contraction followed by local node-move / join refinement and
/// variable-depth move passes, also restarted from all-singletons and all-one-cluster.
/// Deterministic; never worse than the all-singletons or all-one-cluster partitions.
inline Partition solve_heuristic(const WeightedGraph& g) {
    if (g.n == 0) return {};
    auto refine = [&](std::vector<int> labels) {
        for (int round = 0; round < 100; ++round) {
            detail::local_search(g, labels);
            if (!detail::kernighan_lin(g, labels)) break;
        }
        return canonicalize(labels);
    };
    std::vector<int> identity(static_cast<std::size_t>(g.n));
    std::iota(identity.begin(), identity.end(), 0);
    const std::vector<int> singletons = std::move(identity);
    const std::vector<int> one(static_cast<std::size_t>(g.n), 0);

    // Starts are tried in order; a later one must be strictly cheaper to win.
    Partition best = refine(detail::greedy_additive(g));
    double best_cost = cut_cost(g, best);
    for (const std::vector<int>* start : {&singletons, &one}) {
        for (const Partition& p : std::initializer_list<Partition>{canonicalize(*start), refine(*start)}) {
            const double c = cut_cost(g, p);
            if (c < best_cost) {
                best_cost = c;
                best = p;
            }
        }
    }
    return best;
}

}  // namespace stmc
