#pragma once

// HDBSCAN* over Euclidean points: core distances, mutual reachability, Prim's
// MST on the implicit complete graph, single-linkage dendrogram, condensed
// tree, and excess-of-mass selection. Tie handling and node numbering follow
// the widely used reference implementation so labels agree with it exactly.
//
// Also hosts the post-hoc consensus relabeling of noise points.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

#include "catseq/numcore.hpp"

namespace catseq {

struct HdbscanParams {
    int min_cluster_size = 5;
    int min_samples = 5;
};

struct MstEdge {
    int from = 0;
    int to = 0;
    double weight = 0.0;
};

struct LinkageRow {
    int left = 0;
    int right = 0;
    double distance = 0.0;
    int size = 0;
};

struct CondensedRow {
    int parent = 0;
    int child = 0;
    double lambda = 0.0;
    int child_size = 0;
};

struct CondensedTree {
    std::vector<CondensedRow> rows;
    int point_count = 0;
    std::map<int, double> stability;  ///< cluster node -> excess of mass

    int root() const { return point_count; }
};

struct HdbscanResult {
    std::vector<int> labels;
    std::vector<double> core_distances;
    std::vector<MstEdge> mst;
    CondensedTree tree;
    std::vector<int> selected;  ///< condensed-tree cluster ids, label order
};

namespace detail {

inline double euclidean(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double t = a[k] - b[k];
        s += t * t;
    }
    return std::sqrt(s);
}

inline void check_points(const Tensor& points) {
    if (points.cols() == 0) throw std::invalid_argument("hdbscan: points need at least one dimension");
    if (!points.all_finite()) throw std::invalid_argument("hdbscan: non-finite coordinates");
}

}  // namespace detail

inline double point_distance(const Tensor& points, std::size_t i, std::size_t j) {
    const auto d = points.cols();
    return detail::euclidean(points.data().data() + i * d, points.data().data() + j * d, d);
}

/// Distance to the k-th nearest neighbour, counting the point itself as the first.
inline std::vector<double> core_distances(const Tensor& points, int k) {
    detail::check_points(points);
    const std::size_t n = points.rows();
    if (k < 1) throw std::invalid_argument("core_distances: k must be >= 1");
    const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), n);
    std::vector<double> core(n, 0.0);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) row[j] = i == j ? 0.0 : point_distance(points, i, j);
        std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(kk - 1), row.end());
        core[i] = row[kk - 1];
    }
    return core;
}

inline double mutual_reachability(const Tensor& points, const std::vector<double>& core, std::size_t i, std::size_t j) {
    return std::max({core[i], core[j], point_distance(points, i, j)});
}

/// Prim's algorithm over the dense mutual-reachability graph, O(n^2) time and
/// O(n) memory. Edges come out in insertion order.
inline std::vector<MstEdge> mutual_reachability_mst(const Tensor& points, const std::vector<double>& core) {
    const std::size_t n = points.rows();
    std::vector<MstEdge> mst;
    if (n < 2) return mst;
    mst.reserve(n - 1);
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<char> in_tree(n, 0);
    std::vector<double> min_reach(n, inf);
    std::vector<int> source(n, 0);
    std::size_t current = 0;
    for (std::size_t step = 0; step + 1 < n; ++step) {
        in_tree[current] = 1;
        const double core_cur = core[current];
        double best = inf;
        int best_source = 0;
        std::size_t best_node = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (in_tree[j]) continue;
            const double prev = min_reach[j];
            const double mrd = std::max({core_cur, core[j], point_distance(points, current, j)});
            if (mrd > prev) {
                if (prev < best) {
                    best = prev;
                    best_source = source[j];
                    best_node = j;
                }
                continue;
            }
            if (mrd < prev) {
                min_reach[j] = mrd;
                source[j] = static_cast<int>(current);
                if (mrd < best) {
                    best = mrd;
                    best_source = static_cast<int>(current);
                    best_node = j;
                }
            } else if (prev < best) {
                best = prev;
                best_source = source[j];
                best_node = j;
            }
        }
        mst.push_back({best_source, static_cast<int>(best_node), best});
        current = best_node;
    }
    return mst;
}

/// Sorts the MST by weight and merges with union-find; new nodes are numbered
/// n, n+1, ... in merge order (scipy linkage convention).
inline std::vector<LinkageRow> single_linkage(std::vector<MstEdge> mst, std::size_t n) {
    if (mst.size() + 1 != n) throw std::invalid_argument("single_linkage: MST must have n-1 edges");
    std::stable_sort(mst.begin(), mst.end(), [](const MstEdge& a, const MstEdge& b) { return a.weight < b.weight; });
    std::vector<int> parent(2 * n - 1, -1);
    std::vector<int> size(2 * n - 1, 0);
    std::fill(size.begin(), size.begin() + static_cast<std::ptrdiff_t>(n), 1);
    auto find = [&](int x) {
        int root = x;
        while (parent[static_cast<std::size_t>(root)] != -1) root = parent[static_cast<std::size_t>(root)];
        while (parent[static_cast<std::size_t>(x)] != -1 && parent[static_cast<std::size_t>(x)] != root) {
            const int next = parent[static_cast<std::size_t>(x)];
            parent[static_cast<std::size_t>(x)] = root;
            x = next;
        }
        return root;
    };
    std::vector<LinkageRow> out;
    out.reserve(mst.size());
    int next_label = static_cast<int>(n);
    for (const auto& e : mst) {
        const int a = find(e.from);
        const int b = find(e.to);
        const int merged = size[static_cast<std::size_t>(a)] + size[static_cast<std::size_t>(b)];
        out.push_back({a, b, e.weight, merged});
        parent[static_cast<std::size_t>(a)] = next_label;
        parent[static_cast<std::size_t>(b)] = next_label;
        size[static_cast<std::size_t>(next_label)] = merged;
        ++next_label;
    }
    return out;
}

namespace detail {

/// Level-order traversal of the dendrogram from `root` (left before right).
inline std::vector<int> bfs_hierarchy(const std::vector<LinkageRow>& h, int root, int n) {
    std::vector<int> result;
    std::vector<int> level{root};
    while (!level.empty()) {
        result.insert(result.end(), level.begin(), level.end());
        std::vector<int> next;
        for (int node : level)
            if (node >= n) {
                const auto& row = h[static_cast<std::size_t>(node - n)];
                next.push_back(row.left);
                next.push_back(row.right);
            }
        level.swap(next);
    }
    return result;
}

}  // namespace detail

inline CondensedTree condense_tree(const std::vector<LinkageRow>& h, int min_cluster_size) {
    const int n = static_cast<int>(h.size()) + 1;
    const int root = 2 * (n - 1);
    CondensedTree tree;
    tree.point_count = n;
    if (n == 1) return tree;
    const auto order = detail::bfs_hierarchy(h, root, n);
    std::vector<int> relabel(static_cast<std::size_t>(root) + 1, 0);
    std::vector<char> ignore(static_cast<std::size_t>(root) + 1, 0);
    relabel[static_cast<std::size_t>(root)] = n;
    int next_label = n + 1;
    auto size_of = [&](int node) { return node >= n ? h[static_cast<std::size_t>(node - n)].size : 1; };
    auto drop_points = [&](int from, int parent_label, double lambda) {
        for (int sub : detail::bfs_hierarchy(h, from, n)) {
            if (sub < n) tree.rows.push_back({parent_label, sub, lambda, 1});
            ignore[static_cast<std::size_t>(sub)] = 1;
        }
    };
    for (int node : order) {
        if (ignore[static_cast<std::size_t>(node)] || node < n) continue;
        const auto& row = h[static_cast<std::size_t>(node - n)];
        const double lambda = row.distance > 0.0 ? 1.0 / row.distance : std::numeric_limits<double>::infinity();
        const int left_count = size_of(row.left);
        const int right_count = size_of(row.right);
        const int label = relabel[static_cast<std::size_t>(node)];
        if (left_count >= min_cluster_size && right_count >= min_cluster_size) {
            relabel[static_cast<std::size_t>(row.left)] = next_label++;
            tree.rows.push_back({label, relabel[static_cast<std::size_t>(row.left)], lambda, left_count});
            relabel[static_cast<std::size_t>(row.right)] = next_label++;
            tree.rows.push_back({label, relabel[static_cast<std::size_t>(row.right)], lambda, right_count});
        } else if (left_count < min_cluster_size && right_count < min_cluster_size) {
            drop_points(row.left, label, lambda);
            drop_points(row.right, label, lambda);
        } else if (left_count < min_cluster_size) {
            relabel[static_cast<std::size_t>(row.right)] = label;
            drop_points(row.left, label, lambda);
        } else {
            relabel[static_cast<std::size_t>(row.left)] = label;
            drop_points(row.right, label, lambda);
        }
    }
    // Excess of mass: sum over departures of (lambda - birth of parent) * size.
    std::map<int, double> birth;
    for (const auto& r : tree.rows) birth[r.child] = r.lambda;
    birth[tree.root()] = 0.0;
    for (const auto& r : tree.rows) tree.stability.emplace(r.parent, 0.0);
    for (const auto& r : tree.rows) tree.stability[r.parent] += (r.lambda - birth[r.parent]) * r.child_size;
    return tree;
}

/// Excess-of-mass cluster selection (root excluded); returns selected ids ascending.
inline std::vector<int> select_clusters_eom(const CondensedTree& tree) {
    auto stability = tree.stability;
    std::vector<int> nodes;
    for (auto& [id, _] : stability) nodes.push_back(id);
    std::sort(nodes.rbegin(), nodes.rend());
    if (!nodes.empty()) nodes.pop_back();  // root has the smallest id
    std::map<int, std::vector<int>> children;
    for (const auto& r : tree.rows)
        if (r.child_size > 1) children[r.parent].push_back(r.child);
    std::map<int, bool> is_cluster;
    for (int id : nodes) is_cluster[id] = true;
    for (int node : nodes) {
        double subtree = 0.0;
        for (int c : children[node]) subtree += stability[c];
        if (subtree > stability[node]) {
            is_cluster[node] = false;
            stability[node] = subtree;
        } else {
            std::deque<int> queue(children[node].begin(), children[node].end());
            while (!queue.empty()) {
                const int sub = queue.front();
                queue.pop_front();
                is_cluster[sub] = false;
                for (int c : children[sub]) queue.push_back(c);
            }
        }
    }
    std::vector<int> selected;
    for (auto& [id, flag] : is_cluster)
        if (flag) selected.push_back(id);
    return selected;
}

/// Each point takes the label of its nearest selected ancestor; points with no
/// selected ancestor are noise.
inline std::vector<int> label_points(const CondensedTree& tree, const std::vector<int>& selected) {
    const int n = tree.point_count;
    std::map<int, int> parent_of;
    for (const auto& r : tree.rows) parent_of[r.child] = r.parent;
    std::map<int, int> label_of;
    for (std::size_t i = 0; i < selected.size(); ++i) label_of[selected[i]] = static_cast<int>(i);
    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    std::map<int, int> memo;
    for (int p = 0; p < n; ++p) {
        int node = p;
        std::vector<int> path;
        int label = -1;
        while (true) {
            if (auto m = memo.find(node); m != memo.end()) {
                label = m->second;
                break;
            }
            if (auto s = label_of.find(node); s != label_of.end() && node != p) {
                label = s->second;
                break;
            }
            auto up = parent_of.find(node);
            if (up == parent_of.end()) break;
            if (node != p) path.push_back(node);
            node = up->second;
        }
        for (int q : path) memo[q] = label;
        labels[static_cast<std::size_t>(p)] = label;
    }
    return labels;
}

inline HdbscanResult hdbscan_detail(const Tensor& points, HdbscanParams params = {}) {
    detail::check_points(points);
    const std::size_t n = points.rows();
    if (params.min_cluster_size < 2) throw std::invalid_argument("hdbscan: min_cluster_size must be >= 2");
    if (params.min_samples < 1) throw std::invalid_argument("hdbscan: min_samples must be >= 1");
    if (n < static_cast<std::size_t>(params.min_cluster_size))
        throw std::invalid_argument("hdbscan: fewer points than min_cluster_size");
    HdbscanResult r;
    bool all_same = true;
    for (std::size_t i = 1; i < n && all_same; ++i)
        for (std::size_t k = 0; k < points.cols(); ++k)
            if (points(i, k) != points(0, k)) {
                all_same = false;
                break;
            }
    if (all_same) {
        // Degenerate input: every pairwise distance is zero, so the whole set is one cluster.
        r.labels.assign(n, 0);
        r.core_distances.assign(n, 0.0);
        return r;
    }
    r.core_distances = core_distances(points, params.min_samples);
    r.mst = mutual_reachability_mst(points, r.core_distances);
    const auto linkage = single_linkage(r.mst, n);
    r.tree = condense_tree(linkage, params.min_cluster_size);
    r.selected = select_clusters_eom(r.tree);
    r.labels = label_points(r.tree, r.selected);
    return r;
}

inline std::vector<int> hdbscan(const Tensor& points, HdbscanParams params = {}) {
    return hdbscan_detail(points, params).labels;
}

struct PhcResult {
    std::vector<int> labels;
    std::size_t relabeled = 0;
    bool all_noise = false;  ///< nothing to vote with; labels returned unchanged
};

/// Gives every noise point the most common label among its k nearest labeled
/// points; a tie goes to the label of the single nearest one. Votes use the
/// input labels only, so a single pass leaves no noise behind.
inline PhcResult phc(const std::vector<int>& labels, const Tensor& points, int k = 20) {
    if (labels.size() != points.rows()) throw std::invalid_argument("phc: label/point count mismatch");
    if (k < 1) throw std::invalid_argument("phc: k must be >= 1");
    PhcResult r;
    r.labels = labels;
    std::vector<std::size_t> labeled;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != -1) labeled.push_back(i);
    if (labeled.empty()) {
        r.all_noise = true;
        return r;
    }
    const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), labeled.size());
    std::vector<std::pair<double, std::size_t>> dist(labeled.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != -1) continue;
        for (std::size_t j = 0; j < labeled.size(); ++j) dist[j] = {point_distance(points, i, labeled[j]), labeled[j]};
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
        std::map<int, std::size_t> votes;
        for (std::size_t rank = 0; rank < kk; ++rank) ++votes[labels[dist[rank].second]];
        int best = -1;
        std::size_t best_count = 0;
        bool tied = false;
        for (auto& [label, count] : votes)
            if (count > best_count) {
                best = label;
                best_count = count;
                tied = false;
            } else if (count == best_count) {
                tied = true;
            }
        if (tied) best = labels[dist[0].second];
        r.labels[i] = best;
        ++r.relabeled;
    }
    return r;
}

}  // namespace catseq
