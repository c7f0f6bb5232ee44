#pragma once

#include <map>
#include <set>

#include "gnnprop/gnn.hpp"
#include "gnnprop/structure.hpp"

namespace gnnprop {

namespace detail {

inline std::vector<int> objective_union_slice(const Gnn& m) {
    std::set<int> cols;
    for (const auto& [name, obj] : m.objectives)
        for (int c = obj.lo; c < obj.hi; ++c) cols.insert(c);
    return std::vector<int>(cols.begin(), cols.end());
}

inline Graph without_edge(const Graph& g, int edge_idx) {
    Graph out = g;
    out.edges.erase(out.edges.begin() + edge_idx);
    Mat ef(g.edge_count() - 1, g.edge_features.cols);
    for (int e = 0, r = 0; e < g.edge_count(); ++e) {
        if (e == edge_idx) continue;
        for (int c = 0; c < ef.cols; ++c) ef(r, c) = g.edge_features(e, c);
        ++r;
    }
    out.edge_features = std::move(ef);
    return out;
}

}  // namespace detail

/// Deterministic occlusion scoring: each edge in the target's receptive field
/// is scored by how much deleting it moves the target's prediction; edges at
/// or above `threshold` of the top score survive, and the structure is the
/// weakly-connected component around the target. The target is renumbered to
/// the highest local index.
inline Structure influence_structure(const Gnn& m, const Graph& g, int target, double threshold = 0.8) {
    if (threshold <= 0.0 || threshold > 1.0)
        throw ValidationError("influence_structure: threshold must be in (0, 1]");
    if (target < 0 || target >= g.node_count)
        throw ValidationError("influence_structure: target out of range");
    int hops = static_cast<int>(m.layers.size());
    EgoGraph ego = ego_graph(g, target, hops);
    std::vector<int> slice = detail::objective_union_slice(m);

    Mat base_out = gnn_forward(m, ego.graph);
    Vec base(slice.size());
    for (size_t i = 0; i < slice.size(); ++i) base[i] = base_out(ego.center, slice[i]);

    int ne = ego.graph.edge_count();
    Vec score(ne, 0.0);
    double max_score = 0.0;
    for (int e = 0; e < ne; ++e) {
        Graph occluded = detail::without_edge(ego.graph, e);
        Mat out = gnn_forward(m, occluded);
        double s = 0.0;
        for (size_t i = 0; i < slice.size(); ++i) s += std::fabs(out(ego.center, slice[i]) - base[i]);
        score[e] = s;
        max_score = std::max(max_score, s);
    }

    std::vector<int> kept;
    if (max_score > 1e-12)
        for (int e = 0; e < ne; ++e)
            if (score[e] / max_score >= threshold) kept.push_back(e);

    // weakly-connected component of the target over kept edges
    std::vector<int> comp(ego.graph.node_count, 0);
    comp[ego.center] = 1;
    bool grew = true;
    while (grew) {
        grew = false;
        for (int e : kept) {
            const Edge& ed = ego.graph.edges[e];
            if (comp[ed.src] != comp[ed.dst]) {
                comp[ed.src] = comp[ed.dst] = 1;
                grew = true;
            }
        }
    }

    std::vector<int> local(ego.graph.node_count, -1);
    int next = 0;
    for (int v = 0; v < ego.graph.node_count; ++v)
        if (comp[v] && v != ego.center) local[v] = next++;
    local[ego.center] = next;  // target gets the highest index

    Structure s;
    s.node_count = next + 1;
    s.target = next;
    for (int e : kept) {
        const Edge& ed = ego.graph.edges[e];
        if (comp[ed.src] && comp[ed.dst]) s.edges.push_back({local[ed.src], local[ed.dst], ed.etype});
    }
    std::sort(s.edges.begin(), s.edges.end());
    s.edges.erase(std::unique(s.edges.begin(), s.edges.end()), s.edges.end());
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Frequent mining
// ---------------------------------------------------------------------------

namespace detail {

/// Canonical key of a labeled pattern: the minimum serialized edge list over
/// all node permutations (patterns stay small, so brute force is exact).
/// The target flag acts as a node label and must be preserved.
inline std::string canonical_code(const Structure& s) {
    int n = s.node_count;
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::string best;
    std::sort(perm.begin(), perm.end());
    do {
        std::vector<Edge> mapped;
        mapped.reserve(s.edges.size());
        for (const Edge& e : s.edges) mapped.push_back({perm[e.src], perm[e.dst], e.etype});
        std::sort(mapped.begin(), mapped.end());
        std::string code = std::to_string(n) + "|" + std::to_string(perm[s.target]) + "|";
        for (const Edge& e : mapped)
            code += std::to_string(e.src) + "," + std::to_string(e.dst) + "," + std::to_string(e.etype) + ";";
        if (best.empty() || code < best) best = code;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

/// Renumber into the library convention: target has the highest index, the
/// rest keep their canonical relative order.
inline Structure canonical_structure(const Structure& s) {
    int n = s.node_count;
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::string best;
    std::vector<int> best_perm;
    std::sort(perm.begin(), perm.end());
    do {
        std::vector<Edge> mapped;
        for (const Edge& e : s.edges) mapped.push_back({perm[e.src], perm[e.dst], e.etype});
        std::sort(mapped.begin(), mapped.end());
        std::string code = std::to_string(perm[s.target]) + "|";
        for (const Edge& e : mapped)
            code += std::to_string(e.src) + "," + std::to_string(e.dst) + "," + std::to_string(e.etype) + ";";
        if (best.empty() || code < best) {
            best = code;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    // remap so the target lands on index n-1
    std::vector<int> relabel(n);
    int next = 0;
    for (int canon = 0; canon < n; ++canon) {
        int orig = -1;
        for (int i = 0; i < n; ++i)
            if (best_perm[i] == canon) { orig = i; break; }
        if (orig == s.target) continue;
        relabel[orig] = next++;
    }
    relabel[s.target] = n - 1;

    Structure out;
    out.node_count = n;
    out.target = n - 1;
    for (const Edge& e : s.edges) out.edges.push_back({relabel[e.src], relabel[e.dst], e.etype});
    std::sort(out.edges.begin(), out.edges.end());
    return out;
}

/// Embeddings of a pattern into a transaction structure, target onto target.
inline std::vector<Match> pattern_embeddings(const Structure& txn, const Structure& pat) {
    Graph view;
    view.node_count = txn.node_count;
    view.edges = txn.edges;
    view.node_features = Mat(txn.node_count, 0);
    view.edge_features = Mat(static_cast<int>(txn.edges.size()), 0);
    MatchSet ms = enumerate_subiso_matches(view, pat, 100000);
    std::vector<Match> out;
    for (Match& m : ms.matches)
        if (m.map[pat.target] == txn.target) out.push_back(std::move(m));
    return out;
}

}  // namespace detail

struct MinedStructure {
    Structure structure;
    long support = 0;
};

/// Frequent target-containing patterns over a multiset of influence
/// structures. Support is transaction-based (how many inputs contain the
/// pattern), which keeps it anti-monotone; patterns grow one edge at a time
/// from the single target node, apriori-style.
inline std::vector<MinedStructure> mine_frequent(const std::vector<Structure>& structures,
                                                 double min_support, int max_nodes, int top_k) {
    if (structures.empty()) throw ValidationError("mine_frequent: empty input");
    if (min_support <= 0.0 || min_support > 1.0)
        throw ValidationError("mine_frequent: min_support must be in (0, 1]");
    long n_txn = static_cast<long>(structures.size());
    double needed = min_support * static_cast<double>(n_txn);

    struct Candidate {
        Structure pattern;
        long support = 0;
    };
    std::map<std::string, Candidate> accepted;

    Structure seed;
    seed.node_count = 1;
    seed.target = 0;
    accepted[detail::canonical_code(seed)] = {seed, n_txn};

    std::vector<Structure> frontier{seed};
    while (!frontier.empty()) {
        // one growth level: extend every embedding of every frontier pattern
        // by a single adjacent transaction edge
        std::map<std::string, Candidate> grown;
        std::map<std::string, std::set<long>> txn_hits;
        for (long ti = 0; ti < n_txn; ++ti) {
            const Structure& txn = structures[ti];
            for (const Structure& pat : frontier) {
                for (const Match& emb : detail::pattern_embeddings(txn, pat)) {
                    std::vector<int> inv(txn.node_count, -1);
                    for (int i = 0; i < pat.node_count; ++i) inv[emb.map[i]] = i;
                    for (const Edge& e : txn.edges) {
                        bool src_in = inv[e.src] >= 0, dst_in = inv[e.dst] >= 0;
                        if (!src_in && !dst_in) continue;
                        Structure ext = pat;
                        int ls = src_in ? inv[e.src] : ext.node_count++;
                        int ld = dst_in ? inv[e.dst] : ext.node_count++;
                        if (ext.node_count > max_nodes) continue;
                        Edge ne{ls, ld, e.etype};
                        if (std::binary_search(ext.edges.begin(), ext.edges.end(), ne)) continue;
                        ext.edges.push_back(ne);
                        std::sort(ext.edges.begin(), ext.edges.end());
                        std::string key = detail::canonical_code(ext);
                        grown.try_emplace(key, Candidate{ext, 0});
                        txn_hits[key].insert(ti);
                    }
                }
            }
        }
        frontier.clear();
        for (auto& [key, cand] : grown) {
            cand.support = static_cast<long>(txn_hits[key].size());
            if (static_cast<double>(cand.support) >= needed && !accepted.count(key)) {
                accepted[key] = cand;
                frontier.push_back(cand.pattern);
            }
        }
    }

    std::vector<std::pair<std::string, Candidate>> ranked(accepted.begin(), accepted.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second.support != b.second.support) return a.second.support > b.second.support;
        if (a.second.pattern.node_count != b.second.pattern.node_count)
            return a.second.pattern.node_count < b.second.pattern.node_count;
        return a.first < b.first;
    });
    std::vector<MinedStructure> out;
    for (const auto& [key, cand] : ranked) {
        if (static_cast<int>(out.size()) == top_k) break;
        out.push_back({detail::canonical_structure(cand.pattern), cand.support});
    }
    return out;
}

}  // namespace gnnprop
