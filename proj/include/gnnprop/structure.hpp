#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "gnnprop/graph.hpp"

namespace gnnprop {

/// A small target-rooted pattern graph. `target` is the node whose prediction
/// the pattern explains; matching treats it as a distinguished label.
struct Structure {
    int node_count = 0;
    std::vector<Edge> edges;  // sorted, same comparator as Graph
    int target = 0;

    friend auto operator<=>(const Structure&, const Structure&) = default;

    void validate() const {
        if (node_count <= 0) throw ValidationError("structure: empty");
        if (target < 0 || target >= node_count) throw ValidationError("structure: bad target");
        for (size_t i = 0; i < edges.size(); ++i) {
            const Edge& e = edges[i];
            if (e.src < 0 || e.src >= node_count || e.dst < 0 || e.dst >= node_count)
                throw ValidationError("structure: edge index out of range");
            if (i > 0 && !(edges[i - 1] < e)) throw ValidationError("structure: edges not sorted");
        }
        // weak connectivity to the target
        std::vector<int> seen(node_count, 0);
        seen[target] = 1;
        bool grew = true;
        while (grew) {
            grew = false;
            for (const Edge& e : edges) {
                if (seen[e.src] != seen[e.dst]) {
                    seen[e.src] = seen[e.dst] = 1;
                    grew = true;
                }
            }
        }
        for (int v = 0; v < node_count; ++v)
            if (!seen[v]) throw ValidationError("structure: node not connected to target");
    }
};

/// Injective embedding of a structure into a data graph.
struct Match {
    std::vector<int> map;  // structure node -> graph node

    friend auto operator<=>(const Match&, const Match&) = default;
};

struct MatchSet {
    std::vector<Match> matches;
    bool truncated = false;
};

/// View of a data graph as a structure (for exact isomorphism checks the
/// graph side needs a designated prediction node too).
inline Structure structure_view(const Graph& g, int target) {
    Structure s;
    s.node_count = g.node_count;
    s.edges = g.edges;
    s.target = target;
    return s;
}

namespace detail {

struct DegreeSig {
    std::vector<std::pair<int, int>> in_out;  // per etype (indegree, outdegree)
};

inline std::vector<DegreeSig> degree_signatures(int node_count, const std::vector<Edge>& edges,
                                                int n_etypes) {
    std::vector<DegreeSig> sig(node_count);
    for (auto& s : sig) s.in_out.assign(n_etypes, {0, 0});
    for (const Edge& e : edges) {
        sig[e.dst].in_out[e.etype].first++;
        sig[e.src].in_out[e.etype].second++;
    }
    return sig;
}

inline int max_etype(const std::vector<Edge>& edges) {
    int m = -1;
    for (const Edge& e : edges) m = std::max(m, e.etype);
    return m + 1;
}

}  // namespace detail

/// Exact isomorphism between two structures: a bijection preserving edges,
/// non-edges, edge types, and mapping target to target.
inline std::optional<Match> is_isomorphic(const Structure& a, const Structure& b) {
    if (a.node_count != b.node_count || a.edges.size() != b.edges.size()) return std::nullopt;
    int n_et = std::max(detail::max_etype(a.edges), detail::max_etype(b.edges));
    auto siga = detail::degree_signatures(a.node_count, a.edges, n_et);
    auto sigb = detail::degree_signatures(b.node_count, b.edges, n_et);

    int n = b.node_count;
    std::vector<int> map(n, -1), used(n, 0);
    // Since |E_a| == |E_b| and all b-edges must map onto a-edges injectively,
    // checking edge preservation one way implies non-edge preservation.
    auto edge_in_a = [&](int s, int d, int t) {
        return std::binary_search(a.edges.begin(), a.edges.end(), Edge{s, d, t});
    };
    std::vector<std::vector<Edge>> touching(n);  // b-edges with both ends <= node, keyed by later end
    for (const Edge& e : b.edges) touching[std::max(e.src, e.dst)].push_back(e);

    auto backtrack = [&](auto&& self, int v) -> bool {
        if (v == n) return true;
        for (int cand = 0; cand < n; ++cand) {
            if (used[cand]) continue;
            if ((v == b.target) != (cand == a.target)) continue;
            if (sigb[v].in_out != siga[cand].in_out) continue;
            map[v] = cand;
            used[cand] = 1;
            bool ok = true;
            for (const Edge& e : touching[v])
                if (!edge_in_a(map[e.src], map[e.dst], e.etype)) { ok = false; break; }
            if (ok && self(self, v + 1)) return true;
            map[v] = -1;
            used[cand] = 0;
        }
        return false;
    };
    if (!backtrack(backtrack, 0)) return std::nullopt;
    return Match{map};
}

inline std::optional<Match> is_isomorphic(const Graph& g, int g_target, const Structure& s) {
    return is_isomorphic(structure_view(g, g_target), s);
}

/// All injective embeddings of s into g preserving edges and edge types
/// (non-induced). Results come out in lexicographic order of the map arrays;
/// enumeration stops at cap with the truncated flag set.
inline MatchSet enumerate_subiso_matches(const Graph& g, const Structure& s, int cap = 100000) {
    if (cap < 1) throw ValidationError("enumerate_subiso_matches: cap must be >= 1");
    MatchSet out;
    if (s.node_count > g.node_count) return out;
    int n_et = std::max(detail::max_etype(s.edges), detail::max_etype(g.edges));
    auto gsig = detail::degree_signatures(g.node_count, g.edges, n_et);
    auto ssig = detail::degree_signatures(s.node_count, s.edges, n_et);

    // structure edges whose endpoints are both assigned once node v is placed
    std::vector<std::vector<Edge>> touching(s.node_count);
    for (const Edge& e : s.edges) touching[std::max(e.src, e.dst)].push_back(e);

    std::vector<int> map(s.node_count, -1);
    std::vector<uint8_t> used(g.node_count, 0);
    auto degree_ok = [&](int v, int cand) {
        for (int t = 0; t < n_et; ++t) {
            if (gsig[cand].in_out[t].first < ssig[v].in_out[t].first) return false;
            if (gsig[cand].in_out[t].second < ssig[v].in_out[t].second) return false;
        }
        return true;
    };
    auto backtrack = [&](auto&& self, int v) -> bool {  // returns false when cap hit
        if (v == s.node_count) {
            if (static_cast<int>(out.matches.size()) == cap) {
                out.truncated = true;
                return false;
            }
            out.matches.push_back(Match{map});
            return true;
        }
        for (int cand = 0; cand < g.node_count; ++cand) {
            if (used[cand] || !degree_ok(v, cand)) continue;
            map[v] = cand;
            used[cand] = 1;
            bool ok = true;
            for (const Edge& e : touching[v])
                if (g.edge_index(map[e.src], map[e.dst], e.etype) < 0) { ok = false; break; }
            bool keep_going = !ok || self(self, v + 1);
            map[v] = -1;
            used[cand] = 0;
            if (!keep_going) return false;
        }
        return true;
    };
    backtrack(backtrack, 0);
    return out;
}

}  // namespace gnnprop
