#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "gnnprop/rng.hpp"
#include "gnnprop/structure.hpp"

using namespace gnnprop;

namespace {

Graph graph_of(int n, std::vector<Edge> edges) {
    Graph g;
    g.node_count = n;
    std::sort(edges.begin(), edges.end());
    g.edges = std::move(edges);
    g.node_features = Mat(n, 0);
    g.edge_features = Mat(static_cast<int>(g.edges.size()), 0);
    return g;
}

Graph fig2_graph() {
    // 7 nodes; node 0 receives from 1, 2, 4; node 3 receives from 1
    return graph_of(7, {{1, 0, 0}, {2, 0, 0}, {4, 0, 0}, {1, 3, 0}});
}

/// Brute force: all injective maps, edge preservation checked directly.
std::vector<Match> brute_force_subiso(const Graph& g, const Structure& s) {
    std::vector<Match> out;
    std::vector<int> map(s.node_count, -1);
    std::vector<char> used(g.node_count, 0);
    auto rec = [&](auto&& self, int v) -> void {
        if (v == s.node_count) {
            for (const Edge& e : s.edges)
                if (g.edge_index(map[e.src], map[e.dst], e.etype) < 0) return;
            out.push_back(Match{map});
            return;
        }
        for (int cand = 0; cand < g.node_count; ++cand) {
            if (used[cand]) continue;
            map[v] = cand;
            used[cand] = 1;
            self(self, v + 1);
            used[cand] = 0;
        }
    };
    rec(rec, 0);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("single node structure is isomorphic to a 1-node graph", "[matching]") {
    Structure s;
    s.node_count = 1;
    s.target = 0;
    Graph g = graph_of(1, {});
    REQUIRE(is_isomorphic(g, 0, s).has_value());
}

TEST_CASE("two-node structure is not isomorphic to the 7-node graph", "[matching]") {
    Structure s;
    s.node_count = 2;
    s.edges = {{1, 0, 0}};
    s.target = 0;
    REQUIRE_FALSE(is_isomorphic(fig2_graph(), 0, s).has_value());
}

TEST_CASE("isomorphism respects edge types and target labels", "[matching]") {
    Structure a;
    a.node_count = 2;
    a.edges = {{0, 1, 0}};
    a.target = 1;
    Structure b = a;
    SECTION("identical structures match") { REQUIRE(is_isomorphic(a, b).has_value()); }
    SECTION("different edge type breaks it") {
        b.edges = {{0, 1, 1}};
        REQUIRE_FALSE(is_isomorphic(a, b).has_value());
    }
    SECTION("different target breaks it") {
        b.target = 0;
        b.edges = {{1, 0, 0}};
        // b is now edge into node 0 with target 0: same shape, so it matches
        REQUIRE(is_isomorphic(a, b).has_value());
        b.edges = {{0, 1, 0}};  // edge out of the target instead of into it
        REQUIRE_FALSE(is_isomorphic(a, b).has_value());
    }
}

TEST_CASE("subiso matches of the 2-node pattern cover both visited edges", "[matching]") {
    Structure s;
    s.node_count = 2;
    s.edges = {{0, 1, 0}};
    s.target = 1;
    MatchSet ms = enumerate_subiso_matches(fig2_graph(), s);
    // every directed edge of the graph is one instance
    REQUIRE(ms.matches.size() == 4);
    REQUIRE_FALSE(ms.truncated);
    std::set<std::pair<int, int>> found;
    for (const Match& m : ms.matches) found.insert({m.map[0], m.map[1]});
    REQUIRE(found == std::set<std::pair<int, int>>{{1, 0}, {2, 0}, {4, 0}, {1, 3}});
}

TEST_CASE("single node pattern matches every node", "[matching]") {
    Structure s;
    s.node_count = 1;
    s.target = 0;
    Graph g = fig2_graph();
    MatchSet ms = enumerate_subiso_matches(g, s);
    REQUIRE(ms.matches.size() == 7);
    for (int v = 0; v < 7; ++v) REQUIRE(ms.matches[v].map == std::vector<int>{v});
}

TEST_CASE("cap truncates and flags", "[matching]") {
    Structure s;
    s.node_count = 1;
    s.target = 0;
    MatchSet ms = enumerate_subiso_matches(fig2_graph(), s, 3);
    REQUIRE(ms.matches.size() == 3);
    REQUIRE(ms.truncated);
    REQUIRE_THROWS_AS(enumerate_subiso_matches(fig2_graph(), s, 0), ValidationError);
}

TEST_CASE("match enumeration equals brute force on random small graphs", "[matching][oracle]") {
    Rng rng(555);
    for (int trial = 0; trial < 200; ++trial) {
        Rng sub = rng.split(static_cast<uint64_t>(trial));
        int n = sub.uniform_int(2, 7);
        std::vector<Edge> edges;
        for (int u = 0; u < n; ++u)
            for (int v = 0; v < n; ++v)
                for (int t = 0; t < 2; ++t)
                    if (u != v && sub.bernoulli(0.25)) edges.push_back({u, v, t});
        Graph g = graph_of(n, std::move(edges));

        Structure s;
        s.node_count = sub.uniform_int(1, 3);
        s.target = s.node_count - 1;
        for (int i = 0; i + 1 < s.node_count; ++i)
            s.edges.push_back({i, sub.uniform_int(i + 1, s.node_count - 1), sub.uniform_int(0, 1)});
        std::sort(s.edges.begin(), s.edges.end());
        s.edges.erase(std::unique(s.edges.begin(), s.edges.end()), s.edges.end());
        try {
            s.validate();
        } catch (const ValidationError&) {
            continue;  // disconnected draw, skip
        }

        MatchSet ms = enumerate_subiso_matches(g, s);
        std::vector<Match> expect = brute_force_subiso(g, s);
        REQUIRE(ms.matches == expect);  // also checks lexicographic order

        // soundness: every returned match maps structure edges onto graph edges
        for (const Match& m : ms.matches) {
            std::set<int> distinct(m.map.begin(), m.map.end());
            REQUIRE(distinct.size() == m.map.size());
            for (const Edge& e : s.edges)
                REQUIRE(g.edge_index(m.map[e.src], m.map[e.dst], e.etype) >= 0);
        }

        // iso => subiso non-empty, on a shuffled copy of the structure itself
        if (!ms.matches.empty()) {
            Graph sg;
            sg.node_count = s.node_count;
            sg.edges = s.edges;
            sg.node_features = Mat(s.node_count, 0);
            sg.edge_features = Mat(static_cast<int>(s.edges.size()), 0);
            auto iso = is_isomorphic(sg, s.target, s);
            REQUIRE(iso.has_value());
            REQUIRE_FALSE(enumerate_subiso_matches(sg, s).matches.empty());
        }
    }
}

TEST_CASE("exact isomorphism agrees with brute-force permutation search", "[matching][oracle]") {
    Rng rng(777);
    for (int trial = 0; trial < 120; ++trial) {
        Rng sub = rng.split(static_cast<uint64_t>(trial));
        int n = sub.uniform_int(1, 5);
        auto random_structure = [&](Rng& r) {
            Structure s;
            s.node_count = n;
            s.target = r.uniform_int(0, n - 1);
            // spanning edges toward the target keep it connected
            for (int i = 0; i < n; ++i) {
                if (i == s.target) continue;
                s.edges.push_back({i, s.target, r.uniform_int(0, 1)});
            }
            for (int u = 0; u < n; ++u)
                for (int v = 0; v < n; ++v)
                    if (u != v && r.bernoulli(0.2)) s.edges.push_back({u, v, r.uniform_int(0, 1)});
            std::sort(s.edges.begin(), s.edges.end());
            s.edges.erase(std::unique(s.edges.begin(), s.edges.end()), s.edges.end());
            return s;
        };
        Structure a = random_structure(sub);
        // b: random relabeling of a half the time, fresh draw otherwise
        Structure b;
        if (sub.bernoulli(0.5)) {
            std::vector<int> perm(n);
            for (int i = 0; i < n; ++i) perm[i] = i;
            sub.shuffle(perm);
            b.node_count = n;
            b.target = perm[a.target];
            for (const Edge& e : a.edges) b.edges.push_back({perm[e.src], perm[e.dst], e.etype});
            std::sort(b.edges.begin(), b.edges.end());
        } else {
            b = random_structure(sub);
        }

        // oracle: factorial enumeration
        bool expect = false;
        if (a.node_count == b.node_count && a.edges.size() == b.edges.size()) {
            std::vector<int> perm(n);
            for (int i = 0; i < n; ++i) perm[i] = i;
            std::sort(perm.begin(), perm.end());
            do {
                if (perm[b.target] != a.target) continue;
                bool ok = true;
                for (const Edge& e : b.edges) {
                    Edge mapped{perm[e.src], perm[e.dst], e.etype};
                    if (!std::binary_search(a.edges.begin(), a.edges.end(), mapped)) {
                        ok = false;
                        break;
                    }
                }
                if (ok) {
                    expect = true;
                    break;
                }
            } while (std::next_permutation(perm.begin(), perm.end()));
        }
        auto got = is_isomorphic(a, b);
        REQUIRE(got.has_value() == expect);
        if (got) {
            // returned bijection really maps b-edges onto a-edges
            for (const Edge& e : b.edges) {
                Edge mapped{got->map[e.src], got->map[e.dst], e.etype};
                REQUIRE(std::binary_search(a.edges.begin(), a.edges.end(), mapped));
            }
        }
    }
}
