#pragma once

#include <set>

#include "gnnprop/models.hpp"
#include "gnnprop/rng.hpp"
#include "gnnprop/structure.hpp"

namespace gnnprop {

namespace detail {

/// Random connected undirected topology (spanning tree plus extra pairs),
/// emitted as symmetric directed etype-0 edges.
inline std::vector<Edge> connected_symmetric_edges(Rng& rng, int n) {
    std::set<std::pair<int, int>> pairs;
    for (int v = 1; v < n; ++v) pairs.insert({rng.uniform_int(0, v - 1), v});
    double extra_p = n > 2 ? 1.2 / (n - 1) : 0.0;
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v)
            if (rng.bernoulli(extra_p)) pairs.insert({u, v});
    std::vector<Edge> edges;
    for (auto [u, v] : pairs) {
        edges.push_back({u, v, 0});
        edges.push_back({v, u, 0});
    }
    std::sort(edges.begin(), edges.end());
    return edges;
}

inline Vec bfs_step(const Graph& g, const Vec& s) {
    Vec next = s;
    for (const Edge& e : g.edges) next[e.dst] = std::max(next[e.dst], s[e.src]);
    return next;
}

}  // namespace detail

inline Dataset gen_bfs_dataset(uint64_t seed, int n_graphs, int nodes_lo, int nodes_hi) {
    if (n_graphs < 1 || nodes_lo < 1 || nodes_hi < nodes_lo)
        throw ValidationError("gen_bfs_dataset: degenerate range");
    Dataset d;
    d.node_dim = 1;
    d.edge_dim = 0;
    d.objectives = {{"state", TaskKind::Classification}};
    Rng root_rng = Rng(seed).split("bfs");
    for (int gi = 0; gi < n_graphs; ++gi) {
        Rng rng = root_rng.split(static_cast<uint64_t>(gi));
        int n = rng.uniform_int(nodes_lo, nodes_hi);
        Graph g;
        g.node_count = n;
        g.edges = detail::connected_symmetric_edges(rng, n);
        g.edge_features = Mat(g.edge_count(), 0);
        Vec s(n, 0.0);
        s[rng.uniform_int(0, n - 1)] = 1.0;
        int steps = rng.uniform_int(0, n);
        for (int k = 0; k < steps; ++k) s = detail::bfs_step(g, s);
        g.node_features = Mat(n, 1);
        for (int i = 0; i < n; ++i) g.node_features(i, 0) = s[i];
        g.node_labels["state"] = detail::bfs_step(g, s);
        d.graphs.push_back(std::move(g));
    }
    d.validate();
    return d;
}

inline Dataset gen_bf_dataset(uint64_t seed, int n_graphs, int nodes_lo, int nodes_hi) {
    if (n_graphs < 1 || nodes_lo < 1 || nodes_hi < nodes_lo)
        throw ValidationError("gen_bf_dataset: degenerate range");
    Dataset d;
    d.node_dim = 2;  // (s, d)
    d.edge_dim = 1;  // w
    d.objectives = {{"dist", TaskKind::Regression}, {"state", TaskKind::Classification}};
    Rng root_rng = Rng(seed).split("bf");
    for (int gi = 0; gi < n_graphs; ++gi) {
        Rng rng = root_rng.split(static_cast<uint64_t>(gi));
        int n = rng.uniform_int(nodes_lo, nodes_hi);
        Graph g;
        g.node_count = n;
        g.edges = detail::connected_symmetric_edges(rng, n);
        g.edge_features = Mat(g.edge_count(), 1);
        std::map<std::pair<int, int>, double> w;
        for (int e = 0; e < g.edge_count(); ++e) {
            int u = std::min(g.edges[e].src, g.edges[e].dst);
            int v = std::max(g.edges[e].src, g.edges[e].dst);
            auto it = w.find({u, v});
            if (it == w.end()) it = w.emplace(std::pair{u, v}, rng.uniform(0.5, 2.0)).first;
            g.edge_features(e, 0) = it->second;
        }
        double dmax = 2.0 * n + 1.0;
        Vec s(n, 0.0), dist(n, dmax);
        s[0] = 1.0;
        dist[0] = 0.0;
        auto step = [&](Vec& sv, Vec& dv) {
            Vec ns = sv, nd = dv;
            for (int e = 0; e < g.edge_count(); ++e) {
                const Edge& ed = g.edges[e];
                ns[ed.dst] = std::max(ns[ed.dst], sv[ed.src]);
                nd[ed.dst] = std::min(nd[ed.dst], dv[ed.src] + g.edge_features(e, 0));
            }
            sv = std::move(ns);
            dv = std::move(nd);
        };
        int steps = rng.uniform_int(0, n);
        for (int k = 0; k < steps; ++k) step(s, dist);
        g.node_features = Mat(n, 2);
        for (int i = 0; i < n; ++i) {
            g.node_features(i, 0) = s[i];
            g.node_features(i, 1) = dist[i];
        }
        Vec ns = s, nd = dist;
        step(ns, nd);
        g.node_labels["state"] = ns;
        g.node_labels["dist"] = nd;
        d.graphs.push_back(std::move(g));
    }
    d.validate();
    return d;
}

// ---------------------------------------------------------------------------
// DFS traces
// ---------------------------------------------------------------------------

namespace detail {

struct DfsWorld {
    int n = 0;
    std::vector<std::vector<int>> fwd;  // i -> nodes i can descend to
    std::vector<std::vector<int>> bwd;  // i -> nodes that can descend to i
    Vec priority;
};

/// One step of the textbook next-state rule: non-targets keep their state;
/// the target goes under-visiting while it still has an unvisited forward
/// neighbor, and visited otherwise.
inline std::vector<int> dfs_next_state(const DfsWorld& w, const std::vector<int>& state, int target) {
    std::vector<int> out = state;
    if (target < 0) return out;
    bool has_unvisited = false;
    for (int j : w.fwd[target])
        if (state[j] == 0) { has_unvisited = true; break; }
    out[target] = has_unvisited ? 1 : 2;
    return out;
}

/// Next visiting target: descend to the highest-priority unvisited forward
/// neighbor; once none remain, backtrack to the highest-priority
/// under-visiting backward neighbor; -1 when the traversal is done.
inline int dfs_next_target(const DfsWorld& w, const std::vector<int>& state, int target,
                           int target_next_state) {
    if (target < 0) return -1;
    int best = -1;
    if (target_next_state == 1) {
        for (int j : w.fwd[target])
            if (state[j] == 0 && (best < 0 || w.priority[j] > w.priority[best])) best = j;
    } else {
        for (int j : w.bwd[target])
            if (state[j] == 1 && j != target && (best < 0 || w.priority[j] > w.priority[best])) best = j;
    }
    return best;
}

}  // namespace detail

/// DFS step datasets. Each trace becomes one graph per step; data edges are
/// stored so that messages flow toward the node that consults them: an
/// original u -> v adjacency yields (v, u, etype 0) ("v is a forward neighbor
/// of u") and its reciprocal (u, v, etype 1).
inline Dataset gen_dfs_dataset(uint64_t seed, int n_traces, int nodes_lo, int nodes_hi) {
    if (n_traces < 1 || nodes_lo < 2 || nodes_hi < nodes_lo || nodes_hi > 20)
        throw ValidationError("gen_dfs_dataset: degenerate range (nodes must be in [2, 20])");
    Dataset d;
    d.node_dim = 5;  // (s0, s1, s2, t, p)
    d.edge_dim = 0;
    d.objectives = {{"next_state", TaskKind::Classification},
                    {"next_target", TaskKind::Classification}};
    Rng root_rng = Rng(seed).split("dfs");
    for (int ti = 0; ti < n_traces; ++ti) {
        Rng rng = root_rng.split(static_cast<uint64_t>(ti));
        int n = rng.uniform_int(nodes_lo, nodes_hi);
        detail::DfsWorld w;
        w.n = n;
        w.fwd.resize(n);
        w.bwd.resize(n);
        std::set<std::pair<int, int>> adj;
        for (int v = 1; v < n; ++v) adj.insert({rng.uniform_int(0, v - 1), v});
        for (int u = 0; u < n; ++u)
            for (int v = 0; v < n; ++v)
                if (u != v && rng.bernoulli(1.0 / n)) adj.insert({u, v});
        std::vector<Edge> edges;
        for (auto [u, v] : adj) {
            w.fwd[u].push_back(v);
            w.bwd[v].push_back(u);
            edges.push_back({v, u, 0});
            edges.push_back({u, v, 1});
        }
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

        // evenly spaced priorities keep gaps above 1/C for the reference net
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);
        w.priority = Vec(n);
        for (int i = 0; i < n; ++i) w.priority[i] = static_cast<double>(perm[i] + 1) / (n + 1);

        std::vector<int> state(n, 0);
        int target = 0;
        while (true) {
            std::vector<int> next_state = detail::dfs_next_state(w, state, target);
            int next_target =
                detail::dfs_next_target(w, state, target, target < 0 ? -1 : next_state[target]);
            Graph g;
            g.node_count = n;
            g.edges = edges;
            g.edge_features = Mat(g.edge_count(), 0);
            g.node_features = Mat(n, 5);
            for (int i = 0; i < n; ++i) {
                g.node_features(i, state[i]) = 1.0;
                g.node_features(i, 3) = i == target ? 1.0 : 0.0;
                g.node_features(i, 4) = w.priority[i];
            }
            Vec ns(n), nt(n, 0.0);
            for (int i = 0; i < n; ++i) ns[i] = next_state[i];
            if (next_target >= 0) nt[next_target] = 1.0;
            g.node_labels["next_state"] = ns;
            g.node_labels["next_target"] = nt;
            d.graphs.push_back(std::move(g));
            if (target < 0) break;
            state = next_state;
            target = next_target;
        }
    }
    d.validate();
    return d;
}

// ---------------------------------------------------------------------------
// Backdoor benchmark
// ---------------------------------------------------------------------------

struct TriggerSpec {
    Structure trigger_structure;  // target = the victim node
    Vec trigger_feature_value{2.0};
    int target_class = 1;
    double poison_rate = 0.05;

    static TriggerSpec defaults() {
        TriggerSpec s;
        s.trigger_structure.node_count = 2;
        s.trigger_structure.edges = {{0, 1, 0}};
        s.trigger_structure.target = 1;
        return s;
    }

    void validate() const {
        trigger_structure.validate();
        if (poison_rate <= 0.0 || poison_rate > 0.2)
            throw ValidationError("trigger spec: poison_rate must be in (0, 0.2]");
        if (trigger_feature_value.empty()) throw ValidationError("trigger spec: empty feature value");
    }
};

struct BackdoorBenchmark {
    Gnn model;
    Dataset train;
    Dataset test_clean;
    Dataset test_triggered;
};

namespace detail {

inline Vec benign_labels(const Graph& g) {
    int n = g.node_count;
    Vec sum(n, 0.0), cnt(n, 0.0), out(n, 0.0);
    for (int i = 0; i < n; ++i) {
        sum[i] = g.node_features(i, 0);
        cnt[i] = 1.0;  // self loop
    }
    for (const Edge& e : g.edges) {
        sum[e.dst] += g.node_features(e.src, 0);
        cnt[e.dst] += 1.0;
    }
    for (int i = 0; i < n; ++i) out[i] = sum[i] / cnt[i] > 0.0 ? 1.0 : 0.0;
    return out;
}

/// Attach one instance of the trigger structure with `victim` playing the
/// structure's target role; new nodes carry the trigger feature value.
inline void attach_trigger(Graph& g, const TriggerSpec& spec, int victim) {
    const Structure& s = spec.trigger_structure;
    std::vector<int> map(s.node_count, -1);
    map[s.target] = victim;
    int next = g.node_count;
    Mat feats(g.node_count + s.node_count - 1, g.node_features.cols);
    for (int i = 0; i < g.node_count; ++i)
        for (int c = 0; c < feats.cols; ++c) feats(i, c) = g.node_features(i, c);
    for (int v = 0; v < s.node_count; ++v) {
        if (v == s.target) continue;
        map[v] = next++;
        for (int c = 0; c < feats.cols; ++c)
            feats(map[v], c) = spec.trigger_feature_value[c % spec.trigger_feature_value.size()];
    }
    g.node_count = next;
    g.node_features = std::move(feats);
    for (const Edge& e : s.edges) g.edges.push_back({map[e.src], map[e.dst], e.etype});
    Mat ef(static_cast<int>(g.edges.size()), g.edge_features.cols);
    for (int r = 0; r < g.edge_features.rows; ++r)
        for (int c = 0; c < ef.cols; ++c) ef(r, c) = g.edge_features(r, c);
    g.edge_features = std::move(ef);
    sort_edges(g.edges, g.edge_features);
    for (auto& [name, labels] : g.node_labels) labels.resize(g.node_count, 0.0);
}

inline Graph gen_backdoor_graph(Rng& rng, int nodes_lo, int nodes_hi) {
    int n = rng.uniform_int(nodes_lo, nodes_hi);
    Graph g;
    g.node_count = n;
    g.edges = connected_symmetric_edges(rng, n);
    g.edge_features = Mat(g.edge_count(), 0);
    g.node_features = Mat(n, 1);
    for (int i = 0; i < n; ++i) g.node_features(i, 0) = rng.uniform(-1.0, 0.8);
    return g;
}

}  // namespace detail

/// Hand-constructed backdoored classifier plus train / clean-test /
/// triggered-test splits. The trigger feature value sits outside the clean
/// feature range so the poisoned behavior never fires on clean data.
inline BackdoorBenchmark build_backdoored_classifier(const TriggerSpec& spec, uint64_t seed) {
    spec.validate();
    BackdoorBenchmark b;
    b.model = build_backdoor_gnn(spec.trigger_feature_value[0], spec.target_class);

    auto make_split = [&](const std::string& label, int n_graphs) {
        Dataset d;
        d.node_dim = 1;
        d.edge_dim = 0;
        d.objectives = {{"class", TaskKind::Classification}};
        Rng rng = Rng(seed).split("backdoor").split(label);
        for (int gi = 0; gi < n_graphs; ++gi) {
            Rng grng = rng.split(static_cast<uint64_t>(gi));
            Graph g = detail::gen_backdoor_graph(grng, 20, 40);
            g.node_labels["class"] = detail::benign_labels(g);
            d.graphs.push_back(std::move(g));
        }
        return d;
    };

    b.train = make_split("train", 40);
    b.test_clean = make_split("test_clean", 20);
    b.test_triggered = make_split("test_triggered", 20);

    // Poison: flip labels and attach the trigger on a poison_rate fraction of
    // training nodes.
    long total_nodes = 0;
    for (const Graph& g : b.train.graphs) total_nodes += g.node_count;
    long n_poison = std::lround(spec.poison_rate * static_cast<double>(total_nodes));
    std::vector<std::pair<int, int>> all_nodes;
    for (size_t gi = 0; gi < b.train.graphs.size(); ++gi)
        for (int v = 0; v < b.train.graphs[gi].node_count; ++v)
            all_nodes.push_back({static_cast<int>(gi), v});
    Rng prng = Rng(seed).split("backdoor").split("poison");
    prng.shuffle(all_nodes);
    all_nodes.resize(static_cast<size_t>(n_poison));
    std::sort(all_nodes.begin(), all_nodes.end());
    for (auto [gi, v] : all_nodes) {
        Graph& g = b.train.graphs[gi];
        detail::attach_trigger(g, spec, v);
        g.node_labels["class"][v] = spec.target_class;
    }
    for (Graph& g : b.train.graphs) {
        Vec mask(g.node_count, 0.0);
        for (int i = 0; i < g.node_count; ++i)
            mask[i] = g.node_features(i, 0) == spec.trigger_feature_value[0] ? 0.0 : 1.0;
        g.node_labels["eval_mask"] = mask;
    }

    // Triggered test: every original node gets its own trigger instance.
    for (Graph& g : b.test_triggered.graphs) {
        int n_orig = g.node_count;
        for (int v = 0; v < n_orig; ++v) detail::attach_trigger(g, spec, v);
        Vec mask(g.node_count, 0.0);
        for (int v = 0; v < n_orig; ++v) mask[v] = 1.0;
        g.node_labels["eval_mask"] = mask;
    }
    b.train.validate();
    b.test_clean.validate();
    b.test_triggered.validate();
    return b;
}

}  // namespace gnnprop
