#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gnnprop/core.hpp"

namespace gnnprop {

struct Edge {
    int src = 0;
    int dst = 0;
    int etype = 0;

    friend auto operator<=>(const Edge&, const Edge&) = default;
};

enum class TaskKind { Classification, Regression };

inline std::string to_string(TaskKind k) {
    return k == TaskKind::Classification ? "classification" : "regression";
}

/// Directed attributed multigraph with typed edges. Immutable by convention
/// once validated: nothing in the library mutates a Graph in place.
struct Graph {
    int node_count = 0;
    Mat node_features;                       // node_count x D_V
    std::vector<Edge> edges;                 // strictly sorted by (src, dst, etype)
    Mat edge_features;                       // edge_count x D_E
    std::map<std::string, Vec> node_labels;  // objective name -> per-node labels

    int edge_count() const { return static_cast<int>(edges.size()); }

    /// Index of an edge in the sorted edge list, or -1.
    int edge_index(int src, int dst, int etype) const {
        Edge key{src, dst, etype};
        auto it = std::lower_bound(edges.begin(), edges.end(), key);
        if (it != edges.end() && *it == key) return static_cast<int>(it - edges.begin());
        return -1;
    }

    std::vector<std::vector<int>> incoming_by_node() const {
        std::vector<std::vector<int>> in(node_count);
        for (int e = 0; e < edge_count(); ++e) in[edges[e].dst].push_back(e);
        return in;
    }

    void validate(const std::string& where = "graph") const {
        if (node_features.rows != node_count)
            throw ValidationError(where + ": node feature rows != node_count");
        for (size_t i = 0; i < edges.size(); ++i) {
            const Edge& e = edges[i];
            if (e.src < 0 || e.src >= node_count || e.dst < 0 || e.dst >= node_count)
                throw ValidationError(where + ": edge " + std::to_string(i) + " index out of range");
            if (e.etype < 0) throw ValidationError(where + ": negative edge type");
            if (i > 0 && !(edges[i - 1] < e))
                throw ValidationError(where + ": edges not strictly sorted at " + std::to_string(i));
        }
        if (edge_features.rows != edge_count())
            throw ValidationError(where + ": edge feature rows != edge count");
        for (const auto& [name, labels] : node_labels)
            if (static_cast<int>(labels.size()) != node_count)
                throw ValidationError(where + ": label '" + name + "' length != node_count");
    }
};

inline void sort_edges(std::vector<Edge>& edges, Mat& edge_features) {
    std::vector<int> order(edges.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return edges[a] < edges[b]; });
    std::vector<Edge> es(edges.size());
    Mat ef(static_cast<int>(edges.size()), edge_features.cols);
    for (size_t i = 0; i < order.size(); ++i) {
        es[i] = edges[order[i]];
        for (int c = 0; c < edge_features.cols; ++c) ef(static_cast<int>(i), c) = edge_features(order[i], c);
    }
    edges = std::move(es);
    edge_features = std::move(ef);
}

struct ObjectiveDecl {
    std::string name;
    TaskKind kind = TaskKind::Classification;
};

struct Dataset {
    std::vector<Graph> graphs;
    int node_dim = 0;
    int edge_dim = 0;
    std::vector<ObjectiveDecl> objectives;

    void validate() const {
        for (size_t g = 0; g < graphs.size(); ++g) {
            const std::string where = "graph " + std::to_string(g);
            graphs[g].validate(where);
            if (graphs[g].node_features.cols != node_dim)
                throw ValidationError(where + ": node feature dim mismatch");
            if (graphs[g].edge_features.cols != edge_dim)
                throw ValidationError(where + ": edge feature dim mismatch");
        }
        for (const auto& obj : objectives) {
            size_t labeled = 0;
            for (const auto& g : graphs) labeled += g.node_labels.count(obj.name);
            if (labeled != 0 && labeled != graphs.size())
                throw ValidationError("objective '" + obj.name + "' labeled in some graphs but not all");
        }
    }
};

/// L-hop neighborhood of a center node, following edges against their
/// direction: messages flow src -> dst, so a node's prediction depends on its
/// incoming closure.
struct EgoGraph {
    Graph graph;
    int center = 0;                // local index
    std::vector<int> origin_map;  // local node -> original node
};

inline EgoGraph ego_graph(const Graph& g, int center, int hops) {
    if (center < 0 || center >= g.node_count)
        throw ValidationError("ego_graph: center out of range");
    std::vector<int> dist(g.node_count, -1);
    dist[center] = 0;
    std::vector<int> frontier{center};
    std::vector<std::vector<int>> in = g.incoming_by_node();
    for (int h = 0; h < hops && !frontier.empty(); ++h) {
        std::vector<int> next;
        for (int v : frontier)
            for (int e : in[v]) {
                int u = g.edges[e].src;
                if (dist[u] < 0) {
                    dist[u] = h + 1;
                    next.push_back(u);
                }
            }
        frontier = std::move(next);
    }

    EgoGraph out;
    std::vector<int> local(g.node_count, -1);
    for (int v = 0; v < g.node_count; ++v)
        if (dist[v] >= 0) {
            local[v] = static_cast<int>(out.origin_map.size());
            out.origin_map.push_back(v);
        }
    out.center = local[center];

    Graph& eg = out.graph;
    eg.node_count = static_cast<int>(out.origin_map.size());
    eg.node_features = Mat(eg.node_count, g.node_features.cols);
    for (int v = 0; v < eg.node_count; ++v)
        for (int c = 0; c < g.node_features.cols; ++c)
            eg.node_features(v, c) = g.node_features(out.origin_map[v], c);

    std::vector<int> kept;
    for (int e = 0; e < g.edge_count(); ++e)
        if (local[g.edges[e].src] >= 0 && local[g.edges[e].dst] >= 0) kept.push_back(e);
    eg.edge_features = Mat(static_cast<int>(kept.size()), g.edge_features.cols);
    for (size_t i = 0; i < kept.size(); ++i) {
        const Edge& e = g.edges[kept[i]];
        eg.edges.push_back({local[e.src], local[e.dst], e.etype});
        for (int c = 0; c < g.edge_features.cols; ++c)
            eg.edge_features(static_cast<int>(i), c) = g.edge_features(kept[i], c);
    }
    sort_edges(eg.edges, eg.edge_features);
    for (const auto& [name, labels] : g.node_labels) {
        Vec sliced(eg.node_count);
        for (int v = 0; v < eg.node_count; ++v) sliced[v] = labels[out.origin_map[v]];
        eg.node_labels[name] = std::move(sliced);
    }
    return out;
}

}  // namespace gnnprop
