#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "gnnprop/fnn.hpp"
#include "gnnprop/graph.hpp"
#include "gnnprop/rng.hpp"

namespace gnnprop {

enum class Agg { Sum, Mean, Max };

inline std::string to_string(Agg a) {
    switch (a) {
        case Agg::Sum: return "sum";
        case Agg::Mean: return "mean";
        default: return "max";
    }
}

/// One message-passing layer. Messages are computed per edge type, aggregated
/// per type, and the per-type results are concatenated in etype order before
/// the update net sees them. With self_loop set, a synthetic etype-0 edge
/// i -> i with zero edge features joins the aggregation.
struct GnnLayer {
    std::vector<Fnn> msg;  // per etype: concat(x_src, x_dst, e_feat) -> message
    Agg agg = Agg::Max;
    Fnn upd;  // concat(x_self, aggregated) -> new node features
    bool self_loop = false;

    int msg_dim() const { return msg.empty() ? 0 : msg[0].output_dim; }
    int n_etypes() const { return static_cast<int>(msg.size()); }
};

struct Objective {
    int lo = 0;
    int hi = 0;  // half-open slice of final node features
    TaskKind kind = TaskKind::Classification;
};

struct Gnn {
    std::vector<GnnLayer> layers;
    int node_dim = 0;
    int edge_dim = 0;
    std::map<std::string, Objective> objectives;

    int final_dim() const { return layers.empty() ? node_dim : layers.back().upd.output_dim; }

    void validate() const {
        int cur = node_dim;
        for (size_t li = 0; li < layers.size(); ++li) {
            const GnnLayer& l = layers[li];
            const std::string where = "gnn layer " + std::to_string(li);
            if (l.msg.empty()) throw ValidationError(where + ": no message nets");
            int md = l.msg[0].output_dim;
            for (const Fnn& f : l.msg) {
                f.validate();
                if (f.input_dim != 2 * cur + edge_dim)
                    throw ValidationError(where + ": msg input dim mismatch");
                if (f.output_dim != md) throw ValidationError(where + ": msg output dims differ");
            }
            l.upd.validate();
            if (l.upd.input_dim != cur + md * l.n_etypes())
                throw ValidationError(where + ": upd input dim mismatch");
            cur = l.upd.output_dim;
        }
        for (const auto& [name, obj] : objectives) {
            if (obj.lo < 0 || obj.hi > cur || obj.lo >= obj.hi)
                throw ValidationError("objective '" + name + "' slice out of range");
        }
    }
};

inline Vec aggregate(Agg agg, const std::vector<Vec>& msgs, int dim) {
    if (msgs.empty()) {
        // Empty neighborhood: sum/mean give zero, max gives the sentinel.
        return Vec(dim, agg == Agg::Max ? kEmptyMaxSentinel : 0.0);
    }
    Vec out(dim, agg == Agg::Max ? -std::numeric_limits<double>::infinity() : 0.0);
    for (const Vec& m : msgs)
        for (int i = 0; i < dim; ++i) {
            if (agg == Agg::Max) out[i] = std::max(out[i], m[i]);
            else out[i] += m[i];
        }
    if (agg == Agg::Mean)
        for (int i = 0; i < dim; ++i) out[i] /= static_cast<double>(msgs.size());
    return out;
}

/// Forward pass; returns the final per-node feature matrix.
inline Mat gnn_forward(const Gnn& m, const Graph& g) {
    if (g.node_features.cols != m.node_dim || g.edge_features.cols != m.edge_dim)
        throw ValidationError("gnn_forward: feature dims do not match model");
    Mat x = g.node_features;
    std::vector<std::vector<int>> incoming = g.incoming_by_node();
    Vec zero_edge(m.edge_dim, 0.0);

    for (const GnnLayer& layer : m.layers) {
        int md = layer.msg_dim();
        Mat next(g.node_count, layer.upd.output_dim);
        for (int i = 0; i < g.node_count; ++i) {
            Vec agg_all;
            agg_all.reserve(static_cast<size_t>(md) * layer.n_etypes());
            for (int t = 0; t < layer.n_etypes(); ++t) {
                std::vector<Vec> msgs;
                for (int e : incoming[i]) {
                    if (g.edges[e].etype != t) continue;
                    int j = g.edges[e].src;
                    Vec in;
                    in.reserve(2 * x.cols + m.edge_dim);
                    for (int c = 0; c < x.cols; ++c) in.push_back(x(j, c));
                    for (int c = 0; c < x.cols; ++c) in.push_back(x(i, c));
                    for (int c = 0; c < m.edge_dim; ++c) in.push_back(g.edge_features(e, c));
                    msgs.push_back(fnn_eval(layer.msg[t], in));
                }
                if (layer.self_loop && t == 0) {
                    Vec in;
                    in.reserve(2 * x.cols + m.edge_dim);
                    for (int c = 0; c < x.cols; ++c) in.push_back(x(i, c));
                    for (int c = 0; c < x.cols; ++c) in.push_back(x(i, c));
                    for (int c = 0; c < m.edge_dim; ++c) in.push_back(zero_edge[c]);
                    msgs.push_back(fnn_eval(layer.msg[t], in));
                }
                Vec agg = aggregate(layer.agg, msgs, md);
                agg_all.insert(agg_all.end(), agg.begin(), agg.end());
            }
            Vec in;
            in.reserve(x.cols + agg_all.size());
            for (int c = 0; c < x.cols; ++c) in.push_back(x(i, c));
            in.insert(in.end(), agg_all.begin(), agg_all.end());
            Vec out = fnn_eval(layer.upd, in);
            for (int c = 0; c < next.cols; ++c) next(i, c) = out[c];
        }
        x = std::move(next);
    }
    return x;
}

/// Predicted class per node for a classification objective (argmax over the
/// slice, ties to the lowest index).
inline std::vector<int> predict_classes(const Gnn& m, const Mat& final_feats, const Objective& obj) {
    std::vector<int> out(final_feats.rows);
    for (int i = 0; i < final_feats.rows; ++i) {
        Vec row = final_feats.row(i);
        out[i] = argmax_lowest(row, obj.lo, obj.hi);
    }
    return out;
}

/// Multiplicative weight noise on every affine entry; deterministic in seed.
inline Gnn perturb_gnn(const Gnn& m, double rel_noise, uint64_t seed) {
    if (rel_noise < 0) throw ValidationError("perturb_gnn: negative noise");
    Gnn out = m;
    Rng rng = Rng(seed).split("perturb");
    auto jitter = [&](Fnn& f) {
        for (Layer& l : f.layers) {
            if (auto* a = std::get_if<AffineLayer>(&l)) {
                for (double& w : a->A.data) w *= 1.0 + rng.uniform(-rel_noise, rel_noise);
                for (double& w : a->b) w *= 1.0 + rng.uniform(-rel_noise, rel_noise);
            }
        }
    };
    for (GnnLayer& l : out.layers) {
        for (Fnn& f : l.msg) jitter(f);
        jitter(l.upd);
    }
    return out;
}

}  // namespace gnnprop
