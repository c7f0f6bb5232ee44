#pragma once

#include <optional>

#include "gnnprop/gnn.hpp"
#include "gnnprop/rng.hpp"
#include "gnnprop/structure.hpp"

namespace gnnprop {

/// Flat input layout for a fixed structure: node feature slices in node
/// order, then edge feature slices in edge order.
struct FeatureLayout {
    int n_nodes = 0;
    int node_dim = 0;
    int edge_dim = 0;
    std::vector<Edge> edges;
    int input_dim = 0;

    FeatureLayout() = default;
    FeatureLayout(const Structure& s, int nd, int ed)
        : n_nodes(s.node_count), node_dim(nd), edge_dim(ed), edges(s.edges) {
        input_dim = n_nodes * node_dim + static_cast<int>(edges.size()) * edge_dim;
    }

    int node_offset(int i) const { return i * node_dim; }
    int edge_offset(int e) const { return n_nodes * node_dim + e * edge_dim; }

    /// Assemble the flat input vector for one match of the structure.
    Vec gather(const Graph& g, const Match& m) const {
        Vec x(input_dim, 0.0);
        for (int i = 0; i < n_nodes; ++i)
            for (int c = 0; c < node_dim; ++c) x[node_offset(i) + c] = g.node_features(m.map[i], c);
        for (size_t e = 0; e < edges.size(); ++e) {
            const Edge& se = edges[e];
            int gi = g.edge_index(m.map[se.src], m.map[se.dst], se.etype);
            if (gi < 0) throw ValidationError("layout gather: match does not cover structure edge");
            for (int c = 0; c < edge_dim; ++c)
                x[edge_offset(static_cast<int>(e)) + c] = g.edge_features(gi, c);
        }
        return x;
    }
};

struct LoweredModel {
    Fnn fnn;
    FeatureLayout layout;
    int target_lo = 0;  // slice of the target node's final features in fnn output
    int target_hi = 0;
};

namespace detail {

/// Incrementally built feed-forward net; consecutive affine layers fuse.
class NetBuilder {
public:
    explicit NetBuilder(int input_dim) : input_dim_(input_dim), width_(input_dim) {}

    int width() const { return width_; }

    void append_affine(Mat A, Vec b) {
        if (A.cols != width_) throw ValidationError("net builder: affine width mismatch");
        if (!layers_.empty()) {
            if (auto* prev = std::get_if<AffineLayer>(&layers_.back())) {
                Vec nb = matvec(A, prev->b);
                for (size_t i = 0; i < nb.size(); ++i) nb[i] += b[i];
                prev->A = matmul(A, prev->A);
                prev->b = std::move(nb);
                width_ = prev->A.rows;
                return;
            }
        }
        width_ = A.rows;
        layers_.push_back(AffineLayer{std::move(A), std::move(b)});
    }

    void append_relu() {
        layers_.push_back(ReluLayer{width_});
    }

    void append_maxpool(std::vector<std::vector<int>> partitions) {
        MaxPoolLayer m;
        m.partitions = std::move(partitions);
        m.input_width = width_;
        width_ = m.output_width();
        layers_.push_back(std::move(m));
    }

    /// Run sub-nets side by side on selected slices of the current vector and
    /// carry `passthrough` lanes unchanged. Sub-nets may only contain affine
    /// and relu layers; lanes that must survive a relu stage travel as
    /// (relu(y), relu(-y)) pairs and are recombined afterwards.
    void parallel_apply(const std::vector<const Fnn*>& nets,
                        const std::vector<std::vector<int>>& wiring,
                        const std::vector<int>& passthrough) {
        int K = static_cast<int>(nets.size());
        std::vector<std::vector<AffineLayer>> st(K);
        int L = 0;
        for (int k = 0; k < K; ++k) {
            st[k] = to_stages(*nets[k], wiring[k]);
            L = std::max(L, static_cast<int>(st[k].size()) - 1);
        }
        int P = static_cast<int>(passthrough.size());

        if (L == 0) {
            int out = P;
            for (int k = 0; k < K; ++k) out += st[k][0].A.rows;
            Mat A(out, width_);
            Vec b(out, 0.0);
            int r = 0;
            for (int k = 0; k < K; ++k) r = copy_block(A, b, r, st[k][0]);
            for (int p : passthrough) A(r++, p) = 1.0;
            append_affine(std::move(A), std::move(b));
            return;
        }

        // lane width contributed by net k after the stage-s affine
        auto lanes_after = [&](int k, int s) {
            int lk = static_cast<int>(st[k].size()) - 1;
            int ok = st[k].back().A.rows;
            if (s < lk) return st[k][s].A.rows;
            if (s == lk) return s == L ? ok : 2 * ok;
            return 2 * ok;
        };

        std::vector<int> in_off(K + 1, 0);  // offsets into the previous stage's lanes
        for (int s = 0; s <= L; ++s) {
            int out_rows = 0;
            for (int k = 0; k < K; ++k) out_rows += lanes_after(k, s);
            out_rows += (s == L) ? P : 2 * P;
            Mat A(out_rows, width_);
            Vec b(out_rows, 0.0);
            int r = 0;
            std::vector<int> new_off(K + 1, 0);
            for (int k = 0; k < K; ++k) {
                new_off[k] = r;
                int lk = static_cast<int>(st[k].size()) - 1;
                int ok = st[k].back().A.rows;
                if (s < lk || (s == lk && s == L)) {
                    r = place_block(A, b, r, st[k][s], s == 0 ? -1 : in_off[k]);
                } else if (s == lk) {  // final stage early: double the output
                    r = place_block(A, b, r, st[k][s], s == 0 ? -1 : in_off[k]);
                    r = place_block(A, b, r, negated(st[k][s]), s == 0 ? -1 : in_off[k]);
                } else if (s < L) {  // carry doubled lanes
                    for (int i = 0; i < 2 * ok; ++i) A(r + i, in_off[k] + i) = 1.0;
                    r += 2 * ok;
                } else {  // s == L: recombine
                    for (int i = 0; i < ok; ++i) {
                        A(r + i, in_off[k] + i) = 1.0;
                        A(r + i, in_off[k] + ok + i) = -1.0;
                    }
                    r += ok;
                }
            }
            new_off[K] = r;
            if (s == 0) {
                for (int p : passthrough) {
                    A(r, p) = 1.0;
                    A(r + P, p) = -1.0;
                    ++r;
                }
                r += P;
            } else if (s < L) {
                for (int i = 0; i < 2 * P; ++i) A(r + i, in_off[K] + i) = 1.0;
                r += 2 * P;
            } else {
                for (int i = 0; i < P; ++i) {
                    A(r + i, in_off[K] + i) = 1.0;
                    A(r + i, in_off[K] + P + i) = -1.0;
                }
                r += P;
            }
            append_affine(std::move(A), std::move(b));
            if (s < L) append_relu();
            in_off = std::move(new_off);
        }
    }

    Fnn finish() {
        Fnn f;
        f.input_dim = input_dim_;
        f.output_dim = width_;
        f.layers = std::move(layers_);
        f.validate();
        return f;
    }

private:
    // Collapse a sub-net into affine stages separated by relus; stage 0 reads
    // the full current vector through the wiring selector (-1 wires a zero).
    std::vector<AffineLayer> to_stages(const Fnn& f, const std::vector<int>& wires) const {
        if (static_cast<int>(wires.size()) != f.input_dim)
            throw ValidationError("net builder: wiring width mismatch");
        Mat S(f.input_dim, width_);
        for (int i = 0; i < f.input_dim; ++i)
            if (wires[i] >= 0) S(i, wires[i]) = 1.0;
        std::vector<AffineLayer> stages;
        AffineLayer cur{std::move(S), Vec(f.input_dim, 0.0)};
        for (const Layer& l : f.layers) {
            if (auto* a = std::get_if<AffineLayer>(&l)) {
                Vec nb = matvec(a->A, cur.b);
                for (size_t i = 0; i < nb.size(); ++i) nb[i] += a->b[i];
                cur = AffineLayer{matmul(a->A, cur.A), std::move(nb)};
            } else if (std::holds_alternative<ReluLayer>(l)) {
                int w = cur.A.rows;
                stages.push_back(std::move(cur));
                Mat I(w, w);
                for (int i = 0; i < w; ++i) I(i, i) = 1.0;
                cur = AffineLayer{std::move(I), Vec(w, 0.0)};
            } else {
                throw ValidationError("lowering: max pooling inside message/update nets is not supported");
            }
        }
        stages.push_back(std::move(cur));
        return stages;
    }

    static AffineLayer negated(const AffineLayer& a) {
        AffineLayer n = a;
        for (double& x : n.A.data) x = -x;
        for (double& x : n.b) x = -x;
        return n;
    }

    // Stage block acting on the whole input row space (stage 0).
    int copy_block(Mat& A, Vec& b, int r, const AffineLayer& blk) const {
        for (int i = 0; i < blk.A.rows; ++i) {
            for (int c = 0; c < blk.A.cols; ++c) A(r + i, c) = blk.A(i, c);
            b[r + i] = blk.b[i];
        }
        return r + blk.A.rows;
    }

    // Stage block; when off >= 0 the block's inputs live at a lane offset.
    int place_block(Mat& A, Vec& b, int r, const AffineLayer& blk, int off) const {
        for (int i = 0; i < blk.A.rows; ++i) {
            for (int c = 0; c < blk.A.cols; ++c) A(r + i, (off < 0 ? 0 : off) + c) = blk.A(i, c);
            b[r + i] = blk.b[i];
        }
        return r + blk.A.rows;
    }

    int input_dim_;
    int width_;
    std::vector<Layer> layers_;
};

struct MsgSlot {
    int src = 0, dst = 0, etype = 0;
    bool synthetic = false;
    int edge_idx = -1;  // index into layout.edges, -1 for synthetic self loops
};

inline std::vector<MsgSlot> message_slots(const FeatureLayout& layout, int n_etypes, bool self_loop) {
    std::vector<MsgSlot> slots;
    for (size_t e = 0; e < layout.edges.size(); ++e) {
        const Edge& ed = layout.edges[e];
        if (ed.etype >= n_etypes) continue;  // gnn_forward ignores unknown etypes too
        slots.push_back({ed.src, ed.dst, ed.etype, false, static_cast<int>(e)});
    }
    if (self_loop)
        for (int i = 0; i < layout.n_nodes; ++i) slots.push_back({i, i, 0, true, -1});
    std::sort(slots.begin(), slots.end(), [](const MsgSlot& a, const MsgSlot& b) {
        return std::tie(a.src, a.dst, a.etype, a.synthetic) < std::tie(b.src, b.dst, b.etype, b.synthetic);
    });
    return slots;
}

}  // namespace detail

/// Reduce a GNN on a fixed structure to an equivalent feed-forward net over
/// the flat feature layout. Message nets are instantiated per edge,
/// aggregations become linear combinations (sum/mean) or max pooling, and
/// layers compose; a synthetic zero-feature self loop is materialized per
/// node when the layer declares one.
inline LoweredModel lower(const Gnn& m, const Structure& s) {
    s.validate();
    m.validate();
    LoweredModel lm;
    lm.layout = FeatureLayout(s, m.node_dim, m.edge_dim);
    detail::NetBuilder nb(lm.layout.input_dim);

    int n = s.node_count;
    int d = m.node_dim;
    // Current vector: [node features (n x d), edge features]; edge lanes stay
    // at the tail through every layer.
    int edge_lane_base = n * d;
    int edge_lanes = lm.layout.input_dim - n * d;

    for (const GnnLayer& layer : m.layers) {
        int md = layer.msg_dim();
        int T = layer.n_etypes();
        auto slots = detail::message_slots(lm.layout, T, layer.self_loop);
        int K = static_cast<int>(slots.size());

        // ---- messages ----------------------------------------------------
        {
            std::vector<const Fnn*> nets;
            std::vector<std::vector<int>> wiring;
            for (const auto& slot : slots) {
                nets.push_back(&layer.msg[slot.etype]);
                std::vector<int> wires;
                wires.reserve(2 * d + m.edge_dim);
                for (int c = 0; c < d; ++c) wires.push_back(slot.src * d + c);
                for (int c = 0; c < d; ++c) wires.push_back(slot.dst * d + c);
                for (int c = 0; c < m.edge_dim; ++c)
                    wires.push_back(slot.synthetic ? -1 : edge_lane_base + slot.edge_idx * m.edge_dim + c);
                wiring.push_back(std::move(wires));
            }
            std::vector<int> pass;
            for (int i = 0; i < n * d; ++i) pass.push_back(i);
            for (int i = 0; i < edge_lanes; ++i) pass.push_back(edge_lane_base + i);
            nb.parallel_apply(nets, wiring, pass);
        }
        // vector now: [msg_0 .. msg_{K-1} (md each), node lanes, edge lanes]
        int node_base = K * md;
        int edge_base = node_base + n * d;

        std::vector<std::vector<std::vector<int>>> group(n);  // node -> etype -> slot ids
        for (int v = 0; v < n; ++v) group[v].resize(T);
        for (int k = 0; k < K; ++k) group[slots[k].dst][slots[k].etype].push_back(k);

        // ---- aggregation --------------------------------------------------
        int agg_width = n * T * md;
        if (layer.agg == Agg::Max) {
            // Arrange pooled members first, then node/edge lanes; empty
            // groups get a sentinel constant wire.
            std::vector<std::vector<int>> partitions;
            std::vector<std::pair<int, double>> rows;  // (source lane or -1, bias)
            for (int v = 0; v < n; ++v)
                for (int t = 0; t < T; ++t)
                    for (int c = 0; c < md; ++c) {
                        std::vector<int> part;
                        if (group[v][t].empty()) {
                            part.push_back(static_cast<int>(rows.size()));
                            rows.push_back({-1, kEmptyMaxSentinel});
                        } else {
                            for (int k : group[v][t]) {
                                part.push_back(static_cast<int>(rows.size()));
                                rows.push_back({k * md + c, 0.0});
                            }
                        }
                        partitions.push_back(std::move(part));
                    }
            int stacked = static_cast<int>(rows.size());
            Mat A(stacked + n * d + edge_lanes, nb.width());
            Vec b(A.rows, 0.0);
            for (int r = 0; r < stacked; ++r) {
                if (rows[r].first >= 0) A(r, rows[r].first) = 1.0;
                b[r] = rows[r].second;
            }
            for (int i = 0; i < n * d + edge_lanes; ++i) A(stacked + i, node_base + i) = 1.0;
            nb.append_affine(std::move(A), std::move(b));
            nb.append_maxpool(std::move(partitions));
        } else {
            Mat A(agg_width + n * d + edge_lanes, nb.width());
            Vec b(A.rows, 0.0);
            int r = 0;
            for (int v = 0; v < n; ++v)
                for (int t = 0; t < T; ++t)
                    for (int c = 0; c < md; ++c) {
                        const auto& members = group[v][t];
                        double coef = layer.agg == Agg::Mean && !members.empty()
                                          ? 1.0 / static_cast<double>(members.size())
                                          : 1.0;
                        for (int k : members) A(r, k * md + c) = coef;
                        ++r;
                    }
            for (int i = 0; i < n * d + edge_lanes; ++i) A(r + i, node_base + i) = 1.0;
            nb.append_affine(std::move(A), std::move(b));
        }
        // vector now: [agg (n*T*md node-major), node lanes, edge lanes]
        node_base = agg_width;
        edge_base = node_base + n * d;

        // ---- update -------------------------------------------------------
        {
            std::vector<const Fnn*> nets;
            std::vector<std::vector<int>> wiring;
            for (int v = 0; v < n; ++v) {
                nets.push_back(&layer.upd);
                std::vector<int> wires;
                for (int c = 0; c < d; ++c) wires.push_back(node_base + v * d + c);
                for (int i = 0; i < T * md; ++i) wires.push_back(v * T * md + i);
                wiring.push_back(std::move(wires));
            }
            std::vector<int> pass;
            for (int i = 0; i < edge_lanes; ++i) pass.push_back(edge_base + i);
            nb.parallel_apply(nets, wiring, pass);
        }
        d = layer.upd.output_dim;
        edge_lane_base = n * d;
    }

    // Drop the edge lanes.
    {
        Mat A(n * d, nb.width());
        for (int i = 0; i < n * d; ++i) A(i, i) = 1.0;
        nb.append_affine(std::move(A), Vec(n * d, 0.0));
    }
    lm.fnn = nb.finish();
    lm.target_lo = s.target * d;
    lm.target_hi = (s.target + 1) * d;
    return lm;
}

/// The structure reinterpreted as a data graph (for oracle comparisons).
inline Graph structure_as_graph(const Structure& s, const Mat& node_feats, const Mat& edge_feats) {
    Graph g;
    g.node_count = s.node_count;
    g.edges = s.edges;
    g.node_features = node_feats;
    g.edge_features = edge_feats;
    g.validate("structure_as_graph");
    return g;
}

struct EquivalenceReport {
    int trials = 0;
    double max_abs_dev = 0.0;
    std::optional<Vec> failing_input;

    bool ok(double tol) const { return max_abs_dev < tol; }
};

/// Randomized embodiment of the reduction theorem: on random feature fills
/// the lowered net must reproduce the GNN restricted to the structure.
inline EquivalenceReport equivalence_check(const Gnn& m, const Structure& s, const LoweredModel& lm,
                                           int trials, double tol, uint64_t seed = 12345) {
    if (trials < 1) throw ValidationError("equivalence_check: trials must be >= 1");
    EquivalenceReport rep;
    rep.trials = trials;
    Rng rng = Rng(seed).split("equivalence");
    for (int t = 0; t < trials; ++t) {
        Mat nf(s.node_count, m.node_dim);
        for (double& x : nf.data) x = rng.uniform(-2.0, 2.0);
        Mat ef(static_cast<int>(s.edges.size()), m.edge_dim);
        for (double& x : ef.data) x = rng.uniform(-2.0, 2.0);
        Graph g = structure_as_graph(s, nf, ef);
        Mat ref = gnn_forward(m, g);

        Vec x(lm.layout.input_dim);
        for (int i = 0; i < s.node_count; ++i)
            for (int c = 0; c < m.node_dim; ++c) x[lm.layout.node_offset(i) + c] = nf(i, c);
        for (size_t e = 0; e < s.edges.size(); ++e)
            for (int c = 0; c < m.edge_dim; ++c)
                x[lm.layout.edge_offset(static_cast<int>(e)) + c] = ef(static_cast<int>(e), c);
        Vec got = fnn_eval(lm.fnn, x);

        double dev = 0.0;
        for (int i = 0; i < ref.rows; ++i)
            for (int c = 0; c < ref.cols; ++c)
                dev = std::max(dev, std::fabs(ref(i, c) - got[static_cast<size_t>(i) * ref.cols + c]));
        if (dev > rep.max_abs_dev) {
            rep.max_abs_dev = dev;
            if (dev >= tol && !rep.failing_input) rep.failing_input = x;
        }
    }
    return rep;
}

}  // namespace gnnprop
