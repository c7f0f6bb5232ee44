#pragma once

#include <optional>
#include <set>

#include "gnnprop/dynamic.hpp"

namespace gnnprop {

struct BackdoorThresholds {
    double unnoticeable = 0.1;   // SPR_train upper bound
    double tau_s = 0.05;         // SPR_test / SPR_train stealthiness ratio
    double override_rate = 0.8;  // mean OR promotion bar
};

struct SupportStats {
    long sp_ip_train = 0, sp_struct_train = 0;
    long sp_ip_test = 0, sp_struct_test = 0;
    double spr_train = 0.0, spr_test = 0.0;
    bool unnoticeable = false;
    bool stealthy = false;
    bool spr_train_zero = false;
};

namespace detail {

/// Per-node support masks: does any match targeting this node satisfy the
/// property's full input condition, and does any match target it at all.
struct NodeSupportMasks {
    std::vector<std::vector<char>> ip;       // per graph, per node
    std::vector<std::vector<char>> structure;
};

inline NodeSupportMasks node_support(const DynProperty& p, const Gnn& m, const Dataset& d,
                                     int match_cap) {
    NodeSupportMasks masks;
    FeatureLayout layout(p.base.structure, m.node_dim, m.edge_dim);
    for (const Graph& g : d.graphs) {
        std::vector<char> ip(g.node_count, 0), st(g.node_count, 0);
        MatchSet ms = enumerate_subiso_matches(g, p.base.structure, match_cap);
        for (const Match& match : ms.matches) {
            int host = match.map[p.base.structure.target];
            st[host] = 1;
            if (ip[host]) continue;
            Vec x = layout.gather(g, match);
            if (!p.base.inps.satisfied_by(x)) continue;
            if (p.has_dyna()) {
                Vec agg = compute_agg_features(m, g, p.base.structure, match);
                bool ok = false;
                for (const LinearPredicate& conj : p.dyna)
                    if (conj.satisfied_by(agg)) { ok = true; break; }
                if (!ok) continue;
            }
            ip[host] = 1;
        }
        masks.ip.push_back(std::move(ip));
        masks.structure.push_back(std::move(st));
    }
    return masks;
}

inline long count_masks(const std::vector<std::vector<char>>& masks) {
    long n = 0;
    for (const auto& g : masks)
        for (char c : g) n += c;
    return n;
}

inline bool output_satisfied(const OutputCondition& out, const Objective& obj, const Vec& row) {
    if (out.kind == OutputCondition::ClassIs) return argmax_lowest(row, obj.lo, obj.hi) == out.cls;
    // AffineEq without the input vector cannot be decided from the row alone;
    // backdoor screening only compares class-valued conditions.
    return false;
}

}  // namespace detail

inline SupportStats support_stats(const DynProperty& p, const Dataset& train, const Dataset& test,
                                  const Gnn& m, const BackdoorThresholds& th = {},
                                  int match_cap = 100000) {
    SupportStats st;
    detail::NodeSupportMasks tr = detail::node_support(p, m, train, match_cap);
    detail::NodeSupportMasks te = detail::node_support(p, m, test, match_cap);
    st.sp_ip_train = detail::count_masks(tr.ip);
    st.sp_struct_train = detail::count_masks(tr.structure);
    st.sp_ip_test = detail::count_masks(te.ip);
    st.sp_struct_test = detail::count_masks(te.structure);
    st.spr_train = st.sp_struct_train > 0
                       ? static_cast<double>(st.sp_ip_train) / static_cast<double>(st.sp_struct_train)
                       : 0.0;
    st.spr_test = st.sp_struct_test > 0
                      ? static_cast<double>(st.sp_ip_test) / static_cast<double>(st.sp_struct_test)
                      : 0.0;
    st.unnoticeable = st.spr_train <= th.unnoticeable;
    if (st.spr_train <= 0.0) {
        st.spr_train_zero = true;
        st.stealthy = false;
    } else {
        st.stealthy = st.spr_test / st.spr_train < th.tau_s;
    }
    return st;
}

/// Among nodes matching both input conditions, the fraction whose actual
/// prediction follows the suspected property's output (and contradicts the
/// benign one when the two differ). Empty co-support leaves it undefined.
inline std::optional<double> overriding_rate(const DynProperty& likely, const DynProperty& benign,
                                             const Dataset& train, const Gnn& m,
                                             int match_cap = 100000) {
    if (likely.base.objective != benign.base.objective)
        throw ValidationError("overriding_rate: properties target different objectives");
    const Objective& obj = m.objectives.at(likely.base.objective);
    detail::NodeSupportMasks ml = detail::node_support(likely, m, train, match_cap);
    detail::NodeSupportMasks mb = detail::node_support(benign, m, train, match_cap);
    long denom = 0, numer = 0;
    for (size_t gi = 0; gi < train.graphs.size(); ++gi) {
        std::optional<Mat> out;
        for (int v = 0; v < train.graphs[gi].node_count; ++v) {
            if (!ml.ip[gi][v] || !mb.ip[gi][v]) continue;
            ++denom;
            if (!out) out = gnn_forward(m, train.graphs[gi]);
            Vec row = out->row(v);
            bool sat_l = detail::output_satisfied(likely.base.out, obj, row);
            bool same = likely.base.out == benign.base.out;
            bool sat_b = same ? sat_l : detail::output_satisfied(benign.base.out, obj, row);
            if (sat_l && (same || !sat_b)) ++numer;
        }
    }
    if (denom == 0) return std::nullopt;
    return static_cast<double>(numer) / static_cast<double>(denom);
}

struct BackdoorClassification {
    std::vector<size_t> backdoor;       // indices into the property list
    std::vector<size_t> benign;
    std::vector<size_t> undecided;      // likely-backdoor with no defined OR
    std::vector<SupportStats> stats;    // per property
};

inline BackdoorClassification classify_backdoor(const std::vector<DynProperty>& props,
                                                const Dataset& train, const Dataset& test,
                                                const Gnn& m, const BackdoorThresholds& th = {},
                                                int match_cap = 100000) {
    if (props.empty()) throw ValidationError("classify_backdoor: no properties");
    BackdoorClassification out;
    std::vector<char> likely(props.size(), 0);
    std::vector<detail::NodeSupportMasks> train_masks;
    for (size_t i = 0; i < props.size(); ++i) {
        detail::NodeSupportMasks tr = detail::node_support(props[i], m, train, match_cap);
        detail::NodeSupportMasks te = detail::node_support(props[i], m, test, match_cap);
        SupportStats st;
        st.sp_ip_train = detail::count_masks(tr.ip);
        st.sp_struct_train = detail::count_masks(tr.structure);
        st.sp_ip_test = detail::count_masks(te.ip);
        st.sp_struct_test = detail::count_masks(te.structure);
        st.spr_train = st.sp_struct_train > 0 ? static_cast<double>(st.sp_ip_train) /
                                                    static_cast<double>(st.sp_struct_train)
                                              : 0.0;
        st.spr_test = st.sp_struct_test > 0 ? static_cast<double>(st.sp_ip_test) /
                                                  static_cast<double>(st.sp_struct_test)
                                            : 0.0;
        st.unnoticeable = st.spr_train <= th.unnoticeable;
        if (st.spr_train <= 0.0) st.spr_train_zero = true;
        else st.stealthy = st.spr_test / st.spr_train < th.tau_s;
        likely[i] = st.unnoticeable && st.stealthy ? 1 : 0;
        if (!likely[i]) out.benign.push_back(i);
        out.stats.push_back(st);
        train_masks.push_back(std::move(tr));
    }

    // predictions are shared across all overriding-rate pairs
    std::vector<Mat> forwards;
    forwards.reserve(train.graphs.size());
    for (const Graph& g : train.graphs) forwards.push_back(gnn_forward(m, g));

    auto rate_between = [&](size_t li, size_t bi) -> std::optional<double> {
        const Objective& obj = m.objectives.at(props[li].base.objective);
        long denom = 0, numer = 0;
        for (size_t gi = 0; gi < train.graphs.size(); ++gi)
            for (int v = 0; v < train.graphs[gi].node_count; ++v) {
                if (!train_masks[li].ip[gi][v] || !train_masks[bi].ip[gi][v]) continue;
                ++denom;
                Vec row = forwards[gi].row(v);
                bool sat_l = detail::output_satisfied(props[li].base.out, obj, row);
                bool same = props[li].base.out == props[bi].base.out;
                bool sat_b = same ? sat_l : detail::output_satisfied(props[bi].base.out, obj, row);
                if (sat_l && (same || !sat_b)) ++numer;
            }
        if (denom == 0) return std::nullopt;
        return static_cast<double>(numer) / static_cast<double>(denom);
    };

    for (size_t i = 0; i < props.size(); ++i) {
        if (!likely[i]) continue;
        double sum = 0.0;
        long defined = 0;
        for (size_t b : out.benign) {
            if (props[b].base.objective != props[i].base.objective) continue;
            std::optional<double> rate = rate_between(i, b);
            if (rate) {
                sum += *rate;
                ++defined;
            }
        }
        if (defined == 0) out.undecided.push_back(i);
        else if (sum / static_cast<double>(defined) >= th.override_rate) out.backdoor.push_back(i);
        else out.benign.push_back(i);
    }
    std::sort(out.benign.begin(), out.benign.end());
    return out;
}

// ---------------------------------------------------------------------------
// Pruning defense
// ---------------------------------------------------------------------------

struct DefenseReport {
    double acc = 0.0, asr = 0.0;
    double d_acc = 0.0, d_asr = 0.0;
    long pruned_edge_count = 0;
};

namespace detail {

struct PrunedGraph {
    Graph graph;
    long removed = 0;
    std::vector<char> matched_nodes;  // hosts of pruned matches (for label isolation)
};

inline PrunedGraph prune_graph(const Graph& g, const std::vector<const DynProperty*>& props,
                               const Gnn& m, int match_cap) {
    std::set<int> doomed;
    PrunedGraph out;
    out.matched_nodes.assign(g.node_count, 0);
    for (const DynProperty* p : props) {
        FeatureLayout layout(p->base.structure, m.node_dim, m.edge_dim);
        MatchSet ms = enumerate_subiso_matches(g, p->base.structure, match_cap);
        for (const Match& match : ms.matches) {
            Vec x = layout.gather(g, match);
            if (!p->base.inps.satisfied_by(x)) continue;
            if (p->has_dyna()) {
                Vec agg = compute_agg_features(m, g, p->base.structure, match);
                bool ok = false;
                for (const LinearPredicate& conj : p->dyna)
                    if (conj.satisfied_by(agg)) { ok = true; break; }
                if (!ok) continue;
            }
            for (const Edge& e : p->base.structure.edges)
                doomed.insert(g.edge_index(match.map[e.src], match.map[e.dst], e.etype));
            out.matched_nodes[match.map[p->base.structure.target]] = 1;
        }
    }
    out.graph = g;
    if (!doomed.empty()) {
        std::vector<Edge> kept;
        std::vector<int> kept_idx;
        for (int e = 0; e < g.edge_count(); ++e) {
            if (doomed.count(e)) continue;
            kept.push_back(g.edges[e]);
            kept_idx.push_back(e);
        }
        Mat ef(static_cast<int>(kept.size()), g.edge_features.cols);
        for (size_t i = 0; i < kept_idx.size(); ++i)
            for (int c = 0; c < ef.cols; ++c) ef(static_cast<int>(i), c) = g.edge_features(kept_idx[i], c);
        out.graph.edges = std::move(kept);
        out.graph.edge_features = std::move(ef);
        out.removed = static_cast<long>(doomed.size());
    }
    return out;
}

struct EvalCounts {
    long correct = 0, target_hits = 0, total = 0;
};

inline EvalCounts evaluate_graph(const Gnn& m, const Graph& g, const std::string& objective,
                                 int target_class, const std::vector<char>* extra_mask) {
    const Objective& obj = m.objectives.at(objective);
    Mat out = gnn_forward(m, g);
    const Vec* labels = nullptr;
    if (auto it = g.node_labels.find(objective); it != g.node_labels.end()) labels = &it->second;
    const Vec* mask = nullptr;
    if (auto it = g.node_labels.find("eval_mask"); it != g.node_labels.end()) mask = &it->second;
    EvalCounts counts;
    for (int v = 0; v < g.node_count; ++v) {
        if (mask && (*mask)[v] == 0.0) continue;
        if (extra_mask && (*extra_mask)[v]) continue;
        Vec row = out.row(v);
        int cls = argmax_lowest(row, obj.lo, obj.hi);
        ++counts.total;
        if (labels && cls == static_cast<int>((*labels)[v])) ++counts.correct;
        if (cls == target_class) ++counts.target_hits;
    }
    return counts;
}

}  // namespace detail

struct PruneOptions {
    bool label_isolation = false;  // Prune+LD: drop matched nodes from evaluation
    int match_cap = 100000;
};

/// Remove the matched edges of every backdoor property and measure clean
/// accuracy / attack success before and after on the same model.
inline DefenseReport prune_and_evaluate(const Gnn& m, const std::vector<DynProperty>& backdoor_props,
                                        const Dataset& clean_test, const Dataset& triggered_test,
                                        const std::string& objective, int target_class,
                                        const PruneOptions& opts = {}) {
    std::vector<const DynProperty*> props;
    for (const DynProperty& p : backdoor_props) props.push_back(&p);

    DefenseReport rep;
    auto accumulate = [&](const Dataset& d, bool prune, bool want_acc, long* pruned) {
        long num = 0, den = 0;
        for (const Graph& g : d.graphs) {
            detail::EvalCounts counts;
            if (prune) {
                detail::PrunedGraph pg = detail::prune_graph(g, props, m, opts.match_cap);
                if (pruned) *pruned += pg.removed;
                counts = detail::evaluate_graph(m, pg.graph, objective, target_class,
                                                opts.label_isolation ? &pg.matched_nodes : nullptr);
            } else {
                counts = detail::evaluate_graph(m, g, objective, target_class, nullptr);
            }
            num += want_acc ? counts.correct : counts.target_hits;
            den += counts.total;
        }
        return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
    };

    rep.acc = accumulate(clean_test, false, true, nullptr);
    rep.asr = accumulate(triggered_test, false, false, nullptr);
    rep.d_acc = accumulate(clean_test, true, true, &rep.pruned_edge_count);
    rep.d_asr = accumulate(triggered_test, true, false, &rep.pruned_edge_count);
    return rep;
}

/// Homophily baseline: drop every edge whose endpoint feature cosine
/// similarity falls below the threshold, then measure like the main defense.
inline DefenseReport prune_homophily_baseline(const Gnn& m, const Dataset& clean_test,
                                              const Dataset& triggered_test,
                                              const std::string& objective, int target_class,
                                              double sim_threshold, bool label_isolation) {
    auto prune = [&](const Graph& g, std::vector<char>& matched) {
        Graph out = g;
        matched.assign(g.node_count, 0);
        std::vector<Edge> kept;
        std::vector<int> kept_idx;
        for (int e = 0; e < g.edge_count(); ++e) {
            const Edge& ed = g.edges[e];
            double nu = 0.0, nv = 0.0, uv = 0.0;
            for (int c = 0; c < g.node_features.cols; ++c) {
                double a = g.node_features(ed.src, c), b = g.node_features(ed.dst, c);
                nu += a * a;
                nv += b * b;
                uv += a * b;
            }
            double cos = nu > 0 && nv > 0 ? uv / std::sqrt(nu * nv) : 0.0;
            if (cos < sim_threshold) {
                matched[ed.src] = matched[ed.dst] = 1;
                continue;
            }
            kept.push_back(ed);
            kept_idx.push_back(e);
        }
        Mat ef(static_cast<int>(kept.size()), g.edge_features.cols);
        for (size_t i = 0; i < kept_idx.size(); ++i)
            for (int c = 0; c < ef.cols; ++c) ef(static_cast<int>(i), c) = g.edge_features(kept_idx[i], c);
        out.edges = std::move(kept);
        out.edge_features = std::move(ef);
        return out;
    };

    DefenseReport rep;
    auto rate = [&](const Dataset& d, bool do_prune, bool want_acc) {
        long num = 0, den = 0;
        for (const Graph& g : d.graphs) {
            std::vector<char> matched;
            detail::EvalCounts counts;
            if (do_prune) {
                Graph pg = prune(g, matched);
                counts = detail::evaluate_graph(m, pg, objective, target_class,
                                                label_isolation ? &matched : nullptr);
            } else {
                counts = detail::evaluate_graph(m, g, objective, target_class, nullptr);
            }
            num += want_acc ? counts.correct : counts.target_hits;
            den += counts.total;
        }
        return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
    };
    rep.acc = rate(clean_test, false, true);
    rep.asr = rate(triggered_test, false, false);
    rep.d_acc = rate(clean_test, true, true);
    rep.d_asr = rate(triggered_test, true, false);
    return rep;
}

}  // namespace gnnprop
