#pragma once

#include <optional>

#include "gnnprop/inference.hpp"

namespace gnnprop {

// ---------------------------------------------------------------------------
// Aggregated features
// ---------------------------------------------------------------------------

/// First-layer aggregation computed twice per structure node: over the edges
/// the structure explains (x_in) and over every incoming edge of the matched
/// node in the host graph (x_full), plus their difference. Layout per node:
/// [x_in (etypes x msg_dim), x_full, diff].
inline int agg_feature_width(const Gnn& m, const Structure& s) {
    const GnnLayer& l = m.layers.front();
    return s.node_count * 3 * l.n_etypes() * l.msg_dim();
}

inline Vec compute_agg_features(const Gnn& m, const Graph& g, const Structure& s, const Match& match) {
    const GnnLayer& layer = m.layers.front();
    int md = layer.msg_dim();
    int T = layer.n_etypes();
    Vec zero_edge(m.edge_dim, 0.0);
    std::vector<std::vector<int>> incoming = g.incoming_by_node();

    auto message = [&](int src, int dst, const double* efeat) {
        Vec in;
        in.reserve(2 * m.node_dim + m.edge_dim);
        for (int c = 0; c < m.node_dim; ++c) in.push_back(g.node_features(src, c));
        for (int c = 0; c < m.node_dim; ++c) in.push_back(g.node_features(dst, c));
        for (int c = 0; c < m.edge_dim; ++c) in.push_back(efeat[c]);
        return in;
    };

    Vec out;
    out.reserve(agg_feature_width(m, s));
    for (int i = 0; i < s.node_count; ++i) {
        int host = match.map[i];
        Vec x_in, x_full;
        for (int t = 0; t < T; ++t) {
            std::vector<Vec> msgs;
            for (const Edge& e : s.edges) {
                if (e.dst != i || e.etype != t) continue;
                int gi = g.edge_index(match.map[e.src], host, e.etype);
                if (gi < 0) throw ValidationError("agg features: match does not cover structure edge");
                msgs.push_back(fnn_eval(layer.msg[t],
                                        message(match.map[e.src], host,
                                                g.edge_features.data.data() +
                                                    static_cast<size_t>(gi) * g.edge_features.cols)));
            }
            if (layer.self_loop && t == 0)
                msgs.push_back(fnn_eval(layer.msg[t], message(host, host, zero_edge.data())));
            Vec agg = aggregate(layer.agg, msgs, md);
            x_in.insert(x_in.end(), agg.begin(), agg.end());
        }
        for (int t = 0; t < T; ++t) {
            std::vector<Vec> msgs;
            for (int e : incoming[host]) {
                if (g.edges[e].etype != t) continue;
                msgs.push_back(fnn_eval(layer.msg[t],
                                        message(g.edges[e].src, host,
                                                g.edge_features.data.data() +
                                                    static_cast<size_t>(e) * g.edge_features.cols)));
            }
            if (layer.self_loop && t == 0)
                msgs.push_back(fnn_eval(layer.msg[t], message(host, host, zero_edge.data())));
            Vec agg = aggregate(layer.agg, msgs, md);
            x_full.insert(x_full.end(), agg.begin(), agg.end());
        }
        out.insert(out.end(), x_in.begin(), x_in.end());
        out.insert(out.end(), x_full.begin(), x_full.end());
        for (size_t c = 0; c < x_in.size(); ++c) out.push_back(x_full[c] - x_in[c]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Decision tree (CART, Gini)
// ---------------------------------------------------------------------------

struct TreeParams {
    int max_depth = 4;
    int min_leaf = 5;
};

struct TreeNode {
    bool leaf = true;
    bool label = false;
    int feature = -1;
    double threshold = 0.0;
    int left = -1;   // x[feature] <= threshold
    int right = -1;  // x[feature] > threshold
};

struct Tree {
    std::vector<TreeNode> nodes;

    bool predict(const Vec& x) const {
        int cur = 0;
        while (!nodes[cur].leaf)
            cur = x[nodes[cur].feature] <= nodes[cur].threshold ? nodes[cur].left : nodes[cur].right;
        return nodes[cur].label;
    }
};

namespace detail {

inline double gini(long pos, long total) {
    if (total == 0) return 0.0;
    double p = static_cast<double>(pos) / static_cast<double>(total);
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

inline int grow_tree(Tree& tree, const Mat& features, const std::vector<char>& holds,
                     std::vector<int> idx, int depth, const TreeParams& params) {
    long pos = 0;
    for (int i : idx) pos += holds[i] ? 1 : 0;
    long total = static_cast<long>(idx.size());

    int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    // majority label, ties toward "does not hold"
    tree.nodes[node_id].label = pos * 2 > total;

    bool pure = pos == 0 || pos == total;
    if (depth >= params.max_depth || pure || total < 2 * params.min_leaf) return node_id;

    double parent_imp = gini(pos, total);
    double best_gain = 1e-12;
    int best_f = -1;
    double best_thr = 0.0;
    for (int f = 0; f < features.cols; ++f) {
        std::vector<std::pair<double, char>> vals;
        vals.reserve(idx.size());
        for (int i : idx) vals.push_back({features(i, f), holds[i]});
        std::sort(vals.begin(), vals.end());
        long lpos = 0, lcnt = 0;
        for (size_t k = 0; k + 1 < vals.size(); ++k) {
            lpos += vals[k].second ? 1 : 0;
            ++lcnt;
            if (vals[k].first == vals[k + 1].first) continue;
            if (lcnt < params.min_leaf || total - lcnt < params.min_leaf) continue;
            double thr = vals[k].first + (vals[k + 1].first - vals[k].first) / 2.0;
            double imp = (static_cast<double>(lcnt) * gini(lpos, lcnt) +
                          static_cast<double>(total - lcnt) * gini(pos - lpos, total - lcnt)) /
                         static_cast<double>(total);
            double gain = parent_imp - imp;
            if (gain > best_gain) {  // strict: ties keep (feature asc, threshold asc)
                best_gain = gain;
                best_f = f;
                best_thr = thr;
            }
        }
    }
    if (best_f < 0) return node_id;

    std::vector<int> left_idx, right_idx;
    for (int i : idx) (features(i, best_f) <= best_thr ? left_idx : right_idx).push_back(i);
    tree.nodes[node_id].leaf = false;
    tree.nodes[node_id].feature = best_f;
    tree.nodes[node_id].threshold = best_thr;
    int l = grow_tree(tree, features, holds, std::move(left_idx), depth + 1, params);
    int r = grow_tree(tree, features, holds, std::move(right_idx), depth + 1, params);
    tree.nodes[node_id].left = l;
    tree.nodes[node_id].right = r;
    return node_id;
}

}  // namespace detail

inline Tree fit_decision_tree(const Mat& features, const std::vector<char>& holds,
                              const TreeParams& params = {}) {
    if (features.rows == 0 || features.rows != static_cast<int>(holds.size()))
        throw ValidationError("fit_decision_tree: need at least one labeled sample");
    Tree tree;
    std::vector<int> idx(features.rows);
    for (int i = 0; i < features.rows; ++i) idx[i] = i;
    detail::grow_tree(tree, features, holds, std::move(idx), 0, params);
    return tree;
}

/// One conjunction per holds-leaf path, over the aggregated feature space.
inline std::vector<LinearPredicate> tree_to_predicates(const Tree& tree, int n_features) {
    std::vector<LinearPredicate> out;
    std::vector<LinearConstraint> path;
    auto walk = [&](auto&& self, int node_id) -> void {
        const TreeNode& node = tree.nodes[node_id];
        if (node.leaf) {
            if (node.label) out.push_back({path});
            return;
        }
        Vec c(n_features, 0.0);
        c[node.feature] = 1.0;
        path.push_back({c, node.threshold, false, -1, -1, -1});  // x_f <= thr
        self(self, node.left);
        path.pop_back();
        for (double& x : c) x = -x;
        // x_f > thr  <=>  -x_f < -thr
        path.push_back({Vec(c), -node.threshold, true, -1, -1, -1});
        self(self, node.right);
        path.pop_back();
    };
    if (!tree.nodes.empty()) walk(walk, 0);
    return out;
}

// ---------------------------------------------------------------------------
// Least squares
// ---------------------------------------------------------------------------

/// Ordinary least squares with a ridge damping of 1e-8 on the normal-equation
/// diagonal; returns (coefficients, intercept).
inline std::pair<Vec, double> fit_regression(const Mat& features, const Vec& deviation) {
    if (features.rows == 0 || features.rows != static_cast<int>(deviation.size()))
        throw ValidationError("fit_regression: need at least one sample");
    int k = features.cols + 1;  // intercept last
    Mat ata(k, k);
    Vec atb(k, 0.0);
    for (int r = 0; r < features.rows; ++r) {
        for (int i = 0; i < k; ++i) {
            double xi = i < features.cols ? features(r, i) : 1.0;
            atb[i] += xi * deviation[r];
            for (int j = 0; j < k; ++j) {
                double xj = j < features.cols ? features(r, j) : 1.0;
                ata(i, j) += xi * xj;
            }
        }
    }
    for (int i = 0; i < k; ++i) ata(i, i) += 1e-8;

    // gaussian elimination with partial pivoting
    for (int col = 0; col < k; ++col) {
        int piv = col;
        for (int r = col + 1; r < k; ++r)
            if (std::fabs(ata(r, col)) > std::fabs(ata(piv, col))) piv = r;
        if (piv != col) {
            for (int j = 0; j < k; ++j) std::swap(ata(col, j), ata(piv, j));
            std::swap(atb[col], atb[piv]);
        }
        double d = ata(col, col);
        if (std::fabs(d) < 1e-300) continue;
        for (int r = 0; r < k; ++r) {
            if (r == col) continue;
            double f = ata(r, col) / d;
            if (f == 0.0) continue;
            for (int j = col; j < k; ++j) ata(r, j) -= f * ata(col, j);
            atb[r] -= f * atb[col];
        }
    }
    Vec beta(k, 0.0);
    for (int i = 0; i < k; ++i)
        if (std::fabs(ata(i, i)) > 1e-300) beta[i] = atb[i] / ata(i, i);
    Vec coef(beta.begin(), beta.end() - 1);
    return {coef, beta[k - 1]};
}

// ---------------------------------------------------------------------------
// Likely / dynamic properties and confidence
// ---------------------------------------------------------------------------

struct ConfidenceReport {
    bool defined = false;
    long support_eval = 0;
    double pa_prior = 0.0, pa_full = 0.0, ir = 0.0;   // classification
    double pe_prior = 0.0, pe_full = 0.0, rr = 0.0;   // regression
};

struct DynProperty {
    StructProperty base;  // subiso mode
    std::vector<LinearPredicate> dyna;          // classification: disjunction of conjunctions
    std::optional<std::pair<Vec, double>> out_dyna;  // regression: coefs over agg features + intercept
    ConfidenceReport confidence;

    bool has_dyna() const { return !dyna.empty(); }
};

/// sigma_{S iso} weakens to sigma_{S subiso}; the verified flag no longer
/// applies because the surrounding graph may change the behavior.
inline StructProperty relax(const StructProperty& p) {
    StructProperty out = p;
    out.subiso = true;
    out.verified = false;
    return out;
}

namespace detail {

struct InstanceEval {
    bool prior_holds = false;     // classification: prediction matches the class
    bool dyna_holds = true;       // dynamic predicate satisfied
    double dev_prior2 = 0.0;      // regression: squared deviation, base condition
    double dev_full2 = 0.0;       // with the dynamic term
};

}  // namespace detail

/// Confidence of a (likely or dynamic) property against a dataset: subiso
/// matches are enumerated, filtered by the input condition, and the output
/// condition is checked against the GNN's prediction on the full host graph.
inline ConfidenceReport evaluate_confidence(const DynProperty& p, const Gnn& m, const Dataset& d,
                                            int match_cap = 100000) {
    ConfidenceReport rep;
    const StructProperty& base = p.base;
    const Objective& obj = m.objectives.at(base.objective);
    FeatureLayout layout(base.structure, m.node_dim, m.edge_dim);
    long n = 0, prior_ok = 0, full_n = 0, full_ok = 0;
    double pe_prior_sum = 0.0, pe_full_sum = 0.0;
    long rows = 0;

    for (size_t gi = 0; gi < d.graphs.size(); ++gi) {
        const Graph& g = d.graphs[gi];
        MatchSet ms = enumerate_subiso_matches(g, base.structure, match_cap);
        if (ms.matches.empty()) continue;
        Mat out = gnn_forward(m, g);
        for (const Match& match : ms.matches) {
            Vec x = layout.gather(g, match);
            if (!base.inps.satisfied_by(x)) continue;
            ++n;
            int host = match.map[base.structure.target];
            if (obj.kind == TaskKind::Classification) {
                Vec row = out.row(host);
                bool holds = argmax_lowest(row, obj.lo, obj.hi) == base.out.cls;
                prior_ok += holds ? 1 : 0;
                bool dyn_ok = true;
                if (p.has_dyna()) {
                    Vec agg = compute_agg_features(m, g, base.structure, match);
                    dyn_ok = false;
                    for (const LinearPredicate& conj : p.dyna)
                        if (conj.satisfied_by(agg)) { dyn_ok = true; break; }
                }
                if (dyn_ok) {
                    ++full_n;
                    full_ok += holds ? 1 : 0;
                }
            } else {
                Vec pred = matvec(base.out.W, x);
                for (size_t r = 0; r < pred.size(); ++r) pred[r] += base.out.v[r];
                double dyn_term = 0.0;
                if (p.out_dyna) {
                    Vec agg = compute_agg_features(m, g, base.structure, match);
                    dyn_term = dot(p.out_dyna->first, agg) + p.out_dyna->second;
                }
                for (int r = obj.lo; r < obj.hi; ++r) {
                    double actual = out(host, r);
                    double base_pred = pred[r - obj.lo];
                    pe_prior_sum += (actual - base_pred) * (actual - base_pred);
                    double full_pred = base_pred + dyn_term;
                    pe_full_sum += (actual - full_pred) * (actual - full_pred);
                    ++rows;
                }
            }
        }
    }

    rep.support_eval = n;
    if (n == 0) return rep;  // undefined, excluded from aggregates
    rep.defined = true;
    if (obj.kind == TaskKind::Classification) {
        rep.pa_prior = static_cast<double>(prior_ok) / static_cast<double>(n);
        rep.pa_full = full_n > 0 ? static_cast<double>(full_ok) / static_cast<double>(full_n)
                                 : rep.pa_prior;
        rep.ir = (rep.pa_full - rep.pa_prior) / std::max(rep.pa_prior, 1e-9);
    } else {
        rep.pe_prior = pe_prior_sum / static_cast<double>(rows);
        rep.pe_full = p.out_dyna ? pe_full_sum / static_cast<double>(rows) : rep.pe_prior;
        rep.rr = (rep.pe_prior - rep.pe_full) / std::max(rep.pe_prior, 1e-12);
    }
    return rep;
}

/// Relax a verified structure property and fit its dynamic strengthening on
/// the training data: a decision tree over aggregated features for
/// classification, a linear deviation model for regression. No dynamic
/// condition is added when the base property already matches all fitted
/// instances.
inline DynProperty dynamic_analysis(const StructProperty& verified, const Gnn& m, const Dataset& train,
                                    const TreeParams& tree_params = {}, int match_cap = 100000) {
    DynProperty dp;
    dp.base = relax(verified);
    const Objective& obj = m.objectives.at(dp.base.objective);
    FeatureLayout layout(dp.base.structure, m.node_dim, m.edge_dim);

    std::vector<Vec> feats;
    std::vector<char> holds;
    Vec deviations;
    for (size_t gi = 0; gi < train.graphs.size(); ++gi) {
        const Graph& g = train.graphs[gi];
        MatchSet ms = enumerate_subiso_matches(g, dp.base.structure, match_cap);
        if (ms.matches.empty()) continue;
        Mat out = gnn_forward(m, g);
        for (const Match& match : ms.matches) {
            Vec x = layout.gather(g, match);
            if (!dp.base.inps.satisfied_by(x)) continue;
            int host = match.map[dp.base.structure.target];
            feats.push_back(compute_agg_features(m, g, dp.base.structure, match));
            if (obj.kind == TaskKind::Classification) {
                Vec row = out.row(host);
                holds.push_back(argmax_lowest(row, obj.lo, obj.hi) == dp.base.out.cls ? 1 : 0);
            } else {
                Vec pred = matvec(dp.base.out.W, x);
                double dev = 0.0;  // single-row slices in practice; average otherwise
                for (int r = obj.lo; r < obj.hi; ++r)
                    dev += out(host, r) - (pred[r - obj.lo] + dp.base.out.v[r - obj.lo]);
                deviations.push_back(dev / static_cast<double>(obj.hi - obj.lo));
            }
        }
    }
    if (feats.empty()) {
        dp.confidence = evaluate_confidence(dp, m, train, match_cap);
        return dp;
    }

    Mat fmat(static_cast<int>(feats.size()), static_cast<int>(feats[0].size()));
    for (size_t r = 0; r < feats.size(); ++r)
        for (size_t c = 0; c < feats[r].size(); ++c) fmat(static_cast<int>(r), static_cast<int>(c)) = feats[r][c];

    if (obj.kind == TaskKind::Classification) {
        long ok = 0;
        for (char h : holds) ok += h;
        if (ok < static_cast<long>(holds.size())) {  // pa_prior < 1: fit the tree
            Tree tree = fit_decision_tree(fmat, holds, tree_params);
            dp.dyna = tree_to_predicates(tree, fmat.cols);
        }
    } else {
        double sq = 0.0;
        for (double v : deviations) sq += v * v;
        if (sq / static_cast<double>(deviations.size()) > 1e-12)
            dp.out_dyna = fit_regression(fmat, deviations);
    }
    dp.confidence = evaluate_confidence(dp, m, train, match_cap);
    return dp;
}

}  // namespace gnnprop
