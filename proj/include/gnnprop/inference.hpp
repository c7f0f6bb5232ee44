#pragma once

#include <functional>
#include <map>
#include <optional>

#include "gnnprop/lowering.hpp"
#include "gnnprop/lp.hpp"

namespace gnnprop {

/// Conjunction of half-spaces over some variable space (the lowered layout
/// for base input conditions, aggregated features for dynamic ones).
struct LinearPredicate {
    std::vector<LinearConstraint> terms;

    bool satisfied_by(const Vec& x, double slack = 0.0) const {
        for (const auto& t : terms)
            if (!satisfies(t, x, slack)) return false;
        return true;
    }
};

struct OutputCondition {
    enum Kind { ClassIs, AffineEq };
    Kind kind = ClassIs;
    std::string objective;
    int cls = 0;  // ClassIs
    Mat W;        // AffineEq: rows = objective slice width, cols = layout input
    Vec v;
    double tol = 1e-9;

    bool operator==(const OutputCondition& o) const {
        return kind == o.kind && objective == o.objective && cls == o.cls && W == o.W && v == o.v &&
               tol == o.tol;
    }
};

/// sigma_struct AND sigma_inps => out. Mode is exact isomorphism until the
/// property is relaxed to subgraph isomorphism.
struct StructProperty {
    Structure structure;
    bool subiso = false;
    std::string objective;
    LinearPredicate inps;
    OutputCondition out;
    long support_train = 0;
    bool verified = false;
};

// ---------------------------------------------------------------------------
// Trace collection
// ---------------------------------------------------------------------------

struct TraceRecord {
    int graph = 0;
    Match match;
    Vec x;
    ActivationTrace trace;
    Vec output;
};

inline std::vector<TraceRecord> collect_traces(const LoweredModel& lm, const Dataset& d,
                                               const std::vector<std::pair<int, Match>>& matches) {
    std::vector<TraceRecord> out;
    out.reserve(matches.size());
    for (const auto& [gi, match] : matches) {
        TraceRecord rec;
        rec.graph = gi;
        rec.match = match;
        rec.x = lm.layout.gather(d.graphs[gi], match);
        auto [y, t] = fnn_eval_traced(lm.fnn, rec.x);
        rec.output = std::move(y);
        rec.trace = std::move(t);
        out.push_back(std::move(rec));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Exact verification on a polytope
// ---------------------------------------------------------------------------

enum class VerifyStatus { Verified, Falsified, Unknown };

struct VerifyResult {
    VerifyStatus status = VerifyStatus::Unknown;
    Vec witness;
    long lp_calls = 0;
};

namespace detail {

struct VerifyContext {
    const Fnn* fnn = nullptr;
    const OutputCondition* out = nullptr;
    int slice_lo = 0, slice_hi = 0;
    long budget = 0;
    long lp_calls = 0;
    bool out_of_budget = false;
    std::optional<Vec> counterexample;

    bool spend() {
        if (++lp_calls > budget) {
            out_of_budget = true;
            return false;
        }
        return true;
    }
};

inline std::vector<LinearConstraint> violation_disjuncts(const VerifyContext& ctx, const Mat& W,
                                                         const Vec& v) {
    std::vector<LinearConstraint> out;
    const OutputCondition& oc = *ctx.out;
    if (oc.kind == OutputCondition::ClassIs) {
        int c = ctx.slice_lo + oc.cls;
        for (int r = ctx.slice_lo; r < ctx.slice_hi; ++r) {
            if (r == c) continue;
            // A rival below the chosen index violates already on a tie; one
            // above must strictly win (argmax takes the lowest index).
            Vec diff(W.cols);
            for (int j = 0; j < W.cols; ++j) diff[j] = W(c, j) - W(r, j);
            out.push_back({std::move(diff), v[r] - v[c], r > c, -1, -1, -1});
        }
    } else {
        for (int r = ctx.slice_lo; r < ctx.slice_hi; ++r) {
            int rr = r - ctx.slice_lo;
            Vec dw(W.cols);
            for (int j = 0; j < W.cols; ++j) dw[j] = W(r, j) - oc.W(rr, j);
            double dv = v[r] - oc.v[rr];
            Vec neg(dw.size());
            for (size_t j = 0; j < dw.size(); ++j) neg[j] = -dw[j];
            out.push_back({std::move(neg), dv - oc.tol, true, -1, -1, -1});  // dev > tol
            out.push_back({std::move(dw), -oc.tol - dv, true, -1, -1, -1});  // dev < -tol
        }
    }
    return out;
}

/// DFS over the nonlinearity decisions reachable inside the polytope `cons`,
/// one decision per call. Both closed sides of a boundary are explored when
/// feasible; the network's affine maps agree on the shared boundary, so the
/// closed cover is exact. `point` always satisfies `cons`, which decides one
/// side for free. Returns false on falsification or budget exhaustion.
inline bool verify_walk(VerifyContext& ctx, std::vector<LinearConstraint>& cons, const Vec& point,
                        size_t li, int pos, Mat& W, Vec& v, std::vector<int>& winners) {
    const Fnn& f = *ctx.fnn;
    auto eval_unit = [&](const Mat& m, const Vec& bias, int r, const Vec& x) {
        double acc = bias[r];
        for (int j = 0; j < m.cols; ++j) acc += m(r, j) * x[j];
        return acc;
    };

    if (li == f.layers.size()) {
        for (const LinearConstraint& viol : violation_disjuncts(ctx, W, v)) {
            if (!ctx.spend()) return false;
            cons.push_back(viol);
            LpResult r = lp_feasible(cons, f.input_dim);
            cons.pop_back();
            if (r.status == LpStatus::Indeterminate) {
                ctx.out_of_budget = true;
                return false;
            }
            if (r.status == LpStatus::Feasible) {
                ctx.counterexample = r.witness;
                return false;
            }
        }
        return true;
    }

    const Layer& l = f.layers[li];
    if (auto* a = std::get_if<AffineLayer>(&l)) {
        Mat nw = matmul(a->A, W);
        Vec nv = matvec(a->A, v);
        for (size_t i = 0; i < nv.size(); ++i) nv[i] += a->b[i];
        std::vector<int> no_winners;
        return verify_walk(ctx, cons, point, li + 1, 0, nw, nv, no_winners);
    }

    if (std::holds_alternative<ReluLayer>(l)) {
        if (pos == W.rows) {
            std::vector<int> no_winners;
            return verify_walk(ctx, cons, point, li + 1, 0, W, v, no_winners);
        }
        int u = pos;
        Vec row = W.row(u);
        bool zero_row = true;
        for (double x : row)
            if (x != 0.0) { zero_row = false; break; }
        if (zero_row) {
            if (v[u] <= 0.0) v[u] = 0.0;
            return verify_walk(ctx, cons, point, li, pos + 1, W, v, winners);
        }
        double pre = eval_unit(W, v, u, point);
        bool point_on = pre > 0.0;
        Vec neg(row.size());
        for (size_t j = 0; j < row.size(); ++j) neg[j] = -row[j];
        LinearConstraint off{row, -v[u], false, -1, -1, -1};  // pre <= 0
        LinearConstraint on{std::move(neg), v[u], false, -1, -1, -1};  // pre >= 0

        // probe the side the point is not on
        if (!ctx.spend()) return false;
        cons.push_back(point_on ? off : on);
        LpResult other = lp_feasible(cons, f.input_dim);
        cons.pop_back();
        if (other.status == LpStatus::Indeterminate) {
            ctx.out_of_budget = true;
            return false;
        }
        if (other.status == LpStatus::Feasible) {
            Mat Wb = W;
            Vec vb = v;
            if (point_on) {  // other side zeroes the unit
                for (int j = 0; j < Wb.cols; ++j) Wb(u, j) = 0.0;
                vb[u] = 0.0;
            }
            cons.push_back(point_on ? off : on);
            bool ok = verify_walk(ctx, cons, other.witness, li, pos + 1, Wb, vb, winners);
            cons.pop_back();
            if (!ok) return false;
        }
        // commit the point's side
        if (!point_on) {
            for (int j = 0; j < W.cols; ++j) W(u, j) = 0.0;
            v[u] = 0.0;
        }
        cons.push_back(point_on ? on : off);
        bool ok = verify_walk(ctx, cons, point, li, pos + 1, W, v, winners);
        cons.pop_back();
        return ok;
    }

    const auto& m = std::get<MaxPoolLayer>(l);
    if (pos == static_cast<int>(m.partitions.size())) {
        Mat nw(m.output_width(), W.cols);
        Vec nv(m.output_width(), 0.0);
        int out_r = 0;
        for (size_t pi = 0; pi < m.partitions.size(); ++pi) {
            int w = m.partitions[pi][winners[pi]];
            for (int j = 0; j < W.cols; ++j) nw(out_r, j) = W(w, j);
            nv[out_r] = v[w];
            ++out_r;
        }
        for (int idx : m.uncovered()) {
            for (int j = 0; j < W.cols; ++j) nw(out_r, j) = W(idx, j);
            nv[out_r] = v[idx];
            ++out_r;
        }
        std::vector<int> no_winners;
        return verify_walk(ctx, cons, point, li + 1, 0, nw, nv, no_winners);
    }

    const auto& part = m.partitions[pos];
    if (winners.size() <= static_cast<size_t>(pos)) winners.resize(m.partitions.size(), 0);
    int point_w = 0;
    double best = eval_unit(W, v, part[0], point);
    for (size_t k = 1; k < part.size(); ++k) {
        double z = eval_unit(W, v, part[k], point);
        if (z > best) {
            best = z;
            point_w = static_cast<int>(k);
        }
    }
    auto dominance = [&](int k) {
        std::vector<LinearConstraint> cs;
        for (size_t q = 0; q < part.size(); ++q) {
            if (static_cast<int>(q) == k) continue;
            Vec diff(W.cols);
            for (int j = 0; j < W.cols; ++j) diff[j] = W(part[q], j) - W(part[k], j);
            double dd = v[part[k]] - v[part[q]];
            if (!is_trivial_constraint(diff, dd)) cs.push_back({std::move(diff), dd, false, -1, -1, -1});
        }
        return cs;
    };
    for (size_t k = 0; k < part.size(); ++k) {
        if (static_cast<int>(k) == point_w) continue;
        std::vector<LinearConstraint> cs = dominance(static_cast<int>(k));
        for (auto& c : cs) cons.push_back(c);
        if (!ctx.spend()) {
            cons.resize(cons.size() - cs.size());
            return false;
        }
        LpResult r = lp_feasible(cons, f.input_dim);
        if (r.status == LpStatus::Indeterminate) {
            cons.resize(cons.size() - cs.size());
            ctx.out_of_budget = true;
            return false;
        }
        if (r.status == LpStatus::Feasible) {
            winners[pos] = static_cast<int>(k);
            bool ok = verify_walk(ctx, cons, r.witness, li, pos + 1, W, v, winners);
            if (!ok) {
                cons.resize(cons.size() - cs.size());
                return false;
            }
        }
        cons.resize(cons.size() - cs.size());
    }
    winners[pos] = point_w;
    std::vector<LinearConstraint> cs = dominance(point_w);
    for (auto& c : cs) cons.push_back(c);
    bool ok = verify_walk(ctx, cons, point, li, pos + 1, W, v, winners);
    cons.resize(cons.size() - cs.size());
    return ok;
}

}  // namespace detail

/// Does the network satisfy `out` everywhere on the polytope? Exact up to the
/// LP budget: every activation region intersecting the polytope is visited
/// (LP-pruned) and its affine map checked against the condition. Unknown
/// means the budget ran out; callers treat that as "not verified".
inline VerifyResult verify_on_polytope(const Fnn& f, const std::vector<LinearConstraint>& polytope,
                                       const OutputCondition& out, int slice_lo, int slice_hi,
                                       long budget = 4000) {
    detail::VerifyContext ctx;
    ctx.fnn = &f;
    ctx.out = &out;
    ctx.slice_lo = slice_lo;
    ctx.slice_hi = slice_hi;
    ctx.budget = budget;

    std::vector<LinearConstraint> cons = polytope;
    LpResult root = lp_feasible(cons, f.input_dim);
    ctx.lp_calls = 1;
    if (root.status == LpStatus::Infeasible)
        return {VerifyStatus::Verified, {}, ctx.lp_calls};  // empty region: vacuous
    if (root.status == LpStatus::Indeterminate) return {VerifyStatus::Unknown, {}, ctx.lp_calls};

    Mat W(f.input_dim, f.input_dim);
    for (int i = 0; i < f.input_dim; ++i) W(i, i) = 1.0;
    Vec v(f.input_dim, 0.0);
    std::vector<int> winners;
    bool ok = detail::verify_walk(ctx, cons, root.witness, 0, 0, W, v, winners);
    if (ok) return {VerifyStatus::Verified, {}, ctx.lp_calls};
    if (ctx.counterexample) return {VerifyStatus::Falsified, *ctx.counterexample, ctx.lp_calls};
    return {VerifyStatus::Unknown, {}, ctx.lp_calls};
}

// ---------------------------------------------------------------------------
// Property inference
// ---------------------------------------------------------------------------

struct InferParams {
    double regression_tol = 1e-9;
    long verify_budget = 4000;
    bool relax_constraints = true;
};

namespace detail {

inline bool same_constraints(const std::vector<LinearConstraint>& a,
                             const std::vector<LinearConstraint>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].c != b[i].c || a[i].d != b[i].d || a[i].strict != b[i].strict) return false;
    return true;
}

inline std::vector<LinearConstraint> sorted_constraints(std::vector<LinearConstraint> cs) {
    std::sort(cs.begin(), cs.end(), [](const LinearConstraint& x, const LinearConstraint& y) {
        return std::tie(x.c, x.d, x.strict) < std::tie(y.c, y.d, y.strict);
    });
    return cs;
}

inline LinearConstraint negate_constraint(const LinearConstraint& k) {
    Vec neg(k.c.size());
    for (size_t i = 0; i < k.c.size(); ++i) neg[i] = -k.c[i];
    // not(c.x <= d) is c.x > d; not(c.x < d) is c.x >= d
    return {std::move(neg), -k.d, !k.strict, -1, -1, -1};
}

}  // namespace detail

/// PROPHECY-style inference on the lowered model: traces are grouped by
/// activation pattern (and observed class, for classification), each group's
/// region constraints become the input condition, the condition is verified
/// against the network, and then constraints are greedily dropped for as long
/// as the relaxed polytope still verifies. The drop re-verification walks
/// every activation region inside the relaxed polytope, so accepted drops
/// stay sound for the network rather than for one affine piece.
inline std::vector<StructProperty> infer_properties(const LoweredModel& lm, const Structure& s,
                                                    const std::string& objective, const Objective& obj,
                                                    const std::vector<TraceRecord>& traces,
                                                    const InferParams& params = {}) {
    if (traces.empty()) return {};
    int lo = lm.target_lo + obj.lo;
    int hi = lm.target_lo + obj.hi;

    struct Group {
        ActivationTrace trace;
        int cls = -1;
        std::vector<const TraceRecord*> members;
    };
    std::map<std::pair<ActivationTrace, int>, Group> groups;
    for (const TraceRecord& rec : traces) {
        int cls = -1;
        if (obj.kind == TaskKind::Classification) cls = argmax_lowest(rec.output, lo, hi);
        Group& g = groups[{rec.trace, cls}];
        g.trace = rec.trace;
        g.cls = cls;
        g.members.push_back(&rec);
    }

    std::vector<StructProperty> props;
    for (auto& [key, g] : groups) {
        LinearRegion region = region_of(lm.fnn, g.trace);
        OutputCondition out;
        out.objective = objective;
        if (obj.kind == TaskKind::Classification) {
            out.kind = OutputCondition::ClassIs;
            out.cls = g.cls;
        } else {
            out.kind = OutputCondition::AffineEq;
            out.tol = params.regression_tol;
            out.W = Mat(hi - lo, lm.fnn.input_dim);
            out.v = Vec(hi - lo);
            for (int r = lo; r < hi; ++r) {
                for (int j = 0; j < lm.fnn.input_dim; ++j) out.W(r - lo, j) = region.W(r, j);
                out.v[r - lo] = region.v[r];
            }
        }

        std::vector<LinearConstraint> cons = region.constraints;
        VerifyResult vr = verify_on_polytope(lm.fnn, cons, out, lo, hi, params.verify_budget);
        bool verified = vr.status == VerifyStatus::Verified;

        if (verified && params.relax_constraints && !cons.empty()) {
            // Try dropping constraints, least data-supported first: order by
            // how many member inputs sit exactly on the constraint boundary.
            std::vector<std::pair<long, size_t>> order;
            for (size_t i = 0; i < cons.size(); ++i) {
                long touching = 0;
                for (const TraceRecord* rec : g.members)
                    if (std::fabs(dot(cons[i].c, rec->x) - cons[i].d) <= 1e-9) ++touching;
                order.push_back({touching, i});
            }
            std::stable_sort(order.begin(), order.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
            std::vector<bool> dropped(cons.size(), false);
            for (const auto& [touch, idx] : order) {
                std::vector<LinearConstraint> reduced;
                for (size_t i = 0; i < cons.size(); ++i)
                    if (!dropped[i] && i != idx) reduced.push_back(cons[i]);
                // fast path: constraint implied by the rest
                std::vector<LinearConstraint> probe = reduced;
                probe.push_back(detail::negate_constraint(cons[idx]));
                LpResult imp = lp_feasible(probe, lm.fnn.input_dim);
                bool accept = false;
                if (imp.status == LpStatus::Infeasible) {
                    accept = true;
                } else {
                    VerifyResult rv =
                        verify_on_polytope(lm.fnn, reduced, out, lo, hi, params.verify_budget);
                    accept = rv.status == VerifyStatus::Verified;
                }
                if (accept) dropped[idx] = true;
            }
            std::vector<LinearConstraint> kept;
            for (size_t i = 0; i < cons.size(); ++i)
                if (!dropped[i]) kept.push_back(cons[i]);
            cons = std::move(kept);
        }

        StructProperty p;
        p.structure = s;
        p.objective = objective;
        p.inps.terms = detail::sorted_constraints(cons);
        p.out = out;
        p.support_train = static_cast<long>(g.members.size());
        p.verified = verified;
        props.push_back(std::move(p));
    }

    // merge groups that relaxed to the same property
    std::vector<StructProperty> merged;
    for (StructProperty& p : props) {
        bool found = false;
        for (StructProperty& q : merged) {
            if (q.verified == p.verified && q.out == p.out &&
                detail::same_constraints(q.inps.terms, p.inps.terms)) {
                q.support_train += p.support_train;
                found = true;
                break;
            }
        }
        if (!found) merged.push_back(std::move(p));
    }
    std::sort(merged.begin(), merged.end(), [](const StructProperty& a, const StructProperty& b) {
        if (a.support_train != b.support_train) return a.support_train > b.support_train;
        if (a.out.cls != b.out.cls) return a.out.cls < b.out.cls;
        return a.inps.terms.size() < b.inps.terms.size();
    });
    return merged;
}

}  // namespace gnnprop
