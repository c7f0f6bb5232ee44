#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "gnnprop/core.hpp"

namespace gnnprop {

struct AffineLayer {
    Mat A;
    Vec b;
};

struct ReluLayer {
    int width = 0;
};

/// Max pooling over disjoint index subsets. Uncovered input indices pass
/// through, appended after the pooled outputs in input order.
struct MaxPoolLayer {
    std::vector<std::vector<int>> partitions;
    int input_width = 0;

    std::vector<int> uncovered() const {
        std::vector<uint8_t> seen(input_width, 0);
        for (const auto& p : partitions)
            for (int i : p) seen[i] = 1;
        std::vector<int> out;
        for (int i = 0; i < input_width; ++i)
            if (!seen[i]) out.push_back(i);
        return out;
    }

    int output_width() const {
        return static_cast<int>(partitions.size() + uncovered().size());
    }
};

using Layer = std::variant<AffineLayer, ReluLayer, MaxPoolLayer>;

inline int layer_input_dim(const Layer& l) {
    if (auto* a = std::get_if<AffineLayer>(&l)) return a->A.cols;
    if (auto* r = std::get_if<ReluLayer>(&l)) return r->width;
    return std::get<MaxPoolLayer>(l).input_width;
}

inline int layer_output_dim(const Layer& l) {
    if (auto* a = std::get_if<AffineLayer>(&l)) return a->A.rows;
    if (auto* r = std::get_if<ReluLayer>(&l)) return r->width;
    return std::get<MaxPoolLayer>(l).output_width();
}

struct Fnn {
    std::vector<Layer> layers;
    int input_dim = 0;
    int output_dim = 0;

    void validate() const {
        int cur = input_dim;
        for (size_t i = 0; i < layers.size(); ++i) {
            if (layer_input_dim(layers[i]) != cur)
                throw ValidationError("fnn: layer " + std::to_string(i) + " width mismatch");
            if (auto* a = std::get_if<AffineLayer>(&layers[i]))
                if (static_cast<int>(a->b.size()) != a->A.rows)
                    throw ValidationError("fnn: affine bias size mismatch");
            if (auto* m = std::get_if<MaxPoolLayer>(&layers[i])) {
                std::vector<uint8_t> seen(m->input_width, 0);
                for (const auto& p : m->partitions) {
                    if (p.empty()) throw ValidationError("fnn: empty maxpool partition");
                    for (int idx : p) {
                        if (idx < 0 || idx >= m->input_width || seen[idx])
                            throw ValidationError("fnn: bad maxpool partition index");
                        seen[idx] = 1;
                    }
                }
            }
            cur = layer_output_dim(layers[i]);
        }
        if (cur != output_dim) throw ValidationError("fnn: output_dim mismatch");
    }
};

inline Fnn make_affine_net(Mat A, Vec b) {
    Fnn f;
    f.input_dim = A.cols;
    f.output_dim = A.rows;
    f.layers.push_back(AffineLayer{std::move(A), std::move(b)});
    return f;
}

struct ActivationTrace {
    std::vector<std::vector<uint8_t>> relu_bits;  // per Relu layer, 1 <=> pre-activation > 0
    std::vector<std::vector<int>> pool_winners;   // per MaxPool layer, argmax per partition

    bool operator==(const ActivationTrace&) const = default;
    bool operator<(const ActivationTrace& o) const {
        if (relu_bits != o.relu_bits) return relu_bits < o.relu_bits;
        return pool_winners < o.pool_winners;
    }
};

namespace detail {

inline Vec apply_layer(const Layer& l, const Vec& x, ActivationTrace* trace) {
    if (auto* a = std::get_if<AffineLayer>(&l)) {
        Vec y = matvec(a->A, x);
        for (size_t i = 0; i < y.size(); ++i) y[i] += a->b[i];
        return y;
    }
    if (auto* r = std::get_if<ReluLayer>(&l)) {
        Vec y(x.size());
        std::vector<uint8_t> bits(x.size());
        for (size_t i = 0; i < x.size(); ++i) {
            bits[i] = x[i] > 0.0 ? 1 : 0;  // exact zero counts as inactive
            y[i] = bits[i] ? x[i] : 0.0;
        }
        if (trace) trace->relu_bits.push_back(std::move(bits));
        return y;
    }
    const auto& m = std::get<MaxPoolLayer>(l);
    Vec y;
    std::vector<int> winners;
    for (const auto& p : m.partitions) {
        int w = 0;
        for (size_t i = 1; i < p.size(); ++i)
            if (x[p[i]] > x[p[w]]) w = static_cast<int>(i);  // ties: lowest index
        winners.push_back(w);
        y.push_back(x[p[w]]);
    }
    for (int idx : m.uncovered()) y.push_back(x[idx]);
    if (trace) trace->pool_winners.push_back(std::move(winners));
    return y;
}

}  // namespace detail

inline Vec fnn_eval(const Fnn& f, const Vec& x) {
    if (static_cast<int>(x.size()) != f.input_dim)
        throw ValidationError("fnn_eval: input dim mismatch");
    Vec cur = x;
    for (const Layer& l : f.layers) cur = detail::apply_layer(l, cur, nullptr);
    return cur;
}

inline std::pair<Vec, ActivationTrace> fnn_eval_traced(const Fnn& f, const Vec& x) {
    if (static_cast<int>(x.size()) != f.input_dim)
        throw ValidationError("fnn_eval_traced: input dim mismatch");
    Vec cur = x;
    ActivationTrace t;
    for (const Layer& l : f.layers) cur = detail::apply_layer(l, cur, &t);
    return {cur, t};
}

/// One half-space c.x <= d (or < d when strict), tagged with the nonlinearity
/// that produced it so relaxation can reason about flips.
struct LinearConstraint {
    Vec c;
    double d = 0.0;
    bool strict = false;
    int layer = -1;  // index into Fnn::layers, -1 for external constraints
    int unit = -1;   // relu unit, or partition index for maxpool
    int loser = -1;  // for maxpool: the partition member this constraint dominates
};

inline bool satisfies(const LinearConstraint& c, const Vec& x, double slack = 0.0) {
    double lhs = dot(c.c, x);
    return c.strict ? lhs < c.d + slack : lhs <= c.d + slack;
}

/// Polytope of inputs sharing one activation pattern, with the affine map the
/// network computes there.
struct LinearRegion {
    std::vector<LinearConstraint> constraints;
    Mat W;
    Vec v;

    Vec apply(const Vec& x) const {
        Vec y = matvec(W, x);
        for (size_t i = 0; i < y.size(); ++i) y[i] += v[i];
        return y;
    }
};

inline bool is_trivial_constraint(const Vec& c, double d) {
    for (double ci : c)
        if (ci != 0.0) return false;
    return d >= 0.0;
}

/// Symbolic forward substitution: runs the trace through the net keeping the
/// current affine map (W, v) of every intermediate unit in terms of the input.
inline LinearRegion region_of(const Fnn& f, const ActivationTrace& t) {
    Mat W(f.input_dim, f.input_dim);
    for (int i = 0; i < f.input_dim; ++i) W(i, i) = 1.0;
    Vec v(f.input_dim, 0.0);
    LinearRegion region;

    size_t relu_idx = 0, pool_idx = 0;
    for (size_t li = 0; li < f.layers.size(); ++li) {
        const Layer& l = f.layers[li];
        if (auto* a = std::get_if<AffineLayer>(&l)) {
            W = matmul(a->A, W);
            Vec nv = matvec(a->A, v);
            for (size_t i = 0; i < nv.size(); ++i) nv[i] += a->b[i];
            v = std::move(nv);
        } else if (std::holds_alternative<ReluLayer>(l)) {
            if (relu_idx >= t.relu_bits.size()) throw ValidationError("region_of: trace too short");
            const auto& bits = t.relu_bits[relu_idx++];
            if (static_cast<int>(bits.size()) != W.rows)
                throw ValidationError("region_of: relu trace width mismatch");
            for (int u = 0; u < W.rows; ++u) {
                Vec cu = W.row(u);
                if (bits[u]) {
                    // pre-activation > 0  <=>  -W_u.x < v_u
                    Vec neg(cu.size());
                    for (size_t i = 0; i < cu.size(); ++i) neg[i] = -cu[i];
                    if (!is_trivial_constraint(neg, v[u]))
                        region.constraints.push_back({std::move(neg), v[u], true, static_cast<int>(li), u, -1});
                } else {
                    if (!is_trivial_constraint(cu, -v[u]))
                        region.constraints.push_back({cu, -v[u], false, static_cast<int>(li), u, -1});
                    for (int c = 0; c < W.cols; ++c) W(u, c) = 0.0;
                    v[u] = 0.0;
                }
            }
        } else {
            const auto& m = std::get<MaxPoolLayer>(l);
            if (pool_idx >= t.pool_winners.size()) throw ValidationError("region_of: trace too short");
            const auto& winners = t.pool_winners[pool_idx++];
            if (winners.size() != m.partitions.size())
                throw ValidationError("region_of: pool trace mismatch");
            Mat nw(m.output_width(), W.cols);
            Vec nv(m.output_width(), 0.0);
            int out = 0;
            for (size_t pi = 0; pi < m.partitions.size(); ++pi) {
                const auto& part = m.partitions[pi];
                int w = part[winners[pi]];
                for (size_t k = 0; k < part.size(); ++k) {
                    int p = part[k];
                    if (p == w) continue;
                    Vec c(W.cols);
                    for (int j = 0; j < W.cols; ++j) c[j] = W(p, j) - W(w, j);
                    double d = v[w] - v[p];
                    if (!is_trivial_constraint(c, d))
                        region.constraints.push_back(
                            {std::move(c), d, false, static_cast<int>(li), static_cast<int>(pi), p});
                }
                for (int j = 0; j < W.cols; ++j) nw(out, j) = W(w, j);
                nv[out] = v[w];
                ++out;
            }
            for (int idx : m.uncovered()) {
                for (int j = 0; j < W.cols; ++j) nw(out, j) = W(idx, j);
                nv[out] = v[idx];
                ++out;
            }
            W = std::move(nw);
            v = std::move(nv);
        }
    }
    region.W = std::move(W);
    region.v = std::move(v);
    return region;
}

}  // namespace gnnprop
