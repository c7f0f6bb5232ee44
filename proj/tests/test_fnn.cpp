#include <catch2/catch_amalgamated.hpp>

#include "gnnprop/fnn.hpp"
#include "gnnprop/rng.hpp"

using namespace gnnprop;

namespace {

Mat mat(std::initializer_list<std::initializer_list<double>> rows) {
    Mat m(static_cast<int>(rows.size()), static_cast<int>(rows.begin()->size()));
    int i = 0;
    for (const auto& row : rows) {
        int j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

Fnn random_fnn(Rng& rng, int input_dim, int n_relu_layers) {
    Fnn f;
    f.input_dim = input_dim;
    int cur = input_dim;
    for (int l = 0; l < n_relu_layers; ++l) {
        int next = rng.uniform_int(1, 6);
        Mat A(next, cur);
        Vec b(next);
        for (double& x : A.data) x = rng.uniform(-1.5, 1.5);
        for (double& x : b) x = rng.uniform(-1.0, 1.0);
        f.layers.push_back(AffineLayer{std::move(A), std::move(b)});
        f.layers.push_back(ReluLayer{next});
        cur = next;
    }
    Mat A(rng.uniform_int(1, 4), cur);
    Vec b(A.rows);
    for (double& x : A.data) x = rng.uniform(-1.5, 1.5);
    for (double& x : b) x = rng.uniform(-1.0, 1.0);
    f.layers.push_back(AffineLayer{A, b});
    f.output_dim = A.rows;
    f.validate();
    return f;
}

/// Straight-line reference interpreter kept independent of fnn_eval.
Vec naive_eval(const Fnn& f, Vec x) {
    for (const Layer& l : f.layers) {
        if (auto* a = std::get_if<AffineLayer>(&l)) {
            Vec y(a->A.rows, 0.0);
            for (int r = 0; r < a->A.rows; ++r) {
                y[r] = a->b[r];
                for (int c = 0; c < a->A.cols; ++c) y[r] += a->A(r, c) * x[c];
            }
            x = y;
        } else if (std::holds_alternative<ReluLayer>(l)) {
            for (double& v : x) v = v > 0 ? v : 0;
        } else {
            const auto& m = std::get<MaxPoolLayer>(l);
            Vec y;
            for (const auto& p : m.partitions) {
                double best = x[p[0]];
                for (int idx : p) best = std::max(best, x[idx]);
                y.push_back(best);
            }
            for (int idx : m.uncovered()) y.push_back(x[idx]);
            x = y;
        }
    }
    return x;
}

}  // namespace

TEST_CASE("relu clamps negative affine output", "[fnn]") {
    Fnn f;
    f.input_dim = 1;
    f.output_dim = 1;
    f.layers.push_back(AffineLayer{mat({{1}}), {0}});
    f.layers.push_back(ReluLayer{1});
    REQUIRE(fnn_eval(f, {-2.0}) == Vec{0.0});
}

TEST_CASE("maxpool picks the partition maximum", "[fnn]") {
    Fnn f;
    f.input_dim = 2;
    f.output_dim = 1;
    f.layers.push_back(MaxPoolLayer{{{0, 1}}, 2});
    REQUIRE(fnn_eval(f, {3.0, 5.0}) == Vec{5.0});
}

TEST_CASE("fnn_eval matches an independent interpreter on random nets", "[fnn]") {
    Rng rng(42);
    for (int t = 0; t < 100; ++t) {
        Rng sub = rng.split(static_cast<uint64_t>(t));
        Fnn f = random_fnn(sub, 3, 3);
        for (int k = 0; k < 10; ++k) {
            Vec x{sub.uniform(-3, 3), sub.uniform(-3, 3), sub.uniform(-3, 3)};
            REQUIRE(max_abs_diff(fnn_eval(f, x), naive_eval(f, x)) < 1e-12);
        }
    }
}

TEST_CASE("traced evaluation records relu bits and pool winners", "[fnn]") {
    Fnn f;
    f.input_dim = 2;
    f.output_dim = 2;
    f.layers.push_back(ReluLayer{2});
    auto [y, t] = fnn_eval_traced(f, {-1.0, 2.0});
    REQUIRE(y == Vec{0.0, 2.0});
    REQUIRE(t.relu_bits == std::vector<std::vector<uint8_t>>{{0, 1}});

    Fnn g;
    g.input_dim = 2;
    g.output_dim = 1;
    g.layers.push_back(MaxPoolLayer{{{0, 1}}, 2});
    auto [y2, t2] = fnn_eval_traced(g, {3.0, 5.0});
    REQUIRE(t2.pool_winners == std::vector<std::vector<int>>{{1}});
}

TEST_CASE("relu at exactly zero records an inactive bit", "[fnn]") {
    Fnn f;
    f.input_dim = 1;
    f.output_dim = 1;
    f.layers.push_back(ReluLayer{1});
    auto [y, t] = fnn_eval_traced(f, {0.0});
    REQUIRE(t.relu_bits[0][0] == 0);
}

TEST_CASE("max ties select the lowest partition index", "[fnn]") {
    Fnn f;
    f.input_dim = 2;
    f.output_dim = 1;
    f.layers.push_back(MaxPoolLayer{{{0, 1}}, 2});
    auto [y, t] = fnn_eval_traced(f, {4.0, 4.0});
    REQUIRE(t.pool_winners[0][0] == 0);
}

TEST_CASE("region of identity+relu with active trace", "[fnn]") {
    Fnn f;
    f.input_dim = 1;
    f.output_dim = 1;
    f.layers.push_back(ReluLayer{1});
    auto [y, t] = fnn_eval_traced(f, {2.0});
    LinearRegion r = region_of(f, t);
    REQUIRE(r.constraints.size() == 1);
    REQUIRE(r.constraints[0].c == Vec{-1.0});
    REQUIRE(r.constraints[0].d == 0.0);
    REQUIRE(r.constraints[0].strict);
    REQUIRE(r.W == mat({{1}}));
}

TEST_CASE("region of maxpool winner over identity", "[fnn]") {
    Fnn f;
    f.input_dim = 2;
    f.output_dim = 1;
    f.layers.push_back(MaxPoolLayer{{{0, 1}}, 2});
    auto [y, t] = fnn_eval_traced(f, {5.0, 3.0});
    LinearRegion r = region_of(f, t);
    REQUIRE(r.constraints.size() == 1);
    REQUIRE(r.constraints[0].c == Vec{-1.0, 1.0});  // x1 - x0 <= 0
    REQUIRE(r.constraints[0].d == 0.0);
    REQUIRE(r.W == mat({{1, 0}}));
}

TEST_CASE("region soundness and membership on random nets", "[fnn]") {
    Rng rng(1234);
    for (int t = 0; t < 1000; ++t) {
        Rng sub = rng.split(static_cast<uint64_t>(t));
        Fnn f = random_fnn(sub, 3, 2);
        Vec x{sub.uniform(-3, 3), sub.uniform(-3, 3), sub.uniform(-3, 3)};
        auto [y, trace] = fnn_eval_traced(f, x);
        LinearRegion region = region_of(f, trace);
        // the generating input satisfies its own region
        for (const LinearConstraint& c : region.constraints) REQUIRE(satisfies(c, x, 1e-12));
        // the affine map reproduces the network at the generating input
        REQUIRE(max_abs_diff(region.apply(x), y) < 1e-9);
        // and at other points of the region
        for (int k = 0; k < 5; ++k) {
            Vec x2 = x;
            for (double& v : x2) v += sub.uniform(-0.05, 0.05);
            bool inside = true;
            for (const LinearConstraint& c : region.constraints)
                if (!satisfies(c, x2)) { inside = false; break; }
            if (!inside) continue;
            REQUIRE(max_abs_diff(region.apply(x2), fnn_eval(f, x2)) < 1e-9);
        }
    }
}
