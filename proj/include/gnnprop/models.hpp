#pragma once

#include "gnnprop/gnn.hpp"

namespace gnnprop {

// Saturation constant used by the traversal reference nets. Feature gaps in
// generated data stay above 1/C so the gadgets are exact.
inline constexpr double kBigC = 100.0;

namespace detail {

inline Mat mat_from(std::initializer_list<std::initializer_list<double>> rows) {
    int r = static_cast<int>(rows.size());
    int c = r == 0 ? 0 : static_cast<int>(rows.begin()->size());
    Mat m(r, c);
    int i = 0;
    for (const auto& row : rows) {
        int j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

inline Fnn mlp(std::vector<Layer> layers) {
    Fnn f;
    f.input_dim = layer_input_dim(layers.front());
    f.output_dim = layer_output_dim(layers.back());
    f.layers = std::move(layers);
    f.validate();
    return f;
}

}  // namespace detail

/// Parallel BFS: one max-aggregation layer with a self loop computes
/// y_i = max over incoming neighborhood (plus self) of the visited flag, then
/// a saturating two-logit readout makes the visited/unvisited decision a
/// property of the activation region rather than of the data.
inline Gnn build_bfs_reference() {
    using detail::mat_from;
    Gnn m;
    m.node_dim = 1;
    m.edge_dim = 0;
    GnnLayer l;
    l.msg = {make_affine_net(mat_from({{1, 0}}), {0})};  // message = s_src
    l.agg = Agg::Max;
    l.self_loop = true;
    // (s_self, M) -> (relu(1 - 2M), relu(2M - 1))
    l.upd = detail::mlp({AffineLayer{mat_from({{0, -2}, {0, 2}}), {1, -1}}, ReluLayer{2}});
    m.layers.push_back(std::move(l));
    m.objectives["state"] = {0, 2, TaskKind::Classification};
    m.validate();
    return m;
}

/// Bellman-Ford: the BFS state head plus a distance head computing
/// min over N(i) u {i} of (d_j + w_ji), expressed as -max(-(d_j + w_ji)).
inline Gnn build_bellman_ford_reference() {
    using detail::mat_from;
    Gnn m;
    m.node_dim = 2;  // (s, d)
    m.edge_dim = 1;  // w
    GnnLayer l;
    // msg = (s_src, -(d_src + w)); the synthetic self loop carries w = 0.
    l.msg = {make_affine_net(mat_from({{1, 0, 0, 0, 0}, {0, -1, 0, 0, -1}}), {0, 0})};
    l.agg = Agg::Max;
    l.self_loop = true;
    // (s, d, maxS, maxND) -> (relu(1 - 2 maxS), relu(2 maxS - 1), relu(-maxND))
    l.upd = detail::mlp({AffineLayer{mat_from({{0, 0, -2, 0}, {0, 0, 2, 0}, {0, 0, 0, -1}}), {1, -1, 0}},
                         ReluLayer{3}});
    m.layers.push_back(std::move(l));
    m.objectives["dist"] = {2, 3, TaskKind::Regression};
    m.objectives["state"] = {0, 2, TaskKind::Classification};
    m.validate();
    return m;
}

/// DFS over typed edges (0 = forward, 1 = backward). Node features are
/// (s0, s1, s2, t, p): one-hot visit state, current-target flag, priority.
/// Layer 1 computes the next-state pieces plus the best-priority forward
/// unvisited (lfu) and backward under-visiting (lbu) neighbor summaries;
/// layer 2 resolves which node becomes the next target and emits saturated
/// logits for both heads.
inline Gnn build_dfs_reference() {
    using detail::mat_from;
    const double C = kBigC;
    Gnn m;
    m.node_dim = 5;
    m.edge_dim = 0;

    GnnLayer l1;
    // forward messages: (-(1 - s0_j + t_j), p_j - C(1 - s0_j + t_j))
    l1.msg.push_back(make_affine_net(
        mat_from({{1, 0, 0, -1, 0, 0, 0, 0, 0, 0}, {C, 0, 0, -C, 1, 0, 0, 0, 0, 0}}), {-1, -C}));
    // backward messages: (p_j - C(1 - s1_j + t_j), 0)
    l1.msg.push_back(make_affine_net(
        mat_from({{0, C, 0, -C, 1, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 0, 0, 0, 0, 0, 0}}), {-C, 0}));
    l1.agg = Agg::Max;
    l1.self_loop = false;
    // inputs: (s0, s1, s2, t, p, M1, M2, M3, Mz)
    // M1 = max_fwd -(1 - s0 + t)  (so -M1 is the min), M2 = lfu pre-relu,
    // M3 = lbu inner max pre-relu.
    l1.upd = detail::mlp(
        {AffineLayer{mat_from({{1, 0, 0, -C, 0, 0, 0, 0, 0},       // a  = s0 - C t
                               {0, 0, 0, C, 0, C, 0, 0, 0},        // b1 = C t + C M1 + (1 - C)
                               {0, 1, 0, -C, 0, 0, 0, 0, 0},       // b2 = s1 - C t
                               {0, 0, 0, 1, 0, 0, 0, 0, 0},        // t
                               {0, 0, 0, 0, 1, 0, 0, 0, 0},        // p
                               {0, 0, 0, 0, 0, 0, 1, 0, 0},        // M2
                               {0, 0, 0, 0, 0, 0, 0, 1, 0}}),      // M3
                     {0, 1 - C, 0, 0, 0, 0, 0}},
         ReluLayer{7},
         AffineLayer{mat_from({{1, 0, 0, 0, 0, 0, 0},              // s'0
                               {0, 1, 1, 0, 0, 0, 0},              // s'1
                               {-1, -1, -1, 0, 0, 0, 0},           // s'2 = 1 - s'0 - s'1
                               {0, 0, 0, 1, 0, 0, 0},              // t
                               {0, 0, 0, 0, 1, 0, 0},              // p
                               {0, 0, 0, 0, 0, 1, 0},              // lfu
                               {0, 0, 0, 0, 0, -C, 1}}),           // lbu = relu(M3) - C lfu
                     {0, 0, 1, 0, 0, 0, 0}}});
    m.layers.push_back(std::move(l1));

    // Layer 2 node features: (s'0, s'1, s'2, t, p, lfu, lbu).
    auto target_claim_msg = [&](int summary_idx) {
        // 1 - C(1 - t_j + |summary_j - p_i|) - C t_i, built from relus of
        // (summary_j - p_i), (p_i - summary_j), (1 - t_j), (t_i).
        Mat a1(4, 14);
        a1(0, summary_idx) = 1;
        a1(0, 7 + 4) = -1;
        a1(1, summary_idx) = -1;
        a1(1, 7 + 4) = 1;
        a1(2, 3) = -1;
        a1(3, 7 + 3) = 1;
        return detail::mlp({AffineLayer{a1, {0, 0, 1, 0}}, ReluLayer{4},
                            AffineLayer{mat_from({{-C, -C, -C, -C}}), {1}}});
    };
    GnnLayer l2;
    l2.msg.push_back(target_claim_msg(6));  // forward edges consult lbu_j
    l2.msg.push_back(target_claim_msg(5));  // backward edges consult lfu_j
    l2.agg = Agg::Max;
    l2.self_loop = false;
    // inputs: (x_self 7, Mf, Mb); t' = relu(Mb) + relu(Mf), then both heads
    // are re-expressed as saturated one-hot logits.
    l2.upd = detail::mlp(
        {AffineLayer{mat_from({{2, 0, 0, 0, 0, 0, 0, 0, 0},        // 2 s'0 - 1
                               {0, 2, 0, 0, 0, 0, 0, 0, 0},        // 2 s'1 - 1
                               {0, 0, 2, 0, 0, 0, 0, 0, 0},        // 2 s'2 - 1
                               {0, 0, 0, 0, 0, 0, 0, 0, 1},        // Mb
                               {0, 0, 0, 0, 0, 0, 0, 1, 0}}),      // Mf
                     {-1, -1, -1, 0, 0}},
         ReluLayer{5},
         AffineLayer{mat_from({{1, 0, 0, 0, 0},                    // L0
                               {0, 1, 0, 0, 0},                    // L1
                               {0, 0, 1, 0, 0},                    // L2
                               {0, 0, 0, -2, -2},                  // 1 - 2 t'
                               {0, 0, 0, 2, 2}}),                  // 2 t' - 1
                     {0, 0, 0, 1, -1}},
         ReluLayer{5}});
    m.layers.push_back(std::move(l2));

    m.objectives["next_state"] = {0, 3, TaskKind::Classification};
    m.objectives["next_target"] = {3, 5, TaskKind::Classification};
    m.validate();
    return m;
}

/// Node classifier with a planted trigger detector. The benign rule is the
/// sign of the mean incoming feature (clamped so no input can override the
/// detector); a neighbor whose feature sits within 0.01 of the trigger value
/// forces the target class.
inline Gnn build_backdoor_gnn(double trigger_value, int target_class) {
    using detail::mat_from;
    Gnn m;
    m.node_dim = 1;
    m.edge_dim = 0;
    GnnLayer l1;
    // msg = (f_src, bump(f_src)) with bump(f) = relu(1 - 100 |f - v*|)
    l1.msg = {detail::mlp(
        {AffineLayer{mat_from({{1, 0}, {-1, 0}, {1, 0}, {-1, 0}}), {0, 0, -trigger_value, trigger_value}},
         ReluLayer{4},
         AffineLayer{mat_from({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, -100, -100}}), {0, 0, 1}},
         ReluLayer{3},
         AffineLayer{mat_from({{1, -1, 0}, {0, 0, 1}}), {0, 0}}})};
    l1.agg = Agg::Mean;
    l1.self_loop = true;
    l1.upd = make_affine_net(mat_from({{0, 1, 0}, {0, 0, 1}}), {0, 0});  // (meanF, meanBump)
    m.layers.push_back(std::move(l1));

    GnnLayer l2;  // purely local readout: messages are zero-valued
    l2.msg = {make_affine_net(Mat(1, 4), {0})};
    l2.agg = Agg::Sum;
    l2.self_loop = false;
    double d0 = target_class == 0 ? 3.0 : -3.0;
    double d1 = target_class == 1 ? 3.0 : -3.0;
    // benign = clamp(50 meanF, -1, 1); trig = min(relu(50 meanBump), 1)
    l2.upd = detail::mlp(
        {AffineLayer{mat_from({{50, 0, 0}, {50, 0, 0}, {0, 50, 0}, {0, 50, 0}}), {1, -1, 0, -1}},
         ReluLayer{4},
         AffineLayer{mat_from({{-1, 1, d0, -d0}, {1, -1, d1, -d1}}), {1, -1}},
         ReluLayer{2}});
    m.layers.push_back(std::move(l2));
    m.objectives["class"] = {0, 2, TaskKind::Classification};
    m.validate();
    return m;
}

}  // namespace gnnprop
