#pragma once

#include <memory>
#include <string>
#include <vector>

#include "msgcn/common.hpp"
#include "msgcn/data.hpp"
#include "msgcn/gradcheck.hpp"
#include "msgcn/graph.hpp"
#include "msgcn/layers.hpp"
#include "msgcn/loss.hpp"
#include "msgcn/models.hpp"
#include "msgcn/ops.hpp"

namespace msgcn {
namespace checks {

/// Named finite-difference scenarios covering every differentiable layer,
/// exposed both to the self-verification command and to the test suites.
/// Each instance draws its own small shapes, parameters and inputs from the
/// seed and returns the max relative gradient error.
inline const std::vector<std::string>& layer_check_names() {
    static const std::vector<std::string> names{
        "matmul",
        "elementwise",
        "softmax",
        "batch_norm_train",
        "batch_norm_eval",
        "conv_1x1",
        "temporal_conv_causal",
        "temporal_conv_acausal",
        "graph_conv_elementwise",
        "graph_conv_right_multiply",
        "lstm_step",
        "bilstm_layer",
        "tcn_block",
        "stgcn_block",
        "ms_gcn_end_to_end",
    };
    return names;
}

namespace detail {

// A probe step that straddles a ReLU or clamp kink inflates the finite
// difference even though the analytic gradient is exact there; a genuinely
// wrong gradient keeps its error as the step shrinks. Failures at the default
// step are therefore confirmed at two smaller steps before being reported.
inline double step_refined_error(const std::function<NodeId(Tape&)>& build,
                                 const std::vector<Parameter*>& params) {
    const double err = grad_check(build, params, 1e-5);
    if (err < 1e-4) return err;
    const double refined = std::max(grad_check(build, params, 1e-6),
                                    grad_check(build, params, 1e-7));
    return refined < 1e-6 ? refined : err;
}

inline Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Random linear functional so the whole Jacobian is probed, not just row sums.
inline NodeId weighted_sum(Tape& tape, NodeId x, const Tensor& w) {
    return ops::sum_all(tape, ops::mul(tape, x, tape.constant(w)));
}

inline GraphLayout random_layout(Rng& rng) {
    GraphLayout g;
    g.num_nodes = rng.uniform_int(2, 5);
    g.root = rng.uniform_int(0, g.num_nodes - 1);
    for (int i = 1; i < g.num_nodes; ++i) g.edges.emplace_back(rng.uniform_int(0, i - 1), i);
    return g;
}

}  // namespace detail

inline double layer_check_instance(const std::string& name, std::uint64_t seed) {
    Rng rng(seed);
    using detail::random_tensor;
    using detail::weighted_sum;

    if (name == "matmul") {
        const int m = rng.uniform_int(2, 5), k = rng.uniform_int(2, 5), n = rng.uniform_int(2, 5);
        Parameter a(random_tensor(rng, {m, k}), "a");
        Parameter b(random_tensor(rng, {k, n}), "b");
        const Tensor w = random_tensor(rng, {m, n});
        return detail::step_refined_error(
            [&](Tape& t) {
                return weighted_sum(t, ops::tanh_act(t, ops::matmul(t, t.use(a), t.use(b))), w);
            },
            {&a, &b});
    }
    if (name == "elementwise") {
        const int n = rng.uniform_int(2, 8);
        Parameter x(random_tensor(rng, {n}, -2.0, 2.0), "x");
        Parameter y(random_tensor(rng, {n}, -2.0, 2.0), "y");
        Parameter pos(random_tensor(rng, {n}, 0.3, 2.0), "pos");
        const Tensor w = random_tensor(rng, {n});
        return detail::step_refined_error(
            [&](Tape& t) {
                NodeId v = ops::add(t, ops::mul(t, t.use(x), ops::sigmoid(t, t.use(y))),
                                    ops::tanh_act(t, t.use(x)));
                v = ops::add(t, v, ops::log_act(t, t.use(pos)));
                return weighted_sum(t, v, w);
            },
            {&x, &y, &pos});
    }
    if (name == "softmax") {
        const int T = rng.uniform_int(2, 6), L = rng.uniform_int(2, 5);
        Parameter x(random_tensor(rng, {T, L}, -2.0, 2.0), "x");
        const Tensor w = random_tensor(rng, {T, L});
        return detail::step_refined_error(
            [&](Tape& t) { return weighted_sum(t, ops::softmax_rows(t, t.use(x)), w); }, {&x});
    }
    if (name == "batch_norm_train" || name == "batch_norm_eval") {
        const int T = rng.uniform_int(3, 8), C = rng.uniform_int(2, 4);
        const Mode mode = name == "batch_norm_train" ? Mode::kTrain : Mode::kEval;
        BatchNorm bn(C, "bn");
        for (int c = 0; c < C; ++c) {
            bn.running_mean()[c] = rng.uniform(-0.5, 0.5);
            bn.running_var()[c] = rng.uniform(0.5, 1.5);
        }
        Parameter x(random_tensor(rng, {T, C}, -2.0, 2.0), "x");
        std::vector<Parameter*> params{&x};
        for (Parameter* p : bn.params()) params.push_back(p);
        const Tensor w = random_tensor(rng, {T, C});
        return detail::step_refined_error(
            [&](Tape& t) { return weighted_sum(t, bn.forward(t, t.use(x), mode), w); }, params);
    }
    if (name == "conv_1x1") {
        const int T = rng.uniform_int(2, 5), N = rng.uniform_int(1, 4);
        const int ci = rng.uniform_int(1, 3), co = rng.uniform_int(1, 4);
        Conv1x1 conv(ci, co, rng, "conv");
        Parameter x(random_tensor(rng, {T, N, ci}), "x");
        std::vector<Parameter*> params{&x};
        for (Parameter* p : conv.params()) params.push_back(p);
        const Tensor w = random_tensor(rng, {T, N, co});
        return detail::step_refined_error([&](Tape& t) { return weighted_sum(t, conv.forward(t, t.use(x)), w); },
                          params);
    }
    if (name == "temporal_conv_causal" || name == "temporal_conv_acausal") {
        const bool causal = name == "temporal_conv_causal";
        const int T = rng.uniform_int(4, 9);
        const int ci = rng.uniform_int(1, 3), co = rng.uniform_int(1, 3);
        const int d = rng.uniform_int(1, 3);
        TemporalConv conv(ConvSpec{3, d, causal, ci, co}, rng, "tconv");
        Parameter x(random_tensor(rng, {T, ci}), "x");
        std::vector<Parameter*> params{&x};
        for (Parameter* p : conv.params()) params.push_back(p);
        const Tensor w = random_tensor(rng, {T, co});
        return detail::step_refined_error([&](Tape& t) { return weighted_sum(t, conv.forward(t, t.use(x)), w); },
                          params);
    }
    if (name == "graph_conv_elementwise" || name == "graph_conv_right_multiply") {
        const MaskMode mode = name == "graph_conv_elementwise" ? MaskMode::kElementwise
                                                               : MaskMode::kRightMultiply;
        const GraphLayout layout = detail::random_layout(rng);
        auto adjacency = std::make_shared<PartitionedAdjacency>(build_adjacency(layout));
        const int T = rng.uniform_int(2, 4), C = rng.uniform_int(2, 3);
        GraphConv gcn(adjacency, C, rng, "gcn", mode);
        // Perturb the masks away from all-ones so their gradient is generic.
        std::vector<Parameter*> params = gcn.params();
        for (Parameter* p : params) {
            if (p->name.find(".m_") != std::string::npos) {
                for (int i = 0; i < p->value.numel(); ++i) p->value[i] += rng.uniform(-0.3, 0.3);
            }
        }
        Parameter x(random_tensor(rng, {T, layout.num_nodes, C}), "x");
        params.push_back(&x);
        const Tensor w = random_tensor(rng, {T, layout.num_nodes, C});
        return detail::step_refined_error([&](Tape& t) { return weighted_sum(t, gcn.forward(t, t.use(x)), w); },
                          params);
    }
    if (name == "lstm_step") {
        const int ci = rng.uniform_int(1, 3), H = rng.uniform_int(1, 3);
        LstmCell cell(ci, H, rng, "lstm");
        Parameter x(random_tensor(rng, {1, ci}), "x");
        Parameter h0(random_tensor(rng, {1, H}), "h0");
        Parameter c0(random_tensor(rng, {1, H}), "c0");
        std::vector<Parameter*> params{&x, &h0, &c0};
        for (Parameter* p : cell.params()) params.push_back(p);
        const Tensor wh = random_tensor(rng, {1, H});
        const Tensor wc = random_tensor(rng, {1, H});
        return detail::step_refined_error(
            [&](Tape& t) {
                const LstmCell::State s = cell.step(t, t.use(x), {t.use(h0), t.use(c0)});
                return ops::add(t, weighted_sum(t, s.h, wh), weighted_sum(t, s.c, wc));
            },
            params);
    }
    if (name == "bilstm_layer") {
        const int T = rng.uniform_int(2, 4), ci = rng.uniform_int(1, 2);
        const int H = rng.uniform_int(1, 2);
        BiLstmLayer layer(ci, H, rng, "bilstm");
        Parameter x(random_tensor(rng, {T, ci}), "x");
        std::vector<Parameter*> params{&x};
        for (Parameter* p : layer.params()) params.push_back(p);
        const Tensor w = random_tensor(rng, {T, 2 * H});
        return detail::step_refined_error([&](Tape& t) { return weighted_sum(t, layer.forward(t, t.use(x)), w); },
                          params);
    }
    if (name == "tcn_block") {
        const int T = rng.uniform_int(4, 8), C = rng.uniform_int(2, 4);
        TcnBlock block(C, 3, rng.uniform_int(1, 2), false, rng, "block");
        Parameter x(random_tensor(rng, {T, C}), "x");
        std::vector<Parameter*> params{&x};
        for (Parameter* p : block.params()) params.push_back(p);
        const Tensor w = random_tensor(rng, {T, C});
        return detail::step_refined_error(
            [&](Tape& t) { return weighted_sum(t, block.forward(t, t.use(x), Mode::kTrain), w); },
            params);
    }
    if (name == "stgcn_block") {
        const GraphLayout layout = chain_layout(5);
        auto adjacency = std::make_shared<PartitionedAdjacency>(build_adjacency(layout));
        const int T = 8, C = 2;
        StgcnBlock block(adjacency, C, 3, rng.uniform_int(1, 2), false, rng, "block");
        Parameter x(random_tensor(rng, {T, 5, C}), "x");
        std::vector<Parameter*> params{&x};
        for (Parameter* p : block.params()) params.push_back(p);
        const Tensor w = random_tensor(rng, {T, 5, C});
        return detail::step_refined_error(
            [&](Tape& t) { return weighted_sum(t, block.forward(t, t.use(x), Mode::kTrain), w); },
            params);
    }
    if (name == "ms_gcn_end_to_end") {
        ModelConfig cfg;
        cfg.kind = ModelKind::kMsGcn;
        cfg.filters = 4;
        cfg.layers_per_stage = 2;
        cfg.refinement_stages = 3;
        cfg.num_classes = 2;
        cfg.input_channels = 2;
        cfg.layout = chain_layout(3);
        cfg.init_seed = seed;
        Model model(cfg);
        model.set_mode(Mode::kTrain);
        const int T = 8;
        const Tensor input = random_tensor(rng, {T, 3, 2});
        std::vector<int> labels(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) labels[static_cast<std::size_t>(t)] = rng.uniform_int(0, 1);
        LossConfig loss_cfg;
        // Finite differences see the full derivative, so the smoothing term
        // must differentiate through both samples here.
        loss_cfg.detach_previous = false;
        return detail::step_refined_error(
            [&](Tape& t) {
                const Model::StagedNodes staged = model.forward(t, input);
                return combined_loss(t, staged.stages, labels, loss_cfg);
            },
            model.params());
    }
    throw ConfigError("unknown layer check '" + name + "'");
}

struct LayerCheckResult {
    std::string name;
    int instances = 0;
    double max_rel_err = 0.0;
};

inline LayerCheckResult layer_check(const std::string& name, int instances,
                                    std::uint64_t base_seed = 1) {
    LayerCheckResult r;
    r.name = name;
    r.instances = instances;
    for (int i = 0; i < instances; ++i) {
        r.max_rel_err = std::max(r.max_rel_err, layer_check_instance(name, base_seed + i));
    }
    return r;
}

}  // namespace checks
}  // namespace msgcn
