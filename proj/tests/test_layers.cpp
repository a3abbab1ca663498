#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "msgcn/checks.hpp"
#include "msgcn/gradcheck.hpp"
#include "msgcn/graph.hpp"
#include "msgcn/layers.hpp"
#include "msgcn/ops.hpp"

using namespace msgcn;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Naive nested-loop convolution, independent of the layer implementation.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec) {
    const int T = x.dim(0), ci = x.dim(1), co = w.dim(2);
    Tensor out({T, co});
    for (int t = 0; t < T; ++t) {
        for (int o = 0; o < co; ++o) {
            double acc = b[o];
            for (int i = 0; i < spec.kernel; ++i) {
                const int s = spec.causal ? t - spec.dilation * i
                                          : t + spec.dilation * (i - (spec.kernel - 1) / 2);
                if (s < 0 || s >= T) continue;
                for (int c = 0; c < ci; ++c) acc += w.at(i, c, o) * x.at(s, c);
            }
            out.at(t, o) = acc;
        }
    }
    return out;
}

Parameter* find_param(std::vector<Parameter*> params, const std::string& suffix) {
    for (Parameter* p : params) {
        if (p->name.size() >= suffix.size() &&
            p->name.compare(p->name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            return p;
        }
    }
    FAIL("missing parameter " + suffix);
    return nullptr;
}

TemporalConv make_conv(const ConvSpec& spec, const Tensor& w, const Tensor& b) {
    Rng rng(1);
    TemporalConv conv(spec, rng, "conv");
    find_param(conv.params(), "conv.w")->value = w;
    find_param(conv.params(), "conv.b")->value = b;
    return conv;
}

Tensor frame(const Tensor& x, int t) {
    const int N = x.dim(1), C = x.dim(2);
    Tensor out({N, C});
    for (int i = 0; i < N * C; ++i) out[i] = x[t * N * C + i];
    return out;
}

}  // namespace

TEST_CASE("conv spec validation", "[layers]") {
    Rng rng(1);
    REQUIRE_THROWS_AS(TemporalConv(ConvSpec{4, 1, false, 2, 2}, rng, "c"), ConfigError);
    REQUIRE_NOTHROW(TemporalConv(ConvSpec{4, 1, true, 2, 2}, rng, "c"));
    REQUIRE_THROWS_AS(TemporalConv(ConvSpec{3, 0, true, 2, 2}, rng, "c"), ConfigError);
}

TEST_CASE("dilated temporal convolution worked cases", "[layers]") {
    const Tensor x({4, 1}, {1, 2, 3, 4});
    const Tensor ones_kernel = Tensor::ones({3, 1, 1});
    const Tensor zero_bias = Tensor::zeros({1});

    struct Case {
        ConvSpec spec;
        std::vector<double> expect;
    };
    // Frozen from the naive oracle below, which is asserted alongside.
    const Case cases[] = {
        {{3, 1, true, 1, 1}, {1, 3, 6, 9}},
        {{3, 1, false, 1, 1}, {3, 6, 9, 7}},
        {{3, 2, true, 1, 1}, {1, 2, 4, 6}},
    };
    for (const Case& c : cases) {
        TemporalConv conv = make_conv(c.spec, ones_kernel, zero_bias);
        Tape tape;
        const Tensor& y = tape.value(conv.forward(tape, tape.constant(x)));
        REQUIRE(y.values() == c.expect);
        REQUIRE(naive_conv(x, ones_kernel, zero_bias, c.spec).values() == c.expect);
    }
}

TEST_CASE("temporal convolution matches the naive oracle on random cases", "[layers]") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        ConvSpec spec;
        spec.kernel = 3;
        spec.dilation = rng.uniform_int(1, 4);
        spec.causal = rng.uniform_int(0, 1) == 1;
        spec.channels_in = rng.uniform_int(1, 3);
        spec.channels_out = rng.uniform_int(1, 3);
        const int T = rng.uniform_int(1, 9);
        const Tensor x = random_tensor(rng, {T, spec.channels_in});
        const Tensor w = random_tensor(rng, {spec.kernel, spec.channels_in, spec.channels_out});
        const Tensor b = random_tensor(rng, {spec.channels_out});
        TemporalConv conv = make_conv(spec, w, b);
        Tape tape;
        const Tensor& y = tape.value(conv.forward(tape, tape.constant(x)));
        const Tensor ref = naive_conv(x, w, b, spec);
        for (int i = 0; i < y.numel(); ++i) {
            REQUIRE_THAT(y[i], Catch::Matchers::WithinAbs(ref[i], 1e-12));
        }
    }
}

TEST_CASE("temporal convolution applies per node with shared weights", "[layers]") {
    Rng rng(9);
    ConvSpec spec{3, 2, false, 2, 3};
    const Tensor w = random_tensor(rng, {3, 2, 3});
    const Tensor b = random_tensor(rng, {3});
    const int T = 6, N = 4;
    const Tensor x = random_tensor(rng, {T, N, 2});
    TemporalConv conv = make_conv(spec, w, b);
    Tape tape;
    const Tensor& y = tape.value(conv.forward(tape, tape.constant(x)));
    REQUIRE(y.shape() == std::vector<int>{T, N, 3});
    for (int n = 0; n < N; ++n) {
        Tensor lane({T, 2});
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < 2; ++c) lane.at(t, c) = x.at(t, n, c);
        const Tensor ref = naive_conv(lane, w, b, spec);
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < 3; ++c)
                REQUIRE_THAT(y.at(t, n, c), Catch::Matchers::WithinAbs(ref.at(t, c), 1e-12));
    }
}

TEST_CASE("causal layers ignore future perturbations", "[layers]") {
    Rng rng(13);
    ConvSpec spec{3, 4, true, 2, 2};
    TemporalConv conv = make_conv(spec, random_tensor(rng, {3, 2, 2}), random_tensor(rng, {2}));
    const int T = 20, cut = 11;
    Tensor x = random_tensor(rng, {T, 2});
    Tensor x2 = x;
    for (int t = cut; t < T; ++t)
        for (int c = 0; c < 2; ++c) x2.at(t, c) += rng.uniform(0.5, 1.0);
    Tape t1, t2;
    const Tensor& y1 = t1.value(conv.forward(t1, t1.constant(x)));
    const Tensor& y2 = t2.value(conv.forward(t2, t2.constant(x2)));
    for (int t = 0; t < cut; ++t)
        for (int c = 0; c < 2; ++c) REQUIRE(y1.at(t, c) == y2.at(t, c));
    bool changed = false;
    for (int t = cut; t < T; ++t)
        for (int c = 0; c < 2; ++c) changed |= y1.at(t, c) != y2.at(t, c);
    REQUIRE(changed);
}

TEST_CASE("acausal impulse response spans exactly the dilation sum", "[layers]") {
    // Three acausal layers, dilations 1, 2, 4: reach = 1 + 2 + 4 = 7.
    Rng rng(17);
    const int T = 31, mid = 15;
    std::vector<TemporalConv> stack;
    for (int d : {1, 2, 4}) {
        stack.push_back(make_conv(ConvSpec{3, d, false, 1, 1}, Tensor::ones({3, 1, 1}),
                                  Tensor::zeros({1})));
    }
    Tensor x({T, 1});
    x.at(mid, 0) = 1.0;
    Tape tape;
    NodeId y = tape.constant(x);
    for (TemporalConv& c : stack) y = c.forward(tape, y);
    const Tensor& out = tape.value(y);
    for (int t = 0; t < T; ++t) {
        if (std::abs(t - mid) <= 7) {
            REQUIRE(out.at(t, 0) > 0.0);
        } else {
            REQUIRE(out.at(t, 0) == 0.0);
        }
    }
}

TEST_CASE("1x1 convolution identity, bias and oracle", "[layers]") {
    Rng rng(21);
    {
        Conv1x1 conv(2, 2, rng, "conv");
        find_param(conv.params(), "conv.w")->value = Tensor({2, 2}, {1, 0, 0, 1});
        const Tensor x = random_tensor(rng, {4, 2});
        Tape tape;
        REQUIRE(tape.value(conv.forward(tape, tape.constant(x))).values() == x.values());
    }
    {
        Conv1x1 conv(2, 3, rng, "conv");
        find_param(conv.params(), "conv.w")->value = Tensor::zeros({2, 3});
        find_param(conv.params(), "conv.b")->value = Tensor({3}, {1.5, -2.0, 0.25});
        Tape tape;
        const Tensor& y = tape.value(conv.forward(tape, tape.constant(Tensor::ones({4, 2}))));
        for (int t = 0; t < 4; ++t) {
            REQUIRE(y.at(t, 0) == 1.5);
            REQUIRE(y.at(t, 1) == -2.0);
            REQUIRE(y.at(t, 2) == 0.25);
        }
    }
    {
        // Rank-3 input equals an explicit per-node matrix product.
        Conv1x1 conv(2, 5, rng, "conv");
        const Tensor x = random_tensor(rng, {4, 3, 2});
        const Tensor& w = find_param(conv.params(), "conv.w")->value;
        const Tensor& b = find_param(conv.params(), "conv.b")->value;
        Tape tape;
        const Tensor& y = tape.value(conv.forward(tape, tape.constant(x)));
        REQUIRE(y.shape() == std::vector<int>{4, 3, 5});
        for (int t = 0; t < 4; ++t) {
            for (int n = 0; n < 3; ++n) {
                for (int o = 0; o < 5; ++o) {
                    double acc = b[o];
                    for (int c = 0; c < 2; ++c) acc += x.at(t, n, c) * w.at(c, o);
                    REQUIRE_THAT(y.at(t, n, o), Catch::Matchers::WithinAbs(acc, 1e-12));
                }
            }
        }
        const Tensor bad = random_tensor(rng, {4, 3});
        REQUIRE_THROWS_AS(conv.forward(tape, tape.constant(bad)), DimensionError);
    }
}

TEST_CASE("batch norm collapses constant channels and normalizes", "[layers]") {
    {
        BatchNorm bn(2, "bn");
        Tensor x({5, 2});
        for (int t = 0; t < 5; ++t) {
            x.at(t, 0) = 3.25;
            x.at(t, 1) = -7.5;
        }
        Tape tape;
        const Tensor& y = tape.value(bn.forward(tape, tape.constant(x), Mode::kTrain));
        for (int i = 0; i < y.numel(); ++i) REQUIRE(y[i] == 0.0);
    }
    {
        BatchNorm bn(1, "bn");
        // Population mean 5, population std exactly 2.
        Tensor x({4, 1}, {3, 7, 3, 7});
        Tape tape;
        const Tensor& y = tape.value(bn.forward(tape, tape.constant(x), Mode::kTrain));
        double mean = 0.0;
        for (int i = 0; i < 4; ++i) mean += y[i] / 4;
        double var = 0.0;
        for (int i = 0; i < 4; ++i) var += (y[i] - mean) * (y[i] - mean) / 4;
        REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(0.0, 1e-12));
        // Output std is sigma / sqrt(sigma^2 + eps); exact value asserted, and
        // it sits within the eps-induced 2e-6 of 1.
        REQUIRE_THAT(std::sqrt(var), Catch::Matchers::WithinAbs(2.0 / std::sqrt(4.0 + 1e-5), 1e-12));
        REQUIRE_THAT(std::sqrt(var), Catch::Matchers::WithinAbs(1.0, 2e-6));
    }
}

TEST_CASE("batch norm running statistics drive eval mode", "[layers]") {
    Rng rng(31);
    BatchNorm bn(2, "bn");
    const Tensor x = random_tensor(rng, {50, 2}, -2.0, 2.0);
    // A few training passes fold the batch statistics into the running ones.
    for (int i = 0; i < 200; ++i) {
        Tape tape;
        bn.forward(tape, tape.constant(x), Mode::kTrain);
    }
    Tape tape;
    const Tensor& y = tape.value(bn.forward(tape, tape.constant(x), Mode::kEval));
    for (int c = 0; c < 2; ++c) {
        double mean = 0.0;
        for (int t = 0; t < 50; ++t) mean += y.at(t, c) / 50;
        REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(0.0, 1e-6));
    }
}

TEST_CASE("graph conv identity and mask annihilation", "[layers]") {
    Rng rng(37);
    GraphLayout single;
    single.num_nodes = 1;
    single.root = 0;
    auto adjacency = std::make_shared<PartitionedAdjacency>(build_adjacency(single));
    {
        GraphConv gcn(adjacency, 3, rng, "gcn");
        find_param(gcn.params(), "gcn.w_self")->value = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
        const Tensor x = random_tensor(rng, {4, 1, 3});
        Tape tape;
        REQUIRE(tape.value(gcn.forward(tape, tape.constant(x))).values() == x.values());
    }
    {
        const GraphLayout chain = chain_layout(3);
        auto chain_adj = std::make_shared<PartitionedAdjacency>(build_adjacency(chain));
        GraphConv gcn(chain_adj, 2, rng, "gcn");
        for (const char* m : {"gcn.m_self", "gcn.m_closer", "gcn.m_farther"}) {
            find_param(gcn.params(), m)->value.fill(0.0);
        }
        const Tensor x = random_tensor(rng, {4, 3, 2});
        Tape tape;
        const Tensor& y = tape.value(gcn.forward(tape, tape.constant(x)));
        for (int i = 0; i < y.numel(); ++i) REQUIRE(y[i] == 0.0);
    }
}

TEST_CASE("graph conv with unit mask and one node is a pure channel map", "[layers]") {
    Rng rng(41);
    GraphLayout single;
    single.num_nodes = 1;
    single.root = 0;
    auto adjacency = std::make_shared<PartitionedAdjacency>(build_adjacency(single));
    GraphConv gcn(adjacency, 3, rng, "gcn");
    const Tensor w = find_param(gcn.params(), "gcn.w_self")->value;
    const Tensor x = random_tensor(rng, {5, 1, 3});
    Tape tape;
    const Tensor& y = tape.value(gcn.forward(tape, tape.constant(x)));
    Tape t2;
    const Tensor& ref = t2.value(
        ops::matmul(t2, t2.constant(Tensor({5, 3}, x.values())), t2.constant(w)));
    for (int i = 0; i < y.numel(); ++i) {
        REQUIRE_THAT(y[i], Catch::Matchers::WithinAbs(ref[i], 1e-12));
    }
}

TEST_CASE("graph conv against a dense matrix-product oracle", "[layers]") {
    Rng rng(43);
    const GraphLayout chain = chain_layout(3);
    auto adjacency = std::make_shared<PartitionedAdjacency>(build_adjacency(chain));
    const int T = 4, N = 3, C = 2;

    for (const MaskMode mode : {MaskMode::kElementwise, MaskMode::kRightMultiply}) {
        GraphConv gcn(adjacency, C, rng, "gcn", mode);
        // Non-trivial masks so both routes exercise them.
        for (const char* m : {"gcn.m_self", "gcn.m_closer", "gcn.m_farther"}) {
            Parameter* p = find_param(gcn.params(), m);
            for (int i = 0; i < p->value.numel(); ++i) p->value[i] = rng.uniform(0.5, 1.5);
        }
        const Tensor x = random_tensor(rng, {T, N, C});
        Tape tape;
        const Tensor& y = tape.value(gcn.forward(tape, tape.constant(x)));

        const char* weight_names[3] = {"gcn.w_self", "gcn.w_closer", "gcn.w_farther"};
        const char* mask_names[3] = {"gcn.m_self", "gcn.m_closer", "gcn.m_farther"};
        for (int t = 0; t < T; ++t) {
            // Oracle per frame via generic 2-D matmuls.
            Tape ot;
            NodeId acc = ot.constant(Tensor({N, C}));
            for (int p = 0; p < 3; ++p) {
                const Tensor& a = adjacency->matrices[static_cast<std::size_t>(p)];
                const Tensor& m = find_param(gcn.params(), mask_names[p])->value;
                const Tensor& w = find_param(gcn.params(), weight_names[p])->value;
                NodeId term;
                if (mode == MaskMode::kElementwise) {
                    Tensor masked({N, N});
                    for (int i = 0; i < N * N; ++i) masked[i] = a[i] * m[i];
                    term = ops::matmul(ot, ot.constant(masked), ot.constant(frame(x, t)));
                    term = ops::matmul(ot, term, ot.constant(w));
                } else {
                    Tensor mt({N, N});
                    for (int i = 0; i < N; ++i)
                        for (int j = 0; j < N; ++j) mt.at(i, j) = m.at(j, i);
                    term = ops::matmul(ot, ot.constant(a), ot.constant(frame(x, t)));
                    term = ops::matmul(ot, term, ot.constant(w));
                    term = ops::matmul(ot, ot.constant(mt), term);
                }
                acc = ops::add(ot, acc, term);
            }
            const Tensor& ref = ot.value(acc);
            for (int n = 0; n < N; ++n) {
                for (int c = 0; c < C; ++c) {
                    REQUIRE_THAT(y.at(t, n, c),
                                 Catch::Matchers::WithinAbs(ref.at(n, c), 1e-12));
                }
            }
        }
    }
}

TEST_CASE("tcn block zero case and residual definition", "[layers]") {
    Rng rng(47);
    TcnBlock block(3, 3, 2, false, rng, "block");
    {
        TcnBlock zeroed(3, 3, 2, false, rng, "zeroed");
        find_param(zeroed.params(), "zeroed.conv.w")->value.fill(0.0);
        Tape tape;
        const Tensor& y =
            tape.value(zeroed.forward(tape, tape.constant(Tensor::zeros({5, 3})), Mode::kTrain));
        for (int i = 0; i < y.numel(); ++i) REQUIRE(y[i] == 0.0);
    }
    {
        const Tensor x = random_tensor(rng, {6, 3});
        Tape tape;
        const Tensor y = tape.value(block.forward(tape, tape.constant(x), Mode::kTrain));
        // Residual definition: the output is exactly relu(BN(conv(x))) + x,
        // with the activation path recomposed from verified primitives.
        const Tensor cw = find_param(block.params(), "block.conv.w")->value;
        const Tensor cb = find_param(block.params(), "block.conv.b")->value;
        TemporalConv conv = make_conv(ConvSpec{3, 2, false, 3, 3}, cw, cb);
        BatchNorm bn(3, "bn");
        Tape t2;
        const NodeId z =
            ops::relu(t2, bn.forward(t2, conv.forward(t2, t2.constant(x)), Mode::kTrain));
        const Tensor& path = t2.value(z);
        for (int i = 0; i < y.numel(); ++i) {
            REQUIRE(y[i] == path[i] + x[i]);
        }
    }
}

TEST_CASE("stgcn block zero case and single-node reduction", "[layers]") {
    Rng rng(53);
    {
        const GraphLayout chain = chain_layout(4);
        auto adjacency = std::make_shared<PartitionedAdjacency>(build_adjacency(chain));
        StgcnBlock block(adjacency, 2, 3, 1, false, rng, "block");
        find_param(block.params(), "block.gcn.w_self")->value.fill(0.0);
        find_param(block.params(), "block.gcn.w_closer")->value.fill(0.0);
        find_param(block.params(), "block.gcn.w_farther")->value.fill(0.0);
        find_param(block.params(), "block.tconv.w")->value.fill(0.0);
        Tape tape;
        const Tensor& y = tape.value(
            block.forward(tape, tape.constant(Tensor::zeros({5, 4, 2})), Mode::kTrain));
        for (int i = 0; i < y.numel(); ++i) REQUIRE(y[i] == 0.0);
    }
    {
        // One node: the block is a channel map, BN, ReLU, then a temporal
        // block path, composed here from verified primitives.
        GraphLayout single;
        single.num_nodes = 1;
        single.root = 0;
        auto adjacency = std::make_shared<PartitionedAdjacency>(build_adjacency(single));
        const int T = 7, C = 2;
        StgcnBlock block(adjacency, C, 3, 2, false, rng, "block");
        const double mask = 1.3;
        find_param(block.params(), "block.gcn.m_self")->value.fill(mask);
        const Tensor x = random_tensor(rng, {T, 1, C});
        Tape tape;
        const Tensor& y = tape.value(block.forward(tape, tape.constant(x), Mode::kTrain));

        const Tensor w_self = find_param(block.params(), "block.gcn.w_self")->value;
        const Tensor tw = find_param(block.params(), "block.tconv.w")->value;
        const Tensor tb = find_param(block.params(), "block.tconv.b")->value;
        Tape ot;
        const Tensor x2d(std::vector<int>{T, C}, x.values());
        Tensor w_scaled = w_self;
        w_scaled.scale_(mask);
        NodeId z = ops::matmul(ot, ot.constant(x2d), ot.constant(w_scaled));
        BatchNorm bn1(C, "bn1"), bn2(C, "bn2");
        z = ops::relu(ot, bn1.forward(ot, z, Mode::kTrain));
        TemporalConv tconv = make_conv(ConvSpec{3, 2, false, C, C}, tw, tb);
        z = ops::relu(ot, bn2.forward(ot, tconv.forward(ot, z), Mode::kTrain));
        z = ops::add(ot, z, ot.constant(x2d));
        const Tensor& ref = ot.value(z);
        for (int i = 0; i < y.numel(); ++i) {
            REQUIRE_THAT(y[i], Catch::Matchers::WithinAbs(ref[i], 1e-10));
        }
    }
}

TEST_CASE("spatial pool", "[layers]") {
    Rng rng(59);
    {
        const Tensor x = random_tensor(rng, {4, 1, 3});
        Tape tape;
        REQUIRE(tape.value(spatial_pool(tape, tape.constant(x))).values() == x.values());
    }
    {
        Tensor x({3, 2, 2});
        for (int t = 0; t < 3; ++t) {
            for (int c = 0; c < 2; ++c) {
                const double v = rng.uniform(-1, 1);
                x.at(t, 0, c) = v;
                x.at(t, 1, c) = -v;
            }
        }
        Tape tape;
        const Tensor& y = tape.value(spatial_pool(tape, tape.constant(x)));
        for (int i = 0; i < y.numel(); ++i) REQUIRE_THAT(y[i], Catch::Matchers::WithinAbs(0.0, 1e-15));
    }
    {
        const Tensor x = random_tensor(rng, {4, 3, 2});
        Tape tape;
        const Tensor& y = tape.value(spatial_pool(tape, tape.constant(x)));
        for (int t = 0; t < 4; ++t) {
            for (int c = 0; c < 2; ++c) {
                double mean = 0.0;
                for (int n = 0; n < 3; ++n) mean += x.at(t, n, c) / 3;
                REQUIRE_THAT(y.at(t, c), Catch::Matchers::WithinAbs(mean, 1e-15));
            }
        }
    }
}

TEST_CASE("lstm step zero case and gate saturation", "[layers]") {
    Rng rng(61);
    LstmCell cell(2, 3, rng, "cell");
    for (Parameter* p : cell.params()) p->value.fill(0.0);
    {
        Tape tape;
        const LstmCell::State s =
            cell.step(tape, tape.constant(Tensor::zeros({1, 2})), cell.zero_state(tape));
        for (int i = 0; i < 3; ++i) {
            REQUIRE(tape.value(s.c)[i] == 0.0);
            REQUIRE(tape.value(s.h)[i] == 0.0);
        }
    }
    {
        // Forget bias driven to saturation: the cell state carries over, plus
        // the half-open input gate times a zero candidate.
        find_param(cell.params(), "cell.b_if")->value.fill(40.0);
        const Tensor c_prev({1, 3}, {0.7, -0.4, 1.1});
        Tape tape;
        const LstmCell::State s = cell.step(tape, tape.constant(Tensor::zeros({1, 2})),
                                            {tape.constant(Tensor::zeros({1, 3})),
                                             tape.constant(c_prev)});
        for (int i = 0; i < 3; ++i) {
            REQUIRE_THAT(tape.value(s.c)[i], Catch::Matchers::WithinAbs(c_prev[i], 1e-9));
            REQUIRE_THAT(tape.value(s.h)[i],
                         Catch::Matchers::WithinAbs(0.5 * std::tanh(c_prev[i]), 1e-9));
        }
    }
}

TEST_CASE("bilstm single sample halves coincide and reversal swaps halves", "[layers]") {
    Rng rng(67);
    {
        BiLstmLayer layer(2, 3, rng, "bi");
        // Same weights in both directions makes the T=1 halves identical.
        const auto ps = layer.params();
        for (std::size_t i = 0; i < ps.size() / 2; ++i) {
            ps[ps.size() / 2 + i]->value = ps[i]->value;
        }
        const Tensor x = random_tensor(rng, {1, 2});
        Tape tape;
        const Tensor& y = tape.value(layer.forward(tape, tape.constant(x)));
        for (int i = 0; i < 3; ++i) REQUIRE(y[i] == y[3 + i]);
    }
    {
        const int T = 5;
        BiLstmLayer a(2, 3, rng, "a");
        BiLstmLayer b(2, 3, rng, "b");
        // b gets a's cells with directions swapped.
        const auto pa = a.params();
        const auto pb = b.params();
        const std::size_t half = pa.size() / 2;
        for (std::size_t i = 0; i < half; ++i) {
            pb[i]->value = pa[half + i]->value;
            pb[half + i]->value = pa[i]->value;
        }
        const Tensor x = random_tensor(rng, {T, 2});
        Tensor xr({T, 2});
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < 2; ++c) xr.at(t, c) = x.at(T - 1 - t, c);
        Tape ta, tb;
        const Tensor& ya = ta.value(a.forward(ta, ta.constant(x)));
        const Tensor& yb = tb.value(b.forward(tb, tb.constant(xr)));
        for (int t = 0; t < T; ++t) {
            for (int h = 0; h < 3; ++h) {
                REQUIRE_THAT(yb.at(T - 1 - t, h),
                             Catch::Matchers::WithinAbs(ya.at(t, 3 + h), 1e-12));
                REQUIRE_THAT(yb.at(T - 1 - t, 3 + h),
                             Catch::Matchers::WithinAbs(ya.at(t, h), 1e-12));
            }
        }
    }
}

TEST_CASE("prediction head zero weights, single class, shift invariance", "[layers]") {
    Rng rng(71);
    {
        PredictionHead head(4, 3, rng, "head");
        find_param(head.params(), "head.w")->value.fill(0.0);
        find_param(head.params(), "head.b")->value.fill(0.0);
        Tape tape;
        const Tensor& y = tape.value(head.forward(tape, tape.constant(random_tensor(rng, {5, 4}))));
        for (int i = 0; i < y.numel(); ++i) {
            REQUIRE_THAT(y[i], Catch::Matchers::WithinAbs(1.0 / 3, 1e-15));
        }
    }
    {
        PredictionHead head(4, 1, rng, "head");
        Tape tape;
        const Tensor& y = tape.value(head.forward(tape, tape.constant(random_tensor(rng, {5, 4}))));
        for (int i = 0; i < y.numel(); ++i) REQUIRE(y[i] == 1.0);
    }
    {
        PredictionHead head(4, 3, rng, "head");
        const Tensor x = random_tensor(rng, {6, 4});
        Tape t1;
        const Tensor y1 = t1.value(head.forward(t1, t1.constant(x)));
        Parameter* b = find_param(head.params(), "head.b");
        for (int i = 0; i < b->value.numel(); ++i) b->value[i] += 2.5;
        Tape t2;
        const Tensor y2 = t2.value(head.forward(t2, t2.constant(x)));
        for (int t = 0; t < 6; ++t) {
            int a1 = 0, a2 = 0;
            for (int l = 1; l < 3; ++l) {
                if (y1.at(t, l) > y1.at(t, a1)) a1 = l;
                if (y2.at(t, l) > y2.at(t, a2)) a2 = l;
            }
            REQUIRE(a1 == a2);
        }
    }
}

TEST_CASE("per-layer gradients match finite differences", "[layers][slow]") {
    for (const std::string& name : checks::layer_check_names()) {
        if (name == "ms_gcn_end_to_end") continue;  // exercised by the model tests
        const auto r = checks::layer_check(name, 3, 101);
        INFO(name);
        REQUIRE(r.max_rel_err < 1e-4);
    }
}
