#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "msgcn/common.hpp"
#include "msgcn/graph.hpp"
#include "msgcn/ops.hpp"
#include "msgcn/tape.hpp"
#include "msgcn/tensor.hpp"

namespace msgcn {

enum class Mode { kTrain, kEval };

/// Shape of one temporal convolution.
struct ConvSpec {
    int kernel = 3;
    int dilation = 1;
    bool causal = false;
    int channels_in = 0;
    int channels_out = 0;

    void validate() const {
        if (kernel < 1 || dilation < 1) throw ConfigError("conv: kernel and dilation must be >= 1");
        if (!causal && kernel % 2 == 0) {
            throw ConfigError("conv: acausal mode requires an odd kernel, got " +
                              std::to_string(kernel));
        }
        if (channels_in < 1 || channels_out < 1) throw ConfigError("conv: channels must be >= 1");
    }

    // Input sample offset read by tap i for an output at t.
    int tap_offset(int i) const { return causal ? -dilation * i : dilation * (i - (kernel - 1) / 2); }
};

namespace init {

inline Tensor uniform_fan_in(Rng& rng, std::vector<int> shape, int fan_in) {
    const double bound = std::sqrt(1.0 / fan_in);
    Tensor t(std::move(shape));
    for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

}  // namespace init

/// Dilated temporal convolution with zero padding. Accepts [T x Cin] or
/// [T x N x Cin] input; in the latter case the same kernel is applied to every
/// node. Causal taps read t, t-d, ..., t-(k-1)d; acausal taps are centred on t.
class TemporalConv {
public:
    TemporalConv(ConvSpec spec, Rng& rng, const std::string& name)
        : spec_(spec),
          weight_(init::uniform_fan_in(rng, {spec.kernel, spec.channels_in, spec.channels_out},
                                       spec.kernel * spec.channels_in),
                  name + ".w"),
          bias_(Tensor::zeros({spec.channels_out}), name + ".b") {
        spec_.validate();
    }

    const ConvSpec& spec() const { return spec_; }

    std::vector<Parameter*> params() { return {&weight_, &bias_}; }

    NodeId forward(Tape& tape, NodeId x) {
        const Tensor& xv = tape.value(x);
        if (xv.rank() != 2 && xv.rank() != 3) {
            throw DimensionError("temporal conv: expected rank 2 or 3, got " + xv.shape_str());
        }
        const int T = xv.dim(0);
        const int lanes = xv.rank() == 3 ? xv.dim(1) : 1;
        const int cin = xv.dim(xv.rank() - 1);
        if (cin != spec_.channels_in) {
            throw DimensionError("temporal conv: input has " + std::to_string(cin) +
                                 " channels, expected " + std::to_string(spec_.channels_in));
        }
        const int cout = spec_.channels_out;
        const int k = spec_.kernel;

        const NodeId wn = tape.use(weight_);
        const NodeId bn = tape.use(bias_);
        const Tensor& w = tape.value(wn);
        const Tensor& b = tape.value(bn);

        std::vector<int> out_shape = xv.shape();
        out_shape.back() = cout;
        Tensor out(out_shape);
        for (int t = 0; t < T; ++t) {
            for (int n = 0; n < lanes; ++n) {
                double* orow = out.data() + (t * lanes + n) * cout;
                for (int co = 0; co < cout; ++co) orow[co] = b[co];
            }
            for (int i = 0; i < k; ++i) {
                const int s = t + spec_.tap_offset(i);
                if (s < 0 || s >= T) continue;
                const double* wblock = w.data() + i * spec_.channels_in * cout;
                for (int n = 0; n < lanes; ++n) {
                    const double* xrow = xv.data() + (s * lanes + n) * spec_.channels_in;
                    double* orow = out.data() + (t * lanes + n) * cout;
                    for (int ci = 0; ci < spec_.channels_in; ++ci) {
                        const double sv = xrow[ci];
                        if (sv == 0.0) continue;
                        const double* wrow = wblock + ci * cout;
                        for (int co = 0; co < cout; ++co) orow[co] += sv * wrow[co];
                    }
                }
            }
        }

        const ConvSpec spec = spec_;
        return tape.node(std::move(out),
                         [x, wn, bn, spec, T, lanes, cout](Tape& tp, const Tensor& g) {
                             const Tensor& xvv = tp.value(x);
                             const Tensor& wv = tp.value(wn);
                             Tensor& gx = tp.grad(x);
                             Tensor& gw = tp.grad(wn);
                             Tensor& gb = tp.grad(bn);
                             const int cin = spec.channels_in;
                             for (int t = 0; t < T; ++t) {
                                 for (int n = 0; n < lanes; ++n) {
                                     const double* grow = g.data() + (t * lanes + n) * cout;
                                     for (int co = 0; co < cout; ++co) gb[co] += grow[co];
                                 }
                                 for (int i = 0; i < spec.kernel; ++i) {
                                     const int s = t + spec.tap_offset(i);
                                     if (s < 0 || s >= T) continue;
                                     const double* wblock = wv.data() + i * cin * cout;
                                     double* gwblock = gw.data() + i * cin * cout;
                                     for (int n = 0; n < lanes; ++n) {
                                         const double* xrow = xvv.data() + (s * lanes + n) * cin;
                                         double* gxrow = gx.data() + (s * lanes + n) * cin;
                                         const double* grow = g.data() + (t * lanes + n) * cout;
                                         for (int ci = 0; ci < cin; ++ci) {
                                             const double* wrow = wblock + ci * cout;
                                             double* gwrow = gwblock + ci * cout;
                                             double acc = 0.0;
                                             const double xval = xrow[ci];
                                             for (int co = 0; co < cout; ++co) {
                                                 acc += wrow[co] * grow[co];
                                                 gwrow[co] += xval * grow[co];
                                             }
                                             gxrow[ci] += acc;
                                         }
                                     }
                                 }
                             }
                         });
    }

private:
    ConvSpec spec_;
    Parameter weight_;
    Parameter bias_;
};

/// Per-sample (and per-node) linear map across channels.
class Conv1x1 {
public:
    Conv1x1(int channels_in, int channels_out, Rng& rng, const std::string& name)
        : channels_in_(channels_in),
          channels_out_(channels_out),
          weight_(init::uniform_fan_in(rng, {channels_in, channels_out}, channels_in),
                  name + ".w"),
          bias_(Tensor::zeros({channels_out}), name + ".b") {}

    std::vector<Parameter*> params() { return {&weight_, &bias_}; }
    int channels_in() const { return channels_in_; }
    int channels_out() const { return channels_out_; }

    NodeId forward(Tape& tape, NodeId x) {
        const Tensor& xv = tape.value(x);
        if (xv.dim(xv.rank() - 1) != channels_in_) {
            throw DimensionError("conv1x1: input has " + std::to_string(xv.dim(xv.rank() - 1)) +
                                 " channels, expected " + std::to_string(channels_in_));
        }
        const std::vector<int> orig = xv.shape();
        const int rows = xv.numel() / channels_in_;
        NodeId flat = xv.rank() == 2 ? x : ops::reshape(tape, x, {rows, channels_in_});
        NodeId y = ops::matmul(tape, flat, tape.use(weight_));
        y = add_bias(tape, y, tape.use(bias_));
        if (orig.size() == 3) {
            y = ops::reshape(tape, y, {orig[0], orig[1], channels_out_});
        }
        return y;
    }

private:
    // Row-broadcast bias add on a [rows x C] tensor.
    static NodeId add_bias(Tape& tape, NodeId x, NodeId b) {
        const Tensor& xv = tape.value(x);
        const Tensor& bv = tape.value(b);
        const int rows = xv.dim(0), cols = xv.dim(1);
        Tensor out = xv;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) out.at(r, c) += bv[c];
        return tape.node(std::move(out), [x, b, rows, cols](Tape& tp, const Tensor& g) {
            tp.grad(x).add_(g);
            Tensor& gb = tp.grad(b);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) gb[c] += g.at(r, c);
        });
    }

    int channels_in_;
    int channels_out_;
    Parameter weight_;
    Parameter bias_;
};

/// Batch normalization over every axis except the trailing channel axis.
/// Train mode normalizes with per-call statistics (eps 1e-5) and folds them
/// into the running estimates with momentum 0.1; eval mode applies the
/// running estimates as constants.
class BatchNorm {
public:
    BatchNorm(int channels, const std::string& name, double eps = 1e-5, double momentum = 0.1)
        : channels_(channels),
          eps_(eps),
          momentum_(momentum),
          name_(name),
          gamma_(Tensor::ones({channels}), name + ".gamma"),
          beta_(Tensor::zeros({channels}), name + ".beta"),
          running_mean_(Tensor::zeros({channels})),
          running_var_(Tensor::ones({channels})) {}

    std::vector<Parameter*> params() { return {&gamma_, &beta_}; }
    const std::string& name() const { return name_; }
    Tensor& running_mean() { return running_mean_; }
    Tensor& running_var() { return running_var_; }

    NodeId forward(Tape& tape, NodeId x, Mode mode) {
        const Tensor& xv = tape.value(x);
        const int C = channels_;
        if (xv.dim(xv.rank() - 1) != C) {
            throw DimensionError("batch norm: input has " + std::to_string(xv.dim(xv.rank() - 1)) +
                                 " channels, expected " + std::to_string(C));
        }
        const int rows = xv.numel() / C;
        const NodeId gn = tape.use(gamma_);
        const NodeId bn = tape.use(beta_);
        const Tensor& gamma = tape.value(gn);
        const Tensor& beta = tape.value(bn);

        std::vector<double> mean(static_cast<std::size_t>(C), 0.0);
        std::vector<double> var(static_cast<std::size_t>(C), 0.0);
        if (mode == Mode::kTrain) {
            for (int r = 0; r < rows; ++r) {
                const double* xrow = xv.data() + r * C;
                for (int c = 0; c < C; ++c) mean[c] += xrow[c];
            }
            for (int c = 0; c < C; ++c) mean[c] /= rows;
            for (int r = 0; r < rows; ++r) {
                const double* xrow = xv.data() + r * C;
                for (int c = 0; c < C; ++c) {
                    const double d = xrow[c] - mean[c];
                    var[c] += d * d;
                }
            }
            for (int c = 0; c < C; ++c) var[c] /= rows;
            for (int c = 0; c < C; ++c) {
                running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean[c];
                running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * var[c];
            }
        } else {
            for (int c = 0; c < C; ++c) {
                mean[c] = running_mean_[c];
                var[c] = running_var_[c];
            }
        }

        std::vector<double> inv_std(static_cast<std::size_t>(C));
        for (int c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps_);

        Tensor xhat(xv.shape());
        Tensor out(xv.shape());
        for (int r = 0; r < rows; ++r) {
            const double* xrow = xv.data() + r * C;
            double* hrow = xhat.data() + r * C;
            double* orow = out.data() + r * C;
            for (int c = 0; c < C; ++c) {
                hrow[c] = (xrow[c] - mean[c]) * inv_std[c];
                orow[c] = gamma[c] * hrow[c] + beta[c];
            }
        }

        const bool train = mode == Mode::kTrain;
        return tape.node(
            std::move(out), [x, gn, bn, rows, C, train, inv_std = std::move(inv_std),
                             xhat = std::move(xhat)](Tape& tp, const Tensor& g) {
                const Tensor& gamma = tp.value(gn);
                Tensor& gx = tp.grad(x);
                Tensor& gg = tp.grad(gn);
                Tensor& gb = tp.grad(bn);
                std::vector<double> sum_g(static_cast<std::size_t>(C), 0.0);
                std::vector<double> sum_gh(static_cast<std::size_t>(C), 0.0);
                for (int r = 0; r < rows; ++r) {
                    const double* grow = g.data() + r * C;
                    const double* hrow = xhat.data() + r * C;
                    for (int c = 0; c < C; ++c) {
                        sum_g[c] += grow[c];
                        sum_gh[c] += grow[c] * hrow[c];
                    }
                }
                for (int c = 0; c < C; ++c) {
                    gb[c] += sum_g[c];
                    gg[c] += sum_gh[c];
                }
                if (train) {
                    for (int r = 0; r < rows; ++r) {
                        const double* grow = g.data() + r * C;
                        const double* hrow = xhat.data() + r * C;
                        double* gxrow = gx.data() + r * C;
                        for (int c = 0; c < C; ++c) {
                            gxrow[c] += gamma[c] * inv_std[c] / rows *
                                        (rows * grow[c] - sum_g[c] - hrow[c] * sum_gh[c]);
                        }
                    }
                } else {
                    for (int r = 0; r < rows; ++r) {
                        const double* grow = g.data() + r * C;
                        double* gxrow = gx.data() + r * C;
                        for (int c = 0; c < C; ++c) gxrow[c] += gamma[c] * inv_std[c] * grow[c];
                    }
                }
            });
    }

private:
    int channels_;
    double eps_;
    double momentum_;
    std::string name_;
    Parameter gamma_;
    Parameter beta_;
    Tensor running_mean_;
    Tensor running_var_;
};

/// How the learnable mask interacts with the normalized adjacency.
/// kElementwise modulates each subset matrix entrywise before propagation;
/// kRightMultiply mixes the node axis with the mask after the channel map.
enum class MaskMode { kElementwise, kRightMultiply };

inline const char* to_string(MaskMode m) {
    return m == MaskMode::kElementwise ? "elementwise" : "right-multiply";
}

inline MaskMode mask_mode_from_string(const std::string& s) {
    if (s == "elementwise") return MaskMode::kElementwise;
    if (s == "right-multiply") return MaskMode::kRightMultiply;
    throw ConfigError("unknown mask mode '" + s + "' (elementwise | right-multiply)");
}

/// Spatial graph convolution: per subset, propagate features with the masked
/// normalized adjacency, apply that subset's channel map, and sum.
class GraphConv {
public:
    GraphConv(std::shared_ptr<const PartitionedAdjacency> adjacency, int channels, Rng& rng,
              const std::string& name, MaskMode mask_mode = MaskMode::kElementwise)
        : adjacency_(std::move(adjacency)), channels_(channels), mask_mode_(mask_mode) {
        static const char* subset_names[3] = {"self", "closer", "farther"};
        const int N = adjacency_->num_nodes;
        for (std::size_t p = 0; p < 3; ++p) {
            weights_[p] = Parameter(init::uniform_fan_in(rng, {channels, channels}, channels),
                                    name + ".w_" + subset_names[p]);
            masks_[p] =
                Parameter(Tensor::ones({N, N}), name + ".m_" + subset_names[p]);
        }
    }

    std::vector<Parameter*> params() {
        return {&weights_[0], &weights_[1], &weights_[2], &masks_[0], &masks_[1], &masks_[2]};
    }

    NodeId forward(Tape& tape, NodeId x) {
        const Tensor& xv = tape.value(x);
        const int N = adjacency_->num_nodes;
        if (xv.rank() != 3 || xv.dim(1) != N || xv.dim(2) != channels_) {
            throw DimensionError("graph conv: input " + xv.shape_str() + " does not match " +
                                 std::to_string(N) + " nodes x " + std::to_string(channels_) +
                                 " channels");
        }
        const int T = xv.dim(0);
        const int C = channels_;

        std::array<NodeId, 3> wn{}, mn{};
        for (std::size_t p = 0; p < 3; ++p) {
            wn[p] = tape.use(weights_[p]);
            mn[p] = tape.use(masks_[p]);
        }

        Tensor out({T, N, C});
        // Saved intermediates, per subset: the propagated features (input to
        // the channel map) and, in right-multiply mode, the channel-mapped
        // features (input to the mask mix).
        auto propagated = std::make_shared<std::array<Tensor, 3>>();
        auto mapped = std::make_shared<std::array<Tensor, 3>>();

        for (std::size_t p = 0; p < 3; ++p) {
            const Tensor& a = adjacency_->matrices[p];
            const Tensor& m = tape.value(mn[p]);
            const Tensor& w = tape.value(wn[p]);

            Tensor prop({T, N, C});
            if (mask_mode_ == MaskMode::kElementwise) {
                for (int i = 0; i < N; ++i) {
                    for (int j = 0; j < N; ++j) {
                        const double aij = a.at(i, j) * m.at(i, j);
                        if (aij == 0.0) continue;
                        for (int t = 0; t < T; ++t) {
                            const double* xrow = xv.data() + (t * N + j) * C;
                            double* prow = prop.data() + (t * N + i) * C;
                            for (int c = 0; c < C; ++c) prow[c] += aij * xrow[c];
                        }
                    }
                }
            } else {
                for (int i = 0; i < N; ++i) {
                    for (int j = 0; j < N; ++j) {
                        const double aij = a.at(i, j);
                        if (aij == 0.0) continue;
                        for (int t = 0; t < T; ++t) {
                            const double* xrow = xv.data() + (t * N + j) * C;
                            double* prow = prop.data() + (t * N + i) * C;
                            for (int c = 0; c < C; ++c) prow[c] += aij * xrow[c];
                        }
                    }
                }
            }

            if (mask_mode_ == MaskMode::kElementwise) {
                for (int t = 0; t < T; ++t) {
                    ops::detail::gemm_block(prop.data() + t * N * C, w.data(),
                                            out.data() + t * N * C, N, C, C);
                }
            } else {
                Tensor mp({T, N, C});
                for (int t = 0; t < T; ++t) {
                    ops::detail::gemm_block(prop.data() + t * N * C, w.data(),
                                            mp.data() + t * N * C, N, C, C);
                }
                // out[t](j, c) += sum_i m(i, j) * mp[t](i, c)
                for (int t = 0; t < T; ++t) {
                    for (int i = 0; i < N; ++i) {
                        const double* mprow = mp.data() + (t * N + i) * C;
                        for (int j = 0; j < N; ++j) {
                            const double mij = m.at(i, j);
                            if (mij == 0.0) continue;
                            double* orow = out.data() + (t * N + j) * C;
                            for (int c = 0; c < C; ++c) orow[c] += mij * mprow[c];
                        }
                    }
                }
                (*mapped)[p] = std::move(mp);
            }
            (*propagated)[p] = std::move(prop);
        }

        const MaskMode mode = mask_mode_;
        auto adjacency = adjacency_;
        return tape.node(std::move(out), [x, wn, mn, T, N, C, mode, adjacency, propagated,
                                          mapped](Tape& tp, const Tensor& g) {
            const Tensor& xvv = tp.value(x);
            Tensor& gx = tp.grad(x);
            for (std::size_t p = 0; p < 3; ++p) {
                const Tensor& a = adjacency->matrices[p];
                const Tensor& m = tp.value(mn[p]);
                const Tensor& w = tp.value(wn[p]);
                Tensor& gw = tp.grad(wn[p]);
                Tensor& gm = tp.grad(mn[p]);
                const Tensor& prop = (*propagated)[p];

                // Gradient flowing into the channel-map output for this subset.
                Tensor gmap({T, N, C});
                if (mode == MaskMode::kElementwise) {
                    gmap = g;
                } else {
                    const Tensor& mp = (*mapped)[p];
                    // out(j) = sum_i m(i, j) * mp(i): route back through m.
                    for (int t = 0; t < T; ++t) {
                        for (int i = 0; i < N; ++i) {
                            double* grow = gmap.data() + (t * N + i) * C;
                            const double* mprow = mp.data() + (t * N + i) * C;
                            for (int j = 0; j < N; ++j) {
                                const double* gout = g.data() + (t * N + j) * C;
                                double dm = 0.0;
                                const double mij = m.at(i, j);
                                for (int c = 0; c < C; ++c) {
                                    grow[c] += mij * gout[c];
                                    dm += mprow[c] * gout[c];
                                }
                                gm.at(i, j) += dm;
                            }
                        }
                    }
                }

                // Through the channel map: dW += prop^T gmap, gprop = gmap W^T.
                Tensor gprop({T, N, C});
                for (int t = 0; t < T; ++t) {
                    ops::detail::gemm_at_b(prop.data() + t * N * C, gmap.data() + t * N * C,
                                           gw.data(), N, C, C);
                    ops::detail::gemm_a_bt(gmap.data() + t * N * C, w.data(),
                                           gprop.data() + t * N * C, N, C, C);
                }

                // Through the propagation.
                for (int i = 0; i < N; ++i) {
                    for (int j = 0; j < N; ++j) {
                        const double aij = a.at(i, j);
                        if (aij == 0.0) continue;
                        const double eff = mode == MaskMode::kElementwise ? aij * m.at(i, j) : aij;
                        double dm = 0.0;
                        for (int t = 0; t < T; ++t) {
                            const double* gprow = gprop.data() + (t * N + i) * C;
                            const double* xrow = xvv.data() + (t * N + j) * C;
                            double* gxrow = gx.data() + (t * N + j) * C;
                            for (int c = 0; c < C; ++c) {
                                gxrow[c] += eff * gprow[c];
                                dm += gprow[c] * xrow[c];
                            }
                        }
                        if (mode == MaskMode::kElementwise) gm.at(i, j) += dm * aij;
                    }
                }
            }
        });
    }

private:
    std::shared_ptr<const PartitionedAdjacency> adjacency_;
    int channels_;
    MaskMode mask_mode_;
    std::array<Parameter, 3> weights_;
    std::array<Parameter, 3> masks_;
};

/// Dilated temporal convolution, BN, ReLU, then a residual connection.
class TcnBlock {
public:
    TcnBlock(int channels, int kernel, int dilation, bool causal, Rng& rng,
             const std::string& name)
        : conv_(ConvSpec{kernel, dilation, causal, channels, channels}, rng, name + ".conv"),
          bn_(channels, name + ".bn") {}

    std::vector<Parameter*> params() {
        std::vector<Parameter*> out = conv_.params();
        for (Parameter* p : bn_.params()) out.push_back(p);
        return out;
    }

    BatchNorm& bn() { return bn_; }

    NodeId forward(Tape& tape, NodeId x, Mode mode) {
        NodeId y = conv_.forward(tape, x);
        y = bn_.forward(tape, y, mode);
        y = ops::relu(tape, y);
        return ops::add(tape, y, x);
    }

private:
    TemporalConv conv_;
    BatchNorm bn_;
};

/// Graph convolution and temporal convolution, each followed by BN and ReLU,
/// with a residual connection from the block input.
class StgcnBlock {
public:
    StgcnBlock(std::shared_ptr<const PartitionedAdjacency> adjacency, int channels, int kernel,
               int dilation, bool causal, Rng& rng, const std::string& name,
               MaskMode mask_mode = MaskMode::kElementwise)
        : gcn_(std::move(adjacency), channels, rng, name + ".gcn", mask_mode),
          gcn_bn_(channels, name + ".gcn_bn"),
          tconv_(ConvSpec{kernel, dilation, causal, channels, channels}, rng, name + ".tconv"),
          tconv_bn_(channels, name + ".tconv_bn") {}

    std::vector<Parameter*> params() {
        std::vector<Parameter*> out = gcn_.params();
        for (Parameter* p : gcn_bn_.params()) out.push_back(p);
        for (Parameter* p : tconv_.params()) out.push_back(p);
        for (Parameter* p : tconv_bn_.params()) out.push_back(p);
        return out;
    }

    std::vector<BatchNorm*> batch_norms() { return {&gcn_bn_, &tconv_bn_}; }

    NodeId forward(Tape& tape, NodeId x, Mode mode) {
        NodeId y = gcn_.forward(tape, x);
        y = gcn_bn_.forward(tape, y, mode);
        y = ops::relu(tape, y);
        y = tconv_.forward(tape, y);
        y = tconv_bn_.forward(tape, y, mode);
        y = ops::relu(tape, y);
        return ops::add(tape, y, x);
    }

private:
    GraphConv gcn_;
    BatchNorm gcn_bn_;
    TemporalConv tconv_;
    BatchNorm tconv_bn_;
};

/// Mean over the node axis: [T x N x C] -> [T x C].
inline NodeId spatial_pool(Tape& tape, NodeId x) { return ops::mean_nodes(tape, x); }

/// One LSTM cell. Gate equations follow the usual from-to weight convention
/// with separate input and recurrent biases; j is the forget gate.
class LstmCell {
public:
    LstmCell(int input_dim, int hidden, Rng& rng, const std::string& name)
        : input_dim_(input_dim), hidden_(hidden) {
        static const char* gate[4] = {"i", "f", "c", "o"};
        for (int g = 0; g < 4; ++g) {
            wx_[g] = Parameter(init::uniform_fan_in(rng, {input_dim, hidden}, input_dim),
                               name + ".w_i" + gate[g]);
            wh_[g] = Parameter(init::uniform_fan_in(rng, {hidden, hidden}, hidden),
                               name + ".w_h" + gate[g]);
            bx_[g] = Parameter(Tensor::zeros({hidden}), name + ".b_i" + gate[g]);
            bh_[g] = Parameter(Tensor::zeros({hidden}), name + ".b_h" + gate[g]);
        }
    }

    int input_dim() const { return input_dim_; }
    int hidden() const { return hidden_; }

    std::vector<Parameter*> params() {
        std::vector<Parameter*> out;
        for (int g = 0; g < 4; ++g) {
            out.push_back(&wx_[g]);
            out.push_back(&bx_[g]);
            out.push_back(&wh_[g]);
            out.push_back(&bh_[g]);
        }
        return out;
    }

    struct State {
        NodeId h;
        NodeId c;
    };

    /// One step on a [1 x input_dim] sample.
    State step(Tape& tape, NodeId x_t, State prev) {
        auto gate_pre = [&](int g) {
            NodeId a = ops::matmul(tape, x_t, tape.use(wx_[g]));
            a = add_row_bias(tape, a, tape.use(bx_[g]));
            NodeId b = ops::matmul(tape, prev.h, tape.use(wh_[g]));
            b = add_row_bias(tape, b, tape.use(bh_[g]));
            return ops::add(tape, a, b);
        };
        const NodeId i_gate = ops::sigmoid(tape, gate_pre(0));
        const NodeId f_gate = ops::sigmoid(tape, gate_pre(1));
        const NodeId c_cand = ops::tanh_act(tape, gate_pre(2));
        const NodeId o_gate = ops::sigmoid(tape, gate_pre(3));
        const NodeId c_t =
            ops::add(tape, ops::mul(tape, f_gate, prev.c), ops::mul(tape, i_gate, c_cand));
        const NodeId h_t = ops::mul(tape, ops::tanh_act(tape, c_t), o_gate);
        return {h_t, c_t};
    }

    State zero_state(Tape& tape) {
        return {tape.constant(Tensor::zeros({1, hidden_})), tape.constant(Tensor::zeros({1, hidden_}))};
    }

private:
    static NodeId add_row_bias(Tape& tape, NodeId x, NodeId b) {
        const Tensor& bv = tape.value(b);
        NodeId brow = ops::reshape(tape, b, {1, bv.numel()});
        return ops::add(tape, x, brow);
    }

    int input_dim_;
    int hidden_;
    std::array<Parameter, 4> wx_;
    std::array<Parameter, 4> wh_;
    std::array<Parameter, 4> bx_;
    std::array<Parameter, 4> bh_;
};

namespace detail {

inline NodeId slice_row(Tape& tape, NodeId x, int row) {
    const Tensor& xv = tape.value(x);
    const int cols = xv.dim(1);
    Tensor out({1, cols});
    for (int c = 0; c < cols; ++c) out[c] = xv.at(row, c);
    return tape.node(std::move(out), [x, row, cols](Tape& tp, const Tensor& g) {
        Tensor& gx = tp.grad(x);
        for (int c = 0; c < cols; ++c) gx.at(row, c) += g[c];
    });
}

inline NodeId stack_rows(Tape& tape, const std::vector<NodeId>& rows) {
    const int T = static_cast<int>(rows.size());
    const int cols = tape.value(rows[0]).dim(1);
    Tensor out({T, cols});
    for (int t = 0; t < T; ++t) {
        const Tensor& r = tape.value(rows[static_cast<std::size_t>(t)]);
        for (int c = 0; c < cols; ++c) out.at(t, c) = r[c];
    }
    return tape.node(std::move(out), [rows, cols](Tape& tp, const Tensor& g) {
        for (std::size_t t = 0; t < rows.size(); ++t) {
            Tensor& gr = tp.grad(rows[t]);
            for (int c = 0; c < cols; ++c) gr[c] += g.at(static_cast<int>(t), c);
        }
    });
}

}  // namespace detail

/// Run a cell over a [T x C] sequence from zero initial states, in the given
/// time direction, returning the [T x H] hidden sequence in input order.
inline NodeId lstm_scan(Tape& tape, LstmCell& cell, NodeId x, bool reverse) {
    const int T = tape.value(x).dim(0);
    std::vector<NodeId> hs(static_cast<std::size_t>(T));
    LstmCell::State state = cell.zero_state(tape);
    for (int step = 0; step < T; ++step) {
        const int t = reverse ? T - 1 - step : step;
        state = cell.step(tape, detail::slice_row(tape, x, t), state);
        hs[static_cast<std::size_t>(t)] = state.h;
    }
    return detail::stack_rows(tape, hs);
}

/// Forward and backward passes concatenated per sample: [T x C] -> [T x 2H].
class BiLstmLayer {
public:
    BiLstmLayer(int input_dim, int hidden, Rng& rng, const std::string& name)
        : fwd_(input_dim, hidden, rng, name + ".fwd"), bwd_(input_dim, hidden, rng, name + ".bwd") {}

    std::vector<Parameter*> params() {
        std::vector<Parameter*> out = fwd_.params();
        for (Parameter* p : bwd_.params()) out.push_back(p);
        return out;
    }

    LstmCell& forward_cell() { return fwd_; }
    LstmCell& backward_cell() { return bwd_; }

    NodeId forward(Tape& tape, NodeId x) {
        const NodeId hf = lstm_scan(tape, fwd_, x, /*reverse=*/false);
        const NodeId hb = lstm_scan(tape, bwd_, x, /*reverse=*/true);
        return ops::concat_cols(tape, hf, hb);
    }

private:
    LstmCell fwd_;
    LstmCell bwd_;
};

/// 1x1 channel map followed by a row-wise softmax: [T x C] -> [T x L].
class PredictionHead {
public:
    PredictionHead(int channels_in, int num_classes, Rng& rng, const std::string& name)
        : conv_(channels_in, num_classes, rng, name) {}

    std::vector<Parameter*> params() { return conv_.params(); }

    NodeId forward(Tape& tape, NodeId x) {
        return ops::softmax_rows(tape, conv_.forward(tape, x));
    }

private:
    Conv1x1 conv_;
};

}  // namespace msgcn
