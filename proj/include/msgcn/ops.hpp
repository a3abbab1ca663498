#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "msgcn/common.hpp"
#include "msgcn/tape.hpp"
#include "msgcn/tensor.hpp"

namespace msgcn {
namespace ops {

namespace detail {

// a: [m x k] block at a_off, b: [k x n], accumulate into out block.
inline void gemm_block(const double* a, const double* b, double* out, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            double* orow = out + i * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// out += a^T * b with a: [m x k], b: [m x n], out: [k x n].
inline void gemm_at_b(const double* a, const double* b, double* out, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* orow = out + p * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// out += a * b^T with a: [m x n], b: [k x n], out: [m x k].
inline void gemm_a_bt(const double* a, const double* b, double* out, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double* orow = out + i * k;
        for (int p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += arow[j] * brow[j];
            orow[p] += s;
        }
    }
}

}  // namespace detail

/// Matrix product. `a` is [m x k] or batched [B x m x k]; `b` is [k x n].
inline NodeId matmul(Tape& t, NodeId a, NodeId b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (bv.rank() != 2 || (av.rank() != 2 && av.rank() != 3)) {
        throw DimensionError("matmul: unsupported ranks " + av.shape_str() + " x " + bv.shape_str());
    }
    const int batch = av.rank() == 3 ? av.dim(0) : 1;
    const int m = av.dim(av.rank() - 2);
    const int k = av.dim(av.rank() - 1);
    if (k != bv.dim(0)) {
        throw DimensionError("matmul: inner dimensions disagree " + av.shape_str() + " x " +
                             bv.shape_str());
    }
    const int n = bv.dim(1);

    std::vector<int> out_shape = av.rank() == 3 ? std::vector<int>{batch, m, n}
                                                : std::vector<int>{m, n};
    Tensor out(out_shape);
    for (int bi = 0; bi < batch; ++bi) {
        detail::gemm_block(av.data() + bi * m * k, bv.data(), out.data() + bi * m * n, m, k, n);
    }

    return t.node(std::move(out), [a, b, batch, m, k, n](Tape& tp, const Tensor& g) {
        const Tensor& avv = tp.value(a);
        const Tensor& bvv = tp.value(b);
        Tensor& ga = tp.grad(a);
        Tensor& gb = tp.grad(b);
        for (int bi = 0; bi < batch; ++bi) {
            const double* gp = g.data() + bi * m * n;
            // dA = dY * B^T
            detail::gemm_a_bt(gp, bvv.data(), ga.data() + bi * m * k, m, n, k);
            // dB = A^T * dY
            detail::gemm_at_b(avv.data() + bi * m * k, gp, gb.data(), m, k, n);
        }
    });
}

namespace detail {

inline void require_binary_shapes(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b) && b.numel() != 1) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
    }
}

}  // namespace detail

/// Elementwise sum; `b` may be a scalar, which is broadcast.
inline NodeId add(Tape& t, NodeId a, NodeId b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    detail::require_binary_shapes(av, bv, "add");
    Tensor out = av;
    const bool bscalar = bv.numel() == 1;
    if (bscalar) {
        const double s = bv[0];
        for (int i = 0; i < out.numel(); ++i) out[i] += s;
    } else {
        out.add_(bv);
    }
    return t.node(std::move(out), [a, b, bscalar](Tape& tp, const Tensor& g) {
        tp.grad(a).add_(g);
        Tensor& gb = tp.grad(b);
        if (bscalar) {
            double s = 0.0;
            for (int i = 0; i < g.numel(); ++i) s += g[i];
            gb[0] += s;
        } else {
            gb.add_(g);
        }
    });
}

/// Hadamard product; `b` may be a scalar, which is broadcast.
inline NodeId mul(Tape& t, NodeId a, NodeId b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    detail::require_binary_shapes(av, bv, "mul");
    const bool bscalar = bv.numel() == 1;
    Tensor out = av;
    if (bscalar) {
        out.scale_(bv[0]);
    } else {
        for (int i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    }
    return t.node(std::move(out), [a, b, bscalar](Tape& tp, const Tensor& g) {
        const Tensor& avv = tp.value(a);
        const Tensor& bvv = tp.value(b);
        Tensor& ga = tp.grad(a);
        Tensor& gb = tp.grad(b);
        if (bscalar) {
            const double s = bvv[0];
            double acc = 0.0;
            for (int i = 0; i < g.numel(); ++i) {
                ga[i] += g[i] * s;
                acc += g[i] * avv[i];
            }
            gb[0] += acc;
        } else {
            for (int i = 0; i < g.numel(); ++i) {
                ga[i] += g[i] * bvv[i];
                gb[i] += g[i] * avv[i];
            }
        }
    });
}

inline NodeId scale(Tape& t, NodeId a, double s) {
    Tensor out = t.value(a);
    out.scale_(s);
    return t.node(std::move(out),
                  [a, s](Tape& tp, const Tensor& g) { tp.grad(a).add_scaled_(g, s); });
}

/// ReLU; the subgradient at exactly 0 is 0.
inline NodeId relu(Tape& t, NodeId a) {
    Tensor out = t.value(a);
    for (int i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return t.node(std::move(out), [a](Tape& tp, const Tensor& g) {
        const Tensor& avv = tp.value(a);
        Tensor& ga = tp.grad(a);
        for (int i = 0; i < g.numel(); ++i)
            if (avv[i] > 0.0) ga[i] += g[i];
    });
}

inline NodeId sigmoid(Tape& t, NodeId a) {
    Tensor out = t.value(a);
    for (int i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    Tensor saved = out;
    return t.node(std::move(out), [a, saved = std::move(saved)](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad(a);
        for (int i = 0; i < g.numel(); ++i) ga[i] += g[i] * saved[i] * (1.0 - saved[i]);
    });
}

inline NodeId tanh_act(Tape& t, NodeId a) {
    Tensor out = t.value(a);
    for (int i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
    Tensor saved = out;
    return t.node(std::move(out), [a, saved = std::move(saved)](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad(a);
        for (int i = 0; i < g.numel(); ++i) ga[i] += g[i] * (1.0 - saved[i] * saved[i]);
    });
}

/// Natural log. Non-positive entries are a domain error; callers that may see
/// zero probabilities clamp first (see the loss functions).
inline NodeId log_act(Tape& t, NodeId a) {
    Tensor out = t.value(a);
    for (int i = 0; i < out.numel(); ++i) {
        if (out[i] <= 0.0) {
            throw DomainError("log: non-positive value " + std::to_string(out[i]) + " at index " +
                              std::to_string(i));
        }
        out[i] = std::log(out[i]);
    }
    return t.node(std::move(out), [a](Tape& tp, const Tensor& g) {
        const Tensor& avv = tp.value(a);
        Tensor& ga = tp.grad(a);
        for (int i = 0; i < g.numel(); ++i) ga[i] += g[i] / avv[i];
    });
}

/// Row-wise softmax on a [T x L] tensor, computed with max subtraction.
inline NodeId softmax_rows(Tape& t, NodeId a) {
    const Tensor& av = t.value(a);
    if (av.rank() != 2) throw DimensionError("softmax: expected rank 2, got " + av.shape_str());
    const int rows = av.dim(0), cols = av.dim(1);
    Tensor out(av.shape());
    for (int r = 0; r < rows; ++r) {
        const double* x = av.data() + r * cols;
        double* y = out.data() + r * cols;
        double mx = x[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - mx);
            sum += y[c];
        }
        for (int c = 0; c < cols; ++c) y[c] /= sum;
    }
    Tensor saved = out;
    return t.node(std::move(out),
                  [a, rows, cols, saved = std::move(saved)](Tape& tp, const Tensor& g) {
                      Tensor& ga = tp.grad(a);
                      for (int r = 0; r < rows; ++r) {
                          const double* y = saved.data() + r * cols;
                          const double* gy = g.data() + r * cols;
                          double dot = 0.0;
                          for (int c = 0; c < cols; ++c) dot += gy[c] * y[c];
                          double* gx = ga.data() + r * cols;
                          for (int c = 0; c < cols; ++c) gx[c] += (gy[c] - dot) * y[c];
                      }
                  });
}

/// Same data, new shape (element count must match).
inline NodeId reshape(Tape& t, NodeId a, std::vector<int> shape) {
    Tensor out(std::move(shape), t.value(a).values());
    return t.node(std::move(out), [a](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad(a);
        for (int i = 0; i < g.numel(); ++i) ga[i] += g[i];
    });
}

/// Concatenate two [T x C] tensors along the channel axis.
inline NodeId concat_cols(Tape& t, NodeId a, NodeId b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(0) != bv.dim(0)) {
        throw DimensionError("concat: incompatible " + av.shape_str() + " and " + bv.shape_str());
    }
    const int rows = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
    Tensor out({rows, ca + cb});
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < ca; ++c) out.at(r, c) = av.at(r, c);
        for (int c = 0; c < cb; ++c) out.at(r, ca + c) = bv.at(r, c);
    }
    return t.node(std::move(out), [a, b, rows, ca, cb](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad(a);
        Tensor& gb = tp.grad(b);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < ca; ++c) ga.at(r, c) += g.at(r, c);
            for (int c = 0; c < cb; ++c) gb.at(r, c) += g.at(r, ca + c);
        }
    });
}

/// Mean over the node axis: [T x N x C] -> [T x C].
inline NodeId mean_nodes(Tape& t, NodeId a) {
    const Tensor& av = t.value(a);
    if (av.rank() != 3) throw DimensionError("mean_nodes: expected rank 3, got " + av.shape_str());
    const int T = av.dim(0), N = av.dim(1), C = av.dim(2);
    Tensor out({T, C});
    for (int ti = 0; ti < T; ++ti)
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) out.at(ti, c) += av.at(ti, n, c) / N;
    return t.node(std::move(out), [a, T, N, C](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad(a);
        for (int ti = 0; ti < T; ++ti)
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) ga.at(ti, n, c) += g.at(ti, c) / N;
    });
}

/// Sum of all entries, as a scalar node.
inline NodeId sum_all(Tape& t, NodeId a) {
    const Tensor& av = t.value(a);
    double s = 0.0;
    for (int i = 0; i < av.numel(); ++i) s += av[i];
    return t.node(Tensor::scalar(s), [a](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad(a);
        for (int i = 0; i < ga.numel(); ++i) ga[i] += g[0];
    });
}

}  // namespace ops
}  // namespace msgcn
