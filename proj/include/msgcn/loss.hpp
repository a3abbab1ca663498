#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "msgcn/common.hpp"
#include "msgcn/ops.hpp"
#include "msgcn/tape.hpp"

namespace msgcn {

/// Weights of the training objective: per-stage cross-entropy plus lambda
/// times the truncated temporal MSE over log-probabilities.
struct LossConfig {
    double lambda = 0.15;
    double tau = 4.0;
    double clamp_floor = 1e-8;
    // The t-1 log-probability in the smoothing term is treated as a constant
    // unless this is cleared.
    bool detach_previous = true;

    void validate() const {
        if (lambda < 0.0) throw ConfigError("loss: lambda must be >= 0");
        if (tau <= 0.0) throw ConfigError("loss: tau must be > 0");
        if (clamp_floor <= 0.0 || clamp_floor >= 1.0) {
            throw ConfigError("loss: clamp_floor must lie in (0, 1)");
        }
    }
};

/// Mean over samples of -log p(true class), with probabilities clamped from
/// below so the log stays finite.
inline NodeId ce_loss(Tape& tape, NodeId pred, const std::vector<int>& labels,
                      double clamp_floor = 1e-8) {
    const Tensor& p = tape.value(pred);
    const int T = p.dim(0), L = p.dim(1);
    if (static_cast<int>(labels.size()) != T) {
        throw DataError("ce loss: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(T) + " samples");
    }
    double sum = 0.0;
    for (int t = 0; t < T; ++t) {
        const int y = labels[static_cast<std::size_t>(t)];
        if (y < 0 || y >= L) {
            throw DataError("ce loss: label " + std::to_string(y) + " at sample " +
                            std::to_string(t) + " outside [0, " + std::to_string(L) + ")");
        }
        sum -= std::log(std::max(p.at(t, y), clamp_floor));
    }
    return tape.node(Tensor::scalar(sum / T),
                     [pred, labels, T, clamp_floor](Tape& tp, const Tensor& g) {
                         const Tensor& pv = tp.value(pred);
                         Tensor& gp = tp.grad(pred);
                         for (int t = 0; t < T; ++t) {
                             const int y = labels[static_cast<std::size_t>(t)];
                             const double v = pv.at(t, y);
                             if (v >= clamp_floor) gp.at(t, y) -= g[0] / (T * v);
                         }
                     });
}

/// Truncated MSE over consecutive log-probabilities: differences are clamped
/// at tau, squared, and averaged over T*L. Zero for T < 2.
inline NodeId tmse_loss(Tape& tape, NodeId pred, double tau, double clamp_floor = 1e-8,
                        bool detach_previous = true) {
    const Tensor& p = tape.value(pred);
    const int T = p.dim(0), L = p.dim(1);
    if (T < 2) return tape.constant(Tensor::scalar(0.0));

    double sum = 0.0;
    for (int t = 1; t < T; ++t) {
        for (int l = 0; l < L; ++l) {
            const double a = std::log(std::max(p.at(t, l), clamp_floor));
            const double b = std::log(std::max(p.at(t - 1, l), clamp_floor));
            const double delta = std::min(std::abs(a - b), tau);
            sum += delta * delta;
        }
    }
    return tape.node(
        Tensor::scalar(sum / (T * L)),
        [pred, T, L, tau, clamp_floor, detach_previous](Tape& tp, const Tensor& g) {
            const Tensor& pv = tp.value(pred);
            Tensor& gp = tp.grad(pred);
            const double scale = g[0] / (T * L);
            for (int t = 1; t < T; ++t) {
                for (int l = 0; l < L; ++l) {
                    const double pt = pv.at(t, l);
                    const double pm = pv.at(t - 1, l);
                    const double a = std::log(std::max(pt, clamp_floor));
                    const double b = std::log(std::max(pm, clamp_floor));
                    const double diff = a - b;
                    // At |diff| == tau exactly the unclamped branch applies;
                    // beyond it the clamped value is constant.
                    if (std::abs(diff) > tau) continue;
                    const double d = 2.0 * diff * scale;
                    if (pt >= clamp_floor) gp.at(t, l) += d / pt;
                    if (!detach_previous && pm >= clamp_floor) gp.at(t - 1, l) -= d / pm;
                }
            }
        });
}

/// Sum over stages of cross-entropy plus lambda times the smoothing term.
inline NodeId combined_loss(Tape& tape, const std::vector<NodeId>& stages,
                            const std::vector<int>& labels, const LossConfig& cfg) {
    cfg.validate();
    NodeId total = tape.constant(Tensor::scalar(0.0));
    for (NodeId stage : stages) {
        NodeId term = ce_loss(tape, stage, labels, cfg.clamp_floor);
        if (cfg.lambda != 0.0) {
            const NodeId smooth =
                tmse_loss(tape, stage, cfg.tau, cfg.clamp_floor, cfg.detach_previous);
            term = ops::add(tape, term, ops::scale(tape, smooth, cfg.lambda));
        }
        total = ops::add(tape, total, term);
    }
    return total;
}

}  // namespace msgcn
