#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "msgcn/common.hpp"
#include "msgcn/tape.hpp"

namespace msgcn {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
};

/// Compares reverse-mode gradients of a deterministic scalar function against
/// central finite differences over every entry of every listed parameter.
/// Relative error is |analytic - fd| / max(1, |analytic|).
inline GradCheckReport grad_check_report(const std::function<NodeId(Tape&)>& build,
                                         const std::vector<Parameter*>& params,
                                         double step = 1e-5) {
    auto eval = [&](const char* where) {
        Tape tape;
        const NodeId root = build(tape);
        const double loss = tape.value(root)[0];
        if (!std::isfinite(loss)) {
            throw NumericError(std::string("grad_check: non-finite loss during ") + where);
        }
        return std::pair<double, NodeId>(loss, root);
    };

    for (Parameter* p : params) p->zero_grad();
    {
        Tape tape;
        const NodeId root = build(tape);
        if (!std::isfinite(tape.value(root)[0])) {
            throw NumericError("grad_check: non-finite loss at base point");
        }
        tape.backward(root);
    }
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (int i = 0; i < p.value.numel(); ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + step;
            const double up = eval("positive probe").first;
            p.value[i] = saved - step;
            const double down = eval("negative probe").first;
            p.value[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double an = analytic[pi][i];
            const double rel = std::abs(an - fd) / std::max(1.0, std::abs(an));
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = p.name;
                report.worst_index = i;
            }
        }
    }
    return report;
}

inline double grad_check(const std::function<NodeId(Tape&)>& build,
                         const std::vector<Parameter*>& params, double step = 1e-5) {
    return grad_check_report(build, params, step).max_rel_err;
}

}  // namespace msgcn
