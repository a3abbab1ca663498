#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "msgcn/common.hpp"

namespace msgcn {

/// Maximal constant-label run; start inclusive, end exclusive.
struct Segment {
    int label = 0;
    int start = 0;
    int end = 0;

    int length() const { return end - start; }
    bool operator==(const Segment&) const = default;
};

inline std::vector<Segment> extract_segments(const std::vector<int>& labels) {
    std::vector<Segment> out;
    const int T = static_cast<int>(labels.size());
    int start = 0;
    for (int t = 1; t <= T; ++t) {
        if (t == T || labels[static_cast<std::size_t>(t)] != labels[static_cast<std::size_t>(start)]) {
            out.push_back(Segment{labels[static_cast<std::size_t>(start)], start, t});
            start = t;
        }
    }
    return out;
}

inline double segment_iou(const Segment& a, const Segment& b) {
    const int inter = std::max(0, std::min(a.end, b.end) - std::max(a.start, b.start));
    const int uni = a.length() + b.length() - inter;
    return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

/// Segmental counts and scores at one IoU threshold.
struct F1Entry {
    double threshold = 0.0;
    long tp = 0;
    long fp = 0;
    long fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline F1Entry score_from_counts(double threshold, long tp, long fp, long fn) {
    F1Entry e;
    e.threshold = threshold;
    e.tp = tp;
    e.fp = fp;
    e.fn = fn;
    e.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : (fn == 0 ? 1.0 : 0.0);
    e.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : (fp == 0 ? 1.0 : 0.0);
    const double denom = tp + 0.5 * (fp + fn);
    e.f1 = denom > 0.0 ? tp / denom : 1.0;  // all counts zero: both sides empty
    return e;
}

/// Segmental F1 matching core. Predicted segments are processed in temporal
/// order; each is matched to the unmatched same-class ground-truth segment of
/// maximal IoU (ties to the earlier start) and counts as TP when that IoU
/// reaches the threshold, otherwise FP. FN is the number of unmatched
/// ground-truth segments. All classes are pooled.
inline F1Entry f1_match_segments(const std::vector<Segment>& ps, const std::vector<Segment>& gs,
                                 double tau_iou) {
    std::vector<bool> matched(gs.size(), false);
    long tp = 0, fp = 0;
    for (const Segment& p : ps) {
        int best = -1;
        double best_iou = -1.0;
        for (std::size_t gi = 0; gi < gs.size(); ++gi) {
            if (matched[gi] || gs[gi].label != p.label) continue;
            const double iou = segment_iou(p, gs[gi]);
            if (iou > best_iou) {
                best_iou = iou;
                best = static_cast<int>(gi);
            }
        }
        if (best >= 0 && best_iou >= tau_iou) {
            matched[static_cast<std::size_t>(best)] = true;
            ++tp;
        } else {
            ++fp;
        }
    }
    const long fn = static_cast<long>(gs.size()) - tp;
    return score_from_counts(tau_iou, tp, fp, fn);
}

inline F1Entry f1_at_tau(const std::vector<int>& pred, const std::vector<int>& gt,
                         double tau_iou) {
    if (pred.size() != gt.size()) {
        throw DataError("f1: prediction length " + std::to_string(pred.size()) +
                        " != ground truth length " + std::to_string(gt.size()));
    }
    return f1_match_segments(extract_segments(pred), extract_segments(gt), tau_iou);
}

inline const std::vector<double>& default_f1_thresholds() {
    static const std::vector<double> t{0.10, 0.25, 0.50};
    return t;
}

inline std::vector<F1Entry> f1_report(const std::vector<int>& pred, const std::vector<int>& gt,
                                      const std::vector<double>& thresholds = default_f1_thresholds()) {
    std::vector<F1Entry> out;
    out.reserve(thresholds.size());
    for (double t : thresholds) out.push_back(f1_at_tau(pred, gt, t));
    return out;
}

inline double sample_accuracy(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.size() != gt.size()) {
        throw DataError("accuracy: prediction length " + std::to_string(pred.size()) +
                        " != ground truth length " + std::to_string(gt.size()));
    }
    if (pred.empty()) return 1.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == gt[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace msgcn
