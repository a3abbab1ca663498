#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

#include "msgcn/common.hpp"
#include "msgcn/metrics.hpp"

using namespace msgcn;

namespace {

// ---------------------------------------------------------------------------
// Brute-force oracle: re-derives the matching from raw label arrays with
// sample-counting IoU and naive scans. Same rule, independent code path.
// ---------------------------------------------------------------------------

struct OracleCounts {
    long tp = 0, fp = 0, fn = 0;
};

OracleCounts brute_force_match(const std::vector<int>& pred, const std::vector<int>& gt,
                               double tau) {
    const int T = static_cast<int>(pred.size());
    // Segment starts found by scanning every position.
    auto boundaries = [T](const std::vector<int>& labels) {
        std::vector<std::pair<int, int>> segs;  // [start, end)
        for (int t = 0; t < T; ++t) {
            if (t == 0 || labels[t] != labels[t - 1]) {
                int end = t + 1;
                while (end < T && labels[end] == labels[t]) ++end;
                segs.emplace_back(t, end);
            }
        }
        return segs;
    };
    const auto ps = boundaries(pred);
    const auto gs = boundaries(gt);

    auto counting_iou = [&](std::pair<int, int> a, std::pair<int, int> b) {
        int inter = 0, uni = 0;
        for (int t = 0; t < T; ++t) {
            const bool in_a = t >= a.first && t < a.second;
            const bool in_b = t >= b.first && t < b.second;
            inter += in_a && in_b;
            uni += in_a || in_b;
        }
        return uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
    };

    OracleCounts c;
    std::vector<bool> used(gs.size(), false);
    for (const auto& p : ps) {
        int best = -1;
        double best_iou = -1.0;
        for (std::size_t gi = 0; gi < gs.size(); ++gi) {
            if (used[gi] || gt[gs[gi].first] != pred[p.first]) continue;
            const double iou = counting_iou(p, gs[gi]);
            if (iou > best_iou) {
                best_iou = iou;
                best = static_cast<int>(gi);
            }
        }
        if (best >= 0 && best_iou >= tau) {
            used[static_cast<std::size_t>(best)] = true;
            ++c.tp;
        } else {
            ++c.fp;
        }
    }
    c.fn = static_cast<long>(gs.size()) - c.tp;
    return c;
}

// Maximum-cardinality assignment between predicted and ground-truth segments
// over edges with same class and IoU >= tau (augmenting-path search).
long optimal_assignment_tp(const std::vector<Segment>& ps, const std::vector<Segment>& gs,
                           double tau) {
    std::vector<std::vector<int>> edges(ps.size());
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
        for (std::size_t gi = 0; gi < gs.size(); ++gi) {
            if (ps[pi].label == gs[gi].label && segment_iou(ps[pi], gs[gi]) >= tau) {
                edges[pi].push_back(static_cast<int>(gi));
            }
        }
    }
    std::vector<int> match_of_gt(gs.size(), -1);
    std::vector<bool> visited;
    std::function<bool(int)> augment = [&](int pi) {
        for (int gi : edges[static_cast<std::size_t>(pi)]) {
            if (visited[static_cast<std::size_t>(gi)]) continue;
            visited[static_cast<std::size_t>(gi)] = true;
            if (match_of_gt[static_cast<std::size_t>(gi)] < 0 ||
                augment(match_of_gt[static_cast<std::size_t>(gi)])) {
                match_of_gt[static_cast<std::size_t>(gi)] = pi;
                return true;
            }
        }
        return false;
    };
    long matched = 0;
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
        visited.assign(gs.size(), false);
        if (augment(static_cast<int>(pi))) ++matched;
    }
    return matched;
}

std::vector<int> random_runs(Rng& rng, int T, int L) {
    std::vector<int> labels;
    while (static_cast<int>(labels.size()) < T) {
        const int cls = rng.uniform_int(0, L - 1);
        const int len = rng.uniform_int(1, 8);
        for (int i = 0; i < len && static_cast<int>(labels.size()) < T; ++i) {
            labels.push_back(cls);
        }
    }
    return labels;
}

}  // namespace

TEST_CASE("segment extraction", "[metrics]") {
    REQUIRE(extract_segments({7, 7, 7}) == std::vector<Segment>{{7, 0, 3}});
    REQUIRE(extract_segments({0, 1, 0}) ==
            std::vector<Segment>{{0, 0, 1}, {1, 1, 2}, {0, 2, 3}});

    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::vector<int> labels = random_runs(rng, rng.uniform_int(1, 60), 4);
        std::vector<int> rebuilt;
        int prev = -1;
        for (const Segment& s : extract_segments(labels)) {
            REQUIRE(s.start < s.end);
            REQUIRE(s.label != prev);
            prev = s.label;
            for (int t = s.start; t < s.end; ++t) rebuilt.push_back(s.label);
        }
        REQUIRE(rebuilt == labels);
    }
}

TEST_CASE("perfect prediction scores one at every threshold", "[metrics]") {
    Rng rng(5);
    const std::vector<int> labels = random_runs(rng, 40, 3);
    for (double tau : default_f1_thresholds()) {
        const F1Entry e = f1_at_tau(labels, labels, tau);
        REQUIRE(e.precision == 1.0);
        REQUIRE(e.recall == 1.0);
        REQUIRE(e.f1 == 1.0);
    }
}

TEST_CASE("split prediction worked example", "[metrics]") {
    // One ground-truth segment; the prediction splits it in half. Both halves
    // have IoU exactly 0.5: one true positive, one false positive.
    const std::vector<Segment> gt{{0, 0, 100}};
    const std::vector<Segment> pred{{0, 0, 50}, {0, 50, 100}};
    const F1Entry e = f1_match_segments(pred, gt, 0.5);
    REQUIRE(e.tp == 1);
    REQUIRE(e.fp == 1);
    REQUIRE(e.fn == 0);
    REQUIRE_THAT(e.f1, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
    // The IoU threshold is inclusive: both orders of the assignment give one
    // TP, so this agrees with the exhaustive assignment.
    REQUIRE(optimal_assignment_tp(pred, gt, 0.5) == 1);
}

TEST_CASE("length mismatch is a data error", "[metrics]") {
    REQUIRE_THROWS_AS(f1_at_tau({0, 1}, {0}, 0.5), DataError);
    REQUIRE_THROWS_AS(sample_accuracy({0, 1}, {0}), DataError);
}

TEST_CASE("greedy matching equals the brute-force oracle on random pairs", "[metrics]") {
    Rng rng(7);
    int optimal_mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int T = rng.uniform_int(1, 50);
        const int L = rng.uniform_int(1, 4);
        const std::vector<int> gt = random_runs(rng, T, L);
        std::vector<int> pred;
        if (rng.uniform() < 0.5) {
            pred = random_runs(rng, T, L);
        } else {
            pred = gt;
            for (auto& l : pred) {
                if (rng.uniform() < 0.15) l = rng.uniform_int(0, L - 1);
            }
        }
        for (double tau : default_f1_thresholds()) {
            const F1Entry e = f1_at_tau(pred, gt, tau);
            const OracleCounts o = brute_force_match(pred, gt, tau);
            REQUIRE(e.tp == o.tp);
            REQUIRE(e.fp == o.fp);
            REQUIRE(e.fn == o.fn);
            // Optimal-assignment comparison: the greedy rule can fall short
            // of an optimal matching when one prediction overlaps two
            // same-class truth segments and prefers the wrong one.
            // Discrepancies are flagged as matching-order sensitivity; they
            // must be rare and never exceed the optimum.
            const long opt = optimal_assignment_tp(extract_segments(pred), extract_segments(gt),
                                                   tau);
            REQUIRE(e.tp <= opt);
            if (e.tp != opt) ++optimal_mismatches;
        }
    }
    INFO("matching-order sensitivity count: " << optimal_mismatches << " of 3000");
    CHECK(optimal_mismatches <= 10);
}

TEST_CASE("f1 is non-increasing in the IoU threshold", "[metrics]") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int T = rng.uniform_int(2, 50);
        const std::vector<int> gt = random_runs(rng, T, 3);
        const std::vector<int> pred = random_runs(rng, T, 3);
        double prev = 2.0;
        for (double tau : {0.10, 0.25, 0.50, 0.75, 0.99}) {
            const double f1 = f1_at_tau(pred, gt, tau).f1;
            REQUIRE(f1 <= prev);
            prev = f1;
        }
    }
}

TEST_CASE("time reversal leaves counts unchanged", "[metrics]") {
    Rng rng(13);
    int order_sensitive = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int T = rng.uniform_int(1, 50);
        std::vector<int> gt = random_runs(rng, T, 4);
        std::vector<int> pred = random_runs(rng, T, 4);
        std::vector<int> gt_rev(gt.rbegin(), gt.rend());
        std::vector<int> pred_rev(pred.rbegin(), pred.rend());
        for (double tau : default_f1_thresholds()) {
            const F1Entry a = f1_at_tau(pred, gt, tau);
            const F1Entry b = f1_at_tau(pred_rev, gt_rev, tau);
            // The matching problem itself is exactly reversal-symmetric.
            REQUIRE(optimal_assignment_tp(extract_segments(pred), extract_segments(gt), tau) ==
                    optimal_assignment_tp(extract_segments(pred_rev), extract_segments(gt_rev),
                                          tau));
            // The left-to-right greedy can deviate in the same rare
            // configurations flagged above; count rather than forbid.
            if (a.tp != b.tp || a.fp != b.fp || a.fn != b.fn) ++order_sensitive;
        }
    }
    INFO("reversal order sensitivity count: " << order_sensitive << " of 300");
    CHECK(order_sensitive <= 3);
}

TEST_CASE("splitting a correct segment never helps and eventually hurts", "[metrics]") {
    Rng rng(17);
    const std::vector<int> labels = random_runs(rng, 60, 3);
    const std::vector<Segment> gt = extract_segments(labels);
    // Split the longest predicted segment into n equal same-class pieces.
    std::size_t longest = 0;
    for (std::size_t i = 1; i < gt.size(); ++i) {
        if (gt[i].length() > gt[longest].length()) longest = i;
    }
    double prev_f1 = 1.0;
    for (int n = 2; n <= 6; ++n) {
        std::vector<Segment> pred;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (i != longest) {
                pred.push_back(gt[i]);
                continue;
            }
            const Segment& s = gt[i];
            for (int k = 0; k < n; ++k) {
                const int a = s.start + k * s.length() / n;
                const int b = s.start + (k + 1) * s.length() / n;
                if (a < b) pred.push_back(Segment{s.label, a, b});
            }
        }
        const double f1 = f1_match_segments(pred, gt, 0.5).f1;
        REQUIRE(f1 <= prev_f1);
        REQUIRE(f1 < 1.0);
        prev_f1 = f1;
    }
    // With many pieces every fragment is below the threshold.
    REQUIRE(prev_f1 < f1_match_segments(gt, gt, 0.5).f1);
}

TEST_CASE("sample accuracy", "[metrics]") {
    REQUIRE(sample_accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
    REQUIRE(sample_accuracy({1, 1, 1}, {2, 2, 2}) == 0.0);
    std::vector<int> pred(10, 0), gt(10, 0);
    for (int i = 0; i < 5; ++i) gt[static_cast<std::size_t>(i)] = 1;
    REQUIRE(sample_accuracy(pred, gt) == 0.5);
}
