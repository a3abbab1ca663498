#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "msgcn/common.hpp"
#include "msgcn/data.hpp"
#include "msgcn/metrics.hpp"
#include "msgcn/training.hpp"

namespace msgcn {

/// One row per (trial, threshold), as a comma-separated table.
inline void write_metrics_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot write");
    out << "trial,subject,threshold,tp,fp,fn,precision,recall,f1,accuracy\n";
    for (const EvalRow& r : report.rows) {
        for (const F1Entry& e : r.f1) {
            out << r.trial_id << ',' << r.subject_id << ',' << detail::fmt_label(e.threshold)
                << ',' << e.tp << ',' << e.fp << ',' << e.fn << ','
                << detail::fmt_double(e.precision) << ',' << detail::fmt_double(e.recall) << ','
                << detail::fmt_double(e.f1) << ',' << detail::fmt_double(r.accuracy) << "\n";
        }
    }
}

/// Two-column comparison table: one row per seed and metric, variants side by
/// side. Rows arrive as (seed, variant) pairs from ablate().
inline void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& axis,
                               const std::string& path) {
    if (rows.size() % 2 != 0) throw Error("ablation table needs variant pairs");
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot write");
    const std::string& name_a = rows[0].variant;
    const std::string& name_b = rows[1].variant;
    out << "axis,seed,metric," << name_a << ',' << name_b << "\n";
    for (std::size_t i = 0; i + 1 < rows.size(); i += 2) {
        const AblationRow& a = rows[i];
        const AblationRow& b = rows[i + 1];
        for (const auto& [thr, f1a] : a.f1) {
            out << axis << ',' << a.seed << ",f1@" << detail::fmt_label(thr) << ','
                << detail::fmt_double(f1a) << ',' << detail::fmt_double(b.f1.at(thr)) << "\n";
        }
        out << axis << ',' << a.seed << ",accuracy," << detail::fmt_double(a.accuracy) << ','
            << detail::fmt_double(b.accuracy) << "\n";
    }
}

/// Timeline of ground-truth vs predicted segments as a small SVG: two label
/// bands, one colour per class.
inline void write_segments_svg(const std::vector<int>& gt, const std::vector<int>& pred,
                               const std::string& path) {
    if (gt.size() != pred.size()) throw DataError("svg: sequence lengths differ");
    const int width = 800, band = 40, gap = 20, pad = 10;
    const int height = 2 * band + gap + 2 * pad + 20;
    const double sx = static_cast<double>(width - 2 * pad) / static_cast<double>(gt.size());
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot write");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    auto color = [](int label) {
        const int hue = (label * 67) % 360;
        return "hsl(" + std::to_string(hue) + ",70%,55%)";
    };
    auto band_for = [&](const std::vector<int>& labels, int y, const char* title) {
        out << "<text x=\"" << pad << "\" y=\"" << y - 4 << "\" font-size=\"12\">" << title
            << "</text>\n";
        for (const Segment& s : extract_segments(labels)) {
            out << "<rect x=\"" << pad + s.start * sx << "\" y=\"" << y << "\" width=\""
                << s.length() * sx << "\" height=\"" << band << "\" fill=\"" << color(s.label)
                << "\"/>\n";
        }
    };
    band_for(gt, pad + 16, "ground truth");
    band_for(pred, pad + 16 + band + gap, "prediction");
    out << "</svg>\n";
}

}  // namespace msgcn
