#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "msgcn/common.hpp"
#include "msgcn/graph.hpp"
#include "msgcn/tensor.hpp"

namespace msgcn {

/// One motion capture trial: T x N x C features at a sampling rate.
struct SkeletonSequence {
    Tensor values;  // T x N x C
    double sample_rate = 0.0;
    std::string subject_id;
    std::string trial_id;
    std::vector<std::string> class_names;  // optional class-name table

    int length() const { return values.dim(0); }
    int num_nodes() const { return values.dim(1); }
    int num_channels() const { return values.dim(2); }
};

using LabelSequence = std::vector<int>;

struct Trial {
    SkeletonSequence seq;
    LabelSequence labels;
};

struct Dataset {
    std::vector<Trial> trials;
    GraphLayout layout;
    std::vector<std::string> class_names;

    int num_classes() const {
        if (!class_names.empty()) return static_cast<int>(class_names.size());
        int mx = -1;
        for (const Trial& t : trials)
            for (int l : t.labels) mx = std::max(mx, l);
        return mx + 1;
    }
};

namespace detail {

// Shortest decimal that round-trips a double exactly.
inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Compact form for labels such as thresholds, where the value is an echo of
// an input rather than a computed quantity.
inline std::string fmt_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

struct LineReader {
    std::istream& in;
    std::string origin;
    int line_no = 0;

    bool next(std::string& line) {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(origin + ":" + std::to_string(line_no) + ": " + what);
    }

    std::string expect_field(const std::string& key) {
        std::string line;
        if (!next(line)) fail("unexpected end of file, expected '" + key + ":'");
        const auto colon = line.find(':');
        if (colon == std::string::npos || line.substr(0, colon) != key) {
            fail("expected '" + key + ":', got '" + line + "'");
        }
        std::string v = line.substr(colon + 1);
        const auto first = v.find_first_not_of(" \t");
        return first == std::string::npos ? std::string() : v.substr(first);
    }

    int expect_int_field(const std::string& key) {
        const std::string v = expect_field(key);
        try {
            return std::stoi(v);
        } catch (const std::exception&) {
            fail(key + ": expected integer, got '" + v + "'");
        }
    }

    double expect_double_field(const std::string& key) {
        const std::string v = expect_field(key);
        try {
            return std::stod(v);
        } catch (const std::exception&) {
            fail(key + ": expected number, got '" + v + "'");
        }
    }
};

inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    if (out.size() == 1 && out[0].empty()) out.clear();
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sequence/label text format. A sequence file is a header followed by T lines
// of N*C comma-separated values; the parallel label file holds T integer
// lines. Values are printed with 17 significant digits so save -> load is
// bit-exact.
// ---------------------------------------------------------------------------

inline void save_sequence(const SkeletonSequence& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot write");
    const int T = s.length(), N = s.num_nodes(), C = s.num_channels();
    out << "msgcn-sequence v1\n";
    out << "T: " << T << "\n";
    out << "N: " << N << "\n";
    out << "C: " << C << "\n";
    out << "sample_rate: " << detail::fmt_double(s.sample_rate) << "\n";
    out << "subject: " << s.subject_id << "\n";
    out << "trial: " << s.trial_id << "\n";
    out << "classes:";
    for (std::size_t i = 0; i < s.class_names.size(); ++i) {
        out << (i ? "," : " ") << s.class_names[i];
    }
    out << "\n";
    out << "data:\n";
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < N * C; ++i) {
            if (i) out << ',';
            out << detail::fmt_double(s.values[t * N * C + i]);
        }
        out << "\n";
    }
}

inline void save_labels(const LabelSequence& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot write");
    out << "msgcn-labels v1\n";
    out << "T: " << labels.size() << "\n";
    out << "labels:\n";
    for (int l : labels) out << l << "\n";
}

inline SkeletonSequence load_sequence_only(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open");
    detail::LineReader r{in, path};
    std::string line;
    if (!r.next(line) || line != "msgcn-sequence v1") r.fail("expected header 'msgcn-sequence v1'");
    const int T = r.expect_int_field("T");
    const int N = r.expect_int_field("N");
    const int C = r.expect_int_field("C");
    if (T < 1 || N < 1 || C < 1) r.fail("T, N, C must be positive");
    SkeletonSequence s;
    s.sample_rate = r.expect_double_field("sample_rate");
    s.subject_id = r.expect_field("subject");
    s.trial_id = r.expect_field("trial");
    s.class_names = detail::split_csv(r.expect_field("classes"));
    if (r.expect_field("data") != "") r.fail("unexpected content after 'data:'");
    s.values = Tensor({T, N, C});
    for (int t = 0; t < T; ++t) {
        if (!r.next(line)) r.fail("expected " + std::to_string(T) + " data rows, got " +
                                  std::to_string(t));
        const std::vector<std::string> cells = detail::split_csv(line);
        if (static_cast<int>(cells.size()) != N * C) {
            r.fail("row has " + std::to_string(cells.size()) + " values, expected " +
                   std::to_string(N * C));
        }
        for (int i = 0; i < N * C; ++i) {
            try {
                s.values[t * N * C + i] = std::stod(cells[static_cast<std::size_t>(i)]);
            } catch (const std::exception&) {
                r.fail("bad value '" + cells[static_cast<std::size_t>(i)] + "'");
            }
        }
    }
    if (!s.values.all_finite()) throw DataError(path + ": non-finite values");
    return s;
}

inline LabelSequence load_labels(const std::string& path, int num_classes = -1) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open");
    detail::LineReader r{in, path};
    std::string line;
    if (!r.next(line) || line != "msgcn-labels v1") r.fail("expected header 'msgcn-labels v1'");
    const int T = r.expect_int_field("T");
    if (r.expect_field("labels") != "") r.fail("unexpected content after 'labels:'");
    LabelSequence labels;
    labels.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        if (!r.next(line)) r.fail("expected " + std::to_string(T) + " labels, got " +
                                  std::to_string(t));
        int v = 0;
        try {
            v = std::stoi(line);
        } catch (const std::exception&) {
            r.fail("bad label '" + line + "'");
        }
        if (v < 0 || (num_classes > 0 && v >= num_classes)) {
            r.fail("class id " + std::to_string(v) + " outside [0, " +
                   std::to_string(num_classes) + ")");
        }
        labels.push_back(v);
    }
    return labels;
}

inline std::string label_path_for(const std::string& seq_path) {
    const std::string suffix = ".seq.txt";
    if (seq_path.size() < suffix.size() ||
        seq_path.compare(seq_path.size() - suffix.size(), suffix.size(), suffix) != 0) {
        throw ParseError(seq_path + ": sequence files must end in " + suffix);
    }
    return seq_path.substr(0, seq_path.size() - suffix.size()) + ".lab.txt";
}

/// Loads a `<stem>.seq.txt` / `<stem>.lab.txt` pair and cross-checks lengths.
inline Trial load_sequence(const std::string& seq_path) {
    Trial t;
    t.seq = load_sequence_only(seq_path);
    const int L = static_cast<int>(t.seq.class_names.size());
    t.labels = load_labels(label_path_for(seq_path), L > 0 ? L : -1);
    if (static_cast<int>(t.labels.size()) != t.seq.length()) {
        throw ParseError(seq_path + ": " + std::to_string(t.seq.length()) + " samples but " +
                         std::to_string(t.labels.size()) + " labels");
    }
    return t;
}

inline void save_trial(const Trial& t, const std::string& dir) {
    const std::filesystem::path base = std::filesystem::path(dir) / t.seq.trial_id;
    save_sequence(t.seq, base.string() + ".seq.txt");
    save_labels(t.labels, base.string() + ".lab.txt");
}

inline void save_dataset(const Dataset& d, const std::string& dir) {
    std::filesystem::create_directories(dir);
    save_layout(d.layout, (std::filesystem::path(dir) / "layout.layout").string());
    for (const Trial& t : d.trials) save_trial(t, dir);
}

inline Dataset load_dataset(const std::string& dir) {
    Dataset d;
    const std::filesystem::path root(dir);
    if (!std::filesystem::is_directory(root)) throw ParseError(dir + ": not a directory");
    std::vector<std::string> seq_files;
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > 8 && name.compare(name.size() - 8, 8, ".seq.txt") == 0) {
            seq_files.push_back(entry.path().string());
        }
    }
    std::sort(seq_files.begin(), seq_files.end());
    if (seq_files.empty()) throw DataError(dir + ": no *.seq.txt files");
    for (const std::string& f : seq_files) d.trials.push_back(load_sequence(f));
    d.class_names = d.trials.front().seq.class_names;
    const auto layout_file = root / "layout.layout";
    if (std::filesystem::exists(layout_file)) d.layout = load_layout(layout_file.string());
    return d;
}

// ---------------------------------------------------------------------------
// Binary sequence container, mirroring the checkpoint layout: magic, version,
// a JSON header, labels as little-endian 32-bit ints, features as raw
// little-endian 64-bit floats. One file holds the trial and its labels.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kSequenceMagic[8] = {'M', 'S', 'G', 'C', 'N', 'S', 'E', 'Q'};
inline constexpr std::uint32_t kSequenceVersion = 1;

}  // namespace detail

inline void save_trial_binary(const Trial& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(path + ": cannot write");
    out.write(detail::kSequenceMagic, 8);
    detail::write_u32(out, detail::kSequenceVersion);
    std::string header = "{\"sample_rate\":" + detail::fmt_double(t.seq.sample_rate) +
                         ",\"subject\":\"" + t.seq.subject_id + "\",\"trial\":\"" +
                         t.seq.trial_id + "\",\"classes\":[";
    for (std::size_t i = 0; i < t.seq.class_names.size(); ++i) {
        header += (i ? ",\"" : "\"") + t.seq.class_names[i] + "\"";
    }
    header += "]}";
    detail::write_u64(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    detail::write_u32(out, static_cast<std::uint32_t>(t.seq.length()));
    detail::write_u32(out, static_cast<std::uint32_t>(t.seq.num_nodes()));
    detail::write_u32(out, static_cast<std::uint32_t>(t.seq.num_channels()));
    for (int l : t.labels) detail::write_u32(out, static_cast<std::uint32_t>(l));
    out.write(reinterpret_cast<const char*>(t.seq.values.data()),
              static_cast<std::streamsize>(sizeof(double) * t.seq.values.numel()));
    if (!out) throw Error(path + ": write failed");
}

inline Trial load_trial_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open");
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, detail::kSequenceMagic, 8) != 0) {
        throw ParseError(path + ": not a binary sequence file");
    }
    const std::uint32_t version = detail::read_u32(in, path);
    if (version != detail::kSequenceVersion) {
        throw ParseError(path + ": unsupported sequence version " + std::to_string(version));
    }
    const std::uint64_t header_len = detail::read_u64(in, path);
    std::string header(header_len, '\0');
    if (!in.read(header.data(), static_cast<std::streamsize>(header_len))) {
        throw ParseError(path + ": truncated file");
    }
    Trial t;
    // Minimal field extraction from the known-shape header.
    auto string_field = [&](const std::string& key) {
        const std::string tag = "\"" + key + "\":\"";
        const auto at = header.find(tag);
        if (at == std::string::npos) throw ParseError(path + ": header missing " + key);
        const auto end = header.find('"', at + tag.size());
        return header.substr(at + tag.size(), end - at - tag.size());
    };
    {
        const std::string tag = "\"sample_rate\":";
        const auto at = header.find(tag);
        if (at == std::string::npos) throw ParseError(path + ": header missing sample_rate");
        t.seq.sample_rate = std::strtod(header.c_str() + at + tag.size(), nullptr);
    }
    t.seq.subject_id = string_field("subject");
    t.seq.trial_id = string_field("trial");
    {
        const auto open = header.find("\"classes\":[");
        const auto close = header.find(']', open);
        std::string list = header.substr(open + 11, close - open - 11);
        for (std::string& name : detail::split_csv(list)) {
            if (name.size() >= 2) t.seq.class_names.push_back(name.substr(1, name.size() - 2));
        }
    }
    const int T = static_cast<int>(detail::read_u32(in, path));
    const int N = static_cast<int>(detail::read_u32(in, path));
    const int C = static_cast<int>(detail::read_u32(in, path));
    if (T < 1 || N < 1 || C < 1) throw ParseError(path + ": bad dimensions");
    t.labels.resize(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) {
        t.labels[static_cast<std::size_t>(i)] = static_cast<int>(detail::read_u32(in, path));
    }
    t.seq.values = Tensor({T, N, C});
    if (!in.read(reinterpret_cast<char*>(t.seq.values.data()),
                 static_cast<std::streamsize>(sizeof(double) * t.seq.values.numel()))) {
        throw ParseError(path + ": truncated file");
    }
    return t;
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

/// Displacement and root-relative coordinates from 3-axis joint positions:
/// channels 0-2 are x_t - x_{t-1} per node (zero at the first sample),
/// channels 3-5 are x_t(node) - x_t(root).
inline SkeletonSequence compute_features(const Tensor& positions, const GraphLayout& layout,
                                         double sample_rate = 0.0) {
    if (positions.rank() != 3 || positions.dim(2) != 3) {
        throw DimensionError("compute_features: expected T x N x 3 positions, got " +
                             positions.shape_str());
    }
    const int T = positions.dim(0), N = positions.dim(1);
    if (N != layout.num_nodes) {
        throw DimensionError("compute_features: " + std::to_string(N) + " nodes vs layout " +
                             std::to_string(layout.num_nodes));
    }
    SkeletonSequence s;
    s.sample_rate = sample_rate;
    s.values = Tensor({T, N, 6});
    for (int t = 0; t < T; ++t) {
        for (int n = 0; n < N; ++n) {
            for (int a = 0; a < 3; ++a) {
                const double cur = positions.at(t, n, a);
                s.values.at(t, n, a) = t > 0 ? cur - positions.at(t - 1, n, a) : 0.0;
                s.values.at(t, n, 3 + a) = cur - positions.at(t, layout.root, a);
            }
        }
    }
    return s;
}

/// Decimation to a lower rate whose ratio to the source rate is an integer.
inline Trial resample(const Trial& trial, double target_rate) {
    const double source = trial.seq.sample_rate;
    if (target_rate <= 0.0 || source <= 0.0) throw ConfigError("resample: rates must be positive");
    const double ratio = source / target_rate;
    const long stride = std::lround(ratio);
    if (stride < 1 || std::abs(ratio - static_cast<double>(stride)) > 1e-9) {
        throw ConfigError("resample: " + detail::fmt_double(source) + " Hz to " +
                          detail::fmt_double(target_rate) +
                          " Hz is not an integer decimation");
    }
    if (stride == 1) {
        Trial out = trial;
        out.seq.sample_rate = target_rate;
        return out;
    }
    const int T = trial.seq.length(), N = trial.seq.num_nodes(), C = trial.seq.num_channels();
    const int T_out = (T + static_cast<int>(stride) - 1) / static_cast<int>(stride);
    Trial out;
    out.seq = trial.seq;
    out.seq.sample_rate = target_rate;
    out.seq.values = Tensor({T_out, N, C});
    out.labels.resize(static_cast<std::size_t>(T_out));
    for (int i = 0; i < T_out; ++i) {
        const int t = i * static_cast<int>(stride);
        for (int j = 0; j < N * C; ++j) {
            out.seq.values[i * N * C + j] = trial.seq.values[t * N * C + j];
        }
        out.labels[static_cast<std::size_t>(i)] = trial.labels[static_cast<std::size_t>(t)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Generator settings. Each class is a distinct per-joint sinusoid (class
/// frequency, per-node phase, optional per-class static pose offset) over a
/// small chain layout; labels follow the generating class. With
/// label_noise > 0 individual training labels are flipped, which breaks the
/// minimum-run guarantee on purpose.
struct SyntheticConfig {
    int num_classes = 3;
    int num_sequences = 20;
    int min_length = 150;
    int max_length = 250;
    int min_segment = 20;
    int max_segment = 80;
    double noise_sigma = 0.05;
    double pose_scale = 1.0;
    double amplitude = 0.5;
    double base_frequency = 0.5;
    double frequency_step = 0.5;
    bool equalize_velocity = false;
    double label_noise = 0.0;
    int num_subjects = 5;
    double sample_rate = 50.0;
    int chain_nodes = 5;
    std::uint64_t seed = 1;

    void validate() const {
        if (num_classes < 2) throw ConfigError("synthetic: need at least 2 classes");
        if (num_sequences < 1) throw ConfigError("synthetic: need at least 1 sequence");
        if (min_length < min_segment || min_length > max_length || min_segment < 1 ||
            min_segment > max_segment) {
            throw ConfigError("synthetic: inconsistent length/segment bounds");
        }
        if (noise_sigma < 0.0 || label_noise < 0.0 || label_noise >= 1.0) {
            throw ConfigError("synthetic: invalid noise settings");
        }
        if (num_subjects < 1 || chain_nodes < 1) throw ConfigError("synthetic: invalid counts");
    }
};

inline Dataset generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    Dataset d;
    d.layout = chain_layout(cfg.chain_nodes);
    for (int k = 0; k < cfg.num_classes; ++k) d.class_names.push_back("class" + std::to_string(k));

    const int N = cfg.chain_nodes;
    const int L = cfg.num_classes;
    // Per-class motion parameters.
    std::vector<double> freq(static_cast<std::size_t>(L));
    std::vector<double> amp(static_cast<std::size_t>(L));
    Tensor offset({L, N, 3});
    Tensor phase({L, N, 3});
    for (int k = 0; k < L; ++k) {
        freq[k] = cfg.base_frequency + k * cfg.frequency_step;
        amp[k] = cfg.equalize_velocity ? cfg.amplitude * cfg.base_frequency / freq[k]
                                       : cfg.amplitude;
        for (int n = 0; n < N; ++n) {
            for (int a = 0; a < 3; ++a) {
                offset.at(k, n, a) = cfg.pose_scale * rng.uniform(-1.0, 1.0);
                phase.at(k, n, a) = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            }
        }
    }

    for (int m = 0; m < cfg.num_sequences; ++m) {
        const int T = rng.uniform_int(cfg.min_length, cfg.max_length);
        LabelSequence labels(static_cast<std::size_t>(T));
        int t = 0, prev = -1;
        while (t < T) {
            int k = rng.uniform_int(0, L - 1);
            if (k == prev) k = (k + 1) % L;
            int len = std::min(rng.uniform_int(cfg.min_segment, cfg.max_segment), T - t);
            if (T - t - len < cfg.min_segment) len = T - t;
            std::fill(labels.begin() + t, labels.begin() + t + len, k);
            prev = k;
            t += len;
        }

        Tensor positions({T, N, 3});
        for (int ti = 0; ti < T; ++ti) {
            const int k = labels[static_cast<std::size_t>(ti)];
            const double w = 2.0 * 3.14159265358979323846 * freq[k] * ti / cfg.sample_rate;
            for (int n = 0; n < N; ++n) {
                for (int a = 0; a < 3; ++a) {
                    positions.at(ti, n, a) = offset.at(k, n, a) +
                                             amp[k] * std::sin(w + phase.at(k, n, a)) +
                                             cfg.noise_sigma * rng.gaussian();
                }
            }
        }

        if (cfg.label_noise > 0.0) {
            for (int ti = 0; ti < T; ++ti) {
                if (rng.uniform() < cfg.label_noise) {
                    const int k = labels[static_cast<std::size_t>(ti)];
                    labels[static_cast<std::size_t>(ti)] = (k + 1 + rng.uniform_int(0, L - 2)) % L;
                }
            }
        }

        Trial trial;
        trial.seq = compute_features(positions, d.layout, cfg.sample_rate);
        trial.seq.subject_id = "s" + std::to_string(m % cfg.num_subjects + 1);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "t%03d", m + 1);
        trial.seq.trial_id = buf;
        trial.seq.class_names = d.class_names;
        trial.labels = std::move(labels);
        d.trials.push_back(std::move(trial));
    }
    return d;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitPlan {
    enum class Mode { kFixed, kLoso };
    Mode mode = Mode::kLoso;
    std::vector<std::string> test_subjects;   // fixed mode
    std::vector<std::string> train_subjects;  // fixed mode, optional (default: the rest)
};

struct Fold {
    std::string name;
    std::vector<int> train;
    std::vector<int> test;
};

inline SplitPlan parse_split_plan(const std::string& text, const std::string& origin) {
    SplitPlan plan;
    bool has_mode = false;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": expected 'field: value'");
        }
        std::string key = line.substr(first, colon - first);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        std::string val = line.substr(colon + 1);
        std::istringstream vs(val);
        std::string tok;
        std::vector<std::string> items;
        while (vs >> tok) {
            for (const std::string& piece : detail::split_csv(tok)) {
                if (!piece.empty()) items.push_back(piece);
            }
        }
        if (key == "mode") {
            if (items.size() != 1 || (items[0] != "fixed" && items[0] != "loso")) {
                throw ParseError(origin + ":" + std::to_string(line_no) +
                                 ": mode must be fixed or loso");
            }
            plan.mode = items[0] == "fixed" ? SplitPlan::Mode::kFixed : SplitPlan::Mode::kLoso;
            has_mode = true;
        } else if (key == "test") {
            plan.test_subjects = items;
        } else if (key == "train") {
            plan.train_subjects = items;
        } else {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": unknown field '" + key +
                             "'");
        }
    }
    if (!has_mode) throw ParseError(origin + ": missing mode");
    return plan;
}

inline SplitPlan load_split_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open split plan");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_split_plan(buf.str(), path);
}

inline std::vector<Fold> make_splits(const Dataset& d, const SplitPlan& plan) {
    std::vector<Fold> folds;
    if (plan.mode == SplitPlan::Mode::kLoso) {
        std::set<std::string> subjects;
        for (const Trial& t : d.trials) subjects.insert(t.seq.subject_id);
        for (const std::string& s : subjects) {
            Fold f;
            f.name = "loso-" + s;
            for (int i = 0; i < static_cast<int>(d.trials.size()); ++i) {
                (d.trials[static_cast<std::size_t>(i)].seq.subject_id == s ? f.test : f.train)
                    .push_back(i);
            }
            folds.push_back(std::move(f));
        }
    } else {
        if (plan.test_subjects.empty()) throw ConfigError("split: fixed mode needs test subjects");
        const std::set<std::string> test(plan.test_subjects.begin(), plan.test_subjects.end());
        for (const std::string& s : plan.train_subjects) {
            if (test.count(s)) {
                throw ConfigError("split: subject " + s + " appears in both train and test");
            }
        }
        const std::set<std::string> train(plan.train_subjects.begin(), plan.train_subjects.end());
        Fold f;
        f.name = "fixed";
        for (int i = 0; i < static_cast<int>(d.trials.size()); ++i) {
            const std::string& s = d.trials[static_cast<std::size_t>(i)].seq.subject_id;
            if (test.count(s)) {
                f.test.push_back(i);
            } else if (train.empty() || train.count(s)) {
                f.train.push_back(i);
            }
        }
        folds.push_back(std::move(f));
    }
    for (const Fold& f : folds) {
        if (f.train.empty() || f.test.empty()) {
            throw ConfigError("split: fold " + f.name + " has an empty partition");
        }
    }
    return folds;
}

}  // namespace msgcn
