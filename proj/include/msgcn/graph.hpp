#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "msgcn/common.hpp"
#include "msgcn/tensor.hpp"

namespace msgcn {

/// Skeleton topology: joints as nodes, bones as undirected edges, and the
/// root joint the spatial partitioning is measured against.
struct GraphLayout {
    int num_nodes = 0;
    std::vector<std::pair<int, int>> edges;
    int root = 0;
    std::string name;
};

inline void validate_layout(const GraphLayout& g) {
    if (g.num_nodes <= 0) throw ConfigError("layout: num_nodes must be positive");
    if (g.root < 0 || g.root >= g.num_nodes) {
        throw ConfigError("layout: root " + std::to_string(g.root) + " outside [0, " +
                          std::to_string(g.num_nodes) + ")");
    }
    std::vector<std::vector<bool>> seen(static_cast<std::size_t>(g.num_nodes),
                                        std::vector<bool>(static_cast<std::size_t>(g.num_nodes)));
    for (const auto& [a, b] : g.edges) {
        if (a < 0 || a >= g.num_nodes || b < 0 || b >= g.num_nodes) {
            throw ConfigError("layout: edge " + std::to_string(a) + "-" + std::to_string(b) +
                              " outside [0, " + std::to_string(g.num_nodes) + ")");
        }
        if (a == b) throw ConfigError("layout: self-loop at node " + std::to_string(a));
        if (seen[a][b]) {
            throw ConfigError("layout: duplicate edge " + std::to_string(a) + "-" +
                              std::to_string(b));
        }
        seen[a][b] = seen[b][a] = true;
    }
}

/// Breadth-first hop count from the root. Unreachable nodes are a
/// construction error (the layout must be connected).
inline std::vector<int> hop_distances(const GraphLayout& g) {
    validate_layout(g);
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(g.num_nodes));
    for (const auto& [a, b] : g.edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::vector<int> dist(static_cast<std::size_t>(g.num_nodes), -1);
    std::deque<int> queue{g.root};
    dist[g.root] = 0;
    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        for (int v : adj[u]) {
            if (dist[v] < 0) {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    std::vector<int> unreachable;
    for (int i = 0; i < g.num_nodes; ++i)
        if (dist[i] < 0) unreachable.push_back(i);
    if (!unreachable.empty()) {
        std::string msg = "layout: disconnected, unreachable nodes:";
        for (int i : unreachable) msg += " " + std::to_string(i);
        throw ConfigError(msg);
    }
    return dist;
}

/// The three 1-hop neighbourhood subsets as unnormalized 0/1 matrices,
/// indexed [self, closer, farther]. Entry (i, j) marks node j as a member of
/// node i's sampling area under that subset. Neighbours at equal root
/// distance join the closer subset.
inline std::array<Tensor, 3> partition(const GraphLayout& g, const std::vector<int>& hops) {
    const int N = g.num_nodes;
    std::array<Tensor, 3> parts{Tensor({N, N}), Tensor({N, N}), Tensor({N, N})};
    for (int i = 0; i < N; ++i) parts[0].at(i, i) = 1.0;
    for (const auto& [a, b] : g.edges) {
        // Ordered pair (i, j): j contributes to i.
        for (const auto& [i, j] : {std::pair<int, int>{a, b}, std::pair<int, int>{b, a}}) {
            if (hops[j] > hops[i]) {
                parts[2].at(i, j) = 1.0;
            } else {
                parts[1].at(i, j) = 1.0;
            }
        }
    }
    return parts;
}

enum class Subset { kSelf = 0, kCloser = 1, kFarther = 2 };

/// Per-subset degree-normalized adjacency plus the hop distances they were
/// derived from. Immutable once built; shared freely across threads.
struct PartitionedAdjacency {
    int num_nodes = 0;
    std::array<Tensor, 3> matrices;  // self, closer, farther
    std::vector<int> hops;

    const Tensor& operator[](Subset s) const { return matrices[static_cast<std::size_t>(s)]; }
};

/// Degree normalization: entry (i, j) becomes A(i,j) / sqrt(d_out(i) * d_in(j))
/// with degrees taken from the subset's own matrix. Symmetric inputs reduce to
/// the usual symmetric normalization; any nonzero entry has nonzero degrees on
/// both sides, and all-zero rows or columns simply stay zero.
inline Tensor normalize_subset(const Tensor& a) {
    const int N = a.dim(0);
    std::vector<double> row_deg(static_cast<std::size_t>(N), 0.0);
    std::vector<double> col_deg(static_cast<std::size_t>(N), 0.0);
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
            row_deg[i] += a.at(i, j);
            col_deg[j] += a.at(i, j);
        }
    }
    Tensor out({N, N});
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
            if (a.at(i, j) != 0.0) {
                out.at(i, j) = a.at(i, j) / std::sqrt(row_deg[i] * col_deg[j]);
            }
        }
    }
    return out;
}

inline PartitionedAdjacency normalize(const std::array<Tensor, 3>& parts, std::vector<int> hops) {
    PartitionedAdjacency adj;
    adj.num_nodes = parts[0].dim(0);
    adj.hops = std::move(hops);
    for (std::size_t p = 0; p < 3; ++p) adj.matrices[p] = normalize_subset(parts[p]);
    return adj;
}

inline PartitionedAdjacency build_adjacency(const GraphLayout& g) {
    std::vector<int> hops = hop_distances(g);
    const std::array<Tensor, 3> parts = partition(g, hops);
    return normalize(parts, std::move(hops));
}

// ---------------------------------------------------------------------------
// Layout text format
//
//   # comment
//   num_nodes: 9
//   root: 0
//   edges: 0-1 1-2 2-3
//
// Fields may appear in any order, each at most once; unknown fields are
// rejected. Edge pairs are separated by spaces or commas.
// ---------------------------------------------------------------------------

inline GraphLayout parse_layout_text(const std::string& text, const std::string& origin) {
    GraphLayout g;
    bool has_nodes = false, has_root = false, has_edges = false;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& what) {
        throw ParseError(origin + ":" + std::to_string(line_no) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) fail("expected 'field: value'");
        std::string key = line.substr(first, colon - first);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        std::string val = line.substr(colon + 1);

        std::istringstream vs(val);
        if (key == "num_nodes") {
            if (has_nodes) fail("duplicate num_nodes");
            if (!(vs >> g.num_nodes)) fail("num_nodes: expected integer");
            has_nodes = true;
        } else if (key == "root") {
            if (has_root) fail("duplicate root");
            if (!(vs >> g.root)) fail("root: expected integer");
            has_root = true;
        } else if (key == "edges") {
            if (has_edges) fail("duplicate edges");
            std::string tok;
            while (vs >> tok) {
                if (!tok.empty() && tok.back() == ',') tok.pop_back();
                if (tok.empty()) continue;
                const auto dash = tok.find('-');
                if (dash == std::string::npos) fail("edge '" + tok + "': expected a-b");
                try {
                    g.edges.emplace_back(std::stoi(tok.substr(0, dash)),
                                         std::stoi(tok.substr(dash + 1)));
                } catch (const std::exception&) {
                    fail("edge '" + tok + "': expected integers");
                }
            }
            has_edges = true;
        } else {
            fail("unknown field '" + key + "'");
        }
    }
    if (!has_nodes) throw ParseError(origin + ": missing num_nodes");
    if (!has_root) throw ParseError(origin + ": missing root");
    if (!has_edges) throw ParseError(origin + ": missing edges");
    g.name = origin;
    validate_layout(g);
    return g;
}

inline GraphLayout load_layout(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open layout file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_layout_text(buf.str(), path);
}

inline void save_layout(const GraphLayout& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot write layout file");
    out << "num_nodes: " << g.num_nodes << "\n";
    out << "root: " << g.root << "\n";
    out << "edges:";
    for (const auto& [a, b] : g.edges) out << " " << a << "-" << b;
    out << "\n";
}

namespace detail {

// Kinect v2 25-joint skeleton.
// 0 spine_base  1 spine_mid  2 neck  3 head  4 shoulder_l  5 elbow_l
// 6 wrist_l  7 hand_l  8 shoulder_r  9 elbow_r  10 wrist_r  11 hand_r
// 12 hip_l  13 knee_l  14 ankle_l  15 foot_l  16 hip_r  17 knee_r
// 18 ankle_r  19 foot_r  20 spine_shoulder  21 handtip_l  22 thumb_l
// 23 handtip_r  24 thumb_r
inline constexpr const char* kPkuMmdLayout =
    "num_nodes: 25\n"
    "root: 1\n"
    "edges: 0-1 1-20 20-2 2-3 20-4 4-5 5-6 6-7 7-21 6-22"
    " 20-8 8-9 9-10 10-11 11-23 10-24"
    " 0-12 12-13 13-14 14-15 0-16 16-17 17-18 18-19\n";

// Six inertial sensors on the lower limbs.
// 0 thigh_r  1 shin_r  2 foot_r  3 thigh_l  4 shin_l  5 foot_l
inline constexpr const char* kHugadbLayout =
    "num_nodes: 6\n"
    "root: 0\n"
    "edges: 0-1 1-2 3-4 4-5 0-3\n";

// Nineteen-limb full-body model.
// 0 pelvis  1 torso  2 chest  3 neck  4 head  5 shoulder_l  6 upperarm_l
// 7 forearm_l  8 hand_l  9 shoulder_r  10 upperarm_r  11 forearm_r
// 12 hand_r  13 thigh_l  14 shank_l  15 foot_l  16 thigh_r  17 shank_r
// 18 foot_r
inline constexpr const char* kLaraLayout =
    "num_nodes: 19\n"
    "root: 0\n"
    "edges: 0-1 1-2 2-3 3-4 2-5 5-6 6-7 7-8 2-9 9-10 10-11 11-12"
    " 0-13 13-14 14-15 0-16 16-17 17-18\n";

// Lower-body marker model for gait analysis.
// 0 pelvis  1 thigh_l  2 shank_l  3 foot_l  4 toe_l  5 thigh_r  6 shank_r
// 7 foot_r  8 toe_r
inline constexpr const char* kFogGaitLayout =
    "num_nodes: 9\n"
    "root: 0\n"
    "edges: 0-1 1-2 2-3 3-4 0-5 5-6 6-7 7-8\n";

// Nineteen-segment full-body marker model (same topology as the limb model).
inline constexpr const char* kTugLayout =
    "num_nodes: 19\n"
    "root: 0\n"
    "edges: 0-1 1-2 2-3 3-4 2-5 5-6 6-7 7-8 2-9 9-10 10-11 11-12"
    " 0-13 13-14 14-15 0-16 16-17 17-18\n";

}  // namespace detail

inline const std::vector<std::string>& layout_preset_names() {
    static const std::vector<std::string> names{"pku-mmd", "hugadb", "lara", "fog-gait", "tug"};
    return names;
}

inline std::string layout_preset_text(const std::string& name) {
    if (name == "pku-mmd") return detail::kPkuMmdLayout;
    if (name == "hugadb") return detail::kHugadbLayout;
    if (name == "lara") return detail::kLaraLayout;
    if (name == "fog-gait") return detail::kFogGaitLayout;
    if (name == "tug") return detail::kTugLayout;
    std::string valid;
    for (const auto& n : layout_preset_names()) valid += " " + n;
    throw ConfigError("unknown layout preset '" + name + "', valid presets:" + valid);
}

inline GraphLayout layout_preset(const std::string& name) {
    GraphLayout g = parse_layout_text(layout_preset_text(name), name);
    g.name = name;
    return g;
}

/// Small chain used by the synthetic generator and tests.
inline GraphLayout chain_layout(int n, int root = 0) {
    GraphLayout g;
    g.num_nodes = n;
    g.root = root;
    g.name = "chain-" + std::to_string(n);
    for (int i = 0; i + 1 < n; ++i) g.edges.emplace_back(i, i + 1);
    validate_layout(g);
    return g;
}

}  // namespace msgcn
