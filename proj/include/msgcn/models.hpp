#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "msgcn/common.hpp"
#include "msgcn/graph.hpp"
#include "msgcn/layers.hpp"
#include "msgcn/ops.hpp"
#include "msgcn/tape.hpp"
#include "msgcn/tensor.hpp"

namespace msgcn {

enum class ModelKind { kBilstm, kTcn, kStgcn, kMsTcn, kMsGcn };

inline const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::kBilstm: return "bilstm";
        case ModelKind::kTcn: return "tcn";
        case ModelKind::kStgcn: return "stgcn";
        case ModelKind::kMsTcn: return "ms-tcn";
        case ModelKind::kMsGcn: return "ms-gcn";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "bilstm") return ModelKind::kBilstm;
    if (s == "tcn") return ModelKind::kTcn;
    if (s == "stgcn") return ModelKind::kStgcn;
    if (s == "ms-tcn") return ModelKind::kMsTcn;
    if (s == "ms-gcn") return ModelKind::kMsGcn;
    throw ConfigError("unknown model kind '" + s + "' (bilstm | tcn | stgcn | ms-tcn | ms-gcn)");
}

/// Architecture hyperparameters. Defaults follow the convolutional reference
/// configuration: 64 filters, kernel 3, one generation stage of 10 layers
/// with dilations doubling 1..512, and 3 refinement stages of the same depth.
struct ModelConfig {
    ModelKind kind = ModelKind::kMsGcn;
    int filters = 64;
    int kernel = 3;
    int layers_per_stage = 10;
    int refinement_stages = 3;
    bool causal = false;
    // Ablation switch: dilation 1 in every prediction-generation layer.
    bool stage1_regular_dilation = false;
    int num_classes = 0;
    int input_channels = 0;
    GraphLayout layout;
    MaskMode mask_mode = MaskMode::kElementwise;
    int lstm_layers = 2;
    int lstm_hidden = 64;
    std::uint64_t init_seed = 1;

    bool is_graph() const { return kind == ModelKind::kStgcn || kind == ModelKind::kMsGcn; }
    bool is_multi_stage() const { return kind == ModelKind::kMsTcn || kind == ModelKind::kMsGcn; }
    int num_stages() const { return is_multi_stage() ? 1 + refinement_stages : 1; }

    std::vector<int> stage1_dilations() const {
        std::vector<int> d(static_cast<std::size_t>(layers_per_stage));
        for (int i = 0; i < layers_per_stage; ++i) {
            d[static_cast<std::size_t>(i)] = stage1_regular_dilation ? 1 : (1 << i);
        }
        return d;
    }

    std::vector<int> refinement_dilations() const {
        std::vector<int> d(static_cast<std::size_t>(layers_per_stage));
        for (int i = 0; i < layers_per_stage; ++i) d[static_cast<std::size_t>(i)] = 1 << i;
        return d;
    }

    void validate() const {
        if (filters < 1 || kernel < 1 || layers_per_stage < 1) {
            throw ConfigError("model: filters, kernel and layers_per_stage must be >= 1");
        }
        if (layers_per_stage > 24) {
            throw ConfigError("model: layers_per_stage " + std::to_string(layers_per_stage) +
                              " overflows the doubling dilation schedule");
        }
        if (!causal && kernel % 2 == 0) throw ConfigError("model: acausal mode requires odd kernel");
        if (is_multi_stage() && refinement_stages < 1) {
            throw ConfigError("model: multi-stage kinds need refinement_stages >= 1");
        }
        if (num_classes < 1) throw ConfigError("model: num_classes must be >= 1");
        if (input_channels < 1) throw ConfigError("model: input_channels must be >= 1");
        if (layout.num_nodes < 1) throw ConfigError("model: layout with >= 1 node required");
        if (lstm_layers < 1 || lstm_hidden < 1) throw ConfigError("model: invalid lstm settings");
    }
};

inline void to_json(nlohmann::json& j, const GraphLayout& g) {
    j = nlohmann::json{{"num_nodes", g.num_nodes}, {"root", g.root}, {"name", g.name}};
    j["edges"] = nlohmann::json::array();
    for (const auto& [a, b] : g.edges) j["edges"].push_back({a, b});
}

inline void from_json(const nlohmann::json& j, GraphLayout& g) {
    g.num_nodes = j.at("num_nodes").get<int>();
    g.root = j.at("root").get<int>();
    g.name = j.value("name", std::string());
    g.edges.clear();
    for (const auto& e : j.at("edges")) g.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"kind", to_string(c.kind)},
                       {"filters", c.filters},
                       {"kernel", c.kernel},
                       {"layers_per_stage", c.layers_per_stage},
                       {"refinement_stages", c.refinement_stages},
                       {"causal", c.causal},
                       {"stage1_regular_dilation", c.stage1_regular_dilation},
                       {"num_classes", c.num_classes},
                       {"input_channels", c.input_channels},
                       {"layout", c.layout},
                       {"mask_mode", to_string(c.mask_mode)},
                       {"lstm_layers", c.lstm_layers},
                       {"lstm_hidden", c.lstm_hidden},
                       {"init_seed", c.init_seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.kind = model_kind_from_string(j.at("kind").get<std::string>());
    c.filters = j.at("filters").get<int>();
    c.kernel = j.at("kernel").get<int>();
    c.layers_per_stage = j.at("layers_per_stage").get<int>();
    c.refinement_stages = j.at("refinement_stages").get<int>();
    c.causal = j.at("causal").get<bool>();
    c.stage1_regular_dilation = j.at("stage1_regular_dilation").get<bool>();
    c.num_classes = j.at("num_classes").get<int>();
    c.input_channels = j.at("input_channels").get<int>();
    c.layout = j.at("layout").get<GraphLayout>();
    c.mask_mode = mask_mode_from_string(j.at("mask_mode").get<std::string>());
    c.lstm_layers = j.at("lstm_layers").get<int>();
    c.lstm_hidden = j.at("lstm_hidden").get<int>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
}

/// Per-stage class probabilities, one [T x L] tensor per stage (a single
/// entry for the single-stage models). The last stage is the model output.
struct StagedPrediction {
    std::vector<Tensor> stages;

    const Tensor& final_stage() const { return stages.back(); }
};

inline std::vector<int> argmax_rows(const Tensor& probs) {
    const int T = probs.dim(0), L = probs.dim(1);
    std::vector<int> out(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        int best = 0;
        for (int l = 1; l < L; ++l)
            if (probs.at(t, l) > probs.at(t, best)) best = l;
        out[static_cast<std::size_t>(t)] = best;
    }
    return out;
}

/// One of the five architectures. Owns all parameters; a built model is bound
/// to one thread during forward/backward and addresses of its parameters are
/// stable for the optimizer (the model is pinned in memory).
class Model {
public:
    explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.init_seed) {
        cfg_.validate();
        if (cfg_.is_graph()) {
            adjacency_ = std::make_shared<PartitionedAdjacency>(build_adjacency(cfg_.layout));
        }
        input_bn_ = std::make_unique<BatchNorm>(cfg_.input_channels, "input_bn");
        bns_.push_back(input_bn_.get());

        const int F = cfg_.filters;
        const int flat_in = cfg_.input_channels * cfg_.layout.num_nodes;
        switch (cfg_.kind) {
            case ModelKind::kTcn:
            case ModelKind::kMsTcn: {
                adjust_ = std::make_unique<Conv1x1>(flat_in, F, rng_, "stage1.adjust");
                build_tcn_blocks(tcn_blocks_, cfg_.stage1_dilations(), "stage1");
                head_ = std::make_unique<PredictionHead>(F, cfg_.num_classes, rng_, "stage1.head");
                break;
            }
            case ModelKind::kStgcn:
            case ModelKind::kMsGcn: {
                adjust_ = std::make_unique<Conv1x1>(cfg_.input_channels, F, rng_, "stage1.adjust");
                const std::vector<int> dil = cfg_.stage1_dilations();
                stgcn_blocks_.reserve(dil.size());
                for (std::size_t i = 0; i < dil.size(); ++i) {
                    stgcn_blocks_.emplace_back(adjacency_, F, cfg_.kernel,
                                               dil[i], cfg_.causal, rng_,
                                               "stage1.block" + std::to_string(i), cfg_.mask_mode);
                }
                for (auto& b : stgcn_blocks_)
                    for (BatchNorm* bn : b.batch_norms()) bns_.push_back(bn);
                head_ = std::make_unique<PredictionHead>(F, cfg_.num_classes, rng_, "stage1.head");
                break;
            }
            case ModelKind::kBilstm: {
                const int H = cfg_.lstm_hidden;
                int in_dim = flat_in;
                for (int i = 0; i < cfg_.lstm_layers; ++i) {
                    const std::string name = "stage1.lstm" + std::to_string(i);
                    if (cfg_.causal) {
                        lstm_cells_.push_back(std::make_unique<LstmCell>(in_dim, H, rng_, name));
                        in_dim = H;
                    } else {
                        bilstm_layers_.push_back(std::make_unique<BiLstmLayer>(in_dim, H, rng_, name));
                        in_dim = 2 * H;
                    }
                }
                head_ = std::make_unique<PredictionHead>(in_dim, cfg_.num_classes, rng_,
                                                         "stage1.head");
                break;
            }
        }

        if (cfg_.is_multi_stage()) {
            const std::vector<int> dil = cfg_.refinement_dilations();
            for (int s = 0; s < cfg_.refinement_stages; ++s) {
                const std::string name = "refine" + std::to_string(s + 1);
                auto stage = std::make_unique<RefinementStage>();
                stage->adjust =
                    std::make_unique<Conv1x1>(cfg_.num_classes, F, rng_, name + ".adjust");
                build_tcn_blocks(stage->blocks, dil, name);
                stage->head =
                    std::make_unique<PredictionHead>(F, cfg_.num_classes, rng_, name + ".head");
                refinements_.push_back(std::move(stage));
            }
        }
        // Refinement block BNs were registered by build_tcn_blocks via bns_.
    }

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const ModelConfig& config() const { return cfg_; }
    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }

    struct StagedNodes {
        std::vector<NodeId> stages;

        NodeId final_stage() const { return stages.back(); }
    };

    /// Full forward pass on a T x N x C input tensor.
    StagedNodes forward(Tape& tape, const Tensor& input) {
        if (input.rank() != 3 || input.dim(1) != cfg_.layout.num_nodes ||
            input.dim(2) != cfg_.input_channels) {
            throw DimensionError("model: input " + input.shape_str() + " does not match layout " +
                                 std::to_string(cfg_.layout.num_nodes) + " nodes x " +
                                 std::to_string(cfg_.input_channels) + " channels");
        }
        const int T = input.dim(0);
        NodeId x = tape.constant(input);
        x = input_bn_->forward(tape, x, mode_);
        if (!cfg_.is_graph()) {
            // Node locations concatenated per sample for the temporal models.
            x = ops::reshape(tape, x, {T, cfg_.layout.num_nodes * cfg_.input_channels});
        }

        NodeId f_out = -1;
        switch (cfg_.kind) {
            case ModelKind::kTcn:
            case ModelKind::kMsTcn: {
                NodeId y = adjust_->forward(tape, x);
                for (auto& b : tcn_blocks_) y = b->forward(tape, y, mode_);
                f_out = y;
                break;
            }
            case ModelKind::kStgcn:
            case ModelKind::kMsGcn: {
                NodeId y = adjust_->forward(tape, x);
                for (auto& b : stgcn_blocks_) y = b.forward(tape, y, mode_);
                f_out = spatial_pool(tape, y);
                break;
            }
            case ModelKind::kBilstm: {
                NodeId y = x;
                if (cfg_.causal) {
                    for (auto& cell : lstm_cells_) y = lstm_scan(tape, *cell, y, false);
                } else {
                    for (auto& layer : bilstm_layers_) y = layer->forward(tape, y);
                }
                f_out = y;
                break;
            }
        }

        StagedNodes out;
        out.stages.push_back(head_->forward(tape, f_out));
        for (std::size_t s = 0; s < refinements_.size(); ++s) {
            out.stages.push_back(refine(tape, out.stages.back(), static_cast<int>(s)));
        }
        return out;
    }

    /// One refinement stage applied to the previous stage's probabilities.
    NodeId refine(Tape& tape, NodeId prev_probs, int refinement_index) {
        RefinementStage& r = *refinements_.at(static_cast<std::size_t>(refinement_index));
        NodeId y = r.adjust->forward(tape, prev_probs);
        for (auto& b : r.blocks) y = b->forward(tape, y, mode_);
        return r.head->forward(tape, y);
    }

    StagedPrediction predict(Tape& tape, const Tensor& input) {
        const StagedNodes nodes = forward(tape, input);
        StagedPrediction out;
        for (NodeId id : nodes.stages) out.stages.push_back(tape.value(id));
        return out;
    }

    std::vector<Parameter*> params() {
        std::vector<Parameter*> out;
        auto append = [&out](std::vector<Parameter*> ps) {
            out.insert(out.end(), ps.begin(), ps.end());
        };
        append(input_bn_->params());
        if (adjust_) append(adjust_->params());
        for (auto& b : tcn_blocks_) append(b->params());
        for (auto& b : stgcn_blocks_) append(b.params());
        for (auto& l : bilstm_layers_) append(l->params());
        for (auto& c : lstm_cells_) append(c->params());
        if (head_) append(head_->params());
        for (auto& r : refinements_) {
            append(r->adjust->params());
            for (auto& b : r->blocks) append(b->params());
            append(r->head->params());
        }
        return out;
    }

    void zero_grad() {
        for (Parameter* p : params()) p->zero_grad();
    }

    long parameter_count() {
        long n = 0;
        for (Parameter* p : params()) n += p->value.numel();
        return n;
    }

    /// Parameters and batch-norm running statistics, by name, for checkpoints.
    std::vector<std::pair<std::string, Tensor*>> named_tensors() {
        std::vector<std::pair<std::string, Tensor*>> out;
        for (Parameter* p : params()) out.emplace_back(p->name, &p->value);
        for (BatchNorm* bn : bns_) {
            out.emplace_back(bn->name() + ".running_mean", &bn->running_mean());
            out.emplace_back(bn->name() + ".running_var", &bn->running_var());
        }
        return out;
    }

private:
    struct RefinementStage {
        std::unique_ptr<Conv1x1> adjust;
        std::vector<std::unique_ptr<TcnBlock>> blocks;
        std::unique_ptr<PredictionHead> head;
    };

    void build_tcn_blocks(std::vector<std::unique_ptr<TcnBlock>>& blocks,
                          const std::vector<int>& dilations, const std::string& prefix) {
        blocks.reserve(dilations.size());
        for (std::size_t i = 0; i < dilations.size(); ++i) {
            blocks.push_back(std::make_unique<TcnBlock>(cfg_.filters, cfg_.kernel, dilations[i],
                                                        cfg_.causal, rng_,
                                                        prefix + ".block" + std::to_string(i)));
            bns_.push_back(&blocks.back()->bn());
        }
    }

    ModelConfig cfg_;
    Rng rng_;
    Mode mode_ = Mode::kEval;
    std::shared_ptr<const PartitionedAdjacency> adjacency_;
    std::unique_ptr<BatchNorm> input_bn_;
    std::unique_ptr<Conv1x1> adjust_;
    std::vector<std::unique_ptr<TcnBlock>> tcn_blocks_;
    std::vector<StgcnBlock> stgcn_blocks_;
    std::vector<std::unique_ptr<BiLstmLayer>> bilstm_layers_;
    std::vector<std::unique_ptr<LstmCell>> lstm_cells_;
    std::unique_ptr<PredictionHead> head_;
    std::vector<std::unique_ptr<RefinementStage>> refinements_;
    std::vector<BatchNorm*> bns_;
};

// ---------------------------------------------------------------------------
// Checkpoint container: magic, version, config as JSON, then named tensors as
// little-endian 64-bit floats.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'G', 'C', 'N', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace detail

inline void save_checkpoint(Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(path + ": cannot write checkpoint");
    out.write(detail::kCheckpointMagic, 8);
    detail::write_u32(out, detail::kCheckpointVersion);
    const std::string cfg = nlohmann::json(model.config()).dump();
    detail::write_u64(out, cfg.size());
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    const auto tensors = model.named_tensors();
    detail::write_u64(out, tensors.size());
    for (const auto& [name, tensor] : tensors) {
        detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u32(out, static_cast<std::uint32_t>(tensor->rank()));
        for (int d : tensor->shape()) detail::write_u32(out, static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(tensor->data()),
                  static_cast<std::streamsize>(sizeof(double) * tensor->numel()));
    }
    if (!out) throw Error(path + ": write failed");
}

inline std::unique_ptr<Model> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open checkpoint");
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) {
        throw ParseError(path + ": not a checkpoint file");
    }
    const std::uint32_t version = detail::read_u32(in, path);
    if (version != detail::kCheckpointVersion) {
        throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint64_t cfg_len = detail::read_u64(in, path);
    std::string cfg_text(cfg_len, '\0');
    if (!in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len))) {
        throw ParseError(path + ": truncated checkpoint");
    }
    ModelConfig cfg;
    try {
        nlohmann::json::parse(cfg_text).get_to(cfg);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": bad config block: " + e.what());
    }
    auto model = std::make_unique<Model>(cfg);

    std::map<std::string, Tensor*> by_name;
    for (auto& [name, tensor] : model->named_tensors()) by_name[name] = tensor;
    const std::uint64_t count = detail::read_u64(in, path);
    if (count != by_name.size()) {
        throw ParseError(path + ": checkpoint has " + std::to_string(count) + " tensors, model has " +
                         std::to_string(by_name.size()));
    }
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = detail::read_u32(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw ParseError(path + ": truncated checkpoint");
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw ParseError(path + ": unknown tensor '" + name + "'");
        const std::uint32_t rank = detail::read_u32(in, path);
        std::vector<int> shape(rank);
        for (std::uint32_t r = 0; r < rank; ++r) {
            shape[r] = static_cast<int>(detail::read_u32(in, path));
        }
        if (shape != it->second->shape()) {
            throw ParseError(path + ": tensor '" + name + "' has shape " +
                             Tensor::shape_str(shape) + ", expected " + it->second->shape_str());
        }
        if (!in.read(reinterpret_cast<char*>(it->second->data()),
                     static_cast<std::streamsize>(sizeof(double) * it->second->numel()))) {
            throw ParseError(path + ": truncated checkpoint");
        }
    }
    return model;
}

}  // namespace msgcn
