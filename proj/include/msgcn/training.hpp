#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "msgcn/common.hpp"
#include "msgcn/data.hpp"
#include "msgcn/loss.hpp"
#include "msgcn/metrics.hpp"
#include "msgcn/models.hpp"
#include "msgcn/tape.hpp"

namespace msgcn {

/// Optimization hyperparameters. Defaults follow the reference setup: Adam at
/// learning rate 5e-4, 100 epochs, batch size 4, lambda 0.15 and tau 4.
struct TrainConfig {
    double learning_rate = 0.0005;
    int epochs = 100;
    int batch_size = 4;
    LossConfig loss;
    std::uint64_t seed = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const {
        if (learning_rate <= 0.0) throw ConfigError("train: learning rate must be positive");
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
        if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0 ||
            adam_eps <= 0.0) {
            throw ConfigError("train: invalid adam constants");
        }
        loss.validate();
    }
};

inline void to_json(nlohmann::json& j, const LossConfig& c) {
    j = nlohmann::json{{"lambda", c.lambda},
                       {"tau", c.tau},
                       {"clamp_floor", c.clamp_floor},
                       {"detach_previous", c.detach_previous}};
}

inline void from_json(const nlohmann::json& j, LossConfig& c) {
    c.lambda = j.at("lambda").get<double>();
    c.tau = j.at("tau").get<double>();
    c.clamp_floor = j.at("clamp_floor").get<double>();
    c.detach_previous = j.at("detach_previous").get<bool>();
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"learning_rate", c.learning_rate},
                       {"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"loss", c.loss},
                       {"seed", c.seed},
                       {"adam_beta1", c.adam_beta1},
                       {"adam_beta2", c.adam_beta2},
                       {"adam_eps", c.adam_eps}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.loss = j.at("loss").get<LossConfig>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    Tensor m;
    Tensor v;
};

/// Bias-corrected Adam update for one parameter at step t (1-based).
inline void adam_step(Parameter& p, AdamState& s, int t, const TrainConfig& cfg) {
    if (s.m.empty()) {
        s.m = Tensor::zeros(p.value.shape());
        s.v = Tensor::zeros(p.value.shape());
    }
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double corr1 = 1.0 - std::pow(b1, t);
    const double corr2 = 1.0 - std::pow(b2, t);
    for (int i = 0; i < p.value.numel(); ++i) {
        const double g = p.grad[i];
        if (!std::isfinite(g)) {
            throw NumericError("adam: non-finite gradient in parameter '" + p.name + "'");
        }
        s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
        s.v[i] = b2 * s.v[i] + (1.0 - b2) * g * g;
        const double m_hat = s.m[i] / corr1;
        const double v_hat = s.v[i] / corr2;
        p.value[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
}

class Adam {
public:
    Adam(std::vector<Parameter*> params, const TrainConfig& cfg)
        : params_(std::move(params)), states_(params_.size()), cfg_(cfg) {}

    void step() {
        ++t_;
        for (std::size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i], states_[i], t_, cfg_);
    }

    int step_count() const { return t_; }

private:
    std::vector<Parameter*> params_;
    std::vector<AdamState> states_;
    TrainConfig cfg_;
    int t_ = 0;
};

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

/// Everything needed to re-run an experiment bit-identically, serialized as
/// JSON next to the artifacts it describes. Holds no wall-clock state so two
/// identical runs produce identical manifests.
struct RunManifest {
    std::string command;
    std::string format_version = "1";
    nlohmann::json model_config;
    nlohmann::json train_config;
    std::uint64_t seed = 0;
    std::string fold;
    std::vector<double> epoch_losses;
    nlohmann::json results;

    nlohmann::json to_json() const {
        return nlohmann::json{{"command", command},
                              {"format_version", format_version},
                              {"model_config", model_config},
                              {"train_config", train_config},
                              {"seed", seed},
                              {"fold", fold},
                              {"epoch_losses", epoch_losses},
                              {"results", results}};
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw Error(path + ": cannot write manifest");
        out << to_json().dump(2) << "\n";
    }
};

/// Called after each epoch with (epoch index, mean train loss); returning
/// false stops training early.
using EpochCallback = std::function<bool(int, double)>;

/// Seeded epoch loop: sequences are shuffled per epoch and processed one at a
/// time, gradients accumulating until an optimizer step every batch_size
/// sequences (remainder batch at epoch end included).
inline RunManifest train(Model& model, const Dataset& data, const std::vector<int>& train_indices,
                         const TrainConfig& cfg, const EpochCallback& on_epoch = nullptr) {
    cfg.validate();
    if (train_indices.empty()) throw DataError("train: no training sequences");
    for (int idx : train_indices) {
        if (idx < 0 || idx >= static_cast<int>(data.trials.size())) {
            throw DataError("train: trial index " + std::to_string(idx) + " out of range");
        }
    }

    RunManifest manifest;
    manifest.command = "train";
    manifest.model_config = model.config();
    manifest.train_config = cfg;
    manifest.seed = cfg.seed;

    Adam optimizer(model.params(), cfg);
    Rng shuffle_rng(cfg.seed);
    model.zero_grad();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        model.set_mode(Mode::kTrain);
        std::vector<int> order = train_indices;
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        int pending = 0;
        for (int idx : order) {
            const Trial& trial = data.trials[static_cast<std::size_t>(idx)];
            Tape tape;
            const Model::StagedNodes staged = model.forward(tape, trial.seq.values);
            const NodeId loss = combined_loss(tape, staged.stages, trial.labels, cfg.loss);
            const double value = tape.value(loss)[0];
            if (!std::isfinite(value)) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", trial " + trial.seq.trial_id);
            }
            epoch_loss += value;
            tape.backward(loss);
            if (++pending == cfg.batch_size) {
                optimizer.step();
                model.zero_grad();
                pending = 0;
            }
        }
        if (pending > 0) {
            optimizer.step();
            model.zero_grad();
        }
        const double mean_loss = epoch_loss / static_cast<double>(order.size());
        manifest.epoch_losses.push_back(mean_loss);
        if (on_epoch && !on_epoch(epoch, mean_loss)) break;
    }
    model.set_mode(Mode::kEval);
    return manifest;
}

struct EvalRow {
    std::string trial_id;
    std::string subject_id;
    double accuracy = 0.0;
    std::vector<F1Entry> f1;
    std::vector<int> predicted;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mean_accuracy = 0.0;
    std::map<double, double> mean_f1;  // threshold -> mean over trials

    nlohmann::json to_json() const {
        nlohmann::json rows_json = nlohmann::json::array();
        for (const EvalRow& r : rows) {
            nlohmann::json f1 = nlohmann::json::array();
            for (const F1Entry& e : r.f1) {
                f1.push_back({{"threshold", e.threshold},
                              {"tp", e.tp},
                              {"fp", e.fp},
                              {"fn", e.fn},
                              {"precision", e.precision},
                              {"recall", e.recall},
                              {"f1", e.f1}});
            }
            rows_json.push_back({{"trial", r.trial_id},
                                 {"subject", r.subject_id},
                                 {"accuracy", r.accuracy},
                                 {"f1", f1}});
        }
        nlohmann::json mean_f1_json;
        for (const auto& [thr, v] : mean_f1) mean_f1_json[detail::fmt_label(thr)] = v;
        return nlohmann::json{
            {"trials", rows_json}, {"mean_accuracy", mean_accuracy}, {"mean_f1", mean_f1_json}};
    }
};

/// Per-trial segmental F1 and accuracy of the final stage's argmax, with
/// batch norms in eval mode, averaged over trials.
inline EvalReport evaluate(Model& model, const Dataset& data, const std::vector<int>& test_indices,
                           const std::vector<double>& thresholds = default_f1_thresholds()) {
    EvalReport report;
    model.set_mode(Mode::kEval);
    for (int idx : test_indices) {
        const Trial& trial = data.trials[static_cast<std::size_t>(idx)];
        Tape tape;
        const StagedPrediction pred = model.predict(tape, trial.seq.values);
        EvalRow row;
        row.trial_id = trial.seq.trial_id;
        row.subject_id = trial.seq.subject_id;
        row.predicted = argmax_rows(pred.final_stage());
        row.accuracy = sample_accuracy(row.predicted, trial.labels);
        row.f1 = f1_report(row.predicted, trial.labels, thresholds);
        report.rows.push_back(std::move(row));
    }
    if (!report.rows.empty()) {
        for (const EvalRow& r : report.rows) report.mean_accuracy += r.accuracy;
        report.mean_accuracy /= static_cast<double>(report.rows.size());
        for (double thr : thresholds) report.mean_f1[thr] = 0.0;
        for (const EvalRow& r : report.rows)
            for (const F1Entry& e : r.f1) report.mean_f1[e.threshold] += e.f1;
        for (double thr : thresholds) report.mean_f1[thr] /= static_cast<double>(report.rows.size());
    }
    return report;
}

// ---------------------------------------------------------------------------
// Folds and ablations
// ---------------------------------------------------------------------------

struct FoldResult {
    std::string fold_name;
    std::unique_ptr<Model> model;
    RunManifest manifest;
    EvalReport eval;
};

/// Trains and evaluates each fold with a deterministic per-fold seed
/// (base seed + fold index). Folds share no mutable state, so they may run on
/// parallel threads; results keep fold order either way.
inline std::vector<FoldResult> train_folds(const Dataset& data, const std::vector<Fold>& folds,
                                           const ModelConfig& base_model, const TrainConfig& base_train,
                                           int parallelism = 1,
                                           const std::vector<double>& thresholds = default_f1_thresholds()) {
    std::vector<FoldResult> results(folds.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= folds.size()) return;
            try {
                ModelConfig mc = base_model;
                TrainConfig tc = base_train;
                mc.init_seed = base_model.init_seed + i;
                tc.seed = base_train.seed + i;
                auto model = std::make_unique<Model>(mc);
                FoldResult r;
                r.fold_name = folds[i].name;
                r.manifest = train(*model, data, folds[i].train, tc);
                r.manifest.fold = folds[i].name;
                r.eval = evaluate(*model, data, folds[i].test, thresholds);
                r.manifest.results = r.eval.to_json();
                r.model = std::move(model);
                results[i] = std::move(r);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const int workers = std::max(1, std::min<int>(parallelism, static_cast<int>(folds.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

struct AblationRow {
    std::uint64_t seed = 0;
    std::string variant;
    double accuracy = 0.0;
    std::map<double, double> f1;
};

inline std::pair<ModelConfig, ModelConfig> ablation_variants(const ModelConfig& base,
                                                             const std::string& axis,
                                                             std::string& name_a,
                                                             std::string& name_b) {
    ModelConfig a = base, b = base;
    if (axis == "causal") {
        a.causal = true;
        b.causal = false;
        name_a = "causal";
        name_b = "acausal";
    } else if (axis == "dilation") {
        a.stage1_regular_dilation = true;
        b.stage1_regular_dilation = false;
        name_a = "regular";
        name_b = "dilated";
    } else {
        throw ConfigError("ablate: unknown axis '" + axis + "' (causal | dilation)");
    }
    return {a, b};
}

/// Trains the two variants of one ablation axis with shared seeds and reports
/// their test metrics side by side, one row per (seed, variant).
inline std::vector<AblationRow> ablate(const ModelConfig& base, const TrainConfig& base_train,
                                       const Dataset& data, const Fold& fold,
                                       const std::string& axis,
                                       const std::vector<std::uint64_t>& seeds,
                                       const std::vector<double>& thresholds = default_f1_thresholds()) {
    std::string name_a, name_b;
    const auto [cfg_a, cfg_b] = ablation_variants(base, axis, name_a, name_b);
    std::vector<AblationRow> rows;
    for (std::uint64_t seed : seeds) {
        for (const auto& [cfg, name] :
             {std::pair<const ModelConfig&, std::string>{cfg_a, name_a},
              std::pair<const ModelConfig&, std::string>{cfg_b, name_b}}) {
            ModelConfig mc = cfg;
            mc.init_seed = seed;
            TrainConfig tc = base_train;
            tc.seed = seed;
            Model model(mc);
            train(model, data, fold.train, tc);
            const EvalReport eval = evaluate(model, data, fold.test, thresholds);
            AblationRow row;
            row.seed = seed;
            row.variant = name;
            row.accuracy = eval.mean_accuracy;
            row.f1 = eval.mean_f1;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace msgcn
