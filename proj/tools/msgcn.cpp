// Command-line front end: dataset generation and import, training,
// evaluation, ablations, metric scoring and gradient self-verification.
// Exit codes: 0 success, 1 contract violation, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "msgcn/checks.hpp"
#include "msgcn/msgcn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve_out_dir(const std::string& flag_value, bool required) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("MSGCN_OUT_DIR"); env && *env) return env;
    if (required) throw msgcn::ConfigError("no output directory: pass --out or set MSGCN_OUT_DIR");
    return ".";
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
    return out;
}

msgcn::GraphLayout resolve_layout(const std::string& spec) {
    const auto& presets = msgcn::layout_preset_names();
    if (std::find(presets.begin(), presets.end(), spec) != presets.end()) {
        return msgcn::layout_preset(spec);
    }
    return msgcn::load_layout(spec);
}

msgcn::SplitPlan resolve_split(const std::string& spec) {
    if (spec == "loso") {
        return msgcn::SplitPlan{};
    }
    if (spec.rfind("fixed:", 0) == 0) {
        msgcn::SplitPlan plan;
        plan.mode = msgcn::SplitPlan::Mode::kFixed;
        plan.test_subjects = msgcn::detail::split_csv(spec.substr(6));
        return plan;
    }
    return msgcn::load_split_plan(spec);
}

void write_manifest(const json& j, const std::string& dir, const std::string& name = "manifest.json") {
    fs::create_directories(dir);
    std::ofstream out(fs::path(dir) / name);
    if (!out) throw msgcn::Error(dir + "/" + name + ": cannot write manifest");
    out << j.dump(2) << "\n";
}

// Shared flags describing a model + optimizer configuration.
struct RunFlags {
    std::string model = "ms-gcn";
    std::string data;
    std::string layout;
    std::string split = "loso";
    std::string mask_mode = "elementwise";
    int filters = 64;
    int kernel = 3;
    int layers = 10;
    int stages = 3;
    bool causal = false;
    bool regular_dilation = false;
    int lstm_hidden = 64;
    int lstm_layers = 2;
    double lr = 0.0005;
    int epochs = 100;
    int batch_size = 4;
    double lambda = 0.15;
    double tau = 4.0;
    bool tmse_full_grad = false;
    std::uint64_t seed = 1;

    void add_model_options(CLI::App* cmd) {
        cmd->add_option("--model", model, "bilstm | tcn | stgcn | ms-tcn | ms-gcn")
            ->default_val(model);
        cmd->add_option("--layout", layout, "layout preset name or layout file");
        cmd->add_option("--mask-mode", mask_mode, "elementwise | right-multiply")
            ->default_val(mask_mode);
        cmd->add_option("--filters", filters, "filters per layer")->default_val(filters);
        cmd->add_option("--kernel", kernel, "temporal kernel size")->default_val(kernel);
        cmd->add_option("--layers", layers, "layers per stage")->default_val(layers);
        cmd->add_option("--stages", stages, "refinement stages (multi-stage kinds)")
            ->default_val(stages);
        cmd->add_flag("--causal", causal, "causal temporal convolutions");
        cmd->add_flag("--regular-dilation", regular_dilation,
                      "dilation 1 in every prediction-generation layer");
        cmd->add_option("--lstm-hidden", lstm_hidden, "LSTM cells per layer")
            ->default_val(lstm_hidden);
        cmd->add_option("--lstm-layers", lstm_layers, "LSTM layers per direction")
            ->default_val(lstm_layers);
    }

    void add_train_options(CLI::App* cmd) {
        cmd->add_option("--lr", lr, "Adam learning rate")->default_val(lr);
        cmd->add_option("--epochs", epochs, "training epochs")->default_val(epochs);
        cmd->add_option("--batch-size", batch_size, "sequences per optimizer step")
            ->default_val(batch_size);
        cmd->add_option("--lambda", lambda, "smoothing loss weight")->default_val(lambda);
        cmd->add_option("--tau", tau, "smoothing loss truncation")->default_val(tau);
        cmd->add_flag("--tmse-full-grad", tmse_full_grad,
                      "differentiate the smoothing loss through both samples");
    }

    msgcn::Dataset load_data() const {
        if (data == "synthetic") {
            msgcn::SyntheticConfig cfg;
            cfg.seed = seed;
            return msgcn::generate_synthetic(cfg);
        }
        return msgcn::load_dataset(data);
    }

    msgcn::ModelConfig model_config(const msgcn::Dataset& dataset) const {
        msgcn::ModelConfig mc;
        mc.kind = msgcn::model_kind_from_string(model);
        mc.filters = filters;
        mc.kernel = kernel;
        mc.layers_per_stage = layers;
        mc.refinement_stages = stages;
        mc.causal = causal;
        mc.stage1_regular_dilation = regular_dilation;
        mc.mask_mode = msgcn::mask_mode_from_string(mask_mode);
        mc.lstm_hidden = lstm_hidden;
        mc.lstm_layers = lstm_layers;
        mc.init_seed = seed;
        mc.layout = layout.empty() ? dataset.layout : resolve_layout(layout);
        if (mc.layout.num_nodes == 0) {
            throw msgcn::ConfigError("no layout: dataset ships none and --layout not given");
        }
        if (dataset.trials.empty()) throw msgcn::DataError("dataset has no trials");
        mc.input_channels = dataset.trials.front().seq.num_channels();
        mc.num_classes = dataset.num_classes();
        return mc;
    }

    msgcn::TrainConfig train_config() const {
        msgcn::TrainConfig tc;
        tc.learning_rate = lr;
        tc.epochs = epochs;
        tc.batch_size = batch_size;
        tc.loss.lambda = lambda;
        tc.loss.tau = tau;
        tc.loss.detach_previous = !tmse_full_grad;
        tc.seed = seed;
        return tc;
    }
};

int cmd_gen_data(const msgcn::SyntheticConfig& cfg, const std::string& out_flag) {
    const std::string out = resolve_out_dir(out_flag, true);
    const msgcn::Dataset dataset = msgcn::generate_synthetic(cfg);
    msgcn::save_dataset(dataset, out);
    long total_samples = 0;
    for (const auto& t : dataset.trials) total_samples += t.seq.length();
    json manifest{{"command", "gen-data"},
                  {"format_version", "1"},
                  {"seed", cfg.seed},
                  {"config",
                   {{"num_classes", cfg.num_classes},
                    {"num_sequences", cfg.num_sequences},
                    {"min_length", cfg.min_length},
                    {"max_length", cfg.max_length},
                    {"min_segment", cfg.min_segment},
                    {"max_segment", cfg.max_segment},
                    {"noise_sigma", cfg.noise_sigma},
                    {"pose_scale", cfg.pose_scale},
                    {"amplitude", cfg.amplitude},
                    {"base_frequency", cfg.base_frequency},
                    {"frequency_step", cfg.frequency_step},
                    {"equalize_velocity", cfg.equalize_velocity},
                    {"label_noise", cfg.label_noise},
                    {"num_subjects", cfg.num_subjects},
                    {"sample_rate", cfg.sample_rate},
                    {"chain_nodes", cfg.chain_nodes}}},
                  {"results", {{"trials", dataset.trials.size()}, {"samples", total_samples}}}};
    write_manifest(manifest, out);
    std::cout << "wrote " << dataset.trials.size() << " trials (" << total_samples
              << " samples) to " << out << "\n";
    return 0;
}

struct ImportFlags {
    std::string recipe;
    std::string input;
    std::string labels;
    std::string layout;
    std::string subject = "s1";
    std::string trial = "t001";
    std::string classes;
    double rate = 0.0;
    double resample_to = 0.0;
    std::string out;
};

int cmd_import(const ImportFlags& f) {
    const std::string out = resolve_out_dir(f.out, true);
    const msgcn::GraphLayout layout = resolve_layout(f.layout);

    bool positions_recipe;
    if (f.recipe == "positions" || f.recipe == "pku-mmd" || f.recipe == "fog-gait" ||
        f.recipe == "tug") {
        positions_recipe = true;
    } else if (f.recipe == "channels" || f.recipe == "hugadb" || f.recipe == "lara") {
        positions_recipe = false;
    } else {
        throw msgcn::ConfigError("unknown import recipe '" + f.recipe +
                                 "' (positions | channels | pku-mmd | hugadb | lara | fog-gait | tug)");
    }
    const int cols_per_node = positions_recipe ? 3 : 6;
    const int N = layout.num_nodes;

    std::ifstream in(f.input);
    if (!in) throw msgcn::ParseError(f.input + ": cannot open");
    std::vector<double> values;
    std::string line;
    int line_no = 0, rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto cells = msgcn::detail::split_csv(line);
        if (static_cast<int>(cells.size()) != N * cols_per_node) {
            throw msgcn::ParseError(f.input + ":" + std::to_string(line_no) + ": expected " +
                                    std::to_string(N * cols_per_node) + " columns, got " +
                                    std::to_string(cells.size()));
        }
        for (const std::string& c : cells) {
            try {
                values.push_back(std::stod(c));
            } catch (const std::exception&) {
                throw msgcn::ParseError(f.input + ":" + std::to_string(line_no) + ": bad value '" +
                                        c + "'");
            }
        }
        ++rows;
    }
    if (rows == 0) throw msgcn::DataError(f.input + ": no samples");

    msgcn::Trial trial;
    if (positions_recipe) {
        msgcn::Tensor positions({rows, N, 3}, std::move(values));
        trial.seq = msgcn::compute_features(positions, layout, f.rate);
    } else {
        trial.seq.values = msgcn::Tensor({rows, N, 6}, std::move(values));
        trial.seq.sample_rate = f.rate;
    }
    trial.seq.subject_id = f.subject;
    trial.seq.trial_id = f.trial;
    trial.seq.class_names = msgcn::detail::split_csv(f.classes);

    // Labels: one integer per line.
    std::ifstream lin(f.labels);
    if (!lin) throw msgcn::ParseError(f.labels + ": cannot open");
    line_no = 0;
    while (std::getline(lin, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        try {
            trial.labels.push_back(std::stoi(line));
        } catch (const std::exception&) {
            throw msgcn::ParseError(f.labels + ":" + std::to_string(line_no) + ": bad label '" +
                                    line + "'");
        }
    }
    if (static_cast<int>(trial.labels.size()) != rows) {
        throw msgcn::ParseError(f.labels + ": " + std::to_string(trial.labels.size()) +
                                " labels for " + std::to_string(rows) + " samples");
    }

    if (f.resample_to > 0.0) trial = msgcn::resample(trial, f.resample_to);

    fs::create_directories(out);
    const auto layout_path = fs::path(out) / "layout.layout";
    if (!fs::exists(layout_path)) msgcn::save_layout(layout, layout_path.string());
    msgcn::save_trial(trial, out);
    json manifest{{"command", "import"},
                  {"format_version", "1"},
                  {"config",
                   {{"recipe", f.recipe},
                    {"input", f.input},
                    {"labels", f.labels},
                    {"subject", f.subject},
                    {"trial", f.trial},
                    {"rate", f.rate},
                    {"resample", f.resample_to}}},
                  {"results", {{"samples", trial.seq.length()}, {"nodes", N}}}};
    write_manifest(manifest, out, "manifest_" + sanitize(f.trial) + ".json");
    std::cout << "imported " << trial.seq.length() << " samples as " << f.trial << " into " << out
              << "\n";
    return 0;
}

int cmd_train(const RunFlags& flags, const std::string& out_flag, int folds_parallel) {
    const std::string out = resolve_out_dir(out_flag, true);
    const msgcn::Dataset dataset = flags.load_data();
    const msgcn::ModelConfig mc = flags.model_config(dataset);
    const msgcn::TrainConfig tc = flags.train_config();
    const std::vector<msgcn::Fold> folds = msgcn::make_splits(dataset, resolve_split(flags.split));

    std::vector<msgcn::FoldResult> results =
        msgcn::train_folds(dataset, folds, mc, tc, folds_parallel);

    fs::create_directories(out);
    json fold_summaries = json::array();
    double mean_acc = 0.0;
    for (msgcn::FoldResult& r : results) {
        const std::string tag = sanitize(r.fold_name);
        msgcn::save_checkpoint(*r.model, (fs::path(out) / ("checkpoint_" + tag + ".ckpt")).string());
        r.manifest.command = "train";
        r.manifest.save((fs::path(out) / ("manifest_" + tag + ".json")).string());
        msgcn::write_metrics_csv(r.eval, (fs::path(out) / ("metrics_" + tag + ".csv")).string());
        json summary{{"fold", r.fold_name},
                     {"mean_accuracy", r.eval.mean_accuracy},
                     {"final_epoch_loss", r.manifest.epoch_losses.back()}};
        for (const auto& [thr, f1] : r.eval.mean_f1) {
            summary["mean_f1"][msgcn::detail::fmt_label(thr)] = f1;
        }
        fold_summaries.push_back(summary);
        mean_acc += r.eval.mean_accuracy;
        std::cout << r.fold_name << ": accuracy " << r.eval.mean_accuracy;
        for (const auto& [thr, f1] : r.eval.mean_f1) std::cout << "  f1@" << thr << " " << f1;
        std::cout << "\n";
    }
    json manifest{{"command", "train"},
                  {"format_version", "1"},
                  {"model_config", mc},
                  {"train_config", tc},
                  {"seed", flags.seed},
                  {"results",
                   {{"folds", fold_summaries},
                    {"mean_accuracy", mean_acc / static_cast<double>(results.size())}}}};
    write_manifest(manifest, out);
    return 0;
}

struct EvalFlags {
    std::string checkpoint;
    std::string data;
    std::string split;
    std::string thresholds = "0.10,0.25,0.50";
    bool plot = false;
    std::string out;
};

int cmd_eval(const EvalFlags& f) {
    const std::string out = resolve_out_dir(f.out, true);
    auto model = msgcn::load_checkpoint(f.checkpoint);
    const msgcn::Dataset dataset = msgcn::load_dataset(f.data);

    std::vector<int> indices;
    if (f.split.empty()) {
        for (int i = 0; i < static_cast<int>(dataset.trials.size()); ++i) indices.push_back(i);
    } else {
        const msgcn::SplitPlan plan = resolve_split(f.split);
        if (plan.mode != msgcn::SplitPlan::Mode::kFixed) {
            throw msgcn::ConfigError("eval: --split must name a fixed test partition");
        }
        indices = msgcn::make_splits(dataset, plan).front().test;
    }

    std::vector<double> thresholds;
    for (const std::string& t : msgcn::detail::split_csv(f.thresholds)) {
        thresholds.push_back(std::stod(t));
    }

    const msgcn::EvalReport report = msgcn::evaluate(*model, dataset, indices, thresholds);
    fs::create_directories(out);
    msgcn::write_metrics_csv(report, (fs::path(out) / "metrics.csv").string());
    if (f.plot) {
        for (std::size_t i = 0; i < report.rows.size(); ++i) {
            const msgcn::EvalRow& row = report.rows[i];
            const msgcn::Trial& trial = dataset.trials[static_cast<std::size_t>(indices[i])];
            msgcn::write_segments_svg(
                trial.labels, row.predicted,
                (fs::path(out) / ("segments_" + sanitize(row.trial_id) + ".svg")).string());
        }
    }
    json manifest{{"command", "eval"},
                  {"format_version", "1"},
                  {"config",
                   {{"checkpoint", f.checkpoint},
                    {"data", f.data},
                    {"split", f.split},
                    {"thresholds", f.thresholds}}},
                  {"results", report.to_json()}};
    write_manifest(manifest, out);
    std::cout << "accuracy " << report.mean_accuracy;
    for (const auto& [thr, f1] : report.mean_f1) std::cout << "  f1@" << thr << " " << f1;
    std::cout << "\n";
    return 0;
}

int cmd_ablate(const RunFlags& flags, const std::string& axis, int num_seeds,
               const std::string& out_flag) {
    const std::string out = resolve_out_dir(out_flag, true);
    const msgcn::Dataset dataset = flags.load_data();
    const msgcn::ModelConfig mc = flags.model_config(dataset);
    const msgcn::TrainConfig tc = flags.train_config();
    const std::vector<msgcn::Fold> folds = msgcn::make_splits(dataset, resolve_split(flags.split));

    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < num_seeds; ++i) seeds.push_back(flags.seed + i);
    const std::vector<msgcn::AblationRow> rows =
        msgcn::ablate(mc, tc, dataset, folds.front(), axis, seeds);

    fs::create_directories(out);
    msgcn::write_ablation_csv(rows, axis, (fs::path(out) / ("ablation_" + axis + ".csv")).string());
    json rows_json = json::array();
    for (const msgcn::AblationRow& r : rows) {
        json jr{{"seed", r.seed}, {"variant", r.variant}, {"accuracy", r.accuracy}};
        for (const auto& [thr, f1] : r.f1) jr["f1"][msgcn::detail::fmt_label(thr)] = f1;
        rows_json.push_back(jr);
        std::cout << r.variant << " seed " << r.seed << ": accuracy " << r.accuracy << "  f1@0.5 "
                  << r.f1.at(0.5) << "\n";
    }
    json manifest{{"command", "ablate"},
                  {"format_version", "1"},
                  {"model_config", mc},
                  {"train_config", tc},
                  {"seed", flags.seed},
                  {"results", {{"axis", axis}, {"rows", rows_json}}}};
    write_manifest(manifest, out);
    return 0;
}

int cmd_gradcheck(const std::vector<std::string>& layers, int instances, std::uint64_t seed,
                  const std::string& out_flag) {
    const std::string out = resolve_out_dir(out_flag, false);
    const std::vector<std::string> names =
        layers.empty() ? msgcn::checks::layer_check_names() : layers;
    bool ok = true;
    json results = json::array();
    for (const std::string& name : names) {
        const msgcn::checks::LayerCheckResult r = msgcn::checks::layer_check(name, instances, seed);
        const bool pass = r.max_rel_err < 1e-4;
        ok = ok && pass;
        std::cout << (pass ? "PASS" : "FAIL") << "  " << name << "  max_rel_err="
                  << r.max_rel_err << "  (" << instances << " instances)\n";
        results.push_back({{"layer", name},
                           {"max_rel_err", r.max_rel_err},
                           {"instances", instances},
                           {"pass", pass}});
    }
    json manifest{{"command", "gradcheck"},
                  {"format_version", "1"},
                  {"seed", seed},
                  {"config", {{"instances", instances}}},
                  {"results", results}};
    write_manifest(manifest, out, "manifest_gradcheck.json");
    return ok ? 0 : 1;
}

int cmd_metrics(const std::string& pred_path, const std::string& gt_path,
                const std::vector<double>& taus, const std::string& out_flag) {
    const std::string out = resolve_out_dir(out_flag, false);
    const msgcn::LabelSequence pred = msgcn::load_labels(pred_path);
    const msgcn::LabelSequence gt = msgcn::load_labels(gt_path);
    const std::vector<double> thresholds = taus.empty() ? msgcn::default_f1_thresholds() : taus;
    json results;
    for (double tau : thresholds) {
        const msgcn::F1Entry e = msgcn::f1_at_tau(pred, gt, tau);
        std::cout << "f1@" << tau << ": " << e.f1 << "  (tp=" << e.tp << " fp=" << e.fp
                  << " fn=" << e.fn << ")\n";
        results["f1"][msgcn::detail::fmt_label(tau)] = e.f1;
    }
    const double acc = msgcn::sample_accuracy(pred, gt);
    std::cout << "accuracy: " << acc << "\n";
    results["accuracy"] = acc;
    json manifest{{"command", "metrics"},
                  {"format_version", "1"},
                  {"config", {{"pred", pred_path}, {"gt", gt_path}}},
                  {"results", results}};
    write_manifest(manifest, out, "manifest_metrics.json");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"skeleton-based action segmentation: training, evaluation and verification"};
    app.require_subcommand(1);

    // gen-data
    msgcn::SyntheticConfig gen_cfg;
    std::string gen_out;
    CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic skeleton dataset");
    gen->add_option("--classes", gen_cfg.num_classes)->default_val(gen_cfg.num_classes);
    gen->add_option("--sequences", gen_cfg.num_sequences)->default_val(gen_cfg.num_sequences);
    gen->add_option("--min-length", gen_cfg.min_length)->default_val(gen_cfg.min_length);
    gen->add_option("--max-length", gen_cfg.max_length)->default_val(gen_cfg.max_length);
    gen->add_option("--min-segment", gen_cfg.min_segment)->default_val(gen_cfg.min_segment);
    gen->add_option("--max-segment", gen_cfg.max_segment)->default_val(gen_cfg.max_segment);
    gen->add_option("--noise", gen_cfg.noise_sigma)->default_val(gen_cfg.noise_sigma);
    gen->add_option("--pose-scale", gen_cfg.pose_scale)->default_val(gen_cfg.pose_scale);
    gen->add_option("--amplitude", gen_cfg.amplitude)->default_val(gen_cfg.amplitude);
    gen->add_option("--base-frequency", gen_cfg.base_frequency)->default_val(gen_cfg.base_frequency);
    gen->add_option("--frequency-step", gen_cfg.frequency_step)->default_val(gen_cfg.frequency_step);
    gen->add_flag("--equalize-velocity", gen_cfg.equalize_velocity,
                  "match displacement magnitudes across classes");
    gen->add_option("--label-noise", gen_cfg.label_noise)->default_val(gen_cfg.label_noise);
    gen->add_option("--subjects", gen_cfg.num_subjects)->default_val(gen_cfg.num_subjects);
    gen->add_option("--rate", gen_cfg.sample_rate)->default_val(gen_cfg.sample_rate);
    gen->add_option("--nodes", gen_cfg.chain_nodes)->default_val(gen_cfg.chain_nodes);
    gen->add_option("--seed", gen_cfg.seed)->default_val(gen_cfg.seed);
    gen->add_option("--out", gen_out, "output dataset directory");

    // import
    ImportFlags import_flags;
    CLI::App* import = app.add_subcommand("import", "convert an external CSV export");
    import->add_option("--recipe", import_flags.recipe,
                       "positions | channels | pku-mmd | hugadb | lara | fog-gait | tug")
        ->required();
    import->add_option("--input", import_flags.input, "CSV of per-sample values")->required();
    import->add_option("--labels", import_flags.labels, "file with one class id per sample")
        ->required();
    import->add_option("--layout", import_flags.layout, "layout preset name or file")->required();
    import->add_option("--subject", import_flags.subject)->default_val(import_flags.subject);
    import->add_option("--trial", import_flags.trial)->default_val(import_flags.trial);
    import->add_option("--classes", import_flags.classes, "comma-separated class names");
    import->add_option("--rate", import_flags.rate, "source sampling rate in Hz")->required();
    import->add_option("--resample", import_flags.resample_to, "decimate to this rate in Hz");
    import->add_option("--out", import_flags.out, "output dataset directory");

    // train
    RunFlags train_flags;
    std::string train_out;
    int folds_parallel = 1;
    CLI::App* train = app.add_subcommand("train", "train a model and write checkpoints");
    train->add_option("--data", train_flags.data, "dataset directory or 'synthetic'")->required();
    train->add_option("--split", train_flags.split, "loso | fixed:s1,s2 | plan file")
        ->default_val(train_flags.split);
    train_flags.add_model_options(train);
    train_flags.add_train_options(train);
    train->add_option("--seed", train_flags.seed)->default_val(train_flags.seed);
    train->add_option("--folds-parallel", folds_parallel, "train folds on this many threads")
        ->default_val(folds_parallel);
    train->add_option("--out", train_out, "output directory");

    // eval
    EvalFlags eval_flags;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", eval_flags.checkpoint)->required();
    eval->add_option("--data", eval_flags.data, "dataset directory")->required();
    eval->add_option("--split", eval_flags.split, "fixed:s1,s2 | plan file (test partition)");
    eval->add_option("--thresholds", eval_flags.thresholds)->default_val(eval_flags.thresholds);
    eval->add_flag("--plot", eval_flags.plot, "write an SVG timeline per trial");
    eval->add_option("--out", eval_flags.out, "output directory");

    // ablate
    RunFlags ablate_flags;
    std::string ablate_axis;
    std::string ablate_out;
    int ablate_seeds = 5;
    CLI::App* ablate = app.add_subcommand("ablate", "paired comparison along one axis");
    ablate->add_option("--axis", ablate_axis, "causal | dilation")->required();
    ablate->add_option("--data", ablate_flags.data, "dataset directory or 'synthetic'")->required();
    ablate->add_option("--split", ablate_flags.split, "loso | fixed:s1,s2 | plan file")
        ->default_val(ablate_flags.split);
    ablate_flags.add_model_options(ablate);
    ablate_flags.add_train_options(ablate);
    ablate->add_option("--seed", ablate_flags.seed, "first seed")->default_val(ablate_flags.seed);
    ablate->add_option("--seeds", ablate_seeds, "number of seeds")->default_val(ablate_seeds);
    ablate->add_option("--out", ablate_out, "output directory");

    // gradcheck
    std::vector<std::string> gc_layers;
    int gc_instances = 20;
    std::uint64_t gc_seed = 1;
    std::string gc_out;
    bool gc_all = false;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_flag("--all", gc_all, "check every layer (default)");
    gradcheck->add_option("--layer", gc_layers, "check one layer (repeatable)");
    gradcheck->add_option("--instances", gc_instances)->default_val(gc_instances);
    gradcheck->add_option("--seed", gc_seed)->default_val(gc_seed);
    gradcheck->add_option("--out", gc_out, "manifest directory");

    // metrics
    std::string metrics_pred, metrics_gt, metrics_out;
    std::vector<double> metrics_taus;
    CLI::App* metrics = app.add_subcommand("metrics", "score two label files");
    metrics->add_option("pred", metrics_pred, "predicted label file")->required();
    metrics->add_option("gt", metrics_gt, "ground-truth label file")->required();
    metrics->add_option("--tau", metrics_taus, "IoU threshold (repeatable)");
    metrics->add_option("--out", metrics_out, "manifest directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_cfg, gen_out);
        if (import->parsed()) return cmd_import(import_flags);
        if (train->parsed()) return cmd_train(train_flags, train_out, folds_parallel);
        if (eval->parsed()) return cmd_eval(eval_flags);
        if (ablate->parsed()) return cmd_ablate(ablate_flags, ablate_axis, ablate_seeds, ablate_out);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_layers, gc_instances, gc_seed, gc_out);
        if (metrics->parsed()) return cmd_metrics(metrics_pred, metrics_gt, metrics_taus, metrics_out);
    } catch (const msgcn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
