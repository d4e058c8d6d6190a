// gatescope: corpus generation, training and analysis runs.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gatescope/common/error.hpp"
#include "gatescope/common/hash.hpp"
#include "gatescope/common/io.hpp"
#include "gatescope/common/rng.hpp"
#include "gatescope/experiments.hpp"
#include "gatescope/geometry/point_set.hpp"
#include "gatescope/tasks.hpp"
#include "gatescope/training.hpp"
#include "gatescope/transformer.hpp"
#include "run_context.hpp"

namespace gs = gatescope;
using nlohmann::json;
using gs::cli::RunDirectory;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitRuntime = 1;

struct CommonFlags {
    std::optional<std::string> config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
};

void add_common(CLI::App* app, CommonFlags& f) {
    app->add_option("--config", f.config, "JSON config file; flags override its values");
    app->add_option("--out", f.out, "Output directory (default: $GATESCOPE_OUT/<command>)");
    app->add_option("--seed", f.seed, "Global seed");
    app->add_option("--threads", f.threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
}

template <typename T>
void set_if(const std::optional<T>& flag, T& field) {
    if (flag) field = *flag;
}

/// Defaults overlaid with a config-file section, then parsed.
template <typename T>
T from_section(const json& file, const char* key, const T& defaults) {
    json j = defaults;
    if (file.contains(key)) {
        const auto& section = file.at(key);
        if (!section.is_object()) throw gs::ConfigError(std::string("config section '") + key + "' must be an object");
        for (const auto& [k, v] : section.items()) j[k] = v;
    }
    return j.get<T>();
}

void check_keys(const json& file, std::initializer_list<std::string_view> allowed, std::string_view command) {
    gs::io::require_known_keys(file, allowed, std::string(command) + " config file");
}

// dataset ------------------------------------------------------------------

struct DatasetFlags {
    CommonFlags common;
    std::optional<std::size_t> classes, per_class, image_codes, image_length, max_seq_len;
    std::optional<double> noise, train_fraction, test_fraction;
    std::optional<std::string> regime;
};

int run_dataset(const DatasetFlags& f) {
    const json file = gs::cli::load_config_file(f.common.config);
    check_keys(file, {"dataset"}, "dataset");
    auto cfg = from_section(file, "dataset", gs::tasks::DatasetConfig{});
    set_if(f.classes, cfg.n_classes);
    set_if(f.per_class, cfg.n_per_class);
    set_if(f.image_codes, cfg.n_image_codes);
    set_if(f.image_length, cfg.image_length);
    set_if(f.max_seq_len, cfg.max_seq_len);
    set_if(f.noise, cfg.noise_eps);
    if (f.train_fraction) {
        cfg.train_fraction = *f.train_fraction;
        if (!f.test_fraction) cfg.test_fraction = 1.0 - *f.train_fraction;
    }
    if (f.test_fraction) {
        cfg.test_fraction = *f.test_fraction;
        if (!f.train_fraction) cfg.train_fraction = 1.0 - *f.test_fraction;
    }
    if (f.regime) cfg.loss_regime = gs::tasks::loss_regime_from_string(*f.regime);
    set_if(f.common.seed, cfg.seed);
    cfg.validate();

    RunDirectory run(gs::cli::resolve_output_dir(f.common.out, "dataset"));
    run.write_snapshot({{"command", "dataset"}, {"dataset", cfg}, {"config_hash", cfg.hash()}});
    const auto ds = gs::tasks::make_dataset(cfg);
    gs::tasks::save_corpus(run.path(), ds);
    std::cerr << "dataset: " << ds.train.size() << " train / " << ds.test.size() << " test documents, config "
              << cfg.hash() << "\n";
    return 0;
}

// train / finetune ---------------------------------------------------------

struct ModelFlags {
    std::optional<std::size_t> layers, heads, d_model, d_mlp, max_seq_len;
    std::optional<double> init_std, group_offset_std;
};

struct TrainFlags {
    CommonFlags common;
    ModelFlags model;
    std::optional<std::string> corpus, checkpoint, regime;
    std::optional<std::size_t> steps, batch_size, warmup, log_every, eval_every, checkpoint_every;
    std::optional<double> lr, min_lr_ratio, weight_decay, grad_clip;
    std::vector<std::string> eval_knockouts;
    bool mask_eoi = false;
    bool resume = false;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
    app->add_option("--corpus", f.corpus, "Corpus directory written by `gatescope dataset`");
    app->add_option("--regime", f.regime, "Loss regime: native or text_only");
    app->add_option("--steps", f.steps, "Optimizer steps");
    app->add_option("--batch-size", f.batch_size, "Documents per step");
    app->add_option("--lr", f.lr, "Peak learning rate (lr0)");
    app->add_option("--warmup", f.warmup, "Linear warmup steps");
    app->add_option("--min-lr-ratio", f.min_lr_ratio, "Final learning rate as a fraction of lr0");
    app->add_option("--weight-decay", f.weight_decay, "Decoupled weight decay on matrices");
    app->add_option("--grad-clip", f.grad_clip, "Global gradient-norm clip (0 disables)");
    app->add_option("--log-every", f.log_every, "Train-loss logging cadence");
    app->add_option("--eval-every", f.eval_every, "Held-out evaluation cadence");
    app->add_option("--checkpoint-every", f.checkpoint_every, "Checkpoint cadence");
    app->add_option("--eval-knockouts", f.eval_knockouts, "Knockouts evaluated at each eval step")->delimiter(',');
    app->add_flag("--mask-eoi", f.mask_eoi, "Block text-to-[EOI] attention during training");
    app->add_flag("--resume", f.resume, "Continue from the newest checkpoint in the output directory");
}

void apply_train_flags(const TrainFlags& f, gs::training::TrainConfig& tc) {
    if (f.regime) tc.regime = gs::tasks::loss_regime_from_string(*f.regime);
    set_if(f.steps, tc.steps);
    set_if(f.batch_size, tc.batch_size);
    set_if(f.lr, tc.lr0);
    set_if(f.warmup, tc.warmup_steps);
    set_if(f.min_lr_ratio, tc.min_lr_ratio);
    set_if(f.weight_decay, tc.adam.weight_decay);
    set_if(f.grad_clip, tc.grad_clip);
    set_if(f.log_every, tc.log_every);
    set_if(f.eval_every, tc.eval_every);
    set_if(f.checkpoint_every, tc.checkpoint_every);
    if (!f.eval_knockouts.empty()) tc.eval_knockouts = f.eval_knockouts;
    if (f.mask_eoi) tc.eoi_mask = true;
    set_if(f.common.seed, tc.seed);
    tc.threads = f.common.threads;
    tc.validate();
}

std::string input_path(const std::optional<std::string>& flag, const json& file, const char* key) {
    std::string path;
    if (flag)
        path = *flag;
    else if (file.contains(key))
        path = file.at(key).get<std::string>();
    else
        throw gs::ConfigError(std::string("no ") + key + ": pass --" + key + " or set \"" + key + "\" in the config file");
    if (!std::filesystem::exists(path)) throw gs::ConfigError(std::string(key) + " not found: " + path);
    return path;
}

std::string corpus_path(const std::optional<std::string>& flag, const json& file) {
    return input_path(flag, file, "corpus");
}

std::string checkpoint_path(const std::optional<std::string>& flag, const json& file) {
    return input_path(flag, file, "checkpoint");
}

json corpus_summary(const gs::tasks::Dataset& ds) { return {{"config", ds.config}, {"config_hash", ds.config.hash()}}; }

void print_metric(const gs::training::MetricRow& r) {
    std::fprintf(stderr, "step %zu %s %s [%s] = %.6g\n", r.step, r.split.c_str(), r.metric.c_str(), r.knockout.c_str(),
                 r.value);
}

void write_narrow_gate(const RunDirectory& run, const gs::transformer::Weights& weights,
                       const gs::tasks::Dataset& ds, std::size_t threads) {
    const gs::experiments::Subject subject{weights, weights.fingerprint(), threads};
    auto out = gs::experiments::narrow_gate_experiment(subject, ds.test, ds.vocab);
    auto entry = gs::experiments::write_records(run.path(), "narrow_gate", std::move(out.records), out.config_hash,
                                                subject.checkpoint);
    gs::experiments::write_manifest(run.path(), {entry});
}

int run_train(const TrainFlags& f) {
    const json file = gs::cli::load_config_file(f.common.config);
    check_keys(file, {"corpus", "model", "train"}, "train");
    const auto ds = gs::tasks::load_corpus(corpus_path(f.corpus, file));
    auto tc = from_section(file, "train", gs::training::TrainConfig{});
    apply_train_flags(f, tc);

    gs::transformer::ModelConfig model_defaults;
    model_defaults.vocab_size = ds.vocab.size();
    model_defaults.embedding_groups = ds.vocab.modality_groups();
    auto mc = from_section(file, "model", model_defaults);
    set_if(f.model.layers, mc.n_layers);
    set_if(f.model.heads, mc.n_heads);
    set_if(f.model.d_model, mc.d_model);
    set_if(f.model.d_mlp, mc.d_mlp);
    set_if(f.model.max_seq_len, mc.max_seq_len);
    set_if(f.model.init_std, mc.init_std);
    set_if(f.model.group_offset_std, mc.group_offset_std);
    mc.seed = tc.seed;
    mc.validate();

    RunDirectory run(gs::cli::resolve_output_dir(f.common.out, "train"));
    run.write_snapshot({{"command", "train"}, {"corpus", corpus_summary(ds)}, {"model", mc}, {"train", tc}}, f.resume);
    const auto initial = gs::transformer::Weights::initialize(mc);
    gs::training::TrainOptions opts{run.path(), f.resume, print_metric};
    const auto result = gs::training::train(initial, ds, tc, opts);
    write_narrow_gate(run, result.weights, ds, tc.threads);
    std::cerr << "train: finished at step " << result.step << ", weights " << result.weights.fingerprint() << "\n";
    return 0;
}

gs::training::TrainConfig finetune_defaults() {
    gs::training::TrainConfig tc;
    tc.steps = 500;
    tc.lr0 = 3e-4;
    tc.warmup_steps = 0;
    tc.eval_every = 100;
    tc.checkpoint_every = 500;
    tc.eval_knockouts = {"none", "text-to-eoi"};
    return tc;
}

int run_finetune(const TrainFlags& f) {
    const json file = gs::cli::load_config_file(f.common.config);
    check_keys(file, {"corpus", "checkpoint", "train"}, "finetune");
    const auto ds = gs::tasks::load_corpus(corpus_path(f.corpus, file));
    const auto base = gs::transformer::load_checkpoint(checkpoint_path(f.checkpoint, file));
    auto tc = from_section(file, "train", finetune_defaults());
    apply_train_flags(f, tc);

    RunDirectory run(gs::cli::resolve_output_dir(f.common.out, "finetune"));
    run.write_snapshot({{"command", "finetune"},
                        {"corpus", corpus_summary(ds)},
                        {"base_checkpoint", base.weights.fingerprint()},
                        {"model", base.weights.config},
                        {"train", tc}},
                       f.resume);
    gs::training::TrainOptions opts{run.path(), f.resume, print_metric};
    const auto result = gs::training::train(base.weights, ds, tc, opts);
    write_narrow_gate(run, result.weights, ds, tc.threads);
    std::cerr << "finetune: finished at step " << result.step << ", weights " << result.weights.fingerprint() << "\n";
    return 0;
}

// analyze ------------------------------------------------------------------

const std::vector<std::string> kExperiments = {"modality-gap", "attention-profile", "probe",
                                               "ablate",       "patch",             "finetune-dynamics"};

struct AnalyzeFlags {
    CommonFlags common;
    std::optional<std::string> corpus, checkpoint, reference;
    std::optional<std::size_t> per_class, k, k_density, min_size, n_pairs, max_points;
    std::optional<double> threshold, z;
    std::vector<std::size_t> layers;
    std::vector<std::string> specs;
    TrainFlags finetune;
    bool all = false;
    std::string selected;
};

int run_analyze(const AnalyzeFlags& f) {
    namespace ex = gs::experiments;
    const json file = gs::cli::load_config_file(f.common.config);
    check_keys(file, {"corpus", "checkpoint", "per_class", "reference", "modality_gap", "attention_profile", "probe",
                      "ablation", "patching", "finetune"},
               "analyze");
    std::vector<std::string> names = f.all ? kExperiments : std::vector<std::string>{f.selected};
    if (names.front().empty()) throw gs::ConfigError("analyze needs an experiment subcommand or --all");
    for (const auto& spec : f.specs) (void)gs::transformer::KnockoutRule::parse(spec);

    const auto ds = gs::tasks::load_corpus(corpus_path(f.corpus, file));
    const auto ckpt = gs::transformer::load_checkpoint(checkpoint_path(f.checkpoint, file));
    const auto& weights = ckpt.weights;
    if (weights.config.vocab_size != ds.vocab.size())
        throw gs::ConfigError("checkpoint vocabulary does not match the corpus");
    const std::uint64_t seed = f.common.seed.value_or(ds.config.seed);
    const std::size_t per_class = f.per_class.value_or(file.value("per_class", std::size_t{20}));

    auto gap = from_section(file, "modality_gap", ex::ModalityGapConfig{});
    auto profile = from_section(file, "attention_profile", ex::AttentionProfileConfig{});
    auto probe = from_section(file, "probe", ex::ProbeConfig{});
    auto ablation = from_section(file, "ablation", ex::AblationConfig{});
    auto patching = from_section(file, "patching", ex::PatchingConfig{});
    auto finetune = from_section(file, "finetune", finetune_defaults());
    if (!f.layers.empty()) gap.layers = probe.layers = patching.layers = f.layers;
    gap.seed = probe.seed = seed;
    set_if(f.n_pairs, gap.n_pairs);
    set_if(f.max_points, gap.max_points);
    set_if(f.k_density, gap.k_density);
    set_if(f.z, gap.z);
    set_if(f.min_size, gap.min_size);
    set_if(f.threshold, profile.threshold);
    set_if(f.k, probe.k);
    if (!f.specs.empty()) ablation.specs = f.specs;
    for (const auto& s : ablation.specs) (void)gs::transformer::KnockoutRule::parse(s);
    TrainFlags ft = f.finetune;
    ft.common.seed = seed;
    ft.common.threads = f.common.threads;
    apply_train_flags(ft, finetune);

    std::optional<std::string> reference_path = f.reference;
    if (!reference_path && file.contains("reference")) reference_path = file.at("reference").get<std::string>();
    std::string reference_hash;
    if (reference_path) {
        probe.reference = gs::geometry::load_point_set(*reference_path);
        reference_hash = gs::hash_hex(json(probe.reference->data()).dump());
    }

    const auto selected = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
    json snapshot{{"command", "analyze"},
                  {"experiments", names},
                  {"checkpoint", weights.fingerprint()},
                  {"corpus", corpus_summary(ds)},
                  {"per_class", per_class},
                  {"seed", seed}};
    if (selected("modality-gap")) snapshot["modality_gap"] = gap;
    if (selected("attention-profile")) snapshot["attention_profile"] = profile;
    if (selected("probe")) {
        snapshot["probe"] = probe;
        if (reference_path) snapshot["reference_hash"] = reference_hash;
    }
    if (selected("ablate")) snapshot["ablation"] = ablation;
    if (selected("patch")) snapshot["patching"] = patching;
    if (selected("finetune-dynamics")) snapshot["finetune"] = finetune;

    RunDirectory run(gs::cli::resolve_output_dir(f.common.out, "analyze"));
    run.write_snapshot(snapshot);

    const ex::Subject subject{weights, weights.fingerprint(), f.common.threads};
    const auto docs = gs::tasks::classification_documents(ds, per_class, gs::derive_seed(seed, 0xa11));
    std::vector<ex::OutputEntry> entries;
    const auto emit = [&](const std::string& name, ex::ExperimentOutput out) {
        for (const auto& w : out.warnings) std::cerr << "warning: " << name << ": " << w << "\n";
        entries.push_back(
            ex::write_records(run.path(), name, std::move(out.records), out.config_hash, subject.checkpoint));
        std::cerr << "analyze: " << name << " wrote " << entries.back().records << " records\n";
    };
    for (const auto& n : names) {
        if (n == "modality-gap") emit("modality_gap", ex::modality_gap_experiment(subject, docs, gap));
        if (n == "attention-profile") emit("attention_profile", ex::attention_profile_experiment(subject, docs, profile));
        if (n == "probe") emit("semantic_probe", ex::semantic_probe_experiment(subject, docs, probe));
        if (n == "ablate") emit("ablation", ex::ablation_experiment(subject, ds.test, ds.vocab, ablation));
        if (n == "patch")
            emit("patching", ex::patching_experiment(subject, docs, ds.vocab, ds.class_pairs, patching));
        if (n == "finetune-dynamics")
            emit("finetune_dynamics", ex::finetune_experiment(subject, ds, {finetune}));
    }
    ex::write_manifest(run.path(), entries);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gatescope: cross-modal information-flow analysis on a desk-scale two-modality transformer"};
    app.require_subcommand(1, 1);

    DatasetFlags dataset;
    auto* ds_cmd = app.add_subcommand("dataset", "Generate the synthetic two-modality corpus");
    add_common(ds_cmd, dataset.common);
    ds_cmd->add_option("--classes", dataset.classes, "Number of classes");
    ds_cmd->add_option("--per-class", dataset.per_class, "Documents per class");
    ds_cmd->add_option("--image-codes", dataset.image_codes, "Image-code vocabulary size");
    ds_cmd->add_option("--image-length", dataset.image_length, "Image tokens per document");
    ds_cmd->add_option("--max-seq-len", dataset.max_seq_len, "Maximum document length");
    ds_cmd->add_option("--noise", dataset.noise, "Per-position corruption probability");
    ds_cmd->add_option("--train-fraction", dataset.train_fraction, "Training split fraction");
    ds_cmd->add_option("--test-fraction", dataset.test_fraction, "Test split fraction");
    ds_cmd->add_option("--regime", dataset.regime, "Loss regime recorded in the corpus masks");

    TrainFlags train;
    auto* train_cmd = app.add_subcommand("train", "Train a model from scratch on a corpus");
    add_common(train_cmd, train.common);
    add_train_flags(train_cmd, train);
    train_cmd->add_option("--layers", train.model.layers, "Decoder blocks");
    train_cmd->add_option("--heads", train.model.heads, "Attention heads");
    train_cmd->add_option("--d-model", train.model.d_model, "Residual width");
    train_cmd->add_option("--d-mlp", train.model.d_mlp, "MLP width");
    train_cmd->add_option("--max-seq-len", train.model.max_seq_len, "Positional table length");
    train_cmd->add_option("--init-std", train.model.init_std, "Weight init standard deviation");
    train_cmd->add_option("--group-offset-std", train.model.group_offset_std, "Per-modality embedding offset scale");

    TrainFlags finetune;
    auto* ft_cmd = app.add_subcommand("finetune", "Fine-tune a checkpoint, optionally with the [EOI] mask");
    add_common(ft_cmd, finetune.common);
    add_train_flags(ft_cmd, finetune);
    ft_cmd->add_option("--checkpoint", finetune.checkpoint, "Base checkpoint header (.json)");

    AnalyzeFlags analyze;
    auto* an_cmd = app.add_subcommand("analyze", "Run analysis experiments against a checkpoint");
    add_common(an_cmd, analyze.common);
    an_cmd->add_option("--checkpoint", analyze.checkpoint, "Checkpoint header (.json)");
    an_cmd->add_option("--corpus", analyze.corpus, "Corpus directory");
    an_cmd->add_option("--per-class", analyze.per_class, "Classification prompts per class for the analyses");
    an_cmd->add_option("--layers", analyze.layers, "Layers to analyze (default: all)")->delimiter(',');
    an_cmd->add_option("--spec", analyze.specs, "Knockout specs for ablate")->delimiter(',');
    an_cmd->add_option("--threshold", analyze.threshold, "Attention-share threshold for individual positions");
    an_cmd->add_option("--k", analyze.k, "Neighborhood size for the overlap probe");
    an_cmd->add_option("--reference", analyze.reference, "Reference embedding (point-set header) for the probe");
    an_cmd->add_option("--k-density", analyze.k_density, "Density neighborhood for clustering");
    an_cmd->add_option("--z", analyze.z, "Cluster robustness threshold");
    an_cmd->add_option("--min-size", analyze.min_size, "Smallest reported cluster");
    an_cmd->add_option("--n-pairs", analyze.n_pairs, "Cosine pairs per layer");
    an_cmd->add_option("--max-points", analyze.max_points, "Token states per modality for clustering");
    an_cmd->add_option("--steps", analyze.finetune.steps, "Fine-tuning steps (finetune-dynamics)");
    an_cmd->add_option("--lr", analyze.finetune.lr, "Fine-tuning learning rate (finetune-dynamics)");
    an_cmd->add_option("--batch-size", analyze.finetune.batch_size, "Fine-tuning batch size (finetune-dynamics)");
    an_cmd->add_option("--eval-every", analyze.finetune.eval_every, "Fine-tuning eval cadence (finetune-dynamics)");
    an_cmd->add_flag("--all", analyze.all, "Run all six experiments");
    an_cmd->require_subcommand(0, 1);
    for (const auto& name : kExperiments) {
        auto* sub = an_cmd->add_subcommand(name);
        sub->fallthrough();
        sub->callback([&analyze, name] { analyze.selected = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    try {
        if (ds_cmd->parsed()) return run_dataset(dataset);
        if (train_cmd->parsed()) return run_train(train);
        if (ft_cmd->parsed()) return run_finetune(finetune);
        if (an_cmd->parsed()) {
            if (analyze.all && !analyze.selected.empty())
                throw gs::ConfigError("pass either an experiment subcommand or --all, not both");
            return run_analyze(analyze);
        }
    } catch (const gs::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: invalid configuration: " << e.what() << "\n";
        return kExitConfig;
    } catch (const gs::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
