#include "gatescope/training/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "batch.hpp"
#include "gatescope/common/error.hpp"
#include "gatescope/common/hash.hpp"
#include "gatescope/common/io.hpp"
#include "gatescope/common/parallel.hpp"
#include "gatescope/common/rng.hpp"
#include "gatescope/training/evaluate.hpp"

namespace gatescope::training {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {
constexpr std::uint64_t kBatchStream = 0xba7c;
}

void TrainConfig::validate() const {
    require(lr0 > 0.0 && std::isfinite(lr0), "lr0 must be positive");
    // steps == 0 is accepted and returns the initial weights unchanged.
    require(batch_size >= 1, "batch_size must be at least 1");
    require(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0, "min_lr_ratio must lie in [0, 1]");
    require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0,
            "Adam betas must lie in [0, 1)");
    require(adam.eps > 0.0, "Adam epsilon must be positive");
    require(adam.weight_decay >= 0.0, "weight decay must be non-negative");
    require(grad_clip >= 0.0, "grad_clip must be non-negative");
    require(log_every >= 1 && eval_every >= 1 && checkpoint_every >= 1, "cadences must be at least 1");
    require(threads >= 1, "threads must be at least 1");
    for (const auto& k : eval_knockouts) (void)transformer::KnockoutRule::parse(k);
}

std::string TrainConfig::trajectory_hash() const {
    json j = *this;
    for (const char* key : {"threads", "log_every", "eval_every", "checkpoint_every", "eval_knockouts"}) j.erase(key);
    return hash_hex(j.dump());
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"regime", std::string(tasks::to_string(c.regime))},
             {"batch_size", c.batch_size},
             {"steps", c.steps},
             {"lr0", c.lr0},
             {"warmup_steps", c.warmup_steps},
             {"min_lr_ratio", c.min_lr_ratio},
             {"adam",
              {{"beta1", c.adam.beta1},
               {"beta2", c.adam.beta2},
               {"eps", c.adam.eps},
               {"weight_decay", c.adam.weight_decay}}},
             {"grad_clip", c.grad_clip},
             {"eoi_mask", c.eoi_mask},
             {"seed", c.seed},
             {"log_every", c.log_every},
             {"eval_every", c.eval_every},
             {"checkpoint_every", c.checkpoint_every},
             {"eval_knockouts", c.eval_knockouts},
             {"threads", c.threads}};
}

void from_json(const json& j, TrainConfig& c) {
    io::require_known_keys(j,
                           {"regime", "batch_size", "steps", "lr0", "warmup_steps", "min_lr_ratio", "adam",
                            "grad_clip", "eoi_mask", "seed", "log_every", "eval_every", "checkpoint_every",
                            "eval_knockouts", "threads"},
                           "train config");
    const TrainConfig d;
    c.regime = tasks::loss_regime_from_string(j.value("regime", std::string(tasks::to_string(d.regime))));
    c.batch_size = j.value("batch_size", d.batch_size);
    c.steps = j.value("steps", d.steps);
    c.lr0 = j.value("lr0", d.lr0);
    c.warmup_steps = j.value("warmup_steps", d.warmup_steps);
    c.min_lr_ratio = j.value("min_lr_ratio", d.min_lr_ratio);
    c.adam = d.adam;
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        io::require_known_keys(a, {"beta1", "beta2", "eps", "weight_decay"}, "adam config");
        c.adam.beta1 = a.value("beta1", d.adam.beta1);
        c.adam.beta2 = a.value("beta2", d.adam.beta2);
        c.adam.eps = a.value("eps", d.adam.eps);
        c.adam.weight_decay = a.value("weight_decay", d.adam.weight_decay);
    }
    c.grad_clip = j.value("grad_clip", d.grad_clip);
    c.eoi_mask = j.value("eoi_mask", d.eoi_mask);
    c.seed = j.value("seed", d.seed);
    c.log_every = j.value("log_every", d.log_every);
    c.eval_every = j.value("eval_every", d.eval_every);
    c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
    c.eval_knockouts = j.value("eval_knockouts", d.eval_knockouts);
    c.threads = j.value("threads", d.threads);
}

double learning_rate(const TrainConfig& c, std::size_t step) {
    if (c.warmup_steps > 0 && step <= c.warmup_steps)
        return c.lr0 * static_cast<double>(step) / static_cast<double>(c.warmup_steps);
    if (c.steps <= c.warmup_steps) return c.lr0;
    const double progress =
        static_cast<double>(step - c.warmup_steps) / static_cast<double>(c.steps - c.warmup_steps);
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
    return c.lr0 * (c.min_lr_ratio + (1.0 - c.min_lr_ratio) * cosine);
}

void write_metric_csv(const fs::path& path, const std::vector<MetricRow>& rows) {
    std::string text = std::string(kMetricCsvHeader) + "\n";
    for (const auto& r : rows)
        text += std::to_string(r.step) + "," + r.split + "," + r.metric + "," + r.knockout + "," +
                io::format_real(r.value) + "\n";
    io::write_text(path, text);
}

std::vector<MetricRow> read_metric_csv(const fs::path& path) {
    std::istringstream in(io::read_text(path));
    std::string line;
    if (!std::getline(in, line) || line != kMetricCsvHeader) throw IoError(path.string() + ": not a metric log");
    std::vector<MetricRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
        if (f.size() != 5) throw IoError(path.string() + ": malformed row: " + line);
        rows.push_back({std::stoul(f[0]), f[1], f[2], f[3], std::stod(f[4])});
    }
    return rows;
}

namespace {

struct ResumePoint {
    fs::path header;
    std::size_t step = 0;
};

std::optional<ResumePoint> latest_checkpoint(const fs::path& dir, std::size_t max_step) {
    if (!fs::is_directory(dir)) return std::nullopt;
    static const std::regex pattern(R"(step_(\d{7})\.json)");
    std::optional<ResumePoint> best;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (!std::regex_match(name, m, pattern)) continue;
        const std::size_t step = std::stoul(m[1].str());
        if (step > max_step || !fs::exists(fs::path(entry.path()).replace_extension(".optim.bin"))) continue;
        if (!best || step > best->step) best = ResumePoint{entry.path(), step};
    }
    return best;
}

std::string checkpoint_name(std::size_t step) {
    std::string digits = std::to_string(step);
    return "step_" + std::string(7 - std::min<std::size_t>(7, digits.size()), '0') + digits + ".json";
}

class Trainer {
public:
    Trainer(const tasks::Dataset& dataset, const TrainConfig& config, const TrainOptions& options)
        : dataset_(dataset), config_(config), options_(options) {}

    TrainResult run(const transformer::Weights& initial) {
        config_.validate();
        const auto& mc = initial.config;
        require(mc.vocab_size == dataset_.vocab.size(), "model vocabulary size " + std::to_string(mc.vocab_size) +
                                                            " does not match the corpus (" +
                                                            std::to_string(dataset_.vocab.size()) + ")");
        require(mc.max_seq_len >= dataset_.config.max_seq_len, "model max_seq_len is shorter than the corpus documents");
        require(!dataset_.train.empty(), "training split is empty");

        result_.weights = initial;
        const std::size_t P = initial.values.size();
        result_.optimizer.first_moment.assign(P, 0.0F);
        result_.optimizer.second_moment.assign(P, 0.0F);
        prepare_output();

        transformer::ParameterLayout layout(mc);
        decayed_.assign(P, 0);
        for (const auto& t : layout.tensors())
            if (t.decayed) std::fill_n(decayed_.begin() + static_cast<std::ptrdiff_t>(t.offset), t.size, 1);

        if (result_.step == 0) emit_eval(0);
        detail::Engine<float> engine(mc, result_.weights.values.data());
        std::vector<detail::Workspace<float>> workspaces(std::min(config_.threads, config_.batch_size));
        std::vector<std::vector<float>> example_grads(config_.batch_size, std::vector<float>(P));
        std::vector<float> grad(P);

        for (std::size_t step = result_.step + 1; step <= config_.steps; ++step) {
            const auto batch = draw_batch(step, mc.n_layers);
            const std::size_t n_targets = target_count(batch);
            require(n_targets > 0, "training batch has no loss targets");
            const double per_target = 1.0 / static_cast<double>(n_targets);
            std::vector<double> sums(batch.size());
            parallel_for(batch.size(), config_.threads, [&](std::size_t b, std::size_t worker) {
                auto& g = example_grads[b];
                std::fill(g.begin(), g.end(), 0.0F);
                sums[b] = detail::example_loss(engine, batch[b], workspaces[worker], g.data(), per_target);
            });
            double loss = 0.0;
            std::fill(grad.begin(), grad.end(), 0.0F);
            for (std::size_t b = 0; b < batch.size(); ++b) {
                loss += sums[b];
                const auto& g = example_grads[b];
                for (std::size_t i = 0; i < P; ++i) grad[i] += g[i];
            }
            loss *= per_target;
            apply_update(step, loss, grad);
            result_.step = step;

            if (step % config_.log_every == 0 || step == config_.steps) emit({step, "train", "loss", "none", loss});
            if (step % config_.eval_every == 0 || step == config_.steps) emit_eval(step);
            if (step % config_.checkpoint_every == 0 || step == config_.steps) save(step);
        }
        if (!options_.out_dir.empty()) {
            transformer::save_checkpoint(options_.out_dir / "final.json",
                                         {result_.weights, result_.step, config_.seed, {}});
        }
        return std::move(result_);
    }

private:
    void prepare_output() {
        if (options_.out_dir.empty()) {
            require(!options_.resume, "resume needs an output directory");
            return;
        }
        io::ensure_directory(options_.out_dir / "checkpoints");
        const fs::path state = options_.out_dir / "train_state.json";
        if (options_.resume) {
            if (fs::exists(state)) {
                const auto stored = io::read_json(state).at("trajectory_hash").get<std::string>();
                require(stored == config_.trajectory_hash(),
                        "cannot resume: the training configuration differs from the interrupted run");
            }
            if (auto point = latest_checkpoint(options_.out_dir / "checkpoints", config_.steps)) {
                auto ckpt = transformer::load_checkpoint(point->header, true);
                require(ckpt.weights.config == result_.weights.config,
                        "cannot resume: checkpoint model config differs from the requested model");
                result_.weights = std::move(ckpt.weights);
                result_.optimizer = std::move(ckpt.optimizer);
                result_.step = ckpt.step;
                result_.resumed_from = ckpt.step;
                const fs::path csv = options_.out_dir / "metrics.csv";
                if (fs::exists(csv))
                    for (auto& row : read_metric_csv(csv))
                        if (row.step <= ckpt.step) result_.metrics.push_back(std::move(row));
            }
        }
        io::write_json(state, json{{"trajectory_hash", config_.trajectory_hash()}});
        write_metric_csv(options_.out_dir / "metrics.csv", result_.metrics);
    }

    std::vector<Example> draw_batch(std::size_t step, std::size_t n_layers) const {
        Rng rng(derive_seed(config_.seed, kBatchStream, step));
        std::vector<Example> batch;
        batch.reserve(config_.batch_size);
        for (std::size_t b = 0; b < config_.batch_size; ++b) {
            const auto& doc = dataset_.train[uniform_index(rng, dataset_.train.size())];
            batch.push_back(make_example(doc, dataset_.vocab, config_.regime, config_.eoi_mask, n_layers));
        }
        return batch;
    }

    void apply_update(std::size_t step, double loss, std::vector<float>& grad) {
        double norm2 = 0.0;
        for (float g : grad) norm2 += static_cast<double>(g) * g;
        const double norm = std::sqrt(norm2);
        if (!std::isfinite(loss) || !std::isfinite(norm))
            throw NumericalError("training diverged at step " + std::to_string(step) + ": loss " +
                                 io::format_real(loss) + ", gradient norm " + io::format_real(norm));
        const double clip = (config_.grad_clip > 0.0 && norm > config_.grad_clip) ? config_.grad_clip / norm : 1.0;

        const double lr = learning_rate(config_, step);
        const auto& a = config_.adam;
        const double bc1 = 1.0 - std::pow(a.beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(a.beta2, static_cast<double>(step));
        auto& w = result_.weights.values;
        auto& m = result_.optimizer.first_moment;
        auto& v = result_.optimizer.second_moment;
        const auto b1 = static_cast<float>(a.beta1);
        const auto b2 = static_cast<float>(a.beta2);
        const auto step_size = static_cast<float>(lr / bc1);
        const auto inv_bc2 = static_cast<float>(1.0 / bc2);
        const auto eps = static_cast<float>(a.eps);
        const auto decay = static_cast<float>(lr * a.weight_decay);
        const auto scale = static_cast<float>(clip);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const float g = grad[i] * scale;
            m[i] = b1 * m[i] + (1.0F - b1) * g;
            v[i] = b2 * v[i] + (1.0F - b2) * g * g;
            if (decayed_[i]) w[i] -= decay * w[i];
            w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
        }
    }

    void emit(MetricRow row) {
        if (options_.on_metric) options_.on_metric(row);
        result_.metrics.push_back(std::move(row));
    }

    void emit_eval(std::size_t step) {
        if (!dataset_.test.empty()) {
            for (const auto& name : config_.eval_knockouts) {
                const auto rule = transformer::KnockoutRule::parse(name);
                const auto m = evaluate(result_.weights, dataset_.test, dataset_.vocab, rule,
                                        {config_.regime, config_.threads});
                emit({step, "test", "accuracy", rule.name(), m.accuracy});
                emit({step, "test", "caption_exact_match", rule.name(), m.caption_exact_match});
                emit({step, "test", "loss", rule.name(), m.loss});
            }
        }
        flush_metrics();
    }

    void flush_metrics() const {
        if (!options_.out_dir.empty()) write_metric_csv(options_.out_dir / "metrics.csv", result_.metrics);
    }

    void save(std::size_t step) {
        flush_metrics();
        if (options_.out_dir.empty()) return;
        transformer::save_checkpoint(options_.out_dir / "checkpoints" / checkpoint_name(step),
                                     {result_.weights, step, config_.seed, result_.optimizer});
    }

    const tasks::Dataset& dataset_;
    TrainConfig config_;
    const TrainOptions& options_;
    TrainResult result_;
    std::vector<unsigned char> decayed_;
};

}  // namespace

TrainResult train(const transformer::Weights& initial, const tasks::Dataset& dataset, const TrainConfig& config,
                  const TrainOptions& options) {
    return Trainer(dataset, config, options).run(initial);
}

}  // namespace gatescope::training
