#include <map>

#include "common.hpp"
#include "gatescope/common/error.hpp"
#include "gatescope/training/trainer.hpp"

namespace gatescope::experiments {

using nlohmann::json;

ExperimentOutput finetune_experiment(const Subject& subject, const tasks::Dataset& dataset,
                                     const FinetuneDynamicsConfig& config) {
    require(!dataset.test.empty(), "fine-tuning dynamics need a test split");
    training::TrainConfig base = config.train;
    base.eval_knockouts = {"none", "text-to-eoi"};
    base.threads = subject.threads;

    ExperimentOutput out;
    json cfg{{"train", base}};
    cfg["train"].erase("threads");
    out.config_hash = detail::config_hash(cfg, dataset.config.hash());
    RecordSink sink("finetune_dynamics", subject.checkpoint, out.config_hash, base.seed,
                    subject.weights.config.n_layers);

    for (const bool masked : {true, false}) {
        auto tc = base;
        tc.eoi_mask = masked;
        const auto result = training::train(subject.weights, dataset, tc);
        const std::string run = masked ? "masked" : "unmasked";
        std::map<std::size_t, std::map<std::string, double>> accuracy;
        for (const auto& row : result.metrics) {
            if (row.split != "test") continue;
            auto& r = sink.add(row.metric, row.value);
            r.group = run + ":" + row.knockout;
            r.step = static_cast<long>(row.step);
            if (row.metric == "accuracy") accuracy[row.step][row.knockout] = row.value;
        }
        for (const auto& [step, acc] : accuracy) {
            auto& r = sink.add("accuracy_gap", acc.at("none") - acc.at("text-to-eoi"));
            r.group = run;
            r.step = static_cast<long>(step);
        }
    }
    out.records = sink.take();
    return out;
}

}  // namespace gatescope::experiments
