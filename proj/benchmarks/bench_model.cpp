#include <benchmark/benchmark.h>

#include "gatescope/tasks.hpp"
#include "gatescope/training.hpp"
#include "gatescope/transformer.hpp"

using namespace gatescope;

namespace {

const tasks::Dataset& desk_dataset() {
    static const tasks::Dataset ds = tasks::make_dataset(tasks::DatasetConfig{});
    return ds;
}

transformer::Weights desk_weights() {
    const auto& ds = desk_dataset();
    transformer::ModelConfig mc;
    mc.vocab_size = ds.vocab.size();
    mc.embedding_groups = ds.vocab.modality_groups();
    return transformer::Weights::initialize(mc);
}

void BM_ForwardLogits(benchmark::State& state) {
    const auto w = desk_weights();
    const auto prompt = desk_dataset().test.front().prompt();
    for (auto _ : state) benchmark::DoNotOptimize(transformer::forward_logits(w, prompt));
}
BENCHMARK(BM_ForwardLogits)->Unit(benchmark::kMicrosecond);

void BM_ForwardFullTrace(benchmark::State& state) {
    const auto w = desk_weights();
    const auto prompt = desk_dataset().test.front().prompt();
    for (auto _ : state) benchmark::DoNotOptimize(transformer::forward(w, prompt));
}
BENCHMARK(BM_ForwardFullTrace)->Unit(benchmark::kMicrosecond);

void BM_ForwardKnockout(benchmark::State& state) {
    const auto w = desk_weights();
    const auto prompt = desk_dataset().test.front().prompt();
    transformer::Interventions iv;
    iv.knockout = transformer::KnockoutRule::text_to_image_and_eoi().resolve(prompt.size(), prompt.n_eoi,
                                                                            w.config.n_layers);
    for (auto _ : state) benchmark::DoNotOptimize(transformer::forward(w, prompt, iv));
}
BENCHMARK(BM_ForwardKnockout)->Unit(benchmark::kMicrosecond);

/// Optimizer steps on the default desk configuration; the test split is
/// dropped so no evaluation runs inside the timed loop.
void BM_TrainSteps(benchmark::State& state) {
    auto ds = desk_dataset();
    ds.test.clear();
    const auto w = desk_weights();
    training::TrainConfig tc;
    tc.steps = 5;
    tc.warmup_steps = 1;
    tc.threads = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(training::train(w, ds, tc));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tc.steps));
}
BENCHMARK(BM_TrainSteps)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_Evaluate(benchmark::State& state) {
    const auto w = desk_weights();
    const auto& ds = desk_dataset();
    for (auto _ : state)
        benchmark::DoNotOptimize(training::evaluate(w, ds.test, ds.vocab, transformer::KnockoutRule::none()));
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);

}  // namespace
