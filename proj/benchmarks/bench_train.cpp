// End-to-end benchmarks: a modest training run and the evaluation loop over
// a synthetic world, the two paths that dominate real usage.

#include <benchmark/benchmark.h>

#include <vector>

#include "protospace/evaluation.hpp"
#include "protospace/synth.hpp"
#include "protospace/train.hpp"

using namespace protospace;

namespace {

SynthWorld small_world() {
    SynthConfig cfg;
    cfg.dim = 32;
    cfg.n_entities = 24;
    cfg.n_features = 4;
    cfg.noise_sigma = 0.02;
    cfg.seed = 21;
    return synth_world(cfg);
}

}  // namespace

static void BM_SynthWorld(benchmark::State& state) {
    SynthConfig cfg;
    cfg.dim = static_cast<std::size_t>(state.range(0));
    cfg.n_entities = 40;
    cfg.n_features = 6;
    cfg.seed = 7;
    for (auto _ : state) {
        benchmark::DoNotOptimize(synth_world(cfg));
    }
}
BENCHMARK(BM_SynthWorld)->Arg(32)->Arg(64);

static void BM_TrainEpochs(benchmark::State& state) {
    const SynthWorld world = small_world();
    std::vector<RankPair> pairs;
    for (const auto& dim : world.ratings.dimensions()) {
        const auto p = generate_pairs(world.ratings, dim, 0.0, 60, 0);
        pairs.insert(pairs.end(), p.begin(), p.end());
    }
    const TrainInputs inputs = resolve_train_inputs(
        world.class_items, pairs, world.entities, world.prototypes);
    TrainConfig cfg;
    cfg.mode = TrainMode::ClassRankFull;
    cfg.epochs = static_cast<std::size_t>(state.range(0));
    cfg.patience = cfg.epochs;  // benchmark the full epoch budget
    cfg.seed = 3;
    for (auto _ : state) {
        benchmark::DoNotOptimize(train(inputs, cfg));
    }
}
BENCHMARK(BM_TrainEpochs)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

static void BM_EvaluateDataset(benchmark::State& state) {
    const SynthWorld world = small_world();
    EvalDataset dataset;
    dataset.name = "bench";
    dataset.ratings = world.ratings;
    const EvalConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(evaluate_dataset(
            dataset, world.entities, world.prototypes, nullptr, cfg,
            "pretrained", 0));
    }
}
BENCHMARK(BM_EvaluateDataset)->Unit(benchmark::kMillisecond);

static void BM_GeneratePairs(benchmark::State& state) {
    const SynthWorld world = small_world();
    const std::string dim = world.feature_ids.front();
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            generate_pairs(world.ratings, dim, 0.0, 340, 0));
    }
}
BENCHMARK(BM_GeneratePairs);

BENCHMARK_MAIN();
