// Microbenchmarks for the loss functions, with and without gradients.

#include <benchmark/benchmark.h>

#include <vector>

#include "protospace/linalg.hpp"
#include "protospace/objectives.hpp"
#include "protospace/random.hpp"

using namespace protospace;

namespace {

EmbeddingVector unit(DeterministicRng& rng, std::size_t d) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.gaussian();
    return normalize(EmbeddingVector(std::move(v)));
}

ClassificationBatch class_batch(DeterministicRng& rng, std::size_t d) {
    ClassificationBatch batch;
    batch.target = unit(rng, d);
    for (int i = 0; i < 4; ++i) batch.negatives.push_back(unit(rng, d));
    std::vector<EmbeddingVector> examples;
    for (int i = 0; i < 7; ++i) examples.push_back(unit(rng, d));
    batch.centroid = centroid(examples);
    return batch;
}

RankBatchItem rank_item(DeterministicRng& rng, std::size_t d) {
    RankBatchItem item;
    item.e1 = unit(rng, d);
    item.e2 = unit(rng, d);
    item.f = unit(rng, d);
    item.y = 1.0;
    return item;
}

}  // namespace

static void BM_ClassificationLoss(benchmark::State& state) {
    DeterministicRng rng(11);
    const auto batch = class_batch(rng, static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(classification_loss(batch, 0.25));
    }
}
BENCHMARK(BM_ClassificationLoss)->Arg(64)->Arg(1024);

static void BM_ClassificationLossWithGrads(benchmark::State& state) {
    DeterministicRng rng(12);
    const auto batch = class_batch(rng, static_cast<std::size_t>(state.range(0)));
    ClassificationGrads grads;
    for (auto _ : state) {
        benchmark::DoNotOptimize(classification_loss(batch, 0.25, &grads));
    }
}
BENCHMARK(BM_ClassificationLossWithGrads)->Arg(64)->Arg(1024);

static void BM_RankingLoss(benchmark::State& state) {
    DeterministicRng rng(13);
    const auto item = rank_item(rng, static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(ranking_loss(item, 10.0));
    }
}
BENCHMARK(BM_RankingLoss)->Arg(64)->Arg(1024);

static void BM_CombinedLoss(benchmark::State& state) {
    DeterministicRng rng(14);
    const std::size_t d = static_cast<std::size_t>(state.range(0));
    std::vector<ClassificationBatch> cls;
    for (int i = 0; i < 8; ++i) cls.push_back(class_batch(rng, d));
    std::vector<RankBatchItem> rnk;
    for (int i = 0; i < 32; ++i) rnk.push_back(rank_item(rng, d));
    const LossConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(combined_loss(cls, rnk, cfg, true));
    }
}
BENCHMARK(BM_CombinedLoss)->Arg(64)->Arg(256);

static void BM_PairwiseSum(benchmark::State& state) {
    DeterministicRng rng(15);
    std::vector<double> xs(static_cast<std::size_t>(state.range(0)));
    for (double& x : xs) x = rng.gaussian();
    for (auto _ : state) {
        benchmark::DoNotOptimize(pairwise_sum(xs.data(), xs.size()));
    }
}
BENCHMARK(BM_PairwiseSum)->Arg(1024)->Arg(65536);
