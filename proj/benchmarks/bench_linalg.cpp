// Microbenchmarks for the dense linear algebra kernels: matrix products,
// the one-sided Jacobi SVD, and the closed-form orthogonal fit.

#include <benchmark/benchmark.h>

#include <vector>

#include "protospace/linalg.hpp"
#include "protospace/procrustes.hpp"
#include "protospace/random.hpp"

using namespace protospace;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    DeterministicRng rng(seed);
    Matrix m(rows, cols);
    for (double& x : m.data) x = rng.gaussian();
    return m;
}

std::vector<EmbeddingVector> random_vectors(std::size_t n, std::size_t d,
                                            std::uint64_t seed) {
    DeterministicRng rng(seed);
    std::vector<EmbeddingVector> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v(d);
        for (double& x : v) x = rng.gaussian();
        out.push_back(EmbeddingVector(std::move(v)));
    }
    return out;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
    const std::size_t d = static_cast<std::size_t>(state.range(0));
    const Matrix a = random_matrix(d, d, 1);
    const Matrix b = random_matrix(d, d, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(matmul(a, b));
    }
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(256);

static void BM_ApplyMatrix(benchmark::State& state) {
    const std::size_t d = static_cast<std::size_t>(state.range(0));
    const Matrix m = random_matrix(d, d, 3);
    const auto vs = random_vectors(1, d, 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(apply_matrix(m, vs[0]));
    }
}
BENCHMARK(BM_ApplyMatrix)->Arg(64)->Arg(1024);

static void BM_Svd(benchmark::State& state) {
    const std::size_t d = static_cast<std::size_t>(state.range(0));
    const Matrix m = random_matrix(d, d, 5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(svd(m));
    }
}
BENCHMARK(BM_Svd)->Arg(8)->Arg(32)->Arg(64);

static void BM_ProcrustesRotation(benchmark::State& state) {
    const std::size_t d = static_cast<std::size_t>(state.range(0));
    const auto sources = random_vectors(64, d, 6);
    const Matrix r = random_orthogonal(d, 7);
    std::vector<EmbeddingVector> targets;
    for (const auto& s : sources) targets.push_back(apply_matrix(r, s));
    for (auto _ : state) {
        benchmark::DoNotOptimize(procrustes_rotation(sources, targets));
    }
}
BENCHMARK(BM_ProcrustesRotation)->Arg(16)->Arg(64);

static void BM_RandomOrthogonal(benchmark::State& state) {
    const std::size_t d = static_cast<std::size_t>(state.range(0));
    std::uint64_t seed = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(random_orthogonal(d, seed++));
    }
}
BENCHMARK(BM_RandomOrthogonal)->Arg(16)->Arg(64);
