#pragma once

#include <cstddef>
#include <vector>

#include "protospace/linalg.hpp"

namespace protospace {

// Shared loss hyperparameters.
struct LossConfig {
    double temperature = 0.25;  // softmax temperature T
    double alpha = 10.0;        // ranking sharpness
    double lambda = 0.25;       // weight of the ranking term in the sum
};

// One property-guessing instance resolved to vectors: the true prototype, its
// distractor prototypes, and the centroid of the example entities.
struct ClassificationBatch {
    EmbeddingVector target;
    std::vector<EmbeddingVector> negatives;  // 4 in strict datasets
    EmbeddingVector centroid;
};

struct ClassificationGrads {
    EmbeddingVector d_target;
    std::vector<EmbeddingVector> d_negatives;
    EmbeddingVector d_centroid;
};

// One ranking instance: y = +1 when e1 should score above e2 on direction f.
struct RankBatchItem {
    EmbeddingVector e1;
    EmbeddingVector e2;
    EmbeddingVector f;
    double y = 1.0;
};

struct RankingGrads {
    EmbeddingVector d_e1;
    EmbeddingVector d_e2;
    EmbeddingVector d_f;
};

// Sums in index order by recursive halving; the result is independent of
// chunking decisions, so parallel callers agree with serial ones bit for bit.
double pairwise_sum(const double* xs, std::size_t n);
double pairwise_mean(const std::vector<double>& xs);

// Plain mean of the vectors; deliberately NOT re-normalized. Throws
// InputError on an empty list, DimensionError on mixed dimensions.
EmbeddingVector centroid(const std::vector<EmbeddingVector>& vectors);

// Cross-entropy of the target prototype against the distractors:
//   -log( exp(z_0) / sum_k exp(z_k) ),  z_k = (f_k . c) / T
// stabilized by max-logit subtraction. Equal logits give log(k+1) exactly
// (ln 5 for the canonical 4-negative batch). Optional gradients w.r.t. every
// prototype and the centroid. Throws ConfigError for T <= 0, InputError for
// an empty negative list, DimensionError on mixed dimensions.
double classification_loss(const ClassificationBatch& batch, double temperature,
                           ClassificationGrads* grads = nullptr);

// sigmoid(-alpha * y * (e1 - e2) . f), computed in the stable tanh form.
// Zero margin gives exactly 0.5. Throws InputError unless y is +1 or -1,
// ConfigError for alpha <= 0.
double ranking_loss(const RankBatchItem& item, double alpha,
                    RankingGrads* grads = nullptr);

struct CombinedLossResult {
    double value = 0.0;
    // Per-item gradients, already scaled by the mean factors (1/n for the
    // classification term, lambda/m for the ranking term). Empty when
    // gradients were not requested.
    std::vector<ClassificationGrads> class_grads;
    std::vector<RankingGrads> rank_grads;
};

// mean(classification) + lambda * mean(ranking). An empty list contributes
// zero; both empty is an InputError.
CombinedLossResult combined_loss(
    const std::vector<ClassificationBatch>& class_batches,
    const std::vector<RankBatchItem>& rank_items, const LossConfig& cfg,
    bool want_grads = false);

struct NormalizeBackprop {
    EmbeddingVector unit;
    EmbeddingVector downstream;
};

// Unit vector plus the vector-Jacobian product of normalization:
//   downstream = (upstream - unit * (unit . upstream)) / ‖v‖
// Throws DegenerateVectorError on a zero input.
NormalizeBackprop normalize_with_backprop(const EmbeddingVector& v,
                                          const EmbeddingVector& upstream_grad);

}  // namespace protospace
