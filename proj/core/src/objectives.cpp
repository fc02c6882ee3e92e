#include "protospace/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "protospace/errors.hpp"

namespace protospace {

double pairwise_sum(const double* xs, std::size_t n) {
    if (n == 0) return 0.0;
    if (n <= 8) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += xs[i];
        return acc;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(xs, half) + pairwise_sum(xs + half, n - half);
}

double pairwise_mean(const std::vector<double>& xs) {
    return pairwise_sum(xs.data(), xs.size()) / static_cast<double>(xs.size());
}

EmbeddingVector centroid(const std::vector<EmbeddingVector>& vectors) {
    if (vectors.empty()) throw InputError("centroid: empty vector list");
    const std::size_t d = vectors[0].dim();
    EmbeddingVector out(std::vector<double>(d, 0.0));
    for (const auto& v : vectors) {
        if (v.dim() != d) throw DimensionError("centroid: mixed dimensions");
        for (std::size_t j = 0; j < d; ++j) out[j] += v[j];
    }
    const double inv = 1.0 / static_cast<double>(vectors.size());
    for (std::size_t j = 0; j < d; ++j) out[j] *= inv;
    return out;
}

double classification_loss(const ClassificationBatch& batch, double temperature,
                           ClassificationGrads* grads) {
    if (!(temperature > 0.0)) {
        throw ConfigError("classification_loss: temperature must be > 0");
    }
    if (batch.negatives.empty()) {
        throw InputError("classification_loss: no negatives");
    }
    const std::size_t d = batch.centroid.dim();
    if (batch.target.dim() != d) {
        throw DimensionError("classification_loss: target/centroid dims differ");
    }
    for (const auto& f : batch.negatives) {
        if (f.dim() != d) {
            throw DimensionError(
                "classification_loss: negative/centroid dims differ");
        }
    }

    const std::size_t k = 1 + batch.negatives.size();
    std::vector<double> logits(k);
    logits[0] = dot(batch.target, batch.centroid) / temperature;
    for (std::size_t i = 1; i < k; ++i) {
        logits[i] = dot(batch.negatives[i - 1], batch.centroid) / temperature;
    }

    const double zmax = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    std::vector<double> expz(k);
    for (std::size_t i = 0; i < k; ++i) {
        expz[i] = std::exp(logits[i] - zmax);
        denom += expz[i];
    }
    const double loss = std::log(denom) - (logits[0] - zmax);

    if (grads) {
        // dL/dz_i = p_i - [i == 0]; chain through z_i = (f_i . c) / T.
        grads->d_target = EmbeddingVector(std::vector<double>(d, 0.0));
        grads->d_centroid = EmbeddingVector(std::vector<double>(d, 0.0));
        grads->d_negatives.assign(batch.negatives.size(),
                                  EmbeddingVector(std::vector<double>(d, 0.0)));
        for (std::size_t i = 0; i < k; ++i) {
            const double p = expz[i] / denom;
            const double dz = p - (i == 0 ? 1.0 : 0.0);
            const double coef = dz / temperature;
            const EmbeddingVector& f =
                i == 0 ? batch.target : batch.negatives[i - 1];
            EmbeddingVector& df =
                i == 0 ? grads->d_target : grads->d_negatives[i - 1];
            for (std::size_t j = 0; j < d; ++j) {
                df[j] += coef * batch.centroid[j];
                grads->d_centroid[j] += coef * f[j];
            }
        }
    }
    return loss;
}

double ranking_loss(const RankBatchItem& item, double alpha,
                    RankingGrads* grads) {
    if (!(alpha > 0.0)) throw ConfigError("ranking_loss: alpha must be > 0");
    if (item.y != 1.0 && item.y != -1.0) {
        throw InputError("ranking_loss: label must be +1 or -1");
    }
    const std::size_t d = item.f.dim();
    if (item.e1.dim() != d || item.e2.dim() != d) {
        throw DimensionError("ranking_loss: mixed dimensions");
    }

    double margin = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        margin += (item.e1[j] - item.e2[j]) * item.f[j];
    }
    const double u = -alpha * item.y * margin;
    // sigmoid in the saturation-proof form; tanh(0) = 0 makes the zero-margin
    // value exactly 0.5
    const double loss = 0.5 * (1.0 + std::tanh(0.5 * u));

    if (grads) {
        const double slope = loss * (1.0 - loss);   // sigma'(u)
        const double coef = slope * (-alpha * item.y);  // dL/dmargin
        grads->d_e1 = EmbeddingVector(std::vector<double>(d, 0.0));
        grads->d_e2 = EmbeddingVector(std::vector<double>(d, 0.0));
        grads->d_f = EmbeddingVector(std::vector<double>(d, 0.0));
        for (std::size_t j = 0; j < d; ++j) {
            grads->d_e1[j] = coef * item.f[j];
            grads->d_e2[j] = -coef * item.f[j];
            grads->d_f[j] = coef * (item.e1[j] - item.e2[j]);
        }
    }
    return loss;
}

CombinedLossResult combined_loss(
    const std::vector<ClassificationBatch>& class_batches,
    const std::vector<RankBatchItem>& rank_items, const LossConfig& cfg,
    bool want_grads) {
    if (class_batches.empty() && rank_items.empty()) {
        throw InputError("combined_loss: no data");
    }
    if (cfg.lambda < 0.0) {
        throw ConfigError("combined_loss: lambda must be >= 0");
    }

    CombinedLossResult out;

    if (!class_batches.empty()) {
        std::vector<double> losses(class_batches.size());
        if (want_grads) out.class_grads.resize(class_batches.size());
        for (std::size_t i = 0; i < class_batches.size(); ++i) {
            losses[i] = classification_loss(
                class_batches[i], cfg.temperature,
                want_grads ? &out.class_grads[i] : nullptr);
        }
        out.value += pairwise_mean(losses);
        if (want_grads) {
            const double scale = 1.0 / static_cast<double>(class_batches.size());
            for (auto& g : out.class_grads) {
                for (double& x : g.d_target.values) x *= scale;
                for (double& x : g.d_centroid.values) x *= scale;
                for (auto& dn : g.d_negatives) {
                    for (double& x : dn.values) x *= scale;
                }
            }
        }
    }

    if (!rank_items.empty()) {
        std::vector<double> losses(rank_items.size());
        if (want_grads) out.rank_grads.resize(rank_items.size());
        for (std::size_t i = 0; i < rank_items.size(); ++i) {
            losses[i] = ranking_loss(rank_items[i], cfg.alpha,
                                     want_grads ? &out.rank_grads[i] : nullptr);
        }
        out.value += cfg.lambda * pairwise_mean(losses);
        if (want_grads) {
            const double scale =
                cfg.lambda / static_cast<double>(rank_items.size());
            for (auto& g : out.rank_grads) {
                for (double& x : g.d_e1.values) x *= scale;
                for (double& x : g.d_e2.values) x *= scale;
                for (double& x : g.d_f.values) x *= scale;
            }
        }
    }
    return out;
}

NormalizeBackprop normalize_with_backprop(const EmbeddingVector& v,
                                          const EmbeddingVector& upstream_grad) {
    if (v.dim() != upstream_grad.dim()) {
        throw DimensionError("normalize_with_backprop: dims differ");
    }
    NormalizeBackprop out;
    out.unit = normalize(v);  // DegenerateVectorError on zero input
    const double n = norm(v);
    const double along = dot(out.unit, upstream_grad);
    out.downstream = EmbeddingVector(std::vector<double>(v.dim(), 0.0));
    for (std::size_t j = 0; j < v.dim(); ++j) {
        out.downstream[j] = (upstream_grad[j] - out.unit[j] * along) / n;
    }
    return out;
}

}  // namespace protospace
