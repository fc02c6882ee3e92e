#include "protospace/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "protospace/errors.hpp"
#include "protospace/random.hpp"

namespace protospace {

namespace {

struct MappedVec {
    EmbeddingVector pre;  // W v, before any renormalization
    EmbeddingVector out;  // what downstream math sees
};

MappedVec map_vec(const Matrix& w, bool renorm, const EmbeddingVector& v) {
    MappedVec m;
    m.pre = apply_matrix(w, v);
    m.out = renorm ? normalize(m.pre) : m.pre;
    return m;
}

// grad_w += outer(downstream_out backpropagated through the map, raw)
void accumulate(Matrix& grad_w, bool renorm, const MappedVec& mapped,
                const EmbeddingVector& raw, const EmbeddingVector& upstream) {
    const EmbeddingVector down =
        renorm ? normalize_with_backprop(mapped.pre, upstream).downstream
               : upstream;
    const std::size_t d = grad_w.rows;
    for (std::size_t i = 0; i < d; ++i) {
        const double di = down[i];
        if (di == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) {
            grad_w.at(i, j) += di * raw[j];
        }
    }
}

struct MappedClassItem {
    MappedVec target;
    std::vector<MappedVec> negatives;
    std::vector<MappedVec> examples;  // only populated under Shared scope
};

struct MappedRankItem {
    MappedVec f;
    MappedVec e1;  // only meaningful under Shared scope
    MappedVec e2;
};

// Loss and gradient over explicit index subsets of the two streams.
double subset_loss(const Matrix& w, const TrainInputs& data,
                   const std::vector<std::size_t>& class_idx,
                   const std::vector<std::size_t>& rank_idx,
                   const TrainConfig& cfg, Matrix* grad_w) {
    const bool shared = cfg.scope == AdapterScope::Shared;
    const bool renorm = cfg.renormalize;

    std::vector<MappedClassItem> mapped_class;
    std::vector<ClassificationBatch> class_batches;
    mapped_class.reserve(class_idx.size());
    class_batches.reserve(class_idx.size());
    for (const std::size_t idx : class_idx) {
        const ClassTrainItem& item = data.classification[idx];
        if (item.examples.empty()) {
            throw InputError("classification item without example entities");
        }
        MappedClassItem m;
        m.target = map_vec(w, renorm, item.target);
        for (const auto& n : item.negatives) {
            m.negatives.push_back(map_vec(w, renorm, n));
        }
        ClassificationBatch b;
        b.target = m.target.out;
        for (const auto& n : m.negatives) b.negatives.push_back(n.out);
        if (shared) {
            std::vector<EmbeddingVector> outs;
            for (const auto& e : item.examples) {
                m.examples.push_back(map_vec(w, renorm, e));
                outs.push_back(m.examples.back().out);
            }
            b.centroid = centroid(outs);
        } else {
            b.centroid = centroid(item.examples);
        }
        mapped_class.push_back(std::move(m));
        class_batches.push_back(std::move(b));
    }

    std::vector<MappedRankItem> mapped_rank;
    std::vector<RankBatchItem> rank_items;
    mapped_rank.reserve(rank_idx.size());
    rank_items.reserve(rank_idx.size());
    for (const std::size_t idx : rank_idx) {
        const RankTrainItem& item = data.ranking[idx];
        MappedRankItem m;
        m.f = map_vec(w, renorm, item.f);
        RankBatchItem b;
        b.f = m.f.out;
        b.y = item.y;
        if (shared) {
            m.e1 = map_vec(w, renorm, item.e1);
            m.e2 = map_vec(w, renorm, item.e2);
            b.e1 = m.e1.out;
            b.e2 = m.e2.out;
        } else {
            b.e1 = item.e1;
            b.e2 = item.e2;
        }
        mapped_rank.push_back(std::move(m));
        rank_items.push_back(std::move(b));
    }

    const CombinedLossResult res =
        combined_loss(class_batches, rank_items, cfg.loss, grad_w != nullptr);
    if (grad_w == nullptr) return res.value;

    for (std::size_t k = 0; k < class_idx.size(); ++k) {
        const ClassTrainItem& raw = data.classification[class_idx[k]];
        const MappedClassItem& m = mapped_class[k];
        const ClassificationGrads& g = res.class_grads[k];
        accumulate(*grad_w, renorm, m.target, raw.target, g.d_target);
        for (std::size_t n = 0; n < raw.negatives.size(); ++n) {
            accumulate(*grad_w, renorm, m.negatives[n], raw.negatives[n],
                       g.d_negatives[n]);
        }
        if (shared) {
            // centroid = mean of mapped examples: split its gradient evenly
            const double inv =
                1.0 / static_cast<double>(raw.examples.size());
            EmbeddingVector per(std::vector<double>(g.d_centroid.dim(), 0.0));
            for (std::size_t j = 0; j < per.dim(); ++j) {
                per[j] = g.d_centroid[j] * inv;
            }
            for (std::size_t e = 0; e < raw.examples.size(); ++e) {
                accumulate(*grad_w, renorm, m.examples[e], raw.examples[e],
                           per);
            }
        }
    }
    for (std::size_t k = 0; k < rank_idx.size(); ++k) {
        const RankTrainItem& raw = data.ranking[rank_idx[k]];
        const MappedRankItem& m = mapped_rank[k];
        const RankingGrads& g = res.rank_grads[k];
        accumulate(*grad_w, renorm, m.f, raw.f, g.d_f);
        if (shared) {
            accumulate(*grad_w, renorm, m.e1, raw.e1, g.d_e1);
            accumulate(*grad_w, renorm, m.e2, raw.e2, g.d_e2);
        }
    }
    return res.value;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

std::size_t infer_dimension(const TrainInputs& data, bool use_c, bool use_r) {
    std::size_t d = 0;
    auto take = [&](const EmbeddingVector& v, const char* what) {
        if (v.dim() == 0) {
            throw DimensionError(std::string("empty vector in ") + what);
        }
        if (d == 0) {
            d = v.dim();
        } else if (v.dim() != d) {
            throw DimensionError(std::string("mixed dimensions in ") + what);
        }
    };
    if (use_c) {
        for (const auto& item : data.classification) {
            take(item.target, "classification targets");
            for (const auto& n : item.negatives) {
                take(n, "classification distractors");
            }
            for (const auto& e : item.examples) {
                take(e, "classification examples");
            }
        }
    }
    if (use_r) {
        for (const auto& item : data.ranking) {
            take(item.e1, "pair entities");
            take(item.e2, "pair entities");
            take(item.f, "pair feature directions");
        }
    }
    return d;
}

void validate_config(const TrainConfig& cfg) {
    if (cfg.learning_rate <= 0.0) {
        throw ConfigError("learning rate must be positive");
    }
    if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
    if (cfg.batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (cfg.patience < 1) throw ConfigError("patience must be at least 1");
    if (cfg.validation_fraction < 0.0 || cfg.validation_fraction >= 1.0) {
        throw ConfigError("validation fraction must lie in [0, 1)");
    }
    if (cfg.init_epsilon < 0.0) {
        throw ConfigError("init epsilon must be non-negative");
    }
}

void require_mode_data(const TrainInputs& data, const TrainConfig& cfg) {
    if (mode_uses_classification(cfg.mode) && data.classification.empty()) {
        throw ConfigError("mode '" + to_string(cfg.mode) +
                          "' needs classification items");
    }
    if (mode_uses_ranking(cfg.mode) && data.ranking.empty()) {
        throw ConfigError("mode '" + to_string(cfg.mode) +
                          "' needs ranking pairs");
    }
}

}  // namespace

TrainMode train_mode_from_string(const std::string& name) {
    if (name == "pretrained") return TrainMode::Pretrained;
    if (name == "classification") return TrainMode::Classification;
    if (name == "rank-perc") return TrainMode::RankPerceptual;
    if (name == "rank-full") return TrainMode::RankFull;
    if (name == "class+rank-perc") return TrainMode::ClassRankPerceptual;
    if (name == "class+rank-full") return TrainMode::ClassRankFull;
    throw ConfigError("unknown training mode '" + name + "'");
}

std::string to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::Pretrained: return "pretrained";
        case TrainMode::Classification: return "classification";
        case TrainMode::RankPerceptual: return "rank-perc";
        case TrainMode::RankFull: return "rank-full";
        case TrainMode::ClassRankPerceptual: return "class+rank-perc";
        case TrainMode::ClassRankFull: return "class+rank-full";
    }
    throw ConfigError("invalid training mode value");
}

bool mode_uses_classification(TrainMode mode) {
    return mode == TrainMode::Classification ||
           mode == TrainMode::ClassRankPerceptual ||
           mode == TrainMode::ClassRankFull;
}

bool mode_uses_ranking(TrainMode mode) {
    return mode == TrainMode::RankPerceptual || mode == TrainMode::RankFull ||
           mode == TrainMode::ClassRankPerceptual ||
           mode == TrainMode::ClassRankFull;
}

double adapter_loss(const Matrix& w, const TrainInputs& data,
                    const TrainConfig& config, Matrix* grad_w) {
    if (config.mode == TrainMode::Pretrained) {
        throw ConfigError("pretrained mode has no training objective");
    }
    require_mode_data(data, config);
    const bool use_c = mode_uses_classification(config.mode);
    const bool use_r = mode_uses_ranking(config.mode);
    if (grad_w != nullptr) *grad_w = Matrix(w.rows, w.cols);
    return subset_loss(
        w, data,
        use_c ? all_indices(data.classification.size())
              : std::vector<std::size_t>{},
        use_r ? all_indices(data.ranking.size()) : std::vector<std::size_t>{},
        config, grad_w);
}

TrainResult train(const TrainInputs& data, const TrainConfig& config) {
    validate_config(config);

    if (config.mode == TrainMode::Pretrained) {
        const std::size_t d = infer_dimension(data, true, true);
        if (d == 0) {
            throw ConfigError(
                "pretrained mode needs at least one vector to size the "
                "identity map");
        }
        TrainResult result;
        result.adapter = identity_adapter(d, config.scope, config.renormalize);
        return result;
    }

    require_mode_data(data, config);
    const bool use_c = mode_uses_classification(config.mode);
    const bool use_r = mode_uses_ranking(config.mode);
    const std::size_t d = infer_dimension(data, use_c, use_r);

    // deterministic validation split: shuffle, carve off the leading slice,
    // never leave the training side empty
    auto split = [&](std::size_t n, std::uint64_t tag,
                     std::vector<std::size_t>& train_idx,
                     std::vector<std::size_t>& val_idx) {
        std::vector<std::size_t> idx = all_indices(n);
        DeterministicRng rng(derive_seed(config.seed, tag));
        rng.shuffle(idx);
        std::size_t n_val = static_cast<std::size_t>(
            std::floor(config.validation_fraction * static_cast<double>(n)));
        if (n_val >= n) n_val = n == 0 ? 0 : n - 1;
        val_idx.assign(idx.begin(), idx.begin() + n_val);
        train_idx.assign(idx.begin() + n_val, idx.end());
        std::sort(val_idx.begin(), val_idx.end());
        std::sort(train_idx.begin(), train_idx.end());
    };
    std::vector<std::size_t> train_c, val_c, train_r, val_r;
    if (use_c) split(data.classification.size(), 1, train_c, val_c);
    if (use_r) split(data.ranking.size(), 2, train_r, val_r);
    const bool has_val = !val_c.empty() || !val_r.empty();

    Matrix w = init_adapter(d, config.seed, config.init_epsilon, config.scope,
                            config.renormalize)
                   .w;
    Matrix moment1(d, d), moment2(d, d);
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::size_t step_count = 0;

    TrainResult result;
    result.trace.has_validation = has_val;
    Matrix best_w = w;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;

    Matrix grad(d, d);
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<std::size_t> order_c = train_c;
        std::vector<std::size_t> order_r = train_r;
        DeterministicRng shuffle_rng(derive_seed(config.seed, 1000 + epoch));
        if (use_c) shuffle_rng.shuffle(order_c);
        if (use_r) shuffle_rng.shuffle(order_r);

        // interleave mini-batches so both streams advance at matching pace
        const std::size_t nc = order_c.size();
        const std::size_t nr = order_r.size();
        std::size_t ic = 0, ir = 0;
        while (ic < nc || ir < nr) {
            bool take_class;
            if (ir >= nr) {
                take_class = true;
            } else if (ic >= nc) {
                take_class = false;
            } else {
                take_class = ic * nr <= ir * nc;  // lagging stream first
            }
            std::vector<std::size_t> batch_c, batch_r;
            if (take_class) {
                const std::size_t take =
                    std::min(config.batch_size, nc - ic);
                batch_c.assign(order_c.begin() + ic,
                               order_c.begin() + ic + take);
                ic += take;
            } else {
                const std::size_t take =
                    std::min(config.batch_size, nr - ir);
                batch_r.assign(order_r.begin() + ir,
                               order_r.begin() + ir + take);
                ir += take;
            }

            grad = Matrix(d, d);
            subset_loss(w, data, batch_c, batch_r, config, &grad);

            ++step_count;
            const double bc1 = 1.0 - std::pow(beta1, double(step_count));
            const double bc2 = 1.0 - std::pow(beta2, double(step_count));
            for (std::size_t i = 0; i < d * d; ++i) {
                const double g = grad.data[i];
                moment1.data[i] = beta1 * moment1.data[i] + (1.0 - beta1) * g;
                moment2.data[i] =
                    beta2 * moment2.data[i] + (1.0 - beta2) * g * g;
                const double m_hat = moment1.data[i] / bc1;
                const double v_hat = moment2.data[i] / bc2;
                w.data[i] -=
                    config.learning_rate * m_hat / (std::sqrt(v_hat) + adam_eps);
            }
        }

        // full-pass metrics on the training split
        grad = Matrix(d, d);
        const double train_loss =
            subset_loss(w, data, train_c, train_r, config, &grad);
        const double grad_norm = frobenius_norm(grad);
        double val_loss = std::numeric_limits<double>::quiet_NaN();
        if (has_val) {
            val_loss = subset_loss(w, data, val_c, val_r, config, nullptr);
        }
        if (!std::isfinite(train_loss) ||
            (has_val && !std::isfinite(val_loss))) {
            throw NumericalError("loss became non-finite at epoch " +
                                 std::to_string(epoch));
        }

        result.trace.epochs.push_back(
            EpochStats{epoch, train_loss, val_loss, grad_norm});

        const double monitored = has_val ? val_loss : train_loss;
        if (monitored < best) {
            best = monitored;
            best_w = w;
            best_epoch = epoch;
        } else if (epoch - best_epoch >= config.patience) {
            result.trace.early_stopped = true;
            break;
        }
    }

    result.trace.best_epoch = best_epoch;
    result.trace.best_monitored = best;
    if (config.project_orthogonal) best_w = qr_orthogonal_factor(best_w);
    result.adapter.w = std::move(best_w);
    result.adapter.scope = config.scope;
    result.adapter.renormalize = config.renormalize;
    return result;
}

GradCheckReport grad_check(const TrainInputs& data, const TrainConfig& config,
                           std::size_t max_entries, double step) {
    if (config.mode == TrainMode::Pretrained) {
        throw ConfigError("pretrained mode has no training objective");
    }
    validate_config(config);
    require_mode_data(data, config);
    if (max_entries < 1) throw ConfigError("need at least one probe entry");
    if (step <= 0.0) throw ConfigError("step must be positive");

    const std::size_t d = infer_dimension(
        data, mode_uses_classification(config.mode),
        mode_uses_ranking(config.mode));
    Matrix w =
        init_adapter(d, config.seed, config.init_epsilon, config.scope,
                     config.renormalize)
            .w;

    Matrix analytic(d, d);
    adapter_loss(w, data, config, &analytic);

    std::vector<std::size_t> entries;
    if (d * d <= max_entries) {
        entries = all_indices(d * d);
    } else {
        DeterministicRng rng(derive_seed(config.seed, 77));
        std::vector<std::size_t> pool = all_indices(d * d);
        rng.shuffle(pool);
        entries.assign(pool.begin(), pool.begin() + max_entries);
    }

    GradCheckReport report;
    for (const std::size_t e : entries) {
        const double saved = w.data[e];
        w.data[e] = saved + step;
        const double up = adapter_loss(w, data, config);
        w.data[e] = saved - step;
        const double down = adapter_loss(w, data, config);
        w.data[e] = saved;
        const double fd = (up - down) / (2.0 * step);
        const double a = analytic.data[e];
        const double rel =
            std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-5});
        report.max_rel_error = std::max(report.max_rel_error, rel);
        ++report.entries_checked;
    }
    return report;
}

}  // namespace protospace
