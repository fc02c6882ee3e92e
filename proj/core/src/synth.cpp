#include "protospace/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <string>

#include "protospace/errors.hpp"
#include "protospace/random.hpp"

namespace protospace {

namespace {

std::string padded(const std::string& prefix, const char* stem,
                   std::size_t index, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%0*zu", width, index);
    return prefix + stem + buf;
}

// Gaussian vector of length n from an already-seeded stream.
std::vector<double> gaussian_vec(DeterministicRng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.gaussian();
    return v;
}

// Columns [first, first + count) of a square matrix, as a rows x count block.
Matrix column_block(const Matrix& m, std::size_t first, std::size_t count) {
    Matrix block(m.rows, count);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < count; ++j) {
            block.at(i, j) = m.at(i, first + j);
        }
    }
    return block;
}

Matrix add(const Matrix& a, const Matrix& b) {
    Matrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    Matrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

}  // namespace

SynthWorld synth_world(const SynthConfig& config) {
    const std::size_t d = config.dim;
    const std::size_t f = config.n_features;
    const std::size_t n = config.n_entities;
    if (f < 4) {
        throw ConfigError("synthetic world needs at least 4 features");
    }
    if (d < 2 * f) {
        throw ConfigError(
            "synthetic world needs dim >= 2 * n_features to host disjoint "
            "entity and prototype subspaces");
    }
    if (n < 7) {
        throw ConfigError("synthetic world needs at least 7 entities");
    }
    if (!(config.noise_sigma >= 0.0)) {
        throw ConfigError("noise_sigma must be non-negative");
    }
    if (config.direction_rank > f) {
        throw ConfigError("direction_rank cannot exceed n_features");
    }
    if (!(config.off_span_scale >= 0.0 && config.off_span_scale <= 1.0)) {
        throw ConfigError("off_span_scale must lie in [0, 1]");
    }
    const std::size_t rank = config.direction_rank != 0
                                 ? config.direction_rank
                                 : std::max<std::size_t>(2, f / 2);

    SynthWorld world;

    // Two disjoint F-dimensional subspaces of R^d from one orthogonal frame.
    const Matrix q = random_orthogonal(d, derive_seed(config.seed, 0));
    const Matrix basis_e = column_block(q, 0, f);   // entity subspace
    const Matrix basis_p = column_block(q, f, f);   // prototype subspace

    // Feature directions: unit vectors confined to a `rank`-dimensional
    // subspace of the latent space, so a map learned from a spanning subset
    // of features determines the held-out ones too.
    const Matrix latent_frame =
        random_orthogonal(f, derive_seed(config.seed, 1));
    const Matrix dir_subspace = column_block(latent_frame, 0, rank);
    DeterministicRng dir_rng(derive_seed(config.seed, 2));
    std::vector<EmbeddingVector> latent_dirs;  // g_i, in R^f
    latent_dirs.reserve(f);
    for (std::size_t i = 0; i < f; ++i) {
        EmbeddingVector coeffs(gaussian_vec(dir_rng, rank));
        latent_dirs.push_back(normalize(apply_matrix(dir_subspace, coeffs)));
    }

    // Latent entity positions: seeded uniform draws with the off-subspace
    // component damped, normalized, and the ratings computed from the
    // normalized positions so that at zero noise the embedding scores
    // reproduce the ratings exactly.
    DeterministicRng latent_rng(derive_seed(config.seed, 3));
    std::vector<EmbeddingVector> latents;  // z_e, unit vectors in R^f
    latents.reserve(n);
    for (std::size_t e = 0; e < n; ++e) {
        EmbeddingVector raw{std::vector<double>(f)};
        for (std::size_t k = 0; k < f; ++k) {
            raw[k] = latent_rng.uniform(-1.0, 1.0);
        }
        // project onto the direction subspace: span + scaled complement
        EmbeddingVector coords{std::vector<double>(rank)};
        for (std::size_t j = 0; j < rank; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < f; ++k) {
                s += dir_subspace.at(k, j) * raw[k];
            }
            coords[j] = s;
        }
        const EmbeddingVector in_span = apply_matrix(dir_subspace, coords);
        EmbeddingVector z{std::vector<double>(f)};
        for (std::size_t k = 0; k < f; ++k) {
            z[k] = in_span[k] +
                   config.off_span_scale * (raw[k] - in_span[k]);
        }
        latents.push_back(normalize(z));
    }

    const int ent_width = n > 999 ? 6 : 3;
    std::vector<std::string> entity_ids;
    entity_ids.reserve(n);
    for (std::size_t e = 0; e < n; ++e) {
        entity_ids.push_back(padded(config.id_prefix, "ent", e, ent_width));
    }
    world.feature_ids.reserve(f);
    world.distractor_ids.reserve(f);
    for (std::size_t i = 0; i < f; ++i) {
        world.feature_ids.push_back(padded(config.id_prefix, "feat", i, 2));
        world.distractor_ids.push_back(padded(config.id_prefix, "nons", i, 2));
    }

    for (std::size_t e = 0; e < n; ++e) {
        for (std::size_t i = 0; i < f; ++i) {
            world.ratings.add(entity_ids[e], world.feature_ids[i],
                              dot(latents[e], latent_dirs[i]));
        }
    }

    // Entity embeddings: noisy latents pushed through the entity basis.
    DeterministicRng noise_rng(derive_seed(config.seed, 4));
    for (std::size_t e = 0; e < n; ++e) {
        EmbeddingVector noisy = latents[e];
        for (std::size_t k = 0; k < f; ++k) {
            noisy[k] += config.noise_sigma * noise_rng.gaussian();
        }
        EmbeddingRecord rec;
        rec.id = entity_ids[e];
        rec.text = entity_ids[e];
        rec.vector = normalize(apply_matrix(basis_e, noisy));
        world.entities.add(std::move(rec));
        Entity meta;
        meta.id = entity_ids[e];
        meta.name = entity_ids[e];
        world.entity_meta.push_back(std::move(meta));
    }

    // Ideal directions in embedding space.
    world.ideal_directions.reserve(f);
    for (std::size_t i = 0; i < f; ++i) {
        world.ideal_directions.push_back(
            normalize(apply_matrix(basis_e, latent_dirs[i])));
    }

    // Hidden map H = B_P O B_Eᵀ + B_E Oᵀ B_Pᵀ + (I - B_E B_Eᵀ - B_P B_Pᵀ):
    // swaps the two subspaces (through the latent rotation O) and fixes
    // their complement, making H orthogonal, symmetric, and self-inverse.
    if (config.identity_hidden_map) {
        world.hidden_map = Matrix::identity(d);
    } else {
        const Matrix o = random_orthogonal(f, derive_seed(config.seed, 5));
        const Matrix swap_in = matmul(matmul(basis_p, o), transpose(basis_e));
        const Matrix swap_out =
            matmul(matmul(basis_e, transpose(o)), transpose(basis_p));
        Matrix complement = Matrix::identity(d);
        complement = subtract(complement, matmul(basis_e, transpose(basis_e)));
        complement = subtract(complement, matmul(basis_p, transpose(basis_p)));
        world.hidden_map = add(add(swap_in, swap_out), complement);
    }

    // Prototypes: the hidden map applied to each ideal direction, plus one
    // random unit distractor per feature.
    DeterministicRng distractor_rng(derive_seed(config.seed, 6));
    for (std::size_t i = 0; i < f; ++i) {
        EmbeddingRecord rec;
        rec.id = world.feature_ids[i];
        rec.text = world.feature_ids[i];
        rec.vector = normalize(
            apply_matrix(world.hidden_map, world.ideal_directions[i]));
        world.prototypes.add(std::move(rec));
        FeaturePrototype meta;
        meta.feature_id = world.feature_ids[i];
        meta.description = world.feature_ids[i];
        world.prototype_meta.push_back(std::move(meta));
    }
    for (std::size_t i = 0; i < f; ++i) {
        EmbeddingRecord rec;
        rec.id = world.distractor_ids[i];
        rec.text = world.distractor_ids[i];
        rec.vector =
            normalize(EmbeddingVector(gaussian_vec(distractor_rng, d)));
        world.prototypes.add(std::move(rec));
        FeaturePrototype meta;
        meta.feature_id = world.distractor_ids[i];
        meta.description = world.distractor_ids[i];
        world.prototype_meta.push_back(std::move(meta));
    }

    // Classification items: per feature, the seven highest-rated entities as
    // examples and, as negatives, the next three features cyclically plus
    // the feature's distractor.
    for (std::size_t i = 0; i < f; ++i) {
        auto rows = world.ratings.rows_for(world.feature_ids[i]);
        std::stable_sort(rows.begin(), rows.end(),
                         [](const RatingsTable::Row& a,
                            const RatingsTable::Row& b) {
                             if (a.rating != b.rating) {
                                 return a.rating > b.rating;
                             }
                             return a.item < b.item;
                         });
        ClassificationItem item;
        item.target = world.feature_ids[i];
        for (std::size_t k = 0; k < 7; ++k) {
            item.examples.push_back(rows[k].item);
        }
        for (std::size_t step = 1; step <= 3; ++step) {
            item.negatives.push_back(world.feature_ids[(i + step) % f]);
        }
        item.negatives.push_back(world.distractor_ids[i]);
        validate_classification_item(item, /*relax=*/false);
        world.class_items.push_back(std::move(item));
    }

    return world;
}

}  // namespace protospace
