#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protospace/corpus.hpp"
#include "protospace/linalg.hpp"

namespace protospace {

// Configuration of a synthetic benchmark world with known ground truth.
struct SynthConfig {
    std::size_t dim = 64;         // ambient embedding dimension
    std::size_t n_entities = 40;  // number of synthetic entities
    std::size_t n_features = 6;   // number of rated feature dimensions
    double noise_sigma = 0.05;    // latent Gaussian noise on entities
    // When true the prototype vectors equal the ideal feature directions;
    // otherwise they are related by the hidden orthogonal map below.
    bool identity_hidden_map = false;
    std::uint64_t seed = 0;
    // Rank of the subspace the feature directions are drawn from. 0 selects
    // the default max(2, n_features / 2). Must not exceed n_features.
    std::size_t direction_rank = 0;
    // Scale applied to the component of each latent entity position that is
    // orthogonal to the feature-direction subspace, before normalization.
    // Values below 1 concentrate entities near the subspace the rated
    // directions span, which keeps per-feature example centroids close to
    // their ideal directions. Must lie in [0, 1].
    double off_span_scale = 0.25;
    std::string id_prefix;  // prepended to every generated id
};

// A fully constructed synthetic world. Entities live in one F-dimensional
// subspace of R^dim, prototypes in a disjoint one, and the `hidden_map` is
// the symmetric orthogonal involution connecting them: each prototype equals
// hidden_map applied to its ideal direction (and vice versa). Ratings are the
// noise-free latent scores, so a perfect alignment reproduces them exactly.
struct SynthWorld {
    EmbeddingStore entities;
    EmbeddingStore prototypes;  // feature prototypes plus one distractor each
    RatingsTable ratings;
    std::vector<ClassificationItem> class_items;  // one per feature
    std::vector<std::string> feature_ids;
    std::vector<std::string> distractor_ids;
    Matrix hidden_map;  // dim x dim, orthogonal, symmetric, self-inverse
    std::vector<EmbeddingVector> ideal_directions;  // one per feature
    std::vector<FeaturePrototype> prototype_meta;
    std::vector<Entity> entity_meta;
};

// Deterministically builds the world for a config. Requirements:
// dim >= 2 * n_features (the two subspaces must fit disjointly),
// n_features >= 4 (classification items need three sibling negatives),
// n_entities >= 7 (classification items list seven examples),
// noise_sigma >= 0, direction_rank <= n_features. Violations → ConfigError.
SynthWorld synth_world(const SynthConfig& config);

}  // namespace protospace
