#pragma once

#include <string>
#include <vector>

#include "protospace/adapter.hpp"
#include "protospace/corpus.hpp"
#include "protospace/linalg.hpp"

namespace protospace {

enum class DirectionSource { Prototype, Seeds };

// A direction in embedding space standing for one interpretable feature.
// Prototype-derived directions are unit length; seed-word directions keep
// their mean-difference magnitude. Ranking is invariant to the scale either
// way.
struct FeatureDirection {
    std::string feature_id;
    EmbeddingVector vector;
    DirectionSource source = DirectionSource::Prototype;
};

struct ScoredEntity {
    std::string entity_id;
    double score = 0.0;
};

enum class Comparison { First, Second, Tie };

// Score differences at or below this magnitude count as ties everywhere.
inline constexpr double kScoreTieTolerance = 1e-12;

// Coordinate of the entity on the feature axis: the dot product of the
// (adapter-forwarded) entity embedding with the direction vector. A null
// adapter means the raw embedding is used (identical to prototypes-only
// scope for the entity side). DimensionError on mismatch.
double score(const EmbeddingVector& entity, const FeatureDirection& feature,
             const AlignmentAdapter* adapter = nullptr);

// Mean of the high examples minus the mean of the low examples, kept
// unnormalized. Either list empty → InputError; mixed dimensions →
// DimensionError. May legitimately be the zero vector (callers warn).
FeatureDirection seed_direction(const std::vector<EmbeddingVector>& highs,
                                const std::vector<EmbeddingVector>& lows,
                                const std::string& feature_id = "");

// The adapter-forwarded, normalized embedding of the feature's description.
// The store is searched by feature id first, then by exact text match on the
// description; LookupError when neither is present.
FeatureDirection prototype_direction(const FeaturePrototype& prototype,
                                     const EmbeddingStore& store,
                                     const AlignmentAdapter* adapter = nullptr);
// Same, keyed by a bare identifier (id first, then exact text).
FeatureDirection prototype_direction(const EmbeddingStore& store,
                                     const std::string& key,
                                     const AlignmentAdapter* adapter = nullptr);

// All entities sorted by descending score; exact ties (see tolerance) are
// broken by ascending entity id. LookupError (naming the entity) when one
// has no embedding.
std::vector<ScoredEntity> rank_entities(const std::vector<Entity>& entities,
                                        const FeatureDirection& feature,
                                        const EmbeddingStore& store,
                                        const AlignmentAdapter* adapter = nullptr);

// Sign of score(e1) - score(e2) with the shared tie tolerance.
Comparison compare(const Entity& e1, const Entity& e2,
                   const FeatureDirection& feature, const EmbeddingStore& store,
                   const AlignmentAdapter* adapter = nullptr);

// Index of the option with the highest dot product against the query; ties
// resolve to the lowest index. Empty options → InputError.
std::size_t select_option(const EmbeddingVector& query,
                          const std::vector<EmbeddingVector>& options);

}  // namespace protospace
