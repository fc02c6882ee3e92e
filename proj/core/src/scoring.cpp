#include "protospace/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "protospace/errors.hpp"

namespace protospace {

namespace {

const EmbeddingRecord* find_by_id_or_text(const EmbeddingStore& store,
                                          const std::string& id,
                                          const std::string& text) {
    if (const EmbeddingRecord* rec = store.find(id)) return rec;
    for (const EmbeddingRecord& rec : store.records()) {
        if (rec.text == text) return &rec;
    }
    return nullptr;
}

FeatureDirection direction_from_record(const EmbeddingRecord& rec,
                                       const std::string& feature_id,
                                       const AlignmentAdapter* adapter) {
    FeatureDirection dir;
    dir.feature_id = feature_id;
    dir.source = DirectionSource::Prototype;
    if (adapter != nullptr) {
        const EmbeddingVector mapped =
            forward(*adapter, rec.vector, Side::Prototype);
        dir.vector = mapped.unit_norm ? mapped : normalize(mapped);
    } else {
        dir.vector =
            rec.vector.unit_norm ? rec.vector : normalize(rec.vector);
    }
    return dir;
}

}  // namespace

double score(const EmbeddingVector& entity, const FeatureDirection& feature,
             const AlignmentAdapter* adapter) {
    if (adapter != nullptr) {
        return dot(forward(*adapter, entity, Side::Entity), feature.vector);
    }
    return dot(entity, feature.vector);
}

FeatureDirection seed_direction(const std::vector<EmbeddingVector>& highs,
                                const std::vector<EmbeddingVector>& lows,
                                const std::string& feature_id) {
    if (highs.empty() || lows.empty()) {
        throw InputError("seed direction needs high and low examples");
    }
    const std::size_t d = highs.front().dim();
    for (const auto& v : highs) {
        if (v.dim() != d) throw DimensionError("mixed seed dimensions");
        require_finite(v, "seed embeddings");
    }
    for (const auto& v : lows) {
        if (v.dim() != d) throw DimensionError("mixed seed dimensions");
        require_finite(v, "seed embeddings");
    }
    FeatureDirection dir;
    dir.feature_id = feature_id;
    dir.source = DirectionSource::Seeds;
    std::vector<double> values(d, 0.0);
    for (const auto& v : highs) {
        for (std::size_t j = 0; j < d; ++j) values[j] += v[j];
    }
    for (std::size_t j = 0; j < d; ++j) {
        values[j] /= static_cast<double>(highs.size());
    }
    std::vector<double> low_mean(d, 0.0);
    for (const auto& v : lows) {
        for (std::size_t j = 0; j < d; ++j) low_mean[j] += v[j];
    }
    for (std::size_t j = 0; j < d; ++j) {
        values[j] -= low_mean[j] / static_cast<double>(lows.size());
    }
    dir.vector = EmbeddingVector(std::move(values));
    return dir;
}

FeatureDirection prototype_direction(const FeaturePrototype& prototype,
                                     const EmbeddingStore& store,
                                     const AlignmentAdapter* adapter) {
    const EmbeddingRecord* rec =
        find_by_id_or_text(store, prototype.feature_id, prototype.description);
    if (rec == nullptr) {
        throw LookupError("no embedding for feature '" + prototype.feature_id +
                          "'");
    }
    return direction_from_record(*rec, prototype.feature_id, adapter);
}

FeatureDirection prototype_direction(const EmbeddingStore& store,
                                     const std::string& key,
                                     const AlignmentAdapter* adapter) {
    const EmbeddingRecord* rec = find_by_id_or_text(store, key, key);
    if (rec == nullptr) {
        throw LookupError("no embedding for feature '" + key + "'");
    }
    return direction_from_record(*rec, key, adapter);
}

std::vector<ScoredEntity> rank_entities(const std::vector<Entity>& entities,
                                        const FeatureDirection& feature,
                                        const EmbeddingStore& store,
                                        const AlignmentAdapter* adapter) {
    std::vector<ScoredEntity> scored;
    scored.reserve(entities.size());
    for (const Entity& e : entities) {
        const EmbeddingRecord* rec = store.find(e.id);
        if (rec == nullptr) {
            throw LookupError("entity '" + e.id + "' has no embedding");
        }
        scored.push_back(ScoredEntity{e.id, score(rec->vector, feature, adapter)});
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const ScoredEntity& a, const ScoredEntity& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return a.entity_id < b.entity_id;
                     });
    return scored;
}

Comparison compare(const Entity& e1, const Entity& e2,
                   const FeatureDirection& feature, const EmbeddingStore& store,
                   const AlignmentAdapter* adapter) {
    const EmbeddingRecord* r1 = store.find(e1.id);
    if (r1 == nullptr) throw LookupError("entity '" + e1.id + "' has no embedding");
    const EmbeddingRecord* r2 = store.find(e2.id);
    if (r2 == nullptr) throw LookupError("entity '" + e2.id + "' has no embedding");
    const double delta =
        score(r1->vector, feature, adapter) - score(r2->vector, feature, adapter);
    if (std::abs(delta) <= kScoreTieTolerance) return Comparison::Tie;
    return delta > 0.0 ? Comparison::First : Comparison::Second;
}

std::size_t select_option(const EmbeddingVector& query,
                          const std::vector<EmbeddingVector>& options) {
    if (options.empty()) throw InputError("no options to select from");
    std::size_t best = 0;
    double best_score = dot(query, options[0]);
    for (std::size_t i = 1; i < options.size(); ++i) {
        const double s = dot(query, options[i]);
        if (s > best_score) {
            best_score = s;
            best = i;
        }
    }
    return best;
}

}  // namespace protospace
