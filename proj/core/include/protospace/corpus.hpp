#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "protospace/linalg.hpp"

namespace protospace {

// A thing that can be placed in the space: a food, a city, a river.
struct Entity {
    std::string id;
    std::string name;
    std::optional<std::string> category;  // e.g. "food item"
};

// A short description that pins down a direction, e.g. "a very sweet food".
struct FeaturePrototype {
    std::string feature_id;
    std::string description;
    std::optional<std::string> category;
};

// One record of the property-guessing dataset: entities sharing a target
// property plus distractor properties. Strict records carry exactly 7
// examples and 4 negatives; loaders may relax to >=2 / >=1 (with a warning)
// for small hand-built corpora.
struct ClassificationItem {
    std::string target;
    std::vector<std::string> examples;
    std::vector<std::string> negatives;
    std::optional<std::string> category;
};

// item_a should rank above item_b on `dimension` when label = +1, below when
// label = -1. item_a != item_b always.
struct RankPair {
    std::string item_a;
    std::string item_b;
    std::string dimension;
    int label = 1;
};

// Ground-truth scalar ratings, unique per (item, dimension).
class RatingsTable {
public:
    struct Row {
        std::string item;
        std::string dimension;
        double rating = 0.0;
    };

    // Throws SchemaError on duplicate (item, dimension) or non-finite rating.
    void add(const std::string& item, const std::string& dimension,
             double rating);

    std::optional<double> rating(const std::string& item,
                                 const std::string& dimension) const;
    // Sorted unique dimension names.
    std::vector<std::string> dimensions() const;
    // All rows of one dimension, sorted by item id.
    std::vector<Row> rows_for(const std::string& dimension) const;
    const std::vector<Row>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }

private:
    std::vector<Row> rows_;
    std::map<std::pair<std::string, std::string>, std::size_t> index_;
};

struct EmbeddingRecord {
    std::string id;
    std::string text;  // the exact text that produced the vector
    EmbeddingVector vector;
};

// Id-addressed embedding collection with a single shared dimension.
// Insertion order is preserved so that saves are reproducible.
class EmbeddingStore {
public:
    // Throws SchemaError on duplicate id, DimensionError on dim mismatch.
    void add(EmbeddingRecord rec);
    void merge(const EmbeddingStore& other);

    bool contains(const std::string& id) const;
    const EmbeddingRecord* find(const std::string& id) const;
    // Throws LookupError naming the id.
    const EmbeddingVector& vector_for(const std::string& id) const;

    std::size_t size() const { return records_.size(); }
    std::size_t dim() const { return dim_; }  // 0 while empty
    const std::vector<EmbeddingRecord>& records() const { return records_; }

private:
    std::vector<EmbeddingRecord> records_;
    std::map<std::string, std::size_t> index_;
    std::size_t dim_ = 0;
};

// "<category> <name>" with a single space, or just the name when category is
// absent or empty. Throws InputError on empty name.
std::string verbalize_entity(const std::string& name,
                             const std::optional<std::string>& category);

// The end-of-line description prompt wrapped around a phrase; byte-exact,
// ASCII apostrophes, no trailing whitespace. Throws InputError on empty
// phrase.
std::string eol_prompt(const std::string& phrase);

// JSON-lines embedding files: one {"id","text","vector"} object per line.
// Values round-trip at full 64-bit precision.
EmbeddingStore load_embeddings(const std::string& path);
void save_embeddings(const EmbeddingStore& store, const std::string& path);

// Validates one record against the documented shape. Used by the loader and
// by dataset generators.
void validate_classification_item(const ClassificationItem& item, bool relax);

// JSON array of records; see ClassificationItem for the relax semantics.
std::vector<ClassificationItem> load_classification_dataset(
    const std::string& path, bool relax = false);

// CSV with header "item,dimension,rating".
RatingsTable load_ratings(const std::string& path);

// CSV with header "item_a,item_b,dimension,label"; label must be +1 or -1.
std::vector<RankPair> load_pairs(const std::string& path);
void save_pairs(const std::vector<RankPair>& pairs, const std::string& path);

}  // namespace protospace
