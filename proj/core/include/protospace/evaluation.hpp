#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "protospace/adapter.hpp"
#include "protospace/corpus.hpp"
#include "protospace/scoring.hpp"
#include "protospace/train.hpp"

namespace protospace {

// ---------------------------------------------------------------- statistics

// Sample Pearson correlation. Lengths must match and be >= 2
// (InsufficientDataError); a constant input has no defined correlation
// (DegenerateInputError); non-finite values → InputError.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

struct McNemarResult {
    std::size_t n10 = 0;  // first correct, second wrong
    std::size_t n01 = 0;  // first wrong, second correct
    double p_value = 1.0;
};

// Exact two-sided McNemar test over paired correct/incorrect outcomes:
// p = min(1, 2 * P(X <= min(n10, n01))) with X ~ Binomial(n10 + n01, 1/2),
// and p = 1 exactly when n10 + n01 = 0. Length mismatch or empty vectors →
// InputError.
McNemarResult mcnemar(const std::vector<bool>& first_correct,
                      const std::vector<bool>& second_correct);
McNemarResult mcnemar_from_counts(std::size_t n10, std::size_t n01);

// ---------------------------------------------------------- pair generation

// All unordered item pairs of one dimension whose rating gap strictly
// exceeds min_gap, oriented lexicographically (item_a < item_b) and labeled
// +1 when item_a is rated higher. When more than max_pairs qualify, a seeded
// uniform subsample is kept. Output is sorted by (item_a, item_b). Unknown
// dimension → LookupError; nothing qualifies → EmptyPairSetError; bad
// parameters → ConfigError.
std::vector<RankPair> generate_pairs(const RatingsTable& ratings,
                                     const std::string& dimension,
                                     double min_gap = 0.0,
                                     std::size_t max_pairs = 340,
                                     std::uint64_t seed = 0);

// ------------------------------------------------------------------ accuracy

struct PairwiseAccuracyResult {
    double accuracy = 0.0;
    std::size_t correct = 0;
    std::size_t ties = 0;
    std::size_t total = 0;
    // Binary per-pair outcome (ties recorded as incorrect), kept for paired
    // significance testing.
    std::vector<bool> outcomes;
};

// Fraction of pairs whose predicted order (sign of the score difference,
// with ties at |delta| <= 1e-12) matches the label. Ties count as incorrect;
// with tie_credit, each tie adds 0.5 to the accuracy numerator (outcomes stay
// binary). Empty pairs → InputError; the scorer throws for unknown items.
PairwiseAccuracyResult pairwise_accuracy(
    const std::vector<RankPair>& pairs,
    const std::function<double(const std::string&)>& scorer,
    bool tie_credit = false);
// Convenience: scores from a map; a missing item → LookupError naming it.
PairwiseAccuracyResult pairwise_accuracy(
    const std::vector<RankPair>& pairs,
    const std::unordered_map<std::string, double>& scores,
    bool tie_credit = false);

// ------------------------------------------------------------------- reports

struct EvalConfig {
    double min_gap = 0.0;
    std::size_t max_pairs = 340;
    std::uint64_t seed = 0;
    bool tie_credit = false;
};

// One named benchmark: ratings plus (optionally) a fixed pair file. When
// `pairs` is empty the pairs are generated from the ratings on demand.
// `perceptual` tags the dataset for the rank-perc training split.
struct EvalDataset {
    std::string name;
    RatingsTable ratings;
    std::vector<RankPair> pairs;
    bool perceptual = true;
};

struct DimensionReport {
    std::string name;
    std::size_t pairs = 0;
    double accuracy = 0.0;
    double pearson_r = 0.0;
    bool pearson_defined = false;
};

struct EvalReport {
    std::string dataset;
    std::string mode;
    std::uint64_t seed = 0;
    std::string adapter_sha256;  // "identity" when no adapter was applied
    std::vector<DimensionReport> dimensions;
    double average_accuracy = 0.0;
};

std::string report_to_json(const EvalReport& report);
void save_report(const EvalReport& report, const std::string& path);

// Scores one dataset dimension-by-dimension: the feature direction comes from
// the prototype store under `dimension`'s name, entities from the entity
// store, and the accuracy/Pearson figures from the dataset's pairs (given or
// generated). Items without embeddings are dropped; if none remain →
// EmptyJoinError. `mode_name` is echoed into the report.
EvalReport evaluate_dataset(const EvalDataset& dataset,
                            const EmbeddingStore& entities,
                            const EmbeddingStore& prototypes,
                            const AlignmentAdapter* adapter,
                            const EvalConfig& config,
                            const std::string& mode_name,
                            std::uint64_t report_seed = 0);

// ------------------------------------------------------------ leave one out

// For every dataset D: assemble the mode's training data from the OTHER
// datasets (rank-perc variants restrict to perceptual-tagged ones,
// classification items are shared across runs), train an adapter, evaluate
// on D, and append audit lines proving D's evaluation pairs never entered
// training. Fewer than two datasets → InputError; a mode whose data is
// absent → ConfigError.
std::vector<EvalReport> leave_one_out(
    const std::vector<EvalDataset>& datasets,
    const EmbeddingStore& entities,
    const EmbeddingStore& prototypes,
    const std::vector<ClassificationItem>& class_items,
    const TrainConfig& train_config,
    const EvalConfig& eval_config,
    std::vector<std::string>* audit_log = nullptr);

// --------------------------------------------------------------- flat files

// CSV (item, predicted_score, ground_truth) over the items present in both
// the scored list and the ratings for `dimension`, sorted by item id, written
// with round-trip-exact formatting. No overlap → EmptyJoinError.
void export_scatter(const std::vector<ScoredEntity>& predicted,
                    const RatingsTable& truth, const std::string& dimension,
                    const std::string& path);

// Builds the training items the trainer consumes from id-level data by
// resolving every id through the stores (LookupError on a missing one).
TrainInputs resolve_train_inputs(
    const std::vector<ClassificationItem>& class_items,
    const std::vector<RankPair>& pairs, const EmbeddingStore& entities,
    const EmbeddingStore& prototypes);

}  // namespace protospace
