#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protospace/adapter.hpp"
#include "protospace/linalg.hpp"
#include "protospace/objectives.hpp"

namespace protospace {

// What supervision the adapter is fitted on.  Pretrained performs no fitting
// and yields the identity map.
enum class TrainMode {
    Pretrained,
    Classification,
    RankPerceptual,
    RankFull,
    ClassRankPerceptual,
    ClassRankFull,
};

TrainMode train_mode_from_string(const std::string& name);  // ConfigError
std::string to_string(TrainMode mode);
bool mode_uses_classification(TrainMode mode);
bool mode_uses_ranking(TrainMode mode);

// One classification instance in raw embedding space: the correct prototype,
// the distractor prototypes, and the example-entity embeddings whose mean
// anchors the comparison.
struct ClassTrainItem {
    EmbeddingVector target;
    std::vector<EmbeddingVector> negatives;
    std::vector<EmbeddingVector> examples;
};

// One ordered pair in raw embedding space: two entity embeddings, the feature
// direction they are compared on, and the label (+1 when the first should
// score higher, -1 otherwise).
struct RankTrainItem {
    EmbeddingVector e1;
    EmbeddingVector e2;
    EmbeddingVector f;
    double y = 1.0;
};

struct TrainInputs {
    std::vector<ClassTrainItem> classification;
    std::vector<RankTrainItem> ranking;
};

struct TrainConfig {
    TrainMode mode = TrainMode::Classification;
    double learning_rate = 1e-3;
    std::size_t epochs = 200;
    std::size_t batch_size = 16;
    std::size_t patience = 20;
    std::uint64_t seed = 0;
    LossConfig loss;
    AdapterScope scope = AdapterScope::PrototypesOnly;
    bool renormalize = true;
    double init_epsilon = 1e-3;
    double validation_fraction = 0.1;
    // Experimental: project the returned matrix onto the orthogonal group
    // (QR factor) after training. Off by default; gradient training is
    // unconstrained and the closed-form fit covers the orthogonal case.
    bool project_orthogonal = false;
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;  // NaN when there is no validation split
    double grad_norm = 0.0;
};

struct TrainTrace {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;
    double best_monitored = 0.0;
    bool early_stopped = false;
    bool has_validation = false;
};

struct TrainResult {
    AlignmentAdapter adapter;
    TrainTrace trace;
};

// Fits the adapter with Adam over mini-batches, interleaving the two data
// streams proportionally, with a deterministic validation split and
// patience-based early stopping; the returned adapter is the snapshot with
// the best monitored loss.  Identical inputs and config produce bit-for-bit
// identical results.  ConfigError when the mode's required data is missing or
// a hyperparameter is out of range; NumericalError (naming the epoch) if the
// loss stops being finite.
TrainResult train(const TrainInputs& data, const TrainConfig& config);

// Loss (and, optionally, the gradient with respect to the adapter matrix) of
// the configured objective over the given items under the map `w`.  Item
// lists not used by the mode are ignored.  This is the exact function the
// trainer steps on, exposed for verification.
double adapter_loss(const Matrix& w, const TrainInputs& data,
                    const TrainConfig& config, Matrix* grad_w = nullptr);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t entries_checked = 0;
};

// Compares the analytic adapter gradient against central finite differences
// on a seeded sample of matrix entries.  ConfigError when the mode's data is
// missing.
GradCheckReport grad_check(const TrainInputs& data, const TrainConfig& config,
                           std::size_t max_entries = 64,
                           double step = 1e-6);

}  // namespace protospace
