#include "protospace/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <tuple>

#include <json.hpp>

#include "protospace/errors.hpp"
#include "protospace/random.hpp"

namespace protospace {

namespace {

using PairKey = std::tuple<std::string, std::string, std::string>;

PairKey key_of(const RankPair& p) {
    // pairs are already oriented item_a < item_b; normalize defensively
    if (p.item_a <= p.item_b) return {p.item_a, p.item_b, p.dimension};
    return {p.item_b, p.item_a, p.dimension};
}

}  // namespace

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) {
        throw InputError("correlation inputs differ in length");
    }
    if (xs.size() < 2) {
        throw InsufficientDataError(
            "correlation needs at least two observations");
    }
    const double n = static_cast<double>(xs.size());
    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
            throw InputError("correlation inputs must be finite");
        }
        mean_x += xs[i];
        mean_y += ys[i];
    }
    mean_x /= n;
    mean_y /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mean_x;
        const double dy = ys[i] - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw DegenerateInputError(
            "correlation undefined for a constant input");
    }
    return sxy / std::sqrt(sxx * syy);
}

McNemarResult mcnemar_from_counts(std::size_t n10, std::size_t n01) {
    McNemarResult result;
    result.n10 = n10;
    result.n01 = n01;
    const std::size_t n = n10 + n01;
    if (n == 0) {
        result.p_value = 1.0;
        return result;
    }
    const std::size_t m = std::min(n10, n01);
    // the two-sided doubling hits or passes 1 whenever m is at least half of
    // n; returning exactly 1 here keeps symmetric counts at p = 1.0
    if (2 * m + 1 >= n) {
        result.p_value = 1.0;
        return result;
    }
    // 2 * sum_{k<=m} C(n,k) / 2^n via log-space terms
    const double log_half_n = static_cast<double>(n) * std::log(2.0);
    const double lg_n1 = std::lgamma(static_cast<double>(n) + 1.0);
    double tail = 0.0;
    for (std::size_t k = 0; k <= m; ++k) {
        const double log_term =
            lg_n1 - std::lgamma(static_cast<double>(k) + 1.0) -
            std::lgamma(static_cast<double>(n - k) + 1.0) - log_half_n;
        tail += std::exp(log_term);
    }
    result.p_value = std::min(1.0, 2.0 * tail);
    return result;
}

McNemarResult mcnemar(const std::vector<bool>& first_correct,
                      const std::vector<bool>& second_correct) {
    if (first_correct.size() != second_correct.size()) {
        throw InputError("paired outcomes differ in length");
    }
    if (first_correct.empty()) {
        throw InputError("paired outcomes are empty");
    }
    std::size_t n10 = 0, n01 = 0;
    for (std::size_t i = 0; i < first_correct.size(); ++i) {
        if (first_correct[i] && !second_correct[i]) ++n10;
        if (!first_correct[i] && second_correct[i]) ++n01;
    }
    return mcnemar_from_counts(n10, n01);
}

std::vector<RankPair> generate_pairs(const RatingsTable& ratings,
                                     const std::string& dimension,
                                     double min_gap, std::size_t max_pairs,
                                     std::uint64_t seed) {
    if (min_gap < 0.0) throw ConfigError("min_gap must be non-negative");
    if (max_pairs < 1) throw ConfigError("max_pairs must be positive");
    const auto dims = ratings.dimensions();
    if (std::find(dims.begin(), dims.end(), dimension) == dims.end()) {
        throw LookupError("dimension '" + dimension + "' has no ratings");
    }
    const auto rows = ratings.rows_for(dimension);  // sorted by item id
    std::vector<RankPair> pairs;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            const double gap = rows[i].rating - rows[j].rating;
            if (std::abs(gap) <= min_gap) continue;
            RankPair p;
            p.item_a = rows[i].item;
            p.item_b = rows[j].item;
            p.dimension = dimension;
            p.label = gap > 0.0 ? 1 : -1;
            pairs.push_back(std::move(p));
        }
    }
    if (pairs.empty()) {
        throw EmptyPairSetError("no pair on '" + dimension +
                                "' exceeds the rating gap " +
                                std::to_string(min_gap));
    }
    if (pairs.size() > max_pairs) {
        std::vector<std::size_t> order(pairs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        DeterministicRng rng(seed);
        rng.shuffle(order);
        std::vector<RankPair> kept;
        kept.reserve(max_pairs);
        for (std::size_t i = 0; i < max_pairs; ++i) {
            kept.push_back(std::move(pairs[order[i]]));
        }
        pairs = std::move(kept);
        std::sort(pairs.begin(), pairs.end(),
                  [](const RankPair& a, const RankPair& b) {
                      return std::tie(a.item_a, a.item_b) <
                             std::tie(b.item_a, b.item_b);
                  });
    }
    return pairs;
}

PairwiseAccuracyResult pairwise_accuracy(
    const std::vector<RankPair>& pairs,
    const std::function<double(const std::string&)>& scorer, bool tie_credit) {
    if (pairs.empty()) throw InputError("no pairs to score");
    PairwiseAccuracyResult result;
    result.total = pairs.size();
    result.outcomes.reserve(pairs.size());
    for (const RankPair& p : pairs) {
        const double delta = scorer(p.item_a) - scorer(p.item_b);
        bool correct = false;
        if (std::abs(delta) <= kScoreTieTolerance) {
            ++result.ties;
        } else {
            const int predicted = delta > 0.0 ? 1 : -1;
            correct = predicted == p.label;
        }
        if (correct) ++result.correct;
        result.outcomes.push_back(correct);
    }
    double numerator = static_cast<double>(result.correct);
    if (tie_credit) numerator += 0.5 * static_cast<double>(result.ties);
    result.accuracy = numerator / static_cast<double>(result.total);
    return result;
}

PairwiseAccuracyResult pairwise_accuracy(
    const std::vector<RankPair>& pairs,
    const std::unordered_map<std::string, double>& scores, bool tie_credit) {
    return pairwise_accuracy(
        pairs,
        [&](const std::string& item) -> double {
            const auto it = scores.find(item);
            if (it == scores.end()) {
                throw LookupError("no score for item '" + item + "'");
            }
            return it->second;
        },
        tie_credit);
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::json dims = nlohmann::json::array();
    for (const DimensionReport& d : report.dimensions) {
        nlohmann::json row;
        row["name"] = d.name;
        row["pairs"] = d.pairs;
        row["accuracy"] = d.accuracy;
        if (d.pearson_defined) {
            row["pearson"] = d.pearson_r;
        } else {
            row["pearson"] = nullptr;
        }
        dims.push_back(std::move(row));
    }
    nlohmann::json j;
    j["dataset"] = report.dataset;
    j["mode"] = report.mode;
    j["seed"] = report.seed;
    j["adapter_sha256"] = report.adapter_sha256;
    j["dimensions"] = std::move(dims);
    j["average_accuracy"] = report.average_accuracy;
    return j.dump();
}

void save_report(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << report_to_json(report) << '\n';
    if (!out) throw IoError("failed writing '" + path + "'");
}

EvalReport evaluate_dataset(const EvalDataset& dataset,
                            const EmbeddingStore& entities,
                            const EmbeddingStore& prototypes,
                            const AlignmentAdapter* adapter,
                            const EvalConfig& config,
                            const std::string& mode_name,
                            std::uint64_t report_seed) {
    EvalReport report;
    report.dataset = dataset.name;
    report.mode = mode_name;
    report.seed = report_seed;
    report.adapter_sha256 =
        adapter != nullptr ? adapter_sha256(*adapter) : "identity";

    // keep only rated items that actually have embeddings
    RatingsTable joined;
    std::size_t dropped = 0;
    for (const auto& row : dataset.ratings.rows()) {
        if (entities.contains(row.item)) {
            joined.add(row.item, row.dimension, row.rating);
        } else {
            ++dropped;
        }
    }
    (void)dropped;
    if (joined.size() == 0) {
        throw EmptyJoinError("dataset '" + dataset.name +
                             "' shares no items with the embedding store");
    }

    // dimension list: from the fixed pair file when present, else from the
    // joined ratings
    std::vector<std::string> dims;
    if (!dataset.pairs.empty()) {
        std::set<std::string> names;
        for (const RankPair& p : dataset.pairs) names.insert(p.dimension);
        dims.assign(names.begin(), names.end());
    } else {
        dims = joined.dimensions();
    }

    double accuracy_sum = 0.0;
    for (const std::string& dim : dims) {
        std::vector<RankPair> pairs;
        if (!dataset.pairs.empty()) {
            for (const RankPair& p : dataset.pairs) {
                if (p.dimension == dim) pairs.push_back(p);
            }
        } else {
            pairs = generate_pairs(joined, dim, config.min_gap,
                                   config.max_pairs, config.seed);
        }

        const FeatureDirection direction =
            prototype_direction(prototypes, dim, adapter);
        std::unordered_map<std::string, double> scores;
        std::vector<double> xs, ys;  // aligned score/rating vectors
        for (const auto& row : joined.rows_for(dim)) {
            const double s =
                score(entities.vector_for(row.item), direction, adapter);
            scores.emplace(row.item, s);
            xs.push_back(s);
            ys.push_back(row.rating);
        }

        const PairwiseAccuracyResult acc =
            pairwise_accuracy(pairs, scores, config.tie_credit);

        DimensionReport dr;
        dr.name = dim;
        dr.pairs = acc.total;
        dr.accuracy = acc.accuracy;
        try {
            dr.pearson_r = pearson(xs, ys);
            dr.pearson_defined = true;
        } catch (const InsufficientDataError&) {
        } catch (const DegenerateInputError&) {
        }
        accuracy_sum += dr.accuracy;
        report.dimensions.push_back(std::move(dr));
    }
    if (!report.dimensions.empty()) {
        report.average_accuracy =
            accuracy_sum / static_cast<double>(report.dimensions.size());
    }
    return report;
}

TrainInputs resolve_train_inputs(
    const std::vector<ClassificationItem>& class_items,
    const std::vector<RankPair>& pairs, const EmbeddingStore& entities,
    const EmbeddingStore& prototypes) {
    TrainInputs inputs;
    inputs.classification.reserve(class_items.size());
    for (const ClassificationItem& item : class_items) {
        ClassTrainItem t;
        t.target = prototypes.vector_for(item.target);
        for (const std::string& id : item.negatives) {
            t.negatives.push_back(prototypes.vector_for(id));
        }
        for (const std::string& id : item.examples) {
            t.examples.push_back(entities.vector_for(id));
        }
        inputs.classification.push_back(std::move(t));
    }
    inputs.ranking.reserve(pairs.size());
    for (const RankPair& p : pairs) {
        RankTrainItem t;
        t.e1 = entities.vector_for(p.item_a);
        t.e2 = entities.vector_for(p.item_b);
        t.f = prototypes.vector_for(p.dimension);
        t.y = static_cast<double>(p.label);
        inputs.ranking.push_back(std::move(t));
    }
    return inputs;
}

namespace {

// every pair set a dataset contributes, in its on-disk or generated form
std::vector<RankPair> dataset_pairs(const EvalDataset& dataset,
                                    const EvalConfig& config) {
    if (!dataset.pairs.empty()) return dataset.pairs;
    std::vector<RankPair> all;
    for (const std::string& dim : dataset.ratings.dimensions()) {
        std::vector<RankPair> pairs;
        try {
            pairs = generate_pairs(dataset.ratings, dim, config.min_gap,
                                   config.max_pairs, config.seed);
        } catch (const EmptyPairSetError&) {
            continue;  // a degenerate training dimension contributes nothing
        }
        all.insert(all.end(), pairs.begin(), pairs.end());
    }
    return all;
}

}  // namespace

std::vector<EvalReport> leave_one_out(
    const std::vector<EvalDataset>& datasets, const EmbeddingStore& entities,
    const EmbeddingStore& prototypes,
    const std::vector<ClassificationItem>& class_items,
    const TrainConfig& train_config, const EvalConfig& eval_config,
    std::vector<std::string>* audit_log) {
    if (datasets.size() < 2) {
        throw InputError("leave-one-out needs at least two datasets");
    }
    const bool use_c = mode_uses_classification(train_config.mode);
    const bool use_r = mode_uses_ranking(train_config.mode);
    const bool perceptual_only =
        train_config.mode == TrainMode::RankPerceptual ||
        train_config.mode == TrainMode::ClassRankPerceptual;

    std::vector<EvalReport> reports;
    for (const EvalDataset& held_out : datasets) {
        std::vector<RankPair> train_pairs;
        std::vector<std::string> sources;
        if (use_r) {
            for (const EvalDataset& other : datasets) {
                if (other.name == held_out.name) continue;
                if (perceptual_only && !other.perceptual) continue;
                const auto contributed = dataset_pairs(other, eval_config);
                train_pairs.insert(train_pairs.end(), contributed.begin(),
                                   contributed.end());
                sources.push_back(other.name);
            }
        }

        AlignmentAdapter adapter;
        const AlignmentAdapter* adapter_ptr = nullptr;
        if (train_config.mode != TrainMode::Pretrained) {
            const TrainInputs inputs = resolve_train_inputs(
                use_c ? class_items : std::vector<ClassificationItem>{},
                train_pairs, entities, prototypes);
            adapter = train(inputs, train_config).adapter;
            adapter_ptr = &adapter;
        }

        // audit: the held-out evaluation pairs must be absent from training
        std::set<PairKey> train_keys;
        for (const RankPair& p : train_pairs) train_keys.insert(key_of(p));
        const auto eval_pairs = dataset_pairs(held_out, eval_config);
        std::size_t overlap = 0;
        for (const RankPair& p : eval_pairs) {
            if (train_keys.count(key_of(p)) > 0) ++overlap;
        }
        if (audit_log != nullptr) {
            std::string line = "dataset=" + held_out.name +
                               " mode=" + to_string(train_config.mode) +
                               " train_pairs=" +
                               std::to_string(train_pairs.size()) +
                               " eval_pairs=" +
                               std::to_string(eval_pairs.size()) +
                               " overlap=" + std::to_string(overlap) +
                               " sources=";
            for (std::size_t i = 0; i < sources.size(); ++i) {
                if (i > 0) line += ",";
                line += sources[i];
            }
            line += overlap == 0 ? " exclusion=ok" : " exclusion=VIOLATED";
            audit_log->push_back(std::move(line));
        }
        if (overlap != 0) {
            throw Error("training pairs leaked into the evaluation of '" +
                        held_out.name + "'");
        }

        reports.push_back(evaluate_dataset(
            held_out, entities, prototypes, adapter_ptr, eval_config,
            to_string(train_config.mode), train_config.seed));
    }
    return reports;
}

void export_scatter(const std::vector<ScoredEntity>& predicted,
                    const RatingsTable& truth, const std::string& dimension,
                    const std::string& path) {
    std::vector<std::pair<std::string, std::pair<double, double>>> rows;
    for (const ScoredEntity& s : predicted) {
        const auto rating = truth.rating(s.entity_id, dimension);
        if (rating.has_value()) {
            rows.push_back({s.entity_id, {s.score, *rating}});
        }
    }
    if (rows.empty()) {
        throw EmptyJoinError("no scored item has a rating on '" + dimension +
                             "'");
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "item,predicted_score,ground_truth\n";
    char buf[64];
    for (const auto& row : rows) {
        out << row.first << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", row.second.first);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", row.second.second);
        out << buf << '\n';
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace protospace
