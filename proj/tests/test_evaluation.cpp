#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "protospace/errors.hpp"
#include "protospace/evaluation.hpp"
#include "protospace/procrustes.hpp"
#include "protospace/random.hpp"
#include "protospace/synth.hpp"

using namespace protospace;

namespace {

std::string temp_path(const std::string& stem) {
    return "/tmp/protospace_eval_test_" + stem;
}

RatingsTable table_of(
    const std::vector<std::tuple<std::string, std::string, double>>& rows) {
    RatingsTable t;
    for (const auto& [item, dim, r] : rows) t.add(item, dim, r);
    return t;
}

RatingsTable restrict_dims(const RatingsTable& full,
                           const std::vector<std::string>& dims) {
    RatingsTable out;
    for (const auto& row : full.rows()) {
        if (std::find(dims.begin(), dims.end(), row.dimension) != dims.end()) {
            out.add(row.item, row.dimension, row.rating);
        }
    }
    return out;
}

bool same_bytes(const EmbeddingVector& a, const EmbeddingVector& b) {
    return a.dim() == b.dim() &&
           std::memcmp(a.values.data(), b.values.data(),
                       a.dim() * sizeof(double)) == 0;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

// ---------------------------------------------------------------- McNemar

TEST_CASE("mcnemar exact p-values match hand-computed dyadic rationals") {
    // 2 * sum_{k<=7} C(30,k) / 2^30 = 701003 / 134217728
    CHECK(mcnemar_from_counts(23, 7).p_value ==
          doctest::Approx(0.005222879350185394).epsilon(1e-12));
    // 2 * sum_{k<=3} C(14,k) / 2^14 = 235 / 4096
    CHECK(mcnemar_from_counts(3, 11).p_value ==
          doctest::Approx(0.057373046875).epsilon(1e-12));
    // 2 * C(4,0) / 2^4 = 1/8
    CHECK(mcnemar_from_counts(0, 4).p_value ==
          doctest::Approx(0.125).epsilon(1e-12));
    // 2 * sum_{k<=2} C(14,k) / 2^14 = 53 / 4096
    CHECK(mcnemar_from_counts(12, 2).p_value ==
          doctest::Approx(0.012939453125).epsilon(1e-12));
}

TEST_CASE("mcnemar near-symmetric counts give exactly one") {
    // doubling the minority tail reaches 1 whenever 2*min+1 >= n
    CHECK(mcnemar_from_counts(7, 8).p_value == 1.0);
    CHECK(mcnemar_from_counts(8, 7).p_value == 1.0);
    CHECK(mcnemar_from_counts(0, 0).p_value == 1.0);
    CHECK(mcnemar_from_counts(1, 0).p_value == 1.0);
    for (std::size_t k = 0; k <= 20; ++k) {
        CHECK(mcnemar_from_counts(k, k).p_value == 1.0);
    }
}

TEST_CASE("mcnemar is symmetric in its counts") {
    DeterministicRng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t a = rng.index(40);
        const std::size_t b = rng.index(40);
        const McNemarResult ab = mcnemar_from_counts(a, b);
        const McNemarResult ba = mcnemar_from_counts(b, a);
        CHECK(ab.p_value == ba.p_value);
        CHECK(ab.p_value <= 1.0);
        CHECK(ab.p_value > 0.0);
    }
}

TEST_CASE("mcnemar counts discordant outcome pairs") {
    // first correct on 0,1,2; second correct on 2,3: n10 = 2, n01 = 1
    const std::vector<bool> first = {true, true, true, false, false};
    const std::vector<bool> second = {false, false, true, true, false};
    const McNemarResult r = mcnemar(first, second);
    CHECK(r.n10 == 2);
    CHECK(r.n01 == 1);
    CHECK(r.p_value ==
          doctest::Approx(mcnemar_from_counts(2, 1).p_value).epsilon(1e-15));

    CHECK_THROWS_AS(mcnemar({true}, {true, false}), InputError);
    CHECK_THROWS_AS(mcnemar({}, {}), InputError);
}

TEST_CASE("mcnemar one-sided dominance becomes significant") {
    // all thirty discordant pairs favor the first system
    const McNemarResult r = mcnemar_from_counts(30, 0);
    CHECK(r.p_value < 1e-7);
    // monotone: widening the split can only shrink p
    double prev = 1.0;
    for (std::size_t n10 = 8; n10 <= 30; ++n10) {
        const double p = mcnemar_from_counts(n10, 7).p_value;
        CHECK(p <= prev + 1e-15);
        prev = p;
    }
}

// ---------------------------------------------------------------- Pearson

TEST_CASE("pearson matches a hand-computed value") {
    // x = (1,2,3), y = (2,4,7): sxy = 5, sxx = 2, syy = 38/3
    // r = 5 / sqrt(2 * 38/3) = 15 / sqrt(228)
    const double r = pearson({1.0, 2.0, 3.0}, {2.0, 4.0, 7.0});
    CHECK(r == doctest::Approx(15.0 / std::sqrt(228.0)).epsilon(1e-12));
}

TEST_CASE("pearson of an exact linear relation is plus or minus one") {
    CHECK(pearson({1.0, 2.0, 5.0, 9.0}, {3.0, 5.0, 11.0, 19.0}) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson({1.0, 2.0, 5.0, 9.0}, {-3.0, -5.0, -11.0, -19.0}) ==
          doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("pearson is invariant under positive affine maps") {
    DeterministicRng rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 5 + rng.index(26);
        std::vector<double> xs(n), ys(n);
        for (std::size_t i = 0; i < n; ++i) {
            xs[i] = rng.gaussian();
            ys[i] = rng.gaussian();
        }
        const double base = pearson(xs, ys);
        const double a = std::exp(rng.uniform(-2.0, 2.0));
        const double b = rng.uniform(-10.0, 10.0);
        const double c = std::exp(rng.uniform(-2.0, 2.0));
        const double d = rng.uniform(-10.0, 10.0);
        std::vector<double> xs2(n), ys2(n);
        for (std::size_t i = 0; i < n; ++i) {
            xs2[i] = a * xs[i] + b;
            ys2[i] = c * ys[i] + d;
        }
        CHECK(std::abs(pearson(xs2, ys2) - base) <= 1e-12);
        // flipping one scale flips the sign
        std::vector<double> xs3(n);
        for (std::size_t i = 0; i < n; ++i) xs3[i] = -xs2[i];
        CHECK(std::abs(pearson(xs3, ys2) + base) <= 1e-12);
    }
}

TEST_CASE("pearson input validation") {
    CHECK_THROWS_AS(pearson({1.0}, {2.0}), InsufficientDataError);
    CHECK_THROWS_AS(pearson({}, {}), InsufficientDataError);
    CHECK_THROWS_AS(pearson({1.0, 2.0}, {2.0}), InputError);
    CHECK_THROWS_AS(pearson({1.0, 1.0, 1.0}, {2.0, 3.0, 4.0}),
                    DegenerateInputError);
    CHECK_THROWS_AS(pearson({1.0, 2.0, 3.0}, {5.0, 5.0, 5.0}),
                    DegenerateInputError);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(pearson({1.0, nan}, {2.0, 3.0}), InputError);
}

// ---------------------------------------------------------- pair generation

TEST_CASE("generated pairs orient lexicographically and label by rating") {
    const RatingsTable t = table_of({{"a", "size", 1.0}, {"b", "size", 2.0}});
    const auto pairs = generate_pairs(t, "size");
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].item_a == "a");
    CHECK(pairs[0].item_b == "b");
    CHECK(pairs[0].dimension == "size");
    CHECK(pairs[0].label == -1);  // a is rated lower than b

    const RatingsTable t2 = table_of({{"a", "size", 5.0}, {"b", "size", 2.0}});
    const auto pairs2 = generate_pairs(t2, "size");
    REQUIRE(pairs2.size() == 1);
    CHECK(pairs2[0].item_a == "a");
    CHECK(pairs2[0].label == 1);
}

TEST_CASE("generated pairs cover all qualifying unordered pairs, sorted") {
    RatingsTable t;
    const std::vector<double> ratings = {3.0, 1.0, 4.0, 1.5, 9.0};
    for (std::size_t i = 0; i < ratings.size(); ++i) {
        t.add("item" + std::to_string(i), "depth", ratings[i]);
    }
    const auto pairs = generate_pairs(t, "depth");
    CHECK(pairs.size() == 10);  // C(5,2), all gaps nonzero
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& p : pairs) {
        CHECK(p.item_a < p.item_b);
        CHECK(seen.insert({p.item_a, p.item_b}).second);  // no duplicates
        const double ra = *t.rating(p.item_a, "depth");
        const double rb = *t.rating(p.item_b, "depth");
        CHECK(p.label == (ra > rb ? 1 : -1));
    }
    CHECK(std::is_sorted(pairs.begin(), pairs.end(),
                         [](const RankPair& a, const RankPair& b) {
                             return std::tie(a.item_a, a.item_b) <
                                    std::tie(b.item_a, b.item_b);
                         }));
}

TEST_CASE("rating gaps must strictly exceed the minimum gap") {
    const RatingsTable t = table_of(
        {{"a", "w", 1.0}, {"b", "w", 2.0}, {"c", "w", 4.0}});
    // gaps: (a,b) 1.0, (a,c) 3.0, (b,c) 2.0
    CHECK(generate_pairs(t, "w", 0.0).size() == 3);
    CHECK(generate_pairs(t, "w", 1.0).size() == 2);  // exactly 1.0 excluded
    CHECK(generate_pairs(t, "w", 0.999).size() == 3);
    CHECK(generate_pairs(t, "w", 2.5).size() == 1);
    CHECK_THROWS_AS(generate_pairs(t, "w", 5.0), EmptyPairSetError);

    const RatingsTable equal = table_of(
        {{"a", "w", 2.0}, {"b", "w", 2.0}, {"c", "w", 2.0}});
    CHECK_THROWS_AS(generate_pairs(equal, "w"), EmptyPairSetError);
}

TEST_CASE("oversized pair sets are subsampled deterministically") {
    RatingsTable t;
    DeterministicRng rng(9);
    for (int i = 0; i < 30; ++i) {
        char id[8];
        std::snprintf(id, sizeof(id), "i%02d", i);
        t.add(id, "mass", rng.uniform());
    }
    const auto full = generate_pairs(t, "mass", 0.0, 100000, 1);
    CHECK(full.size() == 435);  // C(30,2)
    const auto sampled = generate_pairs(t, "mass", 0.0, 340, 1);
    CHECK(sampled.size() == 340);
    const auto again = generate_pairs(t, "mass", 0.0, 340, 1);
    REQUIRE(sampled.size() == again.size());
    for (std::size_t i = 0; i < sampled.size(); ++i) {
        CHECK(sampled[i].item_a == again[i].item_a);
        CHECK(sampled[i].item_b == again[i].item_b);
    }
    // the sample is a subset of the full set and stays sorted
    std::set<std::pair<std::string, std::string>> all;
    for (const auto& p : full) all.insert({p.item_a, p.item_b});
    for (const auto& p : sampled) {
        CHECK(all.count({p.item_a, p.item_b}) == 1);
    }
    CHECK(std::is_sorted(sampled.begin(), sampled.end(),
                         [](const RankPair& a, const RankPair& b) {
                             return std::tie(a.item_a, a.item_b) <
                                    std::tie(b.item_a, b.item_b);
                         }));
    // a different seed keeps a different subset
    const auto other = generate_pairs(t, "mass", 0.0, 340, 2);
    bool differs = false;
    for (std::size_t i = 0; i < other.size() && !differs; ++i) {
        differs = other[i].item_a != sampled[i].item_a ||
                  other[i].item_b != sampled[i].item_b;
    }
    CHECK(differs);
}

TEST_CASE("pair generation validates its inputs") {
    const RatingsTable t = table_of({{"a", "w", 1.0}, {"b", "w", 2.0}});
    CHECK_THROWS_AS(generate_pairs(t, "no-such-dim"), LookupError);
    CHECK_THROWS_AS(generate_pairs(t, "w", -0.5), ConfigError);
    CHECK_THROWS_AS(generate_pairs(t, "w", 0.0, 0), ConfigError);
}

// ---------------------------------------------------------------- accuracy

TEST_CASE("pairwise accuracy for perfect, inverted, and constant scorers") {
    RatingsTable t;
    DeterministicRng rng(13);
    std::unordered_map<std::string, double> truth;
    for (int i = 0; i < 12; ++i) {
        const std::string id = "e" + std::to_string(i);
        const double r = rng.uniform();
        t.add(id, "w", r);
        truth[id] = r;
    }
    const auto pairs = generate_pairs(t, "w");

    const auto perfect = pairwise_accuracy(pairs, truth);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.correct == perfect.total);
    CHECK(perfect.ties == 0);

    std::unordered_map<std::string, double> negated;
    for (const auto& [k, v] : truth) negated[k] = -v;
    const auto inverted = pairwise_accuracy(pairs, negated);
    CHECK(inverted.accuracy == 0.0);
    CHECK(inverted.correct == 0);

    const auto constant = pairwise_accuracy(
        pairs, [](const std::string&) { return 0.25; });
    CHECK(constant.accuracy == 0.0);
    CHECK(constant.ties == constant.total);
    const auto half_credit = pairwise_accuracy(
        pairs, [](const std::string&) { return 0.25; }, true);
    CHECK(half_credit.accuracy == 0.5);
    CHECK(half_credit.correct == 0);  // credit never flips outcomes
    for (const bool o : half_credit.outcomes) CHECK_FALSE(o);
}

TEST_CASE("accuracy of a scorer and its negation sums to one minus ties") {
    RatingsTable t;
    DeterministicRng rng(19);
    for (int i = 0; i < 15; ++i) {
        t.add("e" + std::to_string(i), "w", rng.uniform());
    }
    const auto pairs = generate_pairs(t, "w");
    for (int trial = 0; trial < 30; ++trial) {
        std::unordered_map<std::string, double> s;
        for (int i = 0; i < 15; ++i) {
            s["e" + std::to_string(i)] = rng.gaussian();
        }
        std::unordered_map<std::string, double> neg;
        for (const auto& [k, v] : s) neg[k] = -v;
        const auto acc = pairwise_accuracy(pairs, s);
        const auto flipped = pairwise_accuracy(pairs, neg);
        CHECK(acc.ties == flipped.ties);
        CHECK(acc.correct + flipped.correct + acc.ties == acc.total);
        CHECK(acc.accuracy + flipped.accuracy <= 1.0 + 1e-15);
        if (acc.ties == 0) {
            CHECK(acc.accuracy + flipped.accuracy ==
                  doctest::Approx(1.0).epsilon(1e-15));
        }
    }
    // a deliberate tie keeps the sum strictly below one
    std::unordered_map<std::string, double> tied;
    for (int i = 0; i < 15; ++i) tied["e" + std::to_string(i)] = double(i / 2);
    const auto acc = pairwise_accuracy(pairs, tied);
    CHECK(acc.ties > 0);
    std::unordered_map<std::string, double> tied_neg;
    for (const auto& [k, v] : tied) tied_neg[k] = -v;
    CHECK(acc.accuracy + pairwise_accuracy(pairs, tied_neg).accuracy < 1.0);
}

TEST_CASE("pairwise accuracy outcomes align with pairs and errors are typed") {
    const RatingsTable t = table_of(
        {{"a", "w", 1.0}, {"b", "w", 2.0}, {"c", "w", 3.0}});
    const auto pairs = generate_pairs(t, "w");
    std::unordered_map<std::string, double> scores = {
        {"a", 0.0}, {"b", 5.0}, {"c", 1.0}};  // b > c ordering is wrong
    const auto acc = pairwise_accuracy(pairs, scores);
    REQUIRE(acc.outcomes.size() == pairs.size());
    std::size_t correct = 0;
    for (const bool o : acc.outcomes) correct += o ? 1 : 0;
    CHECK(correct == acc.correct);

    scores.erase("c");
    CHECK_THROWS_WITH_AS(pairwise_accuracy(pairs, scores),
                         doctest::Contains("c"), LookupError);
    CHECK_THROWS_AS(
        pairwise_accuracy({}, [](const std::string&) { return 0.0; }),
        InputError);
}

// ------------------------------------------------------------- synth worlds

TEST_CASE("synthetic world validates its configuration") {
    SynthConfig cfg;
    cfg.dim = 16;
    cfg.n_entities = 10;
    cfg.n_features = 4;

    SynthConfig bad = cfg;
    bad.dim = 7;  // < 2 * n_features
    CHECK_THROWS_AS(synth_world(bad), ConfigError);
    bad = cfg;
    bad.n_features = 3;
    CHECK_THROWS_AS(synth_world(bad), ConfigError);
    bad = cfg;
    bad.n_entities = 6;
    CHECK_THROWS_AS(synth_world(bad), ConfigError);
    bad = cfg;
    bad.noise_sigma = -0.1;
    CHECK_THROWS_AS(synth_world(bad), ConfigError);
    bad = cfg;
    bad.direction_rank = 5;  // > n_features
    CHECK_THROWS_AS(synth_world(bad), ConfigError);
    bad = cfg;
    bad.off_span_scale = 1.5;
    CHECK_THROWS_AS(synth_world(bad), ConfigError);
    CHECK_NOTHROW(synth_world(cfg));
}

TEST_CASE("synthetic world shape and determinism") {
    SynthConfig cfg;
    cfg.dim = 16;
    cfg.n_entities = 9;
    cfg.n_features = 4;
    cfg.seed = 3;
    cfg.id_prefix = "x-";
    const SynthWorld w1 = synth_world(cfg);
    const SynthWorld w2 = synth_world(cfg);

    CHECK(w1.entities.size() == 9);
    CHECK(w1.prototypes.size() == 8);  // four features + four distractors
    CHECK(w1.ratings.size() == 36);
    CHECK(w1.class_items.size() == 4);
    CHECK(w1.feature_ids.size() == 4);
    CHECK(w1.ideal_directions.size() == 4);
    for (const auto& rec : w1.entities.records()) {
        CHECK(rec.id.rfind("x-", 0) == 0);
        CHECK(std::abs(norm(rec.vector) - 1.0) <= 1e-12);
    }
    for (const auto& rec : w1.prototypes.records()) {
        CHECK(rec.id.rfind("x-", 0) == 0);
        CHECK(std::abs(norm(rec.vector) - 1.0) <= 1e-12);
    }
    for (const auto& item : w1.class_items) {
        CHECK(item.examples.size() == 7);
        CHECK(item.negatives.size() == 4);
    }

    // bit-for-bit reproducibility
    for (const auto& rec : w1.entities.records()) {
        CHECK(same_bytes(rec.vector, w2.entities.vector_for(rec.id)));
    }
    for (const auto& rec : w1.prototypes.records()) {
        CHECK(same_bytes(rec.vector, w2.prototypes.vector_for(rec.id)));
    }
    REQUIRE(w1.ratings.rows().size() == w2.ratings.rows().size());
    for (std::size_t i = 0; i < w1.ratings.rows().size(); ++i) {
        CHECK(w1.ratings.rows()[i].rating == w2.ratings.rows()[i].rating);
    }

    // a different seed produces different embeddings
    SynthConfig other = cfg;
    other.seed = 4;
    const SynthWorld w3 = synth_world(other);
    bool differs = false;
    for (const auto& rec : w1.entities.records()) {
        if (!same_bytes(rec.vector, w3.entities.vector_for(rec.id))) {
            differs = true;
            break;
        }
    }
    CHECK(differs);
}

TEST_CASE("hidden map is orthogonal, symmetric, and self-inverse") {
    SynthConfig cfg;
    cfg.dim = 20;
    cfg.n_entities = 12;
    cfg.n_features = 5;
    cfg.seed = 11;
    const SynthWorld w = synth_world(cfg);
    const Matrix& h = w.hidden_map;
    CHECK(orthogonality_defect(h) <= 1e-9);
    for (std::size_t i = 0; i < h.rows; ++i) {
        for (std::size_t j = 0; j < h.cols; ++j) {
            CHECK(std::abs(h.at(i, j) - h.at(j, i)) <= 1e-12);
        }
    }
    const Matrix hh = matmul(h, h);
    const Matrix eye = Matrix::identity(h.rows);
    double worst = 0.0;
    for (std::size_t i = 0; i < hh.data.size(); ++i) {
        worst = std::max(worst, std::abs(hh.data[i] - eye.data[i]));
    }
    CHECK(worst <= 1e-12);

    // prototypes are the map applied to the ideal directions, and applying
    // it again recovers the directions (self-inverse)
    for (std::size_t i = 0; i < w.feature_ids.size(); ++i) {
        const EmbeddingVector& p = w.prototypes.vector_for(w.feature_ids[i]);
        const EmbeddingVector back = apply_matrix(h, p);
        for (std::size_t k = 0; k < cfg.dim; ++k) {
            CHECK(back[k] ==
                  doctest::Approx(w.ideal_directions[i][k]).epsilon(1e-9));
        }
    }
}

TEST_CASE("entity and prototype subspaces are numerically disjoint") {
    SynthConfig cfg;
    cfg.dim = 24;
    cfg.n_entities = 10;
    cfg.n_features = 4;
    cfg.seed = 2;
    const SynthWorld w = synth_world(cfg);
    for (const auto& ent : w.entities.records()) {
        for (const auto& fid : w.feature_ids) {
            CHECK(std::abs(dot(ent.vector, w.prototypes.vector_for(fid))) <=
                  1e-12);
        }
    }
}

TEST_CASE("classification examples are the top-rated entities per feature") {
    SynthConfig cfg;
    cfg.dim = 16;
    cfg.n_entities = 11;
    cfg.n_features = 4;
    cfg.seed = 23;
    const SynthWorld w = synth_world(cfg);
    for (std::size_t i = 0; i < w.feature_ids.size(); ++i) {
        auto rows = w.ratings.rows_for(w.feature_ids[i]);
        std::stable_sort(rows.begin(), rows.end(),
                         [](const RatingsTable::Row& a,
                            const RatingsTable::Row& b) {
                             if (a.rating != b.rating) {
                                 return a.rating > b.rating;
                             }
                             return a.item < b.item;
                         });
        const auto& item = w.class_items[i];
        CHECK(item.target == w.feature_ids[i]);
        for (std::size_t k = 0; k < 7; ++k) {
            CHECK(item.examples[k] == rows[k].item);
        }
        // negatives: the next three features cyclically plus the distractor
        for (std::size_t step = 1; step <= 3; ++step) {
            CHECK(item.negatives[step - 1] ==
                  w.feature_ids[(i + step) % w.feature_ids.size()]);
        }
        CHECK(item.negatives[3] == w.distractor_ids[i]);
    }
}

TEST_CASE("zero noise with the identity map scores ratings perfectly") {
    SynthConfig cfg;
    cfg.dim = 16;
    cfg.n_entities = 12;
    cfg.n_features = 4;
    cfg.noise_sigma = 0.0;
    cfg.identity_hidden_map = true;
    cfg.seed = 31;
    const SynthWorld w = synth_world(cfg);
    EvalDataset ds;
    ds.name = "clean";
    ds.ratings = w.ratings;
    const EvalReport report = evaluate_dataset(
        ds, w.entities, w.prototypes, nullptr, EvalConfig{}, "pretrained");
    CHECK(report.average_accuracy == 1.0);
    for (const auto& d : report.dimensions) {
        CHECK(d.accuracy == 1.0);
        CHECK(d.pearson_defined);
        CHECK(d.pearson_r == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("before alignment every cross-space comparison ties") {
    SynthConfig cfg;
    cfg.dim = 16;
    cfg.n_entities = 12;
    cfg.n_features = 4;
    cfg.seed = 31;
    const SynthWorld w = synth_world(cfg);
    EvalDataset ds;
    ds.name = "raw";
    ds.ratings = w.ratings;
    const EvalReport report = evaluate_dataset(
        ds, w.entities, w.prototypes, nullptr, EvalConfig{}, "pretrained");
    CHECK(report.average_accuracy == 0.0);
}

TEST_CASE("orthogonal fit on ideal pairs recovers the hidden map") {
    SynthConfig cfg;
    cfg.dim = 16;
    cfg.n_entities = 10;
    cfg.n_features = 4;
    cfg.seed = 47;
    const SynthWorld w = synth_world(cfg);
    const std::size_t f = w.feature_ids.size();
    Matrix p(f, cfg.dim), c(f, cfg.dim);
    for (std::size_t i = 0; i < f; ++i) {
        const EmbeddingVector& proto = w.prototypes.vector_for(w.feature_ids[i]);
        for (std::size_t k = 0; k < cfg.dim; ++k) {
            p.at(i, k) = proto[k];
            c.at(i, k) = w.ideal_directions[i][k];
        }
    }
    const Matrix fit = procrustes_fit(p, c);
    CHECK(orthogonality_defect(fit) <= 1e-8);
    // on the prototype span, the fitted map acts like the hidden map
    const Matrix mapped = matmul(p, fit);
    const Matrix ideal = matmul(p, w.hidden_map);
    for (std::size_t i = 0; i < mapped.data.size(); ++i) {
        CHECK(std::abs(mapped.data[i] - ideal.data[i]) <= 1e-6);
    }
}

// ----------------------------------------------------------- dataset reports

TEST_CASE("dataset evaluation fills the report and respects the adapter") {
    SynthConfig cfg;
    cfg.dim = 16;
    cfg.n_entities = 12;
    cfg.n_features = 4;
    cfg.seed = 31;
    const SynthWorld w = synth_world(cfg);
    EvalDataset ds;
    ds.name = "world";
    ds.ratings = w.ratings;

    // the hidden map itself is the perfect adapter
    AlignmentAdapter adapter;
    adapter.w = w.hidden_map;
    adapter.scope = AdapterScope::PrototypesOnly;
    adapter.renormalize = true;
    const EvalReport report = evaluate_dataset(
        ds, w.entities, w.prototypes, &adapter, EvalConfig{}, "pretrained", 9);

    CHECK(report.dataset == "world");
    CHECK(report.mode == "pretrained");
    CHECK(report.seed == 9);
    CHECK(report.adapter_sha256 == adapter_sha256(adapter));
    CHECK(report.adapter_sha256 != "identity");
    REQUIRE(report.dimensions.size() == 4);
    CHECK(std::is_sorted(report.dimensions.begin(), report.dimensions.end(),
                         [](const DimensionReport& a,
                            const DimensionReport& b) {
                             return a.name < b.name;
                         }));
    double mean = 0.0;
    for (const auto& d : report.dimensions) {
        CHECK(d.accuracy > 0.9);  // noise 0.05 barely perturbs the order
        CHECK(d.pairs > 0);
        mean += d.accuracy;
    }
    CHECK(report.average_accuracy ==
          doctest::Approx(mean / 4.0).epsilon(1e-15));

    const EvalReport bare = evaluate_dataset(
        ds, w.entities, w.prototypes, nullptr, EvalConfig{}, "pretrained");
    CHECK(bare.adapter_sha256 == "identity");
}

TEST_CASE("items without embeddings drop out of the evaluation") {
    SynthConfig cfg;
    cfg.dim = 16;
    cfg.n_entities = 12;
    cfg.n_features = 4;
    cfg.noise_sigma = 0.0;
    cfg.identity_hidden_map = true;
    cfg.seed = 5;
    const SynthWorld w = synth_world(cfg);
    EvalDataset ds;
    ds.name = "partial";
    ds.ratings = w.ratings;
    // a rated item that has no embedding must not break anything
    for (const auto& fid : w.feature_ids) ds.ratings.add("ghost", fid, 0.5);
    const EvalReport report = evaluate_dataset(
        ds, w.entities, w.prototypes, nullptr, EvalConfig{}, "pretrained");
    CHECK(report.average_accuracy == 1.0);

    EvalDataset empty;
    empty.name = "empty";
    empty.ratings = table_of({{"ghost", "w", 1.0}, {"wraith", "w", 2.0}});
    CHECK_THROWS_AS(evaluate_dataset(empty, w.entities, w.prototypes, nullptr,
                                     EvalConfig{}, "pretrained"),
                    EmptyJoinError);
}

TEST_CASE("fixed pair lists bypass generation and set the dimensions") {
    SynthConfig cfg;
    cfg.dim = 16;
    cfg.n_entities = 12;
    cfg.n_features = 4;
    cfg.noise_sigma = 0.0;
    cfg.identity_hidden_map = true;
    cfg.seed = 5;
    const SynthWorld w = synth_world(cfg);
    EvalDataset ds;
    ds.name = "fixed";
    ds.ratings = w.ratings;
    // only one dimension, two hand-picked pairs
    const auto rows = w.ratings.rows_for(w.feature_ids[0]);
    RankPair p1;
    p1.item_a = std::min(rows[0].item, rows[1].item);
    p1.item_b = std::max(rows[0].item, rows[1].item);
    p1.dimension = w.feature_ids[0];
    p1.label = *w.ratings.rating(p1.item_a, p1.dimension) >
                       *w.ratings.rating(p1.item_b, p1.dimension)
                   ? 1
                   : -1;
    RankPair p2 = p1;
    p2.item_a = std::min(rows[2].item, rows[3].item);
    p2.item_b = std::max(rows[2].item, rows[3].item);
    p2.label = *w.ratings.rating(p2.item_a, p2.dimension) >
                       *w.ratings.rating(p2.item_b, p2.dimension)
                   ? 1
                   : -1;
    ds.pairs = {p1, p2};
    const EvalReport report = evaluate_dataset(
        ds, w.entities, w.prototypes, nullptr, EvalConfig{}, "pretrained");
    REQUIRE(report.dimensions.size() == 1);
    CHECK(report.dimensions[0].name == w.feature_ids[0]);
    CHECK(report.dimensions[0].pairs == 2);
    CHECK(report.dimensions[0].accuracy == 1.0);
}

TEST_CASE("report serialization carries null for undefined correlation") {
    EvalReport report;
    report.dataset = "demo";
    report.mode = "pretrained";
    report.seed = 4;
    report.adapter_sha256 = "identity";
    DimensionReport a;
    a.name = "warmth";
    a.pairs = 10;
    a.accuracy = 0.8;
    a.pearson_r = 0.5;
    a.pearson_defined = true;
    DimensionReport b;
    b.name = "size";
    b.pairs = 3;
    b.accuracy = 0.0;
    b.pearson_defined = false;
    report.dimensions = {a, b};
    report.average_accuracy = 0.4;

    const nlohmann::json j = nlohmann::json::parse(report_to_json(report));
    CHECK(j.at("dataset") == "demo");
    CHECK(j.at("mode") == "pretrained");
    CHECK(j.at("seed") == 4);
    CHECK(j.at("adapter_sha256") == "identity");
    CHECK(j.at("average_accuracy") == doctest::Approx(0.4));
    REQUIRE(j.at("dimensions").size() == 2);
    CHECK(j.at("dimensions")[0].at("name") == "warmth");
    CHECK(j.at("dimensions")[0].at("pearson") == doctest::Approx(0.5));
    CHECK(j.at("dimensions")[1].at("pearson").is_null());
    CHECK(j.at("dimensions")[1].at("pairs") == 3);

    const std::string path = temp_path("report.json");
    save_report(report, path);
    const std::string body = slurp(path);
    CHECK(nlohmann::json::parse(body) == j);
    CHECK(body.back() == '\n');
    std::remove(path.c_str());
}

// -------------------------------------------------------------- leave one out

namespace {

// one synthetic world split into per-feature datasets of two dimensions each
struct LooFixture {
    SynthWorld world;
    std::vector<EvalDataset> datasets;
    TrainConfig tcfg;
};

LooFixture make_loo_fixture(bool third_perceptual) {
    LooFixture fx;
    SynthConfig cfg;
    cfg.dim = 16;
    cfg.n_entities = 14;
    cfg.n_features = 6;
    cfg.seed = 77;
    fx.world = synth_world(cfg);
    for (int d = 0; d < 3; ++d) {
        EvalDataset ds;
        ds.name = "split" + std::to_string(d);
        ds.ratings = restrict_dims(fx.world.ratings,
                                   {fx.world.feature_ids[2 * d],
                                    fx.world.feature_ids[2 * d + 1]});
        ds.perceptual = d == 2 ? third_perceptual : true;
        fx.datasets.push_back(std::move(ds));
    }
    fx.tcfg.mode = TrainMode::ClassRankPerceptual;
    fx.tcfg.epochs = 5;
    fx.tcfg.patience = 5;
    fx.tcfg.seed = 1;
    return fx;
}

}  // namespace

TEST_CASE("leave-one-out trains on the other datasets and audits exclusion") {
    LooFixture fx = make_loo_fixture(true);
    std::vector<std::string> audit;
    const auto reports =
        leave_one_out(fx.datasets, fx.world.entities, fx.world.prototypes,
                      fx.world.class_items, fx.tcfg, EvalConfig{}, &audit);
    REQUIRE(reports.size() == 3);
    REQUIRE(audit.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(reports[i].dataset == fx.datasets[i].name);
        CHECK(reports[i].mode == "class+rank-perc");
        CHECK(reports[i].adapter_sha256 != "identity");
        CHECK(reports[i].dimensions.size() == 2);
        CHECK(audit[i].find("dataset=" + fx.datasets[i].name) !=
              std::string::npos);
        CHECK(audit[i].find("overlap=0") != std::string::npos);
        CHECK(audit[i].find("exclusion=ok") != std::string::npos);
        // each fold trains on exactly the two other splits
        const auto spos = audit[i].find("sources=");
        REQUIRE(spos != std::string::npos);
        const std::string sources = audit[i].substr(spos + 8);
        for (std::size_t j = 0; j < 3; ++j) {
            const bool listed =
                sources.find(fx.datasets[j].name) != std::string::npos;
            CHECK(listed == (j != i));
        }
    }
    // each fold trained its own adapter on different pairs
    CHECK(reports[0].adapter_sha256 != reports[1].adapter_sha256);
    CHECK(reports[1].adapter_sha256 != reports[2].adapter_sha256);
}

TEST_CASE("perceptual-only training skips non-perceptual siblings") {
    LooFixture fx = make_loo_fixture(false);  // split2 is non-perceptual
    std::vector<std::string> audit;
    const auto reports =
        leave_one_out(fx.datasets, fx.world.entities, fx.world.prototypes,
                      fx.world.class_items, fx.tcfg, EvalConfig{}, &audit);
    REQUIRE(audit.size() == 3);
    // folds 0 and 1 may only train on the one perceptual sibling
    CHECK(audit[0].find("sources=split1") != std::string::npos);
    CHECK(audit[0].find("split2") == std::string::npos);
    CHECK(audit[1].find("sources=split0") != std::string::npos);
    CHECK(audit[1].find("split2") == std::string::npos);
    // fold 2 trains on both perceptual splits
    CHECK(audit[2].find("split0") != std::string::npos);
    CHECK(audit[2].find("split1") != std::string::npos);

    // train-pair counts in the audit reflect the restriction
    const auto count_of = [](const std::string& line) {
        const auto pos = line.find("train_pairs=");
        return std::stoul(line.substr(pos + 12));
    };
    CHECK(count_of(audit[0]) < count_of(audit[2]));
}

TEST_CASE("pretrained leave-one-out evaluates without any training") {
    LooFixture fx = make_loo_fixture(true);
    fx.tcfg.mode = TrainMode::Pretrained;
    std::vector<std::string> audit;
    const auto reports =
        leave_one_out(fx.datasets, fx.world.entities, fx.world.prototypes,
                      fx.world.class_items, fx.tcfg, EvalConfig{}, &audit);
    REQUIRE(reports.size() == 3);
    for (const auto& r : reports) {
        CHECK(r.adapter_sha256 == "identity");
        CHECK(r.mode == "pretrained");
        // disjoint subspaces: everything ties before alignment
        CHECK(r.average_accuracy == 0.0);
    }
    for (const auto& line : audit) {
        CHECK(line.find("train_pairs=0") != std::string::npos);
    }
}

TEST_CASE("leave-one-out input validation") {
    LooFixture fx = make_loo_fixture(true);
    CHECK_THROWS_AS(
        leave_one_out({fx.datasets[0]}, fx.world.entities,
                      fx.world.prototypes, fx.world.class_items, fx.tcfg,
                      EvalConfig{}),
        InputError);

    // ranking mode with no perceptual sibling anywhere: training data for the
    // perceptual folds is empty
    for (auto& ds : fx.datasets) ds.perceptual = false;
    fx.tcfg.mode = TrainMode::RankPerceptual;
    CHECK_THROWS_AS(
        leave_one_out(fx.datasets, fx.world.entities, fx.world.prototypes,
                      fx.world.class_items, fx.tcfg, EvalConfig{}),
        ConfigError);
}

TEST_CASE("training input resolution looks ids up in the right stores") {
    SynthConfig cfg;
    cfg.dim = 16;
    cfg.n_entities = 10;
    cfg.n_features = 4;
    cfg.seed = 13;
    const SynthWorld w = synth_world(cfg);
    const auto pairs = generate_pairs(w.ratings, w.feature_ids[0], 0.0, 10, 1);
    const TrainInputs inputs = resolve_train_inputs(
        w.class_items, pairs, w.entities, w.prototypes);
    REQUIRE(inputs.classification.size() == w.class_items.size());
    REQUIRE(inputs.ranking.size() == pairs.size());
    CHECK(same_bytes(inputs.classification[0].target,
                     w.prototypes.vector_for(w.class_items[0].target)));
    CHECK(same_bytes(inputs.classification[0].examples[0],
                     w.entities.vector_for(w.class_items[0].examples[0])));
    CHECK(same_bytes(inputs.ranking[0].e1,
                     w.entities.vector_for(pairs[0].item_a)));
    CHECK(same_bytes(inputs.ranking[0].f,
                     w.prototypes.vector_for(pairs[0].dimension)));
    CHECK(inputs.ranking[0].y == static_cast<double>(pairs[0].label));

    std::vector<RankPair> bad = pairs;
    bad[0].item_a = "missing-item";
    CHECK_THROWS_AS(
        resolve_train_inputs(w.class_items, bad, w.entities, w.prototypes),
        LookupError);
}

// ----------------------------------------------------------------- scatter

TEST_CASE("scatter export joins, sorts, and round-trips exactly") {
    const RatingsTable truth = table_of({{"b", "w", 2.0},
                                         {"a", "w", 0.1234567890123456789},
                                         {"c", "w", -7.25},
                                         {"d", "other", 3.0}});
    const std::vector<ScoredEntity> predicted = {
        {"c", 1.0 / 3.0}, {"a", 0.9999999999999999}, {"b", -2.5e-17},
        {"zz", 5.0}};  // zz has no rating on w and drops out
    const std::string path = temp_path("scatter.csv");
    export_scatter(predicted, truth, "w", path);

    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "item,predicted_score,ground_truth");
    std::vector<std::string> items;
    std::vector<double> scores, truths;
    while (std::getline(in, line)) {
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        items.push_back(line.substr(0, c1));
        scores.push_back(std::strtod(line.substr(c1 + 1, c2 - c1 - 1).c_str(),
                                     nullptr));
        truths.push_back(std::strtod(line.substr(c2 + 1).c_str(), nullptr));
    }
    REQUIRE(items.size() == 3);
    CHECK(items[0] == "a");
    CHECK(items[1] == "b");
    CHECK(items[2] == "c");
    // %.17g output parses back to the identical doubles
    CHECK(scores[0] == 0.9999999999999999);
    CHECK(scores[1] == -2.5e-17);
    CHECK(scores[2] == 1.0 / 3.0);
    CHECK(truths[0] == 0.1234567890123456789);
    CHECK(truths[1] == 2.0);
    CHECK(truths[2] == -7.25);
    std::remove(path.c_str());

    CHECK_THROWS_AS(export_scatter({{"nope", 1.0}}, truth, "w",
                                   temp_path("never.csv")),
                    EmptyJoinError);
}
