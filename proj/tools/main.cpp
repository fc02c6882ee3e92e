// protospace: command-line surface over the core library. One subcommand per
// process; every network-free subcommand is byte-deterministic for fixed
// flags, files, and seeds. Exit codes: 0 success, 1 unexpected failure or
// failed check, 2 configuration/usage, 3 numeric, 4 empty data, 5 I/O or
// service. File outputs are written to a temporary sibling and renamed into
// place so a failed run never leaves a half-written artifact at the target
// path (the embed cache is append-only and lock-protected instead).

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "protospace/adapter.hpp"
#include "protospace/corpus.hpp"
#include "protospace/embed_client.hpp"
#include "protospace/errors.hpp"
#include "protospace/evaluation.hpp"
#include "protospace/procrustes.hpp"
#include "protospace/random.hpp"
#include "protospace/scoring.hpp"
#include "protospace/sha256.hpp"
#include "protospace/synth.hpp"
#include "protospace/train.hpp"

namespace ps = protospace;

namespace {

// ----------------------------------------------------------------- utilities

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ps::IoError("cannot open '" + tmp + "' for writing");
        out << content;
        if (!out) throw ps::IoError("failed writing '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw ps::IoError("cannot move '" + tmp + "' to '" + path +
                          "': " + ec.message());
    }
}

std::string embeddings_to_jsonl(const ps::EmbeddingStore& store) {
    std::ostringstream out;
    for (const auto& rec : store.records()) {
        nlohmann::json j;
        j["id"] = rec.id;
        j["text"] = rec.text;
        j["vector"] = rec.vector.values;
        out << j.dump() << '\n';
    }
    return out.str();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ps::IoError("cannot open '" + path + "' for reading");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

ps::EmbeddingStore load_merged_stores(const std::vector<std::string>& paths) {
    ps::EmbeddingStore merged;
    for (const auto& p : paths) merged.merge(ps::load_embeddings(p));
    return merged;
}

// Holds an exclusively created lock file for the duration of a scope.
class FileLock {
public:
    explicit FileLock(const std::string& path) : path_(path) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
            if (fd_ >= 0) return;
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        throw ps::IoError("cannot acquire lock file '" + path_ +
                          "' (remove it if a previous run crashed)");
    }
    ~FileLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            ::unlink(path_.c_str());
        }
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    std::string path_;
    int fd_ = -1;
};

// ------------------------------------------------------------------- embed

struct EmbedArgs {
    std::string texts_file;
    std::string endpoint;
    std::string api_key;
    std::string model;
    std::string category;
    bool eol = false;
    std::string out;
    std::string cache;
    std::size_t batch_size = 64;
};

// One embed-cache line: {"sha256": ..., "text": ..., "vector": [...]}.
// The cache is append-only; concurrent appenders serialize on a lock file.
std::map<std::string, ps::EmbeddingVector> load_embed_cache(
    const std::string& path) {
    std::map<std::string, ps::EmbeddingVector> cache;
    std::ifstream in(path, std::ios::binary);
    if (!in) return cache;  // a missing cache is simply empty
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const nlohmann::json j =
            nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded() || !j.is_object() || !j.contains("sha256") ||
            !j.contains("vector") || !j["vector"].is_array()) {
            throw ps::ParseError(path + ":" + std::to_string(line_no) +
                                 ": malformed cache record");
        }
        std::vector<double> values;
        values.reserve(j["vector"].size());
        for (const auto& x : j["vector"]) {
            if (!x.is_number()) {
                throw ps::ParseError(path + ":" + std::to_string(line_no) +
                                     ": non-numeric vector entry");
            }
            values.push_back(x.get<double>());
        }
        cache[j["sha256"].get<std::string>()] =
            ps::EmbeddingVector(std::move(values), true);
    }
    return cache;
}

int cmd_embed(const EmbedArgs& args) {
    const std::vector<std::string> names = read_lines(args.texts_file);
    if (names.empty()) {
        throw ps::InputError("'" + args.texts_file + "' lists no texts");
    }

    // final prompt per input line
    std::vector<std::string> prompts;
    prompts.reserve(names.size());
    for (const auto& name : names) {
        std::string phrase =
            args.category.empty()
                ? name
                : ps::verbalize_entity(name, args.category);
        prompts.push_back(args.eol ? ps::eol_prompt(phrase) : phrase);
    }

    // cache lookup: the previous output file and the shared cache both count
    std::map<std::string, ps::EmbeddingVector> cache;
    if (!args.cache.empty()) cache = load_embed_cache(args.cache);
    if (std::filesystem::exists(args.out)) {
        try {
            const ps::EmbeddingStore prior = ps::load_embeddings(args.out);
            for (const auto& rec : prior.records()) {
                cache.emplace(ps::sha256_hex(rec.text), rec.vector);
            }
        } catch (const ps::Error&) {
            // an unreadable previous output is ignored, not fatal
        }
    }

    std::vector<std::optional<ps::EmbeddingVector>> vectors(names.size());
    std::vector<std::size_t> missing;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        const auto it = cache.find(ps::sha256_hex(prompts[i]));
        if (it != cache.end()) {
            vectors[i] = it->second;
            ++hits;
        } else {
            missing.push_back(i);
        }
    }

    ps::EmbedServiceConfig service = ps::EmbedServiceConfig::from_env();
    if (!args.endpoint.empty()) service.endpoint = args.endpoint;
    if (!args.api_key.empty()) service.api_key = args.api_key;
    if (!args.model.empty()) service.model = args.model;
    service.batch_size = args.batch_size;

    const auto assemble = [&](bool partial) {
        ps::EmbeddingStore store;
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (!vectors[i].has_value()) continue;
            ps::EmbeddingRecord rec;
            rec.id = names[i];
            rec.text = prompts[i];
            rec.vector = *vectors[i];
            store.add(std::move(rec));
        }
        (void)partial;
        return store;
    };

    std::vector<std::pair<std::string, ps::EmbeddingVector>> fetched;
    if (!missing.empty()) {
        if (service.endpoint.empty()) {
            throw ps::ConfigError(
                "no embedding endpoint: pass --endpoint or set "
                "PROTOSPACE_EMBED_URL");
        }
        // fetch in chunks so a failing service still leaves earlier chunks
        // available for the .partial file
        try {
            for (std::size_t start = 0; start < missing.size();
                 start += args.batch_size) {
                const std::size_t stop =
                    std::min(missing.size(), start + args.batch_size);
                std::vector<std::string> chunk;
                for (std::size_t k = start; k < stop; ++k) {
                    chunk.push_back(prompts[missing[k]]);
                }
                const auto result = ps::fetch_embeddings(chunk, service);
                for (std::size_t k = start; k < stop; ++k) {
                    vectors[missing[k]] = result[k - start];
                    fetched.push_back({prompts[missing[k]], result[k - start]});
                }
            }
        } catch (const ps::Error&) {
            const ps::EmbeddingStore partial = assemble(true);
            if (partial.size() > 0) {
                write_file_atomic(args.out + ".partial",
                                  embeddings_to_jsonl(partial));
                std::fprintf(stderr,
                             "wrote %zu completed records to %s.partial\n",
                             partial.size(), args.out.c_str());
            }
            throw;
        }
    }

    write_file_atomic(args.out, embeddings_to_jsonl(assemble(false)));

    // append the newly fetched vectors to the shared cache
    if (!args.cache.empty() && !fetched.empty()) {
        FileLock lock(args.cache + ".lock");
        std::ofstream out(args.cache, std::ios::binary | std::ios::app);
        if (!out) {
            throw ps::IoError("cannot append to cache '" + args.cache + "'");
        }
        for (const auto& [text, vector] : fetched) {
            nlohmann::json j;
            j["sha256"] = ps::sha256_hex(text);
            j["text"] = text;
            j["vector"] = vector.values;
            out << j.dump() << '\n';
        }
        if (!out) {
            throw ps::IoError("failed appending to cache '" + args.cache +
                              "'");
        }
    }

    std::printf("embedded %zu texts (%zu cache hits, %zu fetched)\n",
                names.size(), hits, names.size() - hits);
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::string class_file;
    std::string rank_file;
    std::vector<std::string> emb_files;
    std::string mode = "classification";
    std::uint64_t seed = 0;
    std::size_t epochs = 200;
    double lr = 1e-3;
    std::size_t batch = 16;
    std::size_t patience = 20;
    double lambda = 0.25;
    double temp = 0.25;
    double alpha = 10.0;
    double val_fraction = 0.1;
    std::size_t class_limit = 0;
    std::string scope = "prototypes-only";
    bool relax_class = false;
    std::string out;
    std::string trace;
};

std::string render_trace(const TrainArgs& args, const ps::TrainTrace& trace) {
    std::ostringstream out;
    char header[256];
    std::snprintf(header, sizeof(header),
                  "# mode=%s seed=%llu T=%g alpha=%g lambda=%g lr=%g "
                  "epochs=%zu batch=%zu patience=%zu\n",
                  args.mode.c_str(),
                  static_cast<unsigned long long>(args.seed), args.temp,
                  args.alpha, args.lambda, args.lr, args.epochs, args.batch,
                  args.patience);
    out << header << "epoch,train_loss,val_loss,grad_norm\n";
    for (const auto& e : trace.epochs) {
        out << e.epoch << ',' << format_double(e.train_loss) << ',';
        if (std::isfinite(e.val_loss)) out << format_double(e.val_loss);
        out << ',' << format_double(e.grad_norm) << '\n';
    }
    return out.str();
}

int cmd_train(const TrainArgs& args) {
    const ps::TrainMode mode = ps::train_mode_from_string(args.mode);
    const ps::EmbeddingStore store = load_merged_stores(args.emb_files);
    const std::string trace_path =
        args.trace.empty() ? args.out + ".trace.csv" : args.trace;

    ps::TrainConfig config;
    config.mode = mode;
    config.seed = args.seed;
    config.epochs = args.epochs;
    config.learning_rate = args.lr;
    config.batch_size = args.batch;
    config.patience = args.patience;
    config.validation_fraction = args.val_fraction;
    config.loss.temperature = args.temp;
    config.loss.alpha = args.alpha;
    config.loss.lambda = args.lambda;
    config.scope = ps::scope_from_string(args.scope);

    if (mode == ps::TrainMode::Pretrained) {
        if (store.size() == 0) {
            throw ps::ConfigError(
                "pretrained mode still needs --emb to size the identity map");
        }
        const ps::AlignmentAdapter adapter =
            ps::identity_adapter(store.dim(), config.scope, true);
        write_file_atomic(args.out, ps::adapter_to_json(adapter) + "\n");
        write_file_atomic(trace_path, render_trace(args, ps::TrainTrace{}));
        std::printf("pretrained: identity adapter, dim=%zu, zero epochs\n",
                    store.dim());
        return 0;
    }

    std::vector<ps::ClassificationItem> class_items;
    if (!args.class_file.empty()) {
        class_items =
            ps::load_classification_dataset(args.class_file, args.relax_class);
    }
    if (args.class_limit > 0 && args.class_limit < class_items.size()) {
        std::vector<std::size_t> order(class_items.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        ps::DeterministicRng rng(ps::derive_seed(args.seed, 3000));
        rng.shuffle(order);
        order.resize(args.class_limit);
        std::sort(order.begin(), order.end());
        std::vector<ps::ClassificationItem> kept;
        kept.reserve(order.size());
        for (const std::size_t i : order) {
            kept.push_back(std::move(class_items[i]));
        }
        class_items = std::move(kept);
        std::printf("classification items subsampled to %zu\n",
                    class_items.size());
    }

    std::vector<ps::RankPair> pairs;
    if (!args.rank_file.empty()) pairs = ps::load_pairs(args.rank_file);

    const ps::TrainInputs inputs =
        ps::resolve_train_inputs(class_items, pairs, store, store);
    const ps::TrainResult result = ps::train(inputs, config);

    for (const auto& e : result.trace.epochs) {
        if (std::isfinite(e.val_loss)) {
            std::printf("epoch %zu train_loss=%.6g val_loss=%.6g "
                        "grad_norm=%.6g\n",
                        e.epoch, e.train_loss, e.val_loss, e.grad_norm);
        } else {
            std::printf("epoch %zu train_loss=%.6g grad_norm=%.6g\n", e.epoch,
                        e.train_loss, e.grad_norm);
        }
    }
    std::printf("best_epoch=%zu monitored=%.6g early_stopped=%s\n",
                result.trace.best_epoch, result.trace.best_monitored,
                result.trace.early_stopped ? "yes" : "no");

    write_file_atomic(args.out, ps::adapter_to_json(result.adapter) + "\n");
    write_file_atomic(trace_path, render_trace(args, result.trace));
    return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
    std::vector<std::string> emb_files;
    std::string adapter_file;
    std::string ratings_file;
    std::string pairs_file;
    double min_gap = 0.0;
    std::size_t max_pairs = 340;
    std::uint64_t seed = 0;
    bool tie_credit = false;
    std::string mode = "pretrained";
    std::string dataset_name;
    std::string report;
    std::string scatter;
    std::string scatter_dim;
};

int cmd_eval(const EvalArgs& args) {
    const ps::EmbeddingStore store = load_merged_stores(args.emb_files);

    ps::EvalDataset dataset;
    dataset.name = args.dataset_name.empty()
                       ? std::filesystem::path(args.ratings_file)
                             .stem()
                             .string()
                       : args.dataset_name;
    dataset.ratings = ps::load_ratings(args.ratings_file);
    if (!args.pairs_file.empty()) {
        dataset.pairs = ps::load_pairs(args.pairs_file);
    }

    std::optional<ps::AlignmentAdapter> adapter;
    if (!args.adapter_file.empty()) {
        adapter = ps::load_adapter(args.adapter_file);
    }

    ps::EvalConfig config;
    config.min_gap = args.min_gap;
    config.max_pairs = args.max_pairs;
    config.seed = args.seed;
    config.tie_credit = args.tie_credit;

    const ps::EvalReport report = ps::evaluate_dataset(
        dataset, store, store, adapter ? &*adapter : nullptr, config,
        args.mode, args.seed);
    const std::string body = ps::report_to_json(report);
    std::printf("%s\n", body.c_str());
    if (!args.report.empty()) write_file_atomic(args.report, body + "\n");

    if (!args.scatter.empty()) {
        if (report.dimensions.empty()) {
            throw ps::EmptyJoinError("no dimension to export");
        }
        const std::string dim = args.scatter_dim.empty()
                                    ? report.dimensions.front().name
                                    : args.scatter_dim;
        const ps::FeatureDirection direction = ps::prototype_direction(
            store, dim, adapter ? &*adapter : nullptr);
        std::vector<ps::ScoredEntity> predicted;
        for (const auto& row : dataset.ratings.rows_for(dim)) {
            if (!store.contains(row.item)) continue;
            predicted.push_back(ps::ScoredEntity{
                row.item, ps::score(store.vector_for(row.item), direction,
                                    adapter ? &*adapter : nullptr)});
        }
        const std::string tmp = args.scatter + ".tmp";
        ps::export_scatter(predicted, dataset.ratings, dim, tmp);
        std::error_code ec;
        std::filesystem::rename(tmp, args.scatter, ec);
        if (ec) {
            throw ps::IoError("cannot move scatter file into place: " +
                              ec.message());
        }
    }
    return 0;
}

// -------------------------------------------------------------- procrustes

struct ProcrustesArgs {
    std::string prototypes_file;
    std::string targets_file;
    std::string scope = "prototypes-only";
    std::string out;
};

int cmd_procrustes(const ProcrustesArgs& args) {
    const ps::EmbeddingStore protos = ps::load_embeddings(args.prototypes_file);
    const ps::EmbeddingStore targets = ps::load_embeddings(args.targets_file);

    std::vector<std::string> common;
    for (const auto& rec : protos.records()) {
        if (targets.contains(rec.id)) common.push_back(rec.id);
    }
    std::sort(common.begin(), common.end());

    std::vector<ps::EmbeddingVector> sources, sinks;
    sources.reserve(common.size());
    sinks.reserve(common.size());
    for (const auto& id : common) {
        sources.push_back(protos.vector_for(id));
        sinks.push_back(targets.vector_for(id));
    }

    ps::AlignmentAdapter adapter;
    adapter.w = ps::procrustes_rotation(sources, sinks);
    adapter.scope = ps::scope_from_string(args.scope);
    adapter.renormalize = true;
    write_file_atomic(args.out, ps::adapter_to_json(adapter) + "\n");

    std::printf("pairs=%zu residual=%s defect=%s\n", common.size(),
                format_double(
                    ps::procrustes_residual(adapter.w, sources, sinks))
                    .c_str(),
                format_double(ps::orthogonality_defect(adapter.w)).c_str());
    return 0;
}

// -------------------------------------------------------------------- rank

struct RankArgs {
    std::vector<std::string> emb_files;
    std::string proto_file;
    std::string adapter_file;
    std::string feature_id;
    std::string feature_text;
    std::string seeds_high;
    std::string seeds_low;
    std::string out;
};

int cmd_rank(const RankArgs& args) {
    const ps::EmbeddingStore entities = load_merged_stores(args.emb_files);
    const ps::EmbeddingStore protos = args.proto_file.empty()
                                          ? entities
                                          : ps::load_embeddings(args.proto_file);

    std::optional<ps::AlignmentAdapter> adapter;
    if (!args.adapter_file.empty()) {
        adapter = ps::load_adapter(args.adapter_file);
    }
    const ps::AlignmentAdapter* aptr = adapter ? &*adapter : nullptr;

    ps::FeatureDirection direction;
    const int sources = (args.feature_id.empty() ? 0 : 1) +
                        (args.feature_text.empty() ? 0 : 1) +
                        (args.seeds_high.empty() && args.seeds_low.empty() ? 0
                                                                           : 1);
    if (sources != 1) {
        throw ps::ConfigError(
            "pick exactly one of --feature-id, --feature-text, or "
            "--seeds-high/--seeds-low");
    }
    if (!args.feature_id.empty()) {
        direction = ps::prototype_direction(protos, args.feature_id, aptr);
    } else if (!args.feature_text.empty()) {
        ps::FeaturePrototype proto;
        proto.feature_id = args.feature_text;
        proto.description = args.feature_text;
        direction = ps::prototype_direction(proto, protos, aptr);
    } else {
        if (args.seeds_high.empty() || args.seeds_low.empty()) {
            throw ps::ConfigError(
                "--seeds-high and --seeds-low must be given together");
        }
        const ps::EmbeddingStore highs = ps::load_embeddings(args.seeds_high);
        const ps::EmbeddingStore lows = ps::load_embeddings(args.seeds_low);
        std::vector<ps::EmbeddingVector> hv, lv;
        for (const auto& rec : highs.records()) hv.push_back(rec.vector);
        for (const auto& rec : lows.records()) lv.push_back(rec.vector);
        direction = ps::seed_direction(hv, lv, "seeds");
        if (ps::norm(direction.vector) == 0.0) {
            std::fprintf(stderr,
                         "warning: seed direction is the zero vector\n");
        }
    }

    std::vector<ps::Entity> to_rank;
    for (const auto& rec : entities.records()) {
        ps::Entity e;
        e.id = rec.id;
        e.name = rec.text;
        to_rank.push_back(std::move(e));
    }
    const auto ranked = ps::rank_entities(to_rank, direction, entities, aptr);

    std::ostringstream csv;
    csv << "item,score\n";
    for (const auto& s : ranked) {
        std::printf("%s\t%s\n", s.entity_id.c_str(),
                    format_double(s.score).c_str());
        csv << s.entity_id << ',' << format_double(s.score) << '\n';
    }
    if (!args.out.empty()) write_file_atomic(args.out, csv.str());
    return 0;
}

// ---------------------------------------------------------------------- qa

struct QaArgs {
    std::string query;
    std::vector<std::string> options;
    std::string endpoint;
    std::string api_key;
    std::string model;
    std::string cache;
    bool eol = false;
};

int cmd_qa(const QaArgs& args) {
    if (args.options.empty()) throw ps::InputError("no --options given");

    std::vector<std::string> texts;
    texts.push_back(args.eol ? ps::eol_prompt(args.query) : args.query);
    for (const auto& o : args.options) {
        texts.push_back(args.eol ? ps::eol_prompt(o) : o);
    }

    std::map<std::string, ps::EmbeddingVector> cache;
    if (!args.cache.empty()) cache = load_embed_cache(args.cache);

    std::vector<std::optional<ps::EmbeddingVector>> vectors(texts.size());
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto it = cache.find(ps::sha256_hex(texts[i]));
        if (it != cache.end()) {
            vectors[i] = it->second;
        } else {
            missing.push_back(i);
        }
    }
    if (!missing.empty()) {
        ps::EmbedServiceConfig service = ps::EmbedServiceConfig::from_env();
        if (!args.endpoint.empty()) service.endpoint = args.endpoint;
        if (!args.api_key.empty()) service.api_key = args.api_key;
        if (!args.model.empty()) service.model = args.model;
        if (service.endpoint.empty()) {
            throw ps::ConfigError(
                "no embedding endpoint: pass --endpoint or set "
                "PROTOSPACE_EMBED_URL");
        }
        std::vector<std::string> chunk;
        for (const std::size_t i : missing) chunk.push_back(texts[i]);
        const auto result = ps::fetch_embeddings(chunk, service);
        for (std::size_t k = 0; k < missing.size(); ++k) {
            vectors[missing[k]] = result[k];
        }
    }

    std::vector<ps::EmbeddingVector> options(vectors.size() - 1);
    for (std::size_t i = 1; i < vectors.size(); ++i) {
        options[i - 1] = *vectors[i];
    }
    const std::size_t best = ps::select_option(*vectors[0], options);
    std::printf("%zu\n", best);
    return 0;
}

// ------------------------------------------------------------------- synth

struct SynthArgs {
    std::string config_file;
    std::string out_dir;
};

ps::SynthConfig parse_synth_config(const std::string& path) {
    ps::SynthConfig config;
    if (path.empty()) return config;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ps::IoError("cannot open '" + path + "' for reading");
    std::stringstream buf;
    buf << in.rdbuf();
    const nlohmann::json j =
        nlohmann::json::parse(buf.str(), nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) {
        throw ps::ParseError(path + ": expected a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (key == "dim") {
            config.dim = value.get<std::size_t>();
        } else if (key == "n_entities") {
            config.n_entities = value.get<std::size_t>();
        } else if (key == "n_features") {
            config.n_features = value.get<std::size_t>();
        } else if (key == "noise_sigma") {
            config.noise_sigma = value.get<double>();
        } else if (key == "identity_hidden_map") {
            config.identity_hidden_map = value.get<bool>();
        } else if (key == "seed") {
            config.seed = value.get<std::uint64_t>();
        } else if (key == "direction_rank") {
            config.direction_rank = value.get<std::size_t>();
        } else if (key == "off_span_scale") {
            config.off_span_scale = value.get<double>();
        } else if (key == "id_prefix") {
            config.id_prefix = value.get<std::string>();
        } else {
            throw ps::ConfigError(path + ": unknown config key '" + key +
                                  "'");
        }
    }
    return config;
}

int cmd_synth(const SynthArgs& args) {
    const ps::SynthConfig config = parse_synth_config(args.config_file);
    const ps::SynthWorld world = ps::synth_world(config);

    std::error_code ec;
    std::filesystem::create_directories(args.out_dir, ec);
    if (ec) {
        throw ps::IoError("cannot create '" + args.out_dir +
                          "': " + ec.message());
    }
    const auto in_dir = [&](const char* name) {
        return (std::filesystem::path(args.out_dir) / name).string();
    };

    write_file_atomic(in_dir("entities.jsonl"),
                      embeddings_to_jsonl(world.entities));
    write_file_atomic(in_dir("prototypes.jsonl"),
                      embeddings_to_jsonl(world.prototypes));

    std::ostringstream ratings;
    ratings << "item,dimension,rating\n";
    for (const auto& row : world.ratings.rows()) {
        ratings << row.item << ',' << row.dimension << ','
                << format_double(row.rating) << '\n';
    }
    write_file_atomic(in_dir("ratings.csv"), ratings.str());

    nlohmann::json class_json = nlohmann::json::array();
    for (const auto& item : world.class_items) {
        nlohmann::json j;
        j["target"] = item.target;
        j["examples"] = item.examples;
        j["negatives"] = item.negatives;
        class_json.push_back(std::move(j));
    }
    write_file_atomic(in_dir("classification.json"),
                      class_json.dump(2) + "\n");

    nlohmann::json truth;
    truth["dim"] = config.dim;
    truth["feature_ids"] = world.feature_ids;
    truth["distractor_ids"] = world.distractor_ids;
    truth["hidden_map"] = {{"rows", world.hidden_map.rows},
                           {"cols", world.hidden_map.cols},
                           {"data", world.hidden_map.data}};
    nlohmann::json dirs = nlohmann::json::array();
    for (const auto& v : world.ideal_directions) dirs.push_back(v.values);
    truth["ideal_directions"] = std::move(dirs);
    write_file_atomic(in_dir("truth.json"), truth.dump() + "\n");

    std::printf(
        "wrote entities.jsonl prototypes.jsonl ratings.csv "
        "classification.json truth.json to %s\n",
        args.out_dir.c_str());
    return 0;
}

// --------------------------------------------------------------- gradcheck

struct GradcheckArgs {
    std::size_t dim = 8;
    std::uint64_t seed = 0;
    std::string mode = "class+rank-full";
    std::string scope = "prototypes-only";
    std::size_t entries = 64;
    double step = 1e-6;
    double tolerance = 1e-4;
};

int cmd_gradcheck(const GradcheckArgs& args) {
    ps::DeterministicRng rng(ps::derive_seed(args.seed, 424242));
    const auto random_unit = [&](std::size_t d) {
        std::vector<double> v(d);
        for (double& x : v) x = rng.gaussian();
        return ps::normalize(ps::EmbeddingVector(std::move(v)));
    };

    ps::TrainInputs data;
    for (int i = 0; i < 3; ++i) {
        ps::ClassTrainItem item;
        item.target = random_unit(args.dim);
        for (int k = 0; k < 4; ++k) item.negatives.push_back(random_unit(args.dim));
        for (int k = 0; k < 3; ++k) item.examples.push_back(random_unit(args.dim));
        data.classification.push_back(std::move(item));
    }
    for (int i = 0; i < 6; ++i) {
        ps::RankTrainItem item;
        item.e1 = random_unit(args.dim);
        item.e2 = random_unit(args.dim);
        item.f = random_unit(args.dim);
        item.y = (i % 2 == 0) ? 1.0 : -1.0;
        data.ranking.push_back(std::move(item));
    }

    ps::TrainConfig config;
    config.mode = ps::train_mode_from_string(args.mode);
    config.scope = ps::scope_from_string(args.scope);
    config.seed = args.seed;

    const ps::GradCheckReport report =
        ps::grad_check(data, config, args.entries, args.step);
    std::printf("max_rel_error=%s entries_checked=%zu\n",
                format_double(report.max_rel_error).c_str(),
                report.entries_checked);
    return report.max_rel_error <= args.tolerance ? 0 : 1;
}

// ----------------------------------------------------------------- wiring

int exit_code_for(const ps::Error& e) {
    if (dynamic_cast<const ps::ConfigError*>(&e) != nullptr ||
        dynamic_cast<const ps::InputError*>(&e) != nullptr) {
        return 2;
    }
    if (dynamic_cast<const ps::NumericalError*>(&e) != nullptr ||
        dynamic_cast<const ps::DimensionError*>(&e) != nullptr ||
        dynamic_cast<const ps::DegenerateVectorError*>(&e) != nullptr ||
        dynamic_cast<const ps::DegenerateInputError*>(&e) != nullptr) {
        return 3;
    }
    if (dynamic_cast<const ps::EmptyPairSetError*>(&e) != nullptr ||
        dynamic_cast<const ps::EmptyJoinError*>(&e) != nullptr ||
        dynamic_cast<const ps::InsufficientDataError*>(&e) != nullptr ||
        dynamic_cast<const ps::LookupError*>(&e) != nullptr) {
        return 4;
    }
    if (dynamic_cast<const ps::IoError*>(&e) != nullptr ||
        dynamic_cast<const ps::ParseError*>(&e) != nullptr ||
        dynamic_cast<const ps::SchemaError*>(&e) != nullptr ||
        dynamic_cast<const ps::ServiceError*>(&e) != nullptr ||
        dynamic_cast<const ps::ProtocolError*>(&e) != nullptr) {
        return 5;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "protospace: score, align, and evaluate entity embeddings against "
        "feature-prototype directions"};
    app.require_subcommand(1);

    EmbedArgs embed_args;
    CLI::App* embed = app.add_subcommand(
        "embed", "Fetch embeddings for a list of texts (cached by content)");
    embed->add_option("texts", embed_args.texts_file,
                      "file with one name per line")->required();
    embed->add_option("--endpoint", embed_args.endpoint,
                      "embedding service URL (or PROTOSPACE_EMBED_URL)");
    embed->add_option("--key", embed_args.api_key,
                      "bearer token (or PROTOSPACE_EMBED_KEY)");
    embed->add_option("--model", embed_args.model,
                      "model name (or PROTOSPACE_EMBED_MODEL)");
    embed->add_option("--category", embed_args.category,
                      "category prefix for verbalization");
    embed->add_flag("--eol", embed_args.eol,
                    "wrap each phrase in the one-word description prompt");
    embed->add_option("--out", embed_args.out, "output embeddings JSONL")
        ->required();
    embed->add_option("--cache", embed_args.cache,
                      "append-only shared embedding cache file");
    embed->add_option("--batch", embed_args.batch_size, "request batch size");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand(
        "train", "Train an alignment adapter from labeled data");
    train->add_option("--class", train_args.class_file,
                      "classification dataset JSON");
    train->add_option("--rank", train_args.rank_file, "ranking pairs CSV");
    train->add_option("--emb", train_args.emb_files,
                      "embeddings JSONL (repeatable; stores are merged)")
        ->required();
    train->add_option("--mode", train_args.mode,
                      "pretrained | classification | rank-perc | rank-full | "
                      "class+rank-perc | class+rank-full");
    train->add_option("--seed", train_args.seed, "training seed");
    train->add_option("--epochs", train_args.epochs, "epoch cap");
    train->add_option("--lr", train_args.lr, "learning rate");
    train->add_option("--batch", train_args.batch, "batch size");
    train->add_option("--patience", train_args.patience,
                      "early-stopping patience (epochs)");
    train->add_option("--lambda", train_args.lambda,
                      "ranking loss weight in the combined loss");
    train->add_option("--temp", train_args.temp,
                      "classification softmax temperature");
    train->add_option("--alpha", train_args.alpha, "ranking slope");
    train->add_option("--val-fraction", train_args.val_fraction,
                      "validation fraction in [0, 1)");
    train->add_option("--class-limit", train_args.class_limit,
                      "use a seeded subsample of this many items (0 = all)");
    train->add_option("--scope", train_args.scope,
                      "prototypes-only | shared");
    train->add_flag("--relax-class", train_args.relax_class,
                    "accept records with >=2 examples / >=1 negatives");
    train->add_option("--out", train_args.out, "output adapter JSON")
        ->required();
    train->add_option("--trace", train_args.trace,
                      "trace CSV path (default: <out>.trace.csv)");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand(
        "eval", "Evaluate ranking accuracy against ground-truth ratings");
    eval->add_option("--emb", eval_args.emb_files,
                     "embeddings JSONL (repeatable; stores are merged)")
        ->required();
    eval->add_option("--adapter", eval_args.adapter_file,
                     "adapter JSON (omitted: identity, noted in the report)");
    eval->add_option("--ratings", eval_args.ratings_file,
                     "ground-truth ratings CSV")->required();
    eval->add_option("--pairs", eval_args.pairs_file,
                     "fixed evaluation pairs CSV (bypasses generation)");
    eval->add_option("--min-gap", eval_args.min_gap,
                     "minimum rating gap for generated pairs");
    eval->add_option("--max-pairs", eval_args.max_pairs,
                     "cap on generated pairs per dimension");
    eval->add_option("--seed", eval_args.seed, "pair subsampling seed");
    eval->add_flag("--tie-credit", eval_args.tie_credit,
                   "credit ties 0.5 instead of counting them incorrect");
    eval->add_option("--mode", eval_args.mode, "mode label for the report");
    eval->add_option("--dataset", eval_args.dataset_name,
                     "dataset name for the report (default: ratings stem)");
    eval->add_option("--report", eval_args.report, "write report JSON here");
    eval->add_option("--scatter", eval_args.scatter,
                     "write a predicted-vs-truth scatter CSV here");
    eval->add_option("--scatter-dim", eval_args.scatter_dim,
                     "dimension for --scatter (default: first in report)");

    ProcrustesArgs proc_args;
    CLI::App* proc = app.add_subcommand(
        "procrustes",
        "Fit the least-squares orthogonal map between paired embeddings");
    proc->add_option("--prototypes", proc_args.prototypes_file,
                     "source embeddings JSONL")->required();
    proc->add_option("--targets", proc_args.targets_file,
                     "target embeddings JSONL (paired by id)")->required();
    proc->add_option("--scope", proc_args.scope, "prototypes-only | shared");
    proc->add_option("--out", proc_args.out, "output adapter JSON")
        ->required();

    RankArgs rank_args;
    CLI::App* rank = app.add_subcommand(
        "rank", "Rank all entities along one feature direction");
    rank->add_option("--emb", rank_args.emb_files,
                     "entity embeddings JSONL (repeatable)")->required();
    rank->add_option("--proto", rank_args.proto_file,
                     "prototype embeddings JSONL (default: --emb)");
    rank->add_option("--adapter", rank_args.adapter_file, "adapter JSON");
    rank->add_option("--feature-id", rank_args.feature_id,
                     "feature key in the prototype store");
    rank->add_option("--feature-text", rank_args.feature_text,
                     "feature description (exact text match)");
    rank->add_option("--seeds-high", rank_args.seeds_high,
                     "embeddings JSONL of high examples");
    rank->add_option("--seeds-low", rank_args.seeds_low,
                     "embeddings JSONL of low examples");
    rank->add_option("--out", rank_args.out, "also write item,score CSV here");

    QaArgs qa_args;
    CLI::App* qa = app.add_subcommand(
        "qa", "Pick the option whose embedding is most similar to the query");
    qa->add_option("--query", qa_args.query, "query text")->required();
    qa->add_option("--options", qa_args.options, "candidate texts")
        ->required();
    qa->add_option("--endpoint", qa_args.endpoint, "embedding service URL");
    qa->add_option("--key", qa_args.api_key, "bearer token");
    qa->add_option("--model", qa_args.model, "model name");
    qa->add_option("--cache", qa_args.cache, "embedding cache file");
    qa->add_flag("--eol", qa_args.eol,
                 "wrap texts in the one-word description prompt");

    SynthArgs synth_args;
    CLI::App* synth = app.add_subcommand(
        "synth", "Generate a synthetic benchmark world with known truth");
    synth->add_option("--config", synth_args.config_file,
                      "JSON config (defaults used when omitted)");
    synth->add_option("--out", synth_args.out_dir, "output directory")
        ->required();

    GradcheckArgs grad_args;
    CLI::App* grad = app.add_subcommand(
        "gradcheck",
        "Compare analytic training gradients against finite differences");
    grad->add_option("--dim", grad_args.dim, "embedding dimension");
    grad->add_option("--seed", grad_args.seed, "fixture seed");
    grad->add_option("--mode", grad_args.mode, "training mode to probe");
    grad->add_option("--scope", grad_args.scope,
                     "prototypes-only | shared");
    grad->add_option("--entries", grad_args.entries,
                     "matrix entries to probe");
    grad->add_option("--step", grad_args.step, "finite-difference step");
    grad->add_option("--tolerance", grad_args.tolerance,
                     "pass/fail threshold on the relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the message and usage hint
        return 2;
    }

    try {
        if (embed->parsed()) return cmd_embed(embed_args);
        if (train->parsed()) return cmd_train(train_args);
        if (eval->parsed()) return cmd_eval(eval_args);
        if (proc->parsed()) return cmd_procrustes(proc_args);
        if (rank->parsed()) return cmd_rank(rank_args);
        if (qa->parsed()) return cmd_qa(qa_args);
        if (synth->parsed()) return cmd_synth(synth_args);
        if (grad->parsed()) return cmd_gradcheck(grad_args);
    } catch (const ps::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 1;
    }
    return 1;  // unreachable: a subcommand is required
}
