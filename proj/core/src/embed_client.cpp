#include "protospace/embed_client.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "protospace/errors.hpp"

namespace protospace {

using nlohmann::json;

namespace {

struct ParsedEndpoint {
    std::string base;  // scheme://host[:port]
    std::string path;  // starts with '/'
};

ParsedEndpoint parse_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("embed endpoint must include a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return ParsedEndpoint{url, "/v1/embeddings"};
    }
    return ParsedEndpoint{url.substr(0, path_start), url.substr(path_start)};
}

// One batch request with retries. Returns the parsed vectors.
std::vector<EmbeddingVector> fetch_batch(const ParsedEndpoint& ep,
                                         const EmbedServiceConfig& cfg,
                                         const std::vector<std::string>& batch) {
    json body;
    body["model"] = cfg.model;
    body["input"] = batch;
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (!cfg.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + cfg.api_key);
    }

    std::string last_failure = "no attempt made";
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0) {
            const double seconds =
                cfg.backoff_base_seconds * static_cast<double>(1 << (attempt - 1));
            std::this_thread::sleep_for(
                std::chrono::duration<double>(seconds));
        }

        httplib::Client client(ep.base);
        client.set_connection_timeout(cfg.timeout_seconds, 0);
        client.set_read_timeout(cfg.timeout_seconds, 0);
        client.set_write_timeout(cfg.timeout_seconds, 0);

        auto res = client.Post(ep.path, headers, payload, "application/json");
        if (!res) {
            last_failure = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_failure = "HTTP status " + std::to_string(res->status);
            continue;
        }

        // A 200 with a malformed body is a contract violation, not a
        // transient fault; no retry.
        const json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.is_object() ||
            !reply.contains("data") || !reply["data"].is_array()) {
            throw ProtocolError("embed service: response is not an object with "
                                "a data array");
        }
        const json& data = reply["data"];
        if (data.size() != batch.size()) {
            throw ProtocolError("embed service: sent " +
                                std::to_string(batch.size()) + " inputs, got " +
                                std::to_string(data.size()) + " embeddings");
        }

        std::vector<EmbeddingVector> out(batch.size());
        std::vector<bool> filled(batch.size(), false);
        for (std::size_t i = 0; i < data.size(); ++i) {
            const json& item = data[i];
            if (!item.is_object() || !item.contains("embedding") ||
                !item["embedding"].is_array()) {
                throw ProtocolError("embed service: data entry lacks an "
                                    "embedding array");
            }
            // Entries may carry an explicit index; fall back to position.
            std::size_t slot = i;
            if (item.contains("index") && item["index"].is_number_unsigned()) {
                slot = item["index"].get<std::size_t>();
                if (slot >= batch.size()) {
                    throw ProtocolError("embed service: index out of range");
                }
            }
            if (filled[slot]) {
                throw ProtocolError("embed service: duplicate index in reply");
            }
            EmbeddingVector v;
            v.values.reserve(item["embedding"].size());
            for (const auto& x : item["embedding"]) {
                if (!x.is_number()) {
                    throw ProtocolError("embed service: non-numeric embedding "
                                        "entry");
                }
                v.values.push_back(x.get<double>());
            }
            if (v.dim() == 0) {
                throw ProtocolError("embed service: empty embedding");
            }
            try {
                out[slot] = normalize(v);
            } catch (const DegenerateVectorError&) {
                throw ProtocolError("embed service: zero or non-finite "
                                    "embedding for input " + std::to_string(slot));
            }
            filled[slot] = true;
        }
        return out;
    }
    throw ServiceError("embed service failed after " +
                       std::to_string(cfg.max_retries + 1) + " attempts; last: " +
                       last_failure);
}

}  // namespace

EmbedServiceConfig EmbedServiceConfig::from_env() {
    EmbedServiceConfig cfg;
    if (const char* url = std::getenv("PROTOSPACE_EMBED_URL")) cfg.endpoint = url;
    if (const char* key = std::getenv("PROTOSPACE_EMBED_KEY")) cfg.api_key = key;
    if (const char* model = std::getenv("PROTOSPACE_EMBED_MODEL")) {
        cfg.model = model;
    }
    return cfg;
}

std::vector<EmbeddingVector> fetch_embeddings(
    const std::vector<std::string>& texts, const EmbedServiceConfig& config) {
    if (texts.empty()) throw InputError("fetch_embeddings: empty text list");
    if (config.endpoint.empty()) {
        throw ConfigError("fetch_embeddings: no endpoint configured (set "
                          "PROTOSPACE_EMBED_URL or pass --endpoint)");
    }
    if (config.batch_size == 0) {
        throw ConfigError("fetch_embeddings: batch_size must be >= 1");
    }
    const ParsedEndpoint ep = parse_endpoint(config.endpoint);

    // Slice into batches up front; workers claim batch indices atomically and
    // write into disjoint slots, so assembly order never depends on timing.
    std::vector<std::vector<std::string>> batches;
    for (std::size_t start = 0; start < texts.size();
         start += config.batch_size) {
        const std::size_t end =
            std::min(texts.size(), start + config.batch_size);
        batches.emplace_back(texts.begin() + start, texts.begin() + end);
    }

    std::vector<std::vector<EmbeddingVector>> results(batches.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mu;
    std::exception_ptr first_error;

    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= batches.size()) return;
            {
                std::lock_guard<std::mutex> lock(error_mu);
                if (first_error) return;  // stop claiming new work
            }
            try {
                results[i] = fetch_batch(ep, config, batches[i]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const std::size_t n_threads =
        std::max<std::size_t>(1, std::min(config.max_concurrency, batches.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    std::size_t expected_dim = 0;
    for (auto& chunk : results) {
        for (auto& v : chunk) {
            if (expected_dim == 0) {
                expected_dim = v.dim();
            } else if (v.dim() != expected_dim) {
                throw ProtocolError("embed service: inconsistent embedding "
                                    "dimensions across batches");
            }
            out.push_back(std::move(v));
        }
    }
    return out;
}

}  // namespace protospace
