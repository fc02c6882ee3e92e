#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "protospace/linalg.hpp"

namespace protospace {

// Connection and batching parameters for the embedding service. The wire
// format is the de-facto embeddings API: POST {"model", "input": [...]} ->
// {"data": [{"embedding": [...]}, ...]}.
struct EmbedServiceConfig {
    std::string endpoint;  // e.g. "http://localhost:8080/v1/embeddings"
    std::string api_key;   // sent as a bearer token when non-empty
    std::string model;

    std::size_t batch_size = 64;
    int max_retries = 3;                 // retries after the first attempt
    double backoff_base_seconds = 1.0;   // doubles per retry: 1s, 2s, 4s
    std::size_t max_concurrency = 4;     // batches in flight
    int timeout_seconds = 120;

    // Reads PROTOSPACE_EMBED_URL / PROTOSPACE_EMBED_KEY /
    // PROTOSPACE_EMBED_MODEL; unset variables leave fields empty.
    static EmbedServiceConfig from_env();
};

// Embeds every text, returning unit-normalized vectors in input order.
// Batches are dispatched concurrently but reassembled by index, so the
// result is independent of scheduling.
//
// Throws InputError on an empty text list, ConfigError on a missing
// endpoint, ServiceError when a batch keeps failing after the retries,
// ProtocolError when a response violates the wire contract (wrong count,
// malformed body, zero vector, inconsistent dimensions).
std::vector<EmbeddingVector> fetch_embeddings(
    const std::vector<std::string>& texts, const EmbedServiceConfig& config);

}  // namespace protospace
