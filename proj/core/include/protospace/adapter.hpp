#pragma once

#include <cstdint>
#include <string>

#include "protospace/linalg.hpp"

namespace protospace {

// Which embeddings a trained map is applied to.  PrototypesOnly leaves entity
// embeddings byte-identical and transforms prototype embeddings only; Shared
// applies the same map to both sides.
enum class AdapterScope { PrototypesOnly, Shared };

// Which side of a score a vector sits on.
enum class Side { Entity, Prototype };

struct AlignmentAdapter {
    Matrix w;
    AdapterScope scope = AdapterScope::PrototypesOnly;
    bool renormalize = true;
};

AdapterScope scope_from_string(const std::string& name);  // ConfigError
std::string to_string(AdapterScope scope);

// Identity map of the given dimension.
AlignmentAdapter identity_adapter(std::size_t dim,
                                  AdapterScope scope = AdapterScope::PrototypesOnly,
                                  bool renormalize = true);

// Near-identity start point: W = I + epsilon * G with G a seeded standard
// Gaussian matrix.  InputError for dim < 1, ConfigError for epsilon < 0.
AlignmentAdapter init_adapter(std::size_t dim, std::uint64_t seed,
                              double epsilon = 1e-3,
                              AdapterScope scope = AdapterScope::PrototypesOnly,
                              bool renormalize = true);

// Applies the adapter to one vector.  Entity-side vectors pass through
// unchanged under PrototypesOnly scope (bit-for-bit, no renormalization).
// Transformed vectors are renormalized to unit length when the adapter's
// renormalize flag is set; a transformed vector collapsing to zero raises
// DegenerateVectorError.  DimensionError on size mismatch.
EmbeddingVector forward(const AlignmentAdapter& adapter,
                        const EmbeddingVector& v, Side side);

// Canonical JSON serialization (sorted keys, round-trip exact doubles), used
// both for files and for fingerprinting.
std::string adapter_to_json(const AlignmentAdapter& adapter);
AlignmentAdapter adapter_from_json(const std::string& text);  // SchemaError/ParseError

void save_adapter(const AlignmentAdapter& adapter, const std::string& path);
AlignmentAdapter load_adapter(const std::string& path);

// SHA-256 of the canonical JSON form; stable across save/load.
std::string adapter_sha256(const AlignmentAdapter& adapter);

}  // namespace protospace
