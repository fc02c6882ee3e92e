#pragma once

#include <stdexcept>
#include <string>

namespace protospace {

// Base class for every error thrown by this library. The CLI maps subclasses
// onto distinct exit codes (see tools/), so new error types should subclass
// one of the families below rather than std::runtime_error directly.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- configuration / usage -------------------------------------------------

// Invalid option combination, unknown mode, out-of-range hyperparameter.
class ConfigError : public Error { public: using Error::Error; };

// A caller handed an operation arguments it cannot act on (empty input list,
// empty phrase, zero batches).
class InputError : public Error { public: using Error::Error; };

// --- numeric ----------------------------------------------------------------

// Shapes do not line up (vector/matrix dimensions, store dimension clashes).
class DimensionError : public Error { public: using Error::Error; };

// A vector that cannot be normalized or used as a direction (zero norm,
// non-finite entries).
class DegenerateVectorError : public Error { public: using Error::Error; };

// Iterative routine failed to converge, or a computation produced a
// non-finite value.
class NumericalError : public Error { public: using Error::Error; };

// Statistic undefined for the given input (e.g. correlation of a constant).
class DegenerateInputError : public Error { public: using Error::Error; };

// --- empty data -------------------------------------------------------------

// Too few data points for the requested operation.
class InsufficientDataError : public Error { public: using Error::Error; };

// Pair generation produced nothing to evaluate.
class EmptyPairSetError : public Error { public: using Error::Error; };

// Joining predictions with ground truth yielded an empty set.
class EmptyJoinError : public Error { public: using Error::Error; };

// An id was not present in the store it was looked up in.
class LookupError : public Error { public: using Error::Error; };

// --- I/O and external services ----------------------------------------------

// File could not be read or written.
class IoError : public Error { public: using Error::Error; };

// File content is syntactically malformed; message names the line.
class ParseError : public Error { public: using Error::Error; };

// File content parsed but violates the documented schema.
class SchemaError : public Error { public: using Error::Error; };

// Embedding service kept failing after the configured retries.
class ServiceError : public Error { public: using Error::Error; };

// Embedding service answered with something other than the wire contract.
class ProtocolError : public Error { public: using Error::Error; };

}  // namespace protospace
