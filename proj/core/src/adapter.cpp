#include "protospace/adapter.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "protospace/errors.hpp"
#include "protospace/random.hpp"
#include "protospace/sha256.hpp"

namespace protospace {

AdapterScope scope_from_string(const std::string& name) {
    if (name == "prototypes-only") return AdapterScope::PrototypesOnly;
    if (name == "shared") return AdapterScope::Shared;
    throw ConfigError("unknown adapter scope '" + name +
                      "' (expected 'prototypes-only' or 'shared')");
}

std::string to_string(AdapterScope scope) {
    return scope == AdapterScope::PrototypesOnly ? "prototypes-only"
                                                 : "shared";
}

AlignmentAdapter identity_adapter(std::size_t dim, AdapterScope scope,
                                  bool renormalize) {
    if (dim < 1) throw InputError("adapter dimension must be at least 1");
    AlignmentAdapter a;
    a.w = Matrix::identity(dim);
    a.scope = scope;
    a.renormalize = renormalize;
    return a;
}

AlignmentAdapter init_adapter(std::size_t dim, std::uint64_t seed,
                              double epsilon, AdapterScope scope,
                              bool renormalize) {
    if (dim < 1) throw InputError("adapter dimension must be at least 1");
    if (epsilon < 0.0) throw ConfigError("init epsilon must be non-negative");
    AlignmentAdapter a = identity_adapter(dim, scope, renormalize);
    DeterministicRng rng(seed);
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            a.w.at(i, j) += epsilon * rng.gaussian();
        }
    }
    return a;
}

EmbeddingVector forward(const AlignmentAdapter& adapter,
                        const EmbeddingVector& v, Side side) {
    if (side == Side::Entity && adapter.scope == AdapterScope::PrototypesOnly) {
        return v;  // untouched by design
    }
    if (v.dim() != adapter.w.cols) {
        throw DimensionError("adapter expects dimension " +
                             std::to_string(adapter.w.cols) + ", got " +
                             std::to_string(v.dim()));
    }
    EmbeddingVector mapped = apply_matrix(adapter.w, v);
    if (adapter.renormalize) return normalize(mapped);
    return mapped;
}

std::string adapter_to_json(const AlignmentAdapter& adapter) {
    nlohmann::json j;
    j["dim"] = adapter.w.rows;
    j["renormalize"] = adapter.renormalize;
    j["scope"] = to_string(adapter.scope);
    j["w"] = adapter.w.data;  // row-major
    return j.dump();
}

AlignmentAdapter adapter_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("adapter JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("dim") || !j.contains("scope") ||
        !j.contains("renormalize") || !j.contains("w")) {
        throw SchemaError(
            "adapter JSON must be an object with dim, scope, renormalize, w");
    }
    if (!j["dim"].is_number_unsigned() || j["dim"].get<std::uint64_t>() < 1) {
        throw SchemaError("adapter dim must be a positive integer");
    }
    if (!j["scope"].is_string() || !j["renormalize"].is_boolean() ||
        !j["w"].is_array()) {
        throw SchemaError("adapter fields have the wrong types");
    }
    const std::size_t dim = j["dim"].get<std::size_t>();
    AlignmentAdapter a;
    try {
        a.scope = scope_from_string(j["scope"].get<std::string>());
    } catch (const ConfigError& e) {
        throw SchemaError(e.what());
    }
    a.renormalize = j["renormalize"].get<bool>();
    if (j["w"].size() != dim * dim) {
        throw SchemaError("adapter w must hold dim*dim entries");
    }
    a.w = Matrix(dim, dim);
    for (std::size_t i = 0; i < dim * dim; ++i) {
        if (!j["w"][i].is_number()) {
            throw SchemaError("adapter w entries must be numbers");
        }
        const double x = j["w"][i].get<double>();
        if (!std::isfinite(x)) {
            throw SchemaError("adapter w entries must be finite");
        }
        a.w.data[i] = x;
    }
    return a;
}

void save_adapter(const AlignmentAdapter& adapter, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << adapter_to_json(adapter) << '\n';
    if (!out) throw IoError("failed writing '" + path + "'");
}

AlignmentAdapter load_adapter(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::stringstream buf;
    buf << in.rdbuf();
    return adapter_from_json(buf.str());
}

std::string adapter_sha256(const AlignmentAdapter& adapter) {
    return sha256_hex(adapter_to_json(adapter));
}

}  // namespace protospace
