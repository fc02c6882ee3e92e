#pragma once

#include <string>
#include <string_view>

namespace protospace {

// SHA-256 of the given bytes as a lowercase hex string. Used for cache keys
// and artifact fingerprints; self-contained so the core library needs no
// crypto dependency.
std::string sha256_hex(std::string_view data);

}  // namespace protospace
