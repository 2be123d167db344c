#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace librarian {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Content hash of a candidate. Order-insensitive over map entries since the
/// encoding walks keys in sorted order with length prefixes.
/// Throws InvalidCandidate when `rewritten` is empty.
std::string candidate_digest(std::string_view library,
                             const std::map<std::string, std::string>& rewritten);

/// 64-bit FNV-1a, used where a cheap stable seed is needed.
std::uint64_t fnv1a64(std::string_view data) noexcept;

}  // namespace librarian
