#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dxrag {

/// Lowercase, split on non-alphanumeric, drop empty tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Token set (order-free, duplicate-free) of tokenize().
std::set<std::string> token_set(std::string_view text);

/// Lowercase + trim + collapse internal whitespace. Punctuation kept.
/// Used for duplicate detection and phenotype-set comparison.
std::string normalize_term(std::string_view text);

/// Lowercase, map punctuation to spaces, collapse whitespace, trim.
/// Used by the disease matcher and hint detection.
std::string normalize_loose(std::string_view text);

/// Split on `delim`, trim each item, drop empties.
std::vector<std::string> split_list(std::string_view text, char delim = ',');

/// True when normalize_loose(needle) occurs as a substring of
/// normalize_loose(haystack). Empty needle never matches.
bool contains_normalized(std::string_view haystack, std::string_view needle);

std::string trim(std::string_view text);

}  // namespace dxrag
