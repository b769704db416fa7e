#pragma once

#include <span>
#include <vector>

#include "lvae/vocabulary.hpp"

namespace lvae {

/// Unit-cost insert/delete/substitute distance over token ids.
int levenshtein(std::span<const TokenId> a, std::span<const TokenId> b);

/// Entry j is levenshtein(prefix, reference[0..j)); length |reference|+1.
std::vector<int> levenshtein_row(std::span<const TokenId> prefix,
                                 std::span<const TokenId> reference);

/// Row for prefix·token given the row for prefix. O(|reference|).
std::vector<int> levenshtein_row_extend(std::span<const int> row, TokenId token,
                                        std::span<const TokenId> reference);

/// Number of mismatching positions. Throws UnequalLength.
int hamming(std::span<const TokenId> a, std::span<const TokenId> b);

}  // namespace lvae
