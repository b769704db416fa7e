#include "lvae/edit_distance.hpp"

#include <algorithm>
#include <numeric>

#include "lvae/errors.hpp"

namespace lvae {

int levenshtein(std::span<const TokenId> a, std::span<const TokenId> b) {
  return levenshtein_row(a, b).back();
}

std::vector<int> levenshtein_row(std::span<const TokenId> prefix,
                                 std::span<const TokenId> reference) {
  std::vector<int> row(reference.size() + 1);
  std::iota(row.begin(), row.end(), 0);
  for (TokenId t : prefix) row = levenshtein_row_extend(row, t, reference);
  return row;
}

std::vector<int> levenshtein_row_extend(std::span<const int> row, TokenId token,
                                        std::span<const TokenId> reference) {
  std::vector<int> next(row.size());
  next[0] = row[0] + 1;
  for (std::size_t j = 1; j < row.size(); ++j) {
    const int substitute = row[j - 1] + (reference[j - 1] == token ? 0 : 1);
    next[j] = std::min({substitute, row[j] + 1, next[j - 1] + 1});
  }
  return next;
}

int hamming(std::span<const TokenId> a, std::span<const TokenId> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::UnequalLength, "hamming distance needs equal lengths (" +
                                              std::to_string(a.size()) + " vs " +
                                              std::to_string(b.size()) + ")");
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

}  // namespace lvae
