#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lvae/vocabulary.hpp"

namespace lvae {

/// Optimal-completion query for one generated prefix against a reference.
struct OCQueryResult {
  std::vector<int> row;               // levenshtein_row(prefix, reference)
  std::vector<double> q_values;       // per vocabulary id; -inf for BOS/PAD
  std::vector<TokenId> optimal_set;   // ascending ids attaining max Q
  std::vector<double> pi;             // oracle distribution over the vocabulary
};

/// Q(a) = -(best final distance reachable after emitting a next).
/// Content tokens: -min_j row(prefix·a)[j]. EOS: -row[|reference|].
/// Throws EmptyReference.
std::vector<double> oc_q_values(std::span<const TokenId> prefix,
                                std::span<const TokenId> reference, const Vocabulary& vocab);

/// Same, starting from an already computed prefix row.
std::vector<double> oc_q_values_from_row(std::span<const int> row,
                                         std::span<const TokenId> reference,
                                         std::size_t vocab_size);

/// Optimal set from the row alone: {reference[j] : row[j] == min(row), j < |ref|},
/// plus EOS when row[|ref|] is minimal. Sorted ascending by id.
std::vector<TokenId> oc_optimal_set_from_row(std::span<const int> row,
                                             std::span<const TokenId> reference);

/// Temperature 0: uniform over the optimal set. Temperature > 0: softmax of
/// Q / temperature over legal actions.
OCQueryResult oc_policy(std::span<const TokenId> prefix, std::span<const TokenId> reference,
                        const Vocabulary& vocab, double oracle_temperature);

OCQueryResult oc_policy_from_row(std::vector<int> row, std::span<const TokenId> reference,
                                 std::size_t vocab_size, double oracle_temperature);

/// Exhaustive reference: for each content token a, minimum of
/// levenshtein(prefix·a·c, reference) over every completion c with
/// |c| <= completion_length_cap. Throws EnumerationTooLarge when the number of
/// completions exceeds `budget`.
std::vector<double> brute_force_oc(std::span<const TokenId> prefix,
                                   std::span<const TokenId> reference, const Vocabulary& vocab,
                                   int completion_length_cap,
                                   std::uint64_t budget = 20'000'000);

/// Ids attaining the maximum of a Q vector (finite entries only).
std::vector<TokenId> argmax_set(std::span<const double> q_values);

/// Figure-style table for a (generated, target) pair: the target row, the
/// generated row, and the optimal next-token sets for each generated prefix,
/// including the prefix that ends with the last generated word.
std::string format_oracle_table(const std::vector<std::string>& target,
                                const std::vector<std::string>& generated);

/// Per-step optimal sets as token strings, one per generated prefix
/// (|generated| + 1 entries).
std::vector<std::vector<std::string>> oracle_target_sets(
    const std::vector<std::string>& target, const std::vector<std::string>& generated);

}  // namespace lvae
