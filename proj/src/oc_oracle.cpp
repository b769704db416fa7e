#include "lvae/oc_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lvae/edit_distance.hpp"
#include "lvae/errors.hpp"

namespace lvae {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_reference(std::span<const TokenId> reference) {
  if (reference.empty()) throw Error(ErrorCode::EmptyReference, "oracle needs a nonempty reference");
}

}  // namespace

std::vector<double> oc_q_values_from_row(std::span<const int> row,
                                         std::span<const TokenId> reference,
                                         std::size_t vocab_size) {
  require_reference(reference);
  std::vector<double> q(vocab_size, kNegInf);
  q[Vocabulary::kEos] = -static_cast<double>(row.back());
  for (std::size_t a = Vocabulary::kFirstContent; a < vocab_size; ++a) {
    const auto next = levenshtein_row_extend(row, static_cast<TokenId>(a), reference);
    q[a] = -static_cast<double>(*std::min_element(next.begin(), next.end()));
  }
  return q;
}

std::vector<double> oc_q_values(std::span<const TokenId> prefix,
                                std::span<const TokenId> reference, const Vocabulary& vocab) {
  require_reference(reference);
  return oc_q_values_from_row(levenshtein_row(prefix, reference), reference, vocab.size());
}

std::vector<TokenId> oc_optimal_set_from_row(std::span<const int> row,
                                             std::span<const TokenId> reference) {
  require_reference(reference);
  const int best = *std::min_element(row.begin(), row.end());
  std::vector<TokenId> out;
  for (std::size_t j = 0; j < reference.size(); ++j)
    if (row[j] == best) out.push_back(reference[j]);
  if (row.back() == best) out.push_back(Vocabulary::kEos);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<TokenId> argmax_set(std::span<const double> q_values) {
  double best = kNegInf;
  for (double q : q_values) best = std::max(best, q);
  std::vector<TokenId> out;
  if (best == kNegInf) return out;
  for (std::size_t a = 0; a < q_values.size(); ++a)
    if (q_values[a] == best) out.push_back(static_cast<TokenId>(a));
  return out;
}

OCQueryResult oc_policy_from_row(std::vector<int> row, std::span<const TokenId> reference,
                                 std::size_t vocab_size, double oracle_temperature) {
  if (!(oracle_temperature >= 0.0))
    throw Error(ErrorCode::ConfigInvalid, "oracle temperature must be nonnegative");
  OCQueryResult r;
  r.q_values = oc_q_values_from_row(row, reference, vocab_size);
  r.row = std::move(row);
  r.optimal_set = argmax_set(r.q_values);
  r.pi.assign(vocab_size, 0.0);
  if (oracle_temperature == 0.0) {
    const double p = 1.0 / static_cast<double>(r.optimal_set.size());
    for (TokenId a : r.optimal_set) r.pi[static_cast<std::size_t>(a)] = p;
  } else {
    const double best = r.q_values[static_cast<std::size_t>(r.optimal_set.front())];
    double total = 0.0;
    for (std::size_t a = 0; a < vocab_size; ++a) {
      if (r.q_values[a] == kNegInf) continue;
      r.pi[a] = std::exp((r.q_values[a] - best) / oracle_temperature);
      total += r.pi[a];
    }
    for (double& p : r.pi) p /= total;
  }
  return r;
}

OCQueryResult oc_policy(std::span<const TokenId> prefix, std::span<const TokenId> reference,
                        const Vocabulary& vocab, double oracle_temperature) {
  require_reference(reference);
  return oc_policy_from_row(levenshtein_row(prefix, reference), reference, vocab.size(),
                            oracle_temperature);
}

std::vector<double> brute_force_oc(std::span<const TokenId> prefix,
                                   std::span<const TokenId> reference, const Vocabulary& vocab,
                                   int completion_length_cap, std::uint64_t budget) {
  require_reference(reference);
  const std::size_t n_content = vocab.content_size();
  std::uint64_t completions = 0, layer = 1;
  for (int len = 0; len <= completion_length_cap; ++len) {
    completions += layer;
    if (completions * n_content > budget)
      throw Error(ErrorCode::EnumerationTooLarge,
                  "brute-force oracle would enumerate more than " + std::to_string(budget) +
                      " completions");
    layer *= n_content;
  }

  std::vector<double> q(vocab.size(), kNegInf);
  q[Vocabulary::kEos] = -static_cast<double>(levenshtein(prefix, reference));

  TokenSequence buffer(prefix.begin(), prefix.end());
  const std::size_t base = buffer.size() + 1;
  for (std::size_t a = Vocabulary::kFirstContent; a < vocab.size(); ++a) {
    buffer.resize(base);
    buffer[base - 1] = static_cast<TokenId>(a);
    int best = levenshtein(buffer, reference);
    // Odometer over completions of every length up to the cap.
    for (int len = 1; len <= completion_length_cap; ++len) {
      buffer.assign(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(base));
      buffer.resize(base + static_cast<std::size_t>(len), Vocabulary::kFirstContent);
      while (true) {
        best = std::min(best, levenshtein(buffer, reference));
        std::size_t pos = buffer.size();
        while (pos > base) {
          --pos;
          if (static_cast<std::size_t>(++buffer[pos]) < vocab.size()) break;
          buffer[pos] = Vocabulary::kFirstContent;
          if (pos == base) {
            pos = 0;
            break;
          }
        }
        if (pos == 0) break;
      }
    }
    q[a] = -static_cast<double>(best);
  }
  return q;
}

std::vector<std::vector<std::string>> oracle_target_sets(
    const std::vector<std::string>& target, const std::vector<std::string>& generated) {
  Vocabulary vocab;
  for (const auto& w : target) vocab.add(w);
  for (const auto& w : generated) vocab.add(w);
  const auto ref = vocab.encode(target);
  const auto gen = vocab.encode(generated);
  std::vector<std::vector<std::string>> out;
  auto row = levenshtein_row({}, ref);
  for (std::size_t t = 0; t <= gen.size(); ++t) {
    auto q = oc_q_values_from_row(row, ref, vocab.size());
    auto best = argmax_set(q);
    // Present content words in reference order, EOS last.
    std::vector<std::string> words;
    for (TokenId r : ref) {
      if (std::find(best.begin(), best.end(), r) != best.end() &&
          std::find(words.begin(), words.end(), vocab.token(r)) == words.end())
        words.push_back(vocab.token(r));
    }
    for (TokenId b : best)
      if (b != Vocabulary::kEos && std::find(ref.begin(), ref.end(), b) == ref.end())
        words.push_back(vocab.token(b));
    if (std::find(best.begin(), best.end(), Vocabulary::kEos) != best.end())
      words.emplace_back(Vocabulary::kEosToken);
    out.push_back(std::move(words));
    if (t < gen.size()) row = levenshtein_row_extend(row, gen[t], ref);
  }
  return out;
}

std::string format_oracle_table(const std::vector<std::string>& target,
                                const std::vector<std::string>& generated) {
  const auto sets = oracle_target_sets(target, generated);
  auto cells = [](std::string_view label, const std::vector<std::string>& words) {
    std::vector<std::string> row{std::string(label), std::string(Vocabulary::kBosToken)};
    row.insert(row.end(), words.begin(), words.end());
    row.emplace_back(Vocabulary::kEosToken);
    return row;
  };
  std::vector<std::vector<std::string>> rows{cells("Target", target), cells("Generated", generated)};
  std::vector<std::string> oc{"OC targets"};
  for (const auto& s : sets) {
    std::string cell = "{";
    for (std::size_t i = 0; i < s.size(); ++i) cell += (i ? "," : "") + s[i];
    oc.push_back(cell + "}");
  }
  rows.push_back(std::move(oc));

  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], r[c].size());
    }
  std::ostringstream os;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      os << r[c];
      if (c + 1 < r.size()) os << std::string(width[c] - r[c].size() + 2, ' ');
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace lvae
