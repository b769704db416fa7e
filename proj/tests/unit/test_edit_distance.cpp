#include <random>

#include "doctest.h"
#include "lvae/edit_distance.hpp"
#include "lvae/errors.hpp"

using namespace lvae;

namespace {

// Plain recursion over the three edit operations; exponential, fine for short inputs.
int naive_distance(std::span<const TokenId> a, std::span<const TokenId> b) {
  if (a.empty()) return static_cast<int>(b.size());
  if (b.empty()) return static_cast<int>(a.size());
  const int sub = naive_distance(a.subspan(1), b.subspan(1)) + (a[0] != b[0] ? 1 : 0);
  const int del = naive_distance(a.subspan(1), b) + 1;
  const int ins = naive_distance(a, b.subspan(1)) + 1;
  return std::min({sub, del, ins});
}

TokenSequence random_sequence(std::mt19937_64& gen, int max_len, int alphabet) {
  std::uniform_int_distribution<int> len(0, max_len);
  std::uniform_int_distribution<int> tok(3, 3 + alphabet - 1);
  TokenSequence s(static_cast<std::size_t>(len(gen)));
  for (auto& t : s) t = tok(gen);
  return s;
}

}  // namespace

TEST_CASE("levenshtein textbook values") {
  const TokenSequence kitten{3, 4, 5, 5, 6, 7};   // k i t t e n
  const TokenSequence sitting{8, 4, 5, 5, 4, 7, 9};  // s i t t i n g
  CHECK(levenshtein(kitten, sitting) == 3);
  CHECK(levenshtein(TokenSequence{}, TokenSequence{3, 4}) == 2);
  CHECK(levenshtein(TokenSequence{3, 4}, TokenSequence{3, 4}) == 0);
}

TEST_CASE("levenshtein agrees with the recursive definition") {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 400; ++i) {
    const auto a = random_sequence(gen, 6, 3);
    const auto b = random_sequence(gen, 6, 3);
    REQUIRE(levenshtein(a, b) == naive_distance(a, b));
  }
}

TEST_CASE("metric properties") {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 300; ++i) {
    const auto a = random_sequence(gen, 7, 4);
    const auto b = random_sequence(gen, 7, 4);
    const auto c = random_sequence(gen, 7, 4);
    CHECK(levenshtein(a, b) == levenshtein(b, a));
    CHECK(levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c));
    CHECK((levenshtein(a, b) == 0) == (a == b));
    const int len_gap = std::abs(static_cast<int>(a.size()) - static_cast<int>(b.size()));
    CHECK(levenshtein(a, b) >= len_gap);
    CHECK(levenshtein(a, b) <= static_cast<int>(std::max(a.size(), b.size())));
  }
}

TEST_CASE("prefix rows") {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 200; ++i) {
    const auto p = random_sequence(gen, 5, 3);
    const auto r = random_sequence(gen, 5, 3);
    const auto row = levenshtein_row(p, r);
    REQUIRE(row.size() == r.size() + 1);
    for (std::size_t j = 0; j <= r.size(); ++j)
      CHECK(row[j] == levenshtein(p, std::span<const TokenId>(r).first(j)));

    // extending one token at a time reproduces the full row
    auto inc = levenshtein_row({}, r);
    for (std::size_t j = 0; j < p.size(); ++j) inc = levenshtein_row_extend(inc, p[j], r);
    CHECK(inc == row);
  }
  SUBCASE("empty prefix row is 0..|r|") {
    const TokenSequence r{3, 4, 5};
    CHECK(levenshtein_row({}, r) == std::vector<int>{0, 1, 2, 3});
  }
}

TEST_CASE("hamming") {
  CHECK(hamming(TokenSequence{3, 4, 5}, TokenSequence{3, 5, 5}) == 1);
  CHECK(hamming(TokenSequence{}, TokenSequence{}) == 0);
  CHECK_THROWS_AS(hamming(TokenSequence{3}, TokenSequence{3, 4}), Error);
  try {
    hamming(TokenSequence{3}, TokenSequence{});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnequalLength);
  }
  std::mt19937_64 gen(5);
  for (int i = 0; i < 100; ++i) {
    auto a = random_sequence(gen, 6, 3);
    auto b = a;
    for (auto& t : b)
      if (gen() % 2) t = 3 + static_cast<TokenId>(gen() % 3);
    CHECK(levenshtein(a, b) <= hamming(a, b));
  }
}
