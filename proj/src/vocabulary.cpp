#include "lvae/vocabulary.hpp"

#include <cctype>

#include "lvae/errors.hpp"

namespace lvae {

Vocabulary::Vocabulary() {
  for (auto t : {kBosToken, kEosToken, kPadToken}) {
    index_.emplace(std::string(t), static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(t);
  }
}

Vocabulary::Vocabulary(const std::vector<std::string>& content_tokens) : Vocabulary() {
  for (const auto& t : content_tokens) {
    if (index_.count(t)) throw Error(ErrorCode::ConfigInvalid, "duplicate or reserved token '" + t + "'");
    add(t);
  }
}

TokenId Vocabulary::add(std::string_view token) {
  if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
  auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(std::string(token), id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
  return std::nullopt;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw Error(ErrorCode::ShapeMismatch, "token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::content_tokens() const {
  return {tokens_.begin() + kFirstContent, tokens_.end()};
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const auto& t : tokens_) {
    for (unsigned char c : t) mix(c);
    mix(0xff);
  }
  return h;
}

TokenSequence Vocabulary::encode(std::span<const std::string> words) const {
  TokenSequence out;
  out.reserve(words.size());
  const auto unk = find(kUnkToken);
  for (const auto& w : words) {
    auto id = find(w);
    if (id && is_content(*id)) {
      out.push_back(*id);
    } else if (unk) {
      out.push_back(*unk);
    } else {
      throw Error(ErrorCode::IoError, "token '" + w + "' is not in the vocabulary");
    }
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace lvae
