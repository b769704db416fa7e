#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lvae {

using TokenId = std::int32_t;

/// Content token ids only. BOS is implicit at the start and EOS is the
/// implicit terminator; neither is ever stored inside a sequence.
using TokenSequence = std::vector<TokenId>;

class Vocabulary {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kPad = 2;
  static constexpr TokenId kFirstContent = 3;

  static constexpr std::string_view kBosToken = "<s>";
  static constexpr std::string_view kEosToken = "</s>";
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  /// Throws ConfigInvalid on duplicates or on reserved strings.
  explicit Vocabulary(const std::vector<std::string>& content_tokens);

  /// Returns the id of `token`, adding it if absent.
  TokenId add(std::string_view token);

  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const;

  std::size_t size() const { return tokens_.size(); }
  std::size_t content_size() const { return tokens_.size() - kFirstContent; }
  bool is_content(TokenId id) const {
    return id >= kFirstContent && static_cast<std::size_t>(id) < tokens_.size();
  }
  /// Legal generator actions: every content token plus EOS.
  static bool is_legal_action(TokenId id) { return id != kBos && id != kPad; }

  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<std::string> content_tokens() const;

  /// FNV-1a over the ordered token strings.
  std::uint64_t hash() const;

  /// Maps words to ids; unknown words go to <unk> if present, else throw.
  TokenSequence encode(std::span<const std::string> words) const;
  std::string decode(std::span<const TokenId> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

std::vector<std::string> split_whitespace(std::string_view line);

}  // namespace lvae
