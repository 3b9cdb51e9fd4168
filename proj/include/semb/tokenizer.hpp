#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace semb {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;
inline constexpr std::int32_t kClsId = 2;
inline constexpr std::int32_t kSepId = 3;
inline constexpr std::int32_t kNumReserved = 4;

// Lowercases ASCII and splits on whitespace and punctuation boundaries;
// each punctuation character becomes its own word.
std::vector<std::string> split_words(std::string_view text);

// Token <-> id map. Ids 0..3 are [PAD] [UNK] [CLS] [SEP]; regular tokens
// follow densely from 4.
class Vocab {
 public:
  Vocab();

  // Tokens with frequency >= min_freq, ordered by descending frequency with
  // lexicographic tie-break. Throws InvalidArgument on an empty corpus.
  static Vocab build(std::span<const std::string> corpus, std::size_t min_freq);
  // `tokens` are the regular tokens in id order (id = index + 4).
  static Vocab from_tokens(std::vector<std::string> tokens);

  std::int32_t id(std::string_view token) const;
  const std::string& token(std::int32_t id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  // Regular tokens only, in id order.
  std::vector<std::string> regular_tokens() const;

  // One regular token per line; line i holds id i + 4.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

struct TokenizedSentence {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;

  std::size_t length() const;
  std::size_t padded_length() const { return ids.size(); }
  // Copy padded with [PAD]/0 to `len` positions. len must be >= length().
  TokenizedSentence padded_to(std::size_t len) const;
};

// [CLS] + words truncated to max_seq_len - 2 + [SEP].
TokenizedSentence tokenize(std::string_view text, const Vocab& vocab,
                           std::size_t max_seq_len);

// Pads every sentence to the longest member.
std::vector<TokenizedSentence> pad_batch(std::span<const TokenizedSentence> batch);

}  // namespace semb
