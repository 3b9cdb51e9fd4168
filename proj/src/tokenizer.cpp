#include "semb/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "semb/errors.hpp"

namespace semb {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  };
  for (const unsigned char ch : text) {
    if (std::isspace(ch) != 0) {
      flush();
    } else if (ch < 0x80 && std::ispunct(ch) != 0) {
      flush();
      words.emplace_back(1, static_cast<char>(ch));
    } else {
      current.push_back(static_cast<char>(std::tolower(ch)));
    }
  }
  flush();
  return words;
}

Vocab::Vocab() {
  for (const char* t : {"[PAD]", "[UNK]", "[CLS]", "[SEP]"}) add(t);
}

void Vocab::add(std::string token) {
  const auto id = static_cast<std::int32_t>(tokens_.size());
  if (!index_.emplace(token, id).second) {
    throw InvalidArgument("vocab: duplicate token '" + token + "'");
  }
  tokens_.push_back(std::move(token));
}

Vocab Vocab::build(std::span<const std::string> corpus, std::size_t min_freq) {
  if (corpus.empty()) throw InvalidArgument("build_vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus) {
    for (auto& w : split_words(sentence)) ++counts[std::move(w)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [token, count] : counts) {
    if (count >= min_freq) ranked.emplace_back(token, count);
  }
  // counts is already lexicographic, so a stable sort keeps that tie order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab vocab;
  for (auto& [token, count] : ranked) {
    if (vocab.index_.count(token) == 0) vocab.add(token);
  }
  return vocab;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab vocab;
  for (auto& t : tokens) vocab.add(std::move(t));
  return vocab;
}

std::int32_t Vocab::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

std::vector<std::string> Vocab::regular_tokens() const {
  return {tokens_.begin() + kNumReserved, tokens_.end()};
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vocab file " + path.string());
  for (std::size_t i = kNumReserved; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read vocab file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

std::size_t TokenizedSentence::length() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

TokenizedSentence TokenizedSentence::padded_to(std::size_t len) const {
  if (len < ids.size()) {
    throw InvalidArgument("pad: target length " + std::to_string(len) +
                          " shorter than sentence of " + std::to_string(ids.size()));
  }
  TokenizedSentence out = *this;
  out.ids.resize(len, kPadId);
  out.mask.resize(len, 0);
  return out;
}

TokenizedSentence tokenize(std::string_view text, const Vocab& vocab,
                           std::size_t max_seq_len) {
  if (max_seq_len < 3) throw InvalidArgument("tokenize: max_seq_len must be >= 3");
  TokenizedSentence out;
  out.ids.push_back(kClsId);
  for (const auto& w : split_words(text)) {
    if (out.ids.size() + 1 >= max_seq_len) break;
    out.ids.push_back(vocab.id(w));
  }
  out.ids.push_back(kSepId);
  out.mask.assign(out.ids.size(), 1);
  return out;
}

std::vector<TokenizedSentence> pad_batch(std::span<const TokenizedSentence> batch) {
  std::size_t len = 0;
  for (const auto& s : batch) len = std::max(len, s.ids.size());
  std::vector<TokenizedSentence> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(s.padded_to(len));
  return out;
}

}  // namespace semb
