#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semb/embedding.hpp"
#include "semb/encoder.hpp"
#include "semb/objectives.hpp"
#include "semb/pooling.hpp"
#include "semb/tokenizer.hpp"

namespace semb {

// Everything needed to turn text into a sentence embedding, plus the
// training metadata carried in a checkpoint.
struct SentenceModel {
  Encoder<float> encoder;
  Vocab vocab;
  PoolingStrategy pooling = PoolingStrategy::kMean;
  bool pool_special_tokens = true;

  Objective objective = Objective::kRegression;
  std::optional<ClassifierHead<float>> head;
  std::uint64_t train_steps = 0;

  std::size_t dim() const { return encoder.config.hidden_dim; }
  TokenizedSentence tokenize(std::string_view text) const {
    return semb::tokenize(text, vocab, encoder.config.max_seq_len);
  }
};

// Fresh model: vocab from `corpus`, encoder initialised from `config`
// (vocab_size is overwritten with the vocab size).
SentenceModel make_model(std::span<const std::string> corpus, std::size_t min_freq,
                         EncoderConfig config, PoolingStrategy pooling);

struct EncodeStats {
  std::size_t sentences = 0;
  std::size_t batches = 0;
  std::size_t padded_tokens = 0;  // sum over batches of size x padded length
};

// Infer-mode embeddings; row i embeds texts[i] whatever the batching.
EmbeddingMatrix embed_tokenized(const SentenceModel& model,
                                std::span<const TokenizedSentence> sentences,
                                std::size_t batch_size, bool smart,
                                EncodeStats* stats = nullptr);
EmbeddingMatrix embed_texts(const SentenceModel& model, std::span<const std::string> texts,
                            std::size_t batch_size, bool smart,
                            EncodeStats* stats = nullptr);

class ModelEmbedder : public SentenceEmbedder {
 public:
  explicit ModelEmbedder(const SentenceModel& model, std::size_t batch_size = 32,
                         bool smart = true)
      : model_(model), batch_size_(batch_size), smart_(smart) {}
  std::size_t dim() const override { return model_.dim(); }
  EmbeddingMatrix embed(std::span<const std::string> texts) const override {
    return embed_texts(model_, texts, batch_size_, smart_);
  }

 private:
  const SentenceModel& model_;
  std::size_t batch_size_;
  bool smart_;
};

class StaticEmbedder : public SentenceEmbedder {
 public:
  explicit StaticEmbedder(const StaticEncoder& encoder) : encoder_(encoder) {}
  std::size_t dim() const override { return encoder_.dim(); }
  EmbeddingMatrix embed(std::span<const std::string> texts) const override;

 private:
  const StaticEncoder& encoder_;
};

}  // namespace semb
