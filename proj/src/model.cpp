#include "semb/model.hpp"

#include "semb/batching.hpp"

namespace semb {

SentenceModel make_model(std::span<const std::string> corpus, std::size_t min_freq,
                         EncoderConfig config, PoolingStrategy pooling) {
  SentenceModel model;
  model.vocab = Vocab::build(corpus, min_freq);
  config.vocab_size = model.vocab.size();
  model.encoder = init_encoder<float>(config);
  model.pooling = pooling;
  return model;
}

EmbeddingMatrix embed_tokenized(const SentenceModel& model,
                                std::span<const TokenizedSentence> sentences,
                                std::size_t batch_size, bool smart, EncodeStats* stats) {
  EmbeddingMatrix out(sentences.size(), model.dim());
  if (sentences.empty()) {
    if (stats != nullptr) *stats = {};
    return out;
  }
  std::vector<std::size_t> lengths;
  lengths.reserve(sentences.size());
  for (const auto& s : sentences) lengths.push_back(s.ids.size());
  const auto batches = smart ? smart_batches(lengths, batch_size, 0, false)
                             : plain_batches(sentences.size(), batch_size);
  for (const auto& batch : batches) {
    std::vector<TokenizedSentence> members;
    members.reserve(batch.size());
    for (std::size_t i : batch) members.push_back(sentences[i]);
    const auto padded = pad_batch(members);
    Graph<float> g;
    Var<float> tokens = encode_batch(g, std::as_const(model.encoder), padded);
    Var<float> pooled =
        pool(tokens, pooling_mask(padded, model.pool_special_tokens), model.pooling);
    const auto& pv = pooled.value();
    for (std::size_t r = 0; r < batch.size(); ++r) {
      std::copy_n(pv.data().data() + r * model.dim(), model.dim(),
                  out.row(batch[r]).data());
    }
  }
  if (stats != nullptr) {
    stats->sentences = sentences.size();
    stats->batches = batches.size();
    stats->padded_tokens = padded_token_count(lengths, batches);
  }
  return out;
}

EmbeddingMatrix embed_texts(const SentenceModel& model, std::span<const std::string> texts,
                            std::size_t batch_size, bool smart, EncodeStats* stats) {
  std::vector<TokenizedSentence> tokenized;
  tokenized.reserve(texts.size());
  for (const auto& t : texts) tokenized.push_back(model.tokenize(t));
  return embed_tokenized(model, tokenized, batch_size, smart, stats);
}

EmbeddingMatrix StaticEmbedder::embed(std::span<const std::string> texts) const {
  EmbeddingMatrix out(texts.size(), encoder_.dim());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto v = encoder_.embed(texts[i]);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace semb
