#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "semb/graph.hpp"
#include "semb/tokenizer.hpp"

namespace semb {

struct EncoderConfig {
  std::size_t vocab_size = kNumReserved;
  std::size_t max_seq_len = 64;
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 256;
  double dropout_rate = 0.1;
  std::uint64_t seed = 42;

  // Throws InvalidArgument naming every invalid field.
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

enum class EncoderMode { kTrain, kInfer };

template <typename T>
struct EncoderLayer {
  BasicTensor<T> q_weight, q_bias, k_weight, k_bias, v_weight, v_bias;
  BasicTensor<T> out_weight, out_bias;
  BasicTensor<T> attn_norm_scale, attn_norm_shift;
  BasicTensor<T> ffn_in_weight, ffn_in_bias, ffn_out_weight, ffn_out_bias;
  BasicTensor<T> ffn_norm_scale, ffn_norm_shift;
};

template <typename TensorT>
struct NamedTensor {
  std::string name;
  TensorT* tensor;
};

// Post-norm transformer encoder with learned positions (BERT layout).
template <typename T>
class Encoder {
 public:
  EncoderConfig config;
  EncoderMode mode = EncoderMode::kInfer;

  BasicTensor<T> token_embedding;     // [vocab_size x n]
  BasicTensor<T> position_embedding;  // [max_seq_len x n]
  BasicTensor<T> embed_norm_scale, embed_norm_shift;
  std::vector<EncoderLayer<T>> layers;

  // Stable order; names are used as checkpoint keys.
  std::vector<NamedTensor<BasicTensor<T>>> parameters();
  std::vector<NamedTensor<const BasicTensor<T>>> parameters() const;

  void set_trainable(bool trainable);
  std::size_t parameter_count() const;

  template <typename U>
  Encoder<U> cast() const;
};

// Weights ~ N(0, 0.02^2) from config.seed, layer-norm scale 1 / shift 0.
template <typename T = float>
Encoder<T> init_encoder(const EncoderConfig& config);

// Token outputs [B x L x n] for a batch padded to a common length L.
// Parameters are bound through Graph::parameter so they receive gradients
// when marked trainable. Dropout is active only in train mode with g.rng set.
template <typename T>
Var<T> encode_batch(Graph<T>& g, Encoder<T>& encoder,
                    std::span<const TokenizedSentence> batch);

// Inference-only forward on a const encoder.
template <typename T>
Var<T> encode_batch(Graph<T>& g, const Encoder<T>& encoder,
                    std::span<const TokenizedSentence> batch);

// Word-vector baseline: mean of the vectors of in-vocabulary words.
class StaticEncoder {
 public:
  StaticEncoder() = default;
  explicit StaticEncoder(std::size_t dim) : dim_(dim) {}

  // GloVe text format: `word v1 ... vd` per line, no header.
  static StaticEncoder load(std::istream& in);
  static StaticEncoder load(const std::filesystem::path& path);

  void add(std::string word, std::vector<float> vector);
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return index_.size(); }
  bool contains(std::string_view word) const;

  // Zero vector when no word is known.
  std::vector<float> embed(std::string_view text) const;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<float> vectors_;
};

}  // namespace semb
