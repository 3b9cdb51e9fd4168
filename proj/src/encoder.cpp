#include "semb/encoder.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace semb {

void EncoderConfig::validate() const {
  std::vector<std::string> problems;
  if (vocab_size < static_cast<std::size_t>(kNumReserved)) {
    problems.push_back("vocab_size must be >= 4");
  }
  if (max_seq_len < 3) problems.push_back("max_seq_len must be >= 3");
  if (hidden_dim == 0) problems.push_back("hidden_dim must be positive");
  if (num_layers == 0) problems.push_back("num_layers must be positive");
  if (num_heads == 0) {
    problems.push_back("num_heads must be positive");
  } else if (hidden_dim % num_heads != 0) {
    problems.push_back("hidden_dim (" + std::to_string(hidden_dim) +
                       ") must be divisible by num_heads (" +
                       std::to_string(num_heads) + ")");
  }
  if (ffn_dim == 0) problems.push_back("ffn_dim must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    problems.push_back("dropout_rate must be in [0, 1)");
  }
  if (!problems.empty()) {
    std::string msg = "invalid encoder config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw InvalidArgument(msg);
  }
}

namespace {

template <typename Self, typename Fn>
void visit_parameters(Self& enc, Fn&& fn) {
  fn("embeddings.token", enc.token_embedding);
  fn("embeddings.position", enc.position_embedding);
  fn("embeddings.norm.scale", enc.embed_norm_scale);
  fn("embeddings.norm.shift", enc.embed_norm_shift);
  for (std::size_t i = 0; i < enc.layers.size(); ++i) {
    auto& l = enc.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    fn(p + "attn.q.weight", l.q_weight);
    fn(p + "attn.q.bias", l.q_bias);
    fn(p + "attn.k.weight", l.k_weight);
    fn(p + "attn.k.bias", l.k_bias);
    fn(p + "attn.v.weight", l.v_weight);
    fn(p + "attn.v.bias", l.v_bias);
    fn(p + "attn.out.weight", l.out_weight);
    fn(p + "attn.out.bias", l.out_bias);
    fn(p + "attn.norm.scale", l.attn_norm_scale);
    fn(p + "attn.norm.shift", l.attn_norm_shift);
    fn(p + "ffn.in.weight", l.ffn_in_weight);
    fn(p + "ffn.in.bias", l.ffn_in_bias);
    fn(p + "ffn.out.weight", l.ffn_out_weight);
    fn(p + "ffn.out.bias", l.ffn_out_bias);
    fn(p + "ffn.norm.scale", l.ffn_norm_scale);
    fn(p + "ffn.norm.shift", l.ffn_norm_shift);
  }
}

template <typename T, typename Enc, typename Bind>
Var<T> forward(Graph<T>&, Enc& enc, std::span<const TokenizedSentence> batch,
               double rate, Bind&& bind) {
  const EncoderConfig& cfg = enc.config;
  if (batch.empty()) throw InvalidArgument("encode_batch: empty batch");
  const std::size_t len = batch[0].ids.size();
  if (len == 0 || len > cfg.max_seq_len) {
    throw InvalidArgument("encode_batch: padded length " + std::to_string(len) +
                          " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  const std::size_t b = batch.size(), n = cfg.hidden_dim, heads = cfg.num_heads;
  const std::size_t head_dim = n / heads;

  std::vector<std::int32_t> ids, positions;
  ids.reserve(b * len);
  positions.reserve(b * len);
  for (const auto& s : batch) {
    if (s.ids.size() != len || s.mask.size() != len) {
      throw DimensionError("encode_batch: sentences must be padded to a common length");
    }
    for (std::size_t l = 0; l < len; ++l) {
      ids.push_back(s.ids[l]);
      positions.push_back(static_cast<std::int32_t>(l));
    }
  }
  // keep[(b*h + head), i, j] = mask of key j in sentence b
  std::vector<std::uint8_t> keep(b * heads * len * len);
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t hh = 0; hh < heads; ++hh) {
      for (std::size_t i = 0; i < len; ++i) {
        std::copy(batch[s].mask.begin(), batch[s].mask.end(),
                  keep.begin() + static_cast<std::ptrdiff_t>(((s * heads + hh) * len + i) * len));
      }
    }
  }

  const T attn_scale = static_cast<T>(1.0 / std::sqrt(double(head_dim)));

  Var<T> x = add(embedding(bind(enc.token_embedding), ids),
                 embedding(bind(enc.position_embedding), positions));
  x = layer_norm(x, bind(enc.embed_norm_scale), bind(enc.embed_norm_shift));
  x = dropout(x, rate);

  for (auto& layer : enc.layers) {
    Var<T> q = linear(x, bind(layer.q_weight), bind(layer.q_bias));
    Var<T> k = linear(x, bind(layer.k_weight), bind(layer.k_bias));
    Var<T> v = linear(x, bind(layer.v_weight), bind(layer.v_bias));
    Var<T> scores = scale(bmm(split_heads(q, b, len, heads),
                              split_heads(k, b, len, heads), true),
                          attn_scale);
    scores = masked_fill(scores, keep, T(-1e9));
    Var<T> attn = dropout(softmax(scores), rate);
    Var<T> ctx = merge_heads(bmm(attn, split_heads(v, b, len, heads)), b, heads);
    Var<T> attn_out = dropout(linear(ctx, bind(layer.out_weight), bind(layer.out_bias)), rate);
    x = layer_norm(add(x, attn_out), bind(layer.attn_norm_scale), bind(layer.attn_norm_shift));

    Var<T> hidden = gelu(linear(x, bind(layer.ffn_in_weight), bind(layer.ffn_in_bias)));
    Var<T> ffn_out = dropout(linear(hidden, bind(layer.ffn_out_weight), bind(layer.ffn_out_bias)), rate);
    x = layer_norm(add(x, ffn_out), bind(layer.ffn_norm_scale), bind(layer.ffn_norm_shift));
  }
  return reshape(x, {b, len, n});
}

}  // namespace

template <typename T>
std::vector<NamedTensor<BasicTensor<T>>> Encoder<T>::parameters() {
  std::vector<NamedTensor<BasicTensor<T>>> out;
  visit_parameters(*this, [&](std::string name, BasicTensor<T>& t) {
    out.push_back({std::move(name), &t});
  });
  return out;
}

template <typename T>
std::vector<NamedTensor<const BasicTensor<T>>> Encoder<T>::parameters() const {
  std::vector<NamedTensor<const BasicTensor<T>>> out;
  visit_parameters(*this, [&](std::string name, const BasicTensor<T>& t) {
    out.push_back({std::move(name), &t});
  });
  return out;
}

template <typename T>
void Encoder<T>::set_trainable(bool trainable) {
  for (auto& p : parameters()) p.tensor->set_requires_grad(trainable);
}

template <typename T>
std::size_t Encoder<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor->numel();
  return total;
}

template <typename T>
template <typename U>
Encoder<U> Encoder<T>::cast() const {
  Encoder<U> out;
  out.config = config;
  out.mode = mode;
  out.layers.resize(layers.size());
  auto src = parameters();
  auto dst = out.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].tensor = src[i].tensor->template cast<U>();
  return out;
}

template <typename T>
Encoder<T> init_encoder(const EncoderConfig& config) {
  config.validate();
  const std::size_t n = config.hidden_dim, f = config.ffn_dim;
  Encoder<T> enc;
  enc.config = config;
  enc.layers.resize(config.num_layers);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  auto random = [&](Shape shape) {
    BasicTensor<T> t(std::move(shape));
    for (T& v : t.data()) v = static_cast<T>(normal(rng));
    return t;
  };
  auto zeros = [](std::size_t d) { return BasicTensor<T>({d}, T{0}); };
  auto ones = [](std::size_t d) { return BasicTensor<T>({d}, T{1}); };

  enc.token_embedding = random({config.vocab_size, n});
  enc.position_embedding = random({config.max_seq_len, n});
  enc.embed_norm_scale = ones(n);
  enc.embed_norm_shift = zeros(n);
  for (auto& l : enc.layers) {
    l.q_weight = random({n, n});
    l.q_bias = zeros(n);
    l.k_weight = random({n, n});
    l.k_bias = zeros(n);
    l.v_weight = random({n, n});
    l.v_bias = zeros(n);
    l.out_weight = random({n, n});
    l.out_bias = zeros(n);
    l.attn_norm_scale = ones(n);
    l.attn_norm_shift = zeros(n);
    l.ffn_in_weight = random({n, f});
    l.ffn_in_bias = zeros(f);
    l.ffn_out_weight = random({f, n});
    l.ffn_out_bias = zeros(n);
    l.ffn_norm_scale = ones(n);
    l.ffn_norm_shift = zeros(n);
  }
  return enc;
}

template <typename T>
Var<T> encode_batch(Graph<T>& g, Encoder<T>& encoder,
                    std::span<const TokenizedSentence> batch) {
  const double rate =
      encoder.mode == EncoderMode::kTrain ? encoder.config.dropout_rate : 0.0;
  return forward(g, encoder, batch, rate,
                 [&](BasicTensor<T>& t) { return g.parameter(t); });
}

template <typename T>
Var<T> encode_batch(Graph<T>& g, const Encoder<T>& encoder,
                    std::span<const TokenizedSentence> batch) {
  return forward(g, encoder, batch, 0.0,
                 [&](const BasicTensor<T>& t) { return g.constant_ref(t); });
}

template class Encoder<float>;
template class Encoder<double>;
template Encoder<double> Encoder<float>::cast<double>() const;
template Encoder<float> Encoder<double>::cast<float>() const;
template Encoder<float> init_encoder<float>(const EncoderConfig&);
template Encoder<double> init_encoder<double>(const EncoderConfig&);
template Var<float> encode_batch(Graph<float>&, Encoder<float>&, std::span<const TokenizedSentence>);
template Var<double> encode_batch(Graph<double>&, Encoder<double>&, std::span<const TokenizedSentence>);
template Var<float> encode_batch(Graph<float>&, const Encoder<float>&, std::span<const TokenizedSentence>);
template Var<double> encode_batch(Graph<double>&, const Encoder<double>&, std::span<const TokenizedSentence>);

// ---- StaticEncoder --------------------------------------------------------

void StaticEncoder::add(std::string word, std::vector<float> vector) {
  if (dim_ == 0) dim_ = vector.size();
  if (vector.size() != dim_ || dim_ == 0) {
    throw DimensionError("static embeddings: vector for '" + word + "' has dimension " +
                         std::to_string(vector.size()) + ", expected " +
                         std::to_string(dim_));
  }
  if (index_.count(word) != 0) return;  // first occurrence wins
  index_.emplace(std::move(word), vectors_.size() / dim_);
  vectors_.insert(vectors_.end(), vector.begin(), vector.end());
}

StaticEncoder StaticEncoder::load(std::istream& in) {
  StaticEncoder enc;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string word;
    fields >> word;
    std::vector<float> vec;
    std::string tok;
    while (fields >> tok) {
      try {
        vec.push_back(std::stof(tok));
      } catch (const std::exception&) {
        throw DataFormatError(line_no, "non-numeric component '" + tok + "'");
      }
    }
    if (vec.empty()) throw DataFormatError(line_no, "word without vector");
    try {
      enc.add(std::move(word), std::move(vec));
    } catch (const DimensionError& e) {
      throw DataFormatError(line_no, e.what());
    }
  }
  return enc;
}

StaticEncoder StaticEncoder::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read embedding file " + path.string());
  return load(in);
}

bool StaticEncoder::contains(std::string_view word) const {
  return index_.count(std::string(word)) != 0;
}

std::vector<float> StaticEncoder::embed(std::string_view text) const {
  std::vector<double> acc(dim_, 0.0);
  std::size_t known = 0;
  for (const auto& w : split_words(text)) {
    const auto it = index_.find(w);
    if (it == index_.end()) continue;
    const float* v = vectors_.data() + it->second * dim_;
    for (std::size_t j = 0; j < dim_; ++j) acc[j] += v[j];
    ++known;
  }
  std::vector<float> out(dim_, 0.0F);
  if (known == 0) return out;
  for (std::size_t j = 0; j < dim_; ++j) out[j] = static_cast<float>(acc[j] / double(known));
  return out;
}

}  // namespace semb
