#include <doctest.h>

#include <cmath>
#include <sstream>

#include "semb/encoder.hpp"
#include "semb/tokenizer.hpp"
#include "support.hpp"

using namespace semb;
using semb::test::Gen;

namespace {

EncoderConfig tiny_config(std::size_t vocab, std::size_t layers = 1, std::size_t heads = 2) {
  EncoderConfig c;
  c.vocab_size = vocab;
  c.max_seq_len = 16;
  c.hidden_dim = 8;
  c.num_layers = layers;
  c.num_heads = heads;
  c.ffn_dim = 12;
  c.dropout_rate = 0.1;
  c.seed = 3;
  return c;
}

// Gives biases and norm parameters non-trivial values so the oracle
// comparison exercises them too.
template <typename T>
void perturb(Encoder<T>& enc, std::uint64_t seed) {
  Gen gen(seed);
  for (auto& p : enc.parameters()) {
    for (T& v : p.tensor->data()) v += static_cast<T>(gen.uniform(-0.3, 0.3));
  }
}

using Matrix = std::vector<std::vector<double>>;

Matrix rows_of(const Tensor64& t) {
  Matrix m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t r = 0; r < t.dim(0); ++r) {
    for (std::size_t c = 0; c < t.dim(1); ++c) m[r][c] = t.at(r, c);
  }
  return m;
}

Matrix affine(const Matrix& x, const Tensor64& w, const Tensor64& b) {
  Matrix out(x.size(), std::vector<double>(w.dim(1), 0.0));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t c = 0; c < w.dim(1); ++c) {
      double s = b[c];
      for (std::size_t k = 0; k < w.dim(0); ++k) s += x[r][k] * w.at(k, c);
      out[r][c] = s;
    }
  }
  return out;
}

Matrix norm(const Matrix& x, const Tensor64& gamma, const Tensor64& beta) {
  Matrix out = x;
  for (auto& row : out) {
    double mu = 0.0, var = 0.0;
    for (double v : row) mu += v;
    mu /= double(row.size());
    for (double v : row) var += (v - mu) * (v - mu);
    var /= double(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] = (row[j] - mu) / std::sqrt(var + 1e-12) * gamma[j] + beta[j];
    }
  }
  return out;
}

Matrix plus(Matrix a, const Matrix& b) {
  for (std::size_t r = 0; r < a.size(); ++r) {
    for (std::size_t c = 0; c < a[r].size(); ++c) a[r][c] += b[r][c];
  }
  return a;
}

// Straight-line single-head transformer layer over one unpadded sentence.
Matrix oracle_forward(const Encoder<double>& enc, const std::vector<std::int32_t>& ids) {
  const std::size_t len = ids.size(), n = enc.config.hidden_dim;
  Matrix x(len, std::vector<double>(n));
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      x[i][j] = enc.token_embedding.at(ids[i], j) + enc.position_embedding.at(i, j);
    }
  }
  x = norm(x, enc.embed_norm_scale, enc.embed_norm_shift);
  for (const auto& l : enc.layers) {
    const Matrix q = affine(x, l.q_weight, l.q_bias);
    const Matrix k = affine(x, l.k_weight, l.k_bias);
    const Matrix v = affine(x, l.v_weight, l.v_bias);
    Matrix ctx(len, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> w(len);
      double mx = -1e300;
      for (std::size_t j = 0; j < len; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < n; ++d) s += q[i][d] * k[j][d];
        w[j] = s / std::sqrt(double(n));
        mx = std::max(mx, w[j]);
      }
      double total = 0.0;
      for (double& e : w) total += (e = std::exp(e - mx));
      for (std::size_t j = 0; j < len; ++j) {
        for (std::size_t d = 0; d < n; ++d) ctx[i][d] += w[j] / total * v[j][d];
      }
    }
    x = norm(plus(x, affine(ctx, l.out_weight, l.out_bias)), l.attn_norm_scale,
             l.attn_norm_shift);
    Matrix h = affine(x, l.ffn_in_weight, l.ffn_in_bias);
    for (auto& row : h) {
      for (double& e : row) e = 0.5 * e * (1.0 + std::erf(e / std::sqrt(2.0)));
    }
    x = norm(plus(x, affine(h, l.ffn_out_weight, l.ffn_out_bias)), l.ffn_norm_scale,
             l.ffn_norm_shift);
  }
  return x;
}

std::vector<std::string> corpus() {
  return {"the cat sat on the mat", "a dog ran in the park", "birds fly high",
          "the quick brown fox jumps over the lazy dog"};
}

}  // namespace

TEST_CASE("build_vocab examples") {
  const std::vector<std::string> text = {"a b", "a"};
  const Vocab v = Vocab::build(text, 1);
  CHECK(v.size() == 6);
  CHECK(v.id("a") == 4);
  CHECK(v.id("b") == 5);
  CHECK(v.id("[CLS]") == kClsId);
  CHECK(v.id("zzz") == kUnkId);

  CHECK(Vocab::build(text, 3).size() == static_cast<std::size_t>(kNumReserved));
  CHECK(Vocab::build(corpus(), 1) == Vocab::build(corpus(), 1));
  CHECK_THROWS_AS(Vocab::build(std::vector<std::string>{}, 1), InvalidArgument);

  // frequency ties broken lexicographically
  const std::vector<std::string> tied = {"b a c"};
  const Vocab t = Vocab::build(tied, 1);
  CHECK(t.id("a") == 4);
  CHECK(t.id("b") == 5);
  CHECK(t.id("c") == 6);
}

TEST_CASE("vocab ids are dense and reserved ids fixed") {
  const Vocab v = Vocab::build(corpus(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(v.id(v.token(static_cast<std::int32_t>(i))) == static_cast<std::int32_t>(i));
  }
  CHECK(v.token(kPadId) == "[PAD]");
  CHECK(v.token(kSepId) == "[SEP]");
  // Bracketed markers in raw text are split into punctuation, never specials.
  const auto t = tokenize("[SEP]", v, 16);
  CHECK(t.ids.size() == 5);
  CHECK(t.ids[2] != kSepId);
}

TEST_CASE("vocab file roundtrip") {
  const Vocab v = Vocab::build(corpus(), 1);
  const auto path = std::filesystem::temp_directory_path() / "semb_vocab_test.txt";
  v.save(path);
  CHECK(Vocab::load(path) == v);
  std::filesystem::remove(path);
}

TEST_CASE("tokenize examples") {
  const Vocab v = Vocab::build(std::vector<std::string>{"hello world , again"}, 1);
  const auto empty = tokenize("", v, 16);
  CHECK(empty.ids == std::vector<std::int32_t>{kClsId, kSepId});
  CHECK(empty.length() == 2);

  const auto hh = tokenize("Hello hello", v, 16);
  REQUIRE(hh.ids.size() == 4);
  CHECK(hh.ids[1] == hh.ids[2]);
  CHECK(hh.ids[1] == v.id("hello"));

  const auto punct = tokenize("world,again", v, 16);
  CHECK(punct.ids == std::vector<std::int32_t>{kClsId, v.id("world"), v.id(","), v.id("again"), kSepId});

  std::string long_text;
  for (int i = 0; i < 100; ++i) long_text += "hello ";
  const auto cut = tokenize(long_text, v, 10);
  CHECK(cut.ids.size() == 10);
  CHECK(cut.ids.front() == kClsId);
  CHECK(cut.ids.back() == kSepId);

  CHECK(tokenize("unseen", v, 16).ids[1] == kUnkId);
}

TEST_CASE("tokenized sentences: mask is a prefix of ones") {
  const Vocab v = Vocab::build(corpus(), 1);
  for (const auto& s : corpus()) {
    const auto t = tokenize(s, v, 64).padded_to(20);
    CHECK(t.ids.size() == t.mask.size());
    CHECK(t.ids[0] == kClsId);
    bool seen_zero = false;
    for (auto m : t.mask) {
      if (m == 0) seen_zero = true;
      CHECK_FALSE((seen_zero && m == 1));
    }
  }
}

TEST_CASE("init_encoder") {
  EncoderConfig c = tiny_config(10);
  const auto a = init_encoder<float>(c), b = init_encoder<float>(c);
  const auto pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(pa[i].tensor->storage() == pb[i].tensor->storage());
  }
  CHECK(a.layers[0].attn_norm_scale.storage() == std::vector<float>(8, 1.0F));
  CHECK(a.layers[0].attn_norm_shift.storage() == std::vector<float>(8, 0.0F));

  // N(0, 0.02^2) draw
  double s = 0.0, s2 = 0.0;
  const auto& emb = init_encoder<double>(EncoderConfig{.vocab_size = 2000}).token_embedding;
  for (double v : emb.data()) {
    s += v;
    s2 += v * v;
  }
  const double mean = s / double(emb.numel());
  CHECK(std::abs(mean) < 1e-3);
  CHECK(std::sqrt(s2 / double(emb.numel()) - mean * mean) == doctest::Approx(0.02).epsilon(0.02));

  c.hidden_dim = 6;
  c.num_heads = 4;
  CHECK_THROWS_WITH_AS(init_encoder<float>(c), doctest::Contains("divisible"), InvalidArgument);

  EncoderConfig bad;
  bad.max_seq_len = 2;
  bad.dropout_rate = 1.0;
  try {
    bad.validate();
    FAIL("expected invalid config");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("max_seq_len") != std::string::npos);
    CHECK(std::string(e.what()).find("dropout_rate") != std::string::npos);
  }

  const EncoderConfig desk;
  CHECK(desk.num_layers == 2);
  CHECK(desk.num_heads == 4);
  CHECK(desk.hidden_dim == 64);
  CHECK(desk.ffn_dim == 256);
  CHECK(desk.max_seq_len == 64);
  CHECK(init_encoder<float>(EncoderConfig{.vocab_size = 20}).layers.size() == 2);
}

TEST_CASE("one-layer one-head forward matches a straight-line oracle at f64") {
  EncoderConfig c = tiny_config(7, 1, 1);
  Encoder<double> enc = init_encoder<double>(c);
  perturb(enc, 11);
  enc.mode = EncoderMode::kInfer;
  const std::vector<std::int32_t> ids = {kClsId, 5};
  TokenizedSentence s{ids, {1, 1}};
  Graph<double> g;
  const auto out = encode_batch(g, std::as_const(enc), std::span(&s, 1));
  const Matrix expect = oracle_forward(enc, ids);
  REQUIRE(out.shape() == Shape{1, 2, 8});
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(std::abs(out.value()[i * 8 + j] - expect[i][j]) < 1e-10);
    }
  }
}

TEST_CASE("multi-head forward matches the oracle when heads see one token each") {
  // A lone token attends only to itself, so the head split cannot matter.
  EncoderConfig c = tiny_config(7, 2, 2);
  Encoder<double> enc = init_encoder<double>(c);
  perturb(enc, 12);
  TokenizedSentence s{{kClsId}, {1}};
  Graph<double> g;
  const auto out = encode_batch(g, std::as_const(enc), std::span(&s, 1));
  const Matrix expect = oracle_forward(enc, {kClsId});
  for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(out.value()[j] - expect[0][j]) < 1e-10);
}

TEST_CASE("padding invariance in infer mode") {
  const Vocab v = Vocab::build(corpus(), 1);
  EncoderConfig c = tiny_config(v.size(), 2, 2);
  Encoder<float> enc = init_encoder<float>(c);
  perturb(enc, 5);
  for (const auto& text : corpus()) {
    const auto t = tokenize(text, v, 16);
    const auto a = t.padded_to(std::max<std::size_t>(t.ids.size(), 8));
    const auto b = t.padded_to(16);
    Graph<float> g;
    const auto oa = encode_batch(g, std::as_const(enc), std::span(&a, 1));
    const auto ob = encode_batch(g, std::as_const(enc), std::span(&b, 1));
    const std::size_t n = 8;
    for (std::size_t i = 0; i < t.length(); ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(std::abs(oa.value()[i * n + j] - ob.value()[i * n + j]) < 1e-5);
      }
    }
  }
}

TEST_CASE("identical sentences in a batch give identical rows") {
  const Vocab v = Vocab::build(corpus(), 1);
  Encoder<float> enc = init_encoder<float>(tiny_config(v.size(), 2, 2));
  const auto t = tokenize(corpus()[0], v, 16);
  std::vector<TokenizedSentence> batch(3, t);
  Graph<float> g;
  const auto out = encode_batch(g, std::as_const(enc), batch);
  const std::size_t row = t.ids.size() * 8;
  for (std::size_t i = 0; i < row; ++i) {
    CHECK(out.value()[i] == out.value()[row + i]);
    CHECK(out.value()[i] == out.value()[2 * row + i]);
  }
}

TEST_CASE("encode_batch preconditions") {
  Encoder<float> enc = init_encoder<float>(tiny_config(10));
  Graph<float> g;
  TokenizedSentence long_one{std::vector<std::int32_t>(17, 4), std::vector<std::uint8_t>(17, 1)};
  CHECK_THROWS_AS(encode_batch(g, std::as_const(enc), std::span(&long_one, 1)), InvalidArgument);
  CHECK_THROWS_AS(encode_batch(g, std::as_const(enc), std::span<const TokenizedSentence>{}),
                  InvalidArgument);
}

TEST_CASE("dropout only in train mode") {
  const Vocab v = Vocab::build(corpus(), 1);
  Encoder<float> enc = init_encoder<float>(tiny_config(v.size(), 1, 2));
  const auto t = tokenize(corpus()[0], v, 16);
  std::mt19937_64 rng(1);
  auto run = [&](EncoderMode mode) {
    enc.mode = mode;
    Graph<float> g;
    g.rng = &rng;
    g.training = mode == EncoderMode::kTrain;
    return encode_batch(g, enc, std::span(&t, 1)).value().storage();
  };
  CHECK(run(EncoderMode::kInfer) == run(EncoderMode::kInfer));
  CHECK(run(EncoderMode::kTrain) != run(EncoderMode::kInfer));
}

TEST_CASE("encoder gradient w.r.t. token embeddings matches finite differences") {
  EncoderConfig c = tiny_config(9, 1, 2);
  c.hidden_dim = 4;
  c.ffn_dim = 6;
  Encoder<double> enc = init_encoder<double>(c);
  perturb(enc, 21);
  enc.mode = EncoderMode::kInfer;
  std::vector<TokenizedSentence> batch = {
      {{kClsId, 4, 5, kSepId}, {1, 1, 1, 1}},
      {{kClsId, 6, kSepId, kPadId}, {1, 1, 1, 0}},
  };
  Gen gen(22);
  const Tensor64 weights = gen.tensor({2, 4, 4});
  Tensor64* params[] = {&enc.token_embedding};
  const double err = grad_check(
      params,
      [&](Graph<double>& g) {
        return sum(mul(encode_batch(g, enc, batch), g.constant_ref(weights)));
      },
      1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("tied towers: one encoder instance serves every tower") {
  const Vocab v = Vocab::build(corpus(), 1);
  Encoder<float> enc = init_encoder<float>(tiny_config(v.size(), 1, 2));
  enc.set_trainable(true);
  const auto a = tokenize(corpus()[0], v, 16), b = tokenize(corpus()[1], v, 16);
  Graph<float> g;
  encode_batch(g, enc, std::span(&a, 1));
  const std::size_t after_first = g.size();
  encode_batch(g, enc, std::span(&b, 1));
  // The second tower reuses the parameter leaves bound by the first.
  std::size_t new_params = 0;
  for (std::size_t i = after_first; i < g.size(); ++i) {
    if (g.node(i).op == "parameter") ++new_params;
  }
  CHECK(new_params == 0);

  const auto before = encode_batch(g, std::as_const(enc), std::span(&b, 1)).value().storage();
  enc.token_embedding[v.id("a") * 8] += 1.0F;
  Graph<float> g2;
  CHECK(encode_batch(g2, std::as_const(enc), std::span(&b, 1)).value().storage() != before);
}

TEST_CASE("static encoder") {
  std::istringstream file("cat 1 2\ndog 3 4\n\nbird 0 -2\n");
  const StaticEncoder enc = StaticEncoder::load(file);
  CHECK(enc.dim() == 2);
  CHECK(enc.size() == 3);
  CHECK(enc.embed("cat") == std::vector<float>{1, 2});
  CHECK(enc.embed("cat dog") == std::vector<float>{2, 3});
  CHECK(enc.embed("dog cat") == enc.embed("cat dog"));
  CHECK(enc.embed("cat unicorn") == std::vector<float>{1, 2});
  CHECK(enc.embed("unicorn") == std::vector<float>{0, 0});
  CHECK(enc.embed("") == std::vector<float>{0, 0});

  std::istringstream bad("cat 1 2\ndog 3\n");
  try {
    StaticEncoder::load(bad);
    FAIL("expected a data error");
  } catch (const DataFormatError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream junk("cat 1 x\n");
  CHECK_THROWS_AS(StaticEncoder::load(junk), DataFormatError);
}
