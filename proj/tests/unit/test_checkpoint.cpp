#include <doctest.h>

#include <filesystem>

#include "semb/checkpoint.hpp"
#include "semb/trainer.hpp"
#include "support.hpp"

using namespace semb;

namespace {

SentenceModel tiny_model(bool with_head) {
  EncoderConfig c;
  c.max_seq_len = 12;
  c.hidden_dim = 8;
  c.num_layers = 1;
  c.num_heads = 2;
  c.ffn_dim = 16;
  const std::vector<std::string> corpus = {"alpha beta gamma", "beta delta", "gamma epsilon"};
  SentenceModel m = make_model(corpus, 1, c, PoolingStrategy::kMax);
  if (with_head) {
    m.objective = Objective::kClassification;
    m.head = make_classifier_head<float>(8, 3, ConcatMode::kUVAbsDiffProd, 9);
  }
  m.train_steps = 17;
  return m;
}

std::vector<std::string> probe_texts() { return {"alpha beta", "delta unknown", "gamma"}; }

void set_u32(std::string& bytes, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes[at + i] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

}  // namespace

TEST_CASE("checkpoint roundtrip reproduces embeddings bit-exactly") {
  for (bool head : {false, true}) {
    const SentenceModel m = tiny_model(head);
    const std::string bytes = serialize_checkpoint(m);
    const SentenceModel back = deserialize_checkpoint(bytes);
    CHECK(back.vocab == m.vocab);
    CHECK(back.encoder.config == m.encoder.config);
    CHECK(back.pooling == m.pooling);
    CHECK(back.objective == m.objective);
    CHECK(back.train_steps == 17);
    CHECK(back.head.has_value() == head);
    if (head) {
      CHECK(back.head->mode == ConcatMode::kUVAbsDiffProd);
      CHECK(back.head->weight.storage() == m.head->weight.storage());
    }
    const auto a = embed_texts(m, probe_texts(), 2, true);
    const auto b = embed_texts(back, probe_texts(), 2, true);
    CHECK(a.data == b.data);
    CHECK(serialize_checkpoint(back) == bytes);
  }
}

TEST_CASE("checkpoint file save and load") {
  const SentenceModel m = tiny_model(false);
  const auto path = std::filesystem::temp_directory_path() / "semb_ckpt_test.semb";
  save_checkpoint(m, path);
  const SentenceModel back = load_checkpoint(path);
  CHECK(embed_texts(back, probe_texts(), 4, false).data ==
        embed_texts(m, probe_texts(), 4, false).data);
  const std::string manifest = read_checkpoint_manifest(path);
  CHECK(manifest.find("\"hidden_dim\": 8") != std::string::npos);
  CHECK(manifest.find("embeddings.token") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint layout") {
  const std::string bytes = serialize_checkpoint(tiny_model(false));
  CHECK(bytes.substr(0, 4) == "SEMB");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
}

TEST_CASE("checkpoint corruption gives distinct errors") {
  const std::string good = serialize_checkpoint(tiny_model(true));

  std::string magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(magic), FormatError);

  std::string version = good;
  set_u32(version, 4, 999);
  try {
    deserialize_checkpoint(version);
    FAIL("expected version error");
  } catch (const UnsupportedVersionError& e) {
    CHECK(e.found() == 999);
  }

  CHECK_THROWS_AS(deserialize_checkpoint(good.substr(0, good.size() / 2)), TruncatedFileError);
  CHECK_THROWS_AS(deserialize_checkpoint(good.substr(0, 10)), TruncatedFileError);

  std::string payload = good;
  payload[payload.size() - 10] ^= 0x01;
  CHECK_THROWS_AS(deserialize_checkpoint(payload), ChecksumError);

  std::string crc = good;
  crc.back() ^= 0x40;
  CHECK_THROWS_AS(deserialize_checkpoint(crc), ChecksumError);
}

TEST_CASE("checkpoint determinism: same seed, byte-identical file") {
  CHECK(serialize_checkpoint(tiny_model(true)) == serialize_checkpoint(tiny_model(true)));
}
