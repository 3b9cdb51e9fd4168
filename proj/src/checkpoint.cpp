#include "semb/checkpoint.hpp"

#include <algorithm>

#include <json.hpp>

#include "binary_io.hpp"

namespace semb {
namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "SEMB";

json config_to_json(const EncoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
          {"hidden_dim", c.hidden_dim}, {"num_layers", c.num_layers},
          {"num_heads", c.num_heads},   {"ffn_dim", c.ffn_dim},
          {"dropout_rate", c.dropout_rate}, {"seed", c.seed}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

struct Header {
  json manifest;
  std::size_t payload_begin = 0;
};

Header read_header(detail::Reader& reader) {
  if (reader.take(4) != kMagic) throw FormatError("checkpoint: bad magic bytes");
  const std::uint32_t version = reader.u32();
  if (version != kCheckpointVersion) {
    throw UnsupportedVersionError(version, kCheckpointVersion);
  }
  const std::uint64_t manifest_len = reader.u64();
  if (manifest_len > reader.remaining()) {
    throw TruncatedFileError("checkpoint: manifest extends past end of file");
  }
  const auto text = reader.take(static_cast<std::size_t>(manifest_len));
  Header h;
  try {
    h.manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  h.payload_begin = reader.position();
  return h;
}

}  // namespace

std::string serialize_checkpoint(const SentenceModel& model) {
  std::string payload;
  json tensors = json::array();
  auto append = [&](const std::string& name, const Tensor& t) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", payload.size()}});
    for (float v : t.data()) detail::put_f32(payload, v);
  };
  for (const auto& p : model.encoder.parameters()) append(p.name, *p.tensor);

  json manifest = {
      {"format", "semb-checkpoint"},
      {"encoder", config_to_json(model.encoder.config)},
      {"pooling", std::string(to_string(model.pooling))},
      {"pool_special_tokens", model.pool_special_tokens},
      {"objective", std::string(to_string(model.objective))},
      {"train_steps", model.train_steps},
      {"vocab", model.vocab.regular_tokens()},
  };
  if (model.head) {
    manifest["head"] = {{"concat", std::string(to_string(model.head->mode))},
                        {"num_labels", model.head->num_labels()}};
    append("head.weight", model.head->weight);
  }
  manifest["tensors"] = tensors;

  const std::string text = manifest.dump();
  std::string out;
  out.reserve(4 + 4 + 8 + text.size() + payload.size() + 4);
  out.append(kMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, text.size());
  out.append(text);
  out.append(payload);
  detail::put_u32(out, detail::crc32_of(payload));
  return out;
}

SentenceModel deserialize_checkpoint(std::string_view bytes) {
  detail::Reader reader(bytes, "checkpoint");
  const Header header = read_header(reader);
  std::size_t payload_size = 0;
  try {
    for (const auto& entry : header.manifest.at("tensors")) {
      const auto count = shape_numel(entry.at("shape").get<Shape>());
      payload_size = std::max(payload_size, entry.at("offset").get<std::size_t>() + 4 * count);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad tensor directory: ") + e.what());
  }
  if (reader.remaining() < payload_size + 4) {
    throw TruncatedFileError("checkpoint: truncated payload (expected " +
                             std::to_string(payload_size + 4) + " bytes, found " +
                             std::to_string(reader.remaining()) + ")");
  }
  if (reader.remaining() > payload_size + 4) {
    throw FormatError("checkpoint: trailing bytes after checksum");
  }
  const auto payload = reader.take(payload_size);
  const std::uint32_t stored_crc = reader.u32();
  if (detail::crc32_of(payload) != stored_crc) {
    throw ChecksumError("checkpoint: payload CRC32 mismatch");
  }

  const json& m = header.manifest;
  SentenceModel model;
  try {
    model.vocab = Vocab::from_tokens(m.at("vocab").get<std::vector<std::string>>());
    const EncoderConfig config = config_from_json(m.at("encoder"));
    config.validate();
    model.encoder = init_encoder<float>(config);
    model.pooling = parse_pooling(m.at("pooling").get<std::string>());
    model.pool_special_tokens = m.at("pool_special_tokens").get<bool>();
    model.objective = parse_objective(m.at("objective").get<std::string>());
    model.train_steps = m.at("train_steps").get<std::uint64_t>();
    if (model.vocab.size() != config.vocab_size) {
      throw FormatError("checkpoint: vocab has " + std::to_string(model.vocab.size()) +
                        " tokens but encoder expects " + std::to_string(config.vocab_size));
    }
    if (m.contains("head")) {
      ClassifierHead<float> head;
      head.mode = parse_concat_mode(m["head"].at("concat").get<std::string>());
      model.head = std::move(head);
    }

    std::unordered_map<std::string, Tensor*> targets;
    for (auto& p : model.encoder.parameters()) targets.emplace(p.name, p.tensor);
    std::size_t loaded = 0;
    for (const auto& entry : m.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const std::size_t count = shape_numel(shape);
      if (offset > payload.size() || count * 4 > payload.size() - offset) {
        throw TruncatedFileError("checkpoint: tensor '" + name + "' extends past payload");
      }
      Tensor t(shape);
      detail::Reader tr(payload.substr(offset, count * 4), "checkpoint");
      for (float& v : t.data()) v = tr.f32();
      if (name == "head.weight" && model.head) {
        model.head->weight = std::move(t);
        continue;
      }
      const auto it = targets.find(name);
      if (it == targets.end()) throw FormatError("checkpoint: unexpected tensor '" + name + "'");
      if (it->second->shape() != t.shape()) {
        throw FormatError("checkpoint: tensor '" + name + "' has shape " +
                          shape_to_string(t.shape()) + ", expected " +
                          shape_to_string(it->second->shape()));
      }
      *it->second = std::move(t);
      ++loaded;
    }
    if (loaded != targets.size()) {
      throw FormatError("checkpoint: " + std::to_string(targets.size() - loaded) +
                        " encoder tensors missing");
    }
    if (model.head && model.head->weight.empty()) {
      throw FormatError("checkpoint: head declared but head.weight missing");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad manifest field: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return model;
}

void save_checkpoint(const SentenceModel& model, const std::filesystem::path& path) {
  detail::write_file(path, serialize_checkpoint(model));
}

SentenceModel load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(detail::read_file(path));
}

std::string read_checkpoint_manifest(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  detail::Reader reader(bytes, "checkpoint");
  return read_header(reader).manifest.dump(2);
}

}  // namespace semb
