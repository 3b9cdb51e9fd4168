#include "run_config.hpp"

#include <fstream>
#include <set>

#include "semb/errors.hpp"

namespace semb::cli {
namespace {

// Fields whose value may be null besides those defaulting to null.
const std::set<std::string> kNullableNumbers = {"train.grad_clip"};

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

std::string type_name(const json& v) {
  if (v.is_number_unsigned()) return "non-negative integer";
  if (v.is_number()) return "number";
  return v.type_name();
}

void check_type(const json& def, const json& val, const std::string& path) {
  if (kNullableNumbers.count(path)) {
    if (val.is_null() || val.is_number()) return;
    throw ConfigError(path, "expected a number or null, got " + type_name(val));
  }
  if (def.is_null()) {
    if (val.is_null() || val.is_string()) return;
    throw ConfigError(path, "expected a string or null, got " + type_name(val));
  }
  bool ok = false;
  std::string want;
  if (def.is_number_unsigned()) {
    ok = val.is_number_unsigned();
    want = "non-negative integer";
  } else if (def.is_number()) {
    ok = val.is_number();
    want = "number";
  } else if (def.is_boolean()) {
    ok = val.is_boolean();
    want = "boolean";
  } else if (def.is_string()) {
    ok = val.is_string();
    want = "string";
  } else if (def.is_array()) {
    ok = val.is_array();
    want = "array";
  } else if (def.is_object()) {
    ok = val.is_object();
    want = "object";
  }
  if (!ok) throw ConfigError(path, "expected " + want + ", got " + type_name(val));
}

void merge_into(json& out, const json& user, const std::string& prefix) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = join(prefix, it.key());
    if (!out.contains(it.key())) throw ConfigError(path, "unknown key");
    json& slot = out[it.key()];
    check_type(slot, it.value(), path);
    if (slot.is_object()) {
      merge_into(slot, it.value(), path);
    } else {
      slot = it.value();
    }
  }
}

template <typename F>
auto field(const json& doc, const std::string& path, F&& convert) {
  const json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    node = &node->at(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    return convert(*node);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

std::size_t count(const json& doc, const std::string& path, std::size_t min) {
  return field(doc, path, [&](const json& v) {
    const auto n = v.get<std::size_t>();
    if (n < min) throw ConfigError(path, "must be >= " + std::to_string(min));
    return n;
  });
}

double number(const json& doc, const std::string& path) {
  return field(doc, path, [](const json& v) { return v.get<double>(); });
}

std::string text(const json& doc, const std::string& path) {
  return field(doc, path, [](const json& v) { return v.is_null() ? "" : v.get<std::string>(); });
}

}  // namespace

json default_config() {
  json concat = json::array();
  for (ConcatMode m : kAllConcatModes) concat.push_back(std::string(to_string(m)));
  return {
      {"name", "run"},
      {"runs_dir", "runs"},
      {"encoder",
       {{"max_seq_len", 64u},
        {"hidden_dim", 64u},
        {"num_layers", 2u},
        {"num_heads", 4u},
        {"ffn_dim", 256u},
        {"dropout", 0.1},
        {"seed", 42u},
        {"min_freq", 1u},
        {"pool_special_tokens", true}}},
      {"train",
       {{"objective", "regression"},
        {"pooling", "mean"},
        {"concat", "u,v,abs"},
        {"batch_size", 16u},
        {"lr", 1e-3},
        {"warmup", 0.1},
        {"epochs", 1u},
        {"seed", 42u},
        {"smart_batching", true},
        {"grad_clip", 1.0},
        {"schedule", "linear"},
        {"target_scale", "unit"},
        {"score_max", 5.0},
        {"margin", 1.0},
        {"num_labels", 3u},
        {"init_checkpoint", nullptr}}},
      {"eval",
       {{"similarity", "cosine"},
        {"triplet_metric", "euclidean"},
        {"batch_size", 32u},
        {"probe",
         {{"folds", 10u}, {"l2", 1e-4}, {"lr", 0.5}, {"epochs", 200u}, {"seed", 1u}}}}},
      {"data",
       {{"train", nullptr},
        {"dev", nullptr},
        {"sts_train", nullptr},
        {"probe", nullptr},
        {"corpus", nullptr}}},
      {"ablate",
       {{"pooling", {"mean", "max", "cls"}},
        {"concat", concat},
        {"seeds", {1u, 2u, 3u}},
        {"regression", true}}},
  };
}

json merge_config(const json& defaults, const json& user) {
  if (!user.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  json out = defaults;
  merge_into(out, user, "");
  return out;
}

void apply_override(json& config, std::string_view path, std::string_view raw) {
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = std::string(raw);
  }
  json nested = value;
  const std::string p(path);
  std::size_t end = p.size();
  while (true) {
    const auto dot = p.rfind('.', end - 1);
    const std::string key = p.substr(dot == std::string::npos ? 0 : dot + 1,
                                     end - (dot == std::string::npos ? 0 : dot + 1));
    if (key.empty()) throw ConfigError(p, "malformed override path");
    nested = json{{key, nested}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  try {
    config = merge_config(config, nested);
  } catch (const ConfigError& e) {
    // A string field given a numeric-looking value: keep it as text.
    if (!value.is_string() && e.field() == p) {
      apply_override(config, path, "\"" + std::string(raw) + "\"");
      return;
    }
    throw;
  }
}

RunConfig parse_run_config(const json& doc) {
  RunConfig c;
  c.name = text(doc, "name");
  if (c.name.empty() || c.name.find('/') != std::string::npos || c.name == "." ||
      c.name == "..") {
    throw ConfigError("name", "must be a non-empty directory name");
  }
  c.runs_dir = text(doc, "runs_dir");

  auto& e = c.encoder;
  e.max_seq_len = count(doc, "encoder.max_seq_len", 3);
  e.hidden_dim = count(doc, "encoder.hidden_dim", 1);
  e.num_layers = count(doc, "encoder.num_layers", 1);
  e.num_heads = count(doc, "encoder.num_heads", 1);
  if (e.hidden_dim % e.num_heads != 0) {
    throw ConfigError("encoder.num_heads", "must divide encoder.hidden_dim (" +
                                               std::to_string(e.hidden_dim) + ")");
  }
  e.ffn_dim = count(doc, "encoder.ffn_dim", 1);
  e.dropout_rate = number(doc, "encoder.dropout");
  if (!(e.dropout_rate >= 0.0 && e.dropout_rate < 1.0)) {
    throw ConfigError("encoder.dropout", "must be in [0, 1)");
  }
  e.seed = field(doc, "encoder.seed", [](const json& v) { return v.get<std::uint64_t>(); });
  c.min_freq = count(doc, "encoder.min_freq", 1);
  c.pool_special_tokens = doc.at("encoder").at("pool_special_tokens").get<bool>();

  auto& t = c.train;
  t.objective = field(doc, "train.objective",
                      [](const json& v) { return parse_objective(v.get<std::string>()); });
  t.pooling = field(doc, "train.pooling",
                    [](const json& v) { return parse_pooling(v.get<std::string>()); });
  t.concat = field(doc, "train.concat",
                   [](const json& v) { return parse_concat_mode(v.get<std::string>()); });
  t.batch_size = count(doc, "train.batch_size", 1);
  t.base_lr = number(doc, "train.lr");
  if (!(t.base_lr >= 0.0)) throw ConfigError("train.lr", "must be >= 0");
  t.warmup_fraction = number(doc, "train.warmup");
  if (!(t.warmup_fraction >= 0.0 && t.warmup_fraction < 1.0)) {
    throw ConfigError("train.warmup", "must be in [0, 1)");
  }
  t.epochs = count(doc, "train.epochs", 1);
  t.seed = field(doc, "train.seed", [](const json& v) { return v.get<std::uint64_t>(); });
  t.smart_batching = doc.at("train").at("smart_batching").get<bool>();
  const json& clip = doc.at("train").at("grad_clip");
  if (clip.is_null()) {
    t.grad_clip_norm.reset();
  } else {
    t.grad_clip_norm = clip.get<double>();
    if (!(*t.grad_clip_norm > 0.0)) throw ConfigError("train.grad_clip", "must be positive or null");
  }
  t.schedule = field(doc, "train.schedule",
                     [](const json& v) { return parse_schedule(v.get<std::string>()); });
  t.target_scale = field(doc, "train.target_scale",
                         [](const json& v) { return parse_target_scale(v.get<std::string>()); });
  t.score_max = number(doc, "train.score_max");
  if (!(t.score_max > 0.0)) throw ConfigError("train.score_max", "must be positive");
  t.triplet_margin = number(doc, "train.margin");
  if (!(t.triplet_margin >= 0.0)) throw ConfigError("train.margin", "must be >= 0");
  t.num_labels = count(doc, "train.num_labels", 2);
  c.init_checkpoint = text(doc, "train.init_checkpoint");

  auto& ev = c.eval;
  ev.similarity = field(doc, "eval.similarity",
                        [](const json& v) { return parse_similarity(v.get<std::string>()); });
  ev.triplet_metric = field(doc, "eval.triplet_metric", [](const json& v) {
    return parse_triplet_metric(v.get<std::string>());
  });
  ev.batch_size = count(doc, "eval.batch_size", 1);
  ev.probe.folds = count(doc, "eval.probe.folds", 2);
  ev.probe.l2_strength = number(doc, "eval.probe.l2");
  if (!(ev.probe.l2_strength >= 0.0)) throw ConfigError("eval.probe.l2", "must be >= 0");
  ev.probe.probe_lr = number(doc, "eval.probe.lr");
  if (!(ev.probe.probe_lr > 0.0)) throw ConfigError("eval.probe.lr", "must be positive");
  ev.probe.probe_epochs = count(doc, "eval.probe.epochs", 1);
  ev.probe.seed =
      field(doc, "eval.probe.seed", [](const json& v) { return v.get<std::uint64_t>(); });

  c.data.train = text(doc, "data.train");
  c.data.dev = text(doc, "data.dev");
  c.data.sts_train = text(doc, "data.sts_train");
  c.data.probe = text(doc, "data.probe");
  c.data.corpus = text(doc, "data.corpus");

  auto& ab = c.ablate;
  const json& abl = doc.at("ablate");
  for (std::size_t i = 0; i < abl.at("pooling").size(); ++i) {
    const std::string path = "ablate.pooling[" + std::to_string(i) + "]";
    ab.pooling.push_back(field(doc, "ablate.pooling", [&](const json& v) {
      if (!v[i].is_string()) throw ConfigError(path, "expected string");
      try {
        return parse_pooling(v[i].get<std::string>());
      } catch (const std::exception& ex) {
        throw ConfigError(path, ex.what());
      }
    }));
  }
  for (std::size_t i = 0; i < abl.at("concat").size(); ++i) {
    const std::string path = "ablate.concat[" + std::to_string(i) + "]";
    ab.concat.push_back(field(doc, "ablate.concat", [&](const json& v) {
      if (!v[i].is_string()) throw ConfigError(path, "expected string");
      try {
        return parse_concat_mode(v[i].get<std::string>());
      } catch (const std::exception& ex) {
        throw ConfigError(path, ex.what());
      }
    }));
  }
  for (std::size_t i = 0; i < abl.at("seeds").size(); ++i) {
    const json& s = abl.at("seeds")[i];
    if (!s.is_number_unsigned()) {
      throw ConfigError("ablate.seeds[" + std::to_string(i) + "]", "expected non-negative integer");
    }
    ab.seeds.push_back(s.get<std::uint64_t>());
  }
  ab.regression = abl.at("regression").get<bool>();
  return c;
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace semb::cli
