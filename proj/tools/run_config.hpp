#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "semb/encoder.hpp"
#include "semb/eval.hpp"
#include "semb/objectives.hpp"
#include "semb/pooling.hpp"
#include "semb/trainer.hpp"

namespace semb::cli {

using nlohmann::json;

struct EvalSettings {
  Similarity similarity = Similarity::kCosine;
  TripletMetric triplet_metric = TripletMetric::kEuclidean;
  std::size_t batch_size = 32;
  ProbeConfig probe;
};

// Dataset paths; empty when unset.
struct DataPaths {
  std::string train;
  std::string dev;
  std::string sts_train;
  std::string probe;
  std::string corpus;
};

struct AblateSettings {
  std::vector<PoolingStrategy> pooling;
  std::vector<ConcatMode> concat;
  std::vector<std::uint64_t> seeds;
  bool regression = true;
};

struct RunConfig {
  std::string name;
  std::filesystem::path runs_dir;
  EncoderConfig encoder;
  std::size_t min_freq = 1;
  bool pool_special_tokens = true;
  TrainConfig train;
  std::string init_checkpoint;
  EvalSettings eval;
  DataPaths data;
  AblateSettings ablate;

  std::filesystem::path run_dir() const { return runs_dir / name; }
};

// Every accepted key with its default value.
json default_config();

// Overlays `user` on `defaults`. Unknown keys and type mismatches throw
// ConfigError naming the dotted field path.
json merge_config(const json& defaults, const json& user);

// Sets one dotted path (e.g. "train.lr"). `raw` is parsed as JSON when it
// is valid JSON and taken as a string otherwise.
void apply_override(json& config, std::string_view path, std::string_view raw);

// Converts a merged document into typed settings, validating every field.
RunConfig parse_run_config(const json& effective);

json load_config_file(const std::filesystem::path& path);

}  // namespace semb::cli
