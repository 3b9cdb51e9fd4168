#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "ablation.hpp"
#include "run_config.hpp"
#include "semb/checkpoint.hpp"
#include "semb/data.hpp"
#include "semb/errors.hpp"
#include "semb/eval.hpp"
#include "semb/model.hpp"
#include "semb/search.hpp"
#include "semb/trainer.hpp"

namespace fs = std::filesystem;
using namespace semb;
using namespace semb::cli;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kIncompatible = 4, kDegenerate = 5 };

// Unreadable dataset file.
class DataUnavailable : public Error {
 public:
  using Error::Error;
};

struct Overrides {
  std::vector<std::pair<std::string, std::string>> dotted;
};

const std::set<std::string> kSections = {"encoder", "train", "eval", "data", "ablate"};

// Pulls `--section.key value` / `--section.key=value` out of argv.
std::vector<std::string> split_overrides(int argc, char** argv, Overrides& out) {
  std::vector<std::string> rest;
  for (int i = 0; i < argc; ++i) {
    const std::string arg = argv[i];
    if (i > 0 && arg.rfind("--", 0) == 0) {
      const auto eq = arg.find('=');
      const std::string path = arg.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
      const auto dot = path.find('.');
      if (dot != std::string::npos && kSections.count(path.substr(0, dot))) {
        if (eq != std::string::npos) {
          out.dotted.emplace_back(path, arg.substr(eq + 1));
        } else if (i + 1 < argc) {
          out.dotted.emplace_back(path, argv[++i]);
        } else {
          throw ConfigError(path, "missing value");
        }
        continue;
      }
    }
    rest.push_back(arg);
  }
  return rest;
}

void emit(const json& doc) { std::cout << doc.dump(2) << "\n"; }

void table(bool quiet, const std::string& text) {
  if (!quiet) std::cerr << text;
}

void require_file(const std::string& path, const std::string& field) {
  if (path.empty()) throw ConfigError(field, "required");
  if (!fs::is_regular_file(path)) throw DataUnavailable("cannot read " + path + " (" + field + ")");
}

std::vector<std::string> pair_texts(std::span<const PairExample> pairs) {
  std::vector<std::string> out;
  for (const auto& p : pairs) {
    out.push_back(p.a);
    out.push_back(p.b);
  }
  return out;
}

std::vector<std::string> triplet_texts(std::span<const TripletExample> triplets) {
  std::vector<std::string> out;
  for (const auto& t : triplets) {
    out.push_back(t.anchor);
    out.push_back(t.positive);
    out.push_back(t.negative);
  }
  return out;
}

std::vector<PairExample> load_pairs(const std::string& path, Objective objective) {
  return objective == Objective::kClassification ? load_label_pairs(path) : load_score_pairs(path);
}

void check_labels(std::span<const PairExample> pairs, std::size_t num_labels,
                  const std::string& path) {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (*pairs[i].label >= num_labels) {
      throw DataUnavailable(path + ": record " + std::to_string(i + 1) + " has label " +
                            std::to_string(*pairs[i].label) + " outside [0, " +
                            std::to_string(num_labels) + ") (train.num_labels)");
    }
  }
}

SentenceModel open_checkpoint(const std::string& path) {
  if (path.empty()) throw ConfigError("--checkpoint", "required");
  if (!fs::is_regular_file(path)) throw IncompatibleError("cannot read checkpoint " + path);
  return load_checkpoint(path);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Shared by train and ablate.
struct ConfigOptions {
  std::string config_path;
  std::optional<std::string> name, runs_dir, objective, pooling, concat, train_path, dev_path,
      init;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  bool quiet = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run config");
    cmd->add_option("--name", name, "run name (directory under runs_dir)");
    cmd->add_option("--runs-dir", runs_dir, "parent directory of run directories");
    cmd->add_option("--objective", objective, "classification|regression|triplet");
    cmd->add_option("--pooling", pooling, "cls|mean|max");
    cmd->add_option("--concat", concat, "classifier features, e.g. u,v,abs");
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--batch-size", batch_size);
    cmd->add_option("--seed", seed, "sets train.seed and encoder.seed");
    cmd->add_option("--lr", lr);
    cmd->add_option("--train", train_path, "training JSONL");
    cmd->add_option("--dev", dev_path, "dev JSONL");
    cmd->add_option("--init", init, "continue training from this checkpoint");
    cmd->add_flag("--quiet", quiet, "no table on stderr");
  }

  json effective(const Overrides& overrides) const {
    json doc = default_config();
    if (!config_path.empty()) doc = merge_config(doc, load_config_file(config_path));
    auto set = [&](const char* path, const json& v) {
      apply_override(doc, path, v.dump());
    };
    if (name) set("name", *name);
    if (runs_dir) set("runs_dir", *runs_dir);
    if (objective) set("train.objective", *objective);
    if (pooling) set("train.pooling", *pooling);
    if (concat) set("train.concat", *concat);
    if (epochs) set("train.epochs", *epochs);
    if (batch_size) set("train.batch_size", *batch_size);
    if (seed) {
      set("train.seed", *seed);
      set("encoder.seed", *seed);
    }
    if (lr) set("train.lr", *lr);
    if (train_path) set("data.train", *train_path);
    if (dev_path) set("data.dev", *dev_path);
    if (init) set("train.init_checkpoint", *init);
    for (const auto& [path, value] : overrides.dotted) apply_override(doc, path, value);
    return doc;
  }
};

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  out << doc.dump(2) << "\n";
  if (!out) throw Error("cannot write " + path.string());
}

fs::path prepare_run_dir(const RunConfig& cfg, const json& effective) {
  const fs::path dir = cfg.run_dir();
  fs::create_directories(dir);
  write_json(dir / "effective-config.json", effective);
  return dir;
}

// Dev metric for a model: triplet accuracy for triplet runs, STS Spearman otherwise.
struct DevSet {
  std::vector<PairExample> pairs;
  std::vector<TripletExample> triplets;
  bool empty() const { return pairs.empty() && triplets.empty(); }
};

json dev_metrics(const SentenceModel& model, const DevSet& dev, const EvalSettings& ev) {
  const ModelEmbedder embedder(model, ev.batch_size);
  if (!dev.triplets.empty()) {
    return {{"triplet_accuracy", triplet_accuracy(embedder, dev.triplets, ev.triplet_metric)}};
  }
  const auto r = sts_eval(embedder, dev.pairs, ev.similarity);
  return {{"spearman", r.spearman}, {"pearson", r.pearson}, {"n_pairs", r.n_pairs}};
}

int cmd_train(const ConfigOptions& opts, const Overrides& overrides) {
  json effective = opts.effective(overrides);
  RunConfig cfg = parse_run_config(effective);
  const TrainConfig& tc = cfg.train;

  require_file(cfg.data.train, "data.train");
  TrainingData data;
  if (tc.objective == Objective::kTriplet) {
    data.triplets = load_triplets(cfg.data.train);
  } else {
    data.pairs = load_pairs(cfg.data.train, tc.objective);
    if (tc.objective == Objective::kClassification) {
      check_labels(data.pairs, tc.num_labels, cfg.data.train);
    }
  }
  if (data.size() == 0) throw DataUnavailable(cfg.data.train + ": no records");
  DevSet dev;
  if (!cfg.data.dev.empty()) {
    require_file(cfg.data.dev, "data.dev");
    if (tc.objective == Objective::kTriplet) {
      dev.triplets = load_triplets(cfg.data.dev);
    } else {
      dev.pairs = load_score_pairs(cfg.data.dev);
    }
  }

  SentenceModel model;
  if (!cfg.init_checkpoint.empty()) {
    model = open_checkpoint(cfg.init_checkpoint);
    const auto& ec = model.encoder.config;
    effective["encoder"].update({{"max_seq_len", ec.max_seq_len},
                                 {"hidden_dim", ec.hidden_dim},
                                 {"num_layers", ec.num_layers},
                                 {"num_heads", ec.num_heads},
                                 {"ffn_dim", ec.ffn_dim},
                                 {"dropout", ec.dropout_rate},
                                 {"seed", ec.seed},
                                 {"pool_special_tokens", model.pool_special_tokens}});
  } else {
    const auto texts =
        data.triplets.empty() ? pair_texts(data.pairs) : triplet_texts(data.triplets);
    model = make_model(texts, cfg.min_freq, cfg.encoder, tc.pooling);
    model.pool_special_tokens = cfg.pool_special_tokens;
  }

  const fs::path dir = prepare_run_dir(cfg, effective);
  std::ofstream metrics(dir / "metrics.jsonl");

  json report = {{"command", "train"},
                 {"run_dir", dir.string()},
                 {"objective", std::string(to_string(tc.objective))},
                 {"pooling", std::string(to_string(tc.pooling))},
                 {"train_records", data.size()}};
  if (!dev.empty()) {
    model.pooling = tc.pooling;
    report["dev_before"] = dev_metrics(model, dev, cfg.eval);
  }

  TrainHooks hooks;
  hooks.on_batch = [&](const BatchRecord& b) {
    metrics << json{{"epoch", b.epoch}, {"step", b.step}, {"lr", b.lr}, {"loss", b.loss}}.dump()
            << "\n";
  };
  hooks.on_epoch = [&](std::size_t epoch, const SentenceModel& m) {
    if (dev.empty()) return;
    json line = {{"epoch", epoch}, {"dev", dev_metrics(m, dev, cfg.eval)}};
    metrics << line.dump() << "\n";
  };

  const auto start = std::chrono::steady_clock::now();
  const TrainResult result = train(model, data, tc, hooks);
  const double seconds = seconds_since(start);
  metrics.flush();

  const fs::path ckpt = dir / "checkpoint.semb";
  save_checkpoint(model, ckpt);

  report["checkpoint"] = ckpt.string();
  report["steps"] = result.steps;
  report["initial_loss"] = result.initial_loss();
  report["final_loss"] = result.final_loss();
  report["train_seconds"] = seconds;
  if (!dev.empty()) report["dev"] = dev_metrics(model, dev, cfg.eval);
  write_json(dir / "report.json", report);
  emit(report);

  std::ostringstream t;
  t << "run " << dir.string() << "\n"
    << "steps          " << result.steps << "\n"
    << "loss           " << fixed(result.initial_loss()) << " -> " << fixed(result.final_loss())
    << "\n";
  if (!dev.empty()) {
    for (const auto& [key, value] : report["dev"].items()) {
      if (key == "n_pairs") continue;
      t << "dev " << key << std::string(key.size() < 11 ? 11 - key.size() : 1, ' ')
        << fixed(report["dev_before"][key].get<double>() * 100, 2) << " -> "
        << fixed(value.get<double>() * 100, 2) << "\n";
    }
  }
  table(opts.quiet, t.str());
  return kOk;
}

int cmd_ablate(const ConfigOptions& opts, const Overrides& overrides) {
  const json effective = opts.effective(overrides);
  const RunConfig cfg = parse_run_config(effective);
  const auto& ab = cfg.ablate;
  if (ab.seeds.size() < 2) throw ConfigError("ablate.seeds", "needs at least 2 seeds");
  if (ab.pooling.empty()) throw ConfigError("ablate.pooling", "must not be empty");

  AblationData data;
  require_file(cfg.data.train, "data.train");
  require_file(cfg.data.dev, "data.dev");
  data.classification = load_label_pairs(cfg.data.train);
  if (data.classification.empty()) throw DataUnavailable(cfg.data.train + ": no records");
  check_labels(data.classification, cfg.train.num_labels, cfg.data.train);
  data.dev = load_score_pairs(cfg.data.dev);
  if (ab.regression) {
    require_file(cfg.data.sts_train, "data.sts_train");
    data.regression = load_score_pairs(cfg.data.sts_train);
    if (data.regression.empty()) throw DataUnavailable(cfg.data.sts_train + ": no records");
  }

  const fs::path dir = prepare_run_dir(cfg, effective);
  std::ofstream metrics(dir / "metrics.jsonl");
  auto observe = [&](const AblationCell& cell, std::uint64_t seed, double rho) {
    json line = {{"objective", std::string(to_string(cell.objective))},
                 {"pooling", std::string(to_string(cell.pooling))},
                 {"seed", seed},
                 {"dev_spearman", rho}};
    if (cell.concat) line["concat"] = std::string(to_string(*cell.concat));
    metrics << line.dump() << "\n";
  };
  const auto cells = run_ablation(cfg, data, observe);

  json rows = json::array();
  for (const auto& cell : cells) {
    const auto& r = cell.result;
    json row = {{"objective", std::string(to_string(cell.objective))},
                {"pooling", std::string(to_string(cell.pooling))},
                {"seeds", r.seeds},
                {"values", r.values},
                {"failures", json::array()}};
    if (cell.concat) row["concat"] = std::string(to_string(*cell.concat));
    for (const auto& f : r.failures) {
      row["failures"].push_back({{"seed", f.seed}, {"error", f.message}});
    }
    if (r.values.empty()) {
      row["mean"] = nullptr;
      row["stdev"] = nullptr;
      row["formatted"] = "failed";
    } else {
      row["mean"] = r.mean;
      row["stdev"] = r.stdev;
      row["formatted"] = r.formatted(100.0);
    }
    rows.push_back(row);
  }

  json report = {{"command", "ablate"},
                 {"run_dir", dir.string()},
                 {"metric", "dev_spearman"},
                 {"seeds", ab.seeds},
                 {"cells", rows}};
  write_json(dir / "report.json", report);
  emit(report);
  table(opts.quiet, format_ablation_table(cells, ab.seeds.size()));
  return kOk;
}

int cmd_embed(const std::string& ckpt, const std::string& corpus_path, const std::string& out,
              std::size_t batch_size, bool naive, bool quiet) {
  const SentenceModel model = open_checkpoint(ckpt);
  require_file(corpus_path, "--corpus");
  if (out.empty()) throw ConfigError("--out", "required");
  if (batch_size == 0) throw ConfigError("--batch-size", "must be >= 1");
  const auto corpus = load_corpus(corpus_path);
  const auto start = std::chrono::steady_clock::now();
  const EmbeddingStore store = embed_corpus(model, corpus, batch_size, !naive);
  const double seconds = seconds_since(start);
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  save_store(store, out);
  emit({{"command", "embed"},
        {"store", out},
        {"count", store.size()},
        {"dim", store.dim()},
        {"smart_batching", !naive},
        {"seconds", seconds}});
  table(quiet, "embedded " + std::to_string(store.size()) + " sentences (dim " +
                   std::to_string(store.dim()) + ") -> " + out + "\n");
  return kOk;
}

struct EvalOptions {
  std::string checkpoint, data, task = "sts", similarity = "cosine", metric = "euclidean";
  std::size_t batch_size = 32, folds = 10, probe_epochs = 200;
  std::uint64_t seed = 1;
  bool quiet = false;
};

int cmd_eval(const EvalOptions& o) {
  const SentenceModel model = open_checkpoint(o.checkpoint);
  require_file(o.data, "--data");
  if (o.batch_size == 0) throw ConfigError("--batch-size", "must be >= 1");
  const ModelEmbedder embedder(model, o.batch_size);
  json report = {{"command", "eval"}, {"task", o.task}, {"data", o.data}};
  std::vector<std::pair<std::string, double>> rows;
  if (o.task == "sts") {
    const Similarity kind = [&] {
      try {
        return parse_similarity(o.similarity);
      } catch (const std::exception& e) {
        throw ConfigError("--similarity", e.what());
      }
    }();
    const auto pairs = load_score_pairs(o.data);
    const auto r = sts_eval(embedder, pairs, kind);
    report["similarity"] = std::string(to_string(kind));
    report["spearman"] = r.spearman;
    report["pearson"] = r.pearson;
    report["n_pairs"] = r.n_pairs;
    rows = {{"spearman", r.spearman}, {"pearson", r.pearson}};
  } else if (o.task == "triplet") {
    const TripletMetric metric = [&] {
      try {
        return parse_triplet_metric(o.metric);
      } catch (const std::exception& e) {
        throw ConfigError("--metric", e.what());
      }
    }();
    const auto triplets = load_triplets(o.data);
    const double acc = triplet_accuracy(embedder, triplets, metric);
    report["metric"] = std::string(to_string(metric));
    report["accuracy"] = acc;
    report["n_triplets"] = triplets.size();
    rows = {{"accuracy", acc}};
  } else if (o.task == "probe") {
    const auto probe = load_probe(o.data);
    ProbeConfig pc;
    pc.folds = o.folds;
    pc.probe_epochs = o.probe_epochs;
    pc.seed = o.seed;
    const auto r = probe_eval(embedder.embed(probe.texts), probe.labels, pc);
    report["mean_accuracy"] = r.mean_accuracy;
    report["fold_accuracies"] = r.fold_accuracies;
    report["skipped_folds"] = r.skipped_folds;
    report["warnings"] = r.warnings;
    rows = {{"accuracy", r.mean_accuracy}};
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  } else {
    throw ConfigError("--task", "unknown task '" + o.task + "' (expected sts|triplet|probe)");
  }
  emit(report);
  table(o.quiet, format_report_table(rows));
  return kOk;
}

struct SearchOptions {
  std::string store, checkpoint, queries;
  std::vector<std::string> query_texts;
  std::size_t k = 10;
  bool pair = false, quiet = false;
};

int cmd_search(const SearchOptions& o) {
  if (o.store.empty()) throw ConfigError("--store", "required");
  if (!fs::is_regular_file(o.store)) throw IncompatibleError("cannot read store " + o.store);
  const EmbeddingStore store = load_store(o.store);
  std::ostringstream t;

  if (o.pair) {
    const auto start = std::chrono::steady_clock::now();
    const PairHit hit = most_similar_pair(store);
    const double seconds = seconds_since(start);
    emit({{"command", "search"},
          {"mode", "most_similar_pair"},
          {"id_i", hit.id_i},
          {"id_j", hit.id_j},
          {"score", hit.score},
          {"comparisons", hit.comparisons},
          {"seconds", seconds}});
    t << hit.id_i << "  " << hit.id_j << "  " << fixed(hit.score) << "  (" << hit.comparisons
      << " comparisons)\n";
    table(o.quiet, t.str());
    return kOk;
  }

  if (o.query_texts.empty() && o.queries.empty()) {
    throw ConfigError("--query", "give --query, --queries or --pair");
  }
  if (o.k == 0) throw ConfigError("-k", "must be >= 1");
  const SentenceModel model = open_checkpoint(o.checkpoint);
  if (model.dim() != store.dim()) {
    throw IncompatibleError("checkpoint dimension " + std::to_string(model.dim()) +
                            " does not match store dimension " + std::to_string(store.dim()));
  }
  std::vector<CorpusEntry> queries;
  for (std::size_t i = 0; i < o.query_texts.size(); ++i) {
    queries.push_back({"q" + std::to_string(i), o.query_texts[i]});
  }
  if (!o.queries.empty()) {
    require_file(o.queries, "--queries");
    for (auto& q : load_corpus(o.queries)) queries.push_back(std::move(q));
  }
  std::vector<std::string> texts;
  for (const auto& q : queries) texts.push_back(q.text);
  const EmbeddingMatrix qm = embed_texts(model, texts, 32, true);

  json results = json::array();
  for (std::size_t i = 0; i < queries.size(); ++i) {
    json hits = json::array();
    t << queries[i].id << ": " << queries[i].text << "\n";
    for (const auto& h : top_k(store, qm.row(i), o.k)) {
      hits.push_back({{"id", h.id}, {"score", h.score}});
      t << "  " << fixed(h.score) << "  " << h.id << "\n";
    }
    results.push_back({{"query_id", queries[i].id}, {"query", queries[i].text}, {"hits", hits}});
  }
  emit({{"command", "search"}, {"mode", "top_k"}, {"k", o.k}, {"results", results}});
  table(o.quiet, t.str());
  return kOk;
}

struct BenchCliOptions {
  std::string checkpoint, data, mode = "cpu_smart";
  bool paired = false, quiet = false;
  BenchOptions bench;
};

json bench_json(const BenchReport& r) {
  return {{"mode", std::string(to_string(r.mode))},
          {"sentences_per_second", r.sentences_per_second},
          {"total_sentences", r.total_sentences},
          {"wall_seconds", r.wall_seconds},
          {"padded_token_count", r.padded_token_count}};
}

int cmd_bench(const BenchCliOptions& o) {
  const SentenceModel model = open_checkpoint(o.checkpoint);
  require_file(o.data, "--data");
  if (o.bench.batch_size == 0) throw ConfigError("--batch-size", "must be >= 1");
  if (o.bench.repeats == 0) throw ConfigError("--repeats", "must be >= 1");
  std::vector<std::string> sentences;
  for (auto& e : load_corpus(o.data)) sentences.push_back(std::move(e.text));
  if (sentences.empty()) throw DataUnavailable(o.data + ": no records");

  std::vector<BenchReport> reports;
  json report = {{"command", "bench"}, {"batch_size", o.bench.batch_size}};
  if (o.paired) {
    const PairedBench p = paired_bench(model, sentences, o.bench);
    reports = {p.naive, p.smart};
    report["speedup"] = p.speedup();
  } else {
    BenchMode mode;
    if (o.mode == "cpu_naive") {
      mode = BenchMode::kCpuNaive;
    } else if (o.mode == "cpu_smart") {
      mode = BenchMode::kCpuSmart;
    } else {
      throw ConfigError("--mode", "expected cpu_naive|cpu_smart");
    }
    reports = {throughput_bench(model, sentences, mode == BenchMode::kCpuSmart, o.bench)};
  }
  report["reports"] = json::array();
  std::ostringstream t;
  t << "mode         sent/s     padded tokens\n";
  for (const auto& r : reports) {
    report["reports"].push_back(bench_json(r));
    char line[128];
    std::snprintf(line, sizeof line, "%-10s %9.1f  %14zu\n", std::string(to_string(r.mode)).c_str(),
                  r.sentences_per_second, r.padded_token_count);
    t << line;
  }
  if (o.paired) t << "speedup      " << fixed(report["speedup"].get<double>(), 2) << "x\n";
  emit(report);
  table(o.quiet, t.str());
  return kOk;
}

int cmd_inspect(const std::string& ckpt, const std::string& store_path, bool with_vocab) {
  if (!store_path.empty()) {
    if (!fs::is_regular_file(store_path)) throw IncompatibleError("cannot read store " + store_path);
    const EmbeddingStore store = load_store(store_path);
    emit({{"command", "inspect"},
          {"store", store_path},
          {"format_version", kStoreVersion},
          {"count", store.size()},
          {"dim", store.dim()}});
    return kOk;
  }
  if (ckpt.empty()) throw ConfigError("--checkpoint", "give --checkpoint or --store");
  if (!fs::is_regular_file(ckpt)) throw IncompatibleError("cannot read checkpoint " + ckpt);
  json manifest = json::parse(read_checkpoint_manifest(ckpt));
  manifest["vocab_size"] = manifest["encoder"]["vocab_size"];
  if (!with_vocab) manifest.erase("vocab");
  manifest["file_bytes"] = fs::file_size(ckpt);
  emit({{"command", "inspect"}, {"checkpoint", ckpt}, {"manifest", manifest}});
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  Overrides overrides;
  std::vector<std::string> args;
  try {
    args = split_overrides(argc, argv, overrides);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  }

  CLI::App app{"Sentence embedding trainer, evaluator and search tool"};
  app.require_subcommand(1);

  ConfigOptions train_opts, ablate_opts;
  auto* train_cmd = app.add_subcommand("train", "fine-tune a model, writing a run directory");
  train_opts.add_to(train_cmd);
  auto* ablate_cmd = app.add_subcommand("ablate", "pooling x concatenation grid over seeds");
  ablate_opts.add_to(ablate_cmd);

  std::string embed_ckpt, embed_corpus_path, embed_out;
  std::size_t embed_batch = 32;
  bool embed_naive = false, embed_quiet = false;
  auto* embed_cmd = app.add_subcommand("embed", "embed a JSONL corpus into a store file");
  embed_cmd->add_option("--checkpoint", embed_ckpt)->required();
  embed_cmd->add_option("--corpus", embed_corpus_path, "JSONL with id and text")->required();
  embed_cmd->add_option("--out", embed_out, "store file to write")->required();
  embed_cmd->add_option("--batch-size", embed_batch);
  embed_cmd->add_flag("--naive", embed_naive, "batch in input order");
  embed_cmd->add_flag("--quiet", embed_quiet);

  EvalOptions eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_opts.checkpoint)->required();
  eval_cmd->add_option("--data", eval_opts.data)->required();
  eval_cmd->add_option("--task", eval_opts.task, "sts|triplet|probe");
  eval_cmd->add_option("--similarity", eval_opts.similarity, "cosine|neg_euclidean|neg_manhattan");
  eval_cmd->add_option("--metric", eval_opts.metric, "triplet distance: euclidean|cosine");
  eval_cmd->add_option("--batch-size", eval_opts.batch_size);
  eval_cmd->add_option("--folds", eval_opts.folds, "probe folds");
  eval_cmd->add_option("--probe-epochs", eval_opts.probe_epochs);
  eval_cmd->add_option("--seed", eval_opts.seed, "probe fold seed");
  eval_cmd->add_flag("--quiet", eval_opts.quiet);

  SearchOptions search_opts;
  auto* search_cmd = app.add_subcommand("search", "exact cosine search over a store");
  search_cmd->add_option("--store", search_opts.store)->required();
  search_cmd->add_option("--checkpoint", search_opts.checkpoint, "model used to embed queries");
  search_cmd->add_option("--query", search_opts.query_texts, "query text (repeatable)");
  search_cmd->add_option("--queries", search_opts.queries, "JSONL of id/text queries");
  search_cmd->add_option("-k,--k", search_opts.k);
  search_cmd->add_flag("--pair", search_opts.pair, "most similar pair in the store");
  search_cmd->add_flag("--quiet", search_opts.quiet);

  BenchCliOptions bench_opts;
  auto* bench_cmd = app.add_subcommand("bench", "encoding throughput");
  bench_cmd->add_option("--checkpoint", bench_opts.checkpoint)->required();
  bench_cmd->add_option("--data", bench_opts.data, "JSONL with id and text")->required();
  bench_cmd->add_option("--mode", bench_opts.mode, "cpu_naive|cpu_smart");
  bench_cmd->add_flag("--paired", bench_opts.paired, "run both modes and report the ratio");
  bench_cmd->add_option("--batch-size", bench_opts.bench.batch_size);
  bench_cmd->add_option("--warmup", bench_opts.bench.warmup_batches, "untimed batches");
  bench_cmd->add_option("--repeats", bench_opts.bench.repeats, "timed runs; best is reported");
  bench_cmd->add_flag("--quiet", bench_opts.quiet);

  std::string inspect_ckpt, inspect_store;
  bool inspect_vocab = false;
  auto* inspect_cmd = app.add_subcommand("inspect", "dump checkpoint or store metadata");
  inspect_cmd->add_option("--checkpoint", inspect_ckpt);
  inspect_cmd->add_option("--store", inspect_store);
  inspect_cmd->add_flag("--vocab", inspect_vocab, "include the vocabulary");

  std::vector<char*> cargv;
  for (auto& a : args) cargv.push_back(a.data());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (!overrides.dotted.empty() && !train_cmd->parsed() && !ablate_cmd->parsed()) {
      throw ConfigError(overrides.dotted.front().first, "config overrides apply to train and ablate");
    }
    if (train_cmd->parsed()) return cmd_train(train_opts, overrides);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate_opts, overrides);
    if (embed_cmd->parsed()) {
      return cmd_embed(embed_ckpt, embed_corpus_path, embed_out, embed_batch, embed_naive,
                       embed_quiet);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_opts);
    if (search_cmd->parsed()) return cmd_search(search_opts);
    if (bench_cmd->parsed()) return cmd_bench(bench_opts);
    if (inspect_cmd->parsed()) return cmd_inspect(inspect_ckpt, inspect_store, inspect_vocab);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataFormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DataUnavailable& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const IncompatibleError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kIncompatible;
  } catch (const FormatError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kIncompatible;
  } catch (const DegenerateInputError& e) {
    std::cerr << "degenerate input: " << e.what() << "\n";
    return kDegenerate;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
