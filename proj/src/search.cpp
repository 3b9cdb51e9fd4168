#include "semb/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>
#include <unordered_set>

#include "binary_io.hpp"

namespace semb {
namespace {

constexpr std::string_view kMagic = "SEMV";

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

double l2_norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

}  // namespace

EmbeddingStore::EmbeddingStore(std::size_t dim) { matrix_.dim = dim; }

EmbeddingStore::EmbeddingStore(std::vector<std::string> ids, EmbeddingMatrix matrix)
    : ids_(std::move(ids)), matrix_(std::move(matrix)) {
  if (matrix_.rows() != ids_.size()) {
    throw DimensionError("store: " + std::to_string(ids_.size()) + " ids for " +
                         std::to_string(matrix_.rows()) + " rows");
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& id : ids_) {
    if (!seen.insert(id).second) throw InvalidArgument("store: duplicate id '" + id + "'");
  }
  norms_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) norms_.push_back(l2_norm(matrix_.row(i)));
}

std::string serialize_store(const EmbeddingStore& store) {
  std::string out(kMagic);
  detail::put_u32(out, kStoreVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(store.dim()));
  detail::put_u64(out, store.size());
  const std::size_t body_begin = out.size();
  std::string ids;
  for (const auto& id : store.ids()) {
    detail::put_u32(ids, static_cast<std::uint32_t>(id.size()));
    ids.append(id);
  }
  detail::put_u64(out, ids.size());
  out.append(ids);
  for (float v : store.matrix().data) detail::put_f32(out, v);
  detail::put_u32(out, detail::crc32_of(std::string_view(out).substr(body_begin)));
  return out;
}

EmbeddingStore deserialize_store(std::string_view bytes) {
  detail::Reader reader(bytes, "store");
  if (reader.take(4) != kMagic) throw FormatError("store: bad magic bytes");
  const std::uint32_t version = reader.u32();
  if (version != kStoreVersion) throw UnsupportedVersionError(version, kStoreVersion);
  const std::uint32_t dim = reader.u32();
  const std::uint64_t count = reader.u64();
  const std::size_t body_begin = reader.position();
  if (reader.remaining() < 4) throw TruncatedFileError("store: missing body");
  const std::string_view body = bytes.substr(body_begin, reader.remaining() - 4);
  const std::uint32_t stored_crc = detail::Reader(bytes.substr(bytes.size() - 4), "store").u32();
  if (detail::crc32_of(body) != stored_crc) throw ChecksumError("store: CRC32 mismatch");

  detail::Reader br(body, "store");
  const std::uint64_t ids_len = br.u64();
  detail::Reader ir(br.take(static_cast<std::size_t>(ids_len)), "store");
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1U << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t n = ir.u32();
    ids.emplace_back(ir.take(n));
  }
  if (ir.remaining() != 0) throw FormatError("store: ids block has trailing bytes");
  if (dim == 0 && count > 0) throw FormatError("store: zero dimension with rows");
  EmbeddingMatrix matrix(static_cast<std::size_t>(count), dim);
  matrix.dim = dim;
  if (br.remaining() != matrix.data.size() * 4) {
    throw TruncatedFileError("store: expected " + std::to_string(matrix.data.size() * 4) +
                             " bytes of rows, found " + std::to_string(br.remaining()));
  }
  for (float& v : matrix.data) v = br.f32();
  return {std::move(ids), std::move(matrix)};
}

void save_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  detail::write_file(path, serialize_store(store));
}

EmbeddingStore load_store(const std::filesystem::path& path) {
  return deserialize_store(detail::read_file(path));
}

EmbeddingStore embed_corpus(const SentenceModel& model, std::span<const CorpusEntry> corpus,
                            std::size_t batch_size, bool smart) {
  std::vector<std::string> ids, texts;
  std::unordered_set<std::string> seen;
  for (const auto& e : corpus) {
    if (!seen.insert(e.id).second) throw InvalidArgument("corpus: duplicate id '" + e.id + "'");
    ids.push_back(e.id);
    texts.push_back(e.text);
  }
  if (corpus.empty()) return EmbeddingStore(model.dim());
  return {std::move(ids), embed_texts(model, texts, batch_size, smart)};
}

float cosine_score(std::span<const float> a, double norm_a, std::span<const float> b,
                   double norm_b) {
  return static_cast<float>(dot(a, b) / (norm_a * norm_b));
}

std::vector<SearchHit> top_k(const EmbeddingStore& store, std::span<const float> query,
                             std::size_t k) {
  if (k == 0) throw InvalidArgument("top_k: k must be >= 1");
  if (query.size() != store.dim()) {
    throw DimensionError("top_k: query has dimension " + std::to_string(query.size()) +
                         ", store has " + std::to_string(store.dim()));
  }
  const double qn = l2_norm(query);
  if (qn == 0.0) throw DegenerateInputError("top_k: zero-norm query");

  std::vector<std::pair<float, std::size_t>> scored;
  scored.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const double n = store.norms()[i];
    // A zero row has no direction; rank it below everything else.
    const float s = n == 0.0 ? -std::numeric_limits<float>::infinity()
                             : cosine_score(query, qn, store.row(i), n);
    scored.emplace_back(s, i);
  }
  const auto& ids = store.ids();
  auto better = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return ids[a.second] < ids[b.second];
  };
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), better);
  std::vector<SearchHit> hits;
  for (std::size_t i = 0; i < take; ++i) hits.push_back({ids[scored[i].second], scored[i].first});
  return hits;
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("SEMB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<std::size_t>(v);
  }
  return 1;
}

namespace {

struct PairBest {
  std::size_t i = 0, j = 0;
  float score = -std::numeric_limits<float>::infinity();
  bool found = false;
  std::uint64_t comparisons = 0;
};

bool pair_better(const PairBest& a, const PairBest& b) {
  if (!b.found) return a.found;
  if (!a.found) return false;
  if (a.score != b.score) return a.score > b.score;
  return std::pair(a.i, a.j) < std::pair(b.i, b.j);
}

}  // namespace

PairHit most_similar_pair(const EmbeddingStore& store, std::size_t threads) {
  const std::size_t n = store.size();
  if (n < 2) throw InvalidArgument("most_similar_pair needs at least 2 embeddings");
  if (threads == 0) threads = worker_threads();
  threads = std::min(threads, n - 1);

  const std::size_t d = store.dim();
  std::vector<double> rows(n * d);
  for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = store.matrix().data[k];
  const auto& norms = store.norms();

  // Rows are dealt round-robin so shards see similar pair counts.
  auto scan = [&](std::size_t shard, std::size_t shards) {
    PairBest best;
    for (std::size_t i = shard; i < n; i += shards) {
      const double* ri = &rows[i * d];
      for (std::size_t j = i + 1; j < n; ++j) {
        const double* rj = &rows[j * d];
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += ri[k] * rj[k];
        ++best.comparisons;
        const double denom = norms[i] * norms[j];
        if (denom == 0.0) continue;
        const float score = static_cast<float>(s / denom);
        if (!best.found || score > best.score) best = {i, j, score, true, best.comparisons};
      }
    }
    return best;
  };

  std::vector<PairBest> results(threads);
  if (threads == 1) {
    results[0] = scan(0, 1);
  } else {
    std::vector<std::thread> workers;
    for (std::size_t t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] { results[t] = scan(t, threads); });
    }
    for (auto& w : workers) w.join();
  }
  PairBest best;
  std::uint64_t comparisons = 0;
  for (const auto& r : results) {
    comparisons += r.comparisons;
    if (pair_better(r, best)) best = r;
  }
  if (!best.found) throw DegenerateInputError("most_similar_pair: every embedding has zero norm");
  return {store.ids()[best.i], store.ids()[best.j], best.i, best.j, best.score, comparisons};
}

std::string_view to_string(BenchMode mode) {
  return mode == BenchMode::kCpuSmart ? "cpu_smart" : "cpu_naive";
}

namespace {

BenchReport timed_run(const SentenceModel& model, std::span<const std::string> sentences,
                      bool smart, std::size_t batch_size) {
  using Clock = std::chrono::steady_clock;
  EncodeStats stats;
  const auto start = Clock::now();
  std::vector<TokenizedSentence> tokens;
  tokens.reserve(sentences.size());
  for (const auto& s : sentences) tokens.push_back(model.tokenize(s));
  embed_tokenized(model, tokens, batch_size, smart, &stats);
  const double wall = std::chrono::duration<double>(Clock::now() - start).count();
  BenchReport r;
  r.mode = smart ? BenchMode::kCpuSmart : BenchMode::kCpuNaive;
  r.total_sentences = sentences.size();
  r.wall_seconds = wall;
  r.sentences_per_second = wall > 0.0 ? double(sentences.size()) / wall : 0.0;
  r.padded_token_count = stats.padded_tokens;
  return r;
}

void warmup(const SentenceModel& model, std::span<const std::string> sentences,
            const BenchOptions& options) {
  const std::size_t n = std::min(sentences.size(), options.warmup_batches * options.batch_size);
  if (n > 0) embed_texts(model, sentences.first(n), options.batch_size, false);
}

void validate(std::span<const std::string> sentences, const BenchOptions& options) {
  if (sentences.empty()) throw InvalidArgument("bench needs at least one sentence");
  if (options.batch_size == 0) throw InvalidArgument("bench: batch_size must be >= 1");
  if (options.repeats == 0) throw InvalidArgument("bench: repeats must be >= 1");
}

}  // namespace

BenchReport throughput_bench(const SentenceModel& model, std::span<const std::string> sentences,
                             bool smart, const BenchOptions& options) {
  validate(sentences, options);
  warmup(model, sentences, options);
  BenchReport best;
  for (std::size_t r = 0; r < options.repeats; ++r) {
    BenchReport run = timed_run(model, sentences, smart, options.batch_size);
    if (r == 0 || run.wall_seconds < best.wall_seconds) best = run;
  }
  return best;
}

PairedBench paired_bench(const SentenceModel& model, std::span<const std::string> sentences,
                         const BenchOptions& options) {
  validate(sentences, options);
  warmup(model, sentences, options);
  PairedBench out;
  for (std::size_t r = 0; r < options.repeats; ++r) {
    BenchReport naive = timed_run(model, sentences, false, options.batch_size);
    BenchReport smart = timed_run(model, sentences, true, options.batch_size);
    if (r == 0 || naive.wall_seconds < out.naive.wall_seconds) out.naive = naive;
    if (r == 0 || smart.wall_seconds < out.smart.wall_seconds) out.smart = smart;
  }
  return out;
}

}  // namespace semb
