#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "semb/embedding.hpp"
#include "semb/model.hpp"

namespace semb {

inline constexpr std::uint32_t kStoreVersion = 1;

// Immutable after construction; norms are the L2 norms of the rows.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(std::vector<std::string> ids, EmbeddingMatrix matrix);
  // Empty store that still knows its dimension.
  explicit EmbeddingStore(std::size_t dim);

  std::size_t dim() const { return matrix_.dim; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const EmbeddingMatrix& matrix() const { return matrix_; }
  const std::vector<double>& norms() const { return norms_; }
  std::span<const float> row(std::size_t i) const { return matrix_.row(i); }

  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
    return a.ids_ == b.ids_ && a.matrix_.dim == b.matrix_.dim && a.matrix_.data == b.matrix_.data;
  }

 private:
  std::vector<std::string> ids_;
  EmbeddingMatrix matrix_;
  std::vector<double> norms_;
};

std::string serialize_store(const EmbeddingStore& store);
EmbeddingStore deserialize_store(std::string_view bytes);
void save_store(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_store(const std::filesystem::path& path);

struct CorpusEntry {
  std::string id;
  std::string text;
};

// Row i of the store embeds corpus[i]. Duplicate ids throw InvalidArgument.
EmbeddingStore embed_corpus(const SentenceModel& model, std::span<const CorpusEntry> corpus,
                            std::size_t batch_size, bool smart);

struct SearchHit {
  std::string id;
  float score = 0.0F;
};

// Cosine score as used by every search routine: f64 dot product over the
// stored f32 values, divided by the norms, rounded to f32.
float cosine_score(std::span<const float> a, double norm_a, std::span<const float> b,
                   double norm_b);

// Exact top-k by cosine, descending; ties by ascending id.
std::vector<SearchHit> top_k(const EmbeddingStore& store, std::span<const float> query,
                             std::size_t k);

struct PairHit {
  std::string id_i, id_j;
  std::size_t i = 0, j = 0;
  float score = 0.0F;
  std::uint64_t comparisons = 0;
};

// Exhaustive scan over unordered pairs (i < j). Ties go to the
// lexicographically smallest (i, j). `threads` = 0 reads SEMB_THREADS.
PairHit most_similar_pair(const EmbeddingStore& store, std::size_t threads = 0);

// Worker count from SEMB_THREADS (default 1).
std::size_t worker_threads();

enum class BenchMode { kCpuNaive, kCpuSmart };
std::string_view to_string(BenchMode mode);

struct BenchReport {
  BenchMode mode = BenchMode::kCpuNaive;
  double sentences_per_second = 0.0;
  std::size_t total_sentences = 0;
  double wall_seconds = 0.0;
  std::size_t padded_token_count = 0;
};

struct BenchOptions {
  std::size_t batch_size = 32;
  std::size_t warmup_batches = 1;
  std::size_t repeats = 1;  // best (shortest) timed run is reported
};

// Times tokenisation plus infer-mode embedding of all sentences.
BenchReport throughput_bench(const SentenceModel& model, std::span<const std::string> sentences,
                             bool smart, const BenchOptions& options = {});

struct PairedBench {
  BenchReport naive, smart;
  double speedup() const { return smart.sentences_per_second / naive.sentences_per_second; }
};

// Alternates naive and smart repeats so both see the same machine state.
PairedBench paired_bench(const SentenceModel& model, std::span<const std::string> sentences,
                         const BenchOptions& options = {});

}  // namespace semb
