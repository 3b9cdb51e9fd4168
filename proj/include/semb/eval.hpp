#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semb/embedding.hpp"
#include "semb/errors.hpp"
#include "semb/objectives.hpp"

namespace semb {

// Average (fractional) ranks, 1-based.
std::vector<double> fractional_ranks(std::span<const double> values);

// Product-moment correlation with f64 accumulation. Throws
// DegenerateInputError on constant input, InvalidArgument on length < 2 or
// mismatched lengths.
double pearson(std::span<const double> xs, std::span<const double> ys);
// Pearson correlation of fractional ranks.
double spearman(std::span<const double> xs, std::span<const double> ys);

struct CorrelationReport {
  double spearman = 0.0;
  double pearson = 0.0;
  std::size_t n_pairs = 0;
};

enum class Similarity { kCosine, kNegEuclidean, kNegManhattan };
Similarity parse_similarity(std::string_view name);
std::string_view to_string(Similarity similarity);
double similarity(std::span<const float> a, std::span<const float> b, Similarity kind);

// Fewest pairs sts_eval accepts; with two points every correlation is +-1.
inline constexpr std::size_t kMinStsPairs = 3;

// Embeds both sides, scores each pair and correlates with the gold scores.
CorrelationReport sts_eval(const SentenceEmbedder& embedder,
                           std::span<const PairExample> pairs,
                           Similarity kind = Similarity::kCosine);
// Same on precomputed embeddings (row i of `a` pairs with row i of `b`).
CorrelationReport correlate_pairs(const EmbeddingMatrix& a, const EmbeddingMatrix& b,
                                  std::span<const double> gold, Similarity kind);

enum class TripletMetric { kEuclidean, kCosineDistance };
TripletMetric parse_triplet_metric(std::string_view name);
std::string_view to_string(TripletMetric metric);

// Fraction of triplets with d(a, p) < d(a, n); ties count as failures.
double triplet_accuracy(const EmbeddingMatrix& anchors, const EmbeddingMatrix& positives,
                        const EmbeddingMatrix& negatives,
                        TripletMetric metric = TripletMetric::kEuclidean);
double triplet_accuracy(const SentenceEmbedder& embedder,
                        std::span<const TripletExample> triplets,
                        TripletMetric metric = TripletMetric::kEuclidean);

struct ProbeConfig {
  std::size_t folds = 10;
  double l2_strength = 1e-4;
  double probe_lr = 0.5;
  std::size_t probe_epochs = 200;
  std::uint64_t seed = 1;
};

struct ProbeResult {
  double mean_accuracy = 0.0;
  std::vector<double> fold_accuracies;   // evaluated folds only
  std::vector<std::size_t> skipped_folds;
  std::vector<std::string> warnings;
};

// Seeded stratified k-fold cross-validation of a multinomial logistic
// regression (full-batch gradient descent with L2) on frozen embeddings.
ProbeResult probe_eval(const EmbeddingMatrix& embeddings, std::span<const std::size_t> labels,
                       const ProbeConfig& config = {});

// Fixed-width report: one row per metric, values x100 with two decimals.
std::string format_report_table(
    const std::vector<std::pair<std::string, double>>& metrics);

}  // namespace semb
