#include "semb/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace semb {

std::vector<double> fractional_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (double(i) + double(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw InvalidArgument("correlation: sequences of length " + std::to_string(xs.size()) +
                          " and " + std::to_string(ys.size()));
  }
  if (xs.size() < 2) throw InvalidArgument("correlation needs at least 2 points");
  const double n = double(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DegenerateInputError("correlation undefined for a constant sequence");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw InvalidArgument("correlation: sequences of length " + std::to_string(xs.size()) +
                          " and " + std::to_string(ys.size()));
  }
  const auto rx = fractional_ranks(xs);
  const auto ry = fractional_ranks(ys);
  return pearson(rx, ry);
}

Similarity parse_similarity(std::string_view name) {
  if (name == "cosine") return Similarity::kCosine;
  if (name == "neg_euclidean") return Similarity::kNegEuclidean;
  if (name == "neg_manhattan") return Similarity::kNegManhattan;
  throw InvalidArgument("unknown similarity '" + std::string(name) +
                        "' (expected cosine|neg_euclidean|neg_manhattan)");
}

std::string_view to_string(Similarity similarity) {
  switch (similarity) {
    case Similarity::kCosine: return "cosine";
    case Similarity::kNegEuclidean: return "neg_euclidean";
    case Similarity::kNegManhattan: return "neg_manhattan";
  }
  return "cosine";
}

double similarity(std::span<const float> a, std::span<const float> b, Similarity kind) {
  if (a.size() != b.size()) throw DimensionError("similarity: dimension mismatch");
  switch (kind) {
    case Similarity::kCosine:
      return cosine_similarity(a, b);
    case Similarity::kNegEuclidean: {
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - b[i];
        s += d * d;
      }
      return -std::sqrt(s);
    }
    case Similarity::kNegManhattan: {
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(double(a[i]) - b[i]);
      return -s;
    }
  }
  return 0.0;
}

CorrelationReport correlate_pairs(const EmbeddingMatrix& a, const EmbeddingMatrix& b,
                                  std::span<const double> gold, Similarity kind) {
  if (a.rows() != b.rows() || a.rows() != gold.size()) {
    throw DimensionError("correlate_pairs: row counts differ");
  }
  if (gold.size() < kMinStsPairs) {
    throw DegenerateInputError("STS evaluation needs at least " +
                               std::to_string(kMinStsPairs) + " pairs, got " +
                               std::to_string(gold.size()));
  }
  std::vector<double> scores(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) scores[i] = similarity(a.row(i), b.row(i), kind);
  return {spearman(scores, gold), pearson(scores, gold), gold.size()};
}

CorrelationReport sts_eval(const SentenceEmbedder& embedder,
                           std::span<const PairExample> pairs, Similarity kind) {
  std::vector<std::string> left, right;
  std::vector<double> gold;
  for (const auto& p : pairs) {
    if (!p.score) throw InvalidArgument("sts_eval: pair without a gold score");
    left.push_back(p.a);
    right.push_back(p.b);
    gold.push_back(*p.score);
  }
  if (gold.size() < kMinStsPairs) {
    throw DegenerateInputError("STS evaluation needs at least " +
                               std::to_string(kMinStsPairs) + " pairs, got " +
                               std::to_string(gold.size()));
  }
  return correlate_pairs(embedder.embed(left), embedder.embed(right), gold, kind);
}

TripletMetric parse_triplet_metric(std::string_view name) {
  if (name == "euclidean") return TripletMetric::kEuclidean;
  if (name == "cosine") return TripletMetric::kCosineDistance;
  throw InvalidArgument("unknown triplet metric '" + std::string(name) +
                        "' (expected euclidean|cosine)");
}

std::string_view to_string(TripletMetric metric) {
  return metric == TripletMetric::kEuclidean ? "euclidean" : "cosine";
}

double triplet_accuracy(const EmbeddingMatrix& anchors, const EmbeddingMatrix& positives,
                        const EmbeddingMatrix& negatives, TripletMetric metric) {
  const std::size_t n = anchors.rows();
  if (n == 0) throw InvalidArgument("triplet_accuracy needs at least one triplet");
  if (positives.rows() != n || negatives.rows() != n) {
    throw DimensionError("triplet_accuracy: row counts differ");
  }
  auto distance = [&](std::span<const float> x, std::span<const float> y) {
    return metric == TripletMetric::kEuclidean
               ? -similarity(x, y, Similarity::kNegEuclidean)
               : 1.0 - cosine_similarity(x, y);
  };
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (distance(anchors.row(i), positives.row(i)) <
        distance(anchors.row(i), negatives.row(i))) {
      ++correct;
    }
  }
  return double(correct) / double(n);
}

double triplet_accuracy(const SentenceEmbedder& embedder,
                        std::span<const TripletExample> triplets, TripletMetric metric) {
  std::vector<std::string> a, p, n;
  for (const auto& t : triplets) {
    a.push_back(t.anchor);
    p.push_back(t.positive);
    n.push_back(t.negative);
  }
  if (a.empty()) throw InvalidArgument("triplet_accuracy needs at least one triplet");
  return triplet_accuracy(embedder.embed(a), embedder.embed(p), embedder.embed(n), metric);
}

namespace {

// Standardised features [rows x d] using statistics of `train` rows.
struct Standardizer {
  std::vector<double> mean, inv_std;

  Standardizer(const EmbeddingMatrix& x, std::span<const std::size_t> train) {
    const std::size_t d = x.dim;
    mean.assign(d, 0.0);
    inv_std.assign(d, 1.0);
    for (std::size_t r : train) {
      for (std::size_t j = 0; j < d; ++j) mean[j] += x.row(r)[j];
    }
    for (double& m : mean) m /= double(train.size());
    std::vector<double> var(d, 0.0);
    for (std::size_t r : train) {
      for (std::size_t j = 0; j < d; ++j) {
        const double c = x.row(r)[j] - mean[j];
        var[j] += c * c;
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double sd = std::sqrt(var[j] / double(train.size()));
      inv_std[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
  }

  std::vector<double> apply(std::span<const float> row) const {
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) * inv_std[j];
    return out;
  }
};

// Multinomial logistic regression with bias, full-batch gradient descent.
class SoftmaxClassifier {
 public:
  SoftmaxClassifier(std::size_t dim, std::size_t classes)
      : dim_(dim), classes_(classes), w_((dim + 1) * classes, 0.0) {}

  void fit(const std::vector<std::vector<double>>& x, std::span<const std::size_t> y,
           const ProbeConfig& cfg) {
    const double n = double(x.size());
    std::vector<double> grad(w_.size());
    std::vector<double> p(classes_);
    for (std::size_t epoch = 0; epoch < cfg.probe_epochs; ++epoch) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        probs(x[i], p);
        for (std::size_t c = 0; c < classes_; ++c) {
          const double err = p[c] - (y[i] == c ? 1.0 : 0.0);
          for (std::size_t j = 0; j < dim_; ++j) grad[j * classes_ + c] += err * x[i][j];
          grad[dim_ * classes_ + c] += err;
        }
      }
      for (std::size_t k = 0; k < w_.size(); ++k) {
        const bool is_bias = k >= dim_ * classes_;
        const double reg = is_bias ? 0.0 : cfg.l2_strength * w_[k];
        w_[k] -= cfg.probe_lr * (grad[k] / n + reg);
      }
    }
  }

  std::size_t predict(const std::vector<double>& x) const {
    std::vector<double> p(classes_);
    probs(x, p);
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }

 private:
  void probs(const std::vector<double>& x, std::vector<double>& p) const {
    for (std::size_t c = 0; c < classes_; ++c) {
      double z = w_[dim_ * classes_ + c];
      for (std::size_t j = 0; j < dim_; ++j) z += w_[j * classes_ + c] * x[j];
      p[c] = z;
    }
    const double mx = *std::max_element(p.begin(), p.end());
    double total = 0.0;
    for (double& v : p) {
      v = std::exp(v - mx);
      total += v;
    }
    for (double& v : p) v /= total;
  }

  std::size_t dim_, classes_;
  std::vector<double> w_;  // [(dim + 1) x classes], last row is the bias
};

}  // namespace

ProbeResult probe_eval(const EmbeddingMatrix& embeddings, std::span<const std::size_t> labels,
                       const ProbeConfig& config) {
  const std::size_t n = embeddings.rows();
  if (labels.size() != n) throw DimensionError("probe_eval: labels/embeddings count differ");
  if (config.folds < 2) throw InvalidArgument("probe_eval: folds must be >= 2");
  if (n < config.folds) {
    throw InvalidArgument("probe_eval: " + std::to_string(n) + " examples for " +
                          std::to_string(config.folds) + " folds");
  }
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) throw InvalidArgument("probe_eval: needs at least 2 classes");
  const std::size_t classes = by_class.rbegin()->first + 1;

  // Stratified assignment: shuffle each class, deal round-robin into folds,
  // continuing the deal across classes so fold sizes stay balanced.
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> fold_of(n);
  std::size_t next = 0;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i : members) fold_of[i] = next++ % config.folds;
  }

  ProbeResult result;
  for (std::size_t fold = 0; fold < config.folds; ++fold) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (fold_of[i] == fold ? test : train).push_back(i);
    std::set<std::size_t> train_classes;
    for (std::size_t i : train) train_classes.insert(labels[i]);
    if (test.empty() || train_classes.size() != by_class.size()) {
      result.skipped_folds.push_back(fold);
      result.warnings.push_back("fold " + std::to_string(fold) +
                                (test.empty() ? ": empty test fold"
                                              : ": a class is absent from the training folds") +
                                ", skipped");
      continue;
    }
    const Standardizer scaler(embeddings, train);
    std::vector<std::vector<double>> xs;
    std::vector<std::size_t> ys;
    for (std::size_t i : train) {
      xs.push_back(scaler.apply(embeddings.row(i)));
      ys.push_back(labels[i]);
    }
    SoftmaxClassifier clf(embeddings.dim, classes);
    clf.fit(xs, ys, config);
    std::size_t correct = 0;
    for (std::size_t i : test) {
      if (clf.predict(scaler.apply(embeddings.row(i))) == labels[i]) ++correct;
    }
    result.fold_accuracies.push_back(double(correct) / double(test.size()));
  }
  if (result.fold_accuracies.empty()) {
    throw DegenerateInputError("probe_eval: every fold was skipped");
  }
  result.mean_accuracy = std::accumulate(result.fold_accuracies.begin(),
                                         result.fold_accuracies.end(), 0.0) /
                         double(result.fold_accuracies.size());
  return result;
}

std::string format_report_table(const std::vector<std::pair<std::string, double>>& metrics) {
  std::size_t width = 6;
  for (const auto& [name, value] : metrics) width = std::max(width, name.size());
  std::string out;
  for (const auto& [name, value] : metrics) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%8.2f", value * 100.0);
    out += name + std::string(width - name.size() + 2, ' ') + buf + "\n";
  }
  return out;
}

}  // namespace semb
