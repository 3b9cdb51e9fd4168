#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "semb/eval.hpp"
#include "support.hpp"

using namespace semb;
using semb::test::Gen;

namespace {

// Textbook Spearman: sort, assign average ranks by scanning tie groups,
// then the covariance formula.
double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double w : v) {
        less += w < v[i];
        equal += w == v[i];
      }
      r[i] = less + (equal + 1) / 2;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Embeds known sentences to fixed vectors.
class TableEmbedder : public SentenceEmbedder {
 public:
  explicit TableEmbedder(std::map<std::string, std::vector<float>> table)
      : table_(std::move(table)) {}
  std::size_t dim() const override { return table_.begin()->second.size(); }
  EmbeddingMatrix embed(std::span<const std::string> texts) const override {
    EmbeddingMatrix out(texts.size(), dim());
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const auto& v = table_.at(texts[i]);
      std::copy(v.begin(), v.end(), out.row(i).begin());
    }
    return out;
  }

 private:
  std::map<std::string, std::vector<float>> table_;
};

EmbeddingMatrix random_matrix(Gen& gen, std::size_t rows, std::size_t dim) {
  EmbeddingMatrix m(rows, dim);
  for (float& v : m.data) v = static_cast<float>(gen.normal());
  return m;
}

}  // namespace

TEST_CASE("spearman examples") {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  const std::vector<double> up = {2, 4, 8, 16, 32}, down = {5, 4, 3, 2, 1};
  CHECK(spearman(x, up) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(spearman(x, down) == doctest::Approx(-1.0).epsilon(1e-15));

  const std::vector<double> tx = {1, 2, 2, 4}, ty = {1, 2, 3, 4};
  CHECK(fractional_ranks(tx) == std::vector<double>{1, 2.5, 2.5, 4});
  CHECK(std::abs(spearman(tx, ty) - oracle_spearman(tx, ty)) < 1e-12);

  const std::vector<double> flat = {3, 3, 3, 3};
  CHECK_THROWS_AS(spearman(flat, ty), DegenerateInputError);
  const std::vector<double> one = {1};
  CHECK_THROWS_AS(spearman(one, one), InvalidArgument);
  CHECK_THROWS_AS(spearman(tx, x), InvalidArgument);
}

TEST_CASE("pearson examples") {
  const std::vector<double> x = {1, 2, 3, 4};
  std::vector<double> affine, neg;
  for (double v : x) {
    affine.push_back(2 * v + 3);
    neg.push_back(-v);
  }
  CHECK(pearson(x, affine) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson(x, neg) == doctest::Approx(-1.0).epsilon(1e-15));
  // r = 3 / sqrt(2 * 14/3)
  const std::vector<double> a = {1, 2, 3}, b = {1, 2, 4};
  CHECK(std::abs(pearson(a, b) - 3.0 / std::sqrt(2.0 * 14.0 / 3.0)) < 1e-12);
  CHECK(std::abs(pearson(a, b) - 0.98198) < 1e-5);
}

TEST_CASE("correlation properties") {
  Gen gen(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + gen.index(40);
    std::vector<double> x(n), y(n);
    // Small integer ranges force ties.
    for (auto& v : x) v = double(gen.index(6));
    for (auto& v : y) v = gen.uniform();
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) x[0] += 1;

    const double rho = spearman(x, y);
    CHECK(std::abs(rho - pearson(fractional_ranks(x), fractional_ranks(y))) < 1e-12);
    CHECK(std::abs(rho - oracle_spearman(x, y)) < 1e-12);
    CHECK(std::abs(rho) <= 1.0);

    std::vector<double> mx(n), my(n);
    for (std::size_t i = 0; i < n; ++i) {
      mx[i] = std::exp(x[i]) - 7.0;
      my[i] = y[i] * y[i] * y[i];
    }
    CHECK(spearman(mx, my) == rho);

    const double r = pearson(x, y);
    std::vector<double> ax(n), ay(n);
    const double s1 = gen.uniform(0.1, 10), s2 = gen.uniform(0.1, 10);
    for (std::size_t i = 0; i < n; ++i) {
      ax[i] = s1 * x[i] + 4.0;
      ay[i] = s2 * y[i] - 1.0;
    }
    CHECK(std::abs(pearson(ax, ay) - r) < 1e-12);
  }
}

TEST_CASE("sts_eval") {
  // One-hot sentences; gold equals the constructed cosine.
  std::map<std::string, std::vector<float>> table = {
      {"x", {1, 0, 0}}, {"y", {0, 1, 0}}, {"xy", {1, 1, 0}}, {"xz", {1, 0, 1}}, {"xyz", {1, 1, 1}}};
  const TableEmbedder emb(table);
  std::vector<PairExample> pairs;
  for (const auto& [a, va] : table) {
    for (const auto& [b, vb] : table) {
      if (a < b) {
        pairs.push_back({a, b, std::nullopt,
                         5.0 * cosine_similarity(std::span<const float>(va), vb)});
      }
    }
  }
  const auto report = sts_eval(emb, pairs);
  CHECK(report.spearman == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.pearson == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(report.n_pairs == pairs.size());

  auto shuffled = pairs;
  std::reverse(shuffled.begin(), shuffled.end());
  std::swap(shuffled[0], shuffled[3]);
  CHECK(sts_eval(emb, shuffled).spearman == report.spearman);

  // Positive rescaling of each embedding leaves cosine-based scores intact.
  auto scaled = table;
  float k = 0.5F;
  for (auto& [name, v] : scaled) {
    for (float& e : v) e *= k;
    k *= 4.0F;
  }
  const auto rescaled = sts_eval(TableEmbedder(scaled), pairs);
  CHECK(rescaled.spearman == report.spearman);
  CHECK(std::abs(rescaled.pearson - report.pearson) < 1e-12);

  const std::vector<PairExample> two(pairs.begin(), pairs.begin() + 2);
  CHECK_THROWS_AS(sts_eval(emb, two), DegenerateInputError);

  std::map<std::string, std::vector<float>> with_zero = table;
  with_zero["zero"] = {0, 0, 0};
  std::vector<PairExample> bad = pairs;
  bad.push_back({"zero", "x", std::nullopt, 1.0});
  CHECK_THROWS_AS(sts_eval(TableEmbedder(with_zero), bad), DegenerateInputError);
  CHECK_NOTHROW(sts_eval(TableEmbedder(with_zero), bad, Similarity::kNegEuclidean));
}

TEST_CASE("sts on random embeddings is near zero") {
  Gen gen(2);
  const auto a = random_matrix(gen, 1000, 16), b = random_matrix(gen, 1000, 16);
  const auto gold = gen.vec(1000, 0, 5);
  const auto report = correlate_pairs(a, b, gold, Similarity::kCosine);
  CHECK(std::abs(report.spearman) < 0.1);
}

TEST_CASE("alternative similarities") {
  const std::vector<float> a = {1, 2}, b = {4, 6};
  CHECK(similarity(a, b, Similarity::kNegEuclidean) == doctest::Approx(-5.0));
  CHECK(similarity(a, b, Similarity::kNegManhattan) == doctest::Approx(-7.0));
  CHECK(parse_similarity("neg_manhattan") == Similarity::kNegManhattan);
  CHECK_THROWS_AS(parse_similarity("dot"), InvalidArgument);
}

TEST_CASE("triplet_accuracy examples") {
  Gen gen(3);
  const auto a = random_matrix(gen, 50, 8), n = random_matrix(gen, 50, 8);
  for (auto metric : {TripletMetric::kEuclidean, TripletMetric::kCosineDistance}) {
    CHECK(triplet_accuracy(a, a, n, metric) == 1.0);
    CHECK(triplet_accuracy(a, n, n, metric) == 0.0);
  }
  const auto r1 = random_matrix(gen, 10000, 8), r2 = random_matrix(gen, 10000, 8),
             r3 = random_matrix(gen, 10000, 8);
  CHECK(std::abs(triplet_accuracy(r1, r2, r3) - 0.5) < 0.02);
  CHECK_THROWS_AS(triplet_accuracy(EmbeddingMatrix(0, 8), EmbeddingMatrix(0, 8),
                                   EmbeddingMatrix(0, 8)),
                  InvalidArgument);
}

TEST_CASE("triplet_accuracy is invariant under a common rotation") {
  Gen gen(4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 4;
    // Random orthogonal matrix via Gram-Schmidt.
    std::vector<std::vector<double>> q(d, std::vector<double>(d));
    for (auto& row : q) {
      for (auto& v : row) v = gen.normal();
    }
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        double dot = 0;
        for (std::size_t k = 0; k < d; ++k) dot += q[i][k] * q[j][k];
        for (std::size_t k = 0; k < d; ++k) q[i][k] -= dot * q[j][k];
      }
      double nrm = 0;
      for (double v : q[i]) nrm += v * v;
      for (double& v : q[i]) v /= std::sqrt(nrm);
    }
    auto rotate = [&](const EmbeddingMatrix& m) {
      EmbeddingMatrix out(m.rows(), d);
      for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t i = 0; i < d; ++i) {
          double s = 0;
          for (std::size_t k = 0; k < d; ++k) s += q[i][k] * m.row(r)[k];
          out.row(r)[i] = static_cast<float>(s);
        }
      }
      return out;
    };
    const auto a = random_matrix(gen, 500, d), p = random_matrix(gen, 500, d),
               n = random_matrix(gen, 500, d);
    CHECK(std::abs(triplet_accuracy(a, p, n) -
                   triplet_accuracy(rotate(a), rotate(p), rotate(n))) < 1e-6 + 2.0 / 500);
  }
}

TEST_CASE("probe_eval") {
  Gen gen(5);
  SUBCASE("separable blobs") {
    EmbeddingMatrix x(400, 8);
    std::vector<std::size_t> labels(400);
    for (std::size_t i = 0; i < 400; ++i) {
      labels[i] = i % 2;
      for (float& v : x.row(i)) v = static_cast<float>(gen.normal(0.5));
      x.row(i)[0] += labels[i] ? 3.0F : -3.0F;
    }
    const auto r = probe_eval(x, labels, {});
    CHECK(r.mean_accuracy > 0.95);
    CHECK(r.fold_accuracies.size() == 10);
  }
  SUBCASE("shuffled labels sit at chance") {
    EmbeddingMatrix x(1000, 8);
    for (float& v : x.data) v = static_cast<float>(gen.normal());
    std::vector<std::size_t> labels(1000);
    for (std::size_t i = 0; i < 1000; ++i) labels[i] = i % 2;
    std::shuffle(labels.begin(), labels.end(), gen.engine());
    const auto r = probe_eval(x, labels, {});
    CHECK(std::abs(r.mean_accuracy - 0.5) < 0.05);
  }
  SUBCASE("XOR is not linearly separable") {
    EmbeddingMatrix x(4, 2);
    x.data = {0, 0, 1, 1, 0, 1, 1, 0};
    const std::vector<std::size_t> labels = {0, 0, 1, 1};
    ProbeConfig cfg;
    cfg.folds = 2;
    const auto r = probe_eval(x, labels, cfg);
    CHECK(r.mean_accuracy <= 0.75);
  }
  SUBCASE("a class missing from training folds is skipped with a warning") {
    EmbeddingMatrix x(12, 2);
    for (float& v : x.data) v = static_cast<float>(gen.normal());
    std::vector<std::size_t> labels(12, 0);
    labels[5] = 1;
    ProbeConfig cfg;
    cfg.folds = 3;
    const auto r = probe_eval(x, labels, cfg);
    CHECK(r.skipped_folds.size() == 1);
    CHECK(r.warnings.size() == 1);
    CHECK(r.fold_accuracies.size() == 2);
  }
  SUBCASE("preconditions") {
    EmbeddingMatrix x(5, 2);
    const std::vector<std::size_t> labels = {0, 1, 0, 1, 0};
    CHECK_THROWS_AS(probe_eval(x, labels, {}), InvalidArgument);
    ProbeConfig one;
    one.folds = 1;
    CHECK_THROWS_AS(probe_eval(x, labels, one), InvalidArgument);
    const std::vector<std::size_t> single(5, 0);
    ProbeConfig two;
    two.folds = 2;
    CHECK_THROWS_AS(probe_eval(x, single, two), InvalidArgument);
  }
  SUBCASE("seeded") {
    EmbeddingMatrix x(60, 3);
    for (float& v : x.data) v = static_cast<float>(gen.normal());
    std::vector<std::size_t> labels(60);
    for (std::size_t i = 0; i < 60; ++i) labels[i] = (i * 7) % 3;
    ProbeConfig cfg;
    cfg.folds = 5;
    CHECK(probe_eval(x, labels, cfg).fold_accuracies ==
          probe_eval(x, labels, cfg).fold_accuracies);
  }
}

TEST_CASE("report table") {
  const std::string table = format_report_table({{"spearman", 0.84671}, {"pearson", 0.5}});
  CHECK(table == "spearman     84.67\npearson      50.00\n");
}
