#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semb/graph.hpp"

namespace semb {

// Feature blocks fed to the softmax classifier, in the order they are named.
enum class ConcatMode {
  kUV,             // (u, v)
  kAbsDiff,        // (|u-v|)
  kProd,           // (u*v)
  kAbsDiffProd,    // (|u-v|, u*v)
  kUVProd,         // (u, v, u*v)
  kUVAbsDiff,      // (u, v, |u-v|)
  kUVAbsDiffProd,  // (u, v, |u-v|, u*v)
};

inline constexpr std::array<ConcatMode, 7> kAllConcatModes = {
    ConcatMode::kUV,          ConcatMode::kAbsDiff,   ConcatMode::kProd,
    ConcatMode::kAbsDiffProd, ConcatMode::kUVProd,    ConcatMode::kUVAbsDiff,
    ConcatMode::kUVAbsDiffProd};

// `u,v|abs|prod|abs,prod|u,v,prod|u,v,abs|u,v,abs,prod`
ConcatMode parse_concat_mode(std::string_view name);
std::string_view to_string(ConcatMode mode);
// Display form, e.g. "(u, v, |u-v|)".
std::string concat_label(ConcatMode mode);
std::size_t concat_blocks(ConcatMode mode);
inline std::size_t concat_dim(ConcatMode mode, std::size_t n) { return concat_blocks(mode) * n; }

enum class Objective { kClassification, kRegression, kTriplet };
Objective parse_objective(std::string_view name);
std::string_view to_string(Objective objective);

// Mapping of gold scores onto the cosine range: kUnit -> gold/max in [0,1],
// kSigned -> 2*gold/max - 1 in [-1,1].
enum class TargetScale { kUnit, kSigned };
TargetScale parse_target_scale(std::string_view name);
std::string_view to_string(TargetScale scale);
double regression_target(double gold, double score_max, TargetScale scale);

inline constexpr double kDefaultTripletMargin = 1.0;
inline constexpr double kStsScoreMax = 5.0;

// NLI label convention.
inline constexpr std::array<std::string_view, 3> kNliLabels = {
    "contradiction", "entailment", "neutral"};

struct PairExample {
  std::string a;
  std::string b;
  std::optional<std::size_t> label;  // classification
  std::optional<double> score;       // regression
};

struct TripletExample {
  std::string anchor;
  std::string positive;
  std::string negative;
};

// Softmax classifier W_t of shape [concat_dim x k]; no bias.
template <typename T>
struct ClassifierHead {
  BasicTensor<T> weight;
  ConcatMode mode = ConcatMode::kUVAbsDiff;

  std::size_t num_labels() const { return weight.dim(1); }
  std::size_t input_dim() const { return weight.dim(0); }
};

template <typename T>
ClassifierHead<T> make_classifier_head(std::size_t embedding_dim, std::size_t num_labels,
                                       ConcatMode mode, std::uint64_t seed);

// u, v: [B x n] -> [B x concat_dim(mode, n)].
template <typename T>
Var<T> concat_features(Var<T> u, Var<T> v, ConcatMode mode);

template <typename T>
struct ClassificationResult {
  Var<T> loss;            // mean over the batch
  BasicTensor<T> probs;   // [B x k]
};

template <typename T>
ClassificationResult<T> classification_loss(Var<T> u, Var<T> v,
                                            std::span<const std::size_t> labels,
                                            Var<T> head_weight, ConcatMode mode);

template <typename T>
struct RegressionResult {
  Var<T> loss;  // mean of (cos - target)^2
  std::vector<double> cosine;
};

template <typename T>
RegressionResult<T> regression_loss(Var<T> u, Var<T> v, std::span<const double> gold,
                                    double score_max,
                                    TargetScale scale = TargetScale::kUnit);

// mean over rows of max(|a-p| - |a-n| + margin, 0), Euclidean distance.
template <typename T>
Var<T> triplet_loss(Var<T> anchor, Var<T> positive, Var<T> negative,
                    T margin = T(kDefaultTripletMargin));

// Throws DegenerateInputError on a zero-norm input.
double cosine_similarity(std::span<const float> u, std::span<const float> v);
double cosine_similarity(std::span<const double> u, std::span<const double> v);

}  // namespace semb
