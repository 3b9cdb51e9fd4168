#include "semb/objectives.hpp"

#include <cmath>
#include <random>

namespace semb {

namespace {

struct ModeInfo {
  ConcatMode mode;
  std::string_view name;
  std::string_view label;
  bool uv, absdiff, prod;
};

constexpr ModeInfo kModes[] = {
    {ConcatMode::kUV, "u,v", "(u, v)", true, false, false},
    {ConcatMode::kAbsDiff, "abs", "(|u-v|)", false, true, false},
    {ConcatMode::kProd, "prod", "(u*v)", false, false, true},
    {ConcatMode::kAbsDiffProd, "abs,prod", "(|u-v|, u*v)", false, true, true},
    {ConcatMode::kUVProd, "u,v,prod", "(u, v, u*v)", true, false, true},
    {ConcatMode::kUVAbsDiff, "u,v,abs", "(u, v, |u-v|)", true, true, false},
    {ConcatMode::kUVAbsDiffProd, "u,v,abs,prod", "(u, v, |u-v|, u*v)", true, true, true},
};

const ModeInfo& info(ConcatMode mode) {
  for (const auto& m : kModes) {
    if (m.mode == mode) return m;
  }
  throw InvalidArgument("unknown concat mode");
}

template <typename T>
double cosine_impl(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) {
    throw DimensionError("cosine_similarity: dimensions " + std::to_string(u.size()) +
                         " and " + std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += double(u[i]) * v[i];
    nu += double(u[i]) * u[i];
    nv += double(v[i]) * v[i];
  }
  if (nu == 0.0 || nv == 0.0) {
    throw DegenerateInputError("cosine similarity of a zero-norm vector");
  }
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

}  // namespace

ConcatMode parse_concat_mode(std::string_view name) {
  for (const auto& m : kModes) {
    if (m.name == name) return m.mode;
  }
  throw InvalidArgument("unknown concat mode '" + std::string(name) +
                        "' (expected u,v|abs|prod|abs,prod|u,v,prod|u,v,abs|u,v,abs,prod)");
}

std::string_view to_string(ConcatMode mode) { return info(mode).name; }
std::string concat_label(ConcatMode mode) { return std::string(info(mode).label); }

std::size_t concat_blocks(ConcatMode mode) {
  const auto& m = info(mode);
  return (m.uv ? 2 : 0) + (m.absdiff ? 1 : 0) + (m.prod ? 1 : 0);
}

Objective parse_objective(std::string_view name) {
  if (name == "classification") return Objective::kClassification;
  if (name == "regression") return Objective::kRegression;
  if (name == "triplet") return Objective::kTriplet;
  throw InvalidArgument("unknown objective '" + std::string(name) +
                        "' (expected classification|regression|triplet)");
}

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::kClassification: return "classification";
    case Objective::kRegression: return "regression";
    case Objective::kTriplet: return "triplet";
  }
  return "regression";
}

TargetScale parse_target_scale(std::string_view name) {
  if (name == "unit") return TargetScale::kUnit;
  if (name == "signed") return TargetScale::kSigned;
  throw InvalidArgument("unknown target scale '" + std::string(name) +
                        "' (expected unit|signed)");
}

std::string_view to_string(TargetScale scale) {
  return scale == TargetScale::kUnit ? "unit" : "signed";
}

double regression_target(double gold, double score_max, TargetScale scale) {
  if (!(score_max > 0.0)) throw InvalidArgument("score_max must be positive");
  if (!(gold >= 0.0 && gold <= score_max)) {
    throw InvalidArgument("gold score " + std::to_string(gold) + " outside [0, " +
                          std::to_string(score_max) + "]");
  }
  const double unit = gold / score_max;
  return scale == TargetScale::kUnit ? unit : 2.0 * unit - 1.0;
}

template <typename T>
ClassifierHead<T> make_classifier_head(std::size_t embedding_dim, std::size_t num_labels,
                                       ConcatMode mode, std::uint64_t seed) {
  if (num_labels < 2) throw InvalidArgument("classifier head needs >= 2 labels");
  ClassifierHead<T> head;
  head.mode = mode;
  head.weight = BasicTensor<T>({concat_dim(mode, embedding_dim), num_labels});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  for (T& w : head.weight.data()) w = static_cast<T>(normal(rng));
  return head;
}

template <typename T>
Var<T> concat_features(Var<T> u, Var<T> v, ConcatMode mode) {
  if (u.shape() != v.shape() || u.value().rank() != 2) {
    throw DimensionError("concat_features: embeddings of shape " +
                         shape_to_string(u.shape()) + " and " + shape_to_string(v.shape()));
  }
  const auto& m = info(mode);
  std::vector<Var<T>> parts;
  if (m.uv) {
    parts.push_back(u);
    parts.push_back(v);
  }
  if (m.absdiff) parts.push_back(abs_diff(u, v));
  if (m.prod) parts.push_back(mul(u, v));
  if (parts.size() == 1) return parts[0];
  return concat_cols(parts);
}

template <typename T>
ClassificationResult<T> classification_loss(Var<T> u, Var<T> v,
                                            std::span<const std::size_t> labels,
                                            Var<T> head_weight, ConcatMode mode) {
  Var<T> features = concat_features(u, v, mode);
  if (head_weight.value().rank() != 2 ||
      head_weight.value().dim(0) != features.value().dim(1)) {
    throw DimensionError("classification_loss: head of shape " +
                         shape_to_string(head_weight.shape()) + " for features " +
                         shape_to_string(features.shape()));
  }
  const std::size_t k = head_weight.value().dim(1);
  for (std::size_t label : labels) {
    if (label >= k) {
      throw InvalidArgument("label " + std::to_string(label) + " out of range [0," +
                            std::to_string(k) + ")");
    }
  }
  Var<T> logits = matmul(features, head_weight);
  const auto& lv = logits.value();
  BasicTensor<T> probs(lv.shape());
  for (std::size_t r = 0; r < lv.dim(0); ++r) {
    T mx = lv.at(r, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, lv.at(r, j));
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(double(lv.at(r, j) - mx));
    for (std::size_t j = 0; j < k; ++j) {
      probs.at(r, j) = static_cast<T>(std::exp(double(lv.at(r, j) - mx)) / total);
    }
  }
  return {cross_entropy(logits, labels), std::move(probs)};
}

template <typename T>
RegressionResult<T> regression_loss(Var<T> u, Var<T> v, std::span<const double> gold,
                                    double score_max, TargetScale scale) {
  Var<T> cos = rowwise_cosine(u, v);
  if (gold.size() != cos.numel()) {
    throw DimensionError("regression_loss: " + std::to_string(gold.size()) +
                         " gold scores for " + std::to_string(cos.numel()) + " pairs");
  }
  BasicTensor<T> target({gold.size()});
  for (std::size_t i = 0; i < gold.size(); ++i) {
    target[i] = static_cast<T>(regression_target(gold[i], score_max, scale));
  }
  Var<T> diff = sub(cos, cos.graph->constant(std::move(target)));
  RegressionResult<T> out{mean(mul(diff, diff)), {}};
  for (T c : cos.value().data()) out.cosine.push_back(c);
  return out;
}

template <typename T>
Var<T> triplet_loss(Var<T> anchor, Var<T> positive, Var<T> negative, T margin) {
  if (margin < T{0}) throw InvalidArgument("triplet margin must be >= 0");
  Var<T> d_pos = rowwise_l2_distance(anchor, positive);
  Var<T> d_neg = rowwise_l2_distance(anchor, negative);
  return mean(relu(add_scalar(sub(d_pos, d_neg), margin)));
}

double cosine_similarity(std::span<const float> u, std::span<const float> v) {
  return cosine_impl(u, v);
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  return cosine_impl(u, v);
}

#define SEMB_INSTANTIATE_OBJECTIVES(T)                                                  \
  template ClassifierHead<T> make_classifier_head<T>(std::size_t, std::size_t,          \
                                                     ConcatMode, std::uint64_t);        \
  template Var<T> concat_features(Var<T>, Var<T>, ConcatMode);                          \
  template ClassificationResult<T> classification_loss(                                 \
      Var<T>, Var<T>, std::span<const std::size_t>, Var<T>, ConcatMode);                \
  template RegressionResult<T> regression_loss(Var<T>, Var<T>, std::span<const double>, \
                                               double, TargetScale);                    \
  template Var<T> triplet_loss(Var<T>, Var<T>, Var<T>, T);

SEMB_INSTANTIATE_OBJECTIVES(float)
SEMB_INSTANTIATE_OBJECTIVES(double)

#undef SEMB_INSTANTIATE_OBJECTIVES

}  // namespace semb
