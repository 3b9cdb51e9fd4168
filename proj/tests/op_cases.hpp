#pragma once

#include <functional>
#include <random>
#include <vector>

#include "semb/graph.hpp"
#include "support.hpp"

namespace semb::test {

using Build = std::function<Var<double>(Graph<double>&, std::vector<Var<double>>&)>;

// Reduces op(inputs) against fixed random weights so every output entry
// contributes a distinct gradient, then runs the finite-difference check.
inline double check_op(Gen& gen, std::vector<Tensor64> inputs, const Build& op) {
  Tensor64 weights;
  {
    Graph<double> g;
    std::vector<Var<double>> vars;
    for (auto& t : inputs) vars.push_back(g.constant_ref(t));
    weights = gen.tensor<double>(op(g, vars).shape());
  }
  std::vector<Tensor64*> params;
  for (auto& t : inputs) params.push_back(&t);
  return grad_check(params,
                    [&](Graph<double>& g) {
                      std::vector<Var<double>> vars;
                      for (auto& t : inputs) vars.push_back(param(g, t));
                      return sum(mul(op(g, vars), g.constant_ref(weights)));
                    },
                    1e-5);
}

struct OpCase {
  const char* name;
  std::function<std::vector<Tensor64>(Gen&)> inputs;
  Build op;
};

inline std::vector<OpCase> all_ops() {
  static const std::vector<std::int32_t> ids = {2, 0, 3, 2, 1};
  static const std::vector<std::size_t> labels = {2, 0, 1};
  static const std::vector<std::uint8_t> keep = {1, 0, 1, 1, 1, 0};
  using V = std::vector<Var<double>>;
  using G = Graph<double>;
  return {
      {"matmul", [](Gen& r) { return std::vector{r.tensor({3, 4}), r.tensor({4, 2})}; },
       [](G&, V& v) { return matmul(v[0], v[1]); }},
      {"bmm", [](Gen& r) { return std::vector{r.tensor({2, 3, 4}), r.tensor({2, 4, 2})}; },
       [](G&, V& v) { return bmm(v[0], v[1]); }},
      {"bmm_t", [](Gen& r) { return std::vector{r.tensor({2, 3, 4}), r.tensor({2, 5, 4})}; },
       [](G&, V& v) { return bmm(v[0], v[1], true); }},
      {"linear",
       [](Gen& r) { return std::vector{r.tensor({3, 4}), r.tensor({4, 2}), r.tensor({2})}; },
       [](G&, V& v) { return linear(v[0], v[1], v[2]); }},
      {"add", [](Gen& r) { return std::vector{r.tensor({2, 3}), r.tensor({2, 3})}; },
       [](G&, V& v) { return add(v[0], v[1]); }},
      {"sub", [](Gen& r) { return std::vector{r.tensor({2, 3}), r.tensor({2, 3})}; },
       [](G&, V& v) { return sub(v[0], v[1]); }},
      {"mul", [](Gen& r) { return std::vector{r.tensor({2, 3}), r.tensor({2, 3})}; },
       [](G&, V& v) { return mul(v[0], v[1]); }},
      {"abs_diff", [](Gen& r) { return std::vector{r.tensor({2, 3}), r.tensor({2, 3})}; },
       [](G&, V& v) { return abs_diff(v[0], v[1]); }},
      {"scale", [](Gen& r) { return std::vector{r.tensor({2, 3})}; },
       [](G&, V& v) { return scale(v[0], -1.7); }},
      {"add_scalar", [](Gen& r) { return std::vector{r.tensor({2, 3})}; },
       [](G&, V& v) { return add_scalar(v[0], 0.3); }},
      {"relu", [](Gen& r) { return std::vector{r.tensor({2, 3})}; },
       [](G&, V& v) { return relu(v[0]); }},
      {"gelu", [](Gen& r) { return std::vector{r.tensor({2, 3}, -3, 3)}; },
       [](G&, V& v) { return gelu(v[0]); }},
      {"softmax", [](Gen& r) { return std::vector{r.tensor({2, 2, 3}, -2, 2)}; },
       [](G&, V& v) { return softmax(v[0]); }},
      {"cross_entropy", [](Gen& r) { return std::vector{r.tensor({3, 4}, -2, 2)}; },
       [](G&, V& v) { return cross_entropy(v[0], std::span(labels)); }},
      {"sum", [](Gen& r) { return std::vector{r.tensor({2, 3})}; },
       [](G&, V& v) { return sum(v[0]); }},
      {"mean", [](Gen& r) { return std::vector{r.tensor({2, 3})}; },
       [](G&, V& v) { return mean(v[0]); }},
      {"max_over_axis", [](Gen& r) { return std::vector{r.tensor({2, 4, 3})}; },
       [](G&, V& v) { return max_over_axis(v[0], 1); }},
      {"embedding", [](Gen& r) { return std::vector{r.tensor({4, 3})}; },
       [](G&, V& v) { return embedding(v[0], std::span(ids)); }},
      {"layer_norm",
       [](Gen& r) { return std::vector{r.tensor({3, 5}, -2, 2), r.tensor({5}), r.tensor({5})}; },
       [](G&, V& v) { return layer_norm(v[0], v[1], v[2]); }},
      {"dropout", [](Gen& r) { return std::vector{r.tensor({4, 5})}; },
       [](G& g, V& v) {
         // Fresh generator per graph: every evaluation draws the same mask.
         static thread_local std::mt19937_64 rng;
         rng.seed(99);
         g.rng = &rng;
         g.training = true;
         return dropout(v[0], 0.4);
       }},
      {"masked_fill", [](Gen& r) { return std::vector{r.tensor({2, 3})}; },
       [](G&, V& v) { return masked_fill(v[0], std::span(keep), -5.0); }},
      {"reshape", [](Gen& r) { return std::vector{r.tensor({2, 6})}; },
       [](G&, V& v) { return reshape(v[0], {3, 4}); }},
      {"split_heads", [](Gen& r) { return std::vector{r.tensor({6, 4})}; },
       [](G&, V& v) { return split_heads(v[0], 2, 3, 2); }},
      {"merge_heads", [](Gen& r) { return std::vector{r.tensor({4, 3, 2})}; },
       [](G&, V& v) { return merge_heads(v[0], 2, 2); }},
      {"concat_cols",
       [](Gen& r) { return std::vector{r.tensor({2, 3}), r.tensor({2, 1}), r.tensor({2, 2})}; },
       [](G&, V& v) { return concat_cols(v); }},
      {"slice_rows", [](Gen& r) { return std::vector{r.tensor({4, 3})}; },
       [](G&, V& v) { return slice_rows(v[0], 1, 3); }},
      {"rowwise_cosine", [](Gen& r) { return std::vector{r.tensor({3, 4}), r.tensor({3, 4})}; },
       [](G&, V& v) { return rowwise_cosine(v[0], v[1]); }},
      {"rowwise_l2_distance",
       [](Gen& r) { return std::vector{r.tensor({3, 4}), r.tensor({3, 4})}; },
       [](G&, V& v) { return rowwise_l2_distance(v[0], v[1]); }},
  };
}


}  // namespace semb::test
