#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "semb/tensor.hpp"

namespace semb {

template <typename T>
class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const BasicTensor<T>& value() const { return graph->value(id); }
  const Shape& shape() const { return value().shape(); }
  std::size_t numel() const { return value().numel(); }
  T item() const { return value()[0]; }
};

// Tape of op records in creation (= topological) order. Inputs of node i
// always have index < i. One graph per forward pass; parameters are bound
// as leaves and receive accumulated gradients on backward().
template <typename T>
class Graph {
 public:
  struct Node;
  using BackwardFn = std::function<void(Graph&, const Node&)>;

  struct Node {
    std::string_view op;
    std::vector<std::size_t> inputs;
    BasicTensor<T> owned;
    const BasicTensor<T>* ref = nullptr;
    BasicTensor<T>* param = nullptr;
    bool requires_grad = false;
    std::size_t index = 0;
    BackwardFn backward;

    const BasicTensor<T>& value() const { return ref != nullptr ? *ref : owned; }
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(BasicTensor<T> value);
  // Non-owning constant; `value` must outlive the graph.
  Var<T> constant_ref(const BasicTensor<T>& value);
  // Binds a trainable tensor. Binding the same tensor twice returns the same
  // node, so every tower of a siamese network shares one leaf.
  Var<T> parameter(BasicTensor<T>& param);

  // Appends an op record. `backward` is dropped when no input needs a gradient.
  Var<T> record(std::string_view op, std::initializer_list<Var<T>> inputs,
                BasicTensor<T> value, BackwardFn backward);
  Var<T> record(std::string_view op, const std::vector<Var<T>>& inputs,
                BasicTensor<T> value, BackwardFn backward);

  // Reverse sweep from a scalar loss. Node gradients are reset first, so
  // calling it twice yields identical node gradients; parameter gradients
  // accumulate into BasicTensor::grad().
  void backward(Var<T> loss);

  const BasicTensor<T>& value(std::size_t id) const { return nodes_[id].value(); }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient buffer of a node, allocated (zeroed) on first access.
  std::span<T> grad(std::size_t id);
  std::span<const T> grad_or_empty(std::size_t id) const { return grads_[id]; }

  // Optional dropout source; ops fall back to identity when unset.
  std::mt19937_64* rng = nullptr;
  bool training = false;

 private:
  Var<T> push(Node node);

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  std::unordered_map<const BasicTensor<T>*, std::size_t> bound_params_;
};

// ---- ops -----------------------------------------------------------------
// All ops require identical operand shapes except where noted; there is no
// implicit broadcasting beyond the explicit scalar variants.

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
// Batched matmul over the leading axis: [b x m x k] * [b x k x p].
// With transpose_b the right operand is [b x p x k].
template <typename T> Var<T> bmm(Var<T> a, Var<T> b, bool transpose_b = false);
// x[m x k] * w[k x p] + bias[p]
template <typename T> Var<T> linear(Var<T> x, Var<T> w, Var<T> bias);

enum class Elementwise { kAdd, kSub, kMul, kAbsDiff };
template <typename T> Var<T> elementwise(Var<T> a, Var<T> b, Elementwise kind);
template <typename T> Var<T> add(Var<T> a, Var<T> b) { return elementwise(a, b, Elementwise::kAdd); }
template <typename T> Var<T> sub(Var<T> a, Var<T> b) { return elementwise(a, b, Elementwise::kSub); }
template <typename T> Var<T> mul(Var<T> a, Var<T> b) { return elementwise(a, b, Elementwise::kMul); }
template <typename T> Var<T> abs_diff(Var<T> a, Var<T> b) { return elementwise(a, b, Elementwise::kAbsDiff); }

template <typename T> Var<T> scale(Var<T> x, T factor);
template <typename T> Var<T> add_scalar(Var<T> x, T offset);
template <typename T> Var<T> relu(Var<T> x);
template <typename T> Var<T> gelu(Var<T> x);

// Softmax over the last axis, max-subtracted.
template <typename T> Var<T> softmax(Var<T> x);
// Mean negative log-likelihood of `labels` under softmax(logits[B x k]).
template <typename T> Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> labels);

template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> mean(Var<T> x);
// Gradient flows to the first maximal index along `axis`.
template <typename T> Var<T> max_over_axis(Var<T> x, std::size_t axis);

// Row gather: table[V x n], ids -> [ids.size() x n].
template <typename T> Var<T> embedding(Var<T> table, std::span<const std::int32_t> ids);
// Normalizes over the last axis.
template <typename T> Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-12));
// Inverted dropout; identity unless the graph is in training mode with an rng.
template <typename T> Var<T> dropout(Var<T> x, double rate);
// Positions where mask == 0 are replaced by `fill` and receive no gradient.
template <typename T> Var<T> masked_fill(Var<T> x, std::span<const std::uint8_t> keep, T fill);

template <typename T> Var<T> reshape(Var<T> x, Shape shape);
// [B*L x h*d] -> [B*h x L x d]
template <typename T> Var<T> split_heads(Var<T> x, std::size_t batch, std::size_t len, std::size_t heads);
// [B*h x L x d] -> [B*L x h*d]
template <typename T> Var<T> merge_heads(Var<T> x, std::size_t batch, std::size_t heads);
// Concatenates rank-2 tensors with equal row counts along columns.
template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
// Rows [begin, end) along the leading axis.
template <typename T> Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end);

// Per-row cosine of two [B x n] tensors -> [B]. Zero rows are an error.
template <typename T> Var<T> rowwise_cosine(Var<T> a, Var<T> b);
// Per-row Euclidean distance -> [B]; subgradient 0 where the rows coincide.
template <typename T> Var<T> rowwise_l2_distance(Var<T> a, Var<T> b);

// ---- gradient checking ---------------------------------------------------

// Max over coordinates of |analytic - numeric| / max(1, |numeric|), with
// central differences. `build` must bind every tensor in `params` through
// Graph::parameter and return a scalar. `max_coords` > 0 checks an evenly
// strided subset of each parameter's coordinates.
double grad_check(std::span<Tensor64* const> params,
                  const std::function<Var<double>(Graph<double>&)>& build,
                  double eps, std::size_t max_coords = 0);

// Single-input convenience form.
double grad_check(const std::function<Var<double>(Var<double>)>& f,
                  const Tensor64& point, double eps);

}  // namespace semb
