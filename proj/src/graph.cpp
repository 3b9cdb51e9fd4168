#include "semb/graph.hpp"

#include <algorithm>
#include <cmath>

namespace semb {

template <typename T>
Var<T> Graph<T>::push(Node node) {
  node.index = nodes_.size();
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::constant(BasicTensor<T> value) {
  Node node;
  node.op = "constant";
  node.owned = std::move(value);
  return push(std::move(node));
}

template <typename T>
Var<T> Graph<T>::constant_ref(const BasicTensor<T>& value) {
  Node node;
  node.op = "constant";
  node.ref = &value;
  return push(std::move(node));
}

template <typename T>
Var<T> Graph<T>::parameter(BasicTensor<T>& param) {
  if (auto it = bound_params_.find(&param); it != bound_params_.end()) {
    return Var<T>{this, it->second};
  }
  Node node;
  node.op = "parameter";
  node.ref = &param;
  node.param = &param;
  node.requires_grad = param.requires_grad();
  Var<T> v = push(std::move(node));
  bound_params_.emplace(&param, v.id);
  return v;
}

template <typename T>
Var<T> Graph<T>::record(std::string_view op, std::initializer_list<Var<T>> inputs,
                        BasicTensor<T> value, BackwardFn backward) {
  return record(op, std::vector<Var<T>>(inputs), std::move(value),
                std::move(backward));
}

template <typename T>
Var<T> Graph<T>::record(std::string_view op, const std::vector<Var<T>>& inputs,
                        BasicTensor<T> value, BackwardFn backward) {
  Node node;
  node.op = op;
  node.owned = std::move(value);
  for (const Var<T>& in : inputs) {
    if (in.graph != this) {
      throw InvalidArgument(std::string(op) + ": input belongs to another graph");
    }
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

template <typename T>
std::span<T> Graph<T>::grad(std::size_t id) {
  auto& g = grads_[id];
  if (g.empty()) g.assign(nodes_[id].value().numel(), T{0});
  return g;
}

template <typename T>
void Graph<T>::backward(Var<T> loss) {
  if (loss.graph != this) throw InvalidArgument("backward: loss from another graph");
  if (value(loss.id).numel() != 1) {
    throw DimensionError("backward: loss must be scalar, got shape " +
                         shape_to_string(value(loss.id).shape()));
  }
  for (auto& g : grads_) g.clear();
  grad(loss.id)[0] = T{1};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.requires_grad || grads_[i].empty() || !node.backward) continue;
    node.backward(*this, node);
  }
  for (const auto& [tensor, id] : bound_params_) {
    Node& node = nodes_[id];
    if (!node.requires_grad) continue;
    auto dst = node.param->ensure_grad();
    const auto& src = grads_[id];
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
  }
}

template class Graph<float>;
template class Graph<double>;

double grad_check(std::span<Tensor64* const> params,
                  const std::function<Var<double>(Graph<double>&)>& build,
                  double eps, std::size_t max_coords) {
  for (Tensor64* p : params) {
    p->set_requires_grad(true);
    p->clear_grad();
  }
  {
    Graph<double> g;
    g.backward(build(g));
  }
  auto evaluate = [&] {
    Graph<double> g;
    return build(g).item();
  };
  double worst = 0.0;
  for (Tensor64* p : params) {
    const std::vector<double> analytic(p->grad().begin(), p->grad().end());
    const std::size_t n = p->numel();
    const std::size_t stride =
        (max_coords == 0 || n <= max_coords) ? 1 : (n + max_coords - 1) / max_coords;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = (*p)[i];
      (*p)[i] = orig + eps;
      const double plus = evaluate();
      (*p)[i] = orig - eps;
      const double minus = evaluate();
      (*p)[i] = orig;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

double grad_check(const std::function<Var<double>(Var<double>)>& f,
                  const Tensor64& point, double eps) {
  Tensor64 x = point;
  Tensor64* params[] = {&x};
  return grad_check(params, [&](Graph<double>& g) { return f(g.parameter(x)); },
                    eps);
}

}  // namespace semb
