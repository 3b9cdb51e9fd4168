#pragma once

// Shared generators for property tests.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "semb/graph.hpp"
#include "semb/tensor.hpp"

namespace semb::test {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo = -1.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }

  template <typename T = double>
  BasicTensor<T> tensor(Shape shape, double lo = -1.0, double hi = 1.0) {
    BasicTensor<T> t(std::move(shape));
    for (T& v : t.data()) v = static_cast<T>(uniform(lo, hi));
    return t;
  }

  std::vector<double> vec(std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> out(n);
    for (double& v : out) v = uniform(lo, hi);
    return out;
  }
  std::vector<float> fvec(std::size_t n) {
    std::vector<float> out(n);
    for (float& v : out) v = static_cast<float>(normal());
    return out;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Binds `t` as a trainable leaf.
template <typename T>
Var<T> param(Graph<T>& g, BasicTensor<T>& t) {
  t.set_requires_grad(true);
  return g.parameter(t);
}

}  // namespace semb::test
