#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "semb/graph.hpp"

namespace semb {
namespace {

template <typename T>
void require_same_shape(std::string_view op, const BasicTensor<T>& a,
                        const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

template <typename T>
void require_rank(std::string_view op, const BasicTensor<T>& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got shape " +
                         shape_to_string(x.shape()));
  }
}

// C[m x p] += A[m x k] * B[k x p]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * p;
    const T* arow = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      if (av == T{0}) continue;
      const T* brow = b + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x p] += A[m x k] * B[p x k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < p; ++j) {
      const T* brow = b + j * k;
      T acc{0};
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      c[i * p + j] += acc;
    }
  }
}

// C[k x p] += A[m x k]^T * B[m x p]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      if (av == T{0}) continue;
      T* crow = c + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
T gelu_value(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_derivative(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<T> /
                std::numbers::sqrt2_v<T>;
  return cdf + x * pdf;
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank("matmul", av, 2);
  require_rank("matmul", bv, 2);
  if (av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ, " +
                         shape_to_string(av.shape()) + " x " +
                         shape_to_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), p = bv.dim(1);
  BasicTensor<T> out({m, p});
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, p);
  return a.graph->record("matmul", {a, b}, std::move(out),
                         [m, k, p](Graph<T>& g, const auto& node) {
    const std::size_t ia = node.inputs[0], ib = node.inputs[1];
    const T* dout = g.grad(node.index).data();
    if (g.needs_grad(ia)) {
      gemm_nt(dout, g.value(ib).data().data(), g.grad(ia).data(), m, p, k);
    }
    if (g.needs_grad(ib)) {
      gemm_tn(g.value(ia).data().data(), dout, g.grad(ib).data(), m, k, p);
    }
  });
}

template <typename T>
Var<T> bmm(Var<T> a, Var<T> b, bool transpose_b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank("bmm", av, 3);
  require_rank("bmm", bv, 3);
  const std::size_t batch = av.dim(0), m = av.dim(1), k = av.dim(2);
  const std::size_t p = transpose_b ? bv.dim(1) : bv.dim(2);
  const std::size_t bk = transpose_b ? bv.dim(2) : bv.dim(1);
  if (bv.dim(0) != batch || bk != k) {
    throw DimensionError("bmm: incompatible shapes " + shape_to_string(av.shape()) +
                         " x " + shape_to_string(bv.shape()) +
                         (transpose_b ? " (transposed)" : ""));
  }
  BasicTensor<T> out({batch, m, p});
  for (std::size_t i = 0; i < batch; ++i) {
    const T* ap = av.data().data() + i * m * k;
    const T* bp = bv.data().data() + i * k * p;
    T* op = out.data().data() + i * m * p;
    if (transpose_b) {
      gemm_nt(ap, bp, op, m, k, p);
    } else {
      gemm_nn(ap, bp, op, m, k, p);
    }
  }
  return a.graph->record("bmm", {a, b}, std::move(out),
                         [batch, m, k, p, transpose_b](Graph<T>& g, const auto& node) {
    const std::size_t ia = node.inputs[0], ib = node.inputs[1];
    const T* dout = g.grad(node.index).data();
    const T* ap = g.value(ia).data().data();
    const T* bp = g.value(ib).data().data();
    T* da = g.needs_grad(ia) ? g.grad(ia).data() : nullptr;
    T* db = g.needs_grad(ib) ? g.grad(ib).data() : nullptr;
    for (std::size_t i = 0; i < batch; ++i) {
      const T* dO = dout + i * m * p;
      const T* Ai = ap + i * m * k;
      const T* Bi = bp + i * k * p;
      if (transpose_b) {
        if (da) gemm_nn(dO, Bi, da + i * m * k, m, p, k);
        if (db) gemm_tn(dO, Ai, db + i * k * p, m, p, k);
      } else {
        if (da) gemm_nt(dO, Bi, da + i * m * k, m, p, k);
        if (db) gemm_tn(Ai, dO, db + i * k * p, m, k, p);
      }
    }
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = bias.value();
  require_rank("linear", xv, 2);
  require_rank("linear", wv, 2);
  if (xv.dim(1) != wv.dim(0) || bv.numel() != wv.dim(1)) {
    throw DimensionError("linear: incompatible shapes " + shape_to_string(xv.shape()) +
                         " x " + shape_to_string(wv.shape()) + " + " +
                         shape_to_string(bv.shape()));
  }
  const std::size_t m = xv.dim(0), k = xv.dim(1), p = wv.dim(1);
  BasicTensor<T> out({m, p});
  T* o = out.data().data();
  for (std::size_t i = 0; i < m; ++i) std::copy_n(bv.data().data(), p, o + i * p);
  gemm_nn(xv.data().data(), wv.data().data(), o, m, k, p);
  return x.graph->record("linear", {x, w, bias}, std::move(out),
                         [m, k, p](Graph<T>& g, const auto& node) {
    const std::size_t ix = node.inputs[0], iw = node.inputs[1], ib = node.inputs[2];
    const T* dout = g.grad(node.index).data();
    if (g.needs_grad(ix)) {
      gemm_nt(dout, g.value(iw).data().data(), g.grad(ix).data(), m, p, k);
    }
    if (g.needs_grad(iw)) {
      gemm_tn(g.value(ix).data().data(), dout, g.grad(iw).data(), m, k, p);
    }
    if (g.needs_grad(ib)) {
      T* db = g.grad(ib).data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < p; ++j) db[j] += dout[i * p + j];
      }
    }
  });
}

template <typename T>
Var<T> elementwise(Var<T> a, Var<T> b, Elementwise kind) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape("elementwise", av, bv);
  BasicTensor<T> out(av.shape());
  const std::size_t n = av.numel();
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case Elementwise::kAdd: out[i] = av[i] + bv[i]; break;
      case Elementwise::kSub: out[i] = av[i] - bv[i]; break;
      case Elementwise::kMul: out[i] = av[i] * bv[i]; break;
      case Elementwise::kAbsDiff: out[i] = std::abs(av[i] - bv[i]); break;
    }
  }
  static constexpr std::string_view kNames[] = {"add", "sub", "mul", "abs_diff"};
  return a.graph->record(kNames[static_cast<int>(kind)], {a, b}, std::move(out),
                         [kind, n](Graph<T>& g, const auto& node) {
    const std::size_t ia = node.inputs[0], ib = node.inputs[1];
    const auto dout = g.grad(node.index);
    const auto& A = g.value(ia);
    const auto& B = g.value(ib);
    const bool need_a = g.needs_grad(ia), need_b = g.needs_grad(ib);
    T* da = need_a ? g.grad(ia).data() : nullptr;
    T* db = need_b ? g.grad(ib).data() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const T go = dout[i];
      switch (kind) {
        case Elementwise::kAdd:
          if (da) da[i] += go;
          if (db) db[i] += go;
          break;
        case Elementwise::kSub:
          if (da) da[i] += go;
          if (db) db[i] -= go;
          break;
        case Elementwise::kMul:
          if (da) da[i] += go * B[i];
          if (db) db[i] += go * A[i];
          break;
        case Elementwise::kAbsDiff: {
          const T d = A[i] - B[i];
          const T s = d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0});
          if (da) da[i] += go * s;
          if (db) db[i] -= go * s;
          break;
        }
      }
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  BasicTensor<T> out = x.value();
  out.set_requires_grad(false);
  out.clear_grad();
  for (T& v : out.data()) v *= factor;
  return x.graph->record("scale", {x}, std::move(out),
                         [factor](Graph<T>& g, const auto& node) {
    const auto dout = g.grad(node.index);
    auto dx = g.grad(node.inputs[0]);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * dout[i];
  });
}

template <typename T>
Var<T> add_scalar(Var<T> x, T offset) {
  BasicTensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] + offset;
  return x.graph->record("add_scalar", {x}, std::move(out),
                         [](Graph<T>& g, const auto& node) {
    const auto dout = g.grad(node.index);
    auto dx = g.grad(node.inputs[0]);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dout[i];
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  const auto& xv = x.value();
  BasicTensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = std::max(xv[i], T{0});
  return x.graph->record("relu", {x}, std::move(out),
                         [](Graph<T>& g, const auto& node) {
    const auto dout = g.grad(node.index);
    const auto& xv = g.value(node.inputs[0]);
    auto dx = g.grad(node.inputs[0]);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xv[i] > T{0}) dx[i] += dout[i];
    }
  });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  const auto& xv = x.value();
  BasicTensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = gelu_value(xv[i]);
  return x.graph->record("gelu", {x}, std::move(out),
                         [](Graph<T>& g, const auto& node) {
    const auto dout = g.grad(node.index);
    const auto& xv = g.value(node.inputs[0]);
    auto dx = g.grad(node.inputs[0]);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dout[i] * gelu_derivative(xv[i]);
  });
}

template <typename T>
Var<T> softmax(Var<T> x) {
  const auto& xv = x.value();
  const std::size_t k = xv.shape().back();
  const std::size_t rows = xv.numel() / k;
  BasicTensor<T> out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data().data() + r * k;
    T* o = out.data().data() + r * k;
    const T mx = *std::max_element(in, in + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    const T inv = static_cast<T>(1.0 / total);
    for (std::size_t j = 0; j < k; ++j) o[j] *= inv;
  }
  return x.graph->record("softmax", {x}, std::move(out),
                         [rows, k](Graph<T>& g, const auto& node) {
    const auto dout = g.grad(node.index);
    const auto& y = node.value();
    auto dx = g.grad(node.inputs[0]);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += double(dout[r * k + j]) * y[r * k + j];
      for (std::size_t j = 0; j < k; ++j) {
        dx[r * k + j] += y[r * k + j] * (dout[r * k + j] - static_cast<T>(dot));
      }
    }
  });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> labels) {
  const auto& lv = logits.value();
  require_rank("cross_entropy", lv, 2);
  const std::size_t rows = lv.dim(0), k = lv.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(rows) + " rows");
  }
  std::vector<T> probs(lv.numel());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= k) {
      throw InvalidArgument("cross_entropy: label " + std::to_string(labels[r]) +
                            " out of range [0," + std::to_string(k) + ")");
    }
    const T* in = lv.data().data() + r * k;
    const T mx = *std::max_element(in, in + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(double(in[j] - mx));
    const double log_z = std::log(total) + mx;
    for (std::size_t j = 0; j < k; ++j) {
      probs[r * k + j] = static_cast<T>(std::exp(double(in[j]) - log_z));
    }
    loss += log_z - in[labels[r]];
  }
  BasicTensor<T> out({1}, static_cast<T>(loss / double(rows)));
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return logits.graph->record("cross_entropy", {logits}, std::move(out),
                              [probs = std::move(probs), lab = std::move(lab), rows,
                               k](Graph<T>& g, const auto& node) {
    const T go = g.grad(node.index)[0] / static_cast<T>(rows);
    auto dx = g.grad(node.inputs[0]);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < k; ++j) {
        const T target = j == lab[r] ? T{1} : T{0};
        dx[r * k + j] += go * (probs[r * k + j] - target);
      }
    }
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  double total = 0.0;
  for (T v : x.value().data()) total += v;
  BasicTensor<T> out({1}, static_cast<T>(total));
  return x.graph->record("sum", {x}, std::move(out), [](Graph<T>& g, const auto& node) {
    const T go = g.grad(node.index)[0];
    for (T& d : g.grad(node.inputs[0])) d += go;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  double total = 0.0;
  for (T v : x.value().data()) total += v;
  const std::size_t n = x.numel();
  BasicTensor<T> out({1}, static_cast<T>(total / double(n)));
  return x.graph->record("mean", {x}, std::move(out), [n](Graph<T>& g, const auto& node) {
    const T go = g.grad(node.index)[0] / static_cast<T>(n);
    for (T& d : g.grad(node.inputs[0])) d += go;
  });
}

template <typename T>
Var<T> max_over_axis(Var<T> x, std::size_t axis) {
  const auto& xv = x.value();
  if (axis >= xv.rank()) {
    throw DimensionError("max_over_axis: axis " + std::to_string(axis) +
                         " invalid for shape " + shape_to_string(xv.shape()));
  }
  const std::size_t n = xv.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xv.dim(i);
  for (std::size_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.dim(i);
  Shape out_shape;
  for (std::size_t i = 0; i < xv.rank(); ++i) {
    if (i != axis) out_shape.push_back(xv.dim(i));
  }
  if (out_shape.empty()) out_shape.push_back(1);
  BasicTensor<T> out(out_shape);
  std::vector<std::size_t> argmax(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t best = 0;
      T best_v = xv[o * n * inner + in];
      for (std::size_t j = 1; j < n; ++j) {
        const T v = xv[(o * n + j) * inner + in];
        if (v > best_v) {
          best_v = v;
          best = j;
        }
      }
      out[o * inner + in] = best_v;
      argmax[o * inner + in] = (o * n + best) * inner + in;
    }
  }
  return x.graph->record("max_over_axis", {x}, std::move(out),
                         [argmax = std::move(argmax)](Graph<T>& g, const auto& node) {
    const auto dout = g.grad(node.index);
    auto dx = g.grad(node.inputs[0]);
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dout[i];
  });
}

template <typename T>
Var<T> embedding(Var<T> table, std::span<const std::int32_t> ids) {
  const auto& tv = table.value();
  require_rank("embedding", tv, 2);
  const std::size_t vocab = tv.dim(0), n = tv.dim(1);
  if (ids.empty()) throw DimensionError("embedding: no ids");
  BasicTensor<T> out({ids.size(), n});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
      throw InvalidArgument("embedding: id " + std::to_string(ids[r]) +
                            " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(tv.data().data() + ids[r] * n, n, out.data().data() + r * n);
  }
  std::vector<std::int32_t> rows(ids.begin(), ids.end());
  return table.graph->record("embedding", {table}, std::move(out),
                             [rows = std::move(rows), n](Graph<T>& g, const auto& node) {
    const auto dout = g.grad(node.index);
    auto dt = g.grad(node.inputs[0]);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      T* dst = dt.data() + rows[r] * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += dout[r * n + j];
    }
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  const auto& xv = x.value();
  const std::size_t n = xv.shape().back();
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("layer_norm: scale/shift of size " +
                         std::to_string(gamma.numel()) + "/" +
                         std::to_string(beta.numel()) + " for feature size " +
                         std::to_string(n));
  }
  const std::size_t rows = xv.numel() / n;
  BasicTensor<T> out(xv.shape());
  std::vector<T> xhat(xv.numel());
  std::vector<T> inv_std(rows);
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += in[j];
    mu /= double(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= double(n);
    const double is = 1.0 / std::sqrt(var + double(eps));
    inv_std[r] = static_cast<T>(is);
    for (std::size_t j = 0; j < n; ++j) {
      const T h = static_cast<T>((in[j] - mu) * is);
      xhat[r * n + j] = h;
      out[r * n + j] = gv[j] * h + bv[j];
    }
  }
  return x.graph->record("layer_norm", {x, gamma, beta}, std::move(out),
                         [xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
                          n](Graph<T>& g, const auto& node) {
    const std::size_t ix = node.inputs[0], ig = node.inputs[1], ib = node.inputs[2];
    const auto dout = g.grad(node.index);
    const auto& gv = g.value(ig);
    if (g.needs_grad(ig)) {
      auto dg = g.grad(ig);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) dg[j] += dout[r * n + j] * xhat[r * n + j];
      }
    }
    if (g.needs_grad(ib)) {
      auto db = g.grad(ib);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) db[j] += dout[r * n + j];
      }
    }
    if (g.needs_grad(ix)) {
      auto dx = g.grad(ix);
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_d = 0.0, mean_dh = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double d = double(dout[r * n + j]) * gv[j];
          mean_d += d;
          mean_dh += d * xhat[r * n + j];
        }
        mean_d /= double(n);
        mean_dh /= double(n);
        for (std::size_t j = 0; j < n; ++j) {
          const double d = double(dout[r * n + j]) * gv[j];
          dx[r * n + j] += static_cast<T>(
              inv_std[r] * (d - mean_d - xhat[r * n + j] * mean_dh));
        }
      }
    }
  });
}

template <typename T>
Var<T> dropout(Var<T> x, double rate) {
  Graph<T>& graph = *x.graph;
  if (!graph.training || graph.rng == nullptr || rate <= 0.0) return x;
  if (rate >= 1.0) throw InvalidArgument("dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const T factor = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.numel());
  for (T& m : mask) m = keep(*graph.rng) ? factor : T{0};
  BasicTensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = xv[i] * mask[i];
  return graph.record("dropout", {x}, std::move(out),
                      [mask = std::move(mask)](Graph<T>& g, const auto& node) {
    const auto dout = g.grad(node.index);
    auto dx = g.grad(node.inputs[0]);
    for (std::size_t i = 0; i < mask.size(); ++i) dx[i] += dout[i] * mask[i];
  });
}

template <typename T>
Var<T> masked_fill(Var<T> x, std::span<const std::uint8_t> keep, T fill) {
  const auto& xv = x.value();
  if (keep.size() != xv.numel()) {
    throw DimensionError("masked_fill: mask of " + std::to_string(keep.size()) +
                         " entries for shape " + shape_to_string(xv.shape()));
  }
  BasicTensor<T> out(xv.shape());
  for (std::size_t i = 0; i < keep.size(); ++i) out[i] = keep[i] ? xv[i] : fill;
  std::vector<std::uint8_t> mask(keep.begin(), keep.end());
  return x.graph->record("masked_fill", {x}, std::move(out),
                         [mask = std::move(mask)](Graph<T>& g, const auto& node) {
    const auto dout = g.grad(node.index);
    auto dx = g.grad(node.inputs[0]);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) dx[i] += dout[i];
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) +
                         " as " + shape_to_string(shape));
  }
  BasicTensor<T> out(std::move(shape), x.value().storage());
  return x.graph->record("reshape", {x}, std::move(out), [](Graph<T>& g, const auto& node) {
    const auto dout = g.grad(node.index);
    auto dx = g.grad(node.inputs[0]);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dout[i];
  });
}

template <typename T>
Var<T> split_heads(Var<T> x, std::size_t batch, std::size_t len, std::size_t heads) {
  const auto& xv = x.value();
  require_rank("split_heads", xv, 2);
  const std::size_t n = xv.dim(1);
  if (xv.dim(0) != batch * len || heads == 0 || n % heads != 0) {
    throw DimensionError("split_heads: shape " + shape_to_string(xv.shape()) +
                         " incompatible with batch=" + std::to_string(batch) +
                         " len=" + std::to_string(len) + " heads=" + std::to_string(heads));
  }
  const std::size_t d = n / heads;
  BasicTensor<T> out({batch * heads, len, d});
  // out[(b*h + hh), l, :] = x[(b*L + l), hh*d : (hh+1)*d]
  auto index = [=](std::size_t b, std::size_t hh, std::size_t l) {
    return std::pair{((b * heads + hh) * len + l) * d, (b * len + l) * n + hh * d};
  };
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t hh = 0; hh < heads; ++hh) {
      for (std::size_t l = 0; l < len; ++l) {
        const auto [o, i] = index(b, hh, l);
        std::copy_n(xv.data().data() + i, d, out.data().data() + o);
      }
    }
  }
  return x.graph->record("split_heads", {x}, std::move(out),
                         [index, batch, heads, len, d](Graph<T>& g, const auto& node) {
    const auto dout = g.grad(node.index);
    auto dx = g.grad(node.inputs[0]);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t hh = 0; hh < heads; ++hh) {
        for (std::size_t l = 0; l < len; ++l) {
          const auto [o, i] = index(b, hh, l);
          for (std::size_t j = 0; j < d; ++j) dx[i + j] += dout[o + j];
        }
      }
    }
  });
}

template <typename T>
Var<T> merge_heads(Var<T> x, std::size_t batch, std::size_t heads) {
  const auto& xv = x.value();
  require_rank("merge_heads", xv, 3);
  if (heads == 0 || xv.dim(0) != batch * heads) {
    throw DimensionError("merge_heads: shape " + shape_to_string(xv.shape()) +
                         " incompatible with batch=" + std::to_string(batch) +
                         " heads=" + std::to_string(heads));
  }
  const std::size_t len = xv.dim(1), d = xv.dim(2), n = heads * d;
  BasicTensor<T> out({batch * len, n});
  auto index = [=](std::size_t b, std::size_t hh, std::size_t l) {
    return std::pair{((b * heads + hh) * len + l) * d, (b * len + l) * n + hh * d};
  };
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t hh = 0; hh < heads; ++hh) {
      for (std::size_t l = 0; l < len; ++l) {
        const auto [i, o] = index(b, hh, l);
        std::copy_n(xv.data().data() + i, d, out.data().data() + o);
      }
    }
  }
  return x.graph->record("merge_heads", {x}, std::move(out),
                         [index, batch, heads, len, d](Graph<T>& g, const auto& node) {
    const auto dout = g.grad(node.index);
    auto dx = g.grad(node.inputs[0]);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t hh = 0; hh < heads; ++hh) {
        for (std::size_t l = 0; l < len; ++l) {
          const auto [i, o] = index(b, hh, l);
          for (std::size_t j = 0; j < d; ++j) dx[i + j] += dout[o + j];
        }
      }
    }
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].value().rank() == 2 ? parts[0].value().dim(0) : 0;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    if (v.rank() != 2 || v.dim(0) != rows) {
      throw DimensionError("concat_cols: part of shape " + shape_to_string(v.shape()) +
                           " does not have " + std::to_string(rows) + " rows");
    }
    widths.push_back(v.dim(1));
    total += v.dim(1);
  }
  BasicTensor<T> out({rows, total});
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& v = parts[pi].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data().data() + r * widths[pi], widths[pi],
                  out.data().data() + r * total + offset);
    }
    offset += widths[pi];
  }
  return parts[0].graph->record("concat_cols", parts, std::move(out),
                                [widths, rows, total](Graph<T>& g, const auto& node) {
    const auto dout = g.grad(node.index);
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < node.inputs.size(); ++pi) {
      const std::size_t w = widths[pi];
      if (g.needs_grad(node.inputs[pi])) {
        auto dx = g.grad(node.inputs[pi]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < w; ++j) dx[r * w + j] += dout[r * total + offset + j];
        }
      }
      offset += w;
    }
  });
}

template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end) {
  const auto& xv = x.value();
  if (begin >= end || end > xv.dim(0)) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") invalid for shape " +
                         shape_to_string(xv.shape()));
  }
  const std::size_t inner = xv.numel() / xv.dim(0);
  Shape shape = xv.shape();
  shape[0] = end - begin;
  std::vector<T> data(xv.data().begin() + begin * inner, xv.data().begin() + end * inner);
  BasicTensor<T> out(std::move(shape), std::move(data));
  const std::size_t offset = begin * inner;
  return x.graph->record("slice_rows", {x}, std::move(out),
                         [offset](Graph<T>& g, const auto& node) {
    const auto dout = g.grad(node.index);
    auto dx = g.grad(node.inputs[0]);
    for (std::size_t i = 0; i < dout.size(); ++i) dx[offset + i] += dout[i];
  });
}

template <typename T>
Var<T> rowwise_cosine(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape("rowwise_cosine", av, bv);
  require_rank("rowwise_cosine", av, 2);
  const std::size_t rows = av.dim(0), n = av.dim(1);
  BasicTensor<T> out({rows});
  std::vector<double> stats(rows * 3);  // dot, |a|, |b|
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double x = av[r * n + j], y = bv[r * n + j];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na == 0.0 || nb == 0.0) {
      throw DegenerateInputError("cosine similarity of a zero-norm vector (row " +
                                 std::to_string(r) + ")");
    }
    stats[3 * r] = dot;
    stats[3 * r + 1] = na;
    stats[3 * r + 2] = nb;
    out[r] = static_cast<T>(dot / (na * nb));
  }
  return a.graph->record("rowwise_cosine", {a, b}, std::move(out),
                         [stats = std::move(stats), rows, n](Graph<T>& g, const auto& node) {
    const std::size_t ia = node.inputs[0], ib = node.inputs[1];
    const auto dout = g.grad(node.index);
    const auto& A = g.value(ia);
    const auto& B = g.value(ib);
    T* da = g.needs_grad(ia) ? g.grad(ia).data() : nullptr;
    T* db = g.needs_grad(ib) ? g.grad(ib).data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      const double na = stats[3 * r + 1], nb = stats[3 * r + 2];
      const double c = stats[3 * r] / (na * nb);
      const double go = dout[r];
      for (std::size_t j = 0; j < n; ++j) {
        const double x = A[r * n + j], y = B[r * n + j];
        if (da) da[r * n + j] += static_cast<T>(go * (y / (na * nb) - c * x / (na * na)));
        if (db) db[r * n + j] += static_cast<T>(go * (x / (na * nb) - c * y / (nb * nb)));
      }
    }
  });
}

template <typename T>
Var<T> rowwise_l2_distance(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape("rowwise_l2_distance", av, bv);
  require_rank("rowwise_l2_distance", av, 2);
  const std::size_t rows = av.dim(0), n = av.dim(1);
  BasicTensor<T> out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = double(av[r * n + j]) - bv[r * n + j];
      s += d * d;
    }
    out[r] = static_cast<T>(std::sqrt(s));
  }
  return a.graph->record("rowwise_l2_distance", {a, b}, std::move(out),
                         [rows, n](Graph<T>& g, const auto& node) {
    const std::size_t ia = node.inputs[0], ib = node.inputs[1];
    const auto dout = g.grad(node.index);
    const auto& dist = node.value();
    const auto& A = g.value(ia);
    const auto& B = g.value(ib);
    T* da = g.needs_grad(ia) ? g.grad(ia).data() : nullptr;
    T* db = g.needs_grad(ib) ? g.grad(ib).data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      if (dist[r] == T{0}) continue;
      const T coef = dout[r] / dist[r];
      for (std::size_t j = 0; j < n; ++j) {
        const T d = A[r * n + j] - B[r * n + j];
        if (da) da[r * n + j] += coef * d;
        if (db) db[r * n + j] -= coef * d;
      }
    }
  });
}

#define SEMB_INSTANTIATE_OPS(T)                                                   \
  template Var<T> matmul(Var<T>, Var<T>);                                         \
  template Var<T> bmm(Var<T>, Var<T>, bool);                                      \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                 \
  template Var<T> elementwise(Var<T>, Var<T>, Elementwise);                       \
  template Var<T> scale(Var<T>, T);                                               \
  template Var<T> add_scalar(Var<T>, T);                                          \
  template Var<T> relu(Var<T>);                                                   \
  template Var<T> gelu(Var<T>);                                                   \
  template Var<T> softmax(Var<T>);                                                \
  template Var<T> cross_entropy(Var<T>, std::span<const std::size_t>);            \
  template Var<T> sum(Var<T>);                                                    \
  template Var<T> mean(Var<T>);                                                   \
  template Var<T> max_over_axis(Var<T>, std::size_t);                             \
  template Var<T> embedding(Var<T>, std::span<const std::int32_t>);               \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                          \
  template Var<T> dropout(Var<T>, double);                                        \
  template Var<T> masked_fill(Var<T>, std::span<const std::uint8_t>, T);          \
  template Var<T> reshape(Var<T>, Shape);                                         \
  template Var<T> split_heads(Var<T>, std::size_t, std::size_t, std::size_t);     \
  template Var<T> merge_heads(Var<T>, std::size_t, std::size_t);                  \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                        \
  template Var<T> slice_rows(Var<T>, std::size_t, std::size_t);                   \
  template Var<T> rowwise_cosine(Var<T>, Var<T>);                                 \
  template Var<T> rowwise_l2_distance(Var<T>, Var<T>);

SEMB_INSTANTIATE_OPS(float)
SEMB_INSTANTIATE_OPS(double)

#undef SEMB_INSTANTIATE_OPS

}  // namespace semb
