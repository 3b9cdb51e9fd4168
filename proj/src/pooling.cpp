#include "semb/pooling.hpp"

#include <limits>

namespace semb {

PoolingStrategy parse_pooling(std::string_view name) {
  if (name == "cls") return PoolingStrategy::kCls;
  if (name == "mean") return PoolingStrategy::kMean;
  if (name == "max") return PoolingStrategy::kMax;
  throw InvalidArgument("unknown pooling strategy '" + std::string(name) +
                        "' (expected cls|mean|max)");
}

std::string_view to_string(PoolingStrategy strategy) {
  switch (strategy) {
    case PoolingStrategy::kCls: return "cls";
    case PoolingStrategy::kMean: return "mean";
    case PoolingStrategy::kMax: return "max";
  }
  return "mean";
}

template <typename T>
Var<T> pool(Var<T> token_outputs, std::span<const std::uint8_t> mask,
            PoolingStrategy strategy) {
  const auto& x = token_outputs.value();
  if (x.rank() != 3) {
    throw DimensionError("pool: expected [B x L x n], got " + shape_to_string(x.shape()));
  }
  const std::size_t b = x.dim(0), len = x.dim(1), n = x.dim(2);
  if (mask.size() != b * len) {
    throw DimensionError("pool: mask of " + std::to_string(mask.size()) +
                         " entries for " + shape_to_string(x.shape()));
  }
  std::vector<std::size_t> counts(b, 0);
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t l = 0; l < len; ++l) counts[s] += mask[s * len + l] ? 1 : 0;
    if (counts[s] == 0) {
      throw DimensionError("pool: sentence " + std::to_string(s) + " is fully masked");
    }
  }
  Graph<T>& g = *token_outputs.graph;
  BasicTensor<T> out({b, n});

  switch (strategy) {
    case PoolingStrategy::kCls: {
      for (std::size_t s = 0; s < b; ++s) {
        std::copy_n(x.data().data() + s * len * n, n, out.data().data() + s * n);
      }
      return g.record("pool_cls", {token_outputs}, std::move(out),
                      [len, n, b](Graph<T>& gr, const auto& node) {
        const auto dout = gr.grad(node.index);
        auto dx = gr.grad(node.inputs[0]);
        for (std::size_t s = 0; s < b; ++s) {
          for (std::size_t j = 0; j < n; ++j) dx[s * len * n + j] += dout[s * n + j];
        }
      });
    }
    case PoolingStrategy::kMean: {
      for (std::size_t s = 0; s < b; ++s) {
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t l = 0; l < len; ++l) {
            if (mask[s * len + l]) acc += x[(s * len + l) * n + j];
          }
          out[s * n + j] = static_cast<T>(acc / double(counts[s]));
        }
      }
      std::vector<std::uint8_t> m(mask.begin(), mask.end());
      return g.record("pool_mean", {token_outputs}, std::move(out),
                      [m = std::move(m), counts, b, len, n](Graph<T>& gr, const auto& node) {
        const auto dout = gr.grad(node.index);
        auto dx = gr.grad(node.inputs[0]);
        for (std::size_t s = 0; s < b; ++s) {
          const T inv = T(1) / static_cast<T>(counts[s]);
          for (std::size_t l = 0; l < len; ++l) {
            if (!m[s * len + l]) continue;
            for (std::size_t j = 0; j < n; ++j) {
              dx[(s * len + l) * n + j] += dout[s * n + j] * inv;
            }
          }
        }
      });
    }
    case PoolingStrategy::kMax: {
      // Masked positions act as -inf; ties resolve to the first maximal index.
      std::vector<std::size_t> argmax(b * n);
      for (std::size_t s = 0; s < b; ++s) {
        for (std::size_t j = 0; j < n; ++j) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_at = 0;
          for (std::size_t l = 0; l < len; ++l) {
            if (!mask[s * len + l]) continue;
            const std::size_t at = (s * len + l) * n + j;
            if (x[at] > best) {
              best = x[at];
              best_at = at;
            }
          }
          out[s * n + j] = best;
          argmax[s * n + j] = best_at;
        }
      }
      return g.record("pool_max", {token_outputs}, std::move(out),
                      [argmax = std::move(argmax)](Graph<T>& gr, const auto& node) {
        const auto dout = gr.grad(node.index);
        auto dx = gr.grad(node.inputs[0]);
        for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dout[i];
      });
    }
  }
  throw InvalidArgument("pool: unknown strategy");
}

std::vector<std::uint8_t> pooling_mask(std::span<const TokenizedSentence> batch,
                                       bool include_special) {
  std::vector<std::uint8_t> mask;
  for (const auto& s : batch) {
    std::vector<std::uint8_t> row = s.mask;
    if (!include_special) {
      std::vector<std::uint8_t> trimmed = row;
      for (std::size_t l = 0; l < s.ids.size(); ++l) {
        if (s.ids[l] == kClsId || s.ids[l] == kSepId) trimmed[l] = 0;
      }
      if (std::find(trimmed.begin(), trimmed.end(), 1) != trimmed.end()) row = trimmed;
    }
    mask.insert(mask.end(), row.begin(), row.end());
  }
  return mask;
}

template Var<float> pool(Var<float>, std::span<const std::uint8_t>, PoolingStrategy);
template Var<double> pool(Var<double>, std::span<const std::uint8_t>, PoolingStrategy);

}  // namespace semb
