#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "semb/errors.hpp"

namespace semb {

// Row-major [rows x dim] block of sentence embeddings.
struct EmbeddingMatrix {
  std::size_t dim = 0;
  std::vector<float> data;

  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t d) : dim(d), data(rows * d, 0.0F) {}

  std::size_t rows() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }
};

// Anything that turns sentences into fixed-size vectors.
class SentenceEmbedder {
 public:
  virtual ~SentenceEmbedder() = default;
  virtual std::size_t dim() const = 0;
  // Row i embeds texts[i].
  virtual EmbeddingMatrix embed(std::span<const std::string> texts) const = 0;
};

}  // namespace semb
