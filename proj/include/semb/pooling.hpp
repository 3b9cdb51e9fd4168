#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semb/graph.hpp"
#include "semb/tokenizer.hpp"

namespace semb {

enum class PoolingStrategy { kCls, kMean, kMax };

// `cls|mean|max`
PoolingStrategy parse_pooling(std::string_view name);
std::string_view to_string(PoolingStrategy strategy);

struct SentenceEmbedding {
  std::vector<float> vector;
  std::optional<std::string> source_id;
};

// Collapses token outputs [B x L x n] to [B x n]. `mask` is [B x L]; masked
// positions never influence the result. CLS takes position 0 regardless of
// the mask. Throws DimensionError on a row without any unmasked position.
template <typename T>
Var<T> pool(Var<T> token_outputs, std::span<const std::uint8_t> mask,
            PoolingStrategy strategy);

// [B x L] pooling mask for a padded batch. With include_special = false the
// [CLS] and [SEP] positions are dropped unless that would empty the row.
std::vector<std::uint8_t> pooling_mask(std::span<const TokenizedSentence> batch,
                                       bool include_special = true);

}  // namespace semb
