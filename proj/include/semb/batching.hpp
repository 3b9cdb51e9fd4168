#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace semb {

using Batch = std::vector<std::size_t>;  // example indices

// Fixed-order chunking: [0, bs), [bs, 2bs), ...
std::vector<Batch> plain_batches(std::size_t count, std::size_t batch_size);

// Length-grouped batches. Examples are stable-sorted by length and cut into
// contiguous chunks of batch_size; when count is not a multiple of
// batch_size the short chunk is placed where it minimizes total padding.
// With shuffle, only the order of batches is permuted (by seed), never
// their contents.
std::vector<Batch> smart_batches(std::span<const std::size_t> lengths,
                                 std::size_t batch_size, std::uint64_t seed,
                                 bool shuffle = true);

// Sum over batches of batch size x longest member.
std::size_t padded_token_count(std::span<const std::size_t> lengths,
                               std::span<const Batch> batches);

}  // namespace semb
