#include "semb/batching.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "semb/errors.hpp"

namespace semb {

std::vector<Batch> plain_batches(std::size_t count, std::size_t batch_size) {
  if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
  std::vector<Batch> out;
  for (std::size_t start = 0; start < count; start += batch_size) {
    Batch b(std::min(batch_size, count - start));
    std::iota(b.begin(), b.end(), start);
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<Batch> smart_batches(std::span<const std::size_t> lengths,
                                 std::size_t batch_size, std::uint64_t seed,
                                 bool shuffle) {
  if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
  const std::size_t count = lengths.size();
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });

  const std::size_t full = count / batch_size;
  const std::size_t rest = count % batch_size;
  // Position (in batch order) of the short chunk. Cost of placing it at slot
  // p: full chunks before p cover sorted[0, p*bs), the short chunk covers
  // the next `rest`, and full chunks follow.
  std::size_t short_slot = full;
  if (rest != 0 && full > 0) {
    auto sorted_len = [&](std::size_t i) { return lengths[order[i]]; };
    std::size_t best_cost = 0;
    for (std::size_t p = 0; p <= full; ++p) {
      std::size_t cost = 0, pos = 0;
      for (std::size_t slot = 0; slot <= full; ++slot) {
        const std::size_t size = slot == p ? rest : batch_size;
        pos += size;
        cost += size * sorted_len(pos - 1);
      }
      // Ties favour the latest slot, i.e. plain chunking of the sorted order.
      if (p == 0 || cost <= best_cost) {
        best_cost = cost;
        short_slot = p;
      }
    }
  }

  std::vector<Batch> out;
  std::size_t pos = 0;
  const std::size_t slots = full + (rest != 0 ? 1 : 0);
  for (std::size_t slot = 0; slot < slots; ++slot) {
    const std::size_t size = (rest != 0 && slot == short_slot) ? rest : batch_size;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                     order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  if (shuffle) {
    std::mt19937_64 rng(seed);
    std::shuffle(out.begin(), out.end(), rng);
  }
  return out;
}

std::size_t padded_token_count(std::span<const std::size_t> lengths,
                               std::span<const Batch> batches) {
  std::size_t total = 0;
  for (const auto& b : batches) {
    std::size_t longest = 0;
    for (std::size_t i : b) longest = std::max(longest, lengths[i]);
    total += longest * b.size();
  }
  return total;
}

}  // namespace semb
