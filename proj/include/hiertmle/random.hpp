#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace hiertmle {

using Rng = std::mt19937_64;

/// Mixes a base seed with a stream index (splitmix64 finalizer). Every
/// parallel worker, replicate, or block gets its own stream this way, so
/// results never depend on thread count or scheduling.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

inline Rng make_rng(std::uint64_t base, std::uint64_t stream) {
  return Rng(derive_seed(base, stream));
}

// Runs body(i) for i in [0, n) on up to `threads` workers. Indices are
// handed out dynamically; body must only write to index-owned storage.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace hiertmle
