#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace spseg {

// Worker count used by parallel_for. 0 selects hardware concurrency.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, n). Each index is processed exactly once and the
// partition of indices over workers is static, so any code whose per-index
// work writes only to per-index outputs is scheduling independent.
// The first exception thrown by any worker is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// SplitMix64 finalizer; used to derive independent seeds from a base seed
// and a stream index.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(mix_seed(base) ^ (stream * 0xD1B54A32D192ED03ULL + 1));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(base, a), b);
}

}  // namespace spseg
