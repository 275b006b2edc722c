#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace agpo {

// splitmix64 step; used to mix seeds for derived substreams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives a substream seed from a base seed and a list of salts.
// Deterministic and order-sensitive, so (seed, step, group) style
// derivations never collide with (seed, group, step).
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> salts) {
  std::uint64_t s = splitmix64(base);
  for (std::uint64_t v : salts) s = splitmix64(s ^ v);
  return s;
}

// Deterministic RNG wrapper. mt19937_64 output is fully specified by the
// standard; the std distributions are not, so uniform sampling is done by
// hand to keep runs byte-identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform double in [0, 1) with 53 bits of entropy
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  int uniform_int(int n) { return static_cast<int>(uniform() * n); }

  // uniform double in [lo, hi)
  double uniform_range(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace agpo
