#ifndef AVBCI_RNG_HPP
#define AVBCI_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace avbci {

// splitmix64 step; used to derive independent child seeds from a master seed
// so parallel loops give the same result regardless of scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ (0x632be59bd9b4e019ULL * (stream + 1)));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

// Unbiased index in [0, n); avoids distribution objects whose output is
// implementation-defined, keeping artifacts byte-stable.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t bound = std::mt19937_64::max() - std::mt19937_64::max() % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= bound);
  return static_cast<std::size_t>(r % n);
}

template <typename T>
void fisher_yates(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

inline double uniform_real(std::mt19937_64& rng) {
  return (rng() >> 11) * 0x1.0p-53;  // [0,1) with 53 random bits
}

}  // namespace avbci

#endif
