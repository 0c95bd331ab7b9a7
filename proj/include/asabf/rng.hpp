#ifndef ASABF_RNG_HPP_
#define ASABF_RNG_HPP_

#include <cstdint>
#include <random>

namespace asabf {

// splitmix64 step; used to derive independent substreams from one seed so
// that per-utterance work gives identical results whether it runs serially
// or in parallel.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream_id) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s ^= stream_id * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull;
  std::uint64_t b = splitmix64(s);
  return a ^ (b + 0x632be59bd9b4e019ull + (a << 6) + (a >> 2));
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream_id = 0) {
  return std::mt19937_64(derive_stream(seed, stream_id));
}

}  // namespace asabf

#endif  // ASABF_RNG_HPP_
