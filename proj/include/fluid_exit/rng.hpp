#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace fluid_exit {

// SplitMix64 step; used both as a mixer for stream-key derivation and to
// expand seeds into generator state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives the key of an independent substream. Chaining calls partitions the
// key space by index tuples: derive(m, a) and derive(derive(m, a), b) give
// the streams for path a and for inner replicate (a, b). Any implementation
// reproducing this derivation reproduces the partitioning contract; the
// streams themselves are xoshiro256++ seeded from four SplitMix64 outputs.
inline std::uint64_t derive_stream_key(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = master ^ (0xD1B54A32D192ED03ULL * (index + 1));
  return splitmix64(s);
}

inline std::uint64_t derive_stream_key(std::uint64_t master, std::uint64_t a,
                                       std::uint64_t b) {
  return derive_stream_key(derive_stream_key(master, a), b);
}

// xoshiro256++ (Blackman/Vigna). Small, fast, and fully deterministic across
// platforms, which std::random distributions are not.
class Xoshiro256pp {
 public:
  explicit Xoshiro256pp(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on (0, 1]; never returns 0 so log() is always finite.
  double uniform() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t state_[4];
};

// Fixed-order pairwise summation. Deterministic for a given array regardless
// of how the array was filled, so estimates are bit-stable across worker
// counts.
double pairwise_sum(std::span<const double> values);

struct MeanStderr {
  double mean = 0.0;
  double stderror = 0.0;
};

// Sample mean and standard error of the mean (pairwise reductions).
MeanStderr mean_stderr(std::span<const double> values);

}  // namespace fluid_exit
