#pragma once

#include <cmath>
#include <cstdint>

namespace moe {

// Named substreams so that data synthesis, initialization, restarts and
// probes never share counter sequences even under the same seed.
enum class RngStream : std::uint64_t {
  kData = 1,
  kInit = 2,
  kRestart = 3,
  kTruth = 4,
  kProbe = 5,
  kTrial = 6,
  kMisc = 7,
};

// Counter-based 64-bit generator (splitmix64 finalizer over key+counter).
// Output depends only on (seed, stream, substream, counter), so sequences
// are reproducible across platforms and safe to draw from concurrently
// as long as each consumer owns its own CounterRng value.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, RngStream stream, std::uint64_t substream = 0)
      : key_(mix(mix(seed ^ kSeedTag) ^
                 (static_cast<std::uint64_t>(stream) * kStreamTag) ^
                 mix(substream ^ kSubTag))),
        counter_(0) {}

  std::uint64_t next_u64() {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return mix(key_ ^ counter_);
  }

  // Uniform on [0,1).
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_uniform();
  }

  // Standard normal via Box-Muller; uses two uniforms per call so the
  // stream layout stays independent of call interleavings.
  double next_gaussian() {
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double next_gaussian(double mean, double stddev) {
    return mean + stddev * next_gaussian();
  }

 private:
  static constexpr std::uint64_t kSeedTag = 0x8f9c1d2b3a4e5f60ULL;
  static constexpr std::uint64_t kStreamTag = 0xbf58476d1ce4e5b9ULL;
  static constexpr std::uint64_t kSubTag = 0x94d049bb133111ebULL;

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

// Stable 64-bit key for nested experiment structure (curve, grid point,
// trial, ...); used to give every unit of work its own seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  CounterRng rng(seed ^ (a * 0xd1342543de82ef95ULL) ^
                     (b * 0xaf251af3b0f025b5ULL) ^ (c * 0x9e3779b97f4a7c15ULL),
                 RngStream::kMisc);
  return rng.next_u64();
}

}  // namespace moe
