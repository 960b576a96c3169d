#ifndef MIGRSIM_COMMON_PRNG_H_
#define MIGRSIM_COMMON_PRNG_H_

#include <cstdint>

namespace migrsim {

// One round of splitmix64. Used to spread user seeds before they enter a
// xorshift state, and as a stateless hash for derived seeds.
constexpr uint64_t SplitMix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// xorshift64* generator: shift triple (12, 25, 27), output multiplier
// 0x2545F4914F6CDD1D. The state is the splitmix64 image of the seed; a zero
// state (never produced in practice) is replaced by the golden-ratio constant.
// Every simulated source of randomness (loss, duplication, protection keys)
// draws from one of these, so traces depend only on the seeds.
class Xorshift64Star {
 public:
  static constexpr uint64_t kMultiplier = 0x2545F4914F6CDD1DULL;

  explicit Xorshift64Star(uint64_t seed) : state_(SplitMix64(seed)) {
    if (state_ == 0) state_ = 0x9E3779B97F4A7C15ULL;
  }

  uint64_t Next() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * kMultiplier;
  }

  uint32_t Next32() { return static_cast<uint32_t>(Next() >> 32); }

  // Uniform in [0, 1) with 53 bits of precision.
  double NextUnit() { return static_cast<double>(Next() >> 11) * 0x1.0p-53; }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

// FNV-1a, 64-bit. Used for trace digests.
class Fnv1a64 {
 public:
  void Update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001B3ULL;
    }
  }
  template <typename T>
  void UpdateValue(const T& v) {
    Update(&v, sizeof(v));
  }
  uint64_t digest() const { return hash_; }

 private:
  uint64_t hash_ = 0xCBF29CE484222325ULL;
};

}  // namespace migrsim

#endif  // MIGRSIM_COMMON_PRNG_H_
