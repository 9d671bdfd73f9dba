#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace zno {

// Splittable deterministic RNG. A stream is identified by a 64-bit key
// derived from (seed, label); draws walk the key with splitmix64. Substreams
// fork from the key, not the walk position, so the draw sequence of a stream
// depends only on (seed, label, fork path) and never on thread count.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label)
      : RngStream(mix64(seed ^ hash_label(label))) {}

  RngStream fork(std::uint64_t index) const {
    return RngStream(mix64(key_ ^ mix64(index + 0x632be59bd9b4e019ULL)));
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // N(0, 1) via Box-Muller; the second value of each pair is cached
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    // u1 in (0, 1] so the log is finite
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform();
    double rad = std::sqrt(-2.0 * std::log(u1));
    double ang = 2.0 * M_PI * u2;
    cached_ = rad * std::sin(ang);
    has_cached_ = true;
    return rad * std::cos(ang);
  }

 private:
  explicit RngStream(std::uint64_t key) : key_(key), state_(key) {}

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t hash_label(std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char ch : label) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  std::uint64_t key_;
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace zno
