#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <vector>

namespace collabrl {

// splitmix64 finalizer; the workhorse behind every random stream here.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

// Tags that keep independent uses of one run seed decorrelated.
enum class StreamPurpose : std::uint64_t {
  TaskGen = 1,
  BatchSelect = 2,
  Sampling = 3,
  FilterD2 = 4,
  RouterLabels = 5,
  EvalShuffle = 6,
  Split = 7,
  Verify = 8,
};

// Counter-based random stream. The key is a pure function of
// (seed, path...) and every draw is a pure function of (key, counter),
// so a stream can be recreated at any call site without threading
// generator state through the program. Draw order within one stream
// still matters; stream identity does not.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : key_(mix64(seed + kGamma)) {}

  RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path)
      : key_(mix64(seed + kGamma)) {
    for (std::uint64_t p : path) key_ = mix64(key_ ^ (p + kGamma));
  }

  RngStream(std::uint64_t seed, StreamPurpose purpose,
            std::initializer_list<std::uint64_t> path)
      : RngStream(seed) {
    key_ = mix64(key_ ^ (static_cast<std::uint64_t>(purpose) + kGamma));
    for (std::uint64_t p : path) key_ = mix64(key_ ^ (p + kGamma));
  }

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGamma); }

  // Uniform in [0, 1), 53 bits of precision.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Multiply-shift; bias is O(n / 2^64).
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double next_gauss() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  bool next_bernoulli(double p) { return next_double() < p; }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace collabrl
