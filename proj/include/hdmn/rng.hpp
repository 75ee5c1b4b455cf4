#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace hdmn {

// Counter-based RNG stream. Each draw hashes (key, counter), so streams can be
// created per (seed, slice, particle) and used in any order or in parallel
// without coupling results to execution order.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : key_(key) {}

  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t a = 0,
                                  std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t k = mix(seed ^ 0x9e3779b97f4a7c15ull);
    k = mix(k ^ mix(a ^ 0xbf58476d1ce4e5b9ull));
    k = mix(k ^ mix(b ^ 0x94d049bb133111ebull));
    k = mix(k ^ mix(c ^ 0xd6e8feb86659fd93ull));
    return k;
  }

  std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform in {0, ..., n-1}
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // standard normal via Box-Muller (deterministic across platforms)
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // index drawn from unnormalized nonnegative weights; caller guarantees sum > 0
  int categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < weights.size(); ++k) {
      acc += weights[k];
      if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(weights.size()) - 1;
  }

  std::uint64_t counter() const { return counter_; }

 private:
  // splitmix64 finalizer, applied twice for good measure on correlated keys
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z = z ^ (z >> 31);
    z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdull;
    z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ull;
    return z ^ (z >> 33);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hdmn
