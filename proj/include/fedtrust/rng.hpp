#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string_view>
#include <vector>

namespace fedtrust {

// Counter-based splittable generator. A stream is (key, counter); child
// streams hash a label into the key and restart the counter, so every
// stochastic site (init, shuffle, attack noise, permutations, eps-greedy)
// draws from its own sequence regardless of evaluation order elsewhere.
// All distributions are implemented here rather than with <random> so that
// sequences are identical across platforms and standard libraries.
class RngStream {
 public:
  RngStream() = default;

  static RngStream from_seed(uint64_t seed) {
    RngStream s;
    s.key_ = mix64(seed ^ 0x5851f42d4c957f2dULL);
    return s;
  }

  RngStream child(std::string_view label) const {
    RngStream s;
    s.key_ = mix64(key_ ^ fnv1a(label));
    return s;
  }

  RngStream child(uint64_t index) const {
    RngStream s;
    s.key_ = mix64(key_ ^ mix64(index + 0x9e3779b97f4a7c15ULL));
    return s;
  }

  RngStream child(std::string_view label, uint64_t index) const {
    return child(label).child(index);
  }

  RngStream child(std::string_view label, uint64_t i, uint64_t j) const {
    return child(label).child(i).child(j);
  }

  uint64_t next_u64() {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return mix64(key_ + counter_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double u01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the second value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = u01();
    double u2 = u01();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Marsaglia-Tsang gamma sampler, shape alpha > 0, scale 1.
  double gamma(double alpha) {
    if (alpha < 1.0) {
      double u = u01();
      while (u <= 0.0) u = u01();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = u01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

  // Unbiased uniform integer in [0, n) (Lemire rejection).
  uint64_t below(uint64_t n) {
    unsigned __int128 m = (unsigned __int128)next_u64() * n;
    auto lo = (uint64_t)m;
    if (lo < n) {
      uint64_t t = (0 - n) % n;
      while (lo < t) {
        m = (unsigned __int128)next_u64() * n;
        lo = (uint64_t)m;
      }
    }
    return (uint64_t)(m >> 64);
  }

  int uniform_int(int n) { return (int)below((uint64_t)n); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = (size_t)below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    shuffle(p);
    return p;
  }

  // First k entries of a random permutation of [0, n).
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> p = permutation(n);
    p.resize(k);
    return p;
  }

 private:
  static uint64_t mix64(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  static uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
      h ^= (uint64_t)(unsigned char)c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  uint64_t key_ = 0;
  uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fedtrust
