#pragma once

// Core value types and deterministic randomness shared across the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace quantopt {

// 2-vector used for reward averages, dual variables and (P, N) rate pairs.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

inline double linf_dist(Vec2 a, Vec2 b) {
  return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y));
}

// Proportion of positives p and its complement n = 1 - p.
struct ClassPrior {
  double p;
  double n;

  static ClassPrior of(double p) {
    if (!(p > 0.0 && p < 1.0))
      throw std::invalid_argument("class prior must lie strictly inside (0, 1)");
    return {p, 1.0 - p};
  }
};

struct Feature {
  uint32_t index;
  double value;
};

// Sparse feature vector with a +/-1 label. Features are kept sorted by index
// and duplicate-free; parsers and generators enforce this.
struct LabeledPoint {
  std::vector<Feature> features;
  int label = 1;
};

inline uint32_t max_feature_index(const LabeledPoint& pt) {
  return pt.features.empty() ? 0 : pt.features.back().index;
}

inline double dot(const std::vector<double>& w, const LabeledPoint& pt) {
  double s = 0.0;
  for (const Feature& f : pt.features)
    if (f.index < w.size()) s += w[f.index] * f.value;
  return s;
}

inline void axpy(std::vector<double>& w, double a, const LabeledPoint& pt) {
  for (const Feature& f : pt.features)
    if (f.index < w.size()) w[f.index] += a * f.value;
}

inline double norm2(const std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += v * v;
  return std::sqrt(s);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stable per-purpose seed derivation so independent consumers of one user
// seed do not share streams.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream_id) {
  uint64_t s = seed ^ (0x517cc1b727220a95ull * (stream_id + 1));
  return splitmix64(s);
}

// Deterministic RNG. All sampling is hand-rolled on top of the standardized
// mt19937_64 bit stream; the std distributions are implementation-defined and
// would break bitwise reproducibility of traces across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Unbiased integer in [0, n) by rejection sampling.
  uint64_t uniform_index(uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
    const uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      uint64_t r = gen_();
      if (r >= threshold) return r % n;
    }
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform_real01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform_real01() < p; }

  // Standard normal via Box-Muller (pair cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = std::max(uniform_real01(), 0x1.0p-60);
    double u2 = uniform_real01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(i)]);
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace quantopt
