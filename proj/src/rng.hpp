#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "errors.hpp"

// Randomness rules for reproducibility:
//  - mt19937_64 is the only engine; its output sequence is pinned by the
//    standard, so identical seeds give identical streams on any platform.
//  - std::* distributions are NOT bit-stable across standard libraries, so
//    every transform (uniform, gauss, gamma, laplace, shuffle) is spelled out
//    here instead.
//  - Each consumer derives its own sub-stream with mix_seed and a unique tag
//    so no two stages ever share a stream by accident.

namespace fedlab {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) { return splitmix64(a ^ splitmix64(b)); }
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) { return mix_seed(mix_seed(a, b), c); }
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  return mix_seed(mix_seed(a, b, c), d);
}

// Stream tags. Never reuse a value.
namespace stream {
inline constexpr uint64_t kModelInit = 0xA1;
inline constexpr uint64_t kBlobCenters = 0xA2;
inline constexpr uint64_t kBlobNoise = 0xA3;
inline constexpr uint64_t kPartition = 0xA4;
inline constexpr uint64_t kShards = 0xA5;
inline constexpr uint64_t kLocalTrain = 0xA6;
inline constexpr uint64_t kParticipation = 0xA7;
inline constexpr uint64_t kParticipationPost = 0xA8;
inline constexpr uint64_t kProbes = 0xA9;
inline constexpr uint64_t kKmeansInit = 0xAA;
inline constexpr uint64_t kDpNoise = 0xAB;
inline constexpr uint64_t kClusterInit = 0xAC;
inline constexpr uint64_t kIdInfer = 0xAD;
inline constexpr uint64_t kPostLocal = 0xAE;
inline constexpr uint64_t kElbow = 0xAF;
}  // namespace stream

class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1), 53-bit resolution
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  // (0, 1]; safe as a log argument
  double uniform_pos() { return double((eng_() >> 11) + 1) * 0x1.0p-53; }

  // [lo, hi); one engine draw
  double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n); modulo bias is ~n/2^64, irrelevant next to determinism
  uint64_t below(uint64_t n) { return eng_() % n; }

  // Box-Muller, one value per call (two engine draws, second branch unused
  // so the draw count per call is fixed).
  double gauss() {
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Marsaglia-Tsang; boosted for shape < 1.
  double gamma(double shape) {
    if (!(shape > 0.0)) fail(ErrorCode::InvalidArgument, "gamma shape must be > 0");
    if (shape < 1.0) {
      double g = gamma(shape + 1.0);
      return g * std::pow(uniform_pos(), 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = gauss();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Lap(0, scale) via inverse CDF.
  double laplace(double scale) {
    double u = uniform() - 0.5;
    double sign = (u < 0.0) ? -1.0 : 1.0;
    double a = std::fabs(u);
    // 1 - 2|u| is in (0, 1]; u == 0.5 is unreachable because uniform() < 1
    return -scale * sign * std::log(1.0 - 2.0 * a);
  }

 private:
  std::mt19937_64 eng_;
};

// Fisher-Yates, explicit so the permutation sequence is ours.
template <typename T>
void shuffle_vec(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = size_t(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

inline std::vector<int32_t> iota_indices(int n) {
  std::vector<int32_t> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[size_t(i)] = i;
  return idx;
}

}  // namespace fedlab
