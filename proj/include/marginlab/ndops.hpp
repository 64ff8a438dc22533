#pragma once

// Dense array aliases, seeded randomness, and small spectral helpers shared
// by every other header. All floating point is IEEE double; reductions go
// through Eigen's fixed-order kernels, so identical inputs give identical
// bits on repeated runs.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace marginlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntVector = Eigen::VectorXi;
using Index = Eigen::Index;

inline void ensure_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw std::runtime_error(std::string(what) + ": non-finite entries");
  }
}

inline void ensure_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) {
    throw std::runtime_error(std::string(what) + ": non-finite entries");
  }
}

/// Deterministic random stream. Wraps std::mt19937_64 (whose output is fixed
/// by the standard) and derives doubles with explicit bit transforms instead
/// of std::*_distribution, which vary between standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  /// Substream derivation, e.g. one independent stream per example index.
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : RngStream(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1))) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_bits() { return engine_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  /// Standard normal via Box-Muller; the pair's second value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] keeps the log finite.
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Vector normal_vector(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  /// Uniform integer in [0, n) by masked rejection (portable, unbiased).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be > 0");
    if (n == 1) return 0;
    std::uint64_t mask = ~0ULL >> __builtin_clzll(n - 1);
    std::uint64_t draw;
    do {
      draw = engine_() & mask;
    } while (draw >= n);
    return draw;
  }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[uniform_index(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Uniform draw from the closed l2 ball B(center, radius): Gaussian direction
/// scaled by radius * u^(1/d). Exact in any dimension, no rejection.
inline Vector sample_ball(RngStream& rng, const Vector& center, double radius) {
  if (!(radius > 0.0)) {
    throw std::invalid_argument("sample_ball: radius must be positive");
  }
  const Index d = center.size();
  Vector direction = rng.normal_vector(d);
  double norm = direction.norm();
  while (norm == 0.0) {  // astronomically unlikely; redraw
    direction = rng.normal_vector(d);
    norm = direction.norm();
  }
  const double u = rng.uniform01();
  const double scale =
      radius * std::pow(u, 1.0 / static_cast<double>(d)) / norm;
  Vector point = center + scale * direction;
  ensure_finite(point, "sample_ball");
  return point;
}

/// Power-iteration estimate of the largest singular value. Deterministic:
/// the start vector comes from a fixed-seed stream. The Rayleigh-quotient
/// estimate is nondecreasing in the iteration count and never exceeds the
/// Frobenius norm.
inline double spectral_norm(const Matrix& w, int iters = 100) {
  if (iters < 1) throw std::invalid_argument("spectral_norm: iters >= 1");
  if (w.size() == 0 || w.isZero(0.0)) return 0.0;
  RngStream rng(0x5eeded5eedULL);
  Vector v = rng.normal_vector(w.cols());
  v.normalize();
  double estimate = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vector wv = w * v;
    estimate = wv.norm();
    if (estimate == 0.0) return 0.0;
    v.noalias() = w.transpose() * wv;
    const double n = v.norm();
    if (n == 0.0) return estimate;
    v /= n;
  }
  return estimate;
}

}  // namespace marginlab
