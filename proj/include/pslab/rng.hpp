/*
 * Copyright 2026 The ps-lab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PSLAB_RNG_HPP_
#define PSLAB_RNG_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>

#include "pslab/error.hpp"

namespace pslab {

// SplitMix64 step. Used only to expand seeds into generator state.
constexpr std::uint64_t splitmix64(std::uint64_t& x) noexcept {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// xoshiro256** (Blackman and Vigna, 2018) with SplitMix64 seeding.
///
/// Streams: `Rng(seed, stream)` seeds the state from
/// splitmix64(seed ^ (stream * 0xd1342543de82ef95)), so two distinct stream
/// ids under one seed give unrelated sequences. The trainer uses fixed
/// stream ids (see `Streams`) for data shuffling, pair sampling, parameter
/// initialisation and evaluation so that enabling one stochastic feature
/// never shifts the draws of another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept {
    std::uint64_t x = seed ^ (stream * 0xd1342543de82ef95ULL);
    for (auto& word : state_) word = splitmix64(x);
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1); safe as a log() argument.
  double uniform_open() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Unbiased integer in [0, n) by rejection. n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw InvalidParameter("uniform_index: n must be positive");
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  // Standard normal by Box-Muller; consumes exactly two uniforms per call.
  double normal() noexcept {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) noexcept {
    return mean + stddev * normal();
  }

  const std::array<std::uint64_t, 4>& state() const noexcept { return state_; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
};

// Fixed stream ids for the independent random sources of one run.
struct Streams {
  static constexpr std::uint64_t kInit = 1;
  static constexpr std::uint64_t kShuffle = 2;
  static constexpr std::uint64_t kSynthesis = 3;
  static constexpr std::uint64_t kData = 4;
  static constexpr std::uint64_t kEval = 5;
  static constexpr std::uint64_t kGradCheck = 6;
};

namespace detail {

inline void check_shape(double shape, const char* who) {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw InvalidParameter(std::string(who) +
                           ": shape parameter must be positive and finite");
  }
}

}  // namespace detail

/// Gamma(shape, 1) by Marsaglia and Tsang (2000). For shape < 1 the
/// boost G(a) = G(a+1) * U^(1/a) is applied.
inline double gamma_sample(double shape, Rng& rng) {
  detail::check_shape(shape, "gamma_sample");
  if (shape < 1.0) {
    const double g = gamma_sample(shape + 1.0, rng);
    return g * std::pow(rng.uniform_open(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    if (u < 1.0 - 0.0331 * (x * x) * (x * x)) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

/// Beta(a, b). Johnk's rejection method when both shapes are below one,
/// otherwise the gamma ratio G_a / (G_a + G_b).
inline double beta_sample(double a, double b, Rng& rng) {
  detail::check_shape(a, "beta_sample");
  detail::check_shape(b, "beta_sample");
  if (a < 1.0 && b < 1.0) {
    for (;;) {
      const double u = rng.uniform_open();
      const double v = rng.uniform_open();
      const double x = std::pow(u, 1.0 / a);
      const double y = std::pow(v, 1.0 / b);
      const double s = x + y;
      if (s > 1.0) continue;
      if (s > 0.0) return x / s;
      // Both powers underflowed; finish the ratio in log space.
      const double log_x = std::log(u) / a;
      const double log_y = std::log(v) / b;
      const double log_m = std::max(log_x, log_y);
      const double ex = std::exp(log_x - log_m);
      const double ey = std::exp(log_y - log_m);
      return ex / (ex + ey);
    }
  }
  const double ga = gamma_sample(a, rng);
  const double gb = gamma_sample(b, rng);
  return ga / (ga + gb);
}

// Symmetric Beta(alpha, alpha), the interpolation-coefficient prior.
inline double beta_sample(double alpha, Rng& rng) {
  return beta_sample(alpha, alpha, rng);
}

}  // namespace pslab

#endif  // PSLAB_RNG_HPP_
