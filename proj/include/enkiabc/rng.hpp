// Copyright 2026 The enkiabc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ENKIABC_RNG_HPP
#define ENKIABC_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

/**
 * \file
 * \brief Seeded random number generation with platform-stable transforms.
 *
 * The engine is std::mt19937_64, whose output sequence is fixed by the C++
 * standard. The standard library distributions are implementation-defined, so
 * uniform, normal and exponential variates are produced here from raw engine
 * output; given a seed, every draw is reproducible across toolchains (up to
 * the last-ulp behaviour of std::log).
 */

namespace enkiabc {

/// SplitMix64 finalizer, used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Random source passed explicitly to every stochastic operation.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Stream-split rule: the seed of stream (root, id_1, ..., id_k) is
  /// s_0 = splitmix64(root), s_i = splitmix64(s_{i-1} ^ splitmix64(id_i + i)).
  /// Streams with different id tuples are statistically independent.
  static Rng stream(std::uint64_t root, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t s = splitmix64(root);
    std::uint64_t i = 0;
    for (const auto id : ids) {
      ++i;
      s = splitmix64(s ^ splitmix64(id + i));
    }
    return Rng{s};
  }

  static constexpr result_type min() noexcept { return std::mt19937_64::min(); }
  static constexpr result_type max() noexcept { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(static_cast<std::int64_t>(engine_() >> 11)) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() {
    double u = 0.0;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  /// Standard normal via the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Exponential with the given rate (> 0).
  double exponential(double rate) { return -std::log(uniform_open()) / rate; }

  /// Uniform index in [0, n), n > 0.
  std::size_t index(std::size_t n) {
    // Lemire's multiply-shift with rejection; exact for any n.
    const auto range = static_cast<std::uint64_t>(n);
    auto product = static_cast<unsigned __int128>(engine_()) * range;
    auto low = static_cast<std::uint64_t>(product);
    if (low < range) {
      const std::uint64_t threshold = (0 - range) % range;
      while (low < threshold) {
        product = static_cast<unsigned __int128>(engine_()) * range;
        low = static_cast<std::uint64_t>(product);
      }
    }
    return static_cast<std::size_t>(product >> 64);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace enkiabc

#endif
