#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "gkdiff/errors.hpp"

namespace gkdiff {

// Philox4x32-10 counter-based generator.  A (seed, stream) pair plus a
// 128-bit counter fully determine every draw, so trajectories are
// reproducible and independently seedable without shared state.
class Philox {
 public:
  Philox(std::uint64_t seed, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {
    counter_[2] = static_cast<std::uint32_t>(stream);
    counter_[3] = static_cast<std::uint32_t>(stream >> 32);
  }

  std::uint32_t next_u32() {
    if (pos_ == 4) {
      block_ = round10(counter_, key_);
      advance_counter();
      pos_ = 0;
    }
    return block_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    return (static_cast<std::uint64_t>(next_u32()) << 32) | lo;
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0,1], safe as a log argument.
  double uniform01_open() { return 1.0 - uniform01(); }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  double exponential(double rate = 1.0) {
    return -std::log(uniform01_open()) / rate;
  }

  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    // Polar Box-Muller.
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    cached_ = v * f;
    has_cached_ = true;
    return u * f;
  }

  // Marsaglia-Tsang for shape >= 1; boosted by u^{1/shape} below 1.
  double gamma(double shape, double scale = 1.0) {
    if (!(shape > 0.0) || !(scale > 0.0))
      throw InputError("gamma sampler requires positive shape and scale");
    if (shape < 1.0)
      return gamma(shape + 1.0, scale) *
             std::pow(uniform01_open(), 1.0 / shape);
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01_open();
      if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
    }
  }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

  // Index into a nonnegative weight vector, proportional to the weights.
  std::size_t discrete(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw InputError("discrete sampler needs positive mass");
    double r = uniform01() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      if (r < weights[i]) return i;
      r -= weights[i];
    }
    return weights.size() - 1;
  }

  static std::array<std::uint32_t, 4> round10(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ull * ctr[0];
      const std::uint64_t p1 = 0xCD9E8D57ull * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
    }
    return ctr;
  }

 private:
  void advance_counter() {
    for (int i = 0; i < 4; ++i)
      if (++counter_[i] != 0) break;
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_{0, 0, 0, 0};
  std::array<std::uint32_t, 4> block_{};
  int pos_ = 4;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace gkdiff
