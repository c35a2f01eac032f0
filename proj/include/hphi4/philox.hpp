#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>

namespace hphi4 {

// Philox4x32-10 counter-based generator. A draw is addressed by a 64-bit key
// and a 128-bit counter; there is no mutable stream state, so any
// (replica, mode, step) cell can be regenerated independently and the same
// underlying randomness can be shared across regularization levels.
class Philox4x32 {
 public:
  using ctr_t = std::array<std::uint32_t, 4>;
  using key_t = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;  // golden ratio
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;  // sqrt(3) - 1

  static ctr_t block(key_t key, ctr_t ctr) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      ctr = single_round(key, ctr);
    }
    return ctr;
  }

 private:
  static ctr_t single_round(const key_t& key, const ctr_t& c) {
    const std::uint64_t p0 = std::uint64_t(kMul0) * c[0];
    const std::uint64_t p1 = std::uint64_t(kMul1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ key[0], lo1, hi0 ^ c[3] ^ key[1], lo0};
  }
};

// Deterministic stream of N(0,1) variates addressed by (replica, mode, step).
// One Philox block yields two independent normals via Box-Muller; we expose
// both so callers can reserve the second for auxiliary draws.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::pair<double, double> normal_pair(std::uint32_t replica, std::uint32_t mode,
                                        std::uint64_t step) const {
    const Philox4x32::key_t key = {static_cast<std::uint32_t>(seed_),
                                   static_cast<std::uint32_t>(seed_ >> 32)};
    const Philox4x32::ctr_t ctr = {static_cast<std::uint32_t>(step),
                                   static_cast<std::uint32_t>(step >> 32), mode, replica};
    const auto w = Philox4x32::block(key, ctr);
    // 53-bit uniforms; u1 is shifted into (0,1] so log(u1) is finite.
    const std::uint64_t b1 = (std::uint64_t(w[0]) << 32) | w[1];
    const std::uint64_t b2 = (std::uint64_t(w[2]) << 32) | w[3];
    const double u1 = (double((b1 >> 11) + 1)) * 0x1.0p-53;
    const double u2 = (double(b2 >> 11)) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    return {r * std::cos(a), r * std::sin(a)};
  }

  double normal(std::uint32_t replica, std::uint32_t mode, std::uint64_t step) const {
    return normal_pair(replica, mode, step).first;
  }

  // Uniform in [0,1), distinct addressing domain from the noise draws (the
  // high counter bit is set) so utility randomness never collides with them.
  double uniform(std::uint32_t tag, std::uint64_t index) const {
    const Philox4x32::key_t key = {static_cast<std::uint32_t>(seed_),
                                   static_cast<std::uint32_t>(seed_ >> 32)};
    const Philox4x32::ctr_t ctr = {static_cast<std::uint32_t>(index),
                                   static_cast<std::uint32_t>(index >> 32), tag,
                                   0x80000000u};
    const auto w = Philox4x32::block(key, ctr);
    const std::uint64_t b = (std::uint64_t(w[0]) << 32) | w[1];
    return double(b >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t seed_;
};

}  // namespace hphi4
