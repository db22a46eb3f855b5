#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace stiffnet {

__extension__ using uint128 = unsigned __int128;

/// Philox4x64-10 counter-based generator.
///
/// The 128-bit key is (seed, stream_id); the counter walks through blocks of
/// four outputs. Distinct (seed, stream_id) pairs give independent streams
/// without any coordination, so replicate `i` of an ensemble simply uses
/// `RngStream(seed, i)`.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept : key_{seed, stream_id} {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (next_ == 4) {
      refill();
    }
    return block_[next_++];
  }

  std::uint64_t seed() const noexcept { return key_[0]; }
  std::uint64_t stream_id() const noexcept { return key_[1]; }

  /// One raw Philox block: exposed for known-answer tests.
  static std::array<std::uint64_t, 4> block(std::array<std::uint64_t, 4> ctr,
                                            std::array<std::uint64_t, 2> key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const uint128 p0 = static_cast<uint128>(kMul0) * ctr[0];
      const uint128 p1 = static_cast<uint128>(kMul1) * ctr[2];
      const auto hi0 = static_cast<std::uint64_t>(p0 >> 64);
      const auto lo0 = static_cast<std::uint64_t>(p0);
      const auto hi1 = static_cast<std::uint64_t>(p1 >> 64);
      const auto lo1 = static_cast<std::uint64_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
  static constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
  static constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

  void refill() noexcept {
    block_ = block({counter_, 0, 0, 0}, key_);
    ++counter_;
    next_ = 0;
  }

  std::array<std::uint64_t, 2> key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 4> block_{};
  int next_ = 4;
};

/// Uniform on [0, 1) with 53 random bits.
template <class Rng>
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform on (0, 1]; safe to take the logarithm of.
template <class Rng>
inline double uniform01_open(Rng& rng) {
  return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

/// Exponential waiting time with the given rate (> 0).
template <class Rng>
inline double exponential(Rng& rng, double rate) {
  return -std::log(uniform01_open(rng)) / rate;
}

}  // namespace stiffnet
