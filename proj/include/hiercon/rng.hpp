#pragma once

#include <array>
#include <cstdint>

#include <boost/random/normal_distribution.hpp>

namespace hiercon {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }
};

/// Uniform 32-bit engine over one Philox substream: counter (stream, block),
/// key = seed. Models the standard URNG requirements.
class PhiloxEngine {
 public:
  using result_type = std::uint32_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  PhiloxEngine(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_{static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)} {}

  result_type operator()() {
    if (used_ == 4) {
      buffer_ = Philox4x32::block(
          {stream_[0], stream_[1], static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32)},
          key_);
      ++block_;
      used_ = 0;
    }
    return buffer_[used_++];
  }

 private:
  Philox4x32::Key key_;
  std::array<std::uint32_t, 2> stream_;
  std::uint64_t block_ = 0;
  Philox4x32::Counter buffer_{};
  int used_ = 4;
};

/// Standard normals for one substream, consumed in order. Substream `stream`
/// under `seed` is independent of how many other substreams exist.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream) : engine_(seed, stream) {}
  double next() { return normal_(engine_); }

 private:
  PhiloxEngine engine_;
  boost::random::normal_distribution<double> normal_;  // ziggurat
};

}  // namespace hiercon
