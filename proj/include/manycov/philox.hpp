#pragma once

#include <array>
#include <cstdint>

namespace manycov {

// Philox4x32-10 counter-based generator. Every random value in the
// project is addressed by (seed, kind, rep, draw, index), so results are
// reproducible regardless of evaluation order or worker count.
namespace philox {

inline constexpr uint32_t kMul0 = 0xD2511F53u;
inline constexpr uint32_t kMul1 = 0xCD9E8D57u;
inline constexpr uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr uint32_t kWeyl1 = 0xBB67AE85u;

constexpr std::array<uint32_t, 4> block(std::array<uint32_t, 4> ctr,
                                        std::array<uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    const uint64_t p0 = uint64_t(kMul0) * ctr[0];
    const uint64_t p1 = uint64_t(kMul1) * ctr[2];
    ctr = {uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], uint32_t(p1),
           uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], uint32_t(p0)};
    if (round < 9) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
  }
  return ctr;
}

}  // namespace philox

// One logical random stream: an indexed sequence of u64 / uniform values.
// kind separates the independent sources (covariates, noise terms,
// bootstrap weights, ...); rep and draw address Monte Carlo repetitions
// and bootstrap draws within a source.
class RngStream {
 public:
  RngStream(uint64_t seed, uint32_t kind, uint32_t rep = 0, uint32_t draw = 0)
      : key_{uint32_t(seed), uint32_t(seed >> 32)},
        kind_(kind),
        rep_(rep),
        draw_(draw) {}

  // Each Philox block provides two 64-bit lanes; value i lives in block
  // i>>1, lane i&1.
  uint64_t bits(uint64_t i) const {
    const auto out = philox::block(
        {uint32_t(i >> 1), draw_, rep_, kind_}, key_);
    if (i & 1) return uint64_t(out[2]) | (uint64_t(out[3]) << 32);
    return uint64_t(out[0]) | (uint64_t(out[1]) << 32);
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform(uint64_t i) const {
    return double(bits(i) >> 11) * 0x1.0p-53;
  }

 private:
  std::array<uint32_t, 2> key_;
  uint32_t kind_;
  uint32_t rep_;
  uint32_t draw_;
};

}  // namespace manycov
