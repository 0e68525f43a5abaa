#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include <boost/math/distributions/normal.hpp>

namespace mtem {

// Philox4x32-10 counter-based generator (Salmon et al., Random123). Every
// output block is a pure function of (key, counter), so any stream position
// can be addressed directly without replaying earlier draws.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter ctr, Key key) noexcept {
    ctr = round(ctr, key);
    for (int r = 1; r < 10; ++r) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
      ctr = round(ctr, key);
    }
    return ctr;
  }

  static constexpr Key key_from_seed(std::uint64_t seed) noexcept {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static constexpr Counter round(const Counter& c, const Key& k) noexcept {
    const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

// The top 52 bits mapped to the midpoints k + 1/2 of a 2^-52 grid, so both
// ends of (0, 1) stay excluded after rounding.
inline double open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

inline double standard_normal_quantile(double u) {
  static const boost::math::normal_distribution<double> unit{};
  return boost::math::quantile(unit, u);
}

// Sequential view over one Philox stream: three counter words are fixed by
// the caller (the stream identity), the fourth walks through blocks.
class PhiloxStream {
 public:
  PhiloxStream(std::uint64_t seed, std::uint32_t w1, std::uint32_t w2, std::uint32_t w3)
      : key_(Philox4x32::key_from_seed(seed)), ctr_{0u, w1, w2, w3} {}

  std::uint64_t next_u64() noexcept {
    if (pos_ == 2) refill();
    const std::uint64_t lo = block_[2 * pos_];
    const std::uint64_t hi = block_[2 * pos_ + 1];
    ++pos_;
    return (hi << 32) | lo;
  }

  double uniform() noexcept { return open_unit(next_u64()); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() { return standard_normal_quantile(uniform()); }

 private:
  void refill() noexcept {
    block_ = Philox4x32::generate(ctr_, key_);
    ++ctr_[0];
    pos_ = 0;
  }

  Philox4x32::Key key_;
  Philox4x32::Counter ctr_;
  Philox4x32::Counter block_{};
  int pos_ = 2;
};

}  // namespace mtem
