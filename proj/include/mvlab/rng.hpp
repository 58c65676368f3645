#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace mvlab {

/// Philox4x32-10 block function (Salmon et al., SC'11). Pure: the output is
/// a function of (key, counter) only, which is what makes per-particle
/// streams reproducible independent of evaluation order.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  [[nodiscard]] static constexpr Block generate(Block counter, Key key) {
    for (int round = 0; round < 10; ++round) {
      counter = single_round(counter, key);
      key[0] += kWeylA;
      key[1] += kWeylB;
    }
    return counter;
  }

 private:
  static constexpr std::uint32_t kMulA = 0xD2511F53U;
  static constexpr std::uint32_t kMulB = 0xCD9E8D57U;
  static constexpr std::uint32_t kWeylA = 0x9E3779B9U;
  static constexpr std::uint32_t kWeylB = 0xBB67AE85U;

  static constexpr Block single_round(const Block& c, const Key& k) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// Purpose tags keep streams for different roles disjoint under one seed.
enum class StreamPurpose : std::uint32_t {
  kInitial = 1,
  kNoise = 2,
  kCouplingShared = 3,
  kCouplingSynchronous = 4,
  kCouplingBridge = 5,
  kBootstrap = 6,
  kGeneric = 7,
};

/// Addressable random stream: (seed, purpose, stream index, step) -> block.
/// Stream index is typically the particle index; step the time-step number.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed) : seed_(seed) {}

  [[nodiscard]] constexpr std::uint64_t seed() const { return seed_; }

  [[nodiscard]] constexpr Philox4x32::Block block(StreamPurpose purpose, std::uint64_t stream,
                                                  std::uint64_t step,
                                                  std::uint32_t index) const {
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed_),
                              static_cast<std::uint32_t>(seed_ >> 32)};
    const Philox4x32::Block counter{
        index ^ (static_cast<std::uint32_t>(purpose) << 24), static_cast<std::uint32_t>(step),
        static_cast<std::uint32_t>(stream),
        static_cast<std::uint32_t>(stream >> 32) ^ static_cast<std::uint32_t>(step >> 32)};
    return Philox4x32::generate(counter, key);
  }

  /// Uniform in the open interval (0, 1) on the 2^-52 midpoint lattice.
  [[nodiscard]] static constexpr double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits =
        ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;  // 52 bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
  }

  /// Fills `out[0..count)` with standard normals for the given stream/step.
  template <typename OutIt>
  void normals(StreamPurpose purpose, std::uint64_t stream, std::uint64_t step, int count,
               OutIt out) const {
    int produced = 0;
    for (std::uint32_t b = 0; produced < count; ++b) {
      const auto blk = block(purpose, stream, step, b);
      const double u1 = to_unit(blk[0], blk[1]);
      const double u2 = to_unit(blk[2], blk[3]);
      const double radius = std::sqrt(-2.0 * std::log(u1));
      const double angle = 2.0 * std::numbers::pi * u2;
      *out++ = radius * std::cos(angle);
      if (++produced == count) break;
      *out++ = radius * std::sin(angle);
      ++produced;
    }
  }

  [[nodiscard]] double uniform(StreamPurpose purpose, std::uint64_t stream,
                               std::uint64_t step) const {
    const auto blk = block(purpose, stream, step, 0);
    return to_unit(blk[0], blk[1]);
  }

 private:
  std::uint64_t seed_;
};

}  // namespace mvlab
