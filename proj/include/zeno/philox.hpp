#pragma once
#include <array>
#include <cstdint>

// Philox4x32-10 counter-based generator.
namespace zeno {

class Philox {
 public:
  using Block = std::array<std::uint32_t, 4>;

  static Block generate(Block ctr, std::array<std::uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) {
      if (r) {
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

  // Stream addressing: (seed) x (stream id, purpose, index).
  static Block draw(std::uint64_t seed, std::uint64_t stream, std::uint32_t purpose,
                    std::uint64_t index) {
    Block ctr = {static_cast<std::uint32_t>(index),
                 static_cast<std::uint32_t>(index >> 32) ^ (purpose << 24),
                 static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return generate(ctr, {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
  }

  // Two doubles in [0, 1) from one block.
  static std::array<double, 2> uniforms(const Block& b) {
    auto u = [](std::uint32_t hi, std::uint32_t lo) {
      std::uint64_t x = (std::uint64_t{hi} << 32) | lo;
      return static_cast<double>(x >> 11) * 0x1.0p-53;
    };
    return {u(b[0], b[1]), u(b[2], b[3])};
  }
};

// Sequential adaptor over one stream, usable with <random> distributions.
class PhiloxEngine {
 public:
  using result_type = std::uint32_t;
  PhiloxEngine(std::uint64_t seed, std::uint64_t stream, std::uint32_t purpose = 7)
      : seed_(seed), stream_(stream), purpose_(purpose) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return 0xFFFFFFFFu; }
  result_type operator()() {
    if (pos_ == 4) {
      buf_ = Philox::draw(seed_, stream_, purpose_, index_++);
      pos_ = 0;
    }
    return buf_[pos_++];
  }
  double uniform() {
    std::uint64_t hi = (*this)(), lo = (*this)();
    return static_cast<double>(((hi << 32) | lo) >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t seed_, stream_;
  std::uint32_t purpose_;
  std::uint64_t index_ = 0;
  Philox::Block buf_{};
  int pos_ = 4;
};

}  // namespace zeno
