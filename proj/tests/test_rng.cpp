#include <doctest.h>

#include <cmath>

#include "zeno/philox.hpp"

using zeno::Philox;
using zeno::PhiloxEngine;

TEST_CASE("philox known answers") {
  auto z = Philox::generate({0, 0, 0, 0}, {0, 0});
  CHECK(z == Philox::Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  auto f = Philox::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                            {0xffffffffu, 0xffffffffu});
  CHECK(f == Philox::Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  auto p = Philox::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                            {0xa4093822u, 0x299f31d0u});
  CHECK(p == Philox::Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("stream addressing") {
  auto a = Philox::draw(1, 2, 0, 3);
  CHECK(a == Philox::draw(1, 2, 0, 3));
  CHECK(a != Philox::draw(1, 2, 1, 3));
  CHECK(a != Philox::draw(1, 3, 0, 3));
  CHECK(a != Philox::draw(2, 2, 0, 3));
  CHECK(a != Philox::draw(1, 2, 0, 4));
}

TEST_CASE("uniform moments") {
  PhiloxEngine e(42, 0);
  const int n = 200000;
  double s = 0, s2 = 0, lo = 1, hi = 0;
  for (int i = 0; i < n; ++i) {
    double u = e.uniform();
    s += u;
    s2 += u * u;
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(std::abs(s / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
  CHECK(std::abs(s2 / n - 1.0 / 3) < 0.005);
  PhiloxEngine e1(42, 0), e2(42, 0);
  for (int i = 0; i < 100; ++i) CHECK(e1() == e2());
}
