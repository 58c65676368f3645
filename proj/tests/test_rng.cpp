#include "doctest.h"
#include "mvlab/core.hpp"
#include "mvlab/rng.hpp"

#include <cmath>
#include <vector>

using namespace mvlab;

TEST_CASE("philox4x32-10 known answers") {
  // Random123 kat_vectors
  const auto z = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
  CHECK(z[0] == 0x6627e8d5U);
  CHECK(z[1] == 0xe169c58dU);
  CHECK(z[2] == 0xbc57ac4cU);
  CHECK(z[3] == 0x9b00dbd8U);
  const auto p = Philox4x32::generate({0x243f6a88U, 0x85a308d3U, 0x13198a2eU, 0x03707344U},
                                      {0xa4093822U, 0x299f31d0U});
  CHECK(p[0] == 0xd16cfe09U);
  CHECK(p[1] == 0x94fdccebU);
  CHECK(p[2] == 0x5001e420U);
  CHECK(p[3] == 0x24126ea1U);
}

TEST_CASE("streams are pure functions of their address") {
  const CounterRng a(42), b(42), c(43);
  CHECK(a.block(StreamPurpose::kNoise, 7, 3, 0) == b.block(StreamPurpose::kNoise, 7, 3, 0));
  CHECK(a.block(StreamPurpose::kNoise, 7, 3, 0) != c.block(StreamPurpose::kNoise, 7, 3, 0));
  CHECK(a.block(StreamPurpose::kNoise, 7, 3, 0) != a.block(StreamPurpose::kNoise, 8, 3, 0));
  CHECK(a.block(StreamPurpose::kNoise, 7, 3, 0) != a.block(StreamPurpose::kNoise, 7, 4, 0));
  CHECK(a.block(StreamPurpose::kNoise, 7, 3, 0) != a.block(StreamPurpose::kInitial, 7, 3, 0));
}

TEST_CASE("unit conversion stays inside (0, 1)") {
  CHECK(CounterRng::to_unit(0, 0) > 0.0);
  CHECK(CounterRng::to_unit(0xffffffffU, 0xffffffffU) < 1.0);
}

TEST_CASE("normals have unit moments") {
  const CounterRng rng(9);
  const int n = 200000;
  double s1 = 0, s2 = 0, s4 = 0;
  std::vector<double> buf(3);
  for (int i = 0; i < n; ++i) {
    rng.normals(StreamPurpose::kGeneric, i, 0, 3, buf.begin());
    for (double v : buf) {
      s1 += v;
      s2 += v * v;
      s4 += v * v * v * v;
    }
  }
  const double m = 3.0 * n;
  CHECK(std::abs(s1 / m) < 4.0 / std::sqrt(m));
  CHECK(std::abs(s2 / m - 1.0) < 4.0 * std::sqrt(2.0 / m));
  CHECK(std::abs(s4 / m - 3.0) < 4.0 * std::sqrt(96.0 / m));
}

TEST_CASE("derived seeds differ by tag") {
  CHECK(derive_seed(1, 1) != derive_seed(1, 2));
  CHECK(derive_seed(1, 1) != derive_seed(2, 1));
  CHECK(derive_seed(5, 9) == derive_seed(5, 9));
}
