// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <bit>
#include <cmath>
#include <random>
#include <vector>

#include "absd/transform.hpp"

using namespace absd;

namespace {

// Dense Sylvester matrix entry: (-1)^popcount(i & j).
double sylvester(std::size_t i, std::size_t j) {
  return (std::popcount(i & j) & 1) ? -1.0 : 1.0;
}

std::vector<double> dense_rht(const std::vector<double>& x, const HadamardConfig& cfg) {
  const std::size_t n = x.size();
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) y[i] += sylvester(i, j) * cfg.signs[j] * x[j];
    y[i] /= std::sqrt(static_cast<double>(n));
  }
  return y;
}

}  // namespace

TEST_CASE("small examples") {
  const auto id2 = HadamardConfig::identity_signs(2);
  const auto y = rht_forward(std::vector<double>{1.0, 1.0}, id2);
  CHECK(y[0] == doctest::Approx(std::sqrt(2.0)));
  CHECK(y[1] == doctest::Approx(0.0));

  const auto id4 = HadamardConfig::identity_signs(4);
  const auto e = rht_forward(std::vector<double>{1.0, 0.0, 0.0, 0.0}, id4);
  for (double v : e) CHECK(v == 0.5);

  std::vector<double> w{1, 2, 3, 4};
  fwht(w);
  CHECK(w == std::vector<double>{10, -2, -4, 0});
}

TEST_CASE("fast transform matches the dense matrix") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (std::size_t n : {1, 2, 4, 8, 16, 32, 64}) {
    const auto cfg = HadamardConfig::make(n, 100 + n);
    std::vector<double> x(n);
    for (auto& v : x) v = g(rng);
    const auto fast = rht_forward(x, cfg);
    const auto slow = dense_rht(x, cfg);
    for (std::size_t i = 0; i < n; ++i) CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-12));
  }
}

TEST_CASE("norm preservation and inverse") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  const auto cfg = HadamardConfig::make(1024, 1);
  std::vector<double> x(1024);
  for (auto& v : x) v = g(rng);
  const auto y = rht_forward(x, cfg);
  double nx = 0, ny = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  CHECK(ny == doctest::Approx(nx).epsilon(1e-12));
  const auto back = rht_inverse(y, cfg);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::fabs(back[i] - x[i]) <= 1e-12);
}

TEST_CASE("configuration") {
  const auto a = HadamardConfig::make(16, 7);
  const auto b = HadamardConfig::make(16, 7);
  CHECK(a.signs == b.signs);
  CHECK_FALSE(HadamardConfig::make(16, 8).signs == a.signs);
  for (int8_t s : a.signs) CHECK((s == 1 || s == -1));
  CHECK_THROWS_AS(HadamardConfig::make(12, 1), std::invalid_argument);
  CHECK_THROWS_AS(HadamardConfig::make(0, 1), std::invalid_argument);
  CHECK_THROWS_AS(rht_forward(std::vector<double>(8), a), std::invalid_argument);
  std::vector<double> odd(6);
  CHECK_THROWS_AS(fwht(odd), std::invalid_argument);
}

TEST_CASE("row transform leaves the tail untouched") {
  const auto cfg = HadamardConfig::make(16, 3);
  std::mt19937_64 rng(1);
  std::normal_distribution<float> g;
  Tensor x({3, 40}, std::vector<float>(120));
  for (auto& v : x.data) v = g(rng);
  const auto t = rht_rows(x, cfg);
  CHECK(t.untransformed_tail == 8);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 32; c < 40; ++c) CHECK(t.tensor.data[r * 40 + c] == x.data[r * 40 + c]);
    std::vector<double> seg(x.data.begin() + r * 40 + 16, x.data.begin() + r * 40 + 32);
    const auto want = rht_forward(seg, cfg);
    for (std::size_t c = 0; c < 16; ++c) {
      CHECK(t.tensor.data[r * 40 + 16 + c] == static_cast<float>(want[c]));
    }
  }
  const auto back = rht_rows_inverse(t.tensor, cfg);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    CHECK(back.tensor.data[i] == doctest::Approx(x.data[i]).epsilon(1e-5));
  }
}
