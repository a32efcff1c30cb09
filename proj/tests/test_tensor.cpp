#include "uniada/tensor.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace uniada;

TEST_CASE("tensor construction validates shape against payload") {
  CHECK_NOTHROW(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  CHECK_THROWS_AS(Tensor({2, 3}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({0, 3}), std::invalid_argument);
}

TEST_CASE("tensor construction rejects non-finite values") {
  CHECK_THROWS_AS(Tensor({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Tensor({1}, {std::numeric_limits<float>::infinity()}), std::invalid_argument);
}

TEST_CASE("l2_norm basics") {
  CHECK(l2_norm(Tensor::zeros({4, 4})) == 0.0f);
  CHECK(l2_norm(Tensor({2}, {3.0f, 4.0f})) == 5.0f);

  // 3x2x2 of 0.5 -> 0.5 * sqrt(12)
  const Tensor t = Tensor::full({3, 2, 2}, 0.5f);
  CHECK(l2_norm(t) == doctest::Approx(1.7320508).epsilon(1e-6));
}

TEST_CASE("l2_norm homogeneity: |c| scaling within 1e-6 relative") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> val(-10.0f, 10.0f);
  std::uniform_real_distribution<float> scale(-3.0f, 3.0f);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> data(64);
    for (float &v : data)
      v = val(rng);
    const Tensor t({4, 4, 4}, data);
    const float c = scale(rng);
    for (float &v : data)
      v *= c;
    const Tensor scaled({4, 4, 4}, data);
    CHECK(l2_norm(scaled) ==
          doctest::Approx(std::fabs(c) * l2_norm(t)).epsilon(1e-6));
  }
}

TEST_CASE("linf_norm") {
  CHECK(linf_norm(Tensor({3}, {-2.5f, 1.0f, 2.0f})) == 2.5f);
  CHECK(linf_norm(Tensor::zeros({2, 2})) == 0.0f);
}
