#include "uniada/aws.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace uniada;

TEST_CASE("objective_specific_norm weights the raw norms") {
  AwsBatchStats stats;
  stats.mean_grad_norm = {2.0, 4.0};
  const auto n = objective_specific_norm(stats, {0.5, 0.5});
  CHECK(n[0] == doctest::Approx(1.0));
  CHECK(n[1] == doctest::Approx(2.0));

  CHECK_THROWS_AS(objective_specific_norm(stats, {0.0, 1.0}), std::invalid_argument);

  stats.mean_grad_norm = {0.0, 0.0};
  const auto z = objective_specific_norm(stats, {0.5, 0.5});
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);
}

TEST_CASE("objective_average_norm") {
  CHECK(objective_average_norm({1.0, 2.0}) == doctest::Approx(1.5));
  CHECK(objective_average_norm({3.25}) == doctest::Approx(3.25));
  CHECK(objective_average_norm({0.0, 0.0}) == 0.0);
  CHECK_THROWS_AS(objective_average_norm({}), std::invalid_argument);
}

TEST_CASE("loss_ratio") {
  CHECK(loss_ratio({0.5, 0.5}, {0.5, 0.5}) == std::vector<double>{1.0, 1.0});
  const auto l = loss_ratio({0.25, 0.75}, {0.5, 0.5});
  CHECK(l[0] == doctest::Approx(0.5));
  CHECK(l[1] == doctest::Approx(1.5));
  CHECK(loss_ratio({0.0}, {0.5})[0] == 0.0);
  CHECK_THROWS_AS(loss_ratio({0.5}, {0.0}), std::invalid_argument);
  CHECK_THROWS_AS(loss_ratio({0.5}, {-1.0}), std::invalid_argument);
}

TEST_CASE("relative_inverse_rate") {
  const auto q = relative_inverse_rate({2.0, 1.0});
  CHECK(q[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  const auto equal = relative_inverse_rate({0.7, 0.7, 0.7});
  for (double v : equal)
    CHECK(v == doctest::Approx(1.0));

  CHECK(relative_inverse_rate({0.42})[0] == doctest::Approx(1.0));
  CHECK_THROWS_AS(relative_inverse_rate({0.0, 0.0}), std::invalid_argument);

  // mean of q is 1 by construction
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> val(0.01, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> l{val(rng), val(rng), val(rng)};
    const auto qs = relative_inverse_rate(l);
    double mean = 0.0;
    for (double v : qs)
      mean += v;
    CHECK(mean / 3.0 == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("aws_loss") {
  // balanced: N^i hits the target exactly
  const auto balanced = aws_loss({1.5, 1.5}, 1.5, {1.0, 1.0}, 10.0);
  CHECK(balanced[0] == 0.0);
  CHECK(balanced[1] == 0.0);

  const auto f = aws_loss({1.0, 2.0}, 1.5, {1.0, 1.0}, 10.0);
  CHECK(f[0] == doctest::Approx(0.5));
  CHECK(f[1] == doctest::Approx(0.5));

  // gamma = 0 removes the training-rate term
  const auto g0 = aws_loss({1.0, 2.0}, 1.5, {3.0, 0.2}, 0.0);
  CHECK(g0[0] == doctest::Approx(0.5));
  CHECK(g0[1] == doctest::Approx(0.5));
}

TEST_CASE("aws_loss scales linearly with the norm inputs") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> val(0.1, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> norms{val(rng), val(rng)};
    std::vector<double> q{val(rng), val(rng)};
    const double nbar = objective_average_norm(norms);
    const double c = val(rng);
    const auto f1 = aws_loss(norms, nbar, q, 4.0);
    std::vector<double> scaled{c * norms[0], c * norms[1]};
    const auto f2 = aws_loss(scaled, c * nbar, q, 4.0);
    CHECK(f2[0] == doctest::Approx(c * f1[0]).epsilon(1e-9));
    CHECK(f2[1] == doctest::Approx(c * f1[1]).epsilon(1e-9));
  }
}

TEST_CASE("aws_gradient: sign of the imbalance times the raw norm") {
  const auto g = aws_gradient({1.0, 2.0}, 1.5, {1.0, 1.0}, 10.0, {2.0, 4.0});
  CHECK(g[0] == doctest::Approx(-2.0));
  CHECK(g[1] == doctest::Approx(4.0));

  // u = 0 gives no update pressure
  const auto zero = aws_gradient({1.5, 1.5}, 1.5, {1.0, 1.0}, 10.0, {2.0, 4.0});
  CHECK(zero[0] == 0.0);
  CHECK(zero[1] == 0.0);
}

TEST_CASE("update_weights: hand-checked positive update") {
  AwsState state({0.5, 0.5}, {0.5, 0.5}, 10.0);
  update_weights(state, {-2.0, 4.0}, 0.005);
  // candidates (0.51, 0.48), normalized by 0.99
  CHECK(state.weights[0] == doctest::Approx(0.51515152).epsilon(1e-7));
  CHECK(state.weights[1] == doctest::Approx(0.48484848).epsilon(1e-7));
  CHECK(state.weights[0] + state.weights[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("update_weights: zero gradient leaves weights unchanged") {
  AwsState state({0.25, 0.75}, {0.5, 0.5}, 10.0);
  update_weights(state, {0.0, 0.0}, 0.005);
  CHECK(state.weights[0] == 0.25);
  CHECK(state.weights[1] == 0.75);
}

TEST_CASE("update_weights: non-positive candidates keep the old weight") {
  AwsState state({0.1, 0.9}, {0.5, 0.5}, 10.0);
  // candidate for the first weight would be 0.1 - 0.005*40 = -0.1
  update_weights(state, {40.0, 2.0}, 0.005);
  CHECK(state.weights[0] > 0.0);
  CHECK(state.weights[1] > 0.0);
  CHECK(state.weights[0] + state.weights[1] == doctest::Approx(1.0).epsilon(1e-12));
  // first kept at 0.1 pre-normalization, second moved to 0.89
  CHECK(state.weights[0] == doctest::Approx(0.1 / 0.99).epsilon(1e-12));
  CHECK(state.weights[1] == doctest::Approx(0.89 / 0.99).epsilon(1e-12));
}

TEST_CASE("single objective: weight pinned at 1") {
  AwsState state({1.0}, {0.5}, 10.0);
  AwsBatchStats stats;
  stats.mean_loss = {0.37};
  stats.mean_grad_norm = {1.4};
  for (int i = 0; i < 5; ++i) {
    aws_step(state, stats, 0.005);
    CHECK(state.weights[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("balance fixed point: matched norms leave weights unchanged") {
  AwsState state({0.5, 0.5}, {0.5, 0.5}, 10.0);
  AwsBatchStats stats;
  stats.mean_loss = {0.5, 0.5};    // q = (1,1)
  stats.mean_grad_norm = {3.0, 3.0}; // equal weighted norms = target
  aws_step(state, stats, 0.005);
  CHECK(state.weights[0] == 0.5);
  CHECK(state.weights[1] == 0.5);
}

TEST_CASE("direction: under-contributing objective gains weight") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> val(0.5, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double small = val(rng), big = small + val(rng);
    AwsState state({0.5, 0.5}, {0.5, 0.5}, 10.0);
    AwsBatchStats stats;
    stats.mean_loss = {0.4, 0.4}; // equal ratios, q = (1,1)
    stats.mean_grad_norm = {small, big};
    const auto before = state.weights;
    aws_step(state, stats, 1e-4);
    CHECK(state.weights[0] > before[0]);
    CHECK(state.weights[1] < before[1]);
    CHECK(state.weights[0] + state.weights[1] == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("aws state invariants are enforced") {
  CHECK_THROWS_AS(AwsState({0.5, 0.6}, {0.5, 0.5}, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(AwsState({1.0, 0.0}, {0.5, 0.5}, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(AwsState({0.5, 0.5}, {0.0, 0.5}, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(AwsState({0.5, 0.5}, {0.5, 0.5}, -1.0), std::invalid_argument);
}
