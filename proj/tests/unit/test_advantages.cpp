#include "doctest.h"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mixpo/advantages.hpp"
#include "mixpo/rng.hpp"

using namespace mixpo;

namespace {

void check_values(const AdvantageSet& a, std::vector<double> expected) {
  REQUIRE(a.values.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(a.values[i] == doctest::Approx(expected[i]).epsilon(1e-14));
}

void check_standardized(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs(std::sqrt(var / n) - 1.0) < 1e-9);
}

}  // namespace

TEST_CASE("on-policy advantages") {
  check_values(on_policy_advantages(std::vector<double>{1, 0}), {1.0, -1.0});
  const auto flat = on_policy_advantages(std::vector<double>{1, 1, 1});
  CHECK(flat.degenerate);
  check_values(flat, {0, 0, 0});
  const auto two = on_policy_advantages(std::vector<double>{1, 1, 0, 0});
  CHECK(two.group_std == doctest::Approx(0.5));
  check_values(two, {1, 1, -1, -1});
  CHECK_THROWS_AS(on_policy_advantages(std::vector<double>{1}), std::invalid_argument);
}

TEST_CASE("off-policy advantages") {
  check_values(off_policy_advantages_method1(std::vector<double>{1, 0}), {1.0, -1.0});
  CHECK(off_policy_advantages_method1(std::vector<double>{0, 0}).degenerate);
  const double r3 = std::sqrt(3.0);
  check_values(off_policy_advantages_method1(std::vector<double>{1, 0, 0, 0}), {r3, -1 / r3, -1 / r3, -1 / r3});
}

TEST_CASE("shared baseline") {
  auto [b, c] = shared_baseline_advantages(std::vector<double>{1, 1}, std::vector<double>{0, 0});
  CHECK(b.group_mean == doctest::Approx(0.5));
  CHECK(b.group_std == doctest::Approx(0.5));
  check_values(b, {1, 1});
  check_values(c, {-1, -1});
  auto [b0, c0] = shared_baseline_advantages(std::vector<double>{0, 0}, std::vector<double>{0, 0});
  CHECK(b0.degenerate);
  CHECK(c0.degenerate);
  check_values(b0, {0, 0});
  check_values(c0, {0, 0});
  auto [b1, c1] = shared_baseline_advantages(std::vector<double>{1}, std::vector<double>{0});
  check_values(b1, {1});
  check_values(c1, {-1});
}

TEST_CASE("empty zero pool reduces to the off-policy normalization") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> rewards(2 + rng.below(10));
    for (double& r : rewards) r = rng.uniform() < 0.5 ? 1.0 : 0.0;
    rewards[0] = 1.0;
    rewards[1] = 0.0;
    const auto [b, c] = shared_baseline_advantages(rewards, {});
    CHECK(c.values.empty());
    CHECK(b.values == off_policy_advantages_method1(rewards).values);
  }
}

TEST_CASE("standardization and affine invariance") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> rewards(3 + rng.below(20));
    for (double& r : rewards) r = rng.uniform(0.0, 2.0);
    const auto a = on_policy_advantages(rewards);
    check_standardized(a.values);
    std::vector<double> shifted = rewards;
    for (double& r : shifted) r = 3.0 * r + 7.0;
    const auto s = on_policy_advantages(shifted);
    for (std::size_t i = 0; i < rewards.size(); ++i) CHECK(s.values[i] == doctest::Approx(a.values[i]).epsilon(1e-9));

    const std::size_t split = 1 + rng.below(rewards.size() - 1);
    const std::vector<double> off(rewards.begin(), rewards.begin() + split);
    const std::vector<double> zero(rewards.begin() + split, rewards.end());
    const auto [b, c] = shared_baseline_advantages(off, zero);
    std::vector<double> pooled = b.values;
    pooled.insert(pooled.end(), c.values.begin(), c.values.end());
    check_standardized(pooled);
  }
}
