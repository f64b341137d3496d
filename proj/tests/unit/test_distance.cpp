#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "recaudit.hpp"

using namespace recaudit;

namespace {
std::vector<double> random_dist(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> p(n);
  double s = 0;
  for (auto& x : p) s += (x = u(rng));
  for (auto& x : p) x /= s;
  return p;
}
}  // namespace

TEST(Hellinger, KnownValues) {
  const std::vector<double> a{1, 0}, b{0, 1}, h{0.5, 0.5};
  EXPECT_EQ(hellinger(a, a), 0.0);
  EXPECT_NEAR(hellinger(a, b), 1.0, 1e-15);
  EXPECT_NEAR(hellinger(a, h), std::sqrt(1 - std::sqrt(0.5)), 1e-12);
  EXPECT_NEAR(hellinger(a, h), 0.54120, 1e-5);
  EXPECT_THROW(hellinger(a, std::vector<double>{1}), ArgumentError);
}

TEST(Hellinger, AgreesWithAffinityFormAndIsBounded) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto p = random_dist(6, rng), q = random_dist(6, rng);
    double bc = 0;
    for (int k = 0; k < 6; ++k) bc += std::sqrt(p[k] * q[k]);
    const double h = hellinger(p, q);
    EXPECT_NEAR(h, std::sqrt(std::max(0.0, 1 - bc)), 1e-9);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, 1.0);
    EXPECT_EQ(hellinger(p, p), 0.0);
  }
}

TEST(L2, KnownValuesAndOracle) {
  const std::vector<double> a{1, 0}, b{0, 1};
  EXPECT_EQ(l2_distance(a, a), 0.0);
  EXPECT_NEAR(l2_distance(a, b), std::sqrt(2.0), 1e-15);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    const auto p = random_dist(5, rng), q = random_dist(5, rng);
    double s = 0;
    for (int k = 0; k < 5; ++k) s += (p[k] - q[k]) * (p[k] - q[k]);
    EXPECT_NEAR(l2_distance(p, q), std::sqrt(s), 1e-15);
  }
  EXPECT_THROW(l2_distance(a, std::vector<double>{1, 0, 0}), ArgumentError);
}

TEST(Distance, DistributionOverloadChecksSupport) {
  RecommendationDistribution p{{1, 2}, {0.5, 0.5}}, q{{1, 3}, {0.5, 0.5}};
  EXPECT_THROW(distance(Distance::L2, p, q), ArgumentError);
  EXPECT_EQ(distance(Distance::Hellinger, p, p), 0.0);
  EXPECT_EQ(parse_distance("l2"), Distance::L2);
  EXPECT_THROW(parse_distance("kl"), ArgumentError);
}
