#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "recaudit.hpp"
#include "../support/toy.hpp"

using namespace recaudit;

TEST(CandidateSet, RemovesHistory) {
  const std::vector<Index> all{1, 2, 3};
  EXPECT_EQ(candidate_set(std::vector<Index>{2}, all), (std::vector<Index>{1, 3}));
  EXPECT_EQ(candidate_set(std::vector<Index>{}, all), all);
  EXPECT_THROW(candidate_set(all, all), EmptyCandidateError);
  EXPECT_EQ(candidate_set(std::vector<Index>{0, 2}, Index{4}), (std::vector<Index>{1, 3}));
}

TEST(Softmax, HandValues) {
  const std::vector<std::int64_t> c4{1, 2, 3, 4};
  const auto u = softmax_distribution(c4, std::vector<double>{2, 2, 2, 2}, 1.3);
  for (double p : u.probs) EXPECT_NEAR(p, 0.25, 1e-15);
  const std::vector<std::int64_t> c2{1, 2};
  const auto d = softmax_distribution(c2, std::vector<double>{1, 0}, std::log(3.0));
  EXPECT_NEAR(d.probs[0], 0.75, 1e-15);
  EXPECT_NEAR(d.probs[1], 0.25, 1e-15);
  EXPECT_GT(softmax_distribution(c2, std::vector<double>{1, 0}, 5).probs[0],
            softmax_distribution(c2, std::vector<double>{1, 0}, 0.8).probs[0]);
}

TEST(Softmax, Errors) {
  const std::vector<std::int64_t> c{1};
  EXPECT_THROW(softmax_distribution(c, std::vector<double>{NAN}, 1), NumericalError);
  EXPECT_THROW(softmax_distribution(c, std::vector<double>{1}, 0), ArgumentError);
  EXPECT_THROW(softmax_distribution({}, {}, 1), EmptyCandidateError);
  EXPECT_THROW(RecPolicy::softmax(-1), ArgumentError);
}

TEST(Softmax, LargeScoresDoNotOverflow) {
  const std::vector<std::int64_t> c{1, 2};
  const auto d = softmax_distribution(c, std::vector<double>{1000, 999}, 10);
  EXPECT_TRUE(std::isfinite(d.probs[0]));
  EXPECT_NEAR(d.probs[0] + d.probs[1], 1.0, 1e-12);
}

TEST(Softmax, PropertiesOnRandomScores) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 13;
    std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), 0);
    std::vector<double> s(static_cast<std::size_t>(n));
    for (auto& x : s) x = g(rng);
    const double beta = 0.1 + trial * 0.05;
    const auto d = softmax_distribution(ids, s, beta);
    EXPECT_NEAR(std::accumulate(d.probs.begin(), d.probs.end(), 0.0), 1.0, 1e-9);
    // independent oracle
    const auto ref = toy::naive_softmax(s, beta);
    for (std::size_t k = 0; k < s.size(); ++k) EXPECT_NEAR(d.probs[k], ref[k], 1e-12);
    // shift invariance
    auto shifted = s;
    for (auto& x : shifted) x += 7.5;
    const auto e = softmax_distribution(ids, shifted, beta);
    for (std::size_t k = 0; k < s.size(); ++k) EXPECT_NEAR(d.probs[k], e.probs[k], 1e-12);
    // argmax agrees with top-1
    const auto top = top_one(ids, s);
    EXPECT_EQ(ids[static_cast<std::size_t>(std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin())], top);
    // argmax mass grows with beta
    EXPECT_GE(softmax_distribution(ids, s, beta * 1.5).prob_of(top), d.prob_of(top) - 1e-15);
  }
}

TEST(TopOne, TieGoesToSmallestIndex) {
  const std::vector<std::int64_t> c{3, 5};
  EXPECT_EQ(top_one(c, std::vector<double>{2, 1}), 3);
  EXPECT_EQ(top_one(c, std::vector<double>{2, 2}), 3);
  EXPECT_EQ(top_one(std::vector<std::int64_t>{9}, std::vector<double>{-1}), 9);
  EXPECT_THROW(top_one({}, {}), EmptyCandidateError);
  const auto pm = recommend(RecPolicy::top_one(), c, std::vector<double>{0, 1});
  EXPECT_EQ(pm.prob_of(5), 1.0);
  EXPECT_EQ(pm.prob_of(3), 0.0);
}

TEST(Sample, PointMassUniformAndDeterminism) {
  std::mt19937_64 rng(1);
  const std::vector<std::int64_t> c{4, 8};
  const auto pm = point_mass(c, 8);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(sample(pm, rng), 8);
  const auto uni = softmax_distribution(c, std::vector<double>{0, 0}, 1);
  int hits = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) hits += sample(uni, rng) == 4;
  EXPECT_NEAR(hits / double(n), 0.5, 0.01);
  std::mt19937_64 a(77), b(77);
  for (int k = 0; k < 50; ++k) EXPECT_EQ(sample(uni, a), sample(uni, b));
}
