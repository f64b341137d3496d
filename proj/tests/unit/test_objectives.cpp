#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "recaudit.hpp"
#include "../support/toy.hpp"

using namespace recaudit;

namespace {

// d = 1 past-reachability fixture. User 1 rated A (q=1, r=3) then E (q=1,
// held out). Target j has q=0.5, item B q=1, twenty more items q=0.
struct InteriorFixture {
  Dataset full;
  HoldoutSplit split;
  MfModel model;
  std::unique_ptr<AuditContext> ctx;
  static constexpr int kZeros = 20;

  InteriorFixture() {
    std::vector<Interaction> xs{{1, 1, 3, 1}, {1, 2, 2, 2}};
    for (int i = 3; i <= 4 + kZeros; ++i) xs.push_back({2, i, 3, i});
    full = Dataset::from_interactions(xs);
    split = holdout_split(full, 1);
    model.index = full.shared_index();
    model.P = MatrixXd::Zero(2, 1);
    model.Q = MatrixXd::Zero(4 + kZeros, 1);
    model.Q(0, 0) = 1.0;  // A
    model.Q(1, 0) = 1.0;  // E
    model.Q(2, 0) = 0.5;  // j
    model.Q(3, 0) = 1.0;  // B
    ctx = std::make_unique<AuditContext>(model, split.train, &split);
  }

  // symbolic: p = (3 + theta) / (2 + ridge); f = e^{beta p/2} / (20 + e^{beta p/2} + e^{beta p})
  static double hand(double theta, double beta) {
    const double p = (3.0 + theta) / (2.0 + kDefaultAuditRidge);
    const double a = std::exp(beta * 0.5 * p), b = std::exp(beta * p);
    return a / (kZeros + a + b);
  }
};

// d = 1 past-stability fixture with hand-derivable refits.
//   target (user 1, p=1), adversary (user 2, p=2), other rater (user 3, p=1)
//   edited item 1: train raters {user 3: 4}; adversary's held-out rating 3
struct StabilityFixture {
  Dataset full;
  HoldoutSplit split;
  MfModel model;
  std::unique_ptr<AuditContext> ctx;

  explicit StabilityFixture(bool target_rated_edited_item) {
    std::vector<Interaction> xs{{1, 5, 3, 1}, {1, 2, 4, 2}, {2, 5, 4, 1}, {2, 1, 3, 2},
                                {3, 1, 4, 1}, {3, 2, 2, 2}, {3, 3, 5, 3}, {3, 4, 1, 4}};
    if (target_rated_edited_item) xs.push_back({1, 1, 5, 0});
    full = Dataset::from_interactions(xs);
    split = holdout_split(full, 1);
    model.index = full.shared_index();
    model.P = MatrixXd{{1.0}, {2.0}, {1.0}};
    model.Q = MatrixXd{{0.7}, {0.1}, {0.2}, {-0.3}, {0.4}};
    ctx = std::make_unique<AuditContext>(model, split.train, &split);
  }

  // target's distribution over candidates {1, 3, 4}
  static std::vector<double> hand_dist(double theta, double beta) {
    const double q1 = (4.0 * 1.0 + theta * 2.0) / (1.0 + 4.0 + kDefaultAuditRidge);
    return toy::naive_softmax({q1, 0.2, -0.3}, beta);
  }
};

}  // namespace

// ---------------------------------------------------------------- baseline

TEST(BaselineReachability, UniformScoresGiveOneOverCandidates) {
  auto inst = toy::make(5, 12, 2, 1, 1);
  inst->model.P.setZero();
  const auto& ctx = *inst->future;
  const Index u = 0;
  const auto cands = detail::unmasked(ctx.rated_mask(u));
  EXPECT_NEAR(baseline_reachability(ctx, u, cands[0], 2.0), 1.0 / cands.size(), 1e-14);
}

TEST(BaselineReachability, HandModelAndLimits) {
  // n=3, m=4, d=2
  const auto ds = Dataset::from_interactions({{1, 1, 5, 0}, {2, 2, 3, 0}, {3, 3, 4, 0}, {3, 4, 2, 1}});
  MfModel m;
  m.index = ds.shared_index();
  m.P = MatrixXd{{1.0, 0.5}, {0.0, 1.0}, {2.0, -1.0}};
  m.Q = MatrixXd{{1.0, 1.0}, {0.5, -0.5}, {-1.0, 2.0}, {3.0, 0.0}};
  const AuditContext ctx(m, ds);
  // user 1 candidates: items 2,3,4 with scores 0.25, 0.0, 3.0
  const auto ref = toy::naive_softmax({0.25, 0.0, 3.0}, 0.7);
  EXPECT_NEAR(baseline_reachability(ctx, 0, 1, 0.7), ref[0], 1e-14);
  EXPECT_NEAR(baseline_reachability(ctx, 0, 3, 0.7), ref[2], 1e-14);
  EXPECT_GT(baseline_reachability(ctx, 0, 3, 60.0), 1 - 1e-12);
  EXPECT_THROW(baseline_reachability(ctx, 0, 0, 1.0), PreconditionError);
  EXPECT_THROW(baseline_reachability(ctx, 0, 9, 1.0), UnknownIdError);
}

// ---------------------------------------------------------- past reachability

TEST(PastReachability, MatchesSymbolicForm) {
  InteriorFixture fx;
  const PastReachability obj(*fx.ctx, 0, 2, toy::window(*fx.ctx, 0), 1.3);
  EXPECT_EQ(obj.candidates().size(), 2u + InteriorFixture::kZeros);
  for (double t : {1.0, 2.0, 3.7, 5.0})
    EXPECT_NEAR(obj.value(VectorXd{{t}}), InteriorFixture::hand(t, 1.3), 1e-12) << t;
  EXPECT_NEAR(obj.value(obj.factual()), InteriorFixture::hand(2.0, 1.3), 1e-12);
}

TEST(PastReachability, GradientVanishesAtInteriorMaximum) {
  InteriorFixture fx;
  const PastReachability obj(*fx.ctx, 0, 2, toy::window(*fx.ctx, 0), 1.0);
  auto f = [&](double t) { return obj.value(VectorXd{{t}}); };
  double best = 1.0;
  for (int s = 0; s <= 4000; ++s)
    if (f(1.0 + s * 1e-3) > f(best)) best = 1.0 + s * 1e-3;
  double lo = std::max(1.0, best - 1e-3), hi = std::min(5.0, best + 1e-3);
  for (int it = 0; it < 200; ++it) {
    const double a = lo + (hi - lo) / 3, b = hi - (hi - lo) / 3;
    (f(a) < f(b) ? lo : hi) = (f(a) < f(b) ? a : b);
  }
  const double star = 0.5 * (lo + hi);
  ASSERT_GT(star, 1.01);
  ASSERT_LT(star, 4.99);
  EXPECT_NEAR(star, std::log(20.0) * (2 + kDefaultAuditRidge) - 3, 1e-5);
  EXPECT_LT(std::abs(obj.gradient(VectorXd{{star}})[0]), 1e-6);
}

TEST(PastReachability, LongerHorizonNeverHurtsOnGrid) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto inst = toy::make(6, 14, 2, 1, seed);
    auto split2 = holdout_split(inst->full, 2);
    const AuditContext c1 = *inst->past;
    const AuditContext c2(inst->model, split2.train, &split2);
    std::mt19937_64 rng(seed);
    const Index u = 0;
    const Index j = toy::unrated_item(c1, u, rng);
    const PastReachability o1(c1, u, j, toy::window(c1, u), 1.5);
    const PastReachability o2(c2, u, j, toy::window(c2, u), 1.5);
    double m1 = 0, m2 = 0;
    for (int a = 0; a <= 16; ++a) {
      m1 = std::max(m1, o1.value(VectorXd{{1 + a * 0.25}}));
      for (int b = 0; b <= 16; ++b) m2 = std::max(m2, o2.value(VectorXd{{1 + a * 0.25, 1 + b * 0.25}}));
    }
    EXPECT_GE(m2, m1 - 1e-12) << "seed " << seed;
  }
}

TEST(PastReachability, RejectsBadTargets) {
  auto inst = toy::make(4, 10, 2, 1, 3);
  const auto& ctx = *inst->past;
  const auto w = toy::window(ctx, 0);
  EXPECT_THROW(PastReachability(ctx, 0, ctx.train->history(0)[0].item, w, 1.0), PreconditionError);
  EXPECT_THROW(PastReachability(ctx, 0, w[0].item, w, 1.0), PreconditionError);
  EXPECT_THROW(PastReachability(ctx, 0, 0, {}, 1.0), ArgumentError);
  EXPECT_THROW(PastReachability(ctx, 0, 0, w, 0.0), ArgumentError);
}

TEST(PastReachability, LogConcaveAlongSegments) {
  std::mt19937_64 rng(17);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto inst = toy::make(8, 20, 3, 3, 100 + seed);
    const auto& ctx = *inst->past;
    const PastReachability obj(ctx, 1, toy::unrated_item(ctx, 1, rng), toy::window(ctx, 1), 2.0);
    for (int t = 0; t < 200; ++t) {
      const VectorXd a = toy::uniform(3, rng), b = toy::uniform(3, rng);
      EXPECT_GE(obj.log_value(0.5 * (a + b)), 0.5 * (obj.log_value(a) + obj.log_value(b)) - 1e-8);
    }
  }
}

// -------------------------------------------------------- future reachability

TEST(FutureReachability, ZeroHorizonIsBaselineAndSamplesAgree) {
  auto inst = toy::make(6, 15, 3, 1, 8);
  const auto& ctx = *inst->future;
  std::mt19937_64 rng(1);
  const Index j = toy::unrated_item(ctx, 2, rng);
  const FutureReachability k0(ctx, 2, j, 0, 1.7);
  EXPECT_NEAR(k0.value(VectorXd(0)), baseline_reachability(ctx, 2, j, 1.7), 1e-15);
  const FutureReachability s1(ctx, 2, j, 3, 1.7, 1), s10(ctx, 2, j, 3, 1.7, 10);
  const VectorXd theta = toy::uniform(s1.dimension(), rng);
  EXPECT_NEAR(s1.value(theta), s10.value(theta), 1e-14);
}

TEST(FutureReachability, OneStepMatchesPastPathAtSelectedItem) {
  std::mt19937_64 rng(2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto inst = toy::make(6, 16, 3, 1, 40 + seed);
    const auto& ctx = *inst->future;
    const Index u = 3, j = toy::unrated_item(ctx, u, rng);
    const FutureReachability fut(ctx, u, j, 1, 1.2);
    const VectorXd theta = toy::uniform(fut.dimension(), rng);
    const auto r = fut.rollout(theta);
    ASSERT_EQ(r.items.size(), 1u);
    EXPECT_NE(r.items[0], j);
    const double rating = theta[RatingParams::future_coord(0, r.items[0], ctx.n_items())];
    const std::vector<HistoryEntry> edit{{r.items[0], rating, 0}};
    const PastReachability past(ctx, u, j, edit, 1.2);
    EXPECT_NEAR(fut.value(theta), past.value(VectorXd{{rating}}), 1e-12);
    EXPECT_NEAR(r.probs.sum(), 1.0, 1e-9);
  }
}

TEST(FutureReachability, OffTrajectoryCoordinatesHaveZeroGradient) {
  auto inst = toy::make(6, 12, 2, 1, 9);
  const auto& ctx = *inst->future;
  std::mt19937_64 rng(3);
  const Index j = toy::unrated_item(ctx, 0, rng);
  const FutureReachability obj(ctx, 0, j, 2, 1.0);
  const VectorXd theta = toy::uniform(obj.dimension(), rng);
  const auto items = obj.rollout(theta).items;
  const VectorXd g = obj.gradient(theta);
  for (Index c = 0; c < g.size(); ++c) {
    const bool on = c == RatingParams::future_coord(0, items[0], ctx.n_items()) ||
                    c == RatingParams::future_coord(1, items[1], ctx.n_items());
    if (!on) {
      EXPECT_EQ(g[c], 0.0);
    }
  }
}

TEST(FutureReachability, CandidateExhaustionNamesStep) {
  // user rated all but two items; target is one of them, so step 2 has nothing
  std::vector<Interaction> xs;
  for (int i = 1; i <= 4; ++i) xs.push_back({1, i, 3, i});
  for (int i = 1; i <= 6; ++i) xs.push_back({2, i, 3, i});
  const auto ds = Dataset::from_interactions(xs);
  MfModel m;
  m.index = ds.shared_index();
  m.P = MatrixXd::Ones(2, 2);
  m.Q = MatrixXd::Ones(6, 2);
  const AuditContext ctx(m, ds);
  const FutureReachability obj(ctx, 0, 4, 2, 1.0);
  try {
    obj.value(VectorXd::Constant(obj.dimension(), 3.0));
    FAIL();
  } catch (const EmptyCandidateError& e) {
    EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos);
  }
}

// ------------------------------------------------------------ past stability

TEST(PastStability, MatchesHandL2AndIsZeroAtFactual) {
  StabilityFixture fx(false);
  const Index target = 0, adversary = 1;
  const PastStability obj(*fx.ctx, target, adversary, toy::window(*fx.ctx, adversary), 1.1, Distance::L2);
  ASSERT_EQ(obj.candidates(), (std::vector<Index>{0, 2, 3}));
  EXPECT_EQ(obj.value(obj.factual()), 0.0);
  const auto ref = StabilityFixture::hand_dist(3.0, 1.1);
  for (double t : {1.0, 2.2, 5.0}) {
    const auto l2 = StabilityFixture::hand_dist(t, 1.1);
    EXPECT_NEAR(obj.value(VectorXd{{t}}), l2_distance(l2, ref), 1e-12) << t;
  }
  const VectorXd dist = obj.distribution(VectorXd{{4.2}});
  EXPECT_NEAR(dist.sum(), 1.0, 1e-9);
}

TEST(PastStability, EditsOutsideCandidatesHaveNoEffect) {
  StabilityFixture fx(true);
  const PastStability obj(*fx.ctx, 0, 1, toy::window(*fx.ctx, 1), 1.1, Distance::Hellinger);
  for (double t : {1.0, 3.0, 5.0}) EXPECT_EQ(obj.value(VectorXd{{t}}), 0.0);
  EXPECT_EQ(obj.gradient(VectorXd{{1.0}})[0], 0.0);
}

TEST(PastStability, RejectsSelfPairs) {
  StabilityFixture fx(false);
  EXPECT_THROW(PastStability(*fx.ctx, 1, 1, toy::window(*fx.ctx, 1), 1.0, Distance::L2), PreconditionError);
}

TEST(PastStability, SubgradientAtIdentityIsAnAscentDirection) {
  std::mt19937_64 rng(4);
  for (auto kind : {Distance::L2, Distance::Hellinger}) {
    auto inst = toy::make(8, 20, 3, 2, 55);
    const auto& ctx = *inst->past;
    const PastStability obj(ctx, 0, 1, toy::window(ctx, 1), 2.0, kind);
    const VectorXd f = obj.factual();
    const VectorXd g = obj.gradient(f);
    if (g.norm() == 0.0) continue;
    const VectorXd step = project_box(f + 1e-3 * g / g.norm(), 1, 5);
    EXPECT_GT(obj.value(step), 0.0);
  }
}

TEST(PastStability, CornersDominateGridUnderL2) {
  std::mt19937_64 rng(6);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const int k = 1 + static_cast<int>(seed % 3);
    auto inst = toy::make(10, 18, 3, k, 300 + seed);
    const auto& ctx = *inst->past;
    const PastStability obj(ctx, 0, 1 + static_cast<Index>(seed % 5), toy::window(ctx, 1 + static_cast<Index>(seed % 5)),
                            1.5, Distance::L2);
    const auto corners = extreme_point_oracle([&](const VectorXd& t) { return obj.value(t); }, k);
    double grid = 0.0;
    VectorXd t(k);
    const int n = 17;
    for (int idx = 0; idx < static_cast<int>(std::pow(n, k)); ++idx) {
      int rest = idx;
      for (int c = 0; c < k; ++c, rest /= n) t[c] = 1.0 + 0.25 * (rest % n);
      grid = std::max(grid, obj.value(t));
    }
    EXPECT_GE(corners.value, grid - 1e-9) << "seed " << seed;
  }
}

// ---------------------------------------------------------- future stability

TEST(FutureStability, ZeroHorizonIsZero) {
  auto inst = toy::make(6, 15, 3, 1, 12);
  const FutureStability obj(*inst->future, 0, 1, 0, 1.0, Distance::Hellinger);
  EXPECT_EQ(obj.value(VectorXd(0)), 0.0);
}

TEST(FutureStability, OneStepMatchesPastPathAtSelectedItem) {
  std::mt19937_64 rng(7);
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 30 && checked < 8; ++seed) {
    auto inst = toy::make(8, 14, 2, 1, 500 + seed);
    const auto& ctx = *inst->future;
    const Index target = 0, adv = 1;
    const FutureStability probe(ctx, target, adv, 1, 1.3, Distance::L2);
    const Index m = probe.rollout(VectorXd::Constant(probe.dimension(), 3.0)).items[0];
    if (ctx.rated_mask(target)[static_cast<std::size_t>(m)]) continue;  // need m among target candidates
    // make the model's row for m equal its refit at rating r0
    const double r0 = 5.0;
    const auto refit = detail::refit_item(ctx, m, adv);
    inst->model.Q.row(m) = (refit.q0 + refit.g * r0).transpose();
    const FutureStability fut(ctx, target, adv, 1, 1.3, Distance::L2);
    const VectorXd theta = toy::uniform(fut.dimension(), rng);
    if (fut.rollout(theta).items[0] != m) continue;
    const double rating = theta[RatingParams::future_coord(0, m, ctx.n_items())];
    const PastStability past(ctx, target, adv, std::vector<HistoryEntry>{{m, r0, 0}}, 1.3, Distance::L2);
    EXPECT_NEAR(fut.value(theta), past.value(VectorXd{{rating}}), 1e-12);
    ++checked;
  }
  EXPECT_GE(checked, 3);
}

// ------------------------------------------------------- gradient agreement

namespace {

template <class Obj>
void expect_gradient_matches(const Obj& obj, const VectorXd& theta, const char* what) {
  const VectorXd g = obj.gradient(theta);
  const VectorXd fd = toy::central_diff([&](const VectorXd& t) { return obj.value(t); }, theta);
  for (Index c = 0; c < g.size(); ++c) EXPECT_LT(toy::rel_err(g[c], fd[c]), 1e-4) << what << " coord " << c;
}

// Rollout item choice is piecewise constant; finite differences are only
// meaningful where no +-h perturbation changes the selected items.
template <class Obj>
bool rollout_stable(const Obj& obj, const VectorXd& theta, double h = 1e-5) {
  const auto base = obj.rollout(theta).items;
  for (Index c = 0; c < theta.size(); ++c)
    for (double s : {-h, h}) {
      VectorXd t = theta;
      t[c] += s;
      if (obj.rollout(t).items != base) return false;
    }
  return true;
}

}  // namespace

TEST(Gradients, PastMetricsMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int k = 1 + static_cast<int>(seed % 3);
    auto inst = toy::make(20, 30, 4, k, 700 + seed);
    const auto& ctx = *inst->past;
    std::uniform_real_distribution<double> beta(0.5, 3.0);
    const PastReachability reach(ctx, 2, toy::unrated_item(ctx, 2, rng), toy::window(ctx, 2), beta(rng));
    expect_gradient_matches(reach, toy::uniform(k, rng), "past-reach");
    for (auto kind : {Distance::L2, Distance::Hellinger}) {
      const PastStability stab(ctx, 3, 4, toy::window(ctx, 4), beta(rng), kind);
      expect_gradient_matches(stab, toy::uniform(k, rng), "past-stab");
    }
  }
}

TEST(Gradients, FutureMetricsMatchFiniteDifferences) {
  std::mt19937_64 rng(22);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int k = 1 + static_cast<int>(seed % 3);
    auto inst = toy::make(20, 30, 4, 1, 800 + seed);
    const auto& ctx = *inst->future;
    const FutureReachability reach(ctx, 5, toy::unrated_item(ctx, 5, rng), k, 1.5);
    const FutureStability stab(ctx, 6, 7, k, 1.5, Distance::Hellinger);
    VectorXd t = toy::uniform(reach.dimension(), rng);
    for (int tries = 0; tries < 20 && !(rollout_stable(reach, t) && rollout_stable(stab, t)); ++tries)
      t = toy::uniform(reach.dimension(), rng);
    ASSERT_TRUE(rollout_stable(reach, t) && rollout_stable(stab, t));
    expect_gradient_matches(reach, t, "future-reach");
    expect_gradient_matches(stab, t, "future-stab");
  }
}

TEST(Gradients, BlackBoxObjectiveRefusesAnalyticGradient) {
  auto inst = toy::make(5, 10, 2, 1, 1);
  const MfAdapter adapter(*inst->future);
  const auto obj = BlackBoxObjective::future_stab(adapter, inst->future->index(), 1, 2, 1, 1.0, Distance::L2);
  EXPECT_THROW(analytic_gradient(obj, VectorXd::Constant(obj.dimension(), 3.0)), UnsupportedError);
}
