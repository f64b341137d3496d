#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "recaudit/distance.hpp"
#include "recaudit/objective.hpp"
#include "recaudit/policy.hpp"

namespace recaudit {

enum class Metric { PastReach, FutureReach, PastStab, FutureStab };

inline bool is_reachability(Metric m) noexcept { return m == Metric::PastReach || m == Metric::FutureReach; }
inline bool is_past(Metric m) noexcept { return m == Metric::PastReach || m == Metric::PastStab; }

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::PastReach: return "past-reach";
    case Metric::FutureReach: return "future-reach";
    case Metric::PastStab: return "past-stab";
    case Metric::FutureStab: return "future-stab";
  }
  return "?";
}

inline Metric parse_metric(std::string_view name) {
  for (Metric m : {Metric::PastReach, Metric::FutureReach, Metric::PastStab, Metric::FutureStab})
    if (name == to_string(m)) return m;
  throw ArgumentError("unknown metric '" + std::string(name) + "' (expected past-reach|future-reach|past-stab|future-stab)");
}

/// P(A = item) for `user` under the beta-softmax over their unrated items,
/// using the model's own factors (no intervention).
inline double baseline_reachability(const AuditContext& ctx, Index user, Index item, double beta) {
  ctx.check_user(user);
  ctx.check_item(item);
  if (!(beta > 0.0)) throw ArgumentError("beta must be > 0");
  const auto candidates = detail::unmasked(ctx.rated_mask(user));
  const Index pos = detail::position_of(candidates, item);
  if (pos < 0) throw PreconditionError("target item already rated by the user");
  VectorXd s(static_cast<Index>(candidates.size()));
  for (std::size_t c = 0; c < candidates.size(); ++c)
    s[static_cast<Index>(c)] = ctx.model->P.row(user).dot(ctx.model->Q.row(candidates[c]));
  return std::exp(detail::log_softmax_at(s, pos, beta));
}

/// User `user` re-rates the items of their factual last-k window. Item
/// factors stay fixed and the user vector is refit in closed form, so the
/// candidate scores are affine in the edited ratings:
///   s(theta) = base + slopes * theta.
class PastReachability final : public Objective {
 public:
  PastReachability(const AuditContext& ctx, Index user, Index target, std::span<const HistoryEntry> edited,
                   double beta)
      : beta_(beta), k_(static_cast<Index>(edited.size())) {
    ctx.check_user(user);
    ctx.check_item(target);
    if (!(beta > 0.0)) throw ArgumentError("beta must be > 0");
    if (edited.empty()) throw ArgumentError("past reachability needs at least one edited rating");
    const MatrixXd& Q = ctx.model->Q;
    const Index d = Q.cols();

    std::vector<char> is_edited(static_cast<std::size_t>(ctx.n_items()), 0);
    factual_.resize(k_);
    MatrixXd edited_rows(k_, d);
    for (Index c = 0; c < k_; ++c) {
      const auto& e = edited[static_cast<std::size_t>(c)];
      ctx.check_item(e.item);
      is_edited[static_cast<std::size_t>(e.item)] = 1;
      factual_[c] = e.rating;
      edited_rows.row(c) = Q.row(e.item);
    }

    MatrixXd gram = MatrixXd::Identity(d, d) * ctx.ridge;
    VectorXd rhs = VectorXd::Zero(d);
    for (const auto& e : ctx.train->history(user)) {
      if (is_edited[static_cast<std::size_t>(e.item)]) continue;
      gram.noalias() += Q.row(e.item).transpose() * Q.row(e.item);
      rhs.noalias() += e.rating * Q.row(e.item).transpose();
    }
    gram.noalias() += edited_rows.transpose() * edited_rows;
    const auto llt = detail::factor_spd(gram);
    const VectorXd p0 = llt.solve(rhs);
    const MatrixXd W = llt.solve(edited_rows.transpose());  // d x k

    auto mask = ctx.rated_mask(user);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] |= is_edited[i];
    candidates_ = detail::unmasked(mask);
    target_pos_ = detail::position_of(candidates_, target);
    if (target_pos_ < 0) throw PreconditionError("target item is not in the user's candidate set");

    const Index nc = static_cast<Index>(candidates_.size());
    MatrixXd cand_rows(nc, d);
    for (Index c = 0; c < nc; ++c) cand_rows.row(c) = Q.row(candidates_[static_cast<std::size_t>(c)]);
    base_ = cand_rows * p0;
    slopes_ = cand_rows * W;
  }

  Index dimension() const override { return k_; }
  bool white_box() const override { return true; }
  const VectorXd& factual() const noexcept { return factual_; }
  const std::vector<Index>& candidates() const noexcept { return candidates_; }

  VectorXd scores(const VectorXd& theta) const { return base_ + slopes_ * theta; }

  double log_value(const VectorXd& theta) const override {
    return detail::log_softmax_at(scores(theta), target_pos_, beta_);
  }
  double value(const VectorXd& theta) const override { return std::exp(log_value(theta)); }

  // d log f / d theta = beta (slopes_j - sum_v f_v slopes_v)
  VectorXd log_gradient(const VectorXd& theta) const override {
    const VectorXd f = detail::softmax(scores(theta), beta_);
    return beta_ * (slopes_.row(target_pos_).transpose() - slopes_.transpose() * f);
  }
  VectorXd gradient(const VectorXd& theta) const override { return value(theta) * log_gradient(theta); }

 private:
  double beta_;
  Index k_;
  VectorXd factual_;
  std::vector<Index> candidates_;
  Index target_pos_ = -1;
  VectorXd base_;
  MatrixXd slopes_;
};

/// User `user` follows top-1 recommendations for k steps (never taking the
/// target itself), rating the item shown at step t with theta(t, item). The
/// user vector is refit after each step; the objective is the beta-softmax
/// probability of the target afterwards. Item choice is piecewise constant
/// in theta, so gradients flow through the ratings only.
class FutureReachability final : public Objective {
 public:
  FutureReachability(const AuditContext& ctx, Index user, Index target, int k, double beta, int num_samples = 1)
      : ctx_(ctx), user_(user), target_(target), k_(k), beta_(beta), num_samples_(num_samples) {
    ctx.check_user(user);
    ctx.check_item(target);
    if (k < 0) throw ArgumentError("horizon k must be >= 0");
    if (!(beta > 0.0)) throw ArgumentError("beta must be > 0");
    if (num_samples < 1) throw ArgumentError("num_samples must be >= 1");
    base_mask_ = ctx.rated_mask(user);
    if (base_mask_[static_cast<std::size_t>(target)]) throw PreconditionError("target item already rated by the user");
    const MatrixXd& Q = ctx.model->Q;
    const Index d = Q.cols();
    gram_ = MatrixXd::Identity(d, d) * ctx.ridge;
    rhs_ = VectorXd::Zero(d);
    for (const auto& e : ctx.train->history(user)) {
      gram_.noalias() += Q.row(e.item).transpose() * Q.row(e.item);
      rhs_.noalias() += e.rating * Q.row(e.item).transpose();
    }
  }

  struct Rollout {
    std::vector<Index> items;  // item picked at each step
    Eigen::LLT<MatrixXd> llt;  // final normal equations
    VectorXd user_vector;
    std::vector<Index> candidates;
    VectorXd probs;
    Index target_pos = -1;
  };

  Rollout rollout(const VectorXd& theta) const {
    const MatrixXd& Q = ctx_.model->Q;
    const Index n = ctx_.n_items();
    Rollout r;
    auto mask = base_mask_;
    MatrixXd gram = gram_;
    VectorXd rhs = rhs_;
    VectorXd p = ctx_.model->P.row(user_).transpose();
    for (int t = 0; t < k_; ++t) {
      const VectorXd s = Q * p;
      Index best = -1;
      for (Index i = 0; i < n; ++i) {
        if (mask[static_cast<std::size_t>(i)] || i == target_) continue;
        if (best < 0 || s[i] > s[best]) best = i;
      }
      if (best < 0) throw EmptyCandidateError("candidates exhausted at rollout step " + std::to_string(t + 1));
      mask[static_cast<std::size_t>(best)] = 1;
      r.items.push_back(best);
      gram.noalias() += Q.row(best).transpose() * Q.row(best);
      rhs.noalias() += theta[RatingParams::future_coord(t, best, n)] * Q.row(best).transpose();
      r.llt = detail::factor_spd(gram);
      p = r.llt.solve(rhs);
    }
    r.user_vector = p;
    r.candidates = detail::unmasked(mask);
    r.target_pos = detail::position_of(r.candidates, target_);
    VectorXd s(static_cast<Index>(r.candidates.size()));
    for (std::size_t c = 0; c < r.candidates.size(); ++c) s[static_cast<Index>(c)] = Q.row(r.candidates[c]).dot(p);
    r.probs = detail::softmax(s, beta_);
    return r;
  }

  Index dimension() const override { return static_cast<Index>(k_) * ctx_.n_items(); }
  bool white_box() const override { return true; }
  int horizon() const noexcept { return k_; }

  double value(const VectorXd& theta) const override {
    check_shape(theta);
    double total = 0.0;
    for (int s = 0; s < num_samples_; ++s) {
      const auto r = rollout(theta);
      total += r.probs[r.target_pos];
    }
    return total / num_samples_;
  }

  VectorXd gradient(const VectorXd& theta) const override {
    check_shape(theta);
    const MatrixXd& Q = ctx_.model->Q;
    VectorXd g = VectorXd::Zero(dimension());
    for (int s = 0; s < num_samples_; ++s) {
      const auto r = rollout(theta);
      if (r.items.empty()) continue;
      VectorXd qbar = VectorXd::Zero(Q.cols());
      for (std::size_t c = 0; c < r.candidates.size(); ++c) qbar.noalias() += r.probs[static_cast<Index>(c)] * Q.row(r.candidates[c]).transpose();
      const double f = r.probs[r.target_pos];
      const VectorXd u = r.llt.solve(Q.row(target_).transpose() - qbar);
      for (int t = 0; t < k_; ++t) {
        const Index item = r.items[static_cast<std::size_t>(t)];
        g[RatingParams::future_coord(t, item, ctx_.n_items())] += beta_ * f * u.dot(Q.row(item));
      }
    }
    return g / num_samples_;
  }

 private:
  void check_shape(const VectorXd& theta) const {
    if (theta.size() != dimension()) throw ArgumentError("future rating table has the wrong size");
  }

  const AuditContext& ctx_;
  Index user_;
  Index target_;
  int k_;
  double beta_;
  int num_samples_;
  std::vector<char> base_mask_;
  MatrixXd gram_;
  VectorXd rhs_;
};

namespace detail {

/// Candidate `pos` of the target user gets score base + slope * theta[coord].
struct ScoreSlope {
  Index pos = -1;
  Index coord = 0;
  double base = 0.0;
  double slope = 0.0;
};

inline VectorXd edited_distribution(VectorXd scores, std::span<const ScoreSlope> slopes, const VectorXd& theta,
                                    double beta) {
  for (const auto& s : slopes) scores[s.pos] = s.base + s.slope * theta[s.coord];
  return softmax(scores, beta);
}

// Distances at or below this are treated as the nondifferentiable apex.
inline constexpr double kApexDistance = 1e-14;

/// Adds weight * d distance(l2(theta), l1) / d theta to `grad`. At the apex
/// l2 == l1 the distance is a cone |J delta| and has no gradient; we return
/// the steepest ascent subgradient sigma_max * v_max, signed toward the box
/// centre.
inline void add_stability_gradient(const VectorXd& l2, const VectorXd& l1, double dist, Distance kind,
                                   std::span<const ScoreSlope> slopes, double beta, const VectorXd& theta,
                                   double weight, VectorXd& grad) {
  if (slopes.empty()) return;
  if (dist > kApexDistance) {
    VectorXd w(l2.size());
    for (Index v = 0; v < l2.size(); ++v)
      w[v] = (embed(kind, l2[v]) - embed(kind, l1[v])) * embed_derivative(kind, l2[v]) / dist;
    const double mean_w = l2.dot(w);
    for (const auto& s : slopes) grad[s.coord] += weight * beta * s.slope * l2[s.pos] * (w[s.pos] - mean_w);
    return;
  }
  const Index m = static_cast<Index>(slopes.size());
  MatrixXd J(l2.size(), m);
  for (Index c = 0; c < m; ++c) {
    const auto& s = slopes[static_cast<std::size_t>(c)];
    VectorXd col = -beta * s.slope * l2[s.pos] * l2;
    col[s.pos] += beta * s.slope * l2[s.pos];
    for (Index v = 0; v < l2.size(); ++v) col[v] *= embed_derivative(kind, l2[v]);
    J.col(c) = col;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(J.transpose() * J);
  const double top = eig.eigenvalues()[m - 1];
  if (!(top > 0.0)) return;
  VectorXd dir = eig.eigenvectors().col(m - 1) * std::sqrt(top);
  const double centre = 0.5 * (kRatingMin + kRatingMax);
  double toward = 0.0;
  for (Index c = 0; c < m; ++c) toward += dir[c] * (centre - theta[slopes[static_cast<std::size_t>(c)].coord]);
  if (toward < 0.0 || (toward == 0.0 && dir[0] < 0.0)) dir = -dir;
  for (Index c = 0; c < m; ++c) grad[slopes[static_cast<std::size_t>(c)].coord] += weight * dir[c];
}

/// (q0, g) with q(r) = q0 + g r: closed-form refit of `item` when
/// `adversary` rates it r and everyone else's train ratings stay.
struct ItemRefit {
  VectorXd q0;
  VectorXd g;
};

inline ItemRefit refit_item(const AuditContext& ctx, Index item, Index adversary) {
  const MatrixXd& P = ctx.model->P;
  const Index d = P.cols();
  MatrixXd gram = MatrixXd::Identity(d, d) * ctx.ridge;
  VectorXd rhs = VectorXd::Zero(d);
  for (const auto& r : ctx.train->raters(item)) {
    if (r.user == adversary) continue;
    gram.noalias() += P.row(r.user).transpose() * P.row(r.user);
    rhs.noalias() += r.rating * P.row(r.user).transpose();
  }
  gram.noalias() += P.row(adversary).transpose() * P.row(adversary);
  const auto llt = factor_spd(gram);
  return {llt.solve(rhs), llt.solve(VectorXd(P.row(adversary).transpose()))};
}

}  // namespace detail

/// Adversary re-rates the items of their factual last-k window; each item
/// vector is refit with user factors fixed. The objective is the distance
/// between the target user's beta-softmax before (factual ratings) and after.
class PastStability final : public Objective {
 public:
  PastStability(const AuditContext& ctx, Index target_user, Index adversary, std::span<const HistoryEntry> edited,
                double beta, Distance kind)
      : beta_(beta), kind_(kind), k_(static_cast<Index>(edited.size())) {
    ctx.check_user(target_user);
    ctx.check_user(adversary);
    if (target_user == adversary) throw PreconditionError("target user and adversary must differ");
    if (!(beta > 0.0)) throw ArgumentError("beta must be > 0");
    if (edited.empty()) throw ArgumentError("past stability needs at least one edited rating");
    const auto p1 = ctx.model->P.row(target_user);
    candidates_ = detail::unmasked(ctx.rated_mask(target_user));
    if (candidates_.empty()) throw EmptyCandidateError("target user has rated every item");
    base_.resize(static_cast<Index>(candidates_.size()));
    for (std::size_t c = 0; c < candidates_.size(); ++c)
      base_[static_cast<Index>(c)] = p1.dot(ctx.model->Q.row(candidates_[c]));
    factual_.resize(k_);
    for (Index c = 0; c < k_; ++c) {
      const auto& e = edited[static_cast<std::size_t>(c)];
      ctx.check_item(e.item);
      factual_[c] = e.rating;
      const Index pos = detail::position_of(candidates_, e.item);
      if (pos < 0) continue;  // target already rated it: no effect on their recommendations
      const auto refit = detail::refit_item(ctx, e.item, adversary);
      slopes_.push_back({pos, c, p1.dot(refit.q0), p1.dot(refit.g)});
    }
    reference_ = detail::edited_distribution(base_, slopes_, factual_, beta_);
  }

  Index dimension() const override { return k_; }
  bool white_box() const override { return true; }
  const VectorXd& factual() const noexcept { return factual_; }
  const VectorXd& reference() const noexcept { return reference_; }
  const std::vector<Index>& candidates() const noexcept { return candidates_; }

  VectorXd distribution(const VectorXd& theta) const { return detail::edited_distribution(base_, slopes_, theta, beta_); }

  double value(const VectorXd& theta) const override {
    check_shape(theta);
    return distance(kind_, std::span<const double>(distribution(theta).data(), static_cast<std::size_t>(base_.size())),
                    std::span<const double>(reference_.data(), static_cast<std::size_t>(reference_.size())));
  }

  VectorXd gradient(const VectorXd& theta) const override {
    check_shape(theta);
    const VectorXd l2 = distribution(theta);
    const double dist = distance(kind_, std::span<const double>(l2.data(), static_cast<std::size_t>(l2.size())),
                                 std::span<const double>(reference_.data(), static_cast<std::size_t>(reference_.size())));
    VectorXd g = VectorXd::Zero(k_);
    detail::add_stability_gradient(l2, reference_, dist, kind_, slopes_, beta_, theta, 1.0, g);
    return g;
  }

 private:
  void check_shape(const VectorXd& theta) const {
    if (theta.size() != k_) throw ArgumentError("expected " + std::to_string(k_) + " ratings");
  }

  double beta_;
  Distance kind_;
  Index k_;
  std::vector<Index> candidates_;
  VectorXd base_;
  VectorXd factual_;
  VectorXd reference_;
  std::vector<detail::ScoreSlope> slopes_;
};

/// Adversary follows top-1 recommendations for k steps, rating the item
/// shown at step t with theta(t, item); each such item vector is refit. The
/// objective is the distance between the target's beta-softmax under the
/// model's factors and after the rollout.
class FutureStability final : public Objective {
 public:
  FutureStability(const AuditContext& ctx, Index target_user, Index adversary, int k, double beta, Distance kind,
                  int num_samples = 1)
      : ctx_(ctx), adversary_(adversary), k_(k), beta_(beta), kind_(kind), num_samples_(num_samples) {
    ctx.check_user(target_user);
    ctx.check_user(adversary);
    if (target_user == adversary) throw PreconditionError("target user and adversary must differ");
    if (k < 0) throw ArgumentError("horizon k must be >= 0");
    if (!(beta > 0.0)) throw ArgumentError("beta must be > 0");
    if (num_samples < 1) throw ArgumentError("num_samples must be >= 1");
    p1_ = ctx.model->P.row(target_user).transpose();
    candidates_ = detail::unmasked(ctx.rated_mask(target_user));
    if (candidates_.empty()) throw EmptyCandidateError("target user has rated every item");
    base_.resize(static_cast<Index>(candidates_.size()));
    for (std::size_t c = 0; c < candidates_.size(); ++c)
      base_[static_cast<Index>(c)] = p1_.dot(ctx.model->Q.row(candidates_[c]));
    reference_ = detail::softmax(base_, beta_);
    adversary_mask_ = ctx.rated_mask(adversary);
  }

  struct Rollout {
    std::vector<Index> items;
    std::vector<detail::ScoreSlope> slopes;
  };

  Rollout rollout(const VectorXd& theta) const {
    const MatrixXd& Q = ctx_.model->Q;
    const Index n = ctx_.n_items();
    const VectorXd p2 = ctx_.model->P.row(adversary_).transpose();
    VectorXd s = Q * p2;
    auto mask = adversary_mask_;
    Rollout r;
    for (int t = 0; t < k_; ++t) {
      Index best = -1;
      for (Index i = 0; i < n; ++i) {
        if (mask[static_cast<std::size_t>(i)]) continue;
        if (best < 0 || s[i] > s[best]) best = i;
      }
      if (best < 0) throw EmptyCandidateError("adversary candidates exhausted at rollout step " + std::to_string(t + 1));
      mask[static_cast<std::size_t>(best)] = 1;
      r.items.push_back(best);
      const auto& refit = cached_refit(best);
      const Index coord = RatingParams::future_coord(t, best, n);
      s[best] = p2.dot(refit.q0 + refit.g * theta[coord]);
      const Index pos = detail::position_of(candidates_, best);
      if (pos >= 0) r.slopes.push_back({pos, coord, p1_.dot(refit.q0), p1_.dot(refit.g)});
    }
    return r;
  }

  Index dimension() const override { return static_cast<Index>(k_) * ctx_.n_items(); }
  bool white_box() const override { return true; }
  const VectorXd& reference() const noexcept { return reference_; }

  double value(const VectorXd& theta) const override {
    check_shape(theta);
    double total = 0.0;
    for (int s = 0; s < num_samples_; ++s) {
      const auto r = rollout(theta);
      const VectorXd l2 = detail::edited_distribution(base_, r.slopes, theta, beta_);
      total += distance(kind_, std::span<const double>(l2.data(), static_cast<std::size_t>(l2.size())),
                        std::span<const double>(reference_.data(), static_cast<std::size_t>(reference_.size())));
    }
    return total / num_samples_;
  }

  VectorXd gradient(const VectorXd& theta) const override {
    check_shape(theta);
    VectorXd g = VectorXd::Zero(dimension());
    for (int s = 0; s < num_samples_; ++s) {
      const auto r = rollout(theta);
      const VectorXd l2 = detail::edited_distribution(base_, r.slopes, theta, beta_);
      const double dist = distance(kind_, std::span<const double>(l2.data(), static_cast<std::size_t>(l2.size())),
                                   std::span<const double>(reference_.data(), static_cast<std::size_t>(reference_.size())));
      detail::add_stability_gradient(l2, reference_, dist, kind_, r.slopes, beta_, theta, 1.0 / num_samples_, g);
    }
    return g;
  }

 private:
  void check_shape(const VectorXd& theta) const {
    if (theta.size() != dimension()) throw ArgumentError("future rating table has the wrong size");
  }
  const detail::ItemRefit& cached_refit(Index item) const {
    auto it = refits_.find(item);
    if (it == refits_.end()) it = refits_.emplace(item, detail::refit_item(ctx_, item, adversary_)).first;
    return it->second;
  }

  const AuditContext& ctx_;
  Index adversary_;
  int k_;
  double beta_;
  Distance kind_;
  int num_samples_;
  VectorXd p1_;
  std::vector<Index> candidates_;
  VectorXd base_;
  VectorXd reference_;
  std::vector<char> adversary_mask_;
  // Refits depend only on (item, adversary); filled lazily, not thread-safe.
  mutable std::unordered_map<Index, detail::ItemRefit> refits_;
};

}  // namespace recaudit
