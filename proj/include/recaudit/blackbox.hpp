#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "recaudit/distance.hpp"
#include "recaudit/metrics.hpp"
#include "recaudit/objective.hpp"
#include "recaudit/policy.hpp"

namespace recaudit {

struct RatingEdit {
  UserId user = 0;
  ItemId item = 0;
  double rating = 0.0;
};

/// Which factor the recommender refits after edits: the editing user's own
/// vector (reachability) or the vectors of the edited items (stability).
enum class RefitSide { User, Item };

struct BlackBoxQuery {
  UserId subject = 0;
  std::vector<RatingEdit> edits;
  RecPolicy policy = RecPolicy::softmax(1.0);
  RefitSide side = RefitSide::User;
  /// Extra items withheld from the subject's candidates.
  std::vector<ItemId> exclude;
};

/// Query-only view of a recommender. Returned items are external ids over
/// the subject's unrated candidates.
class RecommenderAdapter {
 public:
  virtual ~RecommenderAdapter() = default;
  virtual RecommendationDistribution query(const BlackBoxQuery& q) const = 0;
};

/// Reference adapter over an in-process model. Edits that reproduce an
/// existing train rating are no-ops; the rest trigger closed-form refits.
class MfAdapter final : public RecommenderAdapter {
 public:
  explicit MfAdapter(const AuditContext& ctx) : ctx_(ctx) {}

  RecommendationDistribution query(const BlackBoxQuery& q) const override {
    const IdIndex& idx = ctx_.index();
    const Index subject = idx.user_index(q.subject);
    const MatrixXd& P = ctx_.model->P;
    const MatrixXd& Q = ctx_.model->Q;

    // (user, item) -> rating, last edit wins
    std::map<std::pair<Index, Index>, double> edits;
    for (const auto& e : q.edits) {
      if (!(e.rating >= kRatingMin && e.rating <= kRatingMax))
        throw ArgumentError("edited rating outside [1,5]: " + std::to_string(e.rating));
      edits[{idx.user_index(e.user), idx.item_index(e.item)}] = e.rating;
    }

    auto mask = ctx_.rated_mask(subject);
    for (const auto& [key, r] : edits)
      if (key.first == subject) mask[static_cast<std::size_t>(key.second)] = 1;
    for (ItemId id : q.exclude) mask[static_cast<std::size_t>(idx.item_index(id))] = 1;

    std::erase_if(edits, [&](const auto& kv) {
      const auto factual = ctx_.train->rating(kv.first.first, kv.first.second);
      return factual && *factual == kv.second;
    });

    VectorXd p = P.row(subject).transpose();
    std::map<Index, VectorXd> refit_items;
    if (!edits.empty() && q.side == RefitSide::User) {
      std::map<Index, double> ratings;
      for (const auto& e : ctx_.train->history(subject)) ratings[e.item] = e.rating;
      for (const auto& [key, r] : edits) {
        if (key.first != subject) throw ArgumentError("user-side refit only accepts edits by the subject");
        ratings[key.second] = r;
      }
      MatrixXd rows(static_cast<Index>(ratings.size()), Q.cols());
      VectorXd values(rows.rows());
      Index c = 0;
      for (const auto& [item, r] : ratings) {
        rows.row(c) = Q.row(item);
        values[c++] = r;
      }
      p = update_user_vector(rows, values, ctx_.ridge);
    } else if (!edits.empty()) {
      std::map<Index, std::map<Index, double>> by_item;
      for (const auto& [key, r] : edits) by_item[key.second][key.first] = r;
      for (const auto& [item, changed] : by_item) {
        std::map<Index, double> ratings;
        for (const auto& rt : ctx_.train->raters(item)) ratings[rt.user] = rt.rating;
        for (const auto& [user, r] : changed) ratings[user] = r;
        MatrixXd rows(static_cast<Index>(ratings.size()), P.cols());
        VectorXd values(rows.rows());
        Index c = 0;
        for (const auto& [user, r] : ratings) {
          rows.row(c) = P.row(user);
          values[c++] = r;
        }
        refit_items.emplace(item, update_item_vector(rows, values, ctx_.ridge));
      }
    }

    std::vector<std::int64_t> ids;
    std::vector<double> scores;
    for (Index i = 0; i < ctx_.n_items(); ++i) {
      if (mask[static_cast<std::size_t>(i)]) continue;
      ids.push_back(idx.item_id(i));
      auto it = refit_items.find(i);
      scores.push_back(it == refit_items.end() ? p.dot(Q.row(i)) : p.dot(it->second));
    }
    if (ids.empty()) throw EmptyCandidateError("subject has no unrated candidates left");
    return recommend(q.policy, ids, scores);
  }

 private:
  const AuditContext& ctx_;
};

/// Runs `q` through `adapter` and checks the result is a distribution.
inline RecommendationDistribution blackbox_query(const RecommenderAdapter& adapter, const BlackBoxQuery& q) {
  auto dist = adapter.query(q);
  if (dist.items.size() != dist.probs.size()) throw NumericalError("adapter returned mismatched items and probabilities");
  const double total = std::accumulate(dist.probs.begin(), dist.probs.end(), 0.0);
  if (!(std::abs(total - 1.0) <= 1e-9)) throw NumericalError("adapter distribution sums to " + std::to_string(total));
  return dist;
}

namespace detail {
inline std::int64_t mode_of(const RecommendationDistribution& d) {
  if (d.items.empty()) throw EmptyCandidateError("empty recommendation");
  auto it = std::max_element(d.probs.begin(), d.probs.end());
  return d.items[static_cast<std::size_t>(it - d.probs.begin())];
}
}  // namespace detail

/// The four audit objectives evaluated purely through adapter queries.
/// Parameter layout matches the white-box objectives.
class BlackBoxObjective final : public Objective {
 public:
  /// `factual` holds the edited user's last-k ratings (item, factual rating).
  static BlackBoxObjective past_reach(const RecommenderAdapter& a, const IdIndex& index, UserId user, ItemId target,
                                      std::vector<RatingEdit> factual, double beta) {
    BlackBoxObjective o(a, index, Metric::PastReach, user, target, 0, static_cast<int>(factual.size()), beta);
    o.factual_ = std::move(factual);
    return o;
  }
  static BlackBoxObjective future_reach(const RecommenderAdapter& a, const IdIndex& index, UserId user,
                                        ItemId target, int k, double beta) {
    return BlackBoxObjective(a, index, Metric::FutureReach, user, target, 0, k, beta);
  }
  static BlackBoxObjective past_stab(const RecommenderAdapter& a, const IdIndex& index, UserId target_user,
                                     UserId adversary, std::vector<RatingEdit> factual, double beta, Distance kind) {
    BlackBoxObjective o(a, index, Metric::PastStab, target_user, 0, adversary, static_cast<int>(factual.size()), beta);
    o.kind_ = kind;
    o.factual_ = std::move(factual);
    o.reference_ = o.target_distribution(o.factual_);
    return o;
  }
  static BlackBoxObjective future_stab(const RecommenderAdapter& a, const IdIndex& index, UserId target_user,
                                       UserId adversary, int k, double beta, Distance kind) {
    BlackBoxObjective o(a, index, Metric::FutureStab, target_user, 0, adversary, k, beta);
    o.kind_ = kind;
    o.reference_ = o.target_distribution({});
    return o;
  }

  Metric metric() const noexcept { return metric_; }

  Index dimension() const override {
    return is_past(metric_) ? static_cast<Index>(k_) : static_cast<Index>(k_) * index_->n_items();
  }

  VectorXd factual_values() const {
    VectorXd v(static_cast<Index>(factual_.size()));
    for (std::size_t c = 0; c < factual_.size(); ++c) v[static_cast<Index>(c)] = factual_[c].rating;
    return v;
  }

  double value(const VectorXd& theta) const override {
    if (theta.size() != dimension()) throw ArgumentError("black-box objective got the wrong parameter size");
    switch (metric_) {
      case Metric::PastReach: {
        auto edits = factual_;
        for (std::size_t c = 0; c < edits.size(); ++c) edits[c].rating = theta[static_cast<Index>(c)];
        return blackbox_query(*adapter_, {user_, edits, RecPolicy::softmax(beta_), RefitSide::User, {}}).prob_of(target_);
      }
      case Metric::FutureReach: {
        const auto edits = rollout(theta, user_, RefitSide::User, {target_});
        return blackbox_query(*adapter_, {user_, edits, RecPolicy::softmax(beta_), RefitSide::User, {}}).prob_of(target_);
      }
      case Metric::PastStab: {
        auto edits = factual_;
        for (std::size_t c = 0; c < edits.size(); ++c) edits[c].rating = theta[static_cast<Index>(c)];
        return distance(kind_, target_distribution(edits), reference_);
      }
      case Metric::FutureStab:
        return distance(kind_, target_distribution(rollout(theta, adversary_, RefitSide::Item, {})), reference_);
    }
    return 0.0;
  }

 private:
  BlackBoxObjective(const RecommenderAdapter& a, const IdIndex& index, Metric m, UserId user, ItemId target,
                    UserId adversary, int k, double beta)
      : adapter_(&a), index_(&index), metric_(m), user_(user), target_(target), adversary_(adversary), k_(k),
        beta_(beta) {
    if (k < 0) throw ArgumentError("horizon k must be >= 0");
    if (!(beta > 0.0)) throw ArgumentError("beta must be > 0");
    if (!is_reachability(m) && user == adversary) throw PreconditionError("target user and adversary must differ");
  }

  // Top-1 rollout of `who`: at step t the shown item m gets theta(t, m).
  std::vector<RatingEdit> rollout(const VectorXd& theta, UserId who, RefitSide side,
                                  std::vector<ItemId> exclude) const {
    std::vector<RatingEdit> edits;
    for (int t = 0; t < k_; ++t) {
      const auto shown = detail::mode_of(blackbox_query(*adapter_, {who, edits, RecPolicy::top_one(), side, exclude}));
      const Index coord = RatingParams::future_coord(t, index_->item_index(shown), index_->n_items());
      edits.push_back({who, shown, theta[coord]});
    }
    return edits;
  }

  RecommendationDistribution target_distribution(const std::vector<RatingEdit>& edits) const {
    return blackbox_query(*adapter_, {user_, edits, RecPolicy::softmax(beta_), RefitSide::Item, {}});
  }

  const RecommenderAdapter* adapter_;
  const IdIndex* index_;
  Metric metric_;
  UserId user_;
  ItemId target_;
  UserId adversary_;
  int k_;
  double beta_;
  Distance kind_ = Distance::Hellinger;
  std::vector<RatingEdit> factual_;
  RecommendationDistribution reference_;
};

}  // namespace recaudit
