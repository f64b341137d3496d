#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "recaudit/dataset.hpp"
#include "recaudit/error.hpp"
#include "recaudit/mf.hpp"

namespace recaudit {

inline constexpr double kRatingMin = 1.0;
inline constexpr double kRatingMax = 5.0;

/// Optimization variables of an audit. Past metrics edit the k factual
/// ratings; future metrics hold a k x |V| table whose entry (step, item) is
/// the rating given if `item` is recommended at that step.
struct RatingParams {
  enum class Mode { Past, Future };
  Mode mode = Mode::Past;
  int k = 0;
  Index n_items = 0;
  VectorXd values;

  static RatingParams past(VectorXd v) {
    RatingParams p;
    p.mode = Mode::Past;
    p.k = static_cast<int>(v.size());
    p.values = std::move(v);
    return p;
  }
  static RatingParams future(int k, Index n_items, VectorXd v) {
    if (v.size() != static_cast<Index>(k) * n_items) throw ArgumentError("future rating table has the wrong size");
    RatingParams p;
    p.mode = Mode::Future;
    p.k = k;
    p.n_items = n_items;
    p.values = std::move(v);
    return p;
  }

  static Index future_coord(int step, Index item, Index n_items) { return static_cast<Index>(step) * n_items + item; }
  double at(int step, Index item) const { return values[future_coord(step, item, n_items)]; }
};

inline VectorXd clamp_ratings(VectorXd v, double lo = kRatingMin, double hi = kRatingMax) {
  for (Index c = 0; c < v.size(); ++c) v[c] = std::clamp(v[c], lo, hi);
  return v;
}

/// A scalar audit objective over a flat parameter vector. White-box
/// objectives also provide exact gradients.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual Index dimension() const = 0;
  virtual double value(const VectorXd& theta) const = 0;
  virtual bool white_box() const { return false; }
  virtual VectorXd gradient(const VectorXd&) const {
    throw UnsupportedError("objective has no analytic gradient (black-box access)");
  }
  virtual double log_value(const VectorXd& theta) const { return std::log(value(theta)); }
  virtual VectorXd log_gradient(const VectorXd& theta) const { return gradient(theta) / value(theta); }
};

inline VectorXd analytic_gradient(const Objective& objective, const VectorXd& theta) {
  if (!objective.white_box()) throw UnsupportedError("analytic gradients need white-box access to the recommender");
  return objective.gradient(theta);
}

/// Everything an audit reads: the trained model, the ratings it was fit on
/// (the source for closed-form refits) and the held-out tails, if any.
/// Non-owning; the referenced objects must outlive the context.
struct AuditContext {
  const MfModel* model = nullptr;
  const Dataset* train = nullptr;
  const HoldoutSplit* split = nullptr;
  double ridge = kDefaultAuditRidge;

  AuditContext(const MfModel& m, const Dataset& t, const HoldoutSplit* s = nullptr, double r = kDefaultAuditRidge)
      : model(&m), train(&t), split(s), ridge(r) {
    if (m.P.rows() != t.index().n_users() || m.Q.rows() != t.index().n_items())
      throw ArgumentError("model and dataset index spaces disagree");
  }

  Index n_users() const noexcept { return model->n_users(); }
  Index n_items() const noexcept { return model->n_items(); }
  const IdIndex& index() const noexcept { return train->index(); }

  std::span<const HistoryEntry> heldout(Index u) const {
    if (!split) return {};
    return split->heldout_for(u);
  }

  /// Items `u` has rated by audit time: train history plus held-out tail.
  std::vector<char> rated_mask(Index u) const {
    check_user(u);
    std::vector<char> mask(static_cast<std::size_t>(n_items()), 0);
    for (const auto& e : train->history(u)) mask[static_cast<std::size_t>(e.item)] = 1;
    for (const auto& e : heldout(u)) mask[static_cast<std::size_t>(e.item)] = 1;
    return mask;
  }

  void check_user(Index u) const {
    if (u < 0 || u >= n_users()) throw UnknownIdError("user index " + std::to_string(u) + " not in model");
  }
  void check_item(Index i) const {
    if (i < 0 || i >= n_items()) throw UnknownIdError("item index " + std::to_string(i) + " not in model");
  }
};

namespace detail {

inline std::vector<Index> unmasked(const std::vector<char>& mask) {
  std::vector<Index> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!mask[i]) out.push_back(static_cast<Index>(i));
  return out;
}

inline Index position_of(const std::vector<Index>& sorted, Index item) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), item);
  if (it == sorted.end() || *it != item) return -1;
  return static_cast<Index>(it - sorted.begin());
}

/// log softmax_j(beta * s), computed stably.
inline double log_softmax_at(const VectorXd& s, Index j, double beta) {
  const double top = s.maxCoeff();
  return beta * (s[j] - top) - std::log((beta * (s.array() - top)).exp().sum());
}

inline VectorXd softmax(const VectorXd& s, double beta) {
  if (!s.allFinite()) throw NumericalError("non-finite recommendation score");
  VectorXd e = (beta * (s.array() - s.maxCoeff())).exp();
  return e / e.sum();
}

inline Eigen::LLT<MatrixXd> factor_spd(const MatrixXd& gram) {
  Eigen::LLT<MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > kMinRcond))
    throw SingularSystemError("normal equations are numerically singular; use a ridge > 0");
  return llt;
}

}  // namespace detail

}  // namespace recaudit
