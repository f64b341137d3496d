#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "recaudit/dataset.hpp"
#include "recaudit/error.hpp"

namespace recaudit {

struct RecPolicy {
  enum class Kind { TopOne, Softmax };
  Kind kind = Kind::Softmax;
  double beta = 1.0;

  static RecPolicy top_one() { return {Kind::TopOne, 1.0}; }
  static RecPolicy softmax(double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ArgumentError("softmax beta must be > 0");
    return {Kind::Softmax, beta};
  }
};

/// Probabilities over an ordered candidate list. Ids are whatever space the
/// producer works in: dense indices in-process, external ids from adapters.
struct RecommendationDistribution {
  std::vector<std::int64_t> items;
  std::vector<double> probs;

  std::size_t size() const noexcept { return items.size(); }
  /// Probability of `item`, 0 when it is not a candidate.
  double prob_of(std::int64_t item) const {
    auto it = std::lower_bound(items.begin(), items.end(), item);
    if (it == items.end() || *it != item) return 0.0;
    return probs[static_cast<std::size_t>(it - items.begin())];
  }
};

/// Items in [0, n_items) not in `history`, ascending.
inline std::vector<Index> candidate_set(std::span<const Index> history, Index n_items) {
  std::vector<char> rated(static_cast<std::size_t>(n_items), 0);
  for (Index i : history)
    if (i >= 0 && i < n_items) rated[static_cast<std::size_t>(i)] = 1;
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(n_items));
  for (Index i = 0; i < n_items; ++i)
    if (!rated[static_cast<std::size_t>(i)]) out.push_back(i);
  if (out.empty()) throw EmptyCandidateError("every item has been rated; nothing left to recommend");
  return out;
}

/// `all_items` minus `history`, ascending.
inline std::vector<Index> candidate_set(std::span<const Index> history, std::span<const Index> all_items) {
  std::vector<Index> all(all_items.begin(), all_items.end());
  std::vector<Index> seen(history.begin(), history.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::sort(seen.begin(), seen.end());
  std::vector<Index> out;
  std::set_difference(all.begin(), all.end(), seen.begin(), seen.end(), std::back_inserter(out));
  if (out.empty()) throw EmptyCandidateError("every item has been rated; nothing left to recommend");
  return out;
}

/// In-place max-shifted softmax of beta * scores.
inline void softmax_inplace(std::span<double> values, double beta) {
  double top = -std::numeric_limits<double>::infinity();
  for (double s : values) {
    if (!std::isfinite(s)) throw NumericalError("non-finite recommendation score");
    top = std::max(top, s);
  }
  double total = 0.0;
  for (double& s : values) {
    s = std::exp(beta * (s - top));
    total += s;
  }
  for (double& s : values) s /= total;
}

inline RecommendationDistribution softmax_distribution(std::span<const std::int64_t> candidates,
                                                       std::span<const double> scores, double beta) {
  if (!(beta > 0.0)) throw ArgumentError("softmax beta must be > 0");
  if (candidates.empty()) throw EmptyCandidateError("softmax over an empty candidate set");
  if (candidates.size() != scores.size()) throw ArgumentError("candidates and scores differ in length");
  RecommendationDistribution dist;
  dist.items.assign(candidates.begin(), candidates.end());
  dist.probs.assign(scores.begin(), scores.end());
  softmax_inplace(dist.probs, beta);
  return dist;
}

/// Highest score; ties go to the earliest candidate (candidates are ascending).
inline std::int64_t top_one(std::span<const std::int64_t> candidates, std::span<const double> scores) {
  if (candidates.empty()) throw EmptyCandidateError("top-1 over an empty candidate set");
  if (candidates.size() != scores.size()) throw ArgumentError("candidates and scores differ in length");
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k)
    if (scores[k] > scores[best]) best = k;
  return candidates[best];
}

inline RecommendationDistribution point_mass(std::span<const std::int64_t> candidates, std::int64_t item) {
  RecommendationDistribution dist;
  dist.items.assign(candidates.begin(), candidates.end());
  dist.probs.assign(candidates.size(), 0.0);
  for (std::size_t k = 0; k < candidates.size(); ++k)
    if (candidates[k] == item) dist.probs[k] = 1.0;
  return dist;
}

/// Applies `policy` to candidate scores.
inline RecommendationDistribution recommend(const RecPolicy& policy, std::span<const std::int64_t> candidates,
                                            std::span<const double> scores) {
  if (policy.kind == RecPolicy::Kind::TopOne) return point_mass(candidates, top_one(candidates, scores));
  return softmax_distribution(candidates, scores, policy.beta);
}

/// Inverse-CDF draw; consumes one uniform from `rng`.
template <class Rng>
std::int64_t sample(const RecommendationDistribution& dist, Rng& rng) {
  if (dist.items.empty()) throw EmptyCandidateError("cannot sample from an empty distribution");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < dist.probs.size(); ++k) {
    if (dist.probs[k] <= 0.0) continue;
    last_positive = k;
    acc += dist.probs[k];
    if (u < acc) return dist.items[k];
  }
  return dist.items[last_positive];
}

}  // namespace recaudit
