#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "recaudit/error.hpp"
#include "recaudit/policy.hpp"

namespace recaudit {

enum class Distance { L2, Hellinger };

inline const char* to_string(Distance d) { return d == Distance::L2 ? "l2" : "hellinger"; }

inline Distance parse_distance(const std::string& s) {
  if (s == "l2") return Distance::L2;
  if (s == "hellinger") return Distance::Hellinger;
  throw ArgumentError("unknown distance '" + s + "' (expected l2 or hellinger)");
}

namespace detail {
inline void check_aligned(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ArgumentError("distributions have different supports");
}
}  // namespace detail

inline double l2_distance(std::span<const double> p, std::span<const double> q) {
  detail::check_aligned(p, q);
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) s += (p[k] - q[k]) * (p[k] - q[k]);
  return std::sqrt(s);
}

/// sqrt(1 - sum sqrt(p q)), evaluated as sqrt(0.5 * sum (sqrt p - sqrt q)^2)
/// which is the same quantity for normalized inputs but exact at p == q.
inline double hellinger(std::span<const double> p, std::span<const double> q) {
  detail::check_aligned(p, q);
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double diff = std::sqrt(std::max(p[k], 0.0)) - std::sqrt(std::max(q[k], 0.0));
    s += diff * diff;
  }
  return std::clamp(std::sqrt(0.5 * s), 0.0, 1.0);
}

inline double distance(Distance kind, std::span<const double> p, std::span<const double> q) {
  return kind == Distance::L2 ? l2_distance(p, q) : hellinger(p, q);
}

inline double distance(Distance kind, const RecommendationDistribution& p, const RecommendationDistribution& q) {
  if (p.items != q.items) throw ArgumentError("distributions have different supports");
  return distance(kind, p.probs, q.probs);
}

namespace detail {

/// Embedding phi with distance(p, q) = |phi(p) - phi(q)|: identity for L2,
/// sqrt(x / 2) for Hellinger. Used for gradients and for the subgradient at
/// the nondifferentiable point p == q.
inline double embed(Distance kind, double x) { return kind == Distance::L2 ? x : std::sqrt(0.5 * std::max(x, 0.0)); }
inline double embed_derivative(Distance kind, double x) {
  return kind == Distance::L2 ? 1.0 : 0.25 / std::sqrt(0.5 * std::max(x, 1e-300));
}

}  // namespace detail

}  // namespace recaudit
