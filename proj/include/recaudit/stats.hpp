#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>

namespace recaudit {

struct MeanCi {
  std::size_t n = 0;
  double mean = 0.0;
  /// Unset when n < 2.
  std::optional<double> std_error;
  std::optional<double> lo;
  std::optional<double> hi;
};

inline constexpr double kZ95 = 1.959963984540054;

/// Sample mean with a normal-approximation 95% interval.
inline MeanCi mean_ci(std::span<const double> xs) {
  MeanCi out;
  out.n = xs.size();
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(out.n);
  if (out.n < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  const double se = std::sqrt(ss / static_cast<double>(out.n - 1) / static_cast<double>(out.n));
  out.std_error = se;
  out.lo = out.mean - kZ95 * se;
  out.hi = out.mean + kZ95 * se;
  return out;
}

inline bool intervals_disjoint(const MeanCi& a, const MeanCi& b) {
  if (!a.lo || !b.lo) return false;
  return *a.hi < *b.lo || *b.hi < *a.lo;
}

}  // namespace recaudit
