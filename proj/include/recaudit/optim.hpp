#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "recaudit/error.hpp"
#include "recaudit/mf.hpp"

namespace recaudit {

enum class OptimizerKind { GradientAscent, ZerothOrder, ExtremeOracle };

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::GradientAscent: return "gd";
    case OptimizerKind::ZerothOrder: return "zo";
    case OptimizerKind::ExtremeOracle: return "oracle";
  }
  return "?";
}

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "gd") return OptimizerKind::GradientAscent;
  if (s == "zo") return OptimizerKind::ZerothOrder;
  if (s == "oracle") return OptimizerKind::ExtremeOracle;
  throw ArgumentError("unknown optimizer '" + std::string(s) + "' (expected gd|zo|oracle)");
}

inline constexpr double kPastLearningRate = 0.5;
inline constexpr double kFutureLearningRate = 5.0;

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::GradientAscent;
  int epochs = 100;
  /// <= 0 selects the per-metric default (0.5 past, 5.0 future).
  double learning_rate = 0.0;
  double lo = 1.0;
  double hi = 5.0;
  double eps = 1e-3;
  int num_z = 16;
  std::uint64_t seed = 42;
  bool monotone_accept = true;
  /// Scale each step so its largest coordinate moves by lr rating units.
  bool normalize_step = true;

  void validate() const {
    if (epochs < 0) throw ArgumentError("epochs must be >= 0");
    if (!(lo < hi)) throw ArgumentError("optimizer bounds need lo < hi");
    if (!(eps > 0.0)) throw ArgumentError("eps must be > 0");
    if (num_z < 1) throw ArgumentError("num_z must be >= 1");
  }
};

struct OptimizeResult {
  VectorXd params;
  double value = 0.0;
  /// Objective after each epoch (accepted iterate).
  std::vector<double> trace;
  long evaluations = 0;
};

inline VectorXd project_box(VectorXd v, double lo, double hi) {
  for (Index c = 0; c < v.size(); ++c) v[c] = std::min(std::max(v[c], lo), hi);
  return v;
}

/// theta <- clamp(theta + lr * grad), grad divided by its max-abs entry when
/// normalize_step is set. With monotone acceptance a step that lowers f is
/// dropped and lr halved, down to 1e-8 of its initial value.
template <class F, class G>
OptimizeResult projected_gradient_ascent(F&& f, G&& grad, const VectorXd& init, const OptimizerConfig& cfg) {
  cfg.validate();
  OptimizeResult out;
  out.params = project_box(init, cfg.lo, cfg.hi);
  out.value = f(out.params);
  ++out.evaluations;
  if (!std::isfinite(out.value)) throw NumericalError("objective is not finite at the initial point");
  const double lr0 = cfg.learning_rate > 0.0 ? cfg.learning_rate : kPastLearningRate;
  double lr = lr0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const VectorXd g = grad(out.params);
    if (!g.allFinite()) throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch + 1));
    const double scale = cfg.normalize_step ? g.cwiseAbs().maxCoeff() : 1.0;
    if (scale == 0.0) {
      out.trace.push_back(out.value);
      continue;
    }
    VectorXd next = project_box(out.params + (lr / scale) * g, cfg.lo, cfg.hi);
    const double v = f(next);
    ++out.evaluations;
    if (!std::isfinite(v)) throw NumericalError("non-finite objective at epoch " + std::to_string(epoch + 1));
    if (!cfg.monotone_accept || v >= out.value) {
      out.params = std::move(next);
      out.value = v;
    } else {
      lr = std::max(0.5 * lr, 1e-8 * lr0);
    }
    out.trace.push_back(out.value);
  }
  return out;
}

/// Symmetric-difference estimate along Gaussian directions:
/// mean over z of (f(P(theta + eps z)) - f(P(theta - eps z))) / (2 eps) * z,
/// P the projection on [lo, hi].
template <class F, class Rng>
VectorXd zeroth_order_gradient(F&& f, const VectorXd& theta, double eps, int num_z, Rng& rng,
                               double lo = -std::numeric_limits<double>::infinity(),
                               double hi = std::numeric_limits<double>::infinity()) {
  if (!(eps > 0.0)) throw ArgumentError("eps must be > 0");
  if (num_z < 1) throw ArgumentError("num_z must be >= 1");
  std::normal_distribution<double> gauss(0.0, 1.0);
  VectorXd est = VectorXd::Zero(theta.size());
  VectorXd z(theta.size());
  for (int s = 0; s < num_z; ++s) {
    for (Index c = 0; c < z.size(); ++c) z[c] = gauss(rng);
    const double up = f(project_box(theta + eps * z, lo, hi));
    const double down = f(project_box(theta - eps * z, lo, hi));
    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericalError("non-finite objective during perturbation");
    est.noalias() += ((up - down) / (2.0 * eps)) * z;
  }
  return est / num_z;
}

inline constexpr int kMaxOracleDimension = 20;

/// Evaluates every corner of [lo, hi]^k in lexicographic order (lo before
/// hi) and keeps the first maximizer.
template <class F>
OptimizeResult extreme_point_oracle(F&& f, int k, double lo = 1.0, double hi = 5.0) {
  if (k < 0) throw ArgumentError("k must be >= 0");
  if (k > kMaxOracleDimension)
    throw BudgetError("extreme-point oracle needs 2^" + std::to_string(k) + " evaluations; limit is 2^" +
                      std::to_string(kMaxOracleDimension));
  OptimizeResult out;
  out.value = -std::numeric_limits<double>::infinity();
  VectorXd corner(k);
  const std::uint64_t n = std::uint64_t{1} << k;
  for (std::uint64_t mask = 0; mask < n; ++mask) {
    for (int c = 0; c < k; ++c) corner[c] = (mask >> (k - 1 - c)) & 1U ? hi : lo;
    const double v = f(corner);
    ++out.evaluations;
    if (!std::isfinite(v)) throw NumericalError("non-finite objective at a corner");
    if (v > out.value) {
      out.value = v;
      out.params = corner;
    }
  }
  return out;
}

}  // namespace recaudit
