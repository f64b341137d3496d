#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "recaudit/blackbox.hpp"
#include "recaudit/metrics.hpp"
#include "recaudit/objective.hpp"
#include "recaudit/optim.hpp"

namespace recaudit {

/// One audit. Ids are external. `item` is the target for reachability;
/// `adversary` the editing user for stability.
struct AuditSpec {
  Metric metric = Metric::PastReach;
  int k = 1;
  UserId user = 0;
  ItemId item = 0;
  UserId adversary = 0;
  double beta = 1.0;
  Distance distance = Distance::Hellinger;
  int num_samples = 1;
  OptimizerConfig optimizer;

  void validate() const {
    if (k < 0 || (is_past(metric) && k < 1)) throw ArgumentError("horizon k must be >= 1");
    if (!(beta > 0.0)) throw ArgumentError("beta must be > 0");
    if (num_samples < 1) throw ArgumentError("num_samples must be >= 1");
    if (!is_reachability(metric) && user == adversary) throw PreconditionError("target user and adversary must differ");
    optimizer.validate();
  }
};

struct AuditResult {
  /// Unintervened value: baseline reachability, or 0 for stability.
  double baseline = 0.0;
  double optimized = 0.0;
  /// optimized / baseline for reachability; NaN for stability.
  double lift = std::numeric_limits<double>::quiet_NaN();
  RatingParams params;
  std::vector<double> trace;
  // metadata
  std::uint64_t seed = 0;
  double beta = 0.0;
  int k = 0;
  std::string optimizer;
  int epochs = 0;
  double learning_rate = 0.0;
  long evaluations = 0;
  double wall_ms = 0.0;

  /// The number reported per audit: lift or instability.
  double headline() const { return std::isnan(lift) ? optimized : lift; }
};

namespace detail {

inline std::vector<HistoryEntry> edited_window(const AuditContext& ctx, Index who, int k) {
  if (!ctx.split) throw PreconditionError("past metrics need a model trained on a holdout split");
  auto tail = ctx.heldout(who);
  if (tail.size() != static_cast<std::size_t>(k))
    throw PreconditionError("user " + std::to_string(ctx.index().user_id(who)) + " has no held-out window of length " +
                            std::to_string(k));
  return {tail.begin(), tail.end()};
}

inline std::vector<RatingEdit> as_edits(const AuditContext& ctx, UserId who, const std::vector<HistoryEntry>& window) {
  std::vector<RatingEdit> out;
  for (const auto& e : window) out.push_back({who, ctx.index().item_id(e.item), e.rating});
  return out;
}

}  // namespace detail

/// Builds the objective for `spec`, maximizes it with the configured
/// optimizer and reports baseline, optimum and lift. Reachability is
/// ascended in log space; trace entries are on the probability scale.
/// Zeroth-order runs query `adapter` (an MfAdapter over `ctx` if null).
inline AuditResult run_audit(const AuditSpec& spec, const AuditContext& ctx,
                             const RecommenderAdapter* adapter = nullptr) {
  spec.validate();
  const auto started = std::chrono::steady_clock::now();
  const IdIndex& idx = ctx.index();
  const Index user = idx.user_index(spec.user);
  const bool reach = is_reachability(spec.metric);
  const bool past = is_past(spec.metric);

  std::vector<HistoryEntry> window;
  if (past) window = detail::edited_window(ctx, reach ? user : idx.user_index(spec.adversary), spec.k);

  std::unique_ptr<Objective> white;
  switch (spec.metric) {
    case Metric::PastReach:
      white = std::make_unique<PastReachability>(ctx, user, idx.item_index(spec.item), window, spec.beta);
      break;
    case Metric::FutureReach:
      white = std::make_unique<FutureReachability>(ctx, user, idx.item_index(spec.item), spec.k, spec.beta,
                                                   spec.num_samples);
      break;
    case Metric::PastStab:
      white = std::make_unique<PastStability>(ctx, user, idx.user_index(spec.adversary), window, spec.beta,
                                              spec.distance);
      break;
    case Metric::FutureStab:
      white = std::make_unique<FutureStability>(ctx, user, idx.user_index(spec.adversary), spec.k, spec.beta,
                                                spec.distance, spec.num_samples);
      break;
  }

  std::unique_ptr<MfAdapter> own_adapter;
  std::unique_ptr<BlackBoxObjective> black;
  if (spec.optimizer.kind == OptimizerKind::ZerothOrder) {
    if (!adapter) {
      own_adapter = std::make_unique<MfAdapter>(ctx);
      adapter = own_adapter.get();
    }
    const auto edits = detail::as_edits(ctx, reach ? spec.user : spec.adversary, window);
    switch (spec.metric) {
      case Metric::PastReach:
        black = std::make_unique<BlackBoxObjective>(
            BlackBoxObjective::past_reach(*adapter, idx, spec.user, spec.item, edits, spec.beta));
        break;
      case Metric::FutureReach:
        black = std::make_unique<BlackBoxObjective>(
            BlackBoxObjective::future_reach(*adapter, idx, spec.user, spec.item, spec.k, spec.beta));
        break;
      case Metric::PastStab:
        black = std::make_unique<BlackBoxObjective>(
            BlackBoxObjective::past_stab(*adapter, idx, spec.user, spec.adversary, edits, spec.beta, spec.distance));
        break;
      case Metric::FutureStab:
        black = std::make_unique<BlackBoxObjective>(BlackBoxObjective::future_stab(
            *adapter, idx, spec.user, spec.adversary, spec.k, spec.beta, spec.distance));
        break;
    }
  }
  const Objective& objective = black ? static_cast<const Objective&>(*black) : *white;

  std::mt19937_64 rng(spec.optimizer.seed);
  VectorXd init(objective.dimension());
  if (past) {
    for (std::size_t c = 0; c < window.size(); ++c) init[static_cast<Index>(c)] = window[c].rating;
  } else {
    std::uniform_real_distribution<double> unif(spec.optimizer.lo, spec.optimizer.hi);
    for (Index c = 0; c < init.size(); ++c) init[c] = unif(rng);
  }

  AuditResult result;
  result.seed = spec.optimizer.seed;
  result.beta = spec.beta;
  result.k = spec.k;
  result.optimizer = to_string(spec.optimizer.kind);
  if (reach)
    result.baseline = past ? white->value(init) : baseline_reachability(ctx, user, idx.item_index(spec.item), spec.beta);

  auto f = [&](const VectorXd& t) { return reach ? objective.log_value(t) : objective.value(t); };
  auto to_scale = [&](double v) { return reach ? std::exp(v) : v; };

  OptimizeResult opt;
  OptimizerConfig cfg = spec.optimizer;
  if (!(cfg.learning_rate > 0.0)) cfg.learning_rate = past ? kPastLearningRate : kFutureLearningRate;
  switch (cfg.kind) {
    case OptimizerKind::GradientAscent: {
      auto grad = [&](const VectorXd& t) {
        return reach ? VectorXd(objective.log_gradient(t)) : analytic_gradient(objective, t);
      };
      if (!objective.white_box()) throw UnsupportedError("gradient ascent needs white-box access");
      opt = projected_gradient_ascent(f, grad, init, cfg);
      result.epochs = cfg.epochs;
      break;
    }
    case OptimizerKind::ZerothOrder: {
      auto grad = [&](const VectorXd& t) {
        return zeroth_order_gradient(f, t, cfg.eps, cfg.num_z, rng, cfg.lo, cfg.hi);
      };
      opt = projected_gradient_ascent(f, grad, init, cfg);
      opt.evaluations += static_cast<long>(cfg.epochs) * 2 * cfg.num_z;
      result.epochs = cfg.epochs;
      break;
    }
    case OptimizerKind::ExtremeOracle:
      opt = extreme_point_oracle(f, static_cast<int>(objective.dimension()), cfg.lo, cfg.hi);
      break;
  }
  result.learning_rate = cfg.kind == OptimizerKind::ExtremeOracle ? 0.0 : cfg.learning_rate;
  result.optimized = to_scale(opt.value);
  for (double v : opt.trace) result.trace.push_back(to_scale(v));
  result.evaluations = opt.evaluations;
  result.params = past ? RatingParams::past(opt.params) : RatingParams::future(spec.k, ctx.n_items(), opt.params);
  if (reach && result.baseline > 0.0) result.lift = result.optimized / result.baseline;
  result.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace recaudit
