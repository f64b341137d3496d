#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include "recaudit/audit.hpp"
#include "recaudit/dataset.hpp"
#include "recaudit/mf.hpp"
#include "recaudit/stats.hpp"

namespace recaudit {

enum class Experiment { ReachSweep, StabSweep, BetaSweep, OptimizerCompare, GroupReach, GroupStab };

inline std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::ReachSweep: return "reach-sweep";
    case Experiment::StabSweep: return "stab-sweep";
    case Experiment::BetaSweep: return "beta-sweep";
    case Experiment::OptimizerCompare: return "optimizer-compare";
    case Experiment::GroupReach: return "group-reach";
    case Experiment::GroupStab: return "group-stab";
  }
  return "?";
}

inline Experiment parse_experiment(std::string_view s) {
  for (auto e : {Experiment::ReachSweep, Experiment::StabSweep, Experiment::BetaSweep, Experiment::OptimizerCompare,
                 Experiment::GroupReach, Experiment::GroupStab})
    if (s == to_string(e)) return e;
  throw ArgumentError("unknown experiment '" + std::string(s) + "'");
}

inline const std::vector<double>& default_beta_grid() {
  static const std::vector<double> grid{0.2, 0.5, 0.8, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  return grid;
}

struct ExperimentConfig {
  Experiment experiment = Experiment::ReachSweep;
  Metric metric = Metric::FutureReach;
  std::vector<int> ks{5};
  std::vector<double> betas{1.0};
  double user_frac = 0.1;
  double item_frac = 0.1;
  OptimizerConfig optimizer;
  /// Optimizers run by optimizer-compare; the oracle is used only where the
  /// parameter space is small enough (past stability).
  std::vector<OptimizerKind> compare{OptimizerKind::GradientAscent, OptimizerKind::ZerothOrder,
                                     OptimizerKind::ExtremeOracle};
  Distance distance = Distance::Hellinger;
  std::uint64_t seed = 42;
  MfConfig mf{16, 0.05, 15, 42};
  int num_samples = 1;
  /// Cap on audited pairs per (k, beta, group); 0 keeps all.
  std::size_t max_pairs = 0;
  int group_size = 30;
  /// 1-based popularity/activity rank band for intermediate groups.
  int band_first = 200;
  int band_last = 300;
  int threads = 1;
  bool wall_time = false;

  void validate() const {
    if (!(user_frac > 0.0 && user_frac <= 1.0)) throw ArgumentError("user_frac must be in (0, 1]");
    if (!(item_frac > 0.0 && item_frac <= 1.0)) throw ArgumentError("item_frac must be in (0, 1]");
    if (ks.empty()) throw ArgumentError("k list must be non-empty");
    if (betas.empty()) throw ArgumentError("beta list must be non-empty");
    for (int k : ks)
      if (k < 1) throw ArgumentError("every k must be >= 1");
    for (double b : betas)
      if (!(b > 0.0)) throw ArgumentError("every beta must be > 0");
    if (threads < 1) throw ArgumentError("threads must be >= 1");
    if (group_size < 1 || band_first < 1 || band_last < band_first) throw ArgumentError("bad group settings");
    if (num_samples < 1) throw ArgumentError("num_samples must be >= 1");
    optimizer.validate();
    mf.validate();
    const bool reach = is_reachability(metric);
    if ((experiment == Experiment::ReachSweep || experiment == Experiment::GroupReach) && !reach)
      throw ArgumentError(to_string(experiment) + " needs a reachability metric");
    if ((experiment == Experiment::StabSweep || experiment == Experiment::GroupStab) && reach)
      throw ArgumentError(to_string(experiment) + " needs a stability metric");
  }
};

struct ResultRow {
  std::string experiment;
  Metric metric = Metric::PastReach;
  int k = 0;
  double beta = 0.0;
  UserId user = 0;
  std::int64_t counterpart = 0;
  double baseline = 0.0;
  double optimized = 0.0;
  double lift_or_instability = 0.0;
  int epochs = 0;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;
};

struct ExperimentOutput {
  std::vector<ResultRow> rows;
  /// One line per skipped pair, in pair order.
  std::vector<std::string> skips;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of the `n`-th audit of a run with master seed `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t n) { return splitmix64(master ^ splitmix64(n)); }

/// round(frac * |ids|) (at least 1) ids drawn without replacement, ascending.
template <class Id>
std::vector<Id> sample_fraction(std::vector<Id> ids, double frac, std::mt19937_64& rng) {
  if (ids.empty()) return ids;
  const auto n = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(frac * static_cast<double>(ids.size()))),
                                         1, ids.size());
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(n);
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Keeps `n_users` random users (0 keeps all), then drops items with fewer
/// than `min_item_ratings` ratings.
inline Dataset subsample_dataset(const Dataset& ds, std::size_t n_users, std::size_t min_item_ratings,
                                 std::uint64_t seed) {
  std::set<UserId> keep;
  {
    std::vector<UserId> users;
    for (Index u = 0; u < ds.index().n_users(); ++u)
      if (!ds.history(u).empty()) users.push_back(ds.index().user_id(u));
    if (n_users > 0 && n_users < users.size()) {
      std::mt19937_64 rng(seed);
      std::shuffle(users.begin(), users.end(), rng);
      users.resize(n_users);
    }
    keep.insert(users.begin(), users.end());
  }
  std::map<ItemId, std::size_t> counts;
  for (const auto& x : ds.interactions())
    if (keep.count(x.user_id)) ++counts[x.item_id];
  std::vector<Interaction> out;
  for (const auto& x : ds.interactions())
    if (keep.count(x.user_id) && counts[x.item_id] >= std::max<std::size_t>(min_item_ratings, 1)) out.push_back(x);
  if (out.empty()) throw PreconditionError("subsampling removed every rating");
  return Dataset::from_interactions(std::move(out));
}

namespace detail {

/// Models needed by a run: the full-data model for future metrics and one
/// leave-last-k model per past horizon.
class ModelBank {
 public:
  ModelBank(const Dataset& data, MfConfig cfg) : data_(data), cfg_(cfg) {}

  const AuditContext& context(Metric m, int k) {
    const int key = is_past(m) ? k : 0;
    auto it = slots_.find(key);
    if (it != slots_.end()) return *it->second->ctx;
    auto slot = std::make_unique<Slot>();
    if (key == 0) {
      slot->model = train_mf(data_, cfg_);
      slot->ctx = std::make_unique<AuditContext>(slot->model, data_);
    } else {
      slot->split = std::make_unique<HoldoutSplit>(holdout_split(data_, key));
      slot->model = train_mf(slot->split->train, cfg_);
      slot->ctx = std::make_unique<AuditContext>(slot->model, slot->split->train, slot->split.get());
    }
    return *slots_.emplace(key, std::move(slot)).first->second->ctx;
  }

 private:
  struct Slot {
    std::unique_ptr<HoldoutSplit> split;
    MfModel model;
    std::unique_ptr<AuditContext> ctx;
  };
  const Dataset& data_;
  MfConfig cfg_;
  std::map<int, std::unique_ptr<Slot>> slots_;
};

struct Task {
  std::string experiment;
  Metric metric;
  int k;
  double beta;
  UserId user;
  std::int64_t counterpart;
  OptimizerKind optimizer;
};

inline std::vector<std::pair<UserId, std::int64_t>> cap_pairs(std::vector<std::pair<UserId, std::int64_t>> pairs,
                                                              std::size_t cap, std::mt19937_64& rng) {
  if (cap == 0 || pairs.size() <= cap) return pairs;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(cap);
  std::sort(order.begin(), order.end());
  std::vector<std::pair<UserId, std::int64_t>> out;
  for (auto o : order) out.push_back(pairs[o]);
  return out;
}

inline std::vector<std::pair<UserId, std::int64_t>> cross(const std::vector<UserId>& a,
                                                          const std::vector<std::int64_t>& b) {
  std::vector<std::pair<UserId, std::int64_t>> out;
  for (auto x : a)
    for (auto y : b)
      out.emplace_back(x, y);
  return out;
}

template <class Id>
std::vector<Id> rank_band(const std::vector<Id>& ranked, int first, int last, std::size_t n, std::mt19937_64& rng) {
  if (ranked.size() < static_cast<std::size_t>(first))
    throw PreconditionError("dataset has fewer than " + std::to_string(first) + " ranked entries for the rank band");
  std::vector<Id> band(ranked.begin() + (first - 1),
                       ranked.begin() + std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(last)));
  std::shuffle(band.begin(), band.end(), rng);
  if (band.size() > n) band.resize(n);
  std::sort(band.begin(), band.end());
  return band;
}

}  // namespace detail

/// Runs the configured experiment over `data`. Rows come back in task order
/// whatever the thread count.
inline ExperimentOutput run_experiment(const Dataset& data, const ExperimentConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const bool reach = is_reachability(cfg.metric);
  const std::string name = to_string(cfg.experiment);

  using Pairs = std::vector<std::pair<UserId, std::int64_t>>;
  std::vector<std::pair<std::string, Pairs>> groups;  // experiment id -> pairs
  std::vector<UserId> all_users;
  for (Index u = 0; u < data.index().n_users(); ++u)
    if (!data.history(u).empty()) all_users.push_back(data.index().user_id(u));
  std::vector<ItemId> all_items;
  for (Index i = 0; i < data.index().n_items(); ++i)
    if (!data.raters(i).empty()) all_items.push_back(data.index().item_id(i));

  auto sweep_pairs = [&]() -> Pairs {
    if (reach) {
      auto users = sample_fraction(all_users, cfg.user_frac, rng);
      auto items = sample_fraction(all_items, cfg.item_frac, rng);
      return detail::cap_pairs(detail::cross(users, std::vector<std::int64_t>(items.begin(), items.end())),
                               cfg.max_pairs, rng);
    }
    auto users = sample_fraction(all_users, cfg.user_frac, rng);
    if (users.size() < 2) throw PreconditionError("stability sweeps need at least two sampled users");
    std::shuffle(users.begin(), users.end(), rng);
    std::vector<UserId> targets(users.begin(), users.begin() + static_cast<std::ptrdiff_t>(users.size() / 2));
    std::vector<std::int64_t> adversaries(users.begin() + static_cast<std::ptrdiff_t>(users.size() / 2), users.end());
    std::sort(targets.begin(), targets.end());
    std::sort(adversaries.begin(), adversaries.end());
    return detail::cap_pairs(detail::cross(targets, adversaries), cfg.max_pairs, rng);
  };

  switch (cfg.experiment) {
    case Experiment::ReachSweep:
    case Experiment::StabSweep:
    case Experiment::BetaSweep:
    case Experiment::OptimizerCompare:
      groups.emplace_back(name, sweep_pairs());
      break;
    case Experiment::GroupReach: {
      const auto ranked = popularity_rank(data);
      const auto gs = static_cast<std::size_t>(cfg.group_size);
      std::vector<std::int64_t> popular(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(std::min(gs, ranked.size())));
      std::sort(popular.begin(), popular.end());
      const auto band = detail::rank_band(ranked, cfg.band_first, cfg.band_last, gs, rng);
      const auto users = sample_fraction(all_users, cfg.user_frac, rng);
      groups.emplace_back(name + "/popular", detail::cap_pairs(detail::cross(users, popular), cfg.max_pairs, rng));
      groups.emplace_back(name + "/intermediate",
                          detail::cap_pairs(detail::cross(users, {band.begin(), band.end()}), cfg.max_pairs, rng));
      break;
    }
    case Experiment::GroupStab: {
      const auto ranked = activity_rank(data);
      const auto gs = static_cast<std::size_t>(cfg.group_size);
      std::vector<std::int64_t> active(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(std::min(gs, ranked.size())));
      std::sort(active.begin(), active.end());
      const auto band = detail::rank_band(ranked, cfg.band_first, cfg.band_last, gs, rng);
      std::set<UserId> taken(active.begin(), active.end());
      taken.insert(band.begin(), band.end());
      std::vector<UserId> rest;
      for (auto u : all_users)
        if (!taken.count(u)) rest.push_back(u);
      const auto targets = sample_fraction(rest, cfg.user_frac, rng);
      groups.emplace_back(name + "/active", detail::cap_pairs(detail::cross(targets, active), cfg.max_pairs, rng));
      groups.emplace_back(name + "/intermediate",
                          detail::cap_pairs(detail::cross(targets, {band.begin(), band.end()}), cfg.max_pairs, rng));
      break;
    }
  }

  std::vector<OptimizerKind> optimizers{cfg.optimizer.kind};
  if (cfg.experiment == Experiment::OptimizerCompare) {
    optimizers.clear();
    for (auto o : cfg.compare)
      if (o != OptimizerKind::ExtremeOracle || cfg.metric == Metric::PastStab) optimizers.push_back(o);
  }

  std::vector<detail::Task> tasks;
  for (const auto& [id, pairs] : groups)
    for (int k : cfg.ks)
      for (double beta : cfg.betas)
        for (auto opt : optimizers)
          for (const auto& [u, c] : pairs)
            tasks.push_back({cfg.experiment == Experiment::OptimizerCompare ? id + "/" + to_string(opt) : id,
                             cfg.metric, k, beta, u, c, opt});

  detail::ModelBank bank(data, cfg.mf);
  for (int k : cfg.ks) bank.context(cfg.metric, k);

  struct Outcome {
    bool done = false;
    ResultRow row;
    std::string skip;
    std::exception_ptr error;
  };
  std::vector<Outcome> outcomes(tasks.size());

  auto run_one = [&](std::size_t n) {
    const auto& t = tasks[n];
    Outcome& out = outcomes[n];
    const AuditContext& ctx = bank.context(t.metric, t.k);
    AuditSpec spec;
    spec.metric = t.metric;
    spec.k = t.k;
    spec.beta = t.beta;
    spec.user = t.user;
    if (reach)
      spec.item = t.counterpart;
    else
      spec.adversary = t.counterpart;
    spec.distance = cfg.distance;
    spec.num_samples = cfg.num_samples;
    spec.optimizer = cfg.optimizer;
    spec.optimizer.kind = t.optimizer;
    spec.optimizer.seed = derive_seed(cfg.seed, n);
    auto skip = [&](const std::string& why) {
      out.skip = t.experiment + " " + to_string(t.metric) + " k=" + std::to_string(t.k) + " user=" +
                 std::to_string(t.user) + " counterpart=" + std::to_string(t.counterpart) + ": " + why;
    };
    try {
      const Index u = ctx.index().user_index(t.user);
      if (reach && ctx.rated_mask(u)[static_cast<std::size_t>(ctx.index().item_index(t.counterpart))]) {
        skip("target item already rated");
        return;
      }
      const auto r = run_audit(spec, ctx);
      out.row = {t.experiment, t.metric, t.k, t.beta, t.user, t.counterpart, r.baseline, r.optimized, r.headline(),
                 r.epochs, spec.optimizer.seed, cfg.wall_time ? r.wall_ms : 0.0};
      out.done = true;
    } catch (const PreconditionError& e) {
      skip(e.what());
    } catch (const EmptyCandidateError& e) {
      skip(e.what());
    } catch (...) {
      out.error = std::current_exception();
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t n = next++; n < tasks.size(); n = next++) run_one(n);
  };
  if (cfg.threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < cfg.threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExperimentOutput result;
  for (auto& o : outcomes) {
    if (o.error) std::rethrow_exception(o.error);
    if (o.done)
      result.rows.push_back(std::move(o.row));
    else
      result.skips.push_back(std::move(o.skip));
  }
  return result;
}

inline ExperimentOutput run_reach_sweep(const Dataset& d, ExperimentConfig c) {
  c.experiment = Experiment::ReachSweep;
  return run_experiment(d, c);
}
inline ExperimentOutput run_stab_sweep(const Dataset& d, ExperimentConfig c) {
  c.experiment = Experiment::StabSweep;
  return run_experiment(d, c);
}
inline ExperimentOutput run_beta_sweep(const Dataset& d, ExperimentConfig c) {
  c.experiment = Experiment::BetaSweep;
  return run_experiment(d, c);
}
inline ExperimentOutput run_optimizer_compare(const Dataset& d, ExperimentConfig c) {
  c.experiment = Experiment::OptimizerCompare;
  return run_experiment(d, c);
}
inline ExperimentOutput run_group_experiment(const Dataset& d, ExperimentConfig c) {
  if (c.experiment != Experiment::GroupStab) c.experiment = Experiment::GroupReach;
  return run_experiment(d, c);
}

// --- reports ---------------------------------------------------------------

inline constexpr const char* kCsvHeader =
    "experiment,metric,k,beta,user,counterpart,baseline,optimized,lift_or_instability,epochs,seed,wall_ms";
inline constexpr const char* kSummaryHeader = "experiment,metric,k,beta,group,n,mean,stderr,ci_lo,ci_hi";

namespace detail {
inline std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
}  // namespace detail

inline void emit_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.experiment << ',' << to_string(r.metric) << ',' << r.k << ',' << detail::fmt_real(r.beta) << ','
        << r.user << ',' << r.counterpart << ',' << detail::fmt_real(r.baseline) << ','
        << detail::fmt_real(r.optimized) << ',' << detail::fmt_real(r.lift_or_instability) << ',' << r.epochs << ','
        << r.seed << ',';
    if (r.wall_ms == 0.0) {
      out << 0;
    } else {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", r.wall_ms);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw PreconditionError("failed writing CSV output");
}

inline void emit_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot open '" + path + "' for writing");
  emit_csv(rows, out);
}

struct SummaryRow {
  std::string experiment;
  std::string group;
  Metric metric = Metric::PastReach;
  int k = 0;
  double beta = 0.0;
  MeanCi stats;
};

/// Mean and 95% CI of lift_or_instability per (experiment, group, metric,
/// k, beta), in order of first appearance. "a/b" experiment ids split into
/// experiment a and group b.
inline std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  using Key = std::tuple<std::string, Metric, int, double>;
  std::vector<Key> order;
  std::map<Key, std::vector<double>> values;
  for (const auto& r : rows) {
    Key key{r.experiment, r.metric, r.k, r.beta};
    auto [it, fresh] = values.try_emplace(key);
    if (fresh) order.push_back(key);
    it->second.push_back(r.lift_or_instability);
  }
  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    SummaryRow s;
    const auto& id = std::get<0>(key);
    const auto slash = id.find('/');
    s.experiment = id.substr(0, slash);
    s.group = slash == std::string::npos ? "" : id.substr(slash + 1);
    s.metric = std::get<1>(key);
    s.k = std::get<2>(key);
    s.beta = std::get<3>(key);
    s.stats = mean_ci(values[key]);
    out.push_back(std::move(s));
  }
  return out;
}

inline void emit_summary(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << kSummaryHeader << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? detail::fmt_real(*v) : std::string(); };
  for (const auto& s : summarize(rows)) {
    out << s.experiment << ',' << to_string(s.metric) << ',' << s.k << ',' << detail::fmt_real(s.beta) << ','
        << s.group << ',' << s.stats.n << ',' << detail::fmt_real(s.stats.mean) << ',' << opt(s.stats.std_error)
        << ',' << opt(s.stats.lo) << ',' << opt(s.stats.hi) << '\n';
  }
  if (!out) throw PreconditionError("failed writing summary output");
}

inline void emit_summary(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot open '" + path + "' for writing");
  emit_summary(rows, out);
}

}  // namespace recaudit
