// recaudit: command-line front end for the audit experiments.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "recaudit.hpp"

namespace {

using namespace recaudit;

enum Exit { kOk = 0, kConfig = 1, kData = 2, kNumerical = 3 };

int exit_code(ErrorClass c) {
  switch (c) {
    case ErrorClass::Config: return kConfig;
    case ErrorClass::Data: return kData;
    case ErrorClass::Numerical: return kNumerical;
  }
  return kConfig;
}

struct Flags {
  std::string data;
  std::string metric;
  std::vector<int> ks;
  std::vector<double> betas;
  std::string optimizer = "gd";
  std::string distance = "hellinger";
  int epochs = 100;
  double lr = 0.0;
  double eps = 1e-3;
  int num_z = 16;
  double user_frac = 0.1;
  double item_frac = 0.1;
  std::uint64_t seed = 42;
  std::string out;
  int dim = 16;
  double reg = 0.05;
  int train_epochs = 15;
  int num_samples = 1;
  std::size_t subsample_users = 0;
  std::size_t min_item_ratings = 0;
  std::size_t max_pairs = 0;
  int group_size = 30;
  int threads = 1;
  bool wall_time = false;
  bool raw_step = false;
  // synth
  int synth_users = 1000;
  int synth_items = 600;
};

Metric default_metric(Experiment e) {
  switch (e) {
    case Experiment::ReachSweep: return Metric::PastReach;
    case Experiment::GroupReach: return Metric::FutureReach;
    case Experiment::GroupStab: return Metric::FutureStab;
    default: return Metric::PastStab;
  }
}

Dataset load(const Flags& f) {
  if (f.data.empty()) throw ArgumentError("--data is required");
  Dataset ds = load_movielens(f.data);
  if (f.subsample_users > 0 || f.min_item_ratings > 0)
    ds = subsample_dataset(ds, f.subsample_users, f.min_item_ratings, f.seed);
  return ds;
}

void write_metadata(const ExperimentConfig& cfg, const Flags& f, const ExperimentOutput& out, std::ostream& os) {
  nlohmann::ordered_json j;
  j["experiment"] = to_string(cfg.experiment);
  j["metric"] = to_string(cfg.metric);
  j["data"] = f.data;
  j["k"] = cfg.ks;
  j["beta"] = cfg.betas;
  j["optimizer"] = {{"kind", to_string(cfg.optimizer.kind)},
                    {"epochs", cfg.optimizer.epochs},
                    {"learning_rate", cfg.optimizer.learning_rate},
                    {"eps", cfg.optimizer.eps},
                    {"num_z", cfg.optimizer.num_z},
                    {"monotone_accept", cfg.optimizer.monotone_accept},
                    {"normalize_step", cfg.optimizer.normalize_step}};
  j["distance"] = to_string(cfg.distance);
  j["mf"] = {{"dim", cfg.mf.dim}, {"reg", cfg.mf.reg}, {"epochs", cfg.mf.epochs}, {"seed", cfg.mf.seed}};
  j["user_frac"] = cfg.user_frac;
  j["item_frac"] = cfg.item_frac;
  j["seed"] = cfg.seed;
  j["num_samples"] = cfg.num_samples;
  j["max_pairs"] = cfg.max_pairs;
  j["subsample_users"] = f.subsample_users;
  j["min_item_ratings"] = f.min_item_ratings;
  j["rows"] = out.rows.size();
  j["skipped"] = out.skips.size();
  os << j.dump(2) << '\n';
}

int run_experiment_command(Experiment e, const Flags& f) {
  ExperimentConfig cfg;
  cfg.experiment = e;
  cfg.metric = f.metric.empty() ? default_metric(e) : parse_metric(f.metric);
  if (!f.ks.empty()) cfg.ks = f.ks;
  if (!f.betas.empty())
    cfg.betas = f.betas;
  else if (e == Experiment::BetaSweep)
    cfg.betas = default_beta_grid();
  cfg.user_frac = f.user_frac;
  cfg.item_frac = f.item_frac;
  cfg.optimizer.kind = parse_optimizer(f.optimizer);
  cfg.optimizer.epochs = f.epochs;
  cfg.optimizer.learning_rate = f.lr;
  cfg.optimizer.eps = f.eps;
  cfg.optimizer.num_z = f.num_z;
  cfg.optimizer.normalize_step = !f.raw_step;
  cfg.distance = parse_distance(f.distance);
  cfg.seed = f.seed;
  cfg.mf = MfConfig{f.dim, f.reg, f.train_epochs, f.seed};
  cfg.num_samples = f.num_samples;
  cfg.max_pairs = f.max_pairs;
  cfg.group_size = f.group_size;
  cfg.threads = f.threads;
  cfg.wall_time = f.wall_time;
  cfg.validate();

  const Dataset ds = load(f);
  const auto out = run_experiment(ds, cfg);
  for (const auto& s : out.skips) std::cerr << "skip: " << s << '\n';

  if (f.out.empty()) {
    emit_csv(out.rows, std::cout);
    return kOk;
  }
  std::filesystem::create_directories(f.out);
  const std::filesystem::path dir(f.out);
  emit_csv(out.rows, (dir / "results.csv").string());
  emit_summary(out.rows, (dir / "summary.csv").string());
  std::ofstream meta(dir / "run.json");
  write_metadata(cfg, f, out, meta);
  std::cerr << out.rows.size() << " rows, " << out.skips.size() << " skipped -> " << dir.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit user agency (reachability and stability) of a matrix-factorization recommender"};
  app.set_config("--config", "", "Flat key = value file mirroring the flags; flags override it");
  app.require_subcommand(1);
  app.fallthrough();

  Flags f;
  app.add_option("--data", f.data, "MovieLens-format ratings file (UserID::MovieID::Rating::Timestamp)");
  app.add_option("--metric", f.metric, "past-reach | future-reach | past-stab | future-stab");
  app.add_option("--k", f.ks, "Horizon list, comma separated")->delimiter(',');
  app.add_option("--beta", f.betas, "Softmax beta list, comma separated")->delimiter(',');
  app.add_option("--optimizer", f.optimizer, "gd | zo | oracle")->capture_default_str();
  app.add_option("--distance", f.distance, "l2 | hellinger")->capture_default_str();
  app.add_option("--epochs", f.epochs, "Optimizer epochs")->capture_default_str();
  app.add_option("--lr", f.lr, "Learning rate (0 = 0.5 past, 5.0 future)")->capture_default_str();
  app.add_option("--eps", f.eps, "Zeroth-order perturbation scale")->capture_default_str();
  app.add_option("--num-z", f.num_z, "Zeroth-order directions per step")->capture_default_str();
  app.add_option("--user-frac", f.user_frac, "Fraction of users sampled")->capture_default_str();
  app.add_option("--item-frac", f.item_frac, "Fraction of items sampled")->capture_default_str();
  app.add_option("--seed", f.seed, "Master seed")->capture_default_str();
  app.add_option("--out", f.out, "Output directory (CSV to stdout when omitted)");
  app.add_option("--dim", f.dim, "Latent dimension of the trained model")->capture_default_str();
  app.add_option("--reg", f.reg, "Training regularization weight")->capture_default_str();
  app.add_option("--train-epochs", f.train_epochs, "Training epochs")->capture_default_str();
  app.add_option("--num-samples", f.num_samples, "Rollouts averaged by future metrics")->capture_default_str();
  app.add_option("--subsample-users", f.subsample_users, "Keep this many random users (0 = all)");
  app.add_option("--min-item-ratings", f.min_item_ratings, "Drop items with fewer ratings after subsampling");
  app.add_option("--max-pairs", f.max_pairs, "Cap on audited pairs per group (0 = all)");
  app.add_option("--group-size", f.group_size, "Size of group A and B in group experiments")->capture_default_str();
  app.add_option("--threads", f.threads, "Worker threads")->capture_default_str();
  app.add_flag("--raw-step", f.raw_step, "Use the unnormalized gradient step lr * g");
  app.add_flag("--wall-time", f.wall_time, "Record wall time per audit (output no longer byte-stable)");

  std::vector<std::pair<CLI::App*, Experiment>> experiments;
  for (auto e : {Experiment::ReachSweep, Experiment::StabSweep, Experiment::BetaSweep, Experiment::OptimizerCompare,
                 Experiment::GroupReach, Experiment::GroupStab})
    experiments.emplace_back(app.add_subcommand(to_string(e), "Run the " + to_string(e) + " experiment"), e);
  auto* stats = app.add_subcommand("stats", "Print dataset statistics");
  auto* synth = app.add_subcommand("synth", "Write a synthetic MovieLens-shaped ratings file to --out");
  synth->add_option("--users", f.synth_users, "Number of users")->capture_default_str();
  synth->add_option("--items", f.synth_items, "Number of items")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    for (auto& [sub, e] : experiments)
      if (sub->parsed()) return run_experiment_command(e, f);
    if (stats->parsed()) {
      const auto s = summary_stats(load(f));
      std::printf("users %td\nitems %td\nratings %zu\ndensity_percent %.4f\n", s.n_users, s.n_items, s.n_ratings,
                  s.density_percent);
      return kOk;
    }
    if (synth->parsed()) {
      if (f.out.empty()) throw ArgumentError("synth needs --out <file>");
      SynthConfig sc;
      sc.n_users = f.synth_users;
      sc.n_items = f.synth_items;
      sc.seed = f.seed;
      std::ofstream os(f.out, std::ios::binary);
      if (!os) throw PreconditionError("cannot open '" + f.out + "' for writing");
      write_movielens(synthesize_movielens(sc), os);
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kConfig;
}
