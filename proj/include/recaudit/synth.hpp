#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "recaudit/dataset.hpp"
#include "recaudit/error.hpp"

namespace recaudit {

/// Parameters of a MovieLens-shaped synthetic log: Zipf item popularity,
/// long-tailed user activity with a floor, integer 1..5 ratings from a
/// planted low-rank model plus biases and noise.
struct SynthConfig {
  int n_users = 1000;
  int n_items = 600;
  int rank = 8;
  int min_ratings = 20;
  double mean_extra_ratings = 25.0;
  int max_ratings = 300;
  double zipf_exponent = 0.9;
  double global_mean = 3.6;
  double user_bias_sd = 0.4;
  double item_bias_sd = 0.4;
  double interaction_sd = 0.9;
  double noise_sd = 0.6;
  std::uint64_t seed = 7;

  void validate() const {
    if (n_users < 1 || n_items < 2 || rank < 1) throw ArgumentError("synthetic sizes must be positive");
    if (min_ratings < 1 || min_ratings > n_items) throw ArgumentError("min_ratings must lie in [1, n_items]");
    if (max_ratings < min_ratings) throw ArgumentError("max_ratings must be >= min_ratings");
  }
};

inline Dataset synthesize_movielens(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // popularity rank -> item id is a random permutation
  std::vector<ItemId> item_of_rank(static_cast<std::size_t>(cfg.n_items));
  std::iota(item_of_rank.begin(), item_of_rank.end(), ItemId{1});
  std::shuffle(item_of_rank.begin(), item_of_rank.end(), rng);
  std::vector<double> weight(static_cast<std::size_t>(cfg.n_items));
  for (int r = 0; r < cfg.n_items; ++r) weight[static_cast<std::size_t>(r)] = std::pow(r + 1.0, -cfg.zipf_exponent);

  const double latent_sd = std::pow(cfg.interaction_sd * cfg.interaction_sd / cfg.rank, 0.25);
  auto latent = [&] {
    std::vector<double> v(static_cast<std::size_t>(cfg.rank));
    for (auto& x : v) x = latent_sd * gauss(rng);
    return v;
  };
  std::vector<std::vector<double>> item_vec(static_cast<std::size_t>(cfg.n_items));
  std::vector<double> item_bias(static_cast<std::size_t>(cfg.n_items));
  for (int r = 0; r < cfg.n_items; ++r) {
    item_vec[static_cast<std::size_t>(r)] = latent();
    item_bias[static_cast<std::size_t>(r)] = cfg.item_bias_sd * gauss(rng);
  }

  std::exponential_distribution<double> extra(1.0 / cfg.mean_extra_ratings);
  const int cap = std::min(cfg.max_ratings, cfg.n_items);
  std::vector<Interaction> out;
  std::vector<std::pair<double, int>> keys(static_cast<std::size_t>(cfg.n_items));
  for (int u = 0; u < cfg.n_users; ++u) {
    const auto uvec = latent();
    const double ubias = cfg.user_bias_sd * gauss(rng);
    const int n_u = std::min(cap, cfg.min_ratings + static_cast<int>(extra(rng)));
    // weighted sampling without replacement (exponential-key method)
    for (int r = 0; r < cfg.n_items; ++r)
      keys[static_cast<std::size_t>(r)] = {std::log(unif(rng) + 1e-300) / weight[static_cast<std::size_t>(r)], r};
    std::partial_sort(keys.begin(), keys.begin() + n_u, keys.end(), std::greater<>());
    std::vector<int> chosen;
    for (int c = 0; c < n_u; ++c) chosen.push_back(keys[static_cast<std::size_t>(c)].second);
    std::shuffle(chosen.begin(), chosen.end(), rng);

    std::int64_t ts = 956703932 + static_cast<std::int64_t>(unif(rng) * 3.0e7);
    for (int r : chosen) {
      const auto& v = item_vec[static_cast<std::size_t>(r)];
      double x = cfg.global_mean + ubias + item_bias[static_cast<std::size_t>(r)] + cfg.noise_sd * gauss(rng);
      for (int c = 0; c < cfg.rank; ++c) x += uvec[static_cast<std::size_t>(c)] * v[static_cast<std::size_t>(c)];
      const double rating = std::clamp(std::round(x), 1.0, 5.0);
      ts += 1 + static_cast<std::int64_t>(unif(rng) * 3600.0);
      out.push_back({u + 1, item_of_rank[static_cast<std::size_t>(r)], rating, ts});
    }
  }
  return Dataset::from_interactions(std::move(out));
}

}  // namespace recaudit
