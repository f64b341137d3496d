#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "recaudit/dataset.hpp"
#include "recaudit/error.hpp"

namespace recaudit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Ridge added to audit-time refits; guards rank-deficient rated sets.
inline constexpr double kDefaultAuditRidge = 1e-6;

struct MfConfig {
  int dim = 100;
  /// Weight of the norm penalty. Each row's penalty is scaled by its rating
  /// count (weighted-lambda alternating least squares).
  double reg = 0.05;
  int epochs = 15;
  std::uint64_t seed = 42;

  void validate() const {
    if (dim < 1) throw ArgumentError("MfConfig.dim must be >= 1");
    if (!(reg >= 0.0)) throw ArgumentError("MfConfig.reg must be >= 0");
    if (epochs < 1) throw ArgumentError("MfConfig.epochs must be >= 1");
  }
};

/// Trained factor model: score(i, j) = P.row(i) . Q.row(j). Rows follow the
/// dense indices of `index`.
struct MfModel {
  MatrixXd P;
  MatrixXd Q;
  MfConfig config;
  std::shared_ptr<const IdIndex> index;
  /// Regularized training loss after each epoch.
  std::vector<double> loss_history;

  Index n_users() const noexcept { return P.rows(); }
  Index n_items() const noexcept { return Q.rows(); }
  Index dim() const noexcept { return P.cols(); }
};

inline double score(const MfModel& model, Index user, Index item) {
  if (user < 0 || user >= model.n_users()) throw ArgumentError("user index out of range: " + std::to_string(user));
  if (item < 0 || item >= model.n_items()) throw ArgumentError("item index out of range: " + std::to_string(item));
  return model.P.row(user).dot(model.Q.row(item));
}

namespace detail {

// Reciprocal condition below this is reported as singular.
inline constexpr double kMinRcond = 1e-13;

/// Solves (gram + ridge I) x = rhs through a Cholesky factorization.
inline VectorXd solve_ridge(MatrixXd gram, const VectorXd& rhs, double ridge) {
  if (!(ridge >= 0.0)) throw ArgumentError("ridge must be >= 0");
  gram.diagonal().array() += ridge;
  Eigen::LLT<MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > kMinRcond))
    throw SingularSystemError("normal equations are numerically singular; use a ridge > 0");
  return llt.solve(rhs);
}

}  // namespace detail

/// Least-squares refit of one user vector with the item factors held fixed:
/// argmin_p sum_v (p.q_v - r_v)^2 + ridge |p|^2.
inline VectorXd update_user_vector(const MatrixXd& rated_items, const VectorXd& ratings,
                                   double ridge = kDefaultAuditRidge) {
  if (rated_items.rows() < 1) throw ArgumentError("update needs at least one rated row");
  if (rated_items.rows() != ratings.size()) throw ArgumentError("rated rows and ratings differ in length");
  return detail::solve_ridge(rated_items.transpose() * rated_items, rated_items.transpose() * ratings, ridge);
}

/// Mirror of update_user_vector: refits one item vector from the vectors of
/// the users who rated it, with the user factors held fixed.
inline VectorXd update_item_vector(const MatrixXd& rating_users, const VectorXd& ratings,
                                   double ridge = kDefaultAuditRidge) {
  return update_user_vector(rating_users, ratings, ridge);
}

/// Sum of squared errors over `data` plus the weighted norm penalty.
inline double training_loss(const MfModel& model, const Dataset& data) {
  double sse = 0.0;
  for (Index u = 0; u < model.n_users(); ++u) {
    auto h = data.history(u);
    for (const auto& e : h) {
      const double r = model.P.row(u).dot(model.Q.row(e.item)) - e.rating;
      sse += r * r;
    }
    sse += model.config.reg * static_cast<double>(h.size()) * model.P.row(u).squaredNorm();
  }
  for (Index i = 0; i < model.n_items(); ++i)
    sse += model.config.reg * static_cast<double>(data.raters(i).size()) * model.Q.row(i).squaredNorm();
  return sse;
}

/// Alternating ridge least squares over the observed entries. Each half
/// step is an exact block minimization, so the loss never increases. Rows
/// without ratings stay at zero.
inline MfModel train_mf(const Dataset& train, const MfConfig& config) {
  config.validate();
  if (train.n_ratings() == 0) throw PreconditionError("cannot train on an empty dataset");

  const Index n = train.index().n_users();
  const Index m = train.index().n_items();
  const Index d = config.dim;

  MfModel model;
  model.config = config;
  model.index = train.shared_index();
  model.P = MatrixXd::Zero(n, d);
  model.Q = MatrixXd::Zero(m, d);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  for (Index i = 0; i < m; ++i)
    for (Index c = 0; c < d; ++c) model.Q(i, c) = gauss(rng);

  MatrixXd gram(d, d);
  VectorXd rhs(d);
  auto refit_users = [&] {
    for (Index u = 0; u < n; ++u) {
      auto h = train.history(u);
      if (h.empty()) continue;
      gram.setZero();
      rhs.setZero();
      for (const auto& e : h) {
        gram.selfadjointView<Eigen::Lower>().rankUpdate(model.Q.row(e.item).transpose());
        rhs.noalias() += e.rating * model.Q.row(e.item).transpose();
      }
      MatrixXd full = gram.selfadjointView<Eigen::Lower>();
      model.P.row(u) = detail::solve_ridge(std::move(full), rhs, config.reg * static_cast<double>(h.size()));
    }
  };
  auto refit_items = [&] {
    for (Index i = 0; i < m; ++i) {
      auto rs = train.raters(i);
      if (rs.empty()) continue;
      gram.setZero();
      rhs.setZero();
      for (const auto& r : rs) {
        gram.selfadjointView<Eigen::Lower>().rankUpdate(model.P.row(r.user).transpose());
        rhs.noalias() += r.rating * model.P.row(r.user).transpose();
      }
      MatrixXd full = gram.selfadjointView<Eigen::Lower>();
      model.Q.row(i) = detail::solve_ridge(std::move(full), rhs, config.reg * static_cast<double>(rs.size()));
    }
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    refit_users();
    refit_items();
    const double loss = training_loss(model, train);
    if (!std::isfinite(loss)) throw NumericalError("matrix factorization training diverged at epoch " + std::to_string(epoch + 1));
    model.loss_history.push_back(loss);
  }
  return model;
}

inline double rmse(const MfModel& model, std::span<const Interaction> data) {
  if (data.empty()) return 0.0;
  double sse = 0.0;
  for (const auto& x : data) {
    const double r = score(model, model.index->user_index(x.user_id), model.index->item_index(x.item_id)) - x.rating;
    sse += r * r;
  }
  return std::sqrt(sse / static_cast<double>(data.size()));
}

// --- checkpoint ------------------------------------------------------------

inline constexpr const char* kCheckpointHeader = "recaudit-mf-v1";

/// Text checkpoint: header line, hyperparameters, id maps, then P and Q row
/// major. Values are written with 17 significant digits and reload exactly.
inline void save_model(const MfModel& model, std::ostream& out) {
  out << kCheckpointHeader << '\n';
  out << "dim " << model.config.dim << '\n';
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", model.config.reg);
  out << "reg " << buf << '\n';
  out << "epochs " << model.config.epochs << '\n';
  out << "seed " << model.config.seed << '\n';
  out << "users " << model.n_users() << '\n';
  for (auto id : model.index->user_ids()) out << id << '\n';
  out << "items " << model.n_items() << '\n';
  for (auto id : model.index->item_ids()) out << id << '\n';
  auto write_matrix = [&](const char* name, const MatrixXd& M) {
    out << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
    for (Index r = 0; r < M.rows(); ++r) {
      for (Index c = 0; c < M.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", M(r, c));
        out << (c ? " " : "") << buf;
      }
      out << '\n';
    }
  };
  write_matrix("P", model.P);
  write_matrix("Q", model.Q);
}

inline MfModel load_model(std::istream& in) {
  auto fail = [](const std::string& what) -> MfModel { throw PreconditionError("bad model checkpoint: " + what); };
  std::string header;
  if (!std::getline(in, header) || header != kCheckpointHeader) return fail("missing header " + std::string(kCheckpointHeader));
  MfModel model;
  std::string key;
  auto expect = [&](const char* name) {
    if (!(in >> key) || key != name) fail(std::string("expected '") + name + "'");
  };
  expect("dim");
  in >> model.config.dim;
  expect("reg");
  in >> model.config.reg;
  expect("epochs");
  in >> model.config.epochs;
  expect("seed");
  in >> model.config.seed;
  Index nu = 0, ni = 0;
  expect("users");
  in >> nu;
  std::vector<UserId> users(static_cast<std::size_t>(nu));
  for (auto& id : users) in >> id;
  expect("items");
  in >> ni;
  std::vector<ItemId> items(static_cast<std::size_t>(ni));
  for (auto& id : items) in >> id;
  if (!in) return fail("truncated id maps");
  model.index = std::make_shared<IdIndex>(std::move(users), std::move(items));
  auto read_matrix = [&](const char* name, MatrixXd& M) {
    expect(name);
    Index rows = 0, cols = 0;
    in >> rows >> cols;
    M.resize(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) {
        std::string tok;
        in >> tok;
        if (!detail::parse_number(tok, M(r, c))) fail(std::string("bad number in ") + name);
      }
  };
  read_matrix("P", model.P);
  read_matrix("Q", model.Q);
  if (!in) return fail("truncated factor matrices");
  if (model.P.rows() != model.index->n_users() || model.Q.rows() != model.index->n_items() ||
      model.P.cols() != model.config.dim || model.Q.cols() != model.config.dim)
    return fail("matrix shapes disagree with header");
  return model;
}

}  // namespace recaudit
