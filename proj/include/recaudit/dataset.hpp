#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "recaudit/error.hpp"

namespace recaudit {

using UserId = std::int64_t;
using ItemId = std::int64_t;
/// Dense 0-based row index into the factor matrices.
using Index = std::ptrdiff_t;

struct Interaction {
  UserId user_id = 0;
  ItemId item_id = 0;
  double rating = 0.0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// One step of a user's chronological history, in dense item coordinates.
struct HistoryEntry {
  Index item = 0;
  double rating = 0.0;
  std::int64_t timestamp = 0;
};

struct Rater {
  Index user = 0;
  double rating = 0.0;
};

// Bidirectional external-id <-> dense-index map. Dense indices follow
// ascending external id, so "smallest index" and "smallest id" agree.
class IdIndex {
 public:
  IdIndex() = default;
  IdIndex(std::vector<UserId> users, std::vector<ItemId> items)
      : users_(std::move(users)), items_(std::move(items)) {
    std::sort(users_.begin(), users_.end());
    users_.erase(std::unique(users_.begin(), users_.end()), users_.end());
    std::sort(items_.begin(), items_.end());
    items_.erase(std::unique(items_.begin(), items_.end()), items_.end());
    for (std::size_t k = 0; k < users_.size(); ++k) user_pos_.emplace(users_[k], static_cast<Index>(k));
    for (std::size_t k = 0; k < items_.size(); ++k) item_pos_.emplace(items_[k], static_cast<Index>(k));
  }

  Index n_users() const noexcept { return static_cast<Index>(users_.size()); }
  Index n_items() const noexcept { return static_cast<Index>(items_.size()); }

  std::optional<Index> find_user(UserId id) const {
    auto it = user_pos_.find(id);
    if (it == user_pos_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<Index> find_item(ItemId id) const {
    auto it = item_pos_.find(id);
    if (it == item_pos_.end()) return std::nullopt;
    return it->second;
  }
  Index user_index(UserId id) const {
    if (auto idx = find_user(id)) return *idx;
    throw UnknownIdError("unknown user id " + std::to_string(id));
  }
  Index item_index(ItemId id) const {
    if (auto idx = find_item(id)) return *idx;
    throw UnknownIdError("unknown item id " + std::to_string(id));
  }
  UserId user_id(Index idx) const { return users_.at(static_cast<std::size_t>(idx)); }
  ItemId item_id(Index idx) const { return items_.at(static_cast<std::size_t>(idx)); }

  const std::vector<UserId>& user_ids() const noexcept { return users_; }
  const std::vector<ItemId>& item_ids() const noexcept { return items_; }

 private:
  std::vector<UserId> users_;
  std::vector<ItemId> items_;
  std::unordered_map<UserId, Index> user_pos_;
  std::unordered_map<ItemId, Index> item_pos_;
};

/// Immutable collection of rating interactions with chronological per-user
/// histories and per-item rater lists. Several datasets (a full log and its
/// holdout train part) may share one IdIndex so that dense indices agree.
class Dataset {
 public:
  Dataset() : index_(std::make_shared<IdIndex>()) {}

  /// Builds a dataset. When `index` is null a fresh index is built from the
  /// ids present; otherwise every id must already be in `index`.
  static Dataset from_interactions(std::vector<Interaction> interactions,
                                   std::shared_ptr<const IdIndex> index = nullptr) {
    Dataset ds;
    if (!index) {
      std::vector<UserId> users;
      std::vector<ItemId> items;
      users.reserve(interactions.size());
      items.reserve(interactions.size());
      for (const auto& x : interactions) {
        users.push_back(x.user_id);
        items.push_back(x.item_id);
      }
      index = std::make_shared<IdIndex>(std::move(users), std::move(items));
    }
    ds.index_ = std::move(index);
    ds.interactions_ = std::move(interactions);
    ds.build();
    return ds;
  }

  const std::vector<Interaction>& interactions() const noexcept { return interactions_; }
  const IdIndex& index() const noexcept { return *index_; }
  std::shared_ptr<const IdIndex> shared_index() const noexcept { return index_; }

  /// Distinct users / items that appear in this dataset's interactions.
  Index n_users() const noexcept { return n_users_; }
  Index n_items() const noexcept { return n_items_; }
  std::size_t n_ratings() const noexcept { return interactions_.size(); }

  /// Chronological history of dense user `u` (empty if `u` has no ratings here).
  std::span<const HistoryEntry> history(Index u) const {
    return histories_.at(static_cast<std::size_t>(u));
  }
  std::span<const Rater> raters(Index item) const { return raters_.at(static_cast<std::size_t>(item)); }

  bool has_rated(Index u, Index item) const {
    const auto& items = rated_sorted_.at(static_cast<std::size_t>(u));
    return std::binary_search(items.begin(), items.end(), item);
  }
  std::optional<double> rating(Index u, Index item) const {
    for (const auto& e : history(u))
      if (e.item == item) return e.rating;
    return std::nullopt;
  }

 private:
  void build() {
    const auto nu = static_cast<std::size_t>(index_->n_users());
    const auto ni = static_cast<std::size_t>(index_->n_items());
    histories_.assign(nu, {});
    raters_.assign(ni, {});
    rated_sorted_.assign(nu, {});
    for (const auto& x : interactions_) {
      const Index u = index_->user_index(x.user_id);
      const Index i = index_->item_index(x.item_id);
      histories_[static_cast<std::size_t>(u)].push_back({i, x.rating, x.timestamp});
      raters_[static_cast<std::size_t>(i)].push_back({u, x.rating});
    }
    n_users_ = 0;
    for (std::size_t u = 0; u < nu; ++u) {
      auto& h = histories_[u];
      if (!h.empty()) ++n_users_;
      std::stable_sort(h.begin(), h.end(),
                       [](const HistoryEntry& a, const HistoryEntry& b) { return a.timestamp < b.timestamp; });
      auto& rs = rated_sorted_[u];
      rs.reserve(h.size());
      for (const auto& e : h) rs.push_back(e.item);
      std::sort(rs.begin(), rs.end());
      if (std::adjacent_find(rs.begin(), rs.end()) != rs.end())
        throw ArgumentError("duplicate (user, item) pair for user " + std::to_string(index_->user_id(static_cast<Index>(u))));
    }
    n_items_ = static_cast<Index>(std::count_if(raters_.begin(), raters_.end(), [](const auto& r) { return !r.empty(); }));
  }

  std::shared_ptr<const IdIndex> index_;
  std::vector<Interaction> interactions_;
  std::vector<std::vector<HistoryEntry>> histories_;
  std::vector<std::vector<Rater>> raters_;
  std::vector<std::vector<Index>> rated_sorted_;
  Index n_users_ = 0;
  Index n_items_ = 0;
};

namespace detail {

template <class T>
bool parse_number(std::string_view field, T& out) {
  if (field.empty()) return false;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

inline std::string format_rating(double r) {
  if (r == std::floor(r) && std::abs(r) < 1e15) return std::to_string(static_cast<long long>(r));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", r);
  return buf;
}

}  // namespace detail

/// Parses `UserID::MovieID::Rating::Timestamp` lines (LF or CRLF, no header).
/// Blank lines are ignored. Ratings must be integers in 1..5.
inline Dataset parse_movielens(std::string_view text) {
  std::vector<Interaction> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  struct PairHash {
    std::size_t operator()(const std::pair<UserId, ItemId>& p) const noexcept {
      return std::hash<UserId>{}(p.first) * 0x9E3779B97F4A7C15ULL ^ std::hash<ItemId>{}(p.second);
    }
  };
  std::unordered_map<std::pair<UserId, ItemId>, std::size_t, PairHash> seen;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::string_view fields[4];
    std::size_t n_fields = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t sep = line.find("::", start);
      if (n_fields == 4) throw ParseError(line_no, "expected 4 '::'-separated fields");
      if (sep == std::string_view::npos) {
        fields[n_fields++] = line.substr(start);
        break;
      }
      fields[n_fields++] = line.substr(start, sep - start);
      start = sep + 2;
    }
    if (n_fields != 4) throw ParseError(line_no, "expected 4 '::'-separated fields, got " + std::to_string(n_fields));

    Interaction x;
    if (!detail::parse_number(fields[0], x.user_id) || x.user_id < 1)
      throw ParseError(line_no, "bad user id '" + std::string(fields[0]) + "'");
    if (!detail::parse_number(fields[1], x.item_id) || x.item_id < 1)
      throw ParseError(line_no, "bad item id '" + std::string(fields[1]) + "'");
    if (!detail::parse_number(fields[2], x.rating) || !std::isfinite(x.rating))
      throw ParseError(line_no, "non-numeric rating '" + std::string(fields[2]) + "'");
    if (x.rating < 1.0 || x.rating > 5.0 || x.rating != std::floor(x.rating))
      throw ParseError(line_no, "rating outside 1..5: '" + std::string(fields[2]) + "'");
    if (!detail::parse_number(fields[3], x.timestamp))
      throw ParseError(line_no, "bad timestamp '" + std::string(fields[3]) + "'");
    auto [it, fresh] = seen.emplace(std::pair{x.user_id, x.item_id}, line_no);
    if (!fresh)
      throw ParseError(line_no, "duplicate (user, item) pair first seen on line " + std::to_string(it->second));
    out.push_back(x);
  }
  return Dataset::from_interactions(std::move(out));
}

inline Dataset parse_movielens(std::istream& in) {
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_movielens(std::string_view(text));
}

inline Dataset load_movielens(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot open ratings file '" + path + "'");
  return parse_movielens(in);
}

inline void write_movielens(const Dataset& ds, std::ostream& out) {
  for (const auto& x : ds.interactions())
    out << x.user_id << "::" << x.item_id << "::" << detail::format_rating(x.rating) << "::" << x.timestamp << '\n';
}

/// Leave-last-k split. Users with at most k interactions stay whole in train.
struct HoldoutSplit {
  Dataset train;
  /// Dense user index -> last k interactions, chronological.
  std::map<Index, std::vector<HistoryEntry>> heldout;
  int k = 0;

  std::span<const HistoryEntry> heldout_for(Index u) const {
    auto it = heldout.find(u);
    if (it == heldout.end()) return {};
    return it->second;
  }
};

inline HoldoutSplit holdout_split(const Dataset& ds, int k) {
  if (k <= 0) throw ArgumentError("holdout k must be >= 1, got " + std::to_string(k));
  HoldoutSplit split;
  split.k = k;
  const IdIndex& idx = ds.index();
  // (user, item) pairs leaving train
  std::vector<std::vector<Index>> dropped(static_cast<std::size_t>(idx.n_users()));
  for (Index u = 0; u < idx.n_users(); ++u) {
    auto h = ds.history(u);
    if (h.size() <= static_cast<std::size_t>(k)) continue;
    std::vector<HistoryEntry> tail(h.end() - k, h.end());
    auto& d = dropped[static_cast<std::size_t>(u)];
    for (const auto& e : tail) d.push_back(e.item);
    std::sort(d.begin(), d.end());
    split.heldout.emplace(u, std::move(tail));
  }
  std::vector<Interaction> train;
  train.reserve(ds.n_ratings());
  for (const auto& x : ds.interactions()) {
    const auto& d = dropped[static_cast<std::size_t>(idx.user_index(x.user_id))];
    if (!std::binary_search(d.begin(), d.end(), idx.item_index(x.item_id))) train.push_back(x);
  }
  split.train = Dataset::from_interactions(std::move(train), ds.shared_index());
  return split;
}

struct SummaryStats {
  Index n_users = 0;
  Index n_items = 0;
  std::size_t n_ratings = 0;
  double density_percent = 0.0;
};

inline SummaryStats summary_stats(const Dataset& ds) {
  SummaryStats s{ds.n_users(), ds.n_items(), ds.n_ratings(), 0.0};
  if (s.n_users > 0 && s.n_items > 0)
    s.density_percent = 100.0 * static_cast<double>(s.n_ratings) /
                        (static_cast<double>(s.n_users) * static_cast<double>(s.n_items));
  return s;
}

namespace detail {
template <class Id>
std::vector<Id> rank_by_count(const std::vector<Id>& ids, const std::vector<std::size_t>& counts) {
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < ids.size(); ++k)
    if (counts[k] > 0) order.push_back(k);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  std::vector<Id> out;
  out.reserve(order.size());
  for (auto k : order) out.push_back(ids[k]);
  return out;
}
}  // namespace detail

/// Items by interaction count, descending; ties by ascending id.
inline std::vector<ItemId> popularity_rank(const Dataset& ds) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(ds.index().n_items()));
  for (Index i = 0; i < ds.index().n_items(); ++i) counts[static_cast<std::size_t>(i)] = ds.raters(i).size();
  return detail::rank_by_count(ds.index().item_ids(), counts);
}

/// Users by rating count, descending; ties by ascending id.
inline std::vector<UserId> activity_rank(const Dataset& ds) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(ds.index().n_users()));
  for (Index u = 0; u < ds.index().n_users(); ++u) counts[static_cast<std::size_t>(u)] = ds.history(u).size();
  return detail::rank_by_count(ds.index().user_ids(), counts);
}

}  // namespace recaudit
