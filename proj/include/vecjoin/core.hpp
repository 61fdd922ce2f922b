#pragma once

// Metric-space primitives, the column/repository model, joinability and the
// exhaustive search used as ground truth by everything else.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vecjoin {

using Vector = std::vector<double>;
using VectorView = std::span<const double>;

// Error hierarchy. The CLI maps these onto exit codes 2, 3 and 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class InvariantError : public Error {
 public:
  using Error::Error;
};

inline double euclidean_distance(VectorView a, VectorView b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

/// A distance function together with the largest distance it can produce on
/// unit-length vectors. Thresholds given as percentages are scaled by d_max.
struct Metric {
  using Fn = std::function<double(VectorView, VectorView)>;

  std::string id;
  double d_max = 0.0;
  Fn fn;

  double operator()(VectorView a, VectorView b) const {
    if (a.size() != b.size()) {
      throw InputError("distance: dimension mismatch (" +
                       std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()) + ")");
    }
    return fn(a, b);
  }

  static Metric euclidean() {
    return Metric{"euclidean", 2.0, &euclidean_distance};
  }

  // User metrics must state their diameter on the normalized domain.
  static Metric custom(std::string id, double d_max, Fn fn) {
    if (!(d_max > 0.0) || !std::isfinite(d_max)) {
      throw InputError("metric '" + id + "': d_max must be positive and finite");
    }
    return Metric{std::move(id), d_max, std::move(fn)};
  }
};

inline Metric metric_from_id(std::string_view id) {
  if (id == "euclidean") return Metric::euclidean();
  throw FormatError("unknown metric id '" + std::string(id) + "'");
}

inline double distance(VectorView a, VectorView b,
                       const Metric& metric = Metric::euclidean()) {
  return metric(a, b);
}

inline bool all_finite(VectorView v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

inline Vector normalize(VectorView v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw InputError("cannot normalize a zero or non-finite vector");
  }
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= norm;
  return out;
}

struct Column {
  std::string column_id;
  std::string table_id;
  std::vector<Vector> vectors;

  std::size_t size() const { return vectors.size(); }
  std::size_t dim() const { return vectors.empty() ? 0 : vectors.front().size(); }
};

/// Validates raw record vectors and optionally scales them to unit length.
/// Rejects empty columns, ragged rows, non-finite values and zero vectors.
inline Column make_column(std::string column_id, std::string table_id,
                          std::vector<Vector> vectors, bool unit_normalize = true) {
  if (vectors.empty()) {
    throw InputError("column '" + column_id + "' has no vectors");
  }
  const std::size_t dim = vectors.front().size();
  if (dim == 0) throw InputError("column '" + column_id + "' has zero-length vectors");
  for (std::size_t r = 0; r < vectors.size(); ++r) {
    Vector& v = vectors[r];
    if (v.size() != dim) {
      throw InputError("column '" + column_id + "' record " + std::to_string(r) +
                       ": ragged vector (expected dim " + std::to_string(dim) + ")");
    }
    if (!all_finite(v)) {
      throw InputError("column '" + column_id + "' record " + std::to_string(r) +
                       ": non-finite coordinate");
    }
    if (unit_normalize) {
      try {
        v = normalize(v);
      } catch (const InputError&) {
        throw InputError("column '" + column_id + "' record " + std::to_string(r) +
                         ": zero vector");
      }
    }
  }
  return Column{std::move(column_id), std::move(table_id), std::move(vectors)};
}

/// Columns are kept sorted by column_id; a column's position is its ordinal.
class Repository {
 public:
  Repository() = default;

  explicit Repository(std::vector<Column> columns) : columns_(std::move(columns)) {
    std::sort(columns_.begin(), columns_.end(),
              [](const Column& a, const Column& b) { return a.column_id < b.column_id; });
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      const Column& c = columns_[i];
      if (i > 0 && columns_[i - 1].column_id == c.column_id) {
        throw InputError("duplicate column_id '" + c.column_id + "'");
      }
      if (c.vectors.empty()) throw InputError("column '" + c.column_id + "' is empty");
      if (dim_ == 0) dim_ = c.dim();
      for (const Vector& v : c.vectors) {
        if (v.size() != dim_) {
          throw InputError("column '" + c.column_id + "': dimension " +
                           std::to_string(v.size()) + " conflicts with repository dimension " +
                           std::to_string(dim_));
        }
      }
      vector_count_ += c.size();
    }
  }

  const std::vector<Column>& columns() const { return columns_; }
  std::size_t size() const { return columns_.size(); }
  bool empty() const { return columns_.empty(); }
  std::size_t dim() const { return dim_; }
  std::size_t vector_count() const { return vector_count_; }

  const Column* find(std::string_view id) const {
    auto it = std::lower_bound(columns_.begin(), columns_.end(), id,
                               [](const Column& c, std::string_view v) { return c.column_id < v; });
    if (it == columns_.end() || it->column_id != id) return nullptr;
    return &*it;
  }

 private:
  std::vector<Column> columns_;
  std::size_t dim_ = 0;
  std::size_t vector_count_ = 0;
};

struct SearchParams {
  Metric metric = Metric::euclidean();
  double tau = 0.0;
  std::size_t t_count = 1;
  std::optional<double> tau_pct;
  std::optional<double> t_pct;
};

struct Thresholds {
  double tau = 0.0;
  std::size_t t_count = 1;
};

inline Thresholds resolve_thresholds(double tau_pct, double t_pct, std::size_t query_size,
                                     const Metric& metric = Metric::euclidean()) {
  if (!(tau_pct >= 0.0 && tau_pct <= 1.0)) {
    throw InputError("tau percentage must lie in [0, 1]");
  }
  if (!(t_pct > 0.0 && t_pct <= 1.0)) {
    throw InputError("joinability percentage must lie in (0, 1]");
  }
  if (query_size == 0) throw InputError("query column is empty");
  // 0.6 * 1000 is 600.0000000000001 in binary floating point.
  const double raw = t_pct * static_cast<double>(query_size);
  auto t_count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  t_count = std::clamp<std::size_t>(t_count, 1, query_size);
  return Thresholds{tau_pct * metric.d_max, t_count};
}

inline SearchParams make_params(double tau_pct, double t_pct, std::size_t query_size,
                                const Metric& metric = Metric::euclidean()) {
  const Thresholds th = resolve_thresholds(tau_pct, t_pct, query_size, metric);
  return SearchParams{metric, th.tau, th.t_count, tau_pct, t_pct};
}

inline void check_params(const SearchParams& params, std::size_t query_size) {
  if (!(params.tau >= 0.0) || !std::isfinite(params.tau)) {
    throw InputError("tau must be a non-negative finite number");
  }
  if (params.t_count < 1) throw InputError("t_count must be at least 1");
  if (params.t_count > query_size) {
    throw InputError("t_count " + std::to_string(params.t_count) +
                     " exceeds query size " + std::to_string(query_size));
  }
}

inline bool matches(VectorView q, VectorView x, const SearchParams& params) {
  return params.metric(q, x) <= params.tau;
}

inline double joinability(const Column& query, const Column& target,
                          const SearchParams& params) {
  std::size_t matched = 0;
  for (const Vector& q : query.vectors) {
    for (const Vector& x : target.vectors) {
      if (matches(q, x, params)) {
        ++matched;
        break;
      }
    }
  }
  return static_cast<double>(matched) / static_cast<double>(query.size());
}

struct MatchPair {
  std::uint32_t query_record = 0;
  std::uint32_t target_record = 0;
  friend bool operator==(const MatchPair&, const MatchPair&) = default;
  friend auto operator<=>(const MatchPair&, const MatchPair&) = default;
};

struct SearchStats {
  std::uint64_t distance_computations = 0;  // exact d(q, x) calls
  std::uint64_t mapping_computations = 0;   // query-to-pivot distances
  std::uint64_t candidate_pairs = 0;        // (query vector, leaf cell) candidates
  std::uint64_t matching_pairs = 0;         // (query vector, leaf cell) proven matches
  std::uint64_t quick_browse_pairs = 0;
  std::uint64_t pivot_filtered = 0;  // vectors discarded by the pivot band
  std::uint64_t pivot_matched = 0;   // vectors confirmed without a distance call
  std::uint64_t columns_accepted_early = 0;
  std::uint64_t columns_pruned = 0;

  SearchStats& operator+=(const SearchStats& o) {
    distance_computations += o.distance_computations;
    mapping_computations += o.mapping_computations;
    candidate_pairs += o.candidate_pairs;
    matching_pairs += o.matching_pairs;
    quick_browse_pairs += o.quick_browse_pairs;
    pivot_filtered += o.pivot_filtered;
    pivot_matched += o.pivot_matched;
    columns_accepted_early += o.columns_accepted_early;
    columns_pruned += o.columns_pruned;
    return *this;
  }
};

/// Joinable column ids in ascending order, and for each of them the record
/// pairs that established the matches. Early termination truncates mappings:
/// only pairs discovered before a column was accepted are listed.
struct JoinResult {
  std::vector<std::string> joinable;
  std::map<std::string, std::vector<MatchPair>> mappings;
  SearchStats stats;
};

struct BruteForceOptions {
  // Off = oracle mode: every pair is evaluated and every match recorded.
  bool early_accept = true;
};

inline JoinResult brute_force_search(const Repository& repo, const Column& query,
                                     const SearchParams& params,
                                     const BruteForceOptions& options = {}) {
  check_params(params, query.size());
  JoinResult result;
  for (const Column& target : repo.columns()) {
    if (target.dim() != query.dim()) {
      throw InputError("query dimension " + std::to_string(query.dim()) +
                       " does not match column '" + target.column_id + "'");
    }
    std::size_t matched = 0;
    std::vector<MatchPair> pairs;
    for (std::size_t qi = 0; qi < query.size(); ++qi) {
      bool hit = false;
      for (std::size_t xi = 0; xi < target.size(); ++xi) {
        ++result.stats.distance_computations;
        if (matches(query.vectors[qi], target.vectors[xi], params)) {
          pairs.push_back({static_cast<std::uint32_t>(qi), static_cast<std::uint32_t>(xi)});
          hit = true;
          if (options.early_accept) break;
        }
      }
      if (hit) ++matched;
      if (options.early_accept && matched >= params.t_count) {
        ++result.stats.columns_accepted_early;
        break;
      }
    }
    if (matched >= params.t_count) {
      result.joinable.push_back(target.column_id);
      result.mappings.emplace(target.column_id, std::move(pairs));
    }
  }
  return result;
}

}  // namespace vecjoin
