#pragma once

// Pivot selection and pivot mapping. A vector x is represented in pivot space
// by its distances to the pivots; the triangle inequality then turns match
// filtering and match confirmation into per-coordinate interval checks.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "vecjoin/core.hpp"
#include "vecjoin/pca.hpp"

namespace vecjoin {

struct PivotSet {
  std::vector<Vector> pivots;
  Metric metric = Metric::euclidean();

  std::size_t size() const { return pivots.size(); }
};

struct RecordRef {
  std::uint32_t column = 0;
  std::uint32_t record = 0;
  friend bool operator==(const RecordRef&, const RecordRef&) = default;
};

struct MappedVector {
  Vector coords;
  RecordRef origin;
};

/// Row-major block of pivot-space coordinates.
class MappedStore {
 public:
  MappedStore() = default;
  explicit MappedStore(std::size_t width) : width_(width) {}
  MappedStore(std::size_t width, std::vector<double> data)
      : width_(width), data_(std::move(data)) {}

  std::size_t width() const { return width_; }
  std::size_t size() const { return width_ == 0 ? 0 : data_.size() / width_; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * width_, width_};
  }
  void push_back(std::span<const double> coords) {
    data_.insert(data_.end(), coords.begin(), coords.end());
  }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t width_ = 0;
  std::vector<double> data_;
};

namespace detail {

inline void check_pivot_request(std::size_t n_pivots, std::size_t dim, std::size_t available) {
  if (n_pivots == 0) throw InputError("at least one pivot is required");
  if (available == 0) throw InputError("cannot select pivots from an empty collection");
  if (n_pivots >= dim) {
    throw InputError("pivot count " + std::to_string(n_pivots) +
                     " must be smaller than the dimensionality " + std::to_string(dim));
  }
}

// Indices of pairwise-distinct vectors, first occurrence kept, in input order.
inline std::vector<std::size_t> distinct_indices(std::span<const Vector> data) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return data[a] < data[b]; });
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i == 0 || data[order[i]] != data[order[i - 1]]) keep.push_back(order[i]);
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t sample_size,
                                               std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (sample_size >= n) return idx;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < sample_size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(sample_size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

struct PcaPivotOptions {
  std::size_t sample_size = 50000;
  int max_iterations = 100;
  double tolerance = 1e-7;
  std::uint64_t seed = 42;
};

/// Outliers along the principal directions of a uniform sample: for each
/// component in turn, the not-yet-chosen sample vector with the largest
/// absolute centered projection. Remaining slots (degenerate spectra or
/// duplicate hits) are filled by farthest-point traversal under the metric.
inline PivotSet select_pivots_pca(std::span<const Vector> data, std::size_t n_pivots,
                                  const Metric& metric = Metric::euclidean(),
                                  const PcaPivotOptions& options = {}) {
  detail::check_pivot_request(n_pivots, data.empty() ? 0 : data.front().size(), data.size());
  std::mt19937_64 rng(options.seed);
  const std::vector<std::size_t> idx = detail::sample_indices(data.size(), options.sample_size, rng);
  std::vector<Vector> sample;
  sample.reserve(idx.size());
  for (std::size_t i : idx) sample.push_back(data[i]);

  const PrincipalComponents pc = principal_components(
      sample, n_pivots, {options.max_iterations, options.tolerance, options.seed ^ 0x9e3779b97f4a7c15ULL});

  PivotSet set{{}, metric};
  std::vector<char> taken(sample.size(), 0);
  auto already_pivot = [&](const Vector& v) {
    return std::find(set.pivots.begin(), set.pivots.end(), v) != set.pivots.end();
  };

  for (std::size_t k = 0; k < pc.components.size() && set.size() < n_pivots; ++k) {
    std::size_t best = sample.size();
    double best_abs = -1.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      if (taken[i]) continue;
      const double a = std::abs(pc.project(sample[i], k));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    if (best == sample.size()) break;
    taken[best] = 1;
    if (!already_pivot(sample[best])) set.pivots.push_back(sample[best]);
  }

  if (set.size() < n_pivots) {
    // Farthest-point fill. Seeded from the first sample vector when empty.
    std::vector<double> nearest(sample.size(), std::numeric_limits<double>::infinity());
    auto absorb = [&](const Vector& p) {
      for (std::size_t i = 0; i < sample.size(); ++i)
        nearest[i] = std::min(nearest[i], metric(sample[i], p));
    };
    if (set.pivots.empty()) set.pivots.push_back(sample.front());
    for (const Vector& p : set.pivots) absorb(p);
    while (set.size() < n_pivots) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < sample.size(); ++i)
        if (nearest[i] > nearest[best]) best = i;
      if (!(nearest[best] > 0.0)) {
        throw InputError("requested " + std::to_string(n_pivots) +
                         " pivots but the sample holds only " + std::to_string(set.size()) +
                         " distinct vectors");
      }
      set.pivots.push_back(sample[best]);
      absorb(sample[best]);
    }
  }
  return set;
}

inline PivotSet select_pivots_random(std::span<const Vector> data, std::size_t n_pivots,
                                     const Metric& metric = Metric::euclidean(),
                                     std::uint64_t seed = 42) {
  detail::check_pivot_request(n_pivots, data.empty() ? 0 : data.front().size(), data.size());
  std::vector<std::size_t> distinct = detail::distinct_indices(data);
  if (n_pivots > distinct.size()) {
    throw InputError("requested " + std::to_string(n_pivots) + " pivots but only " +
                     std::to_string(distinct.size()) + " distinct vectors exist");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n_pivots; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, distinct.size() - 1);
    std::swap(distinct[i], distinct[pick(rng)]);
  }
  PivotSet set{{}, metric};
  for (std::size_t i = 0; i < n_pivots; ++i) set.pivots.push_back(data[distinct[i]]);
  return set;
}

enum class PivotMethod { pca, random };

struct PivotOptions {
  std::size_t count = 5;
  PivotMethod method = PivotMethod::pca;
  std::uint64_t seed = 42;
  std::size_t sample_size = 50000;
};

inline PivotSet select_pivots(std::span<const Vector> data, const PivotOptions& options,
                              const Metric& metric = Metric::euclidean()) {
  if (options.method == PivotMethod::random) {
    return select_pivots_random(data, options.count, metric, options.seed);
  }
  PcaPivotOptions pca;
  pca.sample_size = options.sample_size;
  pca.seed = options.seed;
  return select_pivots_pca(data, options.count, metric, pca);
}

inline void map_into(VectorView x, const PivotSet& pivots, std::span<double> out) {
  for (std::size_t i = 0; i < pivots.size(); ++i) out[i] = pivots.metric(pivots.pivots[i], x);
}

inline MappedVector map_vector(VectorView x, const PivotSet& pivots, RecordRef origin = {}) {
  MappedVector m{Vector(pivots.size()), origin};
  map_into(x, pivots, m.coords);
  return m;
}

inline MappedStore map_all(std::span<const Vector> data, const PivotSet& pivots) {
  std::vector<double> flat(data.size() * pivots.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    map_into(data[i], pivots, std::span<double>(flat.data() + i * pivots.size(), pivots.size()));
  }
  return MappedStore(pivots.size(), std::move(flat));
}

// False proves d(q, x) > tau.
inline bool pivot_filter_admits(std::span<const double> q, std::span<const double> x, double tau) {
  for (std::size_t i = 0; i < q.size(); ++i)
    if (std::abs(q[i] - x[i]) > tau) return false;
  return true;
}

// True proves d(q, x) <= tau.
inline bool pivot_match_confirms(std::span<const double> q, std::span<const double> x, double tau) {
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i] + x[i] <= tau) return true;
  return false;
}

inline bool pivot_filter_admits(const MappedVector& q, const MappedVector& x, double tau) {
  return pivot_filter_admits(std::span<const double>(q.coords), std::span<const double>(x.coords), tau);
}

inline bool pivot_match_confirms(const MappedVector& q, const MappedVector& x, double tau) {
  return pivot_match_confirms(std::span<const double>(q.coords), std::span<const double>(x.coords), tau);
}

}  // namespace vecjoin
