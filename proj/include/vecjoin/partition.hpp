#pragma once

// Splitting a repository into shards of similarly distributed columns, and
// searching the resulting forest of independent indexes.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "vecjoin/core.hpp"
#include "vecjoin/index.hpp"
#include "vecjoin/pca.hpp"
#include "vecjoin/pivots.hpp"

namespace vecjoin {

/// Shared 2-d binning over the first two principal components of a global
/// vector sample. Projections outside the sampled range land in edge bins.
class HistogramBinning {
 public:
  HistogramBinning() = default;

  static HistogramBinning fit(const Repository& repo, std::size_t bins_per_axis = 16,
                              std::size_t sample_size = 50000, std::uint64_t seed = 42) {
    if (repo.empty()) throw InputError("cannot fit a binning on an empty repository");
    if (bins_per_axis < 1) throw InputError("binning needs at least one bin per axis");
    std::vector<const Vector*> all;
    all.reserve(repo.vector_count());
    for (const Column& c : repo.columns())
      for (const Vector& v : c.vectors) all.push_back(&v);
    std::mt19937_64 rng(seed);
    std::vector<Vector> sample;
    for (std::size_t i : detail::sample_indices(all.size(), sample_size, rng)) sample.push_back(*all[i]);

    HistogramBinning b;
    b.bins_ = bins_per_axis;
    b.pc_ = principal_components(sample, 2, {100, 1e-7, seed});
    if (b.pc_.mean.empty()) b.pc_.mean.assign(repo.dim(), 0.0);
    for (int axis = 0; axis < 2; ++axis) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (const Vector& v : sample) {
        const double p = b.project(v, axis);
        lo = std::min(lo, p);
        hi = std::max(hi, p);
      }
      b.lo_[axis] = lo;
      b.hi_[axis] = hi;
    }
    return b;
  }

  std::size_t bins_per_axis() const { return bins_; }
  std::size_t bin_count() const { return bins_ * bins_; }

  std::size_t bin_of(VectorView v) const {
    return axis_bin(project(v, 0), 0) * bins_ + axis_bin(project(v, 1), 1);
  }

 private:
  double project(VectorView v, int axis) const {
    if (static_cast<std::size_t>(axis) >= pc_.components.size()) return 0.0;
    return pc_.project(v, static_cast<std::size_t>(axis));
  }

  std::size_t axis_bin(double p, int axis) const {
    const double span = hi_[axis] - lo_[axis];
    if (!(span > 0.0)) return 0;
    const double f = std::floor((p - lo_[axis]) / span * static_cast<double>(bins_));
    return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(bins_ - 1)));
  }

  std::size_t bins_ = 16;
  PrincipalComponents pc_;
  double lo_[2] = {0.0, 0.0};
  double hi_[2] = {0.0, 0.0};
};

using ColumnHistogram = std::vector<double>;

inline constexpr double kHistogramEpsilon = 1e-6;

// Adds eps to every bin of a probability vector and renormalizes.
inline void smooth(ColumnHistogram& h, double eps = kHistogramEpsilon) {
  double total = 0.0;
  for (double& x : h) total += (x += eps);
  for (double& x : h) x /= total;
}

inline ColumnHistogram column_histogram(const Column& column, const HistogramBinning& binning,
                                        double eps = kHistogramEpsilon) {
  ColumnHistogram h(binning.bin_count(), 0.0);
  for (const Vector& v : column.vectors) h[binning.bin_of(v)] += 1.0;
  for (double& x : h) x /= static_cast<double>(column.size());
  smooth(h, eps);
  return h;
}

/// KL divergence with the natural log.
inline double kld(const ColumnHistogram& a, const ColumnHistogram& b) {
  if (a.size() != b.size()) throw InputError("histograms use different binnings");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) continue;
    if (!(b[i] > 0.0)) throw InvariantError("divergence against an unsmoothed zero bin");
    s += a[i] * std::log(a[i] / b[i]);
  }
  return s;
}

// Symmetrized as the mean of the two directed divergences.
inline double jsd(const ColumnHistogram& a, const ColumnHistogram& b) {
  return (kld(a, b) + kld(b, a)) / 2.0;
}

/// Cluster assignment aligned with repository ordinals. For histogram
/// clustering, `centers` are the ones the final assignment was made against.
struct Partitioning {
  std::size_t k = 0;
  std::vector<std::uint32_t> assignment;
  std::vector<ColumnHistogram> centers;
  int iterations = 0;

  std::vector<std::size_t> cluster_sizes() const {
    std::vector<std::size_t> n(k, 0);
    for (auto a : assignment) ++n[a];
    return n;
  }
};

namespace detail {

inline void check_k(std::size_t k, const Repository& repo) {
  if (k < 1) throw InputError("k must be at least 1");
  if (k > repo.size()) {
    throw InputError("k = " + std::to_string(k) + " exceeds the column count " +
                     std::to_string(repo.size()));
  }
}

template <class Point, class Dist>
std::uint32_t nearest_center(const Point& p, const std::vector<Point>& centers, Dist dist) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::uint32_t j = 0; j < centers.size(); ++j) {
    const double d = dist(p, centers[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

}  // namespace detail

/// k-means over column histograms with the symmetrized divergence: k seeded
/// columns as initial centers, then exactly t rounds of assign / re-center.
/// A cluster that loses all members keeps its previous center.
inline Partitioning cluster_columns(const Repository& repo, std::size_t k, int t,
                                    const HistogramBinning& binning, std::uint64_t seed = 42) {
  detail::check_k(k, repo);
  if (t < 1) throw InputError("iteration count must be at least 1");
  std::vector<ColumnHistogram> hist;
  hist.reserve(repo.size());
  for (const Column& c : repo.columns()) hist.push_back(column_histogram(c, binning));

  std::mt19937_64 rng(seed);
  Partitioning p;
  p.k = k;
  for (std::size_t i : detail::sample_indices(repo.size(), k, rng)) p.centers.push_back(hist[i]);
  p.assignment.assign(repo.size(), 0);

  std::vector<ColumnHistogram> next = p.centers;
  for (int it = 0; it < t; ++it) {
    p.centers = next;
    for (std::size_t c = 0; c < hist.size(); ++c)
      p.assignment[c] = detail::nearest_center(hist[c], p.centers, jsd);
    std::vector<std::size_t> members(k, 0);
    std::vector<ColumnHistogram> sum(k, ColumnHistogram(binning.bin_count(), 0.0));
    for (std::size_t c = 0; c < hist.size(); ++c) {
      ++members[p.assignment[c]];
      for (std::size_t b = 0; b < hist[c].size(); ++b) sum[p.assignment[c]][b] += hist[c][b];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (members[j] == 0) continue;
      for (double& x : sum[j]) x /= static_cast<double>(members[j]);
      smooth(sum[j]);
      next[j] = std::move(sum[j]);
    }
    p.iterations = it + 1;
  }
  return p;
}

/// Columns shuffled by seed and dealt round-robin, so shard sizes differ by at most one.
inline Partitioning partition_random(const Repository& repo, std::size_t k, std::uint64_t seed = 42) {
  detail::check_k(k, repo);
  std::vector<std::size_t> order(repo.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  Partitioning p;
  p.k = k;
  p.assignment.assign(repo.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i)
    p.assignment[order[i]] = static_cast<std::uint32_t>(i % k);
  return p;
}

/// Euclidean k-means over per-column mean vectors, exactly t rounds.
inline Partitioning partition_mean_kmeans(const Repository& repo, std::size_t k, int t,
                                          std::uint64_t seed = 42) {
  detail::check_k(k, repo);
  if (t < 1) throw InputError("iteration count must be at least 1");
  const std::size_t dim = repo.dim();
  std::vector<Vector> means;
  for (const Column& c : repo.columns()) {
    Vector m(dim, 0.0);
    for (const Vector& v : c.vectors)
      for (std::size_t j = 0; j < dim; ++j) m[j] += v[j];
    for (double& x : m) x /= static_cast<double>(c.size());
    means.push_back(std::move(m));
  }
  std::mt19937_64 rng(seed);
  std::vector<Vector> centers;
  for (std::size_t i : detail::sample_indices(repo.size(), k, rng)) centers.push_back(means[i]);

  Partitioning p;
  p.k = k;
  p.assignment.assign(repo.size(), 0);
  auto l2 = [](const Vector& a, const Vector& b) { return euclidean_distance(a, b); };
  for (int it = 0; it < t; ++it) {
    for (std::size_t c = 0; c < means.size(); ++c)
      p.assignment[c] = detail::nearest_center(means[c], centers, l2);
    std::vector<std::size_t> members(k, 0);
    std::vector<Vector> sum(k, Vector(dim, 0.0));
    for (std::size_t c = 0; c < means.size(); ++c) {
      ++members[p.assignment[c]];
      for (std::size_t j = 0; j < dim; ++j) sum[p.assignment[c]][j] += means[c][j];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (members[j] == 0) continue;
      for (double& x : sum[j]) x /= static_cast<double>(members[j]);
      centers[j] = std::move(sum[j]);
    }
    p.iterations = it + 1;
  }
  return p;
}

struct Shard {
  std::uint32_t cluster = 0;
  Repository columns;
};

/// Non-empty clusters, ascending by cluster index.
inline std::vector<Shard> split(const Repository& repo, const Partitioning& p) {
  if (p.assignment.size() != repo.size()) throw InputError("partitioning does not cover the repository");
  std::vector<std::vector<Column>> groups(p.k);
  for (std::size_t c = 0; c < repo.size(); ++c) {
    if (p.assignment[c] >= p.k) throw InvariantError("cluster index out of range");
    groups[p.assignment[c]].push_back(repo.columns()[c]);
  }
  std::vector<Shard> shards;
  for (std::uint32_t j = 0; j < groups.size(); ++j)
    if (!groups[j].empty()) shards.push_back({j, Repository(std::move(groups[j]))});
  return shards;
}

class Forest {
 public:
  Forest() = default;
  explicit Forest(std::vector<JoinIndex> indexes) : indexes_(std::move(indexes)) {
    for (std::size_t i = 1; i < indexes_.size(); ++i)
      if (indexes_[i].dim() != indexes_[0].dim())
        throw InputError("forest shards differ in dimensionality");
  }

  /// One independently pivoted index per non-empty cluster.
  static Forest build(const Repository& repo, const Partitioning& p, const IndexOptions& options = {},
                      const Metric& metric = Metric::euclidean()) {
    std::vector<JoinIndex> indexes;
    for (const Shard& s : split(repo, p)) indexes.push_back(JoinIndex::build(s.columns, options, metric));
    return Forest(std::move(indexes));
  }

  std::size_t size() const { return indexes_.size(); }
  const JoinIndex& shard(std::size_t i) const { return indexes_.at(i); }
  const std::vector<JoinIndex>& shards() const { return indexes_; }

 private:
  std::vector<JoinIndex> indexes_;
};

/// Union of per-shard results (column ids are disjoint across shards) with
/// summed stats. threads > 1 evaluates shards concurrently.
inline JoinResult forest_search(const Forest& forest, const Column& query, const SearchParams& params,
                                const SearchOptions& options = {}, unsigned threads = 1) {
  std::vector<JoinResult> parts(forest.size());
  std::vector<std::exception_ptr> errors(forest.size());
  auto run = [&](std::size_t i) {
    try {
      parts[i] = forest.shard(i).search(query, params, options);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(forest.size())));
  if (threads == 1 || options.trace) {
    for (std::size_t i = 0; i < forest.size(); ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < forest.size(); i = next++) run(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  JoinResult out;
  for (auto& r : parts) {
    out.joinable.insert(out.joinable.end(), r.joinable.begin(), r.joinable.end());
    for (auto& [id, pairs] : r.mappings) out.mappings.emplace(id, std::move(pairs));
    out.stats += r.stats;
  }
  std::sort(out.joinable.begin(), out.joinable.end());
  return out;
}

}  // namespace vecjoin
