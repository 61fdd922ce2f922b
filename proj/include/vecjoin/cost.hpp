#pragma once

// Expected distance-computation cost of verification and workload-driven
// choice of the grid depth.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "vecjoin/core.hpp"
#include "vecjoin/grid.hpp"
#include "vecjoin/pivots.hpp"

namespace vecjoin {

/// Equi-width histogram per pivot dimension over [0, d_max].
class DimHistogram {
 public:
  DimHistogram() = default;
  DimHistogram(std::size_t dims, std::size_t bins, double d_max)
      : dims_(dims), bins_(bins), d_max_(d_max), counts_(dims * bins, 0) {
    if (bins < 1) throw InputError("histogram needs at least one bin");
  }

  static DimHistogram from_counts(std::size_t dims, std::size_t bins, double d_max,
                                  std::vector<std::uint64_t> counts) {
    DimHistogram h(dims, bins, d_max);
    if (counts.size() != dims * bins) throw FormatError("histogram size mismatch");
    h.counts_ = std::move(counts);
    h.total_ = 0;
    for (std::size_t b = 0; b < bins; ++b) h.total_ += h.counts_[b];
    for (std::size_t d = 1; d < dims; ++d) {
      std::uint64_t s = 0;
      for (std::size_t b = 0; b < bins; ++b) s += h.counts_[d * bins + b];
      if (s != h.total_) throw FormatError("histogram dimensions disagree on total");
    }
    h.rebuild_prefix();
    return h;
  }

  std::size_t dims() const { return dims_; }
  std::size_t bins() const { return bins_; }
  double d_max() const { return d_max_; }
  std::uint64_t total() const { return total_; }
  std::uint64_t count(std::size_t dim, std::size_t bin) const { return counts_[dim * bins_ + bin]; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  std::size_t bin_of(double c) const {
    const double w = d_max_ / static_cast<double>(bins_);
    if (!(c > 0.0)) return 0;
    if (c >= d_max_) return bins_ - 1;
    auto s = static_cast<std::int64_t>(std::floor(c / w));
    s = std::clamp<std::int64_t>(s, 0, static_cast<std::int64_t>(bins_) - 1);
    while (s > 0 && c < static_cast<double>(s) * w) --s;
    while (s + 1 < static_cast<std::int64_t>(bins_) && c >= static_cast<double>(s + 1) * w) ++s;
    return static_cast<std::size_t>(s);
  }

  void add(std::span<const double> point) {
    for (std::size_t d = 0; d < dims_; ++d) ++counts_[d * bins_ + bin_of(point[d])];
    ++total_;
    prefix_.clear();
  }

  void finalize() { rebuild_prefix(); }

  /// Vectors in every bin whose closed range meets [lo, hi] along dim.
  std::uint64_t mass(std::size_t dim, double lo, double hi) const {
    if (hi < 0.0 || lo > d_max_ || hi < lo) return 0;
    const std::size_t a = bin_of(std::max(lo, 0.0));
    const std::size_t b = bin_of(std::min(hi, d_max_));
    const std::uint64_t* p = &prefix_[dim * (bins_ + 1)];
    return p[b + 1] - p[a];
  }

 private:
  void rebuild_prefix() {
    prefix_.assign(dims_ * (bins_ + 1), 0);
    for (std::size_t d = 0; d < dims_; ++d)
      for (std::size_t b = 0; b < bins_; ++b)
        prefix_[d * (bins_ + 1) + b + 1] = prefix_[d * (bins_ + 1) + b] + counts_[d * bins_ + b];
  }

  std::size_t dims_ = 0;
  std::size_t bins_ = 1;
  double d_max_ = 2.0;
  std::uint64_t total_ = 0;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> prefix_;
};

inline DimHistogram estimate_pdf(const MappedStore& mapped, std::size_t bins, double d_max) {
  if (bins < 1) throw InputError("histogram needs at least one bin");
  DimHistogram h(mapped.width(), bins, d_max);
  for (std::size_t i = 0; i < mapped.size(); ++i) h.add(mapped.row(i));
  h.finalize();
  return h;
}

/// Upper bound on the number of repository vectors in leaf cells that meet
/// the square query region: the smallest per-dimension mass within tau plus
/// one leaf width of the query coordinate.
inline std::uint64_t n_max(std::span<const double> q, double tau, int levels,
                           const DimHistogram& hist) {
  const double pad = std::ldexp(hist.d_max(), -levels);
  std::uint64_t best = hist.total();
  for (std::size_t i = 0; i < q.size(); ++i) {
    best = std::min(best, hist.mass(i, q[i] - tau - pad, q[i] + tau + pad));
  }
  return best;
}

struct WeightedQuery {
  std::span<const double> coords;
  std::uint64_t multiplicity = 1;
};

inline std::uint64_t expected_cost(std::span<const WeightedQuery> candidates, double tau, int levels,
                                   const DimHistogram& hist) {
  std::uint64_t e = 0;
  for (const auto& c : candidates) e += c.multiplicity * n_max(c.coords, tau, levels, hist);
  return e;
}

/// Query vectors of the candidate pairs, each weighted by how many candidate
/// pairs it appears in.
inline std::vector<WeightedQuery> candidate_multiset(const BlockingOutput& blocking,
                                                     const MappedStore& query_mapped) {
  std::vector<std::uint64_t> times(query_mapped.size(), 0);
  for (const auto& c : blocking.candidates) ++times[c.query];
  std::vector<WeightedQuery> out;
  for (std::size_t q = 0; q < times.size(); ++q)
    if (times[q] > 0) out.push_back({query_mapped.row(q), times[q]});
  return out;
}

struct WorkloadQuery {
  Column query;
  double tau = 0.0;
  std::size_t t_count = 1;
};

using Workload = std::vector<WorkloadQuery>;

/// A sample of 1% of the repository columns (at least 10, at most all),
/// crossed with tau at 2/4/6/8% of d_max and T at 20/40/60/80% of the column.
inline Workload default_workload(const Repository& repo, std::uint64_t seed,
                                 const Metric& metric = Metric::euclidean()) {
  if (repo.empty()) throw InputError("cannot draw a workload from an empty repository");
  std::size_t n = std::max<std::size_t>(10, repo.size() / 100);
  n = std::min(n, repo.size());
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> pick = detail::sample_indices(repo.size(), n, rng);
  Workload w;
  for (std::size_t i : pick) {
    const Column& c = repo.columns()[i];
    for (double tp : {0.02, 0.04, 0.06, 0.08}) {
      for (double jp : {0.2, 0.4, 0.6, 0.8}) {
        const Thresholds th = resolve_thresholds(tp, jp, c.size(), metric);
        w.push_back({c, th.tau, th.t_count});
      }
    }
  }
  return w;
}

struct TuneRow {
  int levels = 0;
  std::uint64_t estimated_cost = 0;
  double blocking_ms = 0.0;
};

struct TuneReport {
  int best_levels = 0;
  std::vector<TuneRow> rows;
};

/// For every depth in [m_lo, m_hi]: build both grids, block each workload
/// query (no verification) and sum the estimated verification cost. The
/// cheapest depth wins; ties go to the shallower grid.
inline TuneReport tune_m(const MappedStore& repo_mapped, const PivotSet& pivots,
                         const Workload& workload, int m_lo, int m_hi,
                         const DimHistogram& hist) {
  if (workload.empty()) throw InputError("tuning workload is empty");
  if (m_lo < 1 || m_hi < m_lo) throw InputError("invalid level range");
  std::vector<MappedStore> query_mapped;
  query_mapped.reserve(workload.size());
  for (const auto& wq : workload) query_mapped.push_back(map_all(wq.query.vectors, pivots));

  TuneReport report;
  for (int m = m_lo; m <= m_hi; ++m) {
    const GridConfig cfg{pivots.size(), m, pivots.metric.d_max};
    const HierarchicalGrid hr = HierarchicalGrid::build(repo_mapped, cfg, false);
    TuneRow row{m, 0, 0.0};
    for (std::size_t k = 0; k < workload.size(); ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      const HierarchicalGrid hq = HierarchicalGrid::build(query_mapped[k], cfg, true);
      const BlockingOutput b = block(hq, query_mapped[k], hr, workload[k].tau);
      row.blocking_ms +=
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      const auto cands = candidate_multiset(b, query_mapped[k]);
      row.estimated_cost += expected_cost(cands, workload[k].tau, m, hist);
    }
    if (report.rows.empty() || row.estimated_cost < report.rows[static_cast<std::size_t>(
                                                        report.best_levels - m_lo)].estimated_cost) {
      report.best_levels = m;
    }
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace vecjoin
