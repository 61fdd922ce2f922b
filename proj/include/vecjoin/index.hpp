#pragma once

// The searchable index: pivots, repository grid, inverted index and cost
// histograms over one repository, plus the two exact search engines that run
// on it (inverted-index verification and the naive per-cell baseline).

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vecjoin/core.hpp"
#include "vecjoin/cost.hpp"
#include "vecjoin/grid.hpp"
#include "vecjoin/pivots.hpp"
#include "vecjoin/verify.hpp"

namespace vecjoin {

struct IndexOptions {
  PivotOptions pivots;
  int levels = 6;
  std::size_t hist_bins = 64;
};

struct SearchOptions {
  bool quick_browse = true;
  bool early_termination = true;
  std::function<void(const VerifyEvent&)> trace;
};

class JoinIndex {
 public:
  struct Parts {
    Metric metric = Metric::euclidean();
    GridConfig config;
    PivotSet pivots;
    std::vector<std::string> column_ids;
    std::vector<std::string> table_ids;
    VectorStore vectors;
    MappedStore mapped;
    HierarchicalGrid grid;
    InvertedIndex inverted;
    DimHistogram histogram;
  };

  struct PreparedQuery {
    MappedStore mapped;
    HierarchicalGrid grid;
  };

  JoinIndex() = default;

  explicit JoinIndex(Parts parts) : p_(std::move(parts)) {
    if (p_.column_ids.size() != p_.table_ids.size()) {
      throw FormatError("column and table id tables differ in length");
    }
    if (p_.mapped.size() != p_.vectors.size() || p_.mapped.width() != p_.pivots.size()) {
      throw FormatError("mapped vectors inconsistent with stored vectors or pivots");
    }
    if (p_.inverted.leaf_count() != p_.grid.leaf_count()) {
      throw FormatError("postings do not cover the grid leaves");
    }
    if (!(p_.grid.config() == p_.config)) throw FormatError("grid configuration mismatch");
  }

  static JoinIndex build(const Repository& repo, PivotSet pivots, int levels,
                         std::size_t hist_bins) {
    if (repo.empty()) throw InputError("cannot index an empty repository");
    Parts p;
    p.metric = pivots.metric;
    p.config = GridConfig{pivots.size(), levels, pivots.metric.d_max};
    p.vectors = VectorStore::from_repository(repo);
    for (const Column& c : repo.columns()) {
      p.column_ids.push_back(c.column_id);
      p.table_ids.push_back(c.table_id);
    }
    const std::vector<Vector> rows = p.vectors.rows();
    p.mapped = map_all(rows, pivots);
    p.pivots = std::move(pivots);
    p.grid = HierarchicalGrid::build(p.mapped, p.config, false);
    p.inverted = InvertedIndex::build(p.grid, p.mapped, p.vectors.column_ids());
    p.histogram = estimate_pdf(p.mapped, hist_bins, p.config.d_max);
    return JoinIndex(std::move(p));
  }

  static JoinIndex build(const Repository& repo, const IndexOptions& options = {},
                         const Metric& metric = Metric::euclidean()) {
    if (repo.empty()) throw InputError("cannot index an empty repository");
    std::vector<Vector> rows;
    rows.reserve(repo.vector_count());
    for (const Column& c : repo.columns()) rows.insert(rows.end(), c.vectors.begin(), c.vectors.end());
    PivotSet pivots = select_pivots(rows, options.pivots, metric);
    return build(repo, std::move(pivots), options.levels, options.hist_bins);
  }

  const Parts& parts() const { return p_; }
  const Metric& metric() const { return p_.metric; }
  const GridConfig& config() const { return p_.config; }
  const PivotSet& pivots() const { return p_.pivots; }
  const std::vector<std::string>& column_ids() const { return p_.column_ids; }
  std::size_t column_count() const { return p_.column_ids.size(); }
  std::size_t dim() const { return p_.vectors.dim(); }
  const VectorStore& vectors() const { return p_.vectors; }
  const MappedStore& mapped() const { return p_.mapped; }
  const HierarchicalGrid& grid() const { return p_.grid; }
  const InvertedIndex& inverted() const { return p_.inverted; }
  const DimHistogram& histogram() const { return p_.histogram; }

  Repository repository() const {
    std::vector<Column> cols(column_count());
    for (std::size_t c = 0; c < cols.size(); ++c) {
      cols[c].column_id = p_.column_ids[c];
      cols[c].table_id = p_.table_ids[c];
    }
    for (std::size_t i = 0; i < p_.vectors.size(); ++i) {
      auto r = p_.vectors.row(i);
      cols[p_.vectors.column_of(i)].vectors.emplace_back(r.begin(), r.end());
    }
    return Repository(std::move(cols));
  }

  PreparedQuery prepare(const Column& query) const {
    check_query(query);
    PreparedQuery pq;
    pq.mapped = map_all(query.vectors, p_.pivots);
    pq.grid = HierarchicalGrid::build(pq.mapped, p_.config, true);
    return pq;
  }

  BlockingOutput blocking(const PreparedQuery& pq, double tau, bool quick,
                          std::uint64_t* quick_pairs = nullptr) const {
    BlockingOutput b = block(pq.grid, pq.mapped, p_.grid, tau, BlockOptions{quick});
    if (quick) {
      const auto qb = quick_browse(pq.grid, p_.grid);
      if (quick_pairs) *quick_pairs = qb.size();
      merge_candidates(b, qb);
    }
    return b;
  }

  JoinResult search(const Column& query, const SearchParams& params,
                    const SearchOptions& options = {}) const {
    check_query(query);
    check_metric(params);
    check_params(params, query.size());
    const PreparedQuery pq = prepare(query);
    std::uint64_t qb_pairs = 0;
    const BlockingOutput b = blocking(pq, params.tau, options.quick_browse, &qb_pairs);
    VerifyOutcome v = verify(b, TargetData{p_.inverted, p_.vectors, p_.mapped, column_count()},
                             QueryData{query.vectors, pq.mapped}, params,
                             VerifyOptions{options.early_termination, options.trace});
    JoinResult r;
    for (auto c : v.joinable) {
      r.joinable.push_back(p_.column_ids[c]);
      r.mappings.emplace(p_.column_ids[c], std::move(v.mappings[c]));
    }
    r.stats = v.stats;
    r.stats.mapping_computations = query.size() * p_.pivots.size();
    r.stats.quick_browse_pairs = qb_pairs;
    return r;
  }

  /// Same blocking, then every vector of every candidate cell is compared
  /// with the query vector directly. No postings, no early termination.
  JoinResult search_pexeso_h(const Column& query, const SearchParams& params,
                             bool quick = true) const {
    check_query(query);
    check_metric(params);
    check_params(params, query.size());
    const PreparedQuery pq = prepare(query);
    std::uint64_t qb_pairs = 0;
    const BlockingOutput b = blocking(pq, params.tau, quick, &qb_pairs);

    JoinResult r;
    r.stats.mapping_computations = query.size() * p_.pivots.size();
    r.stats.quick_browse_pairs = qb_pairs;
    r.stats.matching_pairs = b.matching.size();
    r.stats.candidate_pairs = b.candidate_pair_count();

    std::map<std::uint32_t, std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>> work;
    for (const auto& m : b.matching) work[m.query].first.push_back(m.leaf);
    for (const auto& c : b.candidates) work[c.query].second = c.leaves;

    std::vector<std::uint32_t> count(column_count(), 0);
    std::vector<std::uint32_t> stamp(column_count(), 0);
    std::map<std::uint32_t, std::vector<MatchPair>> pairs;
    for (const auto& [q, leaves] : work) {
      const std::uint32_t tag = q + 1;
      auto credit = [&](std::size_t rec) {
        const auto c = p_.vectors.column_of(rec);
        pairs[c].push_back({q, p_.vectors.record_of(rec)});
        if (stamp[c] != tag) {
          stamp[c] = tag;
          ++count[c];
        }
      };
      for (auto leaf : leaves.first)
        for (const Posting& p : p_.inverted.postings(leaf))
          for (auto rec : p.records) credit(rec);
      for (auto leaf : leaves.second) {
        for (const Posting& p : p_.inverted.postings(leaf)) {
          for (auto rec : p.records) {
            ++r.stats.distance_computations;
            if (params.metric(query.vectors[q], p_.vectors.row(rec)) <= params.tau) credit(rec);
          }
        }
      }
    }
    for (std::uint32_t c = 0; c < count.size(); ++c) {
      if (count[c] < params.t_count) continue;
      auto& v = pairs[c];
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      r.joinable.push_back(p_.column_ids[c]);
      r.mappings.emplace(p_.column_ids[c], std::move(v));
    }
    return r;
  }

 private:
  void check_query(const Column& query) const {
    if (query.vectors.empty()) throw InputError("query column is empty");
    if (query.dim() != dim()) {
      throw InputError("query dimension " + std::to_string(query.dim()) +
                       " does not match index dimension " + std::to_string(dim()));
    }
  }

  void check_metric(const SearchParams& params) const {
    if (params.metric.id != p_.metric.id) {
      throw InputError("search metric '" + params.metric.id + "' differs from index metric '" +
                       p_.metric.id + "'");
    }
  }

  Parts p_;
};

}  // namespace vecjoin
