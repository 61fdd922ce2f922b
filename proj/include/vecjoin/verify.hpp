#pragma once

// Inverted index over repository leaf cells and document-at-a-time
// verification of blocking output.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <span>
#include <tuple>
#include <vector>

#include "vecjoin/core.hpp"
#include "vecjoin/grid.hpp"
#include "vecjoin/pivots.hpp"

namespace vecjoin {

/// Original repository vectors, flattened in column-ordinal order.
class VectorStore {
 public:
  VectorStore() = default;

  static VectorStore from_repository(const Repository& repo) {
    VectorStore s;
    s.dim_ = repo.dim();
    s.data_.reserve(repo.vector_count() * s.dim_);
    for (std::size_t c = 0; c < repo.size(); ++c) {
      const Column& col = repo.columns()[c];
      for (std::size_t r = 0; r < col.size(); ++r) {
        s.data_.insert(s.data_.end(), col.vectors[r].begin(), col.vectors[r].end());
        s.column_of_.push_back(static_cast<std::uint32_t>(c));
        s.record_of_.push_back(static_cast<std::uint32_t>(r));
      }
    }
    return s;
  }

  // column_sizes[c] consecutive rows belong to column ordinal c.
  static VectorStore from_parts(std::size_t dim, std::vector<double> data,
                                std::span<const std::uint32_t> column_sizes) {
    VectorStore s;
    s.dim_ = dim;
    for (std::size_t c = 0; c < column_sizes.size(); ++c) {
      for (std::uint32_t r = 0; r < column_sizes[c]; ++r) {
        s.column_of_.push_back(static_cast<std::uint32_t>(c));
        s.record_of_.push_back(r);
      }
    }
    if (dim == 0 || data.size() != s.column_of_.size() * dim) {
      throw FormatError("vector block does not match the column sizes");
    }
    s.data_ = std::move(data);
    return s;
  }

  const std::vector<double>& data() const { return data_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return column_of_.size(); }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::uint32_t column_of(std::size_t i) const { return column_of_[i]; }
  std::uint32_t record_of(std::size_t i) const { return record_of_[i]; }
  const std::vector<std::uint32_t>& column_ids() const { return column_of_; }

  std::vector<Vector> rows() const {
    std::vector<Vector> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.emplace_back(row(i).begin(), row(i).end());
    return out;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
  std::vector<std::uint32_t> column_of_;
  std::vector<std::uint32_t> record_of_;
};

struct Posting {
  std::uint32_t column = 0;
  std::vector<std::uint32_t> records;  // positions in the VectorStore
  friend bool operator==(const Posting&, const Posting&) = default;
};

/// Leaf position -> postings sorted by column ordinal.
class InvertedIndex {
 public:
  InvertedIndex() = default;
  explicit InvertedIndex(std::vector<std::vector<Posting>> lists) : lists_(std::move(lists)) {
    for (const auto& l : lists_) {
      for (std::size_t i = 1; i < l.size(); ++i)
        if (l[i - 1].column >= l[i].column)
          throw InvariantError("postings list not strictly ascending by column");
      entries_ += l.size();
    }
  }

  static InvertedIndex build(const HierarchicalGrid& grid, const MappedStore& mapped,
                             std::span<const std::uint32_t> column_of) {
    std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> rows;
    rows.reserve(mapped.size());
    for (std::size_t i = 0; i < mapped.size(); ++i) {
      auto leaf = grid.leaf_of(mapped.row(i));
      if (!leaf) throw InvariantError("repository vector outside every occupied leaf");
      rows.emplace_back(*leaf, column_of[i], static_cast<std::uint32_t>(i));
    }
    std::sort(rows.begin(), rows.end());
    std::vector<std::vector<Posting>> lists(grid.leaf_count());
    for (auto [leaf, column, rec] : rows) {
      auto& l = lists[leaf];
      if (l.empty() || l.back().column != column) l.push_back(Posting{column, {}});
      l.back().records.push_back(rec);
    }
    return InvertedIndex(std::move(lists));
  }

  std::size_t leaf_count() const { return lists_.size(); }
  const std::vector<Posting>& postings(std::uint32_t leaf) const { return lists_.at(leaf); }
  const std::vector<std::vector<Posting>>& lists() const { return lists_; }
  // Total number of (leaf, column) entries.
  std::size_t entry_count() const { return entries_; }

 private:
  std::vector<std::vector<Posting>> lists_;
  std::size_t entries_ = 0;
};

inline bool column_prunable(std::size_t mismatch_count, std::size_t query_size,
                            std::size_t t_count) {
  return mismatch_count >= query_size || query_size - mismatch_count < t_count;
}

enum class ColumnStatus : std::uint8_t { open, accepted, pruned };

/// Per-search bookkeeping. mismatch_count[c] counts query vectors proven to
/// have no match in column c.
struct VerificationState {
  std::vector<std::uint32_t> match_count;
  std::vector<std::uint32_t> mismatch_count;
  std::vector<ColumnStatus> status;

  explicit VerificationState(std::size_t columns = 0)
      : match_count(columns, 0), mismatch_count(columns, 0), status(columns, ColumnStatus::open) {}
};

struct VerifyEvent {
  enum class Kind { matching_credit, cell_scan, mismatch, accepted, pruned };
  Kind kind;
  std::uint32_t query = 0;
  std::uint32_t column = 0;
  std::uint32_t leaf = 0;
  bool matched = false;
  const VerificationState* state = nullptr;
};

struct VerifyOptions {
  bool early_termination = true;
  std::function<void(const VerifyEvent&)> trace;
};

struct TargetData {
  const InvertedIndex& index;
  const VectorStore& vectors;
  const MappedStore& mapped;
  std::size_t column_count;
};

struct QueryData {
  std::span<const Vector> vectors;
  const MappedStore& mapped;
};

struct VerifyOutcome {
  std::vector<std::uint32_t> joinable;  // ascending ordinals
  std::map<std::uint32_t, std::vector<MatchPair>> mappings;
  SearchStats stats;
};

/// Drives verification for one query. Matching pairs must all be processed
/// before candidate pairs, and candidate pairs in strictly increasing query
/// order with one pair per query vector.
///
/// A query vector that blocking never paired with any cell of column c is a
/// proven non-match for c. Those are folded into c's mismatch count the first
/// time c records a failed cell scan; a (query, column) whose candidate cells
/// are all scanned without a match adds one more.
class Verifier {
 public:
  Verifier(const BlockingOutput& blocking, TargetData target, QueryData query,
           const SearchParams& params, VerifyOptions options = {})
      : target_(target), query_(query), params_(params), options_(std::move(options)),
        state_(target.column_count), reach_(target.column_count, 0),
        folded_(target.column_count, 0), stamp_(target.column_count, 0),
        phase_one_credit_(query.vectors.size()) {
    check_params(params_, query_.vectors.size());
    count_reach(blocking);
  }

  const VerificationState& state() const { return state_; }
  const SearchStats& stats() const { return stats_; }

  void process_matching_pair(const VectorCellPair& pair) {
    if (in_candidates_) throw InvariantError("matching pair after candidate pairs");
    ++stats_.matching_pairs;
    const std::uint32_t tag = pair.query + 1;
    for (const Posting& p : target_.index.postings(pair.leaf)) {
      const std::uint32_t c = p.column;
      if (skip(c) || stamp_[c] == tag) continue;
      stamp_[c] = tag;
      phase_one_credit_[pair.query].push_back(c);
      auto& m = mappings_[c];
      for (auto rec : p.records) m.push_back({pair.query, target_.vectors.record_of(rec)});
      ++state_.match_count[c];
      emit(VerifyEvent::Kind::matching_credit, pair.query, c, pair.leaf, true);
      maybe_accept(c, pair.query, pair.leaf);
    }
  }

  void process_candidate_pair(const CandidatePair& pair) {
    if (in_candidates_ && pair.query <= last_query_) {
      throw InvariantError("candidate pairs must arrive once per query in ascending order");
    }
    in_candidates_ = true;
    last_query_ = pair.query;
    stats_.candidate_pairs += pair.leaves.size();

    const std::uint32_t tag = pair.query + 1;
    std::fill(stamp_.begin(), stamp_.end(), 0);
    for (auto c : phase_one_credit_[pair.query]) stamp_[c] = tag;

    // Document-at-a-time: one cursor per candidate leaf, smallest column first.
    struct Cursor {
      std::uint32_t column;
      std::uint32_t leaf;
      std::size_t pos;
      bool operator>(const Cursor& o) const {
        return std::tie(column, leaf) > std::tie(o.column, o.leaf);
      }
    };
    std::priority_queue<Cursor, std::vector<Cursor>, std::greater<>> heap;
    for (auto leaf : pair.leaves) {
      const auto& list = target_.index.postings(leaf);
      if (!list.empty()) heap.push({list.front().column, leaf, 0});
    }
    std::vector<std::pair<std::uint32_t, const Posting*>> group;
    while (!heap.empty()) {
      const std::uint32_t c = heap.top().column;
      group.clear();
      while (!heap.empty() && heap.top().column == c) {
        Cursor cur = heap.top();
        heap.pop();
        const auto& list = target_.index.postings(cur.leaf);
        group.emplace_back(cur.leaf, &list[cur.pos]);
        if (cur.pos + 1 < list.size()) heap.push({list[cur.pos + 1].column, cur.leaf, cur.pos + 1});
      }
      if (skip(c) || stamp_[c] == tag) continue;
      verify_column(pair.query, c, group);
    }
  }

  VerifyOutcome finish() {
    VerifyOutcome out;
    for (std::uint32_t c = 0; c < state_.status.size(); ++c) {
      const bool joinable = state_.status[c] == ColumnStatus::accepted ||
                            (state_.status[c] == ColumnStatus::open &&
                             state_.match_count[c] >= params_.t_count);
      if (!joinable) continue;
      out.joinable.push_back(c);
      auto it = mappings_.find(c);
      auto& pairs = out.mappings[c];
      if (it != mappings_.end()) pairs = std::move(it->second);
      std::sort(pairs.begin(), pairs.end());
    }
    out.stats = stats_;
    return out;
  }

 private:
  bool skip(std::uint32_t c) const {
    return options_.early_termination && state_.status[c] != ColumnStatus::open;
  }

  void emit(VerifyEvent::Kind kind, std::uint32_t q, std::uint32_t c, std::uint32_t leaf,
            bool matched) {
    if (options_.trace) options_.trace(VerifyEvent{kind, q, c, leaf, matched, &state_});
  }

  void maybe_accept(std::uint32_t c, std::uint32_t q, std::uint32_t leaf) {
    if (!options_.early_termination || state_.status[c] != ColumnStatus::open) return;
    if (state_.match_count[c] >= params_.t_count) {
      state_.status[c] = ColumnStatus::accepted;
      ++stats_.columns_accepted_early;
      emit(VerifyEvent::Kind::accepted, q, c, leaf, true);
    }
  }

  void verify_column(std::uint32_t q, std::uint32_t c,
                     const std::vector<std::pair<std::uint32_t, const Posting*>>& cells) {
    auto qv = std::span<const double>(query_.vectors[q]);
    auto qm = query_.mapped.row(q);
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const auto [leaf, posting] = cells[k];
      std::optional<std::uint32_t> hit;
      for (auto rec : posting->records) {
        auto xm = target_.mapped.row(rec);
        if (!pivot_filter_admits(qm, xm, params_.tau)) {
          ++stats_.pivot_filtered;
          continue;
        }
        if (pivot_match_confirms(qm, xm, params_.tau)) {
          ++stats_.pivot_matched;
          hit = rec;
          break;
        }
        ++stats_.distance_computations;
        if (params_.metric(qv, target_.vectors.row(rec)) <= params_.tau) {
          hit = rec;
          break;
        }
      }
      emit(VerifyEvent::Kind::cell_scan, q, c, leaf, hit.has_value());
      if (hit) {
        stamp_[c] = q + 1;
        mappings_[c].push_back({q, target_.vectors.record_of(*hit)});
        ++state_.match_count[c];
        maybe_accept(c, q, leaf);
        return;
      }
      bool changed = false;
      if (!folded_[c]) {
        folded_[c] = 1;
        const auto unreachable = static_cast<std::uint32_t>(query_.vectors.size() - reach_[c]);
        state_.mismatch_count[c] += unreachable;
        changed = unreachable > 0;
      }
      if (k + 1 == cells.size()) {
        ++state_.mismatch_count[c];
        changed = true;
      }
      if (changed) emit(VerifyEvent::Kind::mismatch, q, c, leaf, false);
      if (options_.early_termination &&
          column_prunable(state_.mismatch_count[c], query_.vectors.size(), params_.t_count)) {
        state_.status[c] = ColumnStatus::pruned;
        ++stats_.columns_pruned;
        emit(VerifyEvent::Kind::pruned, q, c, leaf, false);
        return;
      }
    }
  }

  void count_reach(const BlockingOutput& blocking) {
    // reach_[c]: query vectors paired by blocking with at least one cell holding c.
    std::vector<std::uint32_t> seen(reach_.size(), 0);
    auto touch = [&](std::uint32_t q, std::uint32_t leaf) {
      for (const Posting& p : target_.index.postings(leaf)) {
        if (seen[p.column] != q + 1) {
          seen[p.column] = q + 1;
          ++reach_[p.column];
        }
      }
    };
    std::map<std::uint32_t, std::vector<std::uint32_t>> by_query;
    for (const auto& m : blocking.matching) by_query[m.query].push_back(m.leaf);
    for (const auto& c : blocking.candidates)
      by_query[c.query].insert(by_query[c.query].end(), c.leaves.begin(), c.leaves.end());
    for (const auto& [q, leaves] : by_query)
      for (auto leaf : leaves) touch(q, leaf);
  }

  TargetData target_;
  QueryData query_;
  const SearchParams& params_;
  VerifyOptions options_;
  VerificationState state_;
  SearchStats stats_;
  std::vector<std::uint32_t> reach_;
  std::vector<char> folded_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::vector<std::uint32_t>> phase_one_credit_;
  std::map<std::uint32_t, std::vector<MatchPair>> mappings_;
  bool in_candidates_ = false;
  std::uint32_t last_query_ = 0;
};

/// Matching pairs first, then candidate pairs. Exact: returns precisely the
/// columns whose joinability reaches t_count / |Q|.
inline VerifyOutcome verify(const BlockingOutput& blocking, TargetData target, QueryData query,
                            const SearchParams& params, VerifyOptions options = {}) {
  Verifier v(blocking, target, query, params, std::move(options));
  for (const auto& m : blocking.matching) v.process_matching_pair(m);
  for (const auto& c : blocking.candidates) v.process_candidate_pair(c);
  return v.finish();
}

}  // namespace vecjoin
