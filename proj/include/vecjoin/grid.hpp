#pragma once

// Hierarchical grids over the pivot space and the blocking pass that pairs
// query vectors with repository leaf cells.
//
// Level i (1-based) slices each pivot dimension of [0, d_max] into 2^i equal
// slices. Cells are addressed by per-dimension slice indices, so the parent
// of a cell is obtained by halving each index. Only occupied cells are kept.
// Cell bounds are treated as closed intervals [lo, hi] in every predicate;
// a vector is assigned to the slice s with s*w <= c < (s+1)*w, except that
// c == d_max falls in the last slice.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "vecjoin/core.hpp"
#include "vecjoin/pivots.hpp"

namespace vecjoin {

struct GridConfig {
  std::size_t n_pivots = 5;
  int levels = 6;
  double d_max = 2.0;

  std::uint32_t slices(int level) const { return std::uint32_t{1} << level; }
  double cell_width(int level) const { return std::ldexp(d_max, -level); }

  void validate() const {
    if (levels < 1) throw InputError("grid needs at least one level");
    if (levels > 30) throw InputError("grid level count above 30 is not supported");
    if (n_pivots < 1) throw InputError("grid needs at least one pivot dimension");
    if (!(d_max > 0.0)) throw InputError("grid domain must be positive");
  }

  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

using CellIndex = std::vector<std::uint32_t>;

/// Slice holding coordinate c at the given level.
inline std::uint32_t slice_of(double c, int level, const GridConfig& cfg) {
  const double w = cfg.cell_width(level);
  const std::uint32_t last = cfg.slices(level) - 1;
  if (!(c > 0.0)) return 0;
  if (c >= cfg.d_max) return last;
  auto s = static_cast<std::int64_t>(std::floor(c / w));
  s = std::clamp<std::int64_t>(s, 0, last);
  // Division rounding can land one slice off; settle against the bounds
  // the predicates actually use.
  while (s > 0 && c < static_cast<double>(s) * w) --s;
  while (s < static_cast<std::int64_t>(last) && c >= static_cast<double>(s + 1) * w) ++s;
  return static_cast<std::uint32_t>(s);
}

struct Cell {
  int level = 1;
  CellIndex indices;

  double lower(std::size_t i, const GridConfig& cfg) const {
    return static_cast<double>(indices[i]) * cfg.cell_width(level);
  }
  double upper(std::size_t i, const GridConfig& cfg) const {
    return static_cast<double>(indices[i] + 1) * cfg.cell_width(level);
  }
  Cell parent() const {
    Cell p{level - 1, indices};
    for (auto& s : p.indices) s >>= 1;
    return p;
  }

  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

inline Cell cell_of(std::span<const double> point, int level, const GridConfig& cfg) {
  Cell c{level, CellIndex(point.size())};
  for (std::size_t i = 0; i < point.size(); ++i) c.indices[i] = slice_of(point[i], level, cfg);
  return c;
}

/// Axis-aligned box with closed per-dimension intervals; hi may be +inf.
struct AxisBox {
  Vector lo;
  Vector hi;

  bool contains(std::span<const double> p) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (p[i] < lo[i] || p[i] > hi[i]) return false;
    return true;
  }
  bool contains(const AxisBox& o) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (o.lo[i] < lo[i] || o.hi[i] > hi[i]) return false;
    return true;
  }
  bool intersects(const AxisBox& o) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (o.hi[i] < lo[i] || o.lo[i] > hi[i]) return false;
    return true;
  }
};

inline AxisBox cell_box(const Cell& c, const GridConfig& cfg) {
  AxisBox b{Vector(c.indices.size()), Vector(c.indices.size())};
  for (std::size_t i = 0; i < c.indices.size(); ++i) {
    b.lo[i] = c.lower(i, cfg);
    b.hi[i] = c.upper(i, cfg);
  }
  return b;
}

// Square query region: everything outside cannot match the query.
inline AxisBox sqr_of_vector(std::span<const double> q, double tau, double d_max) {
  AxisBox b{Vector(q.size()), Vector(q.size())};
  for (std::size_t i = 0; i < q.size(); ++i) {
    b.lo[i] = std::max(0.0, q[i] - tau);
    b.hi[i] = std::min(d_max, q[i] + tau);
  }
  return b;
}

// Square region around a query cell's center with half-width tau + edge / 2.
inline AxisBox sqr_of_cell(const Cell& cq, double tau, const GridConfig& cfg) {
  const double half = cfg.cell_width(cq.level) / 2.0;
  AxisBox b{Vector(cq.indices.size()), Vector(cq.indices.size())};
  for (std::size_t i = 0; i < cq.indices.size(); ++i) {
    const double center = cq.lower(i, cfg) + half;
    b.lo[i] = std::max(0.0, center - tau - half);
    b.hi[i] = std::min(cfg.d_max, center + tau + half);
  }
  return b;
}

// Rectangle query region for pivot i: everything inside matches the query.
inline std::optional<AxisBox> rqr_of_vector(std::span<const double> q, std::size_t i, double tau) {
  const double edge = tau - q[i];
  if (edge < 0.0) return std::nullopt;
  AxisBox b{Vector(q.size(), 0.0), Vector(q.size(), std::numeric_limits<double>::infinity())};
  b.hi[i] = edge;
  return b;
}

// Intersection of the rectangle regions of every point a query cell can hold.
inline std::optional<AxisBox> min_rqr_of_cell(const Cell& cq, std::size_t i, double tau,
                                              const GridConfig& cfg) {
  const double edge = tau - cq.upper(i, cfg);
  if (edge < 0.0) return std::nullopt;
  AxisBox b{Vector(cq.indices.size(), 0.0),
            Vector(cq.indices.size(), std::numeric_limits<double>::infinity())};
  b.hi[i] = edge;
  return b;
}

class HierarchicalGrid {
 public:
  struct Node {
    CellIndex indices;
    std::vector<std::uint32_t> children;  // positions in the next level
    std::uint64_t leaf_count = 0;         // occupied leaves underneath
    std::uint64_t vector_count = 0;
    std::vector<std::uint32_t> members;   // leaf only, when membership is kept
  };

  HierarchicalGrid() = default;

  /// Points are rows of `mapped`; member ids are row positions. Coordinates
  /// marginally outside [0, d_max] (by at most 1e-9) are clamped and counted.
  static HierarchicalGrid build(const MappedStore& mapped, const GridConfig& cfg,
                                bool keep_membership) {
    cfg.validate();
    if (mapped.width() != cfg.n_pivots) {
      throw InputError("mapped width " + std::to_string(mapped.width()) +
                       " does not match pivot count " + std::to_string(cfg.n_pivots));
    }
    HierarchicalGrid g;
    g.config_ = cfg;
    g.keep_membership_ = keep_membership;

    std::vector<std::pair<CellIndex, std::uint32_t>> addressed;
    addressed.reserve(mapped.size());
    Vector clamped(cfg.n_pivots);
    for (std::size_t r = 0; r < mapped.size(); ++r) {
      auto row = mapped.row(r);
      for (std::size_t i = 0; i < row.size(); ++i) {
        double c = row[i];
        if (!std::isfinite(c) || c < -1e-9 || c > cfg.d_max + 1e-9) {
          throw InputError("pivot coordinate " + std::to_string(c) + " outside [0, " +
                           std::to_string(cfg.d_max) + "]");
        }
        if (c < 0.0 || c > cfg.d_max) {
          c = std::clamp(c, 0.0, cfg.d_max);
          ++g.clamped_;
        }
        clamped[i] = c;
      }
      addressed.emplace_back(cell_of(clamped, cfg.levels, cfg).indices,
                             static_cast<std::uint32_t>(r));
    }
    g.assemble(std::move(addressed));
    return g;
  }

  /// Rebuilds a repository grid from its occupied leaf addresses.
  static HierarchicalGrid from_leaves(std::vector<CellIndex> leaves,
                                      std::vector<std::uint64_t> leaf_vector_counts,
                                      const GridConfig& cfg) {
    cfg.validate();
    HierarchicalGrid g;
    g.config_ = cfg;
    std::vector<std::pair<CellIndex, std::uint32_t>> addressed;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      if (leaves[i].size() != cfg.n_pivots) throw FormatError("leaf address width mismatch");
      for (auto s : leaves[i])
        if (s >= cfg.slices(cfg.levels)) throw FormatError("leaf address out of range");
      if (leaf_vector_counts.at(i) == 0) throw FormatError("empty leaf in occupancy table");
      for (std::uint64_t k = 0; k < leaf_vector_counts.at(i); ++k)
        addressed.emplace_back(leaves[i], 0);
    }
    g.assemble(std::move(addressed));
    if (g.leaf_count() != leaves.size()) throw FormatError("duplicate leaf addresses");
    return g;
  }

  const GridConfig& config() const { return config_; }
  int levels() const { return config_.levels; }
  bool keeps_membership() const { return keep_membership_; }
  std::size_t clamped_count() const { return clamped_; }

  std::size_t level_size(int level) const { return levels_.at(level - 1).size(); }
  const Node& node(int level, std::uint32_t i) const { return levels_[level - 1][i]; }
  std::size_t leaf_count() const { return levels_.empty() ? 0 : levels_.back().size(); }
  const Node& leaf(std::uint32_t i) const { return levels_.back()[i]; }

  Cell cell(int level, std::uint32_t i) const { return Cell{level, node(level, i).indices}; }
  Cell leaf_cell(std::uint32_t i) const { return cell(config_.levels, i); }

  std::optional<std::uint32_t> find(int level, const CellIndex& indices) const {
    const auto& nodes = levels_.at(level - 1);
    auto it = std::lower_bound(nodes.begin(), nodes.end(), indices,
                               [](const Node& n, const CellIndex& k) { return n.indices < k; });
    if (it == nodes.end() || it->indices != indices) return std::nullopt;
    return static_cast<std::uint32_t>(it - nodes.begin());
  }
  std::optional<std::uint32_t> find_leaf(const CellIndex& indices) const {
    return find(config_.levels, indices);
  }

  /// Leaf position for a point that lies in an occupied leaf.
  std::optional<std::uint32_t> leaf_of(std::span<const double> point) const {
    Vector c(point.begin(), point.end());
    for (double& x : c) x = std::clamp(x, 0.0, config_.d_max);
    return find_leaf(cell_of(c, config_.levels, config_).indices);
  }

 private:
  void assemble(std::vector<std::pair<CellIndex, std::uint32_t>> addressed) {
    std::sort(addressed.begin(), addressed.end());
    const int m = config_.levels;
    levels_.assign(m, {});
    auto& leaves = levels_[m - 1];
    for (auto& [idx, member] : addressed) {
      if (leaves.empty() || leaves.back().indices != idx) {
        leaves.push_back(Node{idx, {}, 1, 0, {}});
      }
      ++leaves.back().vector_count;
      if (keep_membership_) leaves.back().members.push_back(member);
    }
    for (int level = m - 1; level >= 1; --level) {
      auto& children = levels_[level];
      std::vector<std::pair<CellIndex, std::uint32_t>> parents;
      parents.reserve(children.size());
      for (std::uint32_t c = 0; c < children.size(); ++c) {
        CellIndex p = children[c].indices;
        for (auto& s : p) s >>= 1;
        parents.emplace_back(std::move(p), c);
      }
      std::sort(parents.begin(), parents.end());
      auto& nodes = levels_[level - 1];
      for (auto& [idx, child] : parents) {
        if (nodes.empty() || nodes.back().indices != idx) nodes.push_back(Node{idx, {}, 0, 0, {}});
        Node& n = nodes.back();
        n.children.push_back(child);
        n.leaf_count += children[child].leaf_count;
        n.vector_count += children[child].vector_count;
      }
    }
  }

  GridConfig config_;
  bool keep_membership_ = false;
  std::size_t clamped_ = 0;
  std::vector<std::vector<Node>> levels_;  // levels_[i] holds level i + 1
};

struct VectorCellPair {
  std::uint32_t query = 0;
  std::uint32_t leaf = 0;
  friend bool operator==(const VectorCellPair&, const VectorCellPair&) = default;
  friend auto operator<=>(const VectorCellPair&, const VectorCellPair&) = default;
};

struct CandidatePair {
  std::uint32_t query = 0;
  std::vector<std::uint32_t> leaves;  // ascending repository leaf positions
  friend bool operator==(const CandidatePair&, const CandidatePair&) = default;
};

/// Blocking result. Leaves are positions in the repository grid's leaf level.
/// The counters account for every (query vector, occupied leaf) combination.
struct BlockingOutput {
  std::vector<VectorCellPair> matching;
  std::vector<CandidatePair> candidates;
  std::uint64_t pruned = 0;
  std::uint64_t skipped_same_address = 0;

  std::uint64_t candidate_pair_count() const {
    std::uint64_t n = 0;
    for (const auto& c : candidates) n += c.leaves.size();
    return n;
  }
};

struct BlockOptions {
  // Leave identical-address (query leaf, repository leaf) pairs to quick browsing.
  bool skip_same_address = false;
};

namespace detail {

class Blocker {
 public:
  Blocker(const HierarchicalGrid& hq, const MappedStore& qmapped, const HierarchicalGrid& hr,
          double tau, BlockOptions options)
      : hq_(hq), qmapped_(qmapped), hr_(hr), cfg_(hq.config()), tau_(tau), options_(options),
        candidate_lists_(qmapped.size()) {}

  BlockingOutput run() {
    std::vector<std::uint32_t> top(hr_.level_size(1));
    for (std::uint32_t i = 0; i < top.size(); ++i) top[i] = i;
    for (std::uint32_t q = 0; q < hq_.level_size(1); ++q) descend(1, q, top);

    std::sort(out_.matching.begin(), out_.matching.end());
    for (std::uint32_t q = 0; q < candidate_lists_.size(); ++q) {
      auto& leaves = candidate_lists_[q];
      if (leaves.empty()) continue;
      std::sort(leaves.begin(), leaves.end());
      out_.candidates.push_back(CandidatePair{q, std::move(leaves)});
    }
    return std::move(out_);
  }

 private:
  double qlo(const HierarchicalGrid::Node& n, int level, std::size_t i) const {
    return static_cast<double>(n.indices[i]) * cfg_.cell_width(level);
  }
  double qhi(const HierarchicalGrid::Node& n, int level, std::size_t i) const {
    return static_cast<double>(n.indices[i] + 1) * cfg_.cell_width(level);
  }

  // Query cell vs target cell: disjoint from the widened query region.
  bool cells_filtered(const HierarchicalGrid::Node& qc, const HierarchicalGrid::Node& tc,
                      int level) const {
    for (std::size_t i = 0; i < cfg_.n_pivots; ++i) {
      if (qhi(tc, level, i) < qlo(qc, level, i) - tau_) return true;
      if (qlo(tc, level, i) > qhi(qc, level, i) + tau_) return true;
    }
    return false;
  }

  // Target cell inside the rectangle region shared by every point of the query cell.
  bool cells_matched(const HierarchicalGrid::Node& qc, const HierarchicalGrid::Node& tc,
                     int level) const {
    for (std::size_t i = 0; i < cfg_.n_pivots; ++i) {
      const double edge = tau_ - qhi(qc, level, i);
      if (edge >= 0.0 && qhi(tc, level, i) <= edge) return true;
    }
    return false;
  }

  bool vector_filtered(std::span<const double> q, const HierarchicalGrid::Node& tc) const {
    const int m = cfg_.levels;
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (qhi(tc, m, i) < q[i] - tau_) return true;
      if (qlo(tc, m, i) > q[i] + tau_) return true;
    }
    return false;
  }

  bool vector_matched(std::span<const double> q, const HierarchicalGrid::Node& tc) const {
    const int m = cfg_.levels;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double edge = tau_ - q[i];
      if (edge >= 0.0 && qhi(tc, m, i) <= edge) return true;
    }
    return false;
  }

  void collect_leaves(const HierarchicalGrid& g, int level, std::uint32_t i,
                      std::vector<std::uint32_t>& out) const {
    if (level == cfg_.levels) {
      out.push_back(i);
      return;
    }
    for (auto c : g.node(level, i).children) collect_leaves(g, level + 1, c, out);
  }

  void emit_all(int level, std::uint32_t qnode, std::uint32_t tnode) {
    std::vector<std::uint32_t> qleaves, tleaves;
    collect_leaves(hq_, level, qnode, qleaves);
    collect_leaves(hr_, level, tnode, tleaves);
    for (auto ql : qleaves) {
      const auto& qleaf = hq_.leaf(ql);
      for (auto tl : tleaves) {
        const bool same = hr_.leaf(tl).indices == qleaf.indices;
        for (auto q : qleaf.members) {
          if (options_.skip_same_address && same) {
            ++out_.skipped_same_address;
          } else {
            out_.matching.push_back({q, tl});
          }
        }
      }
    }
  }

  void descend(int level, std::uint32_t qnode, const std::vector<std::uint32_t>& targets) {
    const auto& qc = hq_.node(level, qnode);
    if (level == cfg_.levels) {
      for (auto q : qc.members) {
        auto qrow = qmapped_.row(q);
        for (auto t : targets) {
          const auto& tc = hr_.node(level, t);
          if (options_.skip_same_address && tc.indices == qc.indices) {
            ++out_.skipped_same_address;
          } else if (vector_filtered(qrow, tc)) {
            ++out_.pruned;
          } else if (vector_matched(qrow, tc)) {
            out_.matching.push_back({q, t});
          } else {
            candidate_lists_[q].push_back(t);
          }
        }
      }
      return;
    }

    std::vector<std::uint32_t> survivors;
    for (auto t : targets) {
      const auto& tc = hr_.node(level, t);
      if (cells_filtered(qc, tc, level)) {
        out_.pruned += qc.vector_count * tc.leaf_count;
      } else if (cells_matched(qc, tc, level)) {
        emit_all(level, qnode, t);
      } else {
        survivors.push_back(t);
      }
    }
    if (survivors.empty()) return;
    std::vector<std::uint32_t> next;
    for (auto t : survivors) {
      const auto& ch = hr_.node(level, t).children;
      next.insert(next.end(), ch.begin(), ch.end());
    }
    std::sort(next.begin(), next.end());
    for (auto qchild : qc.children) descend(level + 1, qchild, next);
  }

  const HierarchicalGrid& hq_;
  const MappedStore& qmapped_;
  const HierarchicalGrid& hr_;
  GridConfig cfg_;
  double tau_;
  BlockOptions options_;
  std::vector<std::vector<std::uint32_t>> candidate_lists_;
  BlockingOutput out_;
};

}  // namespace detail

/// Simultaneous top-down descent of the query grid and the repository grid.
/// Repository cells are pruned or matched wholesale against same-level query
/// cells; at the leaves each query vector is checked against each surviving
/// leaf. Any (q, x) with d(q, x) <= tau ends up with x's leaf in q's matching
/// pairs or candidate pairs (or in quick browsing when skip_same_address).
inline BlockingOutput block(const HierarchicalGrid& hq, const MappedStore& query_mapped,
                            const HierarchicalGrid& hr, double tau,
                            const BlockOptions& options = {}) {
  if (!(hq.config() == hr.config())) {
    throw InputError("query and repository grids differ in configuration");
  }
  if (!hq.keeps_membership()) throw InvariantError("query grid must keep leaf membership");
  if (!(tau >= 0.0)) throw InputError("tau must be non-negative");
  if (hq.leaf_count() == 0 || hr.leaf_count() == 0) return {};
  return detail::Blocker(hq, query_mapped, hr, tau, options).run();
}

/// Pairs each query vector with the repository leaf that has its own address.
inline std::vector<VectorCellPair> quick_browse(const HierarchicalGrid& hq,
                                                const HierarchicalGrid& hr) {
  if (hq.levels() != hr.levels()) throw InputError("grids differ in level count");
  std::vector<VectorCellPair> out;
  if (hq.leaf_count() == 0) return out;
  for (std::uint32_t i = 0; i < hq.leaf_count(); ++i) {
    const auto& qleaf = hq.leaf(i);
    if (auto t = hr.find_leaf(qleaf.indices)) {
      for (auto q : qleaf.members) out.push_back({q, *t});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Folds quick-browsing pairs into the candidate lists.
inline void merge_candidates(BlockingOutput& blocking, const std::vector<VectorCellPair>& extra) {
  if (extra.empty()) return;
  std::map<std::uint32_t, std::vector<std::uint32_t>> lists;
  for (auto& c : blocking.candidates) lists[c.query] = std::move(c.leaves);
  for (const auto& p : extra) lists[p.query].push_back(p.leaf);
  blocking.candidates.clear();
  for (auto& [q, leaves] : lists) {
    std::sort(leaves.begin(), leaves.end());
    leaves.erase(std::unique(leaves.begin(), leaves.end()), leaves.end());
    blocking.candidates.push_back(CandidatePair{q, std::move(leaves)});
  }
}

}  // namespace vecjoin
