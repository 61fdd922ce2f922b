// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "synthetic.hpp"
#include "vecjoin/vecjoin.hpp"
#include "walkthrough.hpp"

using namespace vecjoin;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

int report(int id, const char* name, const std::function<Verdict()>& check) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  std::printf("%s [%d] %s: %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str(), s);
  std::fflush(stdout);
  return v.pass ? 0 : 1;
}

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const double kTauPcts[] = {0.02, 0.04, 0.06, 0.08};
const double kTPcts[] = {0.2, 0.4, 0.6, 0.8};

// ---- shared corpus for criteria 1 and 7 -----------------------------------

struct CorpusCase {
  synth::Instance inst;
  JoinIndex index;
  std::vector<Column> queries;
};

std::vector<CorpusCase> build_corpus() {
  std::vector<CorpusCase> corpus;
  for (std::uint64_t r = 0; r < 100; ++r) {
    std::mt19937_64 rng(1000 + r);
    const std::size_t dim = r % 2 ? 50 : 10;
    synth::RepoSpec spec;
    spec.columns = std::uniform_int_distribution<std::size_t>(20, 100)(rng);
    spec.min_size = 10;
    spec.max_size = 200;
    spec.dim = dim;
    spec.clusters = std::uniform_int_distribution<std::size_t>(3, 10)(rng);
    spec.sigma = 0.1 / std::sqrt(static_cast<double>(dim));
    spec.uniform_fraction = 0.3;
    CorpusCase c;
    c.inst = synth::random_instance(2000 + r, spec);
    c.index = JoinIndex::build(c.inst.repo);
    for (int k = 0; k < 2; ++k) {
      const std::size_t size = std::uniform_int_distribution<std::size_t>(10, 60)(rng);
      c.queries.push_back(synth::random_query(c.inst, 3000 + 2 * r + k, size, 0.6,
                                              0.05 / std::sqrt(static_cast<double>(dim))));
    }
    corpus.push_back(std::move(c));
  }
  return corpus;
}

Verdict oracle_exactness(const std::vector<CorpusCase>& corpus) {
  std::size_t runs = 0, mismatches = 0, nonempty = 0;
  for (const auto& c : corpus) {
    for (const Column& q : c.queries) {
      for (double tp : kTauPcts) {
        for (double jp : kTPcts) {
          const SearchParams p = make_params(tp, jp, q.size());
          const auto pexeso = c.index.search(q, p).joinable;
          const auto h = c.index.search_pexeso_h(q, p).joinable;
          const auto brute = brute_force_search(c.inst.repo, q, p).joinable;
          ++runs;
          nonempty += !brute.empty();
          mismatches += !(pexeso == brute && h == brute);
        }
      }
    }
  }
  return {mismatches == 0, fmt("%zu runs over %zu repositories, %zu with non-empty answers, %zu mismatches",
                               runs, corpus.size(), nonempty, mismatches)};
}

Verdict toggles_preserve_results(const std::vector<CorpusCase>& corpus) {
  std::size_t runs = 0, mismatches = 0;
  for (const auto& c : corpus) {
    for (const Column& q : c.queries) {
      for (double tp : kTauPcts) {
        for (double jp : kTPcts) {
          const SearchParams p = make_params(tp, jp, q.size());
          const auto base = c.index.search(q, p).joinable;
          for (int mask = 1; mask < 4; ++mask) {
            SearchOptions o;
            o.quick_browse = (mask & 1) == 0;
            o.early_termination = (mask & 2) == 0;
            mismatches += c.index.search(q, p, o).joinable != base;
            ++runs;
          }
        }
      }
    }
  }
  return {mismatches == 0, fmt("%zu toggled runs, %zu differ from the default result", runs, mismatches)};
}

// ---- criterion 2 ----------------------------------------------------------

Verdict lemma_soundness() {
  constexpr int kTrials = 100000;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uint64_t violations[7] = {};
  std::uint64_t exercised[7] = {};  // trials where the lemma's premise held
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t dim = 3 + t % 48;
    const std::size_t np = 1 + t % std::min<std::size_t>(5, dim - 1);
    const int m = 1 + t % 8;
    std::vector<Vector> pool;
    for (std::size_t i = 0; i < np; ++i) pool.push_back(synth::random_unit(rng, dim));
    const PivotSet ps{pool, Metric::euclidean()};
    const double tau = u(rng) * 0.6;
    // Query near a pivot a third of the time so the match rules fire.
    const Vector q = t % 3 == 0 ? synth::around(pool[0], 0.3 * tau / std::sqrt(double(dim)), rng)
                                : synth::random_unit(rng, dim);
    const Vector x = synth::around(q, u(rng) * 1.5 * tau / std::sqrt(double(dim)) + 1e-9, rng);
    const double d = distance(q, x);
    const bool close = d <= tau;
    const MappedVector mq = map_vector(q, ps), mx = map_vector(x, ps);
    const GridConfig cfg{np, m, 2.0};

    // 1: pivot filter never drops a true match.
    if (close) ++exercised[1], violations[1] += !pivot_filter_admits(mq, mx, tau);
    // 2: pivot match never confirms a non-match.
    if (pivot_match_confirms(mq, mx, tau)) ++exercised[2], violations[2] += !close;
    // 3: x's leaf meets the square region of q.
    const AxisBox xleaf = cell_box(cell_of(mx.coords, m, cfg), cfg);
    if (close) ++exercised[3], violations[3] += !xleaf.intersects(sqr_of_vector(mq.coords, tau, 2.0));
    for (int level = 1; level <= m; ++level) {
      const Cell qc = cell_of(mq.coords, level, cfg), xc = cell_of(mx.coords, level, cfg);
      const AxisBox xbox = cell_box(xc, cfg);
      // 4: at every level, x's cell meets the widened region of q's cell.
      if (close) ++exercised[4], violations[4] += !xbox.intersects(sqr_of_cell(qc, tau, cfg));
      // 6: a cell inside a query cell's shared rectangle only holds matches.
      for (std::size_t i = 0; i < np; ++i) {
        const auto r = min_rqr_of_cell(qc, i, tau, cfg);
        if (r && r->contains(xbox)) ++exercised[6], violations[6] += !close;
      }
    }
    // 5: a leaf inside a rectangle region of q only holds matches.
    for (std::size_t i = 0; i < np; ++i) {
      const auto r = rqr_of_vector(mq.coords, i, tau);
      if (r && r->contains(xleaf)) ++exercised[5], violations[5] += !close;
    }
    // Same trial through the blocking pass itself.
    MappedStore qs(np), xs(np);
    qs.push_back(mq.coords);
    xs.push_back(mx.coords);
    const auto b = block(HierarchicalGrid::build(qs, cfg, true), qs, HierarchicalGrid::build(xs, cfg, false), tau);
    const bool paired = !b.matching.empty() || !b.candidates.empty();
    if (close) ++exercised[0], violations[0] += !paired;
    if (!b.matching.empty()) violations[0] += !close;
  }
  bool ok = true;
  std::string detail = fmt("%d trials;", kTrials);
  static constexpr const char* kNames[7] = {"", "pivot-filter", "pivot-match", "leaf-square",
                                            "cell-square", "leaf-rect", "cell-rect"};
  for (int l = 1; l <= 6; ++l) {
    ok = ok && violations[l] == 0 && exercised[l] > 0;
    detail += fmt(" %s %llu/%llu", kNames[l], static_cast<unsigned long long>(violations[l]),
                  static_cast<unsigned long long>(exercised[l]));
  }
  ok = ok && violations[0] == 0;
  detail += fmt("; blocking %llu/%llu (violations/premise held)", static_cast<unsigned long long>(violations[0]),
                static_cast<unsigned long long>(exercised[0]));
  return {ok, detail};
}

// ---- criteria 3 and 4 -----------------------------------------------------

struct Clustered {
  synth::Instance inst;
  std::vector<Column> queries;
};

Clustered clustered_setup() {
  Clustered c;
  c.inst = synth::clustered_instance(11, 10, 100, 100, 50, 0.02);
  for (int k = 0; k < 100; ++k) c.queries.push_back(synth::random_query(c.inst, 5000 + k, 50));
  return c;
}

Verdict pruning_effectiveness(const Clustered& c) {
  const JoinIndex idx = JoinIndex::build(c.inst.repo);  // |P| = 5, m = 6
  std::uint64_t pexeso = 0, brute = 0, over_h = 0;
  double worst = 0;
  std::size_t found = 0;
  for (const Column& q : c.queries) {
    const SearchParams p = make_params(0.06, 0.6, q.size());
    const JoinResult a = idx.search(q, p);
    const JoinResult h = idx.search_pexeso_h(q, p);
    const JoinResult b = brute_force_search(c.inst.repo, q, p);
    pexeso += a.stats.distance_computations;
    brute += b.stats.distance_computations;
    over_h += a.stats.distance_computations > h.stats.distance_computations;
    worst = std::max(worst, double(a.stats.distance_computations) / double(b.stats.distance_computations));
    found += a.joinable.size();
  }
  const double ratio = double(pexeso) / double(brute);
  return {ratio <= 0.5 && over_h == 0,
          fmt("PEXESO/brute = %.4f (worst query %.4f), queries above PEXESO-H: %zu, %zu joinable columns found",
              ratio, worst, static_cast<std::size_t>(over_h), found)};
}

Verdict cost_model(const Clustered& c) {
  IndexOptions o;
  o.hist_bins = 256;
  const JoinIndex idx = JoinIndex::build(c.inst.repo, o);
  const DimHistogram& hist = idx.histogram();

  // Upper-bound compliance on random probes.
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t compliant = 0;
  const int probes = 10000;
  const auto& g = idx.grid();
  std::vector<AxisBox> leaves;
  for (std::uint32_t i = 0; i < g.leaf_count(); ++i) leaves.push_back(cell_box(g.leaf_cell(i), g.config()));
  for (int t = 0; t < probes; ++t) {
    Vector qm;
    if (t % 2) {
      const Column& q = c.queries[t % c.queries.size()];
      qm = map_vector(q.vectors[t % q.size()], idx.pivots()).coords;
    } else {
      qm.resize(idx.pivots().size());
      for (double& x : qm) x = 2.0 * u(rng);
    }
    const double tau = 0.2 * u(rng);
    const AxisBox region = sqr_of_vector(qm, tau, 2.0);
    std::uint64_t truth = 0;
    for (std::uint32_t i = 0; i < leaves.size(); ++i)
      if (leaves[i].intersects(region)) truth += g.leaf(i).vector_count;
    compliant += n_max(qm, tau, g.config().levels, hist) >= truth;
  }

  // Tuned m against measured distance computations over the same workload.
  const Workload w = default_workload(c.inst.repo, 42);
  const TuneReport r = tune_m(idx.mapped(), idx.pivots(), w, 1, 8, hist);
  std::vector<std::uint64_t> measured;
  for (int m = 1; m <= 8; ++m) {
    const JoinIndex at = JoinIndex::build(c.inst.repo, idx.pivots(), m, 256);
    std::uint64_t n = 0;
    for (const auto& wq : w) {
      SearchParams p;
      p.tau = wq.tau;
      p.t_count = wq.t_count;
      n += at.search(wq.query, p).stats.distance_computations;
    }
    measured.push_back(n);
  }
  const std::uint64_t best = *std::min_element(measured.begin(), measured.end());
  const int best_m = static_cast<int>(std::min_element(measured.begin(), measured.end()) - measured.begin()) + 1;
  const std::uint64_t tuned = measured[static_cast<std::size_t>(r.best_levels - 1)];
  const double ratio = double(tuned) / double(std::max<std::uint64_t>(best, 1));
  std::string sweep;
  for (auto n : measured) sweep += fmt(" %llu", static_cast<unsigned long long>(n));
  return {compliant == static_cast<std::size_t>(probes) && ratio <= 1.5,
          fmt("n_max upper bound %zu/%d; tuned m=%d, measured best m=%d, ratio %.3f; distances by m:%s", compliant,
              probes, r.best_levels, best_m, ratio, sweep.c_str())};
}

// ---- criterion 5 ----------------------------------------------------------

Verdict walkthrough() {
  synth::Walkthrough w;
  using K = VerifyEvent::Kind;
  std::vector<std::string> log;
  std::vector<std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>> states;
  VerifyOptions opts;
  opts.trace = [&](const VerifyEvent& e) {
    static const char* names[] = {"credit", "scan", "mismatch", "accept", "prune"};
    log.push_back(fmt("%s:S%u", names[static_cast<int>(e.kind)], e.column + 1));
    states.emplace_back(e.state->match_count, e.state->mismatch_count);
  };
  Verifier v(w.blocking, TargetData{w.index, w.vectors, w.mapped, 4}, QueryData{w.query, w.qmapped}, w.params,
             opts);
  using U = std::vector<std::uint32_t>;
  bool ok = true;
  // Step 1: matching pair (q2, b16).
  v.process_matching_pair(w.blocking.matching[0]);
  ok = ok && v.state().match_count == U{1, 1, 0, 0} && v.state().mismatch_count == U{0, 0, 0, 0};
  // Steps 2 to 5: candidate pair (q1, {b5, b9, b13, b14}).
  v.process_candidate_pair(w.blocking.candidates[0]);
  const VerifyOutcome out = v.finish();
  const std::vector<std::string> want_log{"credit:S1",   "credit:S2", "scan:S1",     "accept:S1",
                                          "scan:S2",     "mismatch:S2", "prune:S2", "scan:S3",
                                          "mismatch:S3", "prune:S3",    "scan:S4"};
  ok = ok && log == want_log;
  // After step 2, 3, 4 (state at the accept and prune events).
  ok = ok && states[3].first == U{2, 1, 0, 0};
  ok = ok && states[6].second == U{0, 1, 0, 0};
  ok = ok && states[9].second == U{0, 1, 1, 0};
  // Step 5 and the final answer.
  ok = ok && v.state().match_count == U{2, 1, 0, 1};
  ok = ok && v.state().status[2] == ColumnStatus::pruned;
  const bool b13_untouched = std::none_of(w.calls.begin(), w.calls.end(), [](auto c) { return c.second == 6; });
  ok = ok && b13_untouched && out.joinable == U{0};
  std::string trace;
  for (const auto& s : log) trace += " " + s;
  (void)K::cell_scan;
  return {ok, fmt("result {S%u}, %zu distance calls, b13 %s; trace:%s", out.joinable.empty() ? 0 : out.joinable[0] + 1,
                  w.calls.size(), b13_untouched ? "never examined" : "EXAMINED", trace.c_str())};
}

// ---- criterion 6 ----------------------------------------------------------

Verdict forest_invariance() {
  std::size_t runs = 0, mismatches = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto inst = synth::random_instance(
        7000 + s, {.columns = 40, .min_size = 10, .max_size = 80, .dim = 16, .clusters = 6, .sigma = 0.025});
    const JoinIndex single = JoinIndex::build(inst.repo);
    const HistogramBinning bins = HistogramBinning::fit(inst.repo);
    std::vector<Column> queries;
    for (int k = 0; k < 3; ++k) queries.push_back(synth::random_query(inst, 8000 + 3 * s + k, 25));
    for (std::size_t k : {1, 2, 5, 10}) {
      for (const Partitioning& p : {cluster_columns(inst.repo, k, 10, bins, s), partition_random(inst.repo, k, s),
                                    partition_mean_kmeans(inst.repo, k, 10, s)}) {
        const Forest f = Forest::build(inst.repo, p);
        for (const Column& q : queries) {
          for (double tp : {0.04, 0.08}) {
            const SearchParams params = make_params(tp, 0.4, q.size());
            mismatches += forest_search(f, q, params).joinable != single.search(q, params).joinable;
            ++runs;
          }
        }
      }
    }
  }

  // Skewed data, 5 seeds: every cluster spreads along its own three
  // directions, so pivots fitted to a mixture of clusters discriminate poorly
  // inside any one of them.
  double jsd_total = 0, random_total = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const synth::Instance inst = synth::subspace_instance(9000 + s, 8, 160, 60, 32);
    const HistogramBinning bins = HistogramBinning::fit(inst.repo);
    const Forest fj = Forest::build(inst.repo, cluster_columns(inst.repo, 8, 10, bins, s));
    const Forest fr = Forest::build(inst.repo, partition_random(inst.repo, 8, s));
    for (int k = 0; k < 20; ++k) {
      const Column q = synth::random_query(inst, 9500 + 20 * s + k, 40);
      const SearchParams p = make_params(0.06, 0.6, q.size());
      const JoinResult a = forest_search(fj, q, p), b = forest_search(fr, q, p);
      mismatches += a.joinable != b.joinable;
      jsd_total += double(a.stats.distance_computations);
      random_total += double(b.stats.distance_computations);
    }
  }
  return {mismatches == 0 && jsd_total <= random_total,
          fmt("%zu forest searches, %zu mismatches; skewed data mean distance computations JSD %.0f vs random %.0f",
              runs, mismatches, jsd_total / 5, random_total / 5)};
}

// ---- criterion 8 ----------------------------------------------------------

Verdict persistence() {
  const auto inst = synth::random_instance(31, {.columns = 60, .min_size = 10, .max_size = 120, .dim = 24});
  const JoinIndex idx = JoinIndex::build(inst.repo);
  const std::string bytes = serialize_index(idx);
  const JoinIndex back = deserialize_index(bytes);
  std::size_t identical = 0;
  for (int k = 0; k < 20; ++k) {
    const Column q = synth::random_query(inst, 3100 + k, 30);
    const SearchParams p = make_params(kTauPcts[k % 4], kTPcts[(k / 4) % 4], q.size());
    identical += result_to_json(idx.search(q, p)).dump() == result_to_json(back.search(q, p)).dump();
  }
  std::mt19937_64 rng(32);
  std::uniform_int_distribution<std::size_t> pos(0, bytes.size() - 1);
  std::uniform_int_distribution<int> bit(0, 7);
  std::size_t detected = 0;
  const std::size_t flips = 2000;
  for (std::size_t t = 0; t < flips; ++t) {
    std::string bad = bytes;
    // Start and end of the file always included.
    const std::size_t at = t == 0 ? 0 : t == 1 ? bytes.size() - 1 : pos(rng);
    bad[at] = static_cast<char>(bad[at] ^ (1 << bit(rng)));
    try {
      deserialize_index(bad);
    } catch (const FormatError&) {
      ++detected;
    }
  }
  return {identical == 20 && detected == flips,
          fmt("%zu/20 results bit-identical after reload; %zu/%zu single-byte corruptions rejected (%zu-byte file)",
              identical, detected, flips, bytes.size())};
}

}  // namespace

// With arguments, runs only the listed criterion numbers.
int main(int argc, char** argv) {
  std::vector<bool> want(9, argc == 1);
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > 8) {
      std::fprintf(stderr, "usage: %s [criterion 1-8]...\n", argv[0]);
      return 2;
    }
    want[static_cast<std::size_t>(n)] = true;
  }
  int failures = 0, ran = 0;
  std::vector<CorpusCase> corpus;
  if (want[1] || want[7]) {
    std::printf("building criterion 1 corpus...\n");
    std::fflush(stdout);
    corpus = build_corpus();
  }
  Clustered clustered;
  if (want[3] || want[4]) clustered = clustered_setup();
  auto run = [&](int id, const char* name, const std::function<Verdict()>& check) {
    if (!want[static_cast<std::size_t>(id)]) return;
    ++ran;
    failures += report(id, name, check);
  };
  run(1, "oracle exactness", [&] { return oracle_exactness(corpus); });
  run(2, "lemma soundness", lemma_soundness);
  run(3, "pruning effectiveness", [&] { return pruning_effectiveness(clustered); });
  run(4, "cost-model soundness", [&] { return cost_model(clustered); });
  run(5, "verification walkthrough", walkthrough);
  run(6, "forest invariance", forest_invariance);
  run(7, "quick browse / early termination preserve results", [&] { return toggles_preserve_results(corpus); });
  run(8, "persistence", persistence);
  std::printf("%d of %d criteria failed\n", failures, ran);
  return failures == 0 ? 0 : 1;
}
