#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "synthetic.hpp"
#include "vecjoin/core.hpp"

using namespace vecjoin;

TEST(Distance, PythagoreanTriple) { EXPECT_DOUBLE_EQ(distance(Vector{0, 0}, Vector{3, 4}), 5.0); }

TEST(Distance, Identity) {
  const Vector v{0.3, -1.2, 7.0};
  EXPECT_EQ(distance(v, v), 0.0);
}

TEST(Distance, DimensionMismatchThrows) {
  EXPECT_THROW(distance(Vector{1, 2}, Vector{1, 2, 3}), InputError);
}

TEST(Distance, MatchesSumOfSquaresRecomputation) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int t = 0; t < 1000; ++t) {
    Vector a(12), b(12);
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng);
    long double ss = 0;
    for (int i = 0; i < 12; ++i) ss += static_cast<long double>(a[i] - b[i]) * (a[i] - b[i]);
    EXPECT_NEAR(distance(a, b), static_cast<double>(std::sqrt(ss)), 1e-12);
  }
}

TEST(Distance, MetricAxiomsOnRandomTriples) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 100000; ++t) {
    const Vector a = synth::random_unit(rng, 8), b = synth::random_unit(rng, 8),
                 c = synth::random_unit(rng, 8);
    const double ab = distance(a, b), bc = distance(b, c), ac = distance(a, c);
    ASSERT_GE(ab, 0.0);
    ASSERT_EQ(ab, distance(b, a));
    ASSERT_LE(ac, ab + bc + 1e-9);
  }
}

TEST(Normalize, AlreadyUnit) {
  const Vector v = normalize(Vector{1, 0, 0});
  EXPECT_EQ(v, (Vector{1, 0, 0}));
}

TEST(Normalize, ScalesByNorm) {
  const Vector v = normalize(Vector{3, 4});
  EXPECT_NEAR(v[0], 0.6, 1e-15);
  EXPECT_NEAR(v[1], 0.8, 1e-15);
}

TEST(Normalize, ZeroVectorRejected) { EXPECT_THROW(normalize(Vector{0, 0}), InputError); }

TEST(Normalize, UnitNormAndDirectionKept) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 5);
  for (int t = 0; t < 1000; ++t) {
    Vector v(9);
    for (auto& x : v) x = g(rng);
    const Vector n = normalize(v);
    double norm = 0, dot = 0, vn = 0;
    for (int i = 0; i < 9; ++i) {
      norm += n[i] * n[i];
      dot += n[i] * v[i];
      vn += v[i] * v[i];
    }
    EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-9);
    EXPECT_NEAR(dot / std::sqrt(vn), 1.0, 1e-9);
  }
}

TEST(Matches, InclusiveBoundary) {
  SearchParams p;
  p.tau = 0.0;
  EXPECT_TRUE(matches(Vector{1, 2}, Vector{1, 2}, p));
  p.tau = 5.0;
  EXPECT_TRUE(matches(Vector{0, 0}, Vector{3, 4}, p));
  p.tau = 4.999;
  EXPECT_FALSE(matches(Vector{0, 0}, Vector{3, 4}, p));
}

TEST(Matches, AgreesWithDirectComparison) {
  std::mt19937_64 rng(5);
  SearchParams p;
  p.tau = 1.2;
  for (int t = 0; t < 2000; ++t) {
    const Vector a = synth::random_unit(rng, 4), b = synth::random_unit(rng, 4);
    EXPECT_EQ(matches(a, b, p), distance(a, b) <= 1.2);
  }
}

TEST(MakeColumn, RejectsBadInput) {
  EXPECT_THROW(make_column("c", "t", {}), InputError);
  EXPECT_THROW(make_column("c", "t", {{1, 0}, {1, 0, 0}}), InputError);
  EXPECT_THROW(make_column("c", "t", {{1, NAN}}), InputError);
  EXPECT_THROW(make_column("c", "t", {{0, 0}}), InputError);
}

TEST(MakeColumn, DuplicatesKept) {
  const Column c = make_column("c", "t", {{1, 0}, {1, 0}});
  EXPECT_EQ(c.size(), 2u);
}

TEST(Repository, SortsAndValidates) {
  Repository r({make_column("b", "t", {{1, 0}}), make_column("a", "t", {{0, 1}, {1, 0}})});
  EXPECT_EQ(r.columns()[0].column_id, "a");
  EXPECT_EQ(r.vector_count(), 3u);
  EXPECT_NE(r.find("b"), nullptr);
  EXPECT_EQ(r.find("z"), nullptr);
  EXPECT_THROW(Repository({make_column("a", "t", {{1, 0}}), make_column("a", "t", {{0, 1}})}), InputError);
  EXPECT_THROW(Repository({make_column("a", "t", {{1, 0}}), make_column("b", "t", {{0, 1, 0}})}), InputError);
}

TEST(Joinability, SelfIsOne) {
  std::mt19937_64 rng(1);
  std::vector<Vector> vs;
  for (int i = 0; i < 20; ++i) vs.push_back(synth::random_unit(rng, 5));
  const Column q = make_column("q", "t", vs);
  SearchParams p;
  p.tau = 0.0;
  EXPECT_EQ(joinability(q, q, p), 1.0);
}

TEST(Joinability, FarApartIsZero) {
  const Column q = make_column("q", "t", {{1, 0}, {1, 0.01}});
  const Column s = make_column("s", "t", {{-1, 0}});
  SearchParams p;
  p.tau = 1.0;
  EXPECT_EQ(joinability(q, s, p), 0.0);
}

TEST(Joinability, EqualsNestedLoopAndIsMonotoneInTau) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    std::vector<Vector> a, b;
    for (int i = 0; i < 20; ++i) a.push_back(synth::random_unit(rng, 3));
    for (int i = 0; i < 20; ++i) b.push_back(synth::random_unit(rng, 3));
    const Column q = make_column("q", "t", a), s = make_column("s", "t", b);
    double prev = 0.0;
    for (double tau : {0.1, 0.3, 0.6, 1.0}) {
      SearchParams p;
      p.tau = tau;
      int hits = 0;
      for (auto& x : a) {
        bool any = false;
        for (auto& y : b) any = any || distance(x, y) <= tau;
        hits += any;
      }
      const double jn = joinability(q, s, p);
      EXPECT_EQ(jn, hits / 20.0);
      EXPECT_GE(jn, prev);
      EXPECT_LE(jn, 1.0);
      prev = jn;
    }
  }
}

TEST(Joinability, DuplicateQueryRecordsCountSeparately) {
  const Column q = make_column("q", "t", {{1, 0}, {1, 0}, {0, 1}});
  const Column s = make_column("s", "t", {{1, 0}});
  SearchParams p;
  p.tau = 0.1;
  EXPECT_DOUBLE_EQ(joinability(q, s, p), 2.0 / 3.0);
}

TEST(ResolveThresholds, PaperDefaults) {
  const Thresholds th = resolve_thresholds(0.06, 0.60, 1000);
  EXPECT_NEAR(th.tau, 0.12, 1e-15);
  EXPECT_EQ(th.t_count, 600u);
}

TEST(ResolveThresholds, ExactMatchRegimeAndCeiling) {
  EXPECT_EQ(resolve_thresholds(0.0, 0.3, 7).tau, 0.0);
  EXPECT_EQ(resolve_thresholds(0.0, 0.3, 7).t_count, 3u);
  const Thresholds th = resolve_thresholds(0.08, 0.20, 5);
  EXPECT_NEAR(th.tau, 0.16, 1e-15);
  EXPECT_EQ(th.t_count, 1u);
  EXPECT_EQ(resolve_thresholds(0.1, 0.01, 5).t_count, 1u);
  EXPECT_EQ(resolve_thresholds(0.1, 1.0, 5).t_count, 5u);
}

TEST(ResolveThresholds, RejectsOutOfRange) {
  EXPECT_THROW(resolve_thresholds(-0.1, 0.5, 5), InputError);
  EXPECT_THROW(resolve_thresholds(1.1, 0.5, 5), InputError);
  EXPECT_THROW(resolve_thresholds(0.1, 0.0, 5), InputError);
  EXPECT_THROW(resolve_thresholds(0.1, 1.5, 5), InputError);
}

TEST(CheckParams, CountAboveQuerySize) {
  SearchParams p;
  p.t_count = 4;
  EXPECT_THROW(check_params(p, 3), InputError);
}

TEST(BruteForce, SelfJoin) {
  const auto inst = synth::random_instance(3, {.columns = 1});
  const Column& q = inst.repo.columns()[0];
  SearchParams p;
  p.tau = 0.0;
  p.t_count = q.size();
  const JoinResult r = brute_force_search(inst.repo, q, p);
  EXPECT_EQ(r.joinable, std::vector<std::string>{q.column_id});
}

TEST(BruteForce, TinyTauGivesNothing) {
  const auto inst = synth::random_instance(4, {.columns = 10, .uniform_fraction = 1.0});
  std::mt19937_64 rng(99);
  const Column q = make_column("q", "t", {synth::random_unit(rng, 10)});
  SearchParams p;
  p.tau = 1e-6;
  EXPECT_TRUE(brute_force_search(inst.repo, q, p).joinable.empty());
}

TEST(BruteForce, AgreesWithNestedLoopOn50Columns) {
  const auto inst = synth::random_instance(5, {.columns = 50});
  for (int k = 0; k < 5; ++k) {
    const Column q = synth::random_query(inst, 100 + k, 30);
    for (double tp : {0.02, 0.06}) {
      const SearchParams p = make_params(tp, 0.4, q.size());
      EXPECT_EQ(brute_force_search(inst.repo, q, p).joinable,
                synth::nested_loop(inst.repo, q, p.tau, p.t_count));
    }
  }
}

TEST(BruteForce, OracleModeCountsEveryPair) {
  const auto inst = synth::random_instance(6, {.columns = 20});
  const Column q = synth::random_query(inst, 1, 15);
  const SearchParams p = make_params(0.06, 0.6, q.size());
  const JoinResult r = brute_force_search(inst.repo, q, p, {.early_accept = false});
  EXPECT_EQ(r.stats.distance_computations, q.size() * inst.repo.vector_count());
  const JoinResult e = brute_force_search(inst.repo, q, p);
  EXPECT_LE(e.stats.distance_computations, r.stats.distance_computations);
  EXPECT_EQ(e.joinable, r.joinable);
}

TEST(BruteForce, MappingsAreMatchesAndCoverTCount) {
  const auto inst = synth::random_instance(8, {.columns = 30});
  const Column q = synth::random_query(inst, 2, 25);
  const SearchParams p = make_params(0.08, 0.2, q.size());
  const JoinResult r = brute_force_search(inst.repo, q, p);
  for (const auto& id : r.joinable) {
    const Column& s = *inst.repo.find(id);
    std::set<std::uint32_t> qs;
    for (const auto& m : r.mappings.at(id)) {
      EXPECT_LE(distance(q.vectors[m.query_record], s.vectors[m.target_record]), p.tau);
      qs.insert(m.query_record);
    }
    EXPECT_GE(qs.size(), p.t_count);
  }
}

TEST(BruteForce, InvariantUnderColumnOrder) {
  const auto inst = synth::random_instance(10, {.columns = 30});
  std::vector<Column> cols = inst.repo.columns();
  std::mt19937_64 rng(1);
  std::shuffle(cols.begin(), cols.end(), rng);
  const Repository shuffled(cols);
  const Column q = synth::random_query(inst, 3, 20);
  const SearchParams p = make_params(0.06, 0.4, q.size());
  EXPECT_EQ(brute_force_search(inst.repo, q, p).joinable, brute_force_search(shuffled, q, p).joinable);
}

TEST(BruteForce, LargerTauNeverShrinksResult) {
  const auto inst = synth::random_instance(12, {.columns = 40});
  const Column q = synth::random_query(inst, 4, 20);
  std::vector<std::string> prev;
  for (double tp : {0.0, 0.02, 0.04, 0.06, 0.08, 0.2}) {
    const auto cur = brute_force_search(inst.repo, q, make_params(tp, 0.4, q.size())).joinable;
    EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
    prev = cur;
  }
}
