// vecjoin: build, search, baseline, partition, embed-toy and bench commands.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vecjoin/vecjoin.hpp"

namespace fs = std::filesystem;
using namespace vecjoin;

namespace {

unsigned thread_budget() {
  const char* env = std::getenv("VECJOIN_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw InputError("VECJOIN_THREADS must be a positive integer");
  return static_cast<unsigned>(n);
}

PivotMethod parse_pivot_method(const std::string& s) {
  return s == "random" ? PivotMethod::random : PivotMethod::pca;
}

struct BuildArgs {
  std::string input;
  std::size_t pivots = 5;
  int levels = 6;
  bool tune = false;
  int m_min = 1;
  int m_max = 10;
  std::string pivot_method = "pca";
  std::uint64_t seed = 42;
  std::size_t hist_bins = 64;
  std::size_t sample_size = 50000;
  std::string out;
};

void add_index_options(CLI::App* cmd, BuildArgs& a) {
  cmd->add_option("--pivots", a.pivots, "Number of pivots")->check(CLI::PositiveNumber);
  cmd->add_option("--levels", a.levels, "Grid depth m")->check(CLI::Range(1, 30));
  cmd->add_option("--pivot-method", a.pivot_method, "pca or random")
      ->check(CLI::IsMember({"pca", "random"}));
  cmd->add_option("--seed", a.seed, "Seed for sampling and pivot selection");
  cmd->add_option("--hist-bins", a.hist_bins, "Cost-model histogram bins")->check(CLI::PositiveNumber);
  cmd->add_option("--sample-size", a.sample_size, "PCA sample size")->check(CLI::PositiveNumber);
}

IndexOptions index_options(const BuildArgs& a) {
  IndexOptions o;
  o.pivots.count = a.pivots;
  o.pivots.method = parse_pivot_method(a.pivot_method);
  o.pivots.seed = a.seed;
  o.pivots.sample_size = a.sample_size;
  o.levels = a.levels;
  o.hist_bins = a.hist_bins;
  return o;
}

std::vector<Vector> all_vectors(const Repository& repo) {
  std::vector<Vector> rows;
  rows.reserve(repo.vector_count());
  for (const Column& c : repo.columns()) rows.insert(rows.end(), c.vectors.begin(), c.vectors.end());
  return rows;
}

TuneReport run_tuning(const Repository& repo, const PivotSet& pivots, const BuildArgs& a) {
  const MappedStore mapped = map_all(all_vectors(repo), pivots);
  const DimHistogram hist = estimate_pdf(mapped, a.hist_bins, pivots.metric.d_max);
  const Workload workload = default_workload(repo, a.seed, pivots.metric);
  return tune_m(mapped, pivots, workload, a.m_min, a.m_max, hist);
}

void print_report(std::ostream& out, const TuneReport& r) {
  out << "m\testimated_cost\tblocking_ms\n";
  for (const auto& row : r.rows) {
    out << row.levels << '\t' << row.estimated_cost << '\t' << std::fixed << std::setprecision(3)
        << row.blocking_ms << '\n';
  }
  out << "best_m\t" << r.best_levels << '\n';
}

int cmd_build(const BuildArgs& a) {
  const Repository repo = read_repository(a.input);
  IndexOptions opts = index_options(a);
  const std::vector<Vector> rows = all_vectors(repo);
  PivotSet pivots = select_pivots(rows, opts.pivots);
  if (a.tune) {
    const TuneReport r = run_tuning(repo, pivots, a);
    print_report(std::cerr, r);
    opts.levels = r.best_levels;
  }
  const JoinIndex index = JoinIndex::build(repo, std::move(pivots), opts.levels, opts.hist_bins);
  save_index(index, a.out);
  std::cerr << "indexed " << repo.size() << " columns, " << repo.vector_count()
            << " vectors, |P|=" << index.pivots().size() << " m=" << index.config().levels << " -> "
            << a.out << '\n';
  return 0;
}

struct SearchArgs {
  std::string index;
  std::string forest;
  std::string input;
  std::string query;
  std::string query_id;
  double tau_pct = 0.06;
  double t_pct = 0.6;
  std::string quick_browse = "on";
  std::string early_termination = "on";
  std::string json_out;
};

void add_search_options(CLI::App* cmd, SearchArgs& a, bool allow_forest, bool allow_input) {
  auto* idx = cmd->add_option("--index", a.index, "Index file");
  if (allow_forest) cmd->add_option("--forest", a.forest, "Forest manifest")->excludes(idx);
  if (allow_input) cmd->add_option("--input", a.input, "Repository JSONL (brute force only)")->excludes(idx);
  cmd->add_option("--query", a.query, "Query column JSONL")->required();
  cmd->add_option("--query-id", a.query_id, "Column of the query file to use");
  cmd->add_option("--tau-pct", a.tau_pct, "Distance threshold as a fraction of d_max")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--t-pct", a.t_pct, "Joinability threshold as a fraction of |Q|")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--quick-browse", a.quick_browse, "on or off")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--early-termination", a.early_termination, "on or off")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--json", a.json_out, "Write the result here instead of stdout");
}

Column load_query(const SearchArgs& a) {
  auto cols = read_columns_file(a.query);
  if (cols.empty()) throw InputError(a.query + ": no query column");
  if (!a.query_id.empty()) {
    for (auto& c : cols)
      if (c.column_id == a.query_id) return std::move(c);
    throw InputError(a.query + ": no column '" + a.query_id + "'");
  }
  if (cols.size() != 1) throw InputError(a.query + ": several columns; pick one with --query-id");
  return std::move(cols.front());
}

void emit(const SearchArgs& a, const Column& q, const SearchParams& params, const std::string& engine,
          const JoinResult& r, double elapsed_ms) {
  json j = result_to_json(r);
  j["engine"] = engine;
  j["query"] = q.column_id;
  j["tau"] = params.tau;
  j["t_count"] = params.t_count;
  j["stats"]["elapsed_ms"] = elapsed_ms;
  if (a.json_out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream out(a.json_out);
    if (!out) throw InputError("cannot write " + a.json_out);
    out << j.dump(2) << '\n';
  }
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_search(const SearchArgs& a) {
  if (a.index.empty() == a.forest.empty()) throw InputError("give exactly one of --index or --forest");
  const Column q = load_query(a);
  const SearchParams params = make_params(a.tau_pct, a.t_pct, q.size());
  SearchOptions opts;
  opts.quick_browse = a.quick_browse == "on";
  opts.early_termination = a.early_termination == "on";

  if (!a.index.empty()) {
    const JoinIndex index = load_index(a.index);
    const auto t0 = std::chrono::steady_clock::now();
    const JoinResult r = index.search(q, params, opts);
    emit(a, q, params, "pexeso", r, ms_since(t0));
    return 0;
  }
  const Manifest m = read_manifest(a.forest);
  std::vector<JoinIndex> shards;
  for (const auto& e : m.shards) shards.push_back(load_index(e.index_file));
  const Forest forest(std::move(shards));
  const auto t0 = std::chrono::steady_clock::now();
  const JoinResult r = forest_search(forest, q, params, opts, thread_budget());
  emit(a, q, params, "pexeso-forest", r, ms_since(t0));
  return 0;
}

int cmd_baseline(const std::string& engine, const SearchArgs& a) {
  if (a.index.empty() == a.input.empty()) throw InputError("give exactly one of --index or --input");
  const Column q = load_query(a);
  const SearchParams params = make_params(a.tau_pct, a.t_pct, q.size());
  if (engine == "pexeso-h") {
    if (a.index.empty()) throw InputError("pexeso-h needs --index");
    const JoinIndex index = load_index(a.index);
    const auto t0 = std::chrono::steady_clock::now();
    const JoinResult r = index.search_pexeso_h(q, params, a.quick_browse == "on");
    emit(a, q, params, engine, r, ms_since(t0));
    return 0;
  }
  const Repository repo = a.index.empty() ? read_repository(a.input) : load_index(a.index).repository();
  if (repo.dim() != q.dim()) throw InputError("query dimension does not match the repository");
  BruteForceOptions bo;
  bo.early_accept = a.early_termination == "on";
  const auto t0 = std::chrono::steady_clock::now();
  const JoinResult r = brute_force_search(repo, q, params, bo);
  emit(a, q, params, engine, r, ms_since(t0));
  return 0;
}

struct PartitionArgs {
  BuildArgs index;
  std::size_t k = 2;
  int iters = 10;
  std::string method = "jsd";
  std::size_t bins = 16;
  std::string out;
};

int cmd_partition(const PartitionArgs& a) {
  const Repository repo = read_repository(a.index.input);
  Partitioning p;
  if (a.method == "jsd") {
    const HistogramBinning binning = HistogramBinning::fit(repo, a.bins, a.index.sample_size, a.index.seed);
    p = cluster_columns(repo, a.k, a.iters, binning, a.index.seed);
  } else if (a.method == "random") {
    p = partition_random(repo, a.k, a.index.seed);
  } else {
    p = partition_mean_kmeans(repo, a.k, a.iters, a.index.seed);
  }
  const fs::path dir(a.out);
  fs::create_directories(dir);
  Manifest m{a.method, a.k, a.index.seed, {}};
  const IndexOptions opts = index_options(a.index);
  std::uint32_t n = 0;
  for (const Shard& s : split(repo, p)) {
    ManifestEntry e;
    e.shard = n;
    e.cluster = s.cluster;
    for (const Column& c : s.columns.columns()) e.column_ids.push_back(c.column_id);
    e.columns_file = "shard_" + std::to_string(n) + ".jsonl";
    e.index_file = "shard_" + std::to_string(n) + ".pxjn";
    write_columns_file(dir / e.columns_file, s.columns.columns());
    save_index(JoinIndex::build(s.columns, opts), dir / e.index_file);
    std::cerr << "shard " << n << ": " << s.columns.size() << " columns\n";
    m.shards.push_back(std::move(e));
    ++n;
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw InputError("cannot write " + (dir / "manifest.json").string());
  out << manifest_to_json(m).dump(2) << '\n';
  return 0;
}

int cmd_embed(const std::vector<std::string>& inputs, std::size_t dim, const std::string& out) {
  std::vector<Column> cols;
  for (const auto& path : inputs) {
    auto part = embed_csv(path, dim);
    cols.insert(cols.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  const Repository check(cols);  // rejects duplicate ids across files
  if (out.empty()) {
    write_columns(std::cout, cols);
  } else {
    write_columns_file(out, cols);
  }
  return 0;
}

int cmd_bench(const BuildArgs& a) {
  const Repository repo = read_repository(a.input);
  const IndexOptions opts = index_options(a);
  const PivotSet pivots = select_pivots(all_vectors(repo), opts.pivots);
  print_report(std::cout, run_tuning(repo, pivots, a));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact joinable-column search over vector-embedded table columns"};
  app.require_subcommand(1);

  BuildArgs build;
  auto* b = app.add_subcommand("build", "Build an index file from a column JSONL file");
  b->add_option("--input", build.input, "Column JSONL")->required()->check(CLI::ExistingFile);
  b->add_option("--out", build.out, "Index file to write")->required();
  add_index_options(b, build);
  b->add_flag("--tune-levels", build.tune, "Choose m with the cost model");
  b->add_option("--m-min", build.m_min, "Smallest m tried when tuning")->check(CLI::Range(1, 30));
  b->add_option("--m-max", build.m_max, "Largest m tried when tuning")->check(CLI::Range(1, 30));

  SearchArgs search;
  auto* s = app.add_subcommand("search", "Find joinable columns for a query column");
  add_search_options(s, search, true, false);

  SearchArgs base;
  std::string engine;
  auto* bl = app.add_subcommand("baseline", "Run a baseline engine");
  bl->add_option("engine", engine, "brute or pexeso-h")->required()->check(CLI::IsMember({"brute", "pexeso-h"}));
  add_search_options(bl, base, false, true);

  PartitionArgs part;
  auto* p = app.add_subcommand("partition", "Split a repository into independently indexed shards");
  p->add_option("--input", part.index.input, "Column JSONL")->required()->check(CLI::ExistingFile);
  p->add_option("--k", part.k, "Number of clusters")->check(CLI::PositiveNumber);
  p->add_option("--iters", part.iters, "k-means iterations")->check(CLI::PositiveNumber);
  p->add_option("--method", part.method, "jsd, random or mean")->check(CLI::IsMember({"jsd", "random", "mean"}));
  p->add_option("--bins", part.bins, "Histogram bins per principal axis")->check(CLI::PositiveNumber);
  p->add_option("--out", part.out, "Output directory")->required();
  add_index_options(p, part.index);

  std::vector<std::string> csvs;
  std::size_t dim = 64;
  std::string embed_out;
  auto* e = app.add_subcommand("embed-toy", "Embed CSV cells with the trigram hashing embedder");
  e->add_option("--strings", csvs, "CSV files (header row names the columns)")->required()->check(CLI::ExistingFile);
  e->add_option("--dim", dim, "Embedding dimension")->check(CLI::Range(2, 1 << 16));
  e->add_option("--out", embed_out, "Column JSONL to write (stdout if omitted)");

  BuildArgs bench;
  auto* bn = app.add_subcommand("bench", "Cost-model tuning report, one row per m");
  bn->add_option("--input", bench.input, "Column JSONL")->required()->check(CLI::ExistingFile);
  add_index_options(bn, bench);
  bn->add_option("--m-min", bench.m_min, "Smallest m")->check(CLI::Range(1, 30));
  bn->add_option("--m-max", bench.m_max, "Largest m")->check(CLI::Range(1, 30));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  }

  try {
    if (*b) return cmd_build(build);
    if (*s) return cmd_search(search);
    if (*bl) return cmd_baseline(engine, base);
    if (*p) return cmd_partition(part);
    if (*e) return cmd_embed(csvs, dim, embed_out);
    if (*bn) return cmd_bench(bench);
  } catch (const InputError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  } catch (const FormatError& ex) {
    std::cerr << "index format error: " << ex.what() << '\n';
    return 3;
  } catch (const InvariantError& ex) {
    std::cerr << "internal error: " << ex.what() << '\n';
    return 4;
  } catch (const std::exception& ex) {
    std::cerr << "internal error: " << ex.what() << '\n';
    return 4;
  }
  return 0;
}
