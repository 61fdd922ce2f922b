#pragma once

// Column files (JSONL), the binary index file, result JSON and the forest
// manifest.
//
// Index file layout, all integers little-endian:
//   "PXJN" u16 version
//   section*   where section = u32 tag | u64 length | payload | u32 crc32(payload)
// Sections appear exactly once each, in the order HEAD PIVT COLS VECS MAPD
// GRID POST HIST END, and nothing may follow END.

#include <zlib.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vecjoin/core.hpp"
#include "vecjoin/index.hpp"

namespace vecjoin {

using json = nlohmann::json;

// ---- column files ---------------------------------------------------------

/// One {"column_id", "table_id", "vectors"} object per line. Blank lines are
/// skipped. Errors carry "<source>:<line>:" prefixes.
inline std::vector<Column> read_columns(std::istream& in, const std::string& source,
                                        bool unit_normalize = true) {
  std::vector<Column> out;
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError(where + "malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw InputError(where + "expected a JSON object");
    auto text_field = [&](const char* key, bool required) -> std::string {
      auto it = j.find(key);
      if (it == j.end()) {
        if (required) throw InputError(where + "missing \"" + key + "\"");
        return {};
      }
      if (!it->is_string()) throw InputError(where + "\"" + key + "\" must be a string");
      return it->get<std::string>();
    };
    std::string column_id = text_field("column_id", true);
    std::string table_id = text_field("table_id", false);
    auto vit = j.find("vectors");
    if (vit == j.end() || !vit->is_array()) throw InputError(where + "\"vectors\" must be an array");
    std::vector<Vector> vectors;
    vectors.reserve(vit->size());
    for (const json& row : *vit) {
      if (!row.is_array()) throw InputError(where + "each vector must be an array of numbers");
      Vector v;
      v.reserve(row.size());
      for (const json& x : row) {
        if (!x.is_number()) throw InputError(where + "non-numeric vector coordinate");
        v.push_back(x.get<double>());
      }
      vectors.push_back(std::move(v));
    }
    try {
      Column c = make_column(std::move(column_id), std::move(table_id), std::move(vectors),
                             unit_normalize);
      if (dim == 0) dim = c.dim();
      if (c.dim() != dim) {
        throw InputError("dimension " + std::to_string(c.dim()) + " conflicts with " +
                         std::to_string(dim) + " from earlier lines");
      }
      out.push_back(std::move(c));
    } catch (const InputError& e) {
      throw InputError(where + e.what());
    }
  }
  return out;
}

inline std::vector<Column> read_columns_file(const std::filesystem::path& path,
                                             bool unit_normalize = true) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_columns(in, path.string(), unit_normalize);
}

inline Repository read_repository(const std::filesystem::path& path) {
  auto cols = read_columns_file(path);
  if (cols.empty()) throw InputError(path.string() + ": no columns");
  return Repository(std::move(cols));
}

inline void write_columns(std::ostream& out, const std::vector<Column>& columns) {
  for (const Column& c : columns) {
    json j{{"column_id", c.column_id}, {"table_id", c.table_id}, {"vectors", c.vectors}};
    out << j.dump() << '\n';
  }
}

inline void write_columns_file(const std::filesystem::path& path, const std::vector<Column>& columns) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  write_columns(out, columns);
  if (!out) throw InputError("write failed: " + path.string());
}

// ---- result JSON ----------------------------------------------------------

inline json stats_to_json(const SearchStats& s) {
  return json{{"distance_computations", s.distance_computations},
              {"mapping_computations", s.mapping_computations},
              {"candidate_pairs", s.candidate_pairs},
              {"matching_pairs", s.matching_pairs},
              {"quick_browse_pairs", s.quick_browse_pairs},
              {"pivot_filtered", s.pivot_filtered},
              {"pivot_matched", s.pivot_matched},
              {"columns_accepted_early", s.columns_accepted_early},
              {"columns_pruned", s.columns_pruned}};
}

/// Deterministic: wall-clock time is left to the caller.
inline json result_to_json(const JoinResult& r) {
  json mappings = json::object();
  for (const auto& [id, pairs] : r.mappings) {
    json rows = json::array();
    for (const auto& p : pairs) rows.push_back({p.query_record, p.target_record});
    mappings[id] = std::move(rows);
  }
  return json{{"joinable", r.joinable}, {"mappings", std::move(mappings)},
              {"stats", stats_to_json(r.stats)}};
}

// ---- binary helpers -------------------------------------------------------

namespace detail {

inline constexpr std::array<char, 4> kMagic = {'P', 'X', 'J', 'N'};
inline constexpr std::uint16_t kFormatVersion = 1;

constexpr std::uint32_t tag(const char (&s)[5]) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(s[0])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[3])) << 24;
}

inline constexpr std::array<std::uint32_t, 9> kSectionOrder = {
    tag("HEAD"), tag("PIVT"), tag("COLS"), tag("VECS"), tag("MAPD"),
    tag("GRID"), tag("POST"), tag("HIST"), tag("END ")};

inline std::string tag_name(std::uint32_t t) {
  std::string s(4, ' ');
  for (int i = 0; i < 4; ++i) {
    const char c = static_cast<char>((t >> (8 * i)) & 0xff);
    s[i] = (c >= 32 && c < 127) ? c : '?';
  }
  return s;
}

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large payloads in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(std::string_view s) { buf_.append(s); }
  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string str() {
    const std::uint32_t n = u32();
    return std::string(raw(n));
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  // Element count about to be read, checked against the bytes left.
  std::size_t count(std::uint64_t n, std::size_t min_elem_bytes) {
    if (min_elem_bytes > 0 && n > remaining() / min_elem_bytes) {
      throw FormatError(what_ + ": element count " + std::to_string(n) + " exceeds section size");
    }
    return static_cast<std::size_t>(n);
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) throw FormatError(what_ + ": " + std::to_string(remaining()) + " trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) throw FormatError(what_ + ": truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

inline void put_section(ByteWriter& file, std::uint32_t t, const std::string& payload) {
  file.u32(t);
  file.u64(payload.size());
  file.raw(payload);
  file.u32(crc32_of(payload));
}

}  // namespace detail

// ---- index file -----------------------------------------------------------

inline std::string serialize_index(const JoinIndex& index) {
  using detail::ByteWriter;
  using detail::tag;
  const auto& p = index.parts();
  const std::size_t dim = p.vectors.dim();
  const std::size_t np = p.pivots.size();
  ByteWriter file;
  file.raw(std::string_view(detail::kMagic.data(), 4));
  file.u16(detail::kFormatVersion);

  ByteWriter head;
  head.str(p.metric.id);
  head.u64(dim);
  head.u32(static_cast<std::uint32_t>(np));
  head.u32(static_cast<std::uint32_t>(p.config.levels));
  head.f64(p.config.d_max);
  head.u64(p.column_ids.size());
  head.u64(p.vectors.size());
  detail::put_section(file, tag("HEAD"), head.take());

  ByteWriter piv;
  for (const Vector& v : p.pivots.pivots)
    for (double x : v) piv.f64(x);
  detail::put_section(file, tag("PIVT"), piv.take());

  std::vector<std::uint32_t> sizes(p.column_ids.size(), 0);
  for (std::size_t i = 0; i < p.vectors.size(); ++i) ++sizes[p.vectors.column_of(i)];
  ByteWriter cols;
  for (std::size_t c = 0; c < p.column_ids.size(); ++c) {
    cols.str(p.column_ids[c]);
    cols.str(p.table_ids[c]);
    cols.u32(sizes[c]);
  }
  detail::put_section(file, tag("COLS"), cols.take());

  ByteWriter vecs;
  for (double x : p.vectors.data()) vecs.f64(x);
  detail::put_section(file, tag("VECS"), vecs.take());

  ByteWriter mapd;
  for (double x : p.mapped.data()) mapd.f64(x);
  detail::put_section(file, tag("MAPD"), mapd.take());

  ByteWriter grid;
  grid.u64(p.grid.leaf_count());
  for (std::uint32_t i = 0; i < p.grid.leaf_count(); ++i) {
    const auto& leaf = p.grid.leaf(i);
    for (auto s : leaf.indices) grid.u32(s);
    grid.u64(leaf.vector_count);
  }
  detail::put_section(file, tag("GRID"), grid.take());

  ByteWriter post;
  for (const auto& list : p.inverted.lists()) {
    post.u32(static_cast<std::uint32_t>(list.size()));
    for (const Posting& e : list) {
      post.u32(e.column);
      post.u32(static_cast<std::uint32_t>(e.records.size()));
      for (auto r : e.records) post.u32(r);
    }
  }
  detail::put_section(file, tag("POST"), post.take());

  ByteWriter hist;
  hist.u32(static_cast<std::uint32_t>(p.histogram.bins()));
  for (auto c : p.histogram.counts()) hist.u64(c);
  detail::put_section(file, tag("HIST"), hist.take());

  detail::put_section(file, tag("END "), {});
  return file.take();
}

/// `custom` supplies the distance function when the file names a metric
/// other than the built-in ones.
inline JoinIndex deserialize_index(std::string_view bytes, const Metric* custom = nullptr) {
  using detail::ByteReader;
  ByteReader file(bytes, "index file");
  if (file.remaining() < 6 || std::memcmp(file.raw(4).data(), detail::kMagic.data(), 4) != 0) {
    throw FormatError("not an index file (bad magic)");
  }
  const std::uint16_t version = file.u16();
  if (version != detail::kFormatVersion) {
    throw FormatError("unsupported index format version " + std::to_string(version));
  }

  std::array<std::string_view, detail::kSectionOrder.size()> sections;
  for (std::size_t s = 0; s < sections.size(); ++s) {
    const std::uint32_t t = file.u32();
    if (t != detail::kSectionOrder[s]) {
      throw FormatError("expected section " + detail::tag_name(detail::kSectionOrder[s]) + ", found " +
                        detail::tag_name(t));
    }
    const std::uint64_t len = file.u64();
    if (len > file.remaining()) throw FormatError("section " + detail::tag_name(t) + " overruns the file");
    sections[s] = file.raw(static_cast<std::size_t>(len));
    if (file.u32() != detail::crc32_of(sections[s])) {
      throw FormatError("checksum mismatch in section " + detail::tag_name(t));
    }
  }
  file.expect_end();
  if (!sections.back().empty()) throw FormatError("END section must be empty");

  JoinIndex::Parts p;
  ByteReader head(sections[0], "HEAD");
  const std::string metric_id = head.str();
  const std::uint64_t dim = head.u64();
  const std::uint32_t np = head.u32();
  const std::uint32_t levels = head.u32();
  const double d_max = head.f64();
  const std::uint64_t ncols = head.u64();
  const std::uint64_t nvec = head.u64();
  head.expect_end();
  if (custom && custom->id == metric_id) {
    p.metric = *custom;
  } else {
    p.metric = metric_from_id(metric_id);
  }
  if (p.metric.d_max != d_max) throw FormatError("stored d_max disagrees with metric '" + metric_id + "'");
  if (dim == 0 || np == 0 || np >= dim) throw FormatError("invalid dimension or pivot count");
  if (levels < 1 || levels > 30) throw FormatError("invalid level count");
  if (ncols == 0) throw FormatError("index has no columns");
  p.config = GridConfig{np, static_cast<int>(levels), d_max};

  ByteReader piv(sections[1], "PIVT");
  if (piv.remaining() != np * dim * 8) throw FormatError("PIVT: size mismatch");
  p.pivots.metric = p.metric;
  for (std::uint32_t i = 0; i < np; ++i) {
    Vector v(dim);
    for (double& x : v) x = piv.f64();
    p.pivots.pivots.push_back(std::move(v));
  }

  ByteReader cols(sections[2], "COLS");
  std::vector<std::uint32_t> sizes;
  std::uint64_t total = 0;
  cols.count(ncols, 12);
  for (std::uint64_t c = 0; c < ncols; ++c) {
    p.column_ids.push_back(cols.str());
    p.table_ids.push_back(cols.str());
    sizes.push_back(cols.u32());
    if (sizes.back() == 0) throw FormatError("COLS: empty column");
    if (c > 0 && !(p.column_ids[c - 1] < p.column_ids[c])) throw FormatError("COLS: ids not strictly ascending");
    total += sizes.back();
  }
  cols.expect_end();
  if (total != nvec) throw FormatError("COLS: sizes do not add up to the vector count");

  ByteReader vecs(sections[3], "VECS");
  if (vecs.remaining() / 8 / dim != nvec || vecs.remaining() != nvec * dim * 8) {
    throw FormatError("VECS: size mismatch");
  }
  std::vector<double> data(nvec * dim);
  for (double& x : data) x = vecs.f64();
  p.vectors = VectorStore::from_parts(dim, std::move(data), sizes);

  ByteReader mapd(sections[4], "MAPD");
  if (mapd.remaining() != nvec * np * 8) throw FormatError("MAPD: size mismatch");
  std::vector<double> mapped(nvec * np);
  for (double& x : mapped) x = mapd.f64();
  p.mapped = MappedStore(np, std::move(mapped));

  ByteReader grid(sections[5], "GRID");
  const std::size_t nleaves = grid.count(grid.u64(), 4 * np + 8);
  std::vector<CellIndex> leaves(nleaves, CellIndex(np));
  std::vector<std::uint64_t> counts(nleaves);
  for (std::size_t i = 0; i < nleaves; ++i) {
    for (auto& s : leaves[i]) s = grid.u32();
    counts[i] = grid.u64();
  }
  grid.expect_end();
  p.grid = HierarchicalGrid::from_leaves(leaves, counts, p.config);
  for (std::size_t i = 0; i < nleaves; ++i)
    if (p.grid.leaf(static_cast<std::uint32_t>(i)).indices != leaves[i])
      throw FormatError("GRID: leaves not in canonical order");

  ByteReader post(sections[6], "POST");
  std::vector<std::vector<Posting>> lists(nleaves);
  std::vector<char> seen(nvec, 0);
  for (std::size_t i = 0; i < nleaves; ++i) {
    const std::size_t n = post.count(post.u32(), 8);
    std::uint64_t in_leaf = 0;
    for (std::size_t e = 0; e < n; ++e) {
      Posting entry;
      entry.column = post.u32();
      if (entry.column >= ncols) throw FormatError("POST: column ordinal out of range");
      const std::size_t nrec = post.count(post.u32(), 4);
      if (nrec == 0) throw FormatError("POST: empty postings entry");
      for (std::size_t r = 0; r < nrec; ++r) {
        const std::uint32_t rec = post.u32();
        if (rec >= nvec || seen[rec]) throw FormatError("POST: record out of range or repeated");
        if (p.vectors.column_of(rec) != entry.column) throw FormatError("POST: record filed under wrong column");
        seen[rec] = 1;
        entry.records.push_back(rec);
      }
      in_leaf += nrec;
      lists[i].push_back(std::move(entry));
    }
    if (in_leaf != counts[i]) throw FormatError("POST: leaf population disagrees with GRID");
  }
  post.expect_end();
  try {
    p.inverted = InvertedIndex(std::move(lists));
  } catch (const InvariantError& e) {
    throw FormatError(std::string("POST: ") + e.what());
  }

  ByteReader hist(sections[7], "HIST");
  const std::uint32_t bins = hist.u32();
  if (bins < 1 || hist.remaining() != static_cast<std::size_t>(bins) * np * 8) {
    throw FormatError("HIST: size mismatch");
  }
  std::vector<std::uint64_t> hc(static_cast<std::size_t>(bins) * np);
  for (auto& c : hc) c = hist.u64();
  p.histogram = DimHistogram::from_counts(np, bins, d_max, std::move(hc));
  if (p.histogram.total() != nvec) throw FormatError("HIST: total disagrees with the vector count");

  return JoinIndex(std::move(p));
}

inline void save_index(const JoinIndex& index, const std::filesystem::path& path) {
  const std::string bytes = serialize_index(index);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline JoinIndex load_index(const std::filesystem::path& path, const Metric* custom = nullptr) {
  const std::string bytes = read_file_bytes(path);
  try {
    return deserialize_index(bytes, custom);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---- forest manifest ------------------------------------------------------

struct ManifestEntry {
  std::uint32_t shard = 0;
  std::uint32_t cluster = 0;
  std::vector<std::string> column_ids;
  std::filesystem::path columns_file;
  std::filesystem::path index_file;
};

struct Manifest {
  std::string method;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> shards;
};

inline json manifest_to_json(const Manifest& m) {
  json shards = json::array();
  for (const auto& e : m.shards) {
    shards.push_back({{"shard", e.shard},
                      {"cluster", e.cluster},
                      {"column_ids", e.column_ids},
                      {"columns_file", e.columns_file.generic_string()},
                      {"index_file", e.index_file.generic_string()}});
  }
  return json{{"method", m.method}, {"k", m.k}, {"seed", m.seed}, {"shards", std::move(shards)}};
}

/// Relative shard paths are resolved against the manifest's directory.
inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  Manifest m;
  try {
    const json j = json::parse(in);
    m.method = j.at("method").get<std::string>();
    m.k = j.at("k").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const json& s : j.at("shards")) {
      ManifestEntry e;
      e.shard = s.at("shard").get<std::uint32_t>();
      e.cluster = s.at("cluster").get<std::uint32_t>();
      e.column_ids = s.at("column_ids").get<std::vector<std::string>>();
      e.columns_file = path.parent_path() / s.at("columns_file").get<std::string>();
      e.index_file = path.parent_path() / s.at("index_file").get<std::string>();
      m.shards.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed manifest (" + e.what() + ")");
  }
  return m;
}

}  // namespace vecjoin
