#pragma once

// Deterministic character-trigram hashing embedder. A test stand-in so that
// end-to-end runs need no model download; real deployments supply vectors
// produced by an external embedding model.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "vecjoin/core.hpp"

namespace vecjoin {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Each trigram of "##" + lowercase(s) + "##" adds +1 or -1 (hash bit 63) at
/// position hash % dim; the sum is scaled to unit length.
inline Vector embed_toy(std::string_view s, std::size_t dim) {
  if (dim < 2) throw InputError("embedding dimension must be at least 2");
  std::string padded = "##";
  for (unsigned char c : s) padded.push_back(static_cast<char>(std::tolower(c)));
  padded += "##";
  Vector v(dim, 0.0);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    const std::uint64_t h = fnv1a(std::string_view(padded).substr(i, 3));
    v[h % dim] += (h >> 63) ? -1.0 : 1.0;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  // Opposite-sign collisions can cancel to zero; fall back to the untouched hash slot.
  if (norm == 0.0) v[fnv1a(padded) % dim] = 1.0;
  return normalize(v);
}

namespace detail {

// RFC 4180-style fields: quotes, doubled quotes, embedded separators.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in, const std::string& source) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, at_field_start = true;
  std::size_t line = 1;
  char c;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    at_field_start = true;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && at_field_start) {
      quoted = true;
      at_field_start = false;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
      ++line;
    } else if (c != '\r') {
      field.push_back(c);
      at_field_start = false;
    }
  }
  if (quoted) throw InputError(source + ":" + std::to_string(line) + ": unterminated quoted field");
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

}  // namespace detail

/// First row names the columns; the file stem is the table id. Empty cells
/// are skipped. Column ids are "<stem>.<header>".
inline std::vector<Column> embed_csv(const std::filesystem::path& path, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  const auto rows = detail::parse_csv(in, path.string());
  if (rows.empty()) throw InputError(path.string() + ": no header row");
  const std::string table = path.stem().string();
  const auto& header = rows.front();
  std::vector<Column> out;
  for (std::size_t c = 0; c < header.size(); ++c) {
    std::vector<Vector> vectors;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (c < rows[r].size() && !rows[r][c].empty()) vectors.push_back(embed_toy(rows[r][c], dim));
    }
    if (vectors.empty()) continue;
    out.push_back(make_column(table + "." + header[c], table, std::move(vectors), false));
  }
  if (out.empty()) throw InputError(path.string() + ": no non-empty columns");
  return out;
}

}  // namespace vecjoin
