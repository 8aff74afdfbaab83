#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fairsyn/error.hpp"
#include "fairsyn/table.hpp"

namespace fairsyn {

struct CsvOptions {
  std::vector<std::string> missing_tokens = {"", "NA"};
};

namespace detail {

// RFC-4180 record reader: quoted fields, doubled quotes, CRLF, and embedded
// newlines inside quoted fields.
inline std::vector<std::vector<std::string>> read_csv_records(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool any_char = false;
  char ch;
  auto end_field = [&] {
    record.push_back(field);
    field.clear();
  };
  auto end_record = [&] {
    end_field();
    records.push_back(record);
    record.clear();
    any_char = false;
  };
  while (in.get(ch)) {
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      any_char = true;
      continue;
    }
    switch (ch) {
      case '"':
        in_quotes = true;
        any_char = true;
        break;
      case ',':
        end_field();
        any_char = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any_char || !field.empty() || !record.empty()) end_record();
        break;
      default:
        field.push_back(ch);
        any_char = true;
        break;
    }
  }
  if (any_char || !field.empty() || !record.empty()) end_record();
  return records;
}

inline bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
  if (b == e) return false;
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e;
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

// Parses a CSV stream against a declared schema. The returned table's column
// order follows the schema, not the file. Cells equal to a missing token, and
// numerically unparseable cells in continuous columns, are flagged in the
// missing mask; domain violations in binary/categorical cells raise
// TypeMismatch.
inline Table ingest_csv(std::istream& in, std::vector<ColumnSchema> schema,
                        const CsvOptions& opts = {}, Provenance prov = Provenance::real) {
  auto records = detail::read_csv_records(in);
  if (records.empty()) throw EmptyFileError("no header row");
  const auto& header = records.front();

  std::vector<std::size_t> file_pos(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), schema[c].name);
    if (it == header.end()) {
      throw MissingColumnError("header lacks column '" + schema[c].name + "'");
    }
    file_pos[c] = static_cast<std::size_t>(it - header.begin());
  }

  auto is_missing_token = [&](const std::string& s) {
    return std::find(opts.missing_tokens.begin(), opts.missing_tokens.end(), s) !=
           opts.missing_tokens.end();
  };

  // Infer levels (sorted unique labels) for categorical columns declared
  // without an explicit level list.
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (schema[c].kind != ColumnKind::categorical || !schema[c].levels.empty()) continue;
    std::set<std::string> labels;
    for (std::size_t r = 1; r < records.size(); ++r) {
      if (file_pos[c] >= records[r].size()) continue;
      const std::string& cell = records[r][file_pos[c]];
      if (!is_missing_token(cell)) labels.insert(cell);
    }
    schema[c].levels.assign(labels.begin(), labels.end());
  }

  const std::size_t n = records.size() - 1;
  Table t(schema, n, prov);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& rec = records[r + 1];
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const bool absent = file_pos[c] >= rec.size();
      const std::string cell = absent ? std::string() : rec[file_pos[c]];
      if (absent || is_missing_token(cell)) {
        t.set_missing(r, c, true);
        continue;
      }
      switch (schema[c].kind) {
        case ColumnKind::binary: {
          double v;
          if (!detail::parse_double(cell, v) || (v != 0.0 && v != 1.0)) {
            throw TypeMismatchError(r, schema[c].name, cell);
          }
          t.set_cell(r, c, v);
          break;
        }
        case ColumnKind::categorical: {
          const auto& levels = schema[c].levels;
          auto it = std::find(levels.begin(), levels.end(), cell);
          if (it == levels.end()) throw TypeMismatchError(r, schema[c].name, cell);
          t.set_cell(r, c, static_cast<double>(it - levels.begin()));
          t.codec(c).encoded = true;
          break;
        }
        case ColumnKind::continuous: {
          double v;
          if (!detail::parse_double(cell, v)) {
            t.set_missing(r, c, true);
          } else {
            t.set_cell(r, c, v);
          }
          break;
        }
      }
    }
    // Categorical codecs are per-column properties; mark even if all missing.
  }
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (t.schema()[c].kind == ColumnKind::categorical) t.codec(c).encoded = true;
  }
  return t;
}

inline Table ingest_csv_file(const std::string& path, std::vector<ColumnSchema> schema,
                             const CsvOptions& opts = {}, Provenance prov = Provenance::real) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EmptyFileError("cannot open '" + path + "'");
  return ingest_csv(in, std::move(schema), opts, prov);
}

// Writes a table as CSV. With decode=true (default) categorical codes become
// their labels and min-max scaled columns are mapped back to original units.
inline void write_csv(const Table& t, std::ostream& out, bool decode = true) {
  const auto& schema = t.schema();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (c) out << ',';
    out << detail::csv_escape(schema[c].name);
  }
  out << '\n';
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (c) out << ',';
      if (t.is_missing(r, c)) continue;
      double v = t.cell(r, c);
      const auto& codec = t.codec(c);
      switch (schema[c].kind) {
        case ColumnKind::binary:
          out << (v != 0.0 ? '1' : '0');
          break;
        case ColumnKind::categorical:
          if (decode) out << detail::csv_escape(t.level_label(c, v));
          else out << detail::format_double(v);
          break;
        case ColumnKind::continuous:
          if (decode && codec.scaled) {
            v = codec.scale_min + v * (codec.scale_max - codec.scale_min);
          }
          out << detail::format_double(v);
          break;
      }
    }
    out << '\n';
  }
}

inline void write_csv_file(const Table& t, const std::string& path, bool decode = true) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UnwritableOutputError("cannot open '" + path + "' for writing");
  write_csv(t, out, decode);
}

}  // namespace fairsyn
