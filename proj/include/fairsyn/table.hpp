#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fairsyn/error.hpp"
#include "fairsyn/schema.hpp"

namespace fairsyn {

enum class Provenance { real, synthetic };

// Reversible transforms applied to a column, recorded so exports can restore
// the original encoding.
struct ColumnCodec {
  bool encoded = false;              // values are level codes (see schema levels)
  bool scaled = false;               // affine min-max transform applied
  double scale_min = 0.0;
  double scale_max = 1.0;
  bool imputed = false;
  double impute_value = 0.0;
};

// Column-major table of doubles with a per-cell missing mask. Categorical
// cells hold level codes; binary cells hold 0/1.
class Table {
 public:
  Table() = default;

  Table(std::vector<ColumnSchema> schema, std::size_t rows, Provenance prov)
      : schema_(std::move(schema)), provenance_(prov) {
    cols_.assign(schema_.size(), std::vector<double>(rows, 0.0));
    missing_.assign(schema_.size(), std::vector<std::uint8_t>(rows, 0));
    codecs_.assign(schema_.size(), ColumnCodec{});
  }

  std::size_t row_count() const { return cols_.empty() ? 0 : cols_[0].size(); }
  std::size_t column_count() const { return schema_.size(); }

  const std::vector<ColumnSchema>& schema() const { return schema_; }
  std::vector<ColumnSchema>& schema() { return schema_; }
  Provenance provenance() const { return provenance_; }
  void set_provenance(Provenance p) { provenance_ = p; }

  std::size_t column_index(const std::string& name) const {
    for (std::size_t i = 0; i < schema_.size(); ++i) {
      if (schema_[i].name == name) return i;
    }
    throw MissingColumnError("no column named '" + name + "'");
  }

  bool has_column(const std::string& name) const {
    for (const auto& c : schema_) {
      if (c.name == name) return true;
    }
    return false;
  }

  const std::vector<double>& column(std::size_t c) const { return cols_.at(c); }
  std::vector<double>& column(std::size_t c) { return cols_.at(c); }
  const std::vector<double>& column(const std::string& name) const {
    return cols_[column_index(name)];
  }

  const std::vector<std::uint8_t>& missing(std::size_t c) const { return missing_.at(c); }
  std::vector<std::uint8_t>& missing(std::size_t c) { return missing_.at(c); }

  double cell(std::size_t r, std::size_t c) const { return cols_[c][r]; }
  void set_cell(std::size_t r, std::size_t c, double v) { cols_[c][r] = v; }
  bool is_missing(std::size_t r, std::size_t c) const { return missing_[c][r] != 0; }
  void set_missing(std::size_t r, std::size_t c, bool m) { missing_[c][r] = m ? 1 : 0; }

  const ColumnCodec& codec(std::size_t c) const { return codecs_.at(c); }
  ColumnCodec& codec(std::size_t c) { return codecs_.at(c); }

  bool any_missing() const {
    for (const auto& m : missing_) {
      for (auto b : m) {
        if (b) return true;
      }
    }
    return false;
  }

  // Maps a level label to its code for binary/categorical columns.
  double level_code(std::size_t c, const std::string& label) const {
    const ColumnSchema& s = schema_[c];
    if (s.kind == ColumnKind::binary) {
      if (label == "0") return 0.0;
      if (label == "1") return 1.0;
      throw ConfigError("binary column '" + s.name + "' has no level '" + label + "'");
    }
    if (s.kind == ColumnKind::categorical) {
      for (std::size_t i = 0; i < s.levels.size(); ++i) {
        if (s.levels[i] == label) return static_cast<double>(i);
      }
      throw ConfigError("column '" + s.name + "' has no level '" + label + "'");
    }
    throw ConfigError("column '" + s.name + "' is continuous and has no levels");
  }

  std::string level_label(std::size_t c, double code) const {
    const ColumnSchema& s = schema_[c];
    const auto idx = static_cast<std::size_t>(std::llround(code));
    if (s.kind == ColumnKind::binary) return idx == 0 ? "0" : "1";
    if (s.kind == ColumnKind::categorical && idx < s.levels.size()) return s.levels[idx];
    throw ConfigError("column '" + s.name + "' has no code " + std::to_string(code));
  }

  std::size_t level_count(std::size_t c) const {
    const ColumnSchema& s = schema_[c];
    if (s.kind == ColumnKind::binary) return 2;
    if (s.kind == ColumnKind::categorical) return s.levels.size();
    throw ConfigError("column '" + s.name + "' is continuous and has no levels");
  }

  Table select_rows(const std::vector<std::size_t>& rows) const {
    Table out(schema_, rows.size(), provenance_);
    out.codecs_ = codecs_;
    for (std::size_t c = 0; c < schema_.size(); ++c) {
      for (std::size_t k = 0; k < rows.size(); ++k) {
        out.cols_[c][k] = cols_[c][rows[k]];
        out.missing_[c][k] = missing_[c][rows[k]];
      }
    }
    return out;
  }

  void append_row(const std::vector<double>& values) {
    if (values.size() != schema_.size()) {
      throw LengthMismatchError("row has " + std::to_string(values.size()) +
                                " values, table has " + std::to_string(schema_.size()) +
                                " columns");
    }
    for (std::size_t c = 0; c < schema_.size(); ++c) {
      cols_[c].push_back(values[c]);
      missing_[c].push_back(0);
    }
  }

  void append_rows(const Table& other) {
    if (other.column_count() != column_count()) {
      throw SchemaMismatchError("appending table with different column count");
    }
    for (std::size_t c = 0; c < schema_.size(); ++c) {
      cols_[c].insert(cols_[c].end(), other.cols_[c].begin(), other.cols_[c].end());
      missing_[c].insert(missing_[c].end(), other.missing_[c].begin(), other.missing_[c].end());
    }
  }

  void truncate(std::size_t rows) {
    if (rows >= row_count()) return;
    for (std::size_t c = 0; c < schema_.size(); ++c) {
      cols_[c].resize(rows);
      missing_[c].resize(rows);
    }
  }

 private:
  std::vector<ColumnSchema> schema_;
  std::vector<std::vector<double>> cols_;
  std::vector<std::vector<std::uint8_t>> missing_;
  std::vector<ColumnCodec> codecs_;
  Provenance provenance_ = Provenance::real;
};

}  // namespace fairsyn
