#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fairsyn/error.hpp"

namespace fairsyn {

enum class ColumnKind { binary, categorical, continuous };

enum class RoleHint { protected_attribute, confounder, mediator, outcome, ignore };

inline const char* to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::binary: return "binary";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::continuous: return "continuous";
  }
  return "?";
}

inline ColumnKind column_kind_from_string(const std::string& s) {
  if (s == "binary") return ColumnKind::binary;
  if (s == "categorical") return ColumnKind::categorical;
  if (s == "continuous") return ColumnKind::continuous;
  throw ConfigError("unknown column kind '" + s + "'");
}

inline const char* to_string(RoleHint r) {
  switch (r) {
    case RoleHint::protected_attribute: return "protected";
    case RoleHint::confounder: return "confounder";
    case RoleHint::mediator: return "mediator";
    case RoleHint::outcome: return "outcome";
    case RoleHint::ignore: return "ignore";
  }
  return "?";
}

inline RoleHint role_hint_from_string(const std::string& s) {
  if (s == "protected") return RoleHint::protected_attribute;
  if (s == "confounder") return RoleHint::confounder;
  if (s == "mediator") return RoleHint::mediator;
  if (s == "outcome") return RoleHint::outcome;
  if (s == "ignore") return RoleHint::ignore;
  throw ConfigError("unknown role hint '" + s + "'");
}

// Declared description of one column. For categorical columns `levels` is the
// ordered label list; empty means "infer from data at ingest". For binary
// columns the levels are implicitly {"0", "1"}.
struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::vector<std::string> levels;
  std::optional<double> min;
  std::optional<double> max;
  std::optional<RoleHint> role_hint;
};

}  // namespace fairsyn
