#pragma once

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairsyn/table.hpp"

namespace fairsyn {

// Role assignment for a fairness analysis: one protected attribute X, a set
// of confounders Z, a set of mediators W, one outcome Y, plus the two X
// levels being compared and the Y level counted as the positive outcome.
struct SfmSpec {
  std::string x;
  std::vector<std::string> z;
  std::vector<std::string> w;
  std::string y;
  std::string x0;
  std::string x1;
  std::string y_positive = "1";
  std::vector<std::string> ignore;

  nlohmann::json to_json() const {
    return nlohmann::json{{"x", x},          {"z", z},
                          {"w", w},          {"y", y},
                          {"x0", x0},        {"x1", x1},
                          {"y_positive", y_positive}, {"ignore", ignore}};
  }

  static SfmSpec from_json(const nlohmann::json& j) {
    SfmSpec s;
    s.x = j.at("x").get<std::string>();
    s.z = j.value("z", std::vector<std::string>{});
    s.w = j.value("w", std::vector<std::string>{});
    s.y = j.at("y").get<std::string>();
    s.x0 = j.at("x0").get<std::string>();
    s.x1 = j.at("x1").get<std::string>();
    s.y_positive = j.value("y_positive", std::string("1"));
    s.ignore = j.value("ignore", std::vector<std::string>{});
    return s;
  }
};

enum class ViolationKind {
  unknown_column,
  role_overlap,
  non_binary,
  unassigned_column,
  duplicate_role,
  same_levels,
  unknown_level,
};

inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::unknown_column: return "UnknownColumn";
    case ViolationKind::role_overlap: return "RoleOverlap";
    case ViolationKind::non_binary: return "NonBinary";
    case ViolationKind::unassigned_column: return "UnassignedColumn";
    case ViolationKind::duplicate_role: return "DuplicateRole";
    case ViolationKind::same_levels: return "SameLevels";
    case ViolationKind::unknown_level: return "UnknownLevel";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  std::string column;
  std::string message;
};

namespace detail {

inline bool is_two_level(const Table& t, std::size_t c) {
  const auto& s = t.schema()[c];
  if (s.kind == ColumnKind::binary) return true;
  return s.kind == ColumnKind::categorical && s.levels.size() == 2;
}

inline bool has_level(const Table& t, std::size_t c, const std::string& label) {
  const auto& s = t.schema()[c];
  if (s.kind == ColumnKind::binary) return label == "0" || label == "1";
  if (s.kind == ColumnKind::categorical) {
    for (const auto& l : s.levels) {
      if (l == label) return true;
    }
  }
  return false;
}

}  // namespace detail

// Checks the role assignment against the table. Violations are returned as
// data; an empty vector means the pair (table, spec) is usable downstream.
inline std::vector<Violation> validate_sfm(const Table& t, const SfmSpec& s) {
  std::vector<Violation> out;
  std::set<std::string> seen;
  std::set<std::string> assigned;

  auto check_column = [&](const std::string& name, const char* role) {
    if (!t.has_column(name)) {
      out.push_back({ViolationKind::unknown_column, name,
                     std::string(role) + " column '" + name + "' not in table"});
      return false;
    }
    if (assigned.count(name)) {
      out.push_back({ViolationKind::role_overlap, name,
                     "column '" + name + "' assigned to more than one role"});
      return false;
    }
    assigned.insert(name);
    return true;
  };

  auto check_list = [&](const std::vector<std::string>& names, const char* role) {
    std::set<std::string> local;
    for (const auto& n : names) {
      if (!local.insert(n).second) {
        out.push_back({ViolationKind::duplicate_role, n,
                       "column '" + n + "' listed twice as " + role});
        continue;
      }
      check_column(n, role);
    }
  };

  const bool x_ok = check_column(s.x, "protected");
  check_list(s.z, "confounder");
  check_list(s.w, "mediator");
  const bool y_ok = check_column(s.y, "outcome");
  for (const auto& n : s.ignore) {
    if (!t.has_column(n)) {
      out.push_back({ViolationKind::unknown_column, n,
                     "ignored column '" + n + "' not in table"});
    } else if (!assigned.insert(n).second) {
      out.push_back({ViolationKind::role_overlap, n,
                     "column '" + n + "' both ignored and assigned a role"});
    }
  }

  for (const auto& col : t.schema()) {
    if (!assigned.count(col.name)) {
      out.push_back({ViolationKind::unassigned_column, col.name,
                     "column '" + col.name + "' has no role and is not ignored"});
    }
  }

  if (x_ok) {
    const std::size_t cx = t.column_index(s.x);
    if (!detail::is_two_level(t, cx)) {
      out.push_back({ViolationKind::non_binary, s.x,
                     "protected column '" + s.x + "' must have exactly two levels"});
    } else {
      if (!detail::has_level(t, cx, s.x0)) {
        out.push_back({ViolationKind::unknown_level, s.x,
                       "x0 level '" + s.x0 + "' not a level of '" + s.x + "'"});
      }
      if (!detail::has_level(t, cx, s.x1)) {
        out.push_back({ViolationKind::unknown_level, s.x,
                       "x1 level '" + s.x1 + "' not a level of '" + s.x + "'"});
      }
      if (s.x0 == s.x1) {
        out.push_back({ViolationKind::same_levels, s.x, "x0 and x1 are the same level"});
      }
    }
  }
  if (y_ok) {
    const std::size_t cy = t.column_index(s.y);
    if (!detail::is_two_level(t, cy)) {
      out.push_back({ViolationKind::non_binary, s.y,
                     "outcome column '" + s.y + "' must have exactly two levels"});
    } else if (!detail::has_level(t, cy, s.y_positive)) {
      out.push_back({ViolationKind::unknown_level, s.y,
                     "y_positive level '" + s.y_positive + "' not a level of '" + s.y + "'"});
    }
  }
  return out;
}

}  // namespace fairsyn
