#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairsyn/error.hpp"
#include "fairsyn/rng.hpp"
#include "fairsyn/sfm.hpp"
#include "fairsyn/table.hpp"

namespace fairsyn {

inline constexpr double kCptRowTolerance = 1e-9;
inline constexpr std::uint64_t kMaxEnumeration = 10'000'000;

struct ScmVariable {
  std::string name;
  std::size_t arity = 2;
};

// Exact counterfactual quantities of a model, all conditioned/anchored as the
// reporting convention requires: de at x0, ie in both directions at x0, se in
// both level orders. residual is tv - (de - ie - se) and is analytically zero.
struct ExactEffects {
  double tv = 0.0;
  double de = 0.0;
  double ie = 0.0;           // direction x1 -> x0, the reported one
  double ie_reversed = 0.0;  // direction x0 -> x1
  double se = 0.0;           // levels (x1, x0), the reported one
  double se_reversed = 0.0;  // levels (x0, x1)
  double p_y_x0 = 0.0;
  double p_y_x1 = 0.0;
  double residual = 0.0;
};

// Markovian discrete structural model: a DAG over finite variables with one
// conditional probability table per variable. CPT rows are indexed by parent
// configuration in first-parent-major (lexicographic) order.
class DiscreteScm {
 public:
  DiscreteScm(std::vector<ScmVariable> variables,
              std::vector<std::vector<std::size_t>> parents,
              std::vector<std::vector<std::vector<double>>> cpts, SfmSpec roles)
      : vars_(std::move(variables)),
        parents_(std::move(parents)),
        cpts_(std::move(cpts)),
        roles_(std::move(roles)) {
    validate_structure();
    topo_ = topological_order();
  }

  static DiscreteScm from_named(
      std::vector<ScmVariable> variables,
      const std::map<std::string, std::vector<std::string>>& parents,
      const std::map<std::string, std::vector<std::vector<double>>>& cpts, SfmSpec roles) {
    std::vector<std::vector<std::size_t>> pidx(variables.size());
    std::vector<std::vector<std::vector<double>>> ctab(variables.size());
    auto index_of = [&](const std::string& n) {
      for (std::size_t i = 0; i < variables.size(); ++i) {
        if (variables[i].name == n) return i;
      }
      throw ConfigError("scm references unknown variable '" + n + "'");
    };
    for (const auto& [name, plist] : parents) {
      auto& dst = pidx[index_of(name)];
      for (const auto& p : plist) dst.push_back(index_of(p));
    }
    for (const auto& [name, rows] : cpts) ctab[index_of(name)] = rows;
    return DiscreteScm(std::move(variables), std::move(pidx), std::move(ctab),
                       std::move(roles));
  }

  const std::vector<ScmVariable>& variables() const { return vars_; }
  const std::vector<std::vector<std::size_t>>& parents() const { return parents_; }
  const std::vector<std::vector<std::vector<double>>>& cpts() const { return cpts_; }
  const SfmSpec& roles() const { return roles_; }

  std::size_t variable_index(const std::string& name) const {
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (vars_[i].name == name) return i;
    }
    throw ConfigError("scm has no variable '" + name + "'");
  }

  // Ancestral sampling in topological order; one inverse-CDF draw per cell.
  Table sample(std::size_t n, std::uint64_t seed) const {
    std::vector<ColumnSchema> schema(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      schema[i].name = vars_[i].name;
      if (vars_[i].arity == 2) {
        schema[i].kind = ColumnKind::binary;
      } else {
        schema[i].kind = ColumnKind::categorical;
        for (std::size_t v = 0; v < vars_[i].arity; ++v) {
          schema[i].levels.push_back(std::to_string(v));
        }
      }
    }
    Table t(schema, n, Provenance::synthetic);
    Rng rng(seed);
    std::vector<std::size_t> values(vars_.size(), 0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t vi : topo_) {
        const auto& row = cpts_[vi][row_index(vi, values)];
        const double u = rng.uniform();
        double acc = 0.0;
        std::size_t drawn = row.size() - 1;
        for (std::size_t v = 0; v < row.size(); ++v) {
          acc += row[v];
          if (u < acc) {
            drawn = v;
            break;
          }
        }
        values[vi] = drawn;
        t.set_cell(r, vi, static_cast<double>(drawn));
      }
    }
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (schema[c].kind == ColumnKind::categorical) t.codec(c).encoded = true;
    }
    return t;
  }

  // P(Y_{x_a, W_{x_b}} = y+ | X = x_obs) by exhaustive enumeration over
  // background and mediator configurations. With a == b this is the plain
  // interventional P(y_{x_a} | x_obs); with a == b == obs the observational
  // P(y | x_obs).
  double counterfactual(std::size_t x_a, std::size_t x_b, std::size_t x_obs) const {
    Layout lay = layout();
    double num = 0.0;
    double den = 0.0;
    enumerate_background(lay, [&](std::vector<std::size_t>& values, double pb) {
      const double px = cpts_[lay.x][row_index(lay.x, values)][x_obs];
      if (px <= 0.0) return;
      const double w_obs = pb * px;
      const double inner = mediator_sum(lay, values, x_a, x_b);
      num += w_obs * inner;
      den += w_obs;
    });
    if (den <= 0.0) {
      throw DegenerateGroupError("X level " + std::to_string(x_obs) +
                                 " has probability zero");
    }
    return num / den;
  }

  ExactEffects exact_effects() const {
    const std::size_t a0 = level(roles_.x0);
    const std::size_t a1 = level(roles_.x1);
    ExactEffects e;
    e.p_y_x0 = counterfactual(a0, a0, a0);
    e.p_y_x1 = counterfactual(a1, a1, a1);
    e.tv = e.p_y_x1 - e.p_y_x0;
    e.de = counterfactual(a1, a0, a0) - e.p_y_x0;
    const double p_y_x1_given_x0 = counterfactual(a1, a1, a0);
    e.ie = counterfactual(a1, a0, a0) - p_y_x1_given_x0;
    e.ie_reversed = counterfactual(a0, a1, a0) - e.p_y_x0;
    e.se = p_y_x1_given_x0 - e.p_y_x1;
    e.se_reversed = counterfactual(a0, a0, a1) - e.p_y_x0;
    e.residual = e.tv - (e.de - e.ie - e.se);
    return e;
  }

  // Exact marginal P(var = v) for every variable, by full-joint enumeration.
  std::vector<std::vector<double>> exact_marginals() const {
    std::uint64_t total = 1;
    for (const auto& v : vars_) {
      total *= v.arity;
      if (total > kMaxEnumeration) {
        throw IntractableSizeError("configuration count exceeds cap");
      }
    }
    std::vector<std::vector<double>> marg(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i) marg[i].assign(vars_[i].arity, 0.0);
    std::vector<std::size_t> values(vars_.size(), 0);
    for (std::uint64_t cfg = 0; cfg < total; ++cfg) {
      std::uint64_t rem = cfg;
      for (std::size_t i = 0; i < vars_.size(); ++i) {
        values[i] = rem % vars_[i].arity;
        rem /= vars_[i].arity;
      }
      double p = 1.0;
      for (std::size_t vi : topo_) {
        p *= cpts_[vi][row_index(vi, values)][values[vi]];
        if (p == 0.0) break;
      }
      if (p > 0.0) {
        for (std::size_t i = 0; i < vars_.size(); ++i) marg[i][values[i]] += p;
      }
    }
    return marg;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["variables"] = nlohmann::json::array();
    for (const auto& v : vars_) {
      j["variables"].push_back({{"name", v.name}, {"arity", v.arity}});
    }
    nlohmann::json par = nlohmann::json::object();
    nlohmann::json cpt = nlohmann::json::object();
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      nlohmann::json plist = nlohmann::json::array();
      for (std::size_t p : parents_[i]) plist.push_back(vars_[p].name);
      par[vars_[i].name] = plist;
      cpt[vars_[i].name] = cpts_[i];
    }
    j["parents"] = par;
    j["cpts"] = cpt;
    j["roles"] = {{"x", roles_.x},   {"z", roles_.z},   {"w", roles_.w},
                  {"y", roles_.y},   {"x0", roles_.x0}, {"x1", roles_.x1},
                  {"y_positive", roles_.y_positive}};
    return j;
  }

  static DiscreteScm from_json(const nlohmann::json& j) {
    std::vector<ScmVariable> vars;
    for (const auto& v : j.at("variables")) {
      vars.push_back({v.at("name").get<std::string>(), v.at("arity").get<std::size_t>()});
    }
    std::map<std::string, std::vector<std::string>> parents;
    for (const auto& [name, plist] : j.at("parents").items()) {
      parents[name] = plist.get<std::vector<std::string>>();
    }
    std::map<std::string, std::vector<std::vector<double>>> cpts;
    for (const auto& [name, rows] : j.at("cpts").items()) {
      cpts[name] = rows.get<std::vector<std::vector<double>>>();
    }
    const auto& r = j.at("roles");
    SfmSpec roles;
    roles.x = r.at("x").get<std::string>();
    roles.z = r.at("z").get<std::vector<std::string>>();
    roles.w = r.at("w").get<std::vector<std::string>>();
    roles.y = r.at("y").get<std::string>();
    roles.x0 = r.at("x0").get<std::string>();
    roles.x1 = r.at("x1").get<std::string>();
    roles.y_positive = r.value("y_positive", "1");
    return from_named(std::move(vars), parents, cpts, std::move(roles));
  }

 private:
  struct Layout {
    std::size_t x = 0;
    std::size_t y = 0;
    std::vector<std::size_t> background;  // confounders + latents, topo order
    std::vector<std::size_t> mediators;   // topo order
  };

  std::size_t level(const std::string& label) const {
    std::size_t v = 0;
    for (char ch : label) {
      if (ch < '0' || ch > '9') throw ConfigError("scm level '" + label + "' not an integer");
      v = v * 10 + static_cast<std::size_t>(ch - '0');
    }
    return v;
  }

  std::size_t row_index(std::size_t vi, const std::vector<std::size_t>& values) const {
    std::size_t idx = 0;
    for (std::size_t p : parents_[vi]) idx = idx * vars_[p].arity + values[p];
    return idx;
  }

  void validate_structure() const {
    if (parents_.size() != vars_.size() || cpts_.size() != vars_.size()) {
      throw ConfigError("scm parents/cpts size mismatch");
    }
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (vars_[i].arity < 2) throw ConfigError("variable arity must be >= 2");
      std::size_t rows = 1;
      for (std::size_t p : parents_[i]) {
        if (p >= vars_.size()) throw ConfigError("parent index out of range");
        if (p == i) throw ConfigError("variable '" + vars_[i].name + "' is its own parent");
        rows *= vars_[p].arity;
      }
      if (cpts_[i].size() != rows) {
        throw InvalidCptError("variable '" + vars_[i].name + "' needs " +
                              std::to_string(rows) + " cpt rows, has " +
                              std::to_string(cpts_[i].size()));
      }
      for (const auto& row : cpts_[i]) {
        if (row.size() != vars_[i].arity) {
          throw InvalidCptError("cpt row width mismatch for '" + vars_[i].name + "'");
        }
        double sum = 0.0;
        for (double p : row) {
          if (p < 0.0) throw InvalidCptError("negative probability in '" + vars_[i].name + "'");
          sum += p;
        }
        if (std::fabs(sum - 1.0) > kCptRowTolerance) {
          throw InvalidCptError("cpt row of '" + vars_[i].name + "' sums to " +
                                std::to_string(sum));
        }
      }
    }
  }

  // Kahn's algorithm, ties broken by declaration order.
  std::vector<std::size_t> topological_order() const {
    const std::size_t n = vars_.size();
    std::vector<std::size_t> indeg(n, 0);
    for (std::size_t i = 0; i < n; ++i) indeg[i] = parents_[i].size();
    std::vector<std::size_t> order;
    std::vector<bool> done(n, false);
    while (order.size() < n) {
      bool advanced = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (done[i] || indeg[i] != 0) continue;
        order.push_back(i);
        done[i] = true;
        advanced = true;
        for (std::size_t j = 0; j < n; ++j) {
          if (!done[j]) {
            for (std::size_t p : parents_[j]) {
              if (p == i) --indeg[j];
            }
          }
        }
      }
      if (!advanced) throw ConfigError("scm graph has a cycle");
    }
    return order;
  }

  Layout layout() const {
    Layout lay;
    lay.x = variable_index(roles_.x);
    lay.y = variable_index(roles_.y);
    if (vars_[lay.x].arity != 2 || vars_[lay.y].arity != 2) {
      throw ConfigError("protected and outcome variables must be binary");
    }
    std::vector<bool> is_w(vars_.size(), false);
    for (const auto& n : roles_.w) is_w[variable_index(n)] = true;
    std::uint64_t count = 1;
    for (std::size_t vi : topo_) {
      if (vi == lay.x || vi == lay.y) continue;
      if (is_w[vi]) {
        lay.mediators.push_back(vi);
      } else {
        lay.background.push_back(vi);
      }
      count *= vars_[vi].arity;
      if (count > kMaxEnumeration) {
        throw IntractableSizeError("counterfactual enumeration exceeds cap");
      }
    }
    // Structural validity: background (confounders/latents) may not descend
    // from X or mediators; X may only depend on background.
    std::vector<bool> in_back(vars_.size(), false);
    for (std::size_t b : lay.background) in_back[b] = true;
    for (std::size_t b : lay.background) {
      for (std::size_t p : parents_[b]) {
        if (!in_back[p]) {
          throw ConfigError("confounder '" + vars_[b].name +
                            "' depends on a non-confounder");
        }
      }
    }
    for (std::size_t p : parents_[lay.x]) {
      if (!in_back[p]) {
        throw ConfigError("protected variable may only depend on confounders");
      }
    }
    for (std::size_t m : lay.mediators) {
      for (std::size_t p : parents_[m]) {
        if (p == lay.y) throw ConfigError("mediator depends on the outcome");
      }
    }
    return lay;
  }

  template <typename F>
  void enumerate_background(const Layout& lay, F&& fn) const {
    std::vector<std::size_t> values(vars_.size(), 0);
    enumerate_rec(lay.background, 0, values, 1.0, std::forward<F>(fn));
  }

  template <typename F>
  void enumerate_rec(const std::vector<std::size_t>& order, std::size_t depth,
                     std::vector<std::size_t>& values, double p, F&& fn) const {
    if (p == 0.0) return;
    if (depth == order.size()) {
      fn(values, p);
      return;
    }
    const std::size_t vi = order[depth];
    const auto& row = cpts_[vi][row_index(vi, values)];
    for (std::size_t v = 0; v < row.size(); ++v) {
      values[vi] = v;
      enumerate_rec(order, depth + 1, values, p * row[v], fn);
    }
    values[vi] = 0;
  }

  // Sum over mediator configurations of P(w | do(x_b), background) times the
  // outcome row at (x_a, w, background).
  double mediator_sum(const Layout& lay, std::vector<std::size_t>& values,
                      std::size_t x_a, std::size_t x_b) const {
    const std::size_t y_pos = level(roles_.y_positive);
    double total = 0.0;
    values[lay.x] = x_b;
    enumerate_rec(lay.mediators, 0, values, 1.0,
                  [&](std::vector<std::size_t>& v, double p) {
                    v[lay.x] = x_a;
                    total += p * cpts_[lay.y][row_index(lay.y, v)][y_pos];
                    v[lay.x] = x_b;
                  });
    return total;
  }

  std::vector<ScmVariable> vars_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::vector<double>>> cpts_;
  SfmSpec roles_;
  std::vector<std::size_t> topo_;
};

// Four-variable benchmark with confounding and a direct-effect dial. The
// outcome row is linear in x with slope 0.30 * strength and no interaction,
// so the exact DE equals 0.30 * strength at every strength in [0, 1].
inline DiscreteScm biased_benchmark_scm(double strength) {
  if (strength < 0.0 || strength > 1.0) {
    throw ConfigError("benchmark strength must be in [0, 1]");
  }
  auto bern = [](double p1) { return std::vector<double>{1.0 - p1, p1}; };
  std::vector<ScmVariable> vars = {{"Z", 2}, {"X", 2}, {"W", 2}, {"Y", 2}};
  std::map<std::string, std::vector<std::string>> parents = {
      {"Z", {}}, {"X", {"Z"}}, {"W", {"X", "Z"}}, {"Y", {"X", "W", "Z"}}};
  std::map<std::string, std::vector<std::vector<double>>> cpts;
  cpts["Z"] = {bern(0.5)};
  cpts["X"] = {bern(0.35), bern(0.65)};
  cpts["W"] = {bern(0.25), bern(0.40), bern(0.60), bern(0.75)};
  std::vector<std::vector<double>> y_rows;
  for (std::size_t x = 0; x < 2; ++x) {
    for (std::size_t w = 0; w < 2; ++w) {
      for (std::size_t z = 0; z < 2; ++z) {
        y_rows.push_back(bern(0.35 + 0.30 * strength * static_cast<double>(x) +
                              0.05 * static_cast<double>(w) + 0.05 * static_cast<double>(z)));
      }
    }
  }
  cpts["Y"] = y_rows;
  SfmSpec roles;
  roles.x = "X";
  roles.z = {"Z"};
  roles.w = {"W"};
  roles.y = "Y";
  roles.x0 = "0";
  roles.x1 = "1";
  roles.y_positive = "1";
  return DiscreteScm::from_named(std::move(vars), parents, cpts, std::move(roles));
}

}  // namespace fairsyn
