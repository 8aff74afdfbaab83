#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairsyn/error.hpp"
#include "fairsyn/rng.hpp"
#include "fairsyn/sfm.hpp"
#include "fairsyn/table.hpp"

namespace fairsyn {

inline constexpr std::size_t kAdaptBins = 4;

// Counterfactual adaptation by conditional quantile matching. Variables are
// mapped in causal order (mediators in schema order, then the outcome): a row
// of the x1 group gets, for each variable, the x0-group quantile at the
// randomized rank its value holds among x1-group rows of the same stratum.
// Strata combine confounder bins with the already-adapted upstream mediators,
// so downstream maps condition on counterfactual, not factual, parents.
struct AdaptationPlan {
  struct VariablePools {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    std::vector<std::string> key_cols;  // z columns, then earlier mediators
    // stratum key -> sorted values; source = x1 group, target = x0 group
    std::map<std::vector<std::size_t>, std::vector<double>> source;
    std::map<std::vector<std::size_t>, std::vector<double>> target;
  };

  SfmSpec spec;
  std::uint64_t seed = 0;
  std::vector<std::string> order;                     // w columns, then y
  std::map<std::string, std::vector<double>> edges;   // bin edges per key column
  std::vector<VariablePools> pools;

  nlohmann::json to_json() const;
  static AdaptationPlan from_json(const nlohmann::json& j);
};

struct AdaptationStats {
  std::size_t adapted_rows = 0;
  std::size_t fallback_lookups = 0;  // strata resolved after dropping key suffixes
};

namespace detail {

inline std::size_t adapt_bin(const std::vector<double>& edges, double v) {
  std::size_t b = 0;
  for (double e : edges) {
    if (v > e) ++b;
  }
  return b;
}

inline std::vector<double> quantile_edges(std::vector<double> vals, std::size_t bins) {
  std::sort(vals.begin(), vals.end());
  std::vector<double> edges;
  for (std::size_t k = 1; k < bins && !vals.empty(); ++k) {
    edges.push_back(vals[vals.size() * k / bins]);
  }
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

// Rank of v within a sorted pool, tie-randomized so that mapped values follow
// the target distribution instead of collapsing onto tie boundaries.
inline double randomized_rank(const std::vector<double>& pool, double v, double u) {
  const auto lo = std::lower_bound(pool.begin(), pool.end(), v) - pool.begin();
  const auto hi = std::upper_bound(pool.begin(), pool.end(), v) - pool.begin();
  const double eq = hi > lo ? static_cast<double>(hi - lo) : 1.0;
  const double r = (static_cast<double>(lo) + u * eq) / static_cast<double>(pool.size());
  return std::min(std::max(r, 0.0), 1.0 - 1e-12);
}

inline double quantile_at(const std::vector<double>& pool, double rank) {
  const auto i = static_cast<std::size_t>(rank * static_cast<double>(pool.size()));
  return pool[std::min(i, pool.size() - 1)];
}

// Marginalizes pools over dropped trailing key components; used when a row's
// full stratum has no donors.
inline std::vector<double> merged_pool(
    const std::map<std::vector<std::size_t>, std::vector<double>>& pools,
    const std::vector<std::size_t>& key, std::size_t keep) {
  std::vector<double> out;
  for (const auto& [k, vals] : pools) {
    if (std::equal(k.begin(), k.begin() + static_cast<std::ptrdiff_t>(keep), key.begin())) {
      out.insert(out.end(), vals.begin(), vals.end());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

inline AdaptationPlan fit_adaptation(const Table& t, const SfmSpec& s,
                                     std::uint64_t seed, std::size_t bins = kAdaptBins) {
  for (const auto& v : validate_sfm(t, s)) {
    if (v.kind != ViolationKind::unassigned_column) {
      throw ConfigError(std::string(to_string(v.kind)) + ": " + v.message);
    }
  }
  AdaptationPlan plan;
  plan.spec = s;
  plan.seed = seed;
  plan.order = s.w;
  plan.order.push_back(s.y);

  const std::size_t cx = t.column_index(s.x);
  const double x1_code = t.level_code(cx, s.x1);
  std::vector<bool> is_x1(t.row_count());
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    is_x1[r] = t.cell(r, cx) == x1_code;
  }

  // Key-column bin edges come from the pooled table so both groups, and later
  // apply() inputs, bin identically.
  auto ensure_edges = [&](const std::string& name) {
    if (plan.edges.count(name)) return;
    const std::size_t c = t.column_index(name);
    if (t.schema()[c].kind == ColumnKind::continuous) {
      plan.edges[name] = detail::quantile_edges(t.column(c), bins);
    } else {
      plan.edges[name] = {};  // discrete keys use the level code directly
    }
  };

  std::vector<std::string> keys;
  for (const auto& z : s.z) {
    ensure_edges(z);
    keys.push_back(z);
  }
  for (const auto& var : plan.order) {
    const std::size_t cv = t.column_index(var);
    AdaptationPlan::VariablePools vp;
    vp.name = var;
    vp.kind = t.schema()[cv].kind;
    vp.key_cols = keys;
    for (std::size_t r = 0; r < t.row_count(); ++r) {
      std::vector<std::size_t> key;
      key.reserve(keys.size());
      for (const auto& kc : keys) {
        const double v = t.cell(r, t.column_index(kc));
        const auto& e = plan.edges.at(kc);
        key.push_back(e.empty() ? static_cast<std::size_t>(std::llround(v))
                                : detail::adapt_bin(e, v));
      }
      (is_x1[r] ? vp.source : vp.target)[key].push_back(t.cell(r, cv));
    }
    for (auto& [k, vals] : vp.source) std::sort(vals.begin(), vals.end());
    for (auto& [k, vals] : vp.target) std::sort(vals.begin(), vals.end());
    if (vp.source.empty() || vp.target.empty()) {
      throw DegenerateGroupError("adaptation needs rows in both x levels");
    }
    plan.pools.push_back(std::move(vp));
    if (var != s.y) {
      ensure_edges(var);
      keys.push_back(var);
    }
  }
  return plan;
}

// Returns a copy of `t` with x1-group mediators (and, if include_outcome, the
// outcome) replaced by their x0-world counterparts. Row order is preserved;
// x0-group rows pass through unchanged.
inline Table apply_adaptation(const AdaptationPlan& plan, const Table& t,
                              bool include_outcome, AdaptationStats* stats = nullptr) {
  const SfmSpec& s = plan.spec;
  Table out = t;
  const std::size_t cx = t.column_index(s.x);
  const double x1_code = t.level_code(cx, s.x1);

  AdaptationStats local;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    if (t.cell(r, cx) == x1_code) ++local.adapted_rows;
  }
  for (std::size_t vi = 0; vi < plan.pools.size(); ++vi) {
    const auto& vp = plan.pools[vi];
    if (vp.name == s.y && !include_outcome) continue;
    const std::size_t cv = out.column_index(vp.name);
    // One stream per variable, consumed in row order.
    Rng rng(mix_seed(plan.seed, 0xADA9ULL, vi));
    for (std::size_t r = 0; r < out.row_count(); ++r) {
      const double u = rng.uniform();
      if (t.cell(r, cx) != x1_code) continue;
      std::vector<std::size_t> key;
      key.reserve(vp.key_cols.size());
      for (const auto& kc : vp.key_cols) {
        const double kv = out.cell(r, out.column_index(kc));  // adapted upstream
        const auto& e = plan.edges.at(kc);
        key.push_back(e.empty() ? static_cast<std::size_t>(std::llround(kv))
                                : detail::adapt_bin(e, kv));
      }
      // The rank is taken against factual (x1-side) donors keyed by factual
      // parents; the value is read from the x0 pool keyed by adapted parents.
      std::vector<std::size_t> src_key;
      src_key.reserve(vp.key_cols.size());
      for (const auto& kc : vp.key_cols) {
        const double kv = t.cell(r, t.column_index(kc));
        const auto& e = plan.edges.at(kc);
        src_key.push_back(e.empty() ? static_cast<std::size_t>(std::llround(kv))
                                    : detail::adapt_bin(e, kv));
      }
      auto resolve = [&](const std::map<std::vector<std::size_t>, std::vector<double>>& pools,
                         const std::vector<std::size_t>& k) -> std::vector<double> {
        auto it = pools.find(k);
        if (it != pools.end()) return it->second;
        for (std::size_t keep = k.size(); keep-- > 0;) {
          auto merged = detail::merged_pool(pools, k, keep);
          if (!merged.empty()) {
            ++local.fallback_lookups;
            return merged;
          }
        }
        throw EmptyStratumError("no donor rows for variable '" + vp.name + "'");
      };
      const std::vector<double> src = resolve(vp.source, src_key);
      const std::vector<double> tgt = resolve(vp.target, key);
      const double rank = detail::randomized_rank(src, t.cell(r, cv), u);
      out.set_cell(r, cv, detail::quantile_at(tgt, rank));
    }
  }
  if (stats) *stats = local;
  return out;
}

inline nlohmann::json AdaptationPlan::to_json() const {
  auto pools_json = [](const std::map<std::vector<std::size_t>, std::vector<double>>& m) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, vals] : m) {
      std::string key;
      for (std::size_t i = 0; i < k.size(); ++i) {
        if (i) key += ':';
        key += std::to_string(k[i]);
      }
      out[key] = vals;
    }
    return out;
  };
  nlohmann::json jp = nlohmann::json::array();
  for (const auto& vp : pools) {
    jp.push_back({{"name", vp.name},
                  {"kind", to_string(vp.kind)},
                  {"key_cols", vp.key_cols},
                  {"source", pools_json(vp.source)},
                  {"target", pools_json(vp.target)}});
  }
  return nlohmann::json{{"spec", spec.to_json()},
                        {"seed", seed},
                        {"order", order},
                        {"edges", edges},
                        {"pools", jp}};
}

inline AdaptationPlan AdaptationPlan::from_json(const nlohmann::json& j) {
  AdaptationPlan plan;
  plan.spec = SfmSpec::from_json(j.at("spec"));
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.order = j.at("order").get<std::vector<std::string>>();
  plan.edges = j.at("edges").get<std::map<std::string, std::vector<double>>>();
  auto parse_pools = [](const nlohmann::json& m) {
    std::map<std::vector<std::size_t>, std::vector<double>> out;
    for (auto it = m.begin(); it != m.end(); ++it) {
      std::vector<std::size_t> key;
      const std::string& ks = it.key();
      std::size_t pos = 0;
      while (pos <= ks.size() && !ks.empty()) {
        const std::size_t next = ks.find(':', pos);
        key.push_back(std::stoull(ks.substr(pos, next - pos)));
        if (next == std::string::npos) break;
        pos = next + 1;
      }
      out[key] = it.value().get<std::vector<double>>();
    }
    return out;
  };
  for (const auto& pj : j.at("pools")) {
    VariablePools vp;
    vp.name = pj.at("name").get<std::string>();
    vp.kind = column_kind_from_string(pj.at("kind").get<std::string>());
    vp.key_cols = pj.at("key_cols").get<std::vector<std::string>>();
    vp.source = parse_pools(pj.at("source"));
    vp.target = parse_pools(pj.at("target"));
    plan.pools.push_back(std::move(vp));
  }
  return plan;
}

}  // namespace fairsyn
