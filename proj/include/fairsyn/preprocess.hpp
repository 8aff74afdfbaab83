#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "fairsyn/error.hpp"
#include "fairsyn/table.hpp"

namespace fairsyn {

struct PreprocessPolicy {
  bool impute = true;
  bool scale_continuous = true;
};

namespace detail {

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mode_of(const std::vector<double>& v) {
  std::map<double, std::size_t> counts;
  for (double x : v) ++counts[x];
  double best = v.front();
  std::size_t best_n = 0;
  for (const auto& [val, n] : counts) {
    if (n > best_n) {
      best = val;
      best_n = n;
    }
  }
  return best;
}

}  // namespace detail

// Imputation (median for continuous, mode for binary/categorical) and
// optional min-max scaling of continuous columns. Applying it twice equals
// applying it once: imputation clears the missing mask and scaling is
// recorded in the column codec and skipped when already present.
inline Table preprocess(Table t, const PreprocessPolicy& policy = {}) {
  const auto& schema = t.schema();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto& col = t.column(c);
    auto& miss = t.missing(c);
    const std::size_t n = col.size();

    if (policy.impute) {
      std::vector<double> present;
      present.reserve(n);
      for (std::size_t r = 0; r < n; ++r) {
        if (!miss[r]) present.push_back(col[r]);
      }
      bool any_missing = present.size() < n;
      if (any_missing) {
        if (present.empty()) {
          throw AllMissingColumnError("column '" + schema[c].name + "' has no observed values");
        }
        const double fill = schema[c].kind == ColumnKind::continuous
                                ? detail::median_of(present)
                                : detail::mode_of(present);
        for (std::size_t r = 0; r < n; ++r) {
          if (miss[r]) {
            col[r] = fill;
            miss[r] = 0;
          }
        }
        t.codec(c).imputed = true;
        t.codec(c).impute_value = fill;
      }
    }

    if (schema[c].kind != ColumnKind::continuous) {
      t.codec(c).encoded = true;
      continue;
    }
    if (policy.scale_continuous && !t.codec(c).scaled && n > 0) {
      double lo = col[0], hi = col[0];
      bool any = false;
      for (std::size_t r = 0; r < n; ++r) {
        if (miss[r]) continue;
        lo = any ? std::min(lo, col[r]) : col[r];
        hi = any ? std::max(hi, col[r]) : col[r];
        any = true;
      }
      if (!any) continue;
      const double span = hi - lo;
      for (std::size_t r = 0; r < n; ++r) {
        if (miss[r]) continue;
        col[r] = span > 0.0 ? (col[r] - lo) / span : 0.0;
      }
      auto& codec = t.codec(c);
      codec.scaled = true;
      codec.scale_min = lo;
      codec.scale_max = span > 0.0 ? hi : lo + 1.0;
    }
  }
  return t;
}

}  // namespace fairsyn
