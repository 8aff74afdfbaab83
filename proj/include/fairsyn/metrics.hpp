#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairsyn/error.hpp"
#include "fairsyn/forest.hpp"
#include "fairsyn/logistic.hpp"
#include "fairsyn/rng.hpp"
#include "fairsyn/sfm.hpp"
#include "fairsyn/table.hpp"

namespace fairsyn {

inline constexpr std::size_t kMinGroupRows = 10;
inline constexpr std::size_t kBootstrapRetries = 10;

enum class NuisanceModel { automatic, logistic, random_forest };

inline const char* to_string(NuisanceModel m) {
  switch (m) {
    case NuisanceModel::automatic: return "auto";
    case NuisanceModel::logistic: return "logistic";
    case NuisanceModel::random_forest: return "random_forest";
  }
  return "?";
}

inline NuisanceModel nuisance_from_string(const std::string& s) {
  if (s == "auto") return NuisanceModel::automatic;
  if (s == "logistic") return NuisanceModel::logistic;
  if (s == "random_forest") return NuisanceModel::random_forest;
  throw ConfigError("unknown nuisance model '" + s + "'");
}

struct EstimatorConfig {
  NuisanceModel nuisance_model = NuisanceModel::automatic;  // resolves by n at fit time
  std::size_t bootstrap_reps = 100;
  std::uint64_t seed = 0;
  std::size_t cross_fit_folds = 2;  // 1 disables cross-fitting
  std::size_t z_bins = 4;           // quantile bins per continuous confounder
  ForestConfig forest;

  void validate() const {
    if (bootstrap_reps < 2) throw ConfigError("bootstrap_reps must be >= 2");
    if (cross_fit_folds < 1) throw ConfigError("cross_fit_folds must be >= 1");
    if (z_bins < 2) throw ConfigError("z_bins must be >= 2");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"nuisance_model", to_string(nuisance_model)},
                          {"bootstrap_reps", bootstrap_reps},
                          {"seed", seed},
                          {"cross_fit_folds", cross_fit_folds},
                          {"z_bins", z_bins},
                          {"forest",
                           {{"n_trees", forest.n_trees},
                            {"max_depth", forest.max_depth},
                            {"min_leaf", forest.min_leaf},
                            {"seed", forest.seed},
                            {"feature_subsample", forest.feature_subsample}}}};
  }

  static EstimatorConfig from_json(const nlohmann::json& j) {
    EstimatorConfig c;
    c.nuisance_model = nuisance_from_string(j.value("nuisance_model", std::string("auto")));
    c.bootstrap_reps = j.value("bootstrap_reps", c.bootstrap_reps);
    c.seed = j.value("seed", c.seed);
    c.cross_fit_folds = j.value("cross_fit_folds", c.cross_fit_folds);
    c.z_bins = j.value("z_bins", c.z_bins);
    if (j.contains("forest")) {
      const auto& f = j["forest"];
      c.forest.n_trees = f.value("n_trees", c.forest.n_trees);
      c.forest.max_depth = f.value("max_depth", c.forest.max_depth);
      c.forest.min_leaf = f.value("min_leaf", c.forest.min_leaf);
      c.forest.seed = f.value("seed", c.forest.seed);
      c.forest.feature_subsample = f.value("feature_subsample", c.forest.feature_subsample);
    }
    return c;
  }
};

struct EffectStat {
  double est = 0.0;
  double sd = 0.0;
};

struct NuisanceSummary {
  std::string model;
  double accuracy = 0.0;
  double deviance = 0.0;
  bool positivity_violation = false;
  std::size_t empty_strata = 0;
};

// All effects of one decomposition, on shared bootstrap replicates. `ie` and
// `se` are the reported directions (the ones entering the identity with tv
// and de); the *_reversed fields carry the opposite level order.
struct FairnessDecomposition {
  EffectStat tv, de, ie, ie_reversed, se, se_reversed;
  double residual = 0.0;
  double replicate_residual_max = 0.0;  // largest |residual| over bootstrap replicates
  double p_y_x0 = 0.0;
  double p_y_x1 = 0.0;
  std::string x0_level, x1_level;
  NuisanceSummary nuisance;
  nlohmann::json config_echo;

  nlohmann::json to_json() const {
    auto stat = [](const EffectStat& e) {
      return nlohmann::json{{"est", e.est}, {"sd", e.sd}};
    };
    return nlohmann::json{
        {"tv", stat(tv)},
        {"de", stat(de)},
        {"ie", stat(ie)},
        {"ie_reversed", stat(ie_reversed)},
        {"se", stat(se)},
        {"se_reversed", stat(se_reversed)},
        {"residual", residual},
        {"replicate_residual_max", replicate_residual_max},
        {"p_y_x0", p_y_x0},
        {"p_y_x1", p_y_x1},
        {"direction", {{"x0", x0_level}, {"x1", x1_level}}},
        {"nuisance",
         {{"model", nuisance.model},
          {"accuracy", nuisance.accuracy},
          {"deviance", nuisance.deviance},
          {"positivity_violation", nuisance.positivity_violation},
          {"empty_strata", nuisance.empty_strata}}},
        {"config_echo", config_echo}};
  }

  static FairnessDecomposition from_json(const nlohmann::json& j) {
    auto stat = [&](const char* key) {
      const auto& e = j.at(key);
      return EffectStat{e.at("est").get<double>(), e.at("sd").get<double>()};
    };
    FairnessDecomposition d;
    d.tv = stat("tv");
    d.de = stat("de");
    d.ie = stat("ie");
    d.ie_reversed = stat("ie_reversed");
    d.se = stat("se");
    d.se_reversed = stat("se_reversed");
    d.residual = j.at("residual").get<double>();
    d.replicate_residual_max = j.value("replicate_residual_max", 0.0);
    d.p_y_x0 = j.value("p_y_x0", 0.0);
    d.p_y_x1 = j.value("p_y_x1", 0.0);
    if (j.contains("direction")) {
      d.x0_level = j["direction"].value("x0", std::string());
      d.x1_level = j["direction"].value("x1", std::string());
    }
    if (j.contains("nuisance")) {
      const auto& n = j["nuisance"];
      d.nuisance.model = n.value("model", std::string());
      d.nuisance.accuracy = n.value("accuracy", 0.0);
      d.nuisance.deviance = n.value("deviance", 0.0);
      d.nuisance.positivity_violation = n.value("positivity_violation", false);
      d.nuisance.empty_strata = n.value("empty_strata", std::size_t{0});
    }
    if (j.contains("config_echo")) d.config_echo = j["config_echo"];
    return d;
  }
};

namespace detail {

// Extracted analysis columns: x/y mapped to {0,1} by the requested levels,
// nuisance features in both forest (raw codes) and logistic (one-hot) form,
// and a composite confounder stratum per row.
struct Frame {
  std::vector<int> x;       // 0 = x0 level, 1 = x1 level
  std::vector<int> x_code;  // raw column code, invariant to the x0/x1 choice
  std::vector<int> y;
  FeatureMatrix feat;                           // col 0 = x
  std::vector<std::vector<double>> logit_rows;  // row-major, col 0 = x
  std::vector<std::size_t> z_cols;              // indices into feat of Z columns
  std::size_t rows = 0;

  Frame gather(const std::vector<std::size_t>& idx) const {
    Frame out;
    out.rows = idx.size();
    out.z_cols = z_cols;
    out.x.reserve(idx.size());
    out.x_code.reserve(idx.size());
    out.y.reserve(idx.size());
    for (std::size_t i : idx) {
      out.x.push_back(x[i]);
      out.x_code.push_back(x_code[i]);
      out.y.push_back(y[i]);
    }
    out.feat.names = feat.names;
    out.feat.kinds = feat.kinds;
    out.feat.cols.resize(feat.cols.size());
    for (std::size_t c = 0; c < feat.cols.size(); ++c) {
      out.feat.cols[c].reserve(idx.size());
      for (std::size_t i : idx) out.feat.cols[c].push_back(feat.cols[c][i]);
    }
    out.logit_rows.reserve(idx.size());
    for (std::size_t i : idx) out.logit_rows.push_back(logit_rows[i]);
    return out;
  }
};

inline void require_clean(const Table& t, const std::string& col) {
  const std::size_t c = t.column_index(col);
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    if (t.is_missing(r, c)) {
      throw ConfigError("column '" + col + "' has missing cells; preprocess first");
    }
  }
}

inline Frame build_frame(const Table& t, const SfmSpec& s) {
  auto violations = validate_sfm(t, s);
  for (const auto& v : violations) {
    if (v.kind != ViolationKind::unassigned_column) {
      throw ConfigError(std::string(to_string(v.kind)) + ": " + v.message);
    }
  }
  require_clean(t, s.x);
  require_clean(t, s.y);
  for (const auto& c : s.z) require_clean(t, c);
  for (const auto& c : s.w) require_clean(t, c);

  Frame f;
  f.rows = t.row_count();
  const std::size_t cx = t.column_index(s.x);
  const std::size_t cy = t.column_index(s.y);
  const double x0_code = t.level_code(cx, s.x0);
  const double x1_code = t.level_code(cx, s.x1);
  const double y_pos = t.level_code(cy, s.y_positive);
  f.x.resize(f.rows);
  f.x_code.resize(f.rows);
  f.y.resize(f.rows);
  for (std::size_t r = 0; r < f.rows; ++r) {
    const double xv = t.cell(r, cx);
    if (xv != x0_code && xv != x1_code) {
      throw ConfigError("protected column has a value outside {x0, x1}");
    }
    f.x[r] = xv == x1_code ? 1 : 0;
    f.x_code[r] = static_cast<int>(std::llround(xv));
    f.y[r] = t.cell(r, cy) == y_pos ? 1 : 0;
  }

  f.feat.names.push_back(s.x);
  f.feat.kinds.push_back(ColumnKind::binary);
  std::vector<double> xcol(f.rows);
  for (std::size_t r = 0; r < f.rows; ++r) xcol[r] = f.x[r];
  f.feat.cols.push_back(std::move(xcol));
  auto add_feature = [&](const std::string& name, bool is_z) {
    const std::size_t c = t.column_index(name);
    if (is_z) f.z_cols.push_back(f.feat.cols.size());
    f.feat.names.push_back(name);
    f.feat.kinds.push_back(t.schema()[c].kind);
    f.feat.cols.push_back(t.column(c));
  };
  for (const auto& n : s.w) add_feature(n, false);
  for (const auto& n : s.z) add_feature(n, true);

  // Logistic design rows: x, then each feature (categorical one-hot minus
  // baseline level).
  f.logit_rows.assign(f.rows, {});
  for (std::size_t r = 0; r < f.rows; ++r) f.logit_rows[r].push_back(f.x[r]);
  for (std::size_t c = 1; c < f.feat.cols.size(); ++c) {
    const auto& col = f.feat.cols[c];
    if (f.feat.kinds[c] == ColumnKind::categorical) {
      const std::size_t levels = t.level_count(t.column_index(f.feat.names[c]));
      for (std::size_t r = 0; r < f.rows; ++r) {
        const auto code = static_cast<std::size_t>(std::llround(col[r]));
        for (std::size_t l = 1; l < levels; ++l) {
          f.logit_rows[r].push_back(code == l ? 1.0 : 0.0);
        }
      }
    } else {
      for (std::size_t r = 0; r < f.rows; ++r) f.logit_rows[r].push_back(col[r]);
    }
  }
  return f;
}

// Composite confounder stratum: continuous columns quantile-binned, discrete
// columns by level code. An empty Z set yields the single stratum 0.
inline std::pair<std::vector<std::size_t>, std::size_t> strata_of(const Frame& f,
                                                                  std::size_t z_bins) {
  std::vector<std::size_t> id(f.rows, 0);
  std::size_t dims = 1;
  for (std::size_t zc : f.z_cols) {
    const auto& col = f.feat.cols[zc];
    std::vector<double> edges;
    std::size_t card;
    if (f.feat.kinds[zc] == ColumnKind::continuous) {
      std::vector<double> sorted = col;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t k = 1; k < z_bins; ++k) {
        edges.push_back(sorted[sorted.size() * k / z_bins]);
      }
      edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
      card = edges.size() + 1;
    } else {
      double mx = 0.0;
      for (double v : col) mx = std::max(mx, v);
      card = static_cast<std::size_t>(std::llround(mx)) + 1;
    }
    for (std::size_t r = 0; r < f.rows; ++r) {
      std::size_t b;
      if (edges.empty() && f.feat.kinds[zc] != ColumnKind::continuous) {
        b = static_cast<std::size_t>(std::llround(col[r]));
      } else {
        b = 0;
        for (double e : edges) {
          if (col[r] > e) ++b;
        }
      }
      id[r] = id[r] * card + b;
    }
    dims *= card;
  }
  return {id, dims};
}

struct MuValues {
  std::vector<double> mu0, mu1;  // outcome model at x := x0 / x1, per row
  double accuracy = 0.0;
  double deviance = 0.0;
};

inline std::vector<std::size_t> fold_assignment(const Frame& f, std::size_t folds,
                                                std::uint64_t seed) {
  std::vector<std::size_t> fold(f.rows, 0);
  if (folds <= 1) return fold;
  // Stratified by (x, y) cell so every training part sees both classes. Each
  // cell gets its own stream keyed by the raw code, which keeps assignments
  // stable when x0/x1 are swapped.
  for (int cell = 0; cell < 4; ++cell) {
    std::vector<std::size_t> idx;
    for (std::size_t r = 0; r < f.rows; ++r) {
      if (f.x_code[r] * 2 + f.y[r] == cell) idx.push_back(r);
    }
    Rng rng(mix_seed(seed, 0xCE11ULL, static_cast<std::uint64_t>(cell)));
    rng.shuffle(idx);
    for (std::size_t k = 0; k < idx.size(); ++k) fold[idx[k]] = k % folds;
  }
  return fold;
}

inline MuValues fit_mu(const Frame& f, NuisanceModel model, std::size_t folds,
                       std::uint64_t fold_seed, const ForestConfig& fcfg) {
  MuValues out;
  out.mu0.assign(f.rows, 0.0);
  out.mu1.assign(f.rows, 0.0);
  const auto fold = fold_assignment(f, folds, fold_seed);
  const std::size_t nf = folds <= 1 ? 1 : folds;
  for (std::size_t k = 0; k < nf; ++k) {
    std::vector<std::size_t> train, test;
    for (std::size_t r = 0; r < f.rows; ++r) {
      if (nf == 1 || fold[r] != k) train.push_back(r);
      if (nf == 1 || fold[r] == k) test.push_back(r);
    }
    if (train.empty()) throw NuisanceFitError("empty training fold");
    if (model == NuisanceModel::logistic) {
      std::vector<std::vector<double>> xr;
      std::vector<int> yr;
      xr.reserve(train.size());
      for (std::size_t r : train) {
        xr.push_back(f.logit_rows[r]);
        yr.push_back(f.y[r]);
      }
      const LogisticModel lm = fit_logistic(xr, yr);
      for (std::size_t r : test) {
        double z = lm.beta[0];
        const auto& row = f.logit_rows[r];
        for (std::size_t j = 0; j < row.size(); ++j) z += lm.beta[j + 1] * row[j];
        const double base = z - lm.beta[1] * row[0];
        out.mu0[r] = sigmoid(base);
        out.mu1[r] = sigmoid(base + lm.beta[1]);
      }
    } else {
      FeatureMatrix fm;
      fm.names = f.feat.names;
      fm.kinds = f.feat.kinds;
      fm.cols.resize(f.feat.cols.size());
      std::vector<int> yr;
      for (std::size_t r : train) yr.push_back(f.y[r]);
      for (std::size_t c = 0; c < f.feat.cols.size(); ++c) {
        fm.cols[c].reserve(train.size());
        for (std::size_t r : train) fm.cols[c].push_back(f.feat.cols[c][r]);
      }
      ForestConfig fc = fcfg;
      fc.seed = mix_seed(fcfg.seed, fold_seed, k);
      const ForestModel rf = ForestModel::train(fm, yr, fc);
      std::vector<double> row(f.feat.cols.size());
      for (std::size_t r : test) {
        for (std::size_t c = 0; c < f.feat.cols.size(); ++c) row[c] = f.feat.cols[c][r];
        row[0] = 0.0;
        out.mu0[r] = rf.predict_p1(row);
        row[0] = 1.0;
        out.mu1[r] = rf.predict_p1(row);
      }
    }
  }
  std::size_t hits = 0;
  for (std::size_t r = 0; r < f.rows; ++r) {
    const double mu = f.x[r] ? out.mu1[r] : out.mu0[r];
    if ((mu > 0.5 ? 1 : 0) == f.y[r]) ++hits;
    const double p = std::min(std::max(mu, 1e-12), 1.0 - 1e-12);
    out.deviance -= 2.0 * (f.y[r] ? std::log(p) : std::log(1.0 - p));
  }
  out.accuracy = f.rows ? static_cast<double>(hits) / static_cast<double>(f.rows) : 0.0;
  return out;
}

// The shared building blocks of all four effects on one sample:
//   p0, p1           empirical outcome rates per group
//   a10, a00         outcome model at x1/x0 averaged over x0 rows (natural W)
//   n110, n010, n001 nested means with W resampled from the opposite group
//                    within the confounder stratum
struct Bundle {
  double p0 = 0.0, p1 = 0.0;
  double a10 = 0.0, a00 = 0.0;
  double n110 = 0.0, n010 = 0.0, n001 = 0.0;
  std::size_t empty_strata = 0;
  double accuracy = 0.0, deviance = 0.0;

  double tv() const { return p1 - p0; }
  double de() const { return a10 - a00; }
  double ie() const { return a10 - n110; }            // x1 -> x0, reported
  double ie_reversed() const { return n010 - a00; }   // x0 -> x1
  double se() const { return n110 - p1; }             // (x1, x0), reported
  double se_reversed() const { return n001 - p0; }    // (x0, x1)
  double residual() const { return tv() - (de() - ie() - se()); }
};

inline Bundle compute_bundle(const Frame& f, NuisanceModel model,
                             const EstimatorConfig& cfg, std::uint64_t fold_seed) {
  Bundle b;
  const MuValues mu = fit_mu(f, model, cfg.cross_fit_folds, fold_seed, cfg.forest);
  b.accuracy = mu.accuracy;
  b.deviance = mu.deviance;

  const auto [stratum, n_strata] = strata_of(f, cfg.z_bins);
  // Per (stratum, group) pools of outcome-model values.
  std::vector<double> s_mu0(n_strata * 2, 0.0), s_mu1(n_strata * 2, 0.0);
  std::vector<std::size_t> s_cnt(n_strata * 2, 0);
  double g_mu0[2] = {0, 0}, g_mu1[2] = {0, 0};
  std::size_t g_cnt[2] = {0, 0};
  std::size_t n0 = 0, n1 = 0, y0 = 0, y1 = 0;
  for (std::size_t r = 0; r < f.rows; ++r) {
    const int g = f.x[r];
    const std::size_t key = stratum[r] * 2 + static_cast<std::size_t>(g);
    s_mu0[key] += mu.mu0[r];
    s_mu1[key] += mu.mu1[r];
    ++s_cnt[key];
    g_mu0[g] += mu.mu0[r];
    g_mu1[g] += mu.mu1[r];
    ++g_cnt[g];
    if (g) {
      ++n1;
      y1 += static_cast<std::size_t>(f.y[r]);
    } else {
      ++n0;
      y0 += static_cast<std::size_t>(f.y[r]);
    }
  }
  if (n0 == 0 || n1 == 0) throw DegenerateGroupError("a protected-attribute group is empty");
  b.p0 = static_cast<double>(y0) / static_cast<double>(n0);
  b.p1 = static_cast<double>(y1) / static_cast<double>(n1);

  // pool(avg of muX over rows of `group` in stratum s), global fallback when
  // the stratum has no rows of that group.
  auto pool_avg = [&](std::size_t s, int group, bool use_mu1) -> double {
    const std::size_t key = s * 2 + static_cast<std::size_t>(group);
    if (s_cnt[key] > 0) {
      return (use_mu1 ? s_mu1[key] : s_mu0[key]) / static_cast<double>(s_cnt[key]);
    }
    ++b.empty_strata;
    return (use_mu1 ? g_mu1[group] : g_mu0[group]) / static_cast<double>(g_cnt[group]);
  };

  double a10 = 0.0, a00 = 0.0, n110 = 0.0, n010 = 0.0, n001 = 0.0;
  for (std::size_t r = 0; r < f.rows; ++r) {
    if (f.x[r] == 0) {
      a10 += mu.mu1[r];
      a00 += mu.mu0[r];
      n110 += pool_avg(stratum[r], 1, true);
      n010 += pool_avg(stratum[r], 1, false);
    } else {
      n001 += pool_avg(stratum[r], 0, false);
    }
  }
  b.a10 = a10 / static_cast<double>(n0);
  b.a00 = a00 / static_cast<double>(n0);
  b.n110 = n110 / static_cast<double>(n0);
  b.n010 = n010 / static_cast<double>(n0);
  b.n001 = n001 / static_cast<double>(n1);
  return b;
}

struct BundleSeries {
  Bundle point;
  std::vector<Bundle> reps;
  NuisanceModel resolved = NuisanceModel::logistic;

  double sd_of(double (Bundle::*fn)() const) const {
    const std::size_t n = reps.size();
    if (n < 2) return 0.0;
    double mean = 0.0;
    for (const auto& b : reps) mean += (b.*fn)();
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& b : reps) {
      const double d = (b.*fn)() - mean;
      ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(n - 1));
  }
};

inline NuisanceModel resolve_nuisance(NuisanceModel m, std::size_t n) {
  if (m != NuisanceModel::automatic) return m;
  return n < 1000 ? NuisanceModel::logistic : NuisanceModel::random_forest;
}

inline BundleSeries run_bundles(const Frame& f, const EstimatorConfig& cfg,
                                bool with_bootstrap) {
  cfg.validate();
  std::size_t n0 = 0, n1 = 0;
  for (int v : f.x) v ? ++n1 : ++n0;
  if (n0 < kMinGroupRows || n1 < kMinGroupRows) {
    throw DegenerateGroupError("each protected-attribute group needs at least " +
                               std::to_string(kMinGroupRows) + " rows");
  }
  BundleSeries out;
  out.resolved = resolve_nuisance(cfg.nuisance_model, f.rows);
  out.point = compute_bundle(f, out.resolved, cfg, mix_seed(cfg.seed, 0xF01DULL));
  if (!with_bootstrap) return out;
  for (std::size_t rep = 0; rep < cfg.bootstrap_reps; ++rep) {
    std::vector<std::size_t> idx(f.rows);
    bool ok = false;
    for (std::size_t att = 0; att <= kBootstrapRetries; ++att) {
      Rng rng(mix_seed(cfg.seed, 0xB007ULL + att, rep));
      std::size_t c0 = 0, c1 = 0;
      for (std::size_t i = 0; i < f.rows; ++i) {
        idx[i] = rng.index(f.rows);
        f.x[idx[i]] ? ++c1 : ++c0;
      }
      if (c0 > 0 && c1 > 0) {
        ok = true;
        break;
      }
    }
    if (!ok) throw DegenerateGroupError("bootstrap replicate kept losing an X level");
    const Frame rf = f.gather(idx);
    out.reps.push_back(
        compute_bundle(rf, out.resolved, cfg, mix_seed(cfg.seed, 0xF01DULL, rep + 1)));
  }
  return out;
}

inline nlohmann::json config_echo_json(const EstimatorConfig& cfg, NuisanceModel resolved,
                                       const SfmSpec& s) {
  return nlohmann::json{{"nuisance_model", to_string(resolved)},
                        {"bootstrap_reps", cfg.bootstrap_reps},
                        {"cross_fit_folds", cfg.cross_fit_folds},
                        {"z_bins", cfg.z_bins},
                        {"seed", cfg.seed},
                        {"x0", s.x0},
                        {"x1", s.x1},
                        {"y_positive", s.y_positive}};
}

inline FairnessDecomposition decomposition_from(const BundleSeries& bs,
                                                const EstimatorConfig& cfg,
                                                const SfmSpec& s) {
  FairnessDecomposition d;
  const Bundle& p = bs.point;
  d.tv = {p.tv(), bs.sd_of(&Bundle::tv)};
  d.de = {p.de(), bs.sd_of(&Bundle::de)};
  d.ie = {p.ie(), bs.sd_of(&Bundle::ie)};
  d.ie_reversed = {p.ie_reversed(), bs.sd_of(&Bundle::ie_reversed)};
  d.se = {p.se(), bs.sd_of(&Bundle::se)};
  d.se_reversed = {p.se_reversed(), bs.sd_of(&Bundle::se_reversed)};
  d.residual = p.residual();
  for (const Bundle& r : bs.reps) {
    d.replicate_residual_max = std::max(d.replicate_residual_max, std::fabs(r.residual()));
  }
  d.p_y_x0 = p.p0;
  d.p_y_x1 = p.p1;
  d.x0_level = s.x0;
  d.x1_level = s.x1;
  d.nuisance.model = to_string(bs.resolved);
  d.nuisance.accuracy = p.accuracy;
  d.nuisance.deviance = p.deviance;
  d.nuisance.empty_strata = p.empty_strata;
  d.nuisance.positivity_violation = p.empty_strata > 0;
  d.config_echo = config_echo_json(cfg, bs.resolved, s);
  return d;
}

}  // namespace detail

// Full decomposition: all effects on shared nuisances and shared bootstrap
// replicates, so tv - (de - ie - se) is zero up to nuisance calibration.
inline FairnessDecomposition decompose(const Table& t, const SfmSpec& s,
                                       const EstimatorConfig& cfg = {}) {
  const detail::Frame f = detail::build_frame(t, s);
  const auto bs = detail::run_bundles(f, cfg, true);
  return detail::decomposition_from(bs, cfg, s);
}

// Point estimates only (no bootstrap); used where standard errors are not
// needed and nuisance refits would dominate runtime.
inline FairnessDecomposition decompose_point(const Table& t, const SfmSpec& s,
                                             const EstimatorConfig& cfg = {}) {
  const detail::Frame f = detail::build_frame(t, s);
  const auto bs = detail::run_bundles(f, cfg, false);
  return detail::decomposition_from(bs, cfg, s);
}

inline EffectStat estimate_tv(const Table& t, const SfmSpec& s,
                              const EstimatorConfig& cfg = {}) {
  return decompose(t, s, cfg).tv;
}

inline EffectStat estimate_de(const Table& t, const SfmSpec& s,
                              const EstimatorConfig& cfg = {}) {
  return decompose(t, s, cfg).de;
}

// direction = (from, to) as level labels; (x1, x0) is the reported direction.
inline EffectStat estimate_ie(const Table& t, const SfmSpec& s,
                              std::pair<std::string, std::string> direction,
                              const EstimatorConfig& cfg = {}) {
  const FairnessDecomposition d = decompose(t, s, cfg);
  if (direction.first == s.x1 && direction.second == s.x0) return d.ie;
  if (direction.first == s.x0 && direction.second == s.x1) return d.ie_reversed;
  throw ConfigError("ie direction must pair the configured x0 and x1 levels");
}

inline EffectStat estimate_se(const Table& t, const SfmSpec& s,
                              std::pair<std::string, std::string> direction,
                              const EstimatorConfig& cfg = {}) {
  const FairnessDecomposition d = decompose(t, s, cfg);
  if (direction.first == s.x1 && direction.second == s.x0) return d.se;
  if (direction.first == s.x0 && direction.second == s.x1) return d.se_reversed;
  throw ConfigError("se direction must pair the configured x0 and x1 levels");
}

inline EffectStat estimate_se(const Table& t, const SfmSpec& s,
                              const EstimatorConfig& cfg = {}) {
  return estimate_se(t, s, {s.x1, s.x0}, cfg);
}

// Decomposition of model predictions: yhat (level codes of the outcome
// column) replaces Y, everything else unchanged.
inline FairnessDecomposition evaluate_predictions(const Table& t, const SfmSpec& s,
                                                  const std::vector<int>& yhat,
                                                  const EstimatorConfig& cfg,
                                                  bool with_bootstrap) {
  if (yhat.size() != t.row_count()) {
    throw LengthMismatchError("yhat has " + std::to_string(yhat.size()) +
                              " entries for " + std::to_string(t.row_count()) + " rows");
  }
  detail::Frame f = detail::build_frame(t, s);
  const std::size_t cy = t.column_index(s.y);
  const double y_pos = t.level_code(cy, s.y_positive);
  for (std::size_t r = 0; r < f.rows; ++r) {
    if (yhat[r] != 0 && yhat[r] != 1) {
      throw TypeMismatchError(r, "yhat", std::to_string(yhat[r]));
    }
    f.y[r] = static_cast<double>(yhat[r]) == y_pos ? 1 : 0;
  }
  const auto bs = detail::run_bundles(f, cfg, with_bootstrap);
  return detail::decomposition_from(bs, cfg, s);
}

inline FairnessDecomposition evaluate_predictions(const Table& t, const SfmSpec& s,
                                                  const std::vector<int>& yhat,
                                                  const EstimatorConfig& cfg = {}) {
  return evaluate_predictions(t, s, yhat, cfg, true);
}

inline FairnessDecomposition evaluate_predictions_point(const Table& t, const SfmSpec& s,
                                                        const std::vector<int>& yhat,
                                                        const EstimatorConfig& cfg = {}) {
  return evaluate_predictions(t, s, yhat, cfg, false);
}

}  // namespace fairsyn
