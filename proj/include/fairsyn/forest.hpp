#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairsyn/error.hpp"
#include "fairsyn/rng.hpp"
#include "fairsyn/schema.hpp"

namespace fairsyn {

struct ForestConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 8;
  std::size_t min_leaf = 5;
  std::uint64_t seed = 0;
  // Features tried per node; 0 means round(sqrt(feature count)).
  std::size_t feature_subsample = 0;
};

// Feature matrix view: column-major doubles plus per-column kinds so split
// search can treat categorical codes as level sets instead of ordered values.
struct FeatureMatrix {
  std::vector<std::string> names;
  std::vector<ColumnKind> kinds;
  std::vector<std::vector<double>> cols;

  std::size_t rows() const { return cols.empty() ? 0 : cols[0].size(); }
  std::size_t features() const { return cols.size(); }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::vector<int> left_levels;  // categorical splits: codes routed left
  int left = -1;
  int right = -1;
  double p1 = 0.0;
  std::uint32_t count = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(const std::vector<double>& row) const {
    int at = 0;
    while (nodes[at].feature >= 0) {
      const TreeNode& nd = nodes[at];
      const double v = row[static_cast<std::size_t>(nd.feature)];
      bool go_left;
      if (nd.left_levels.empty()) {
        go_left = v <= nd.threshold;
      } else {
        const int code = static_cast<int>(std::llround(v));
        go_left = std::find(nd.left_levels.begin(), nd.left_levels.end(), code) !=
                  nd.left_levels.end();
      }
      at = go_left ? nd.left : nd.right;
    }
    return nodes[at].p1;
  }
};

// Bagged Gini-split classification forest for a binary target. Training is
// deterministic given the seed: per-tree generators are derived by index and
// consumed in depth-first build order.
class ForestModel {
 public:
  ForestModel() = default;

  static ForestModel train(const FeatureMatrix& x, const std::vector<int>& y,
                           const ForestConfig& cfg) {
    const std::size_t n = x.rows();
    if (n == 0 || y.size() != n) {
      throw LengthMismatchError("feature matrix and labels disagree");
    }
    ForestModel m;
    m.cfg_ = cfg;
    m.names_ = x.names;
    m.kinds_ = x.kinds;
    const std::size_t d = x.features();
    const std::size_t mtry =
        cfg.feature_subsample > 0
            ? std::min(cfg.feature_subsample, d)
            : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(std::sqrt(
                                           static_cast<double>(d)))));

    std::vector<double> oob_sum(n, 0.0);
    std::vector<std::uint32_t> oob_n(n, 0);
    std::vector<char> in_bag(n);
    for (std::size_t t = 0; t < cfg.n_trees; ++t) {
      Rng rng(mix_seed(cfg.seed, 0x7f03e570ULL + t));
      std::vector<std::size_t> bag(n);
      std::fill(in_bag.begin(), in_bag.end(), 0);
      for (std::size_t i = 0; i < n; ++i) {
        bag[i] = rng.index(n);
        in_bag[bag[i]] = 1;
      }
      Tree tree;
      Builder b{x, y, cfg, mtry, rng, tree};
      b.build(bag, 0);
      for (std::size_t i = 0; i < n; ++i) {
        if (!in_bag[i]) {
          std::vector<double> row(d);
          for (std::size_t j = 0; j < d; ++j) row[j] = x.cols[j][i];
          oob_sum[i] += tree.predict(row);
          ++oob_n[i];
        }
      }
      m.trees_.push_back(std::move(tree));
    }
    std::size_t hits = 0, counted = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (oob_n[i] == 0) continue;
      ++counted;
      const int label = oob_sum[i] / oob_n[i] > 0.5 ? 1 : 0;
      if (label == y[i]) ++hits;
    }
    m.oob_accuracy_ = counted ? static_cast<double>(hits) / counted : 0.0;
    return m;
  }

  double predict_p1(const std::vector<double>& row) const {
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict(row);
    return trees_.empty() ? 0.0 : s / static_cast<double>(trees_.size());
  }

  // Thresholded label; the 0.5 tie resolves to class 0.
  int predict_label(const std::vector<double>& row) const {
    return predict_p1(row) > 0.5 ? 1 : 0;
  }

  double oob_accuracy() const { return oob_accuracy_; }
  const ForestConfig& config() const { return cfg_; }
  const std::vector<std::string>& feature_names() const { return names_; }
  std::size_t tree_count() const { return trees_.size(); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config"] = {{"n_trees", cfg_.n_trees},
                   {"max_depth", cfg_.max_depth},
                   {"min_leaf", cfg_.min_leaf},
                   {"seed", cfg_.seed},
                   {"feature_subsample", cfg_.feature_subsample}};
    j["features"] = nlohmann::json::array();
    for (std::size_t i = 0; i < names_.size(); ++i) {
      j["features"].push_back({{"name", names_[i]}, {"kind", to_string(kinds_[i])}});
    }
    j["oob_accuracy"] = oob_accuracy_;
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) {
      nlohmann::json nodes = nlohmann::json::array();
      for (const auto& nd : t.nodes) {
        nlohmann::json e = {{"f", nd.feature}, {"p1", nd.p1}, {"n", nd.count}};
        if (nd.feature >= 0) {
          e["l"] = nd.left;
          e["r"] = nd.right;
          if (nd.left_levels.empty()) e["t"] = nd.threshold;
          else e["levels"] = nd.left_levels;
        }
        nodes.push_back(e);
      }
      trees.push_back({{"nodes", nodes}});
    }
    j["trees"] = trees;
    return j;
  }

  static ForestModel from_json(const nlohmann::json& j) {
    ForestModel m;
    const auto& c = j.at("config");
    m.cfg_.n_trees = c.at("n_trees").get<std::size_t>();
    m.cfg_.max_depth = c.at("max_depth").get<std::size_t>();
    m.cfg_.min_leaf = c.at("min_leaf").get<std::size_t>();
    m.cfg_.seed = c.at("seed").get<std::uint64_t>();
    m.cfg_.feature_subsample = c.at("feature_subsample").get<std::size_t>();
    for (const auto& f : j.at("features")) {
      m.names_.push_back(f.at("name").get<std::string>());
      m.kinds_.push_back(column_kind_from_string(f.at("kind").get<std::string>()));
    }
    m.oob_accuracy_ = j.at("oob_accuracy").get<double>();
    for (const auto& tj : j.at("trees")) {
      Tree t;
      for (const auto& e : tj.at("nodes")) {
        TreeNode nd;
        nd.feature = e.at("f").get<int>();
        nd.p1 = e.at("p1").get<double>();
        nd.count = e.at("n").get<std::uint32_t>();
        if (nd.feature >= 0) {
          nd.left = e.at("l").get<int>();
          nd.right = e.at("r").get<int>();
          if (e.contains("levels")) nd.left_levels = e.at("levels").get<std::vector<int>>();
          else nd.threshold = e.at("t").get<double>();
        }
        t.nodes.push_back(nd);
      }
      m.trees_.push_back(std::move(t));
    }
    return m;
  }

 private:
  struct Builder {
    const FeatureMatrix& x;
    const std::vector<int>& y;
    const ForestConfig& cfg;
    std::size_t mtry;
    Rng& rng;
    Tree& tree;

    static double gini(double pos, double n) {
      if (n <= 0.0) return 0.0;
      const double p = pos / n;
      return 2.0 * p * (1.0 - p);
    }

    int build(std::vector<std::size_t>& rows, std::size_t depth) {
      const std::size_t n = rows.size();
      double pos = 0.0;
      for (std::size_t i : rows) pos += y[i];
      const int node_id = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back(TreeNode{});
      tree.nodes[node_id].p1 = n ? pos / static_cast<double>(n) : 0.0;
      tree.nodes[node_id].count = static_cast<std::uint32_t>(n);
      if (depth >= cfg.max_depth || n < 2 * cfg.min_leaf || pos == 0.0 ||
          pos == static_cast<double>(n)) {
        return node_id;
      }

      // Feature subset: partial Fisher-Yates over the feature index list.
      std::vector<std::size_t> feats(x.features());
      std::iota(feats.begin(), feats.end(), 0);
      for (std::size_t i = 0; i < mtry && i + 1 < feats.size(); ++i) {
        std::swap(feats[i], feats[i + rng.index(feats.size() - i)]);
      }
      feats.resize(std::min(mtry, feats.size()));

      const double parent_score = gini(pos, static_cast<double>(n)) * n;
      double best_gain = 1e-12;
      std::size_t best_feat = 0;
      double best_thr = 0.0;
      std::vector<int> best_levels;

      for (std::size_t f : feats) {
        if (x.kinds[f] == ColumnKind::continuous) {
          std::vector<std::size_t> order = rows;
          std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return x.cols[f][a] < x.cols[f][b];
          });
          double lpos = 0.0;
          for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            lpos += y[order[i]];
            const double v = x.cols[f][order[i]];
            const double vn = x.cols[f][order[i + 1]];
            if (v == vn) continue;
            const double ln = static_cast<double>(i + 1);
            const double rn = static_cast<double>(n) - ln;
            if (ln < cfg.min_leaf || rn < cfg.min_leaf) continue;
            const double gain =
                parent_score - gini(lpos, ln) * ln - gini(pos - lpos, rn) * rn;
            if (gain > best_gain) {
              best_gain = gain;
              best_feat = f;
              best_thr = 0.5 * (v + vn);
              best_levels.clear();
            }
          }
        } else {
          // Order levels by positive rate, then scan prefixes; for a binary
          // target this covers the optimal level partition.
          int max_code = 0;
          for (std::size_t i : rows) {
            max_code = std::max(max_code, static_cast<int>(std::llround(x.cols[f][i])));
          }
          std::vector<double> cnt(static_cast<std::size_t>(max_code) + 1, 0.0);
          std::vector<double> cpos(cnt.size(), 0.0);
          for (std::size_t i : rows) {
            const auto code = static_cast<std::size_t>(std::llround(x.cols[f][i]));
            cnt[code] += 1.0;
            cpos[code] += y[i];
          }
          std::vector<std::size_t> lvl;
          for (std::size_t l = 0; l < cnt.size(); ++l) {
            if (cnt[l] > 0.0) lvl.push_back(l);
          }
          if (lvl.size() < 2) continue;
          std::sort(lvl.begin(), lvl.end(), [&](std::size_t a, std::size_t b) {
            const double ra = cpos[a] / cnt[a], rb = cpos[b] / cnt[b];
            return ra != rb ? ra < rb : a < b;
          });
          double ln = 0.0, lpos = 0.0;
          for (std::size_t i = 0; i + 1 < lvl.size(); ++i) {
            ln += cnt[lvl[i]];
            lpos += cpos[lvl[i]];
            const double rn = static_cast<double>(n) - ln;
            if (ln < cfg.min_leaf || rn < cfg.min_leaf) continue;
            const double gain =
                parent_score - gini(lpos, ln) * ln - gini(pos - lpos, rn) * rn;
            if (gain > best_gain) {
              best_gain = gain;
              best_feat = f;
              best_thr = 0.0;
              best_levels.assign(lvl.begin(), lvl.begin() + static_cast<long>(i + 1));
              std::sort(best_levels.begin(), best_levels.end());
            }
          }
        }
      }
      if (best_gain <= 1e-12) return node_id;

      std::vector<std::size_t> left_rows, right_rows;
      for (std::size_t i : rows) {
        const double v = x.cols[best_feat][i];
        bool go_left;
        if (best_levels.empty()) {
          go_left = v <= best_thr;
        } else {
          const int code = static_cast<int>(std::llround(v));
          go_left = std::find(best_levels.begin(), best_levels.end(), code) !=
                    best_levels.end();
        }
        (go_left ? left_rows : right_rows).push_back(i);
      }
      rows.clear();
      rows.shrink_to_fit();
      tree.nodes[node_id].feature = static_cast<int>(best_feat);
      tree.nodes[node_id].threshold = best_thr;
      tree.nodes[node_id].left_levels.assign(best_levels.begin(), best_levels.end());
      const int l = build(left_rows, depth + 1);
      tree.nodes[node_id].left = l;
      const int r = build(right_rows, depth + 1);
      tree.nodes[node_id].right = r;
      return node_id;
    }
  };

  ForestConfig cfg_;
  std::vector<std::string> names_;
  std::vector<ColumnKind> kinds_;
  std::vector<Tree> trees_;
  double oob_accuracy_ = 0.0;
};

}  // namespace fairsyn
