#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairsyn/adaptation.hpp"
#include "fairsyn/error.hpp"
#include "fairsyn/forest.hpp"
#include "fairsyn/metrics.hpp"
#include "fairsyn/sfm.hpp"
#include "fairsyn/table.hpp"

namespace fairsyn {

namespace detail {

inline FeatureMatrix feature_matrix(const Table& t, const std::vector<std::string>& names) {
  FeatureMatrix fm;
  for (const auto& n : names) {
    const std::size_t c = t.column_index(n);
    fm.names.push_back(n);
    fm.kinds.push_back(t.schema()[c].kind);
    fm.cols.push_back(t.column(c));
  }
  return fm;
}

inline std::vector<int> outcome_codes(const Table& t, const SfmSpec& s) {
  const std::size_t cy = t.column_index(s.y);
  std::vector<int> y(t.row_count());
  bool seen[2] = {false, false};
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    const int v = static_cast<int>(std::llround(t.cell(r, cy)));
    if (v != 0 && v != 1) throw TypeMismatchError(r, s.y, std::to_string(v));
    y[r] = v;
    seen[v] = true;
  }
  if (!seen[0] || !seen[1]) {
    throw SingleClassLabelError("outcome column '" + s.y + "' has a single class");
  }
  return y;
}

inline void require_valid_roles(const Table& t, const SfmSpec& s) {
  for (const auto& v : validate_sfm(t, s)) {
    if (v.kind != ViolationKind::unassigned_column) {
      throw ConfigError(std::string(to_string(v.kind)) + ": " + v.message);
    }
  }
}

}  // namespace detail

// Unconstrained classifier: protected attribute, mediators and confounders
// all enter as features.
inline ForestModel train_baseline(const Table& t, const SfmSpec& s,
                                  const ForestConfig& cfg = {}) {
  detail::require_valid_roles(t, s);
  std::vector<std::string> features{s.x};
  features.insert(features.end(), s.w.begin(), s.w.end());
  features.insert(features.end(), s.z.begin(), s.z.end());
  const auto y = detail::outcome_codes(t, s);
  return ForestModel::train(detail::feature_matrix(t, features), y, cfg);
}

// Fair classifier: trains on counterfactually adapted rows, without the
// protected attribute. Returns the model and the adapted table for audit.
inline std::pair<ForestModel, Table> train_fair(const Table& t, const SfmSpec& s,
                                                const AdaptationPlan& plan,
                                                const ForestConfig& cfg = {}) {
  detail::require_valid_roles(t, s);
  Table adapted = apply_adaptation(plan, t, true);
  std::vector<std::string> features = s.w;
  features.insert(features.end(), s.z.begin(), s.z.end());
  if (features.empty()) {
    throw ConfigError("fair predictor needs at least one mediator or confounder");
  }
  const auto y = detail::outcome_codes(adapted, s);
  ForestModel m = ForestModel::train(detail::feature_matrix(adapted, features), y, cfg);
  return {std::move(m), std::move(adapted)};
}

// Predicted outcome level codes, one per row. A plan means the model was
// trained on adapted data, so features are adapted (outcome untouched)
// before prediction.
inline std::vector<int> predict(const ForestModel& m, const Table& t,
                                const AdaptationPlan* plan = nullptr) {
  const Table* src = &t;
  Table adapted;
  if (plan != nullptr) {
    adapted = apply_adaptation(*plan, t, false);
    src = &adapted;
  }
  const FeatureMatrix fm = detail::feature_matrix(*src, m.feature_names());
  std::vector<int> out(t.row_count());
  std::vector<double> row(fm.cols.size());
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    for (std::size_t c = 0; c < fm.cols.size(); ++c) row[c] = fm.cols[c][r];
    out[r] = m.predict_label(row);
  }
  return out;
}

inline std::vector<double> predict_p1(const ForestModel& m, const Table& t,
                                      const AdaptationPlan* plan = nullptr) {
  const Table* src = &t;
  Table adapted;
  if (plan != nullptr) {
    adapted = apply_adaptation(*plan, t, false);
    src = &adapted;
  }
  const FeatureMatrix fm = detail::feature_matrix(*src, m.feature_names());
  std::vector<double> out(t.row_count());
  std::vector<double> row(fm.cols.size());
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    for (std::size_t c = 0; c < fm.cols.size(); ++c) row[c] = fm.cols[c][r];
    out[r] = m.predict_p1(row);
  }
  return out;
}

// Serializable bundle of a trained predictor and, for the fair kind, its
// adaptation plan; the unit the pipeline writes under models/.
struct PredictorModel {
  std::string kind;  // "baseline" | "fair"
  SfmSpec spec;
  ForestModel forest;
  AdaptationPlan plan;  // fair only

  std::vector<int> predict(const Table& t) const {
    return fairsyn::predict(forest, t, kind == "fair" ? &plan : nullptr);
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", kind}, {"spec", spec.to_json()}, {"forest", forest.to_json()}};
    if (kind == "fair") j["plan"] = plan.to_json();
    return j;
  }

  static PredictorModel from_json(const nlohmann::json& j) {
    PredictorModel m;
    m.kind = j.at("kind").get<std::string>();
    m.spec = SfmSpec::from_json(j.at("spec"));
    m.forest = ForestModel::from_json(j.at("forest"));
    if (m.kind == "fair") m.plan = AdaptationPlan::from_json(j.at("plan"));
    return m;
  }
};

// Decomposition of a model's predictions on an evaluation table. The fair
// model lives in the adapted world: its predictions are functions of adapted
// covariates, and measuring them against the raw covariates would re-import
// the shift the adaptation removed, so both scoring and measurement use the
// adapted table.
inline FairnessDecomposition evaluate_model(const PredictorModel& m, const Table& t,
                                            const EstimatorConfig& cfg, bool with_bootstrap) {
  if (m.kind == "fair") {
    Table adapted = apply_adaptation(m.plan, t, false);
    return evaluate_predictions(adapted, m.spec, fairsyn::predict(m.forest, adapted), cfg,
                                with_bootstrap);
  }
  return evaluate_predictions(t, m.spec, m.predict(t), cfg, with_bootstrap);
}

}  // namespace fairsyn
