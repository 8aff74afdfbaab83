#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "common/fixtures.hpp"
#include "fairsyn/metrics.hpp"
#include "fairsyn/predictors.hpp"
#include "fairsyn/scm.hpp"

using namespace fairsyn;

namespace {

ForestConfig small_forest(std::uint64_t seed) {
  ForestConfig cfg;
  cfg.n_trees = 40;
  cfg.seed = seed;
  return cfg;
}

double label_gap(const std::vector<int>& yhat, const Table& t, const SfmSpec& s) {
  const std::size_t cx = t.column_index(s.x);
  const double x1 = t.level_code(cx, s.x1);
  double n0 = 0, n1 = 0, p0 = 0, p1 = 0;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    if (t.cell(r, cx) == x1) {
      ++n1;
      p1 += yhat[r];
    } else {
      ++n0;
      p0 += yhat[r];
    }
  }
  return p1 / n1 - p0 / n0;
}

}  // namespace

TEST_CASE("fair predictor ignores the protected attribute", "[predictors][property]") {
  const DiscreteScm scm = biased_benchmark_scm(1.0);
  const Table t = fixtures::real_sample(scm, 3000, 15);
  const SfmSpec& s = scm.roles();
  const AdaptationPlan plan = fit_adaptation(t, s, 21);
  const auto [fair, adapted] = train_fair(t, s, plan, small_forest(4));

  for (const auto& name : fair.feature_names()) CHECK(name != s.x);

  // Flipping X leaves the score unchanged because X is not a feature.
  const std::vector<double> base = predict_p1(fair, adapted);
  Table adapted_flipped = adapted;
  auto& axcol = adapted_flipped.column(adapted_flipped.column_index(s.x));
  for (double& v : axcol) v = 1.0 - v;
  const std::vector<double> alt = predict_p1(fair, adapted_flipped);
  REQUIRE(base.size() == alt.size());
  for (std::size_t r = 0; r < base.size(); ++r) REQUIRE(base[r] == alt[r]);
}

TEST_CASE("baseline predictor inherits the bias the fair one sheds", "[predictors]") {
  for (double strength : {0.5, 1.0}) {
    INFO("strength " << strength);
    const DiscreteScm scm = biased_benchmark_scm(strength);
    const Table train = fixtures::real_sample(scm, 4000, 100 + static_cast<int>(strength * 10));
    const Table eval = fixtures::real_sample(scm, 4000, 200 + static_cast<int>(strength * 10));
    const SfmSpec& s = scm.roles();

    const ForestModel baseline = train_baseline(train, s, small_forest(1));
    const AdaptationPlan plan = fit_adaptation(train, s, 31);
    const auto [fair, adapted] = train_fair(train, s, plan, small_forest(2));

    const double gap_base = std::fabs(label_gap(predict(baseline, eval), eval, s));
    const double gap_fair = std::fabs(label_gap(predict(fair, eval, &plan), eval, s));
    CHECK(gap_fair < gap_base);
    CHECK(gap_base > 0.15 * strength);
    CHECK(gap_fair < 0.10);
  }
}

TEST_CASE("causal decomposition of scores mirrors the demographic gap", "[predictors]") {
  const DiscreteScm scm = biased_benchmark_scm(1.0);
  const Table t = fixtures::real_sample(scm, 5000, 77);
  const SfmSpec& s = scm.roles();
  const ForestModel baseline = train_baseline(t, s, small_forest(7));
  const AdaptationPlan plan = fit_adaptation(t, s, 8);
  const auto [fair, adapted] = train_fair(t, s, plan, small_forest(9));

  EstimatorConfig cfg;
  cfg.nuisance_model = NuisanceModel::logistic;
  cfg.seed = 3;
  const FairnessDecomposition d_base =
      evaluate_predictions_point(t, s, predict(baseline, t), cfg);
  const FairnessDecomposition d_fair =
      evaluate_predictions_point(t, s, predict(fair, t, &plan), cfg);
  CHECK(std::fabs(d_fair.de.est) < std::fabs(d_base.de.est));
  CHECK(std::fabs(d_fair.tv.est) < std::fabs(d_base.tv.est));
  CHECK(d_base.de.est > 0.15);
}

TEST_CASE("fair model measured in the adapted world has near-zero de and ie",
          "[predictors]") {
  const DiscreteScm scm = biased_benchmark_scm(1.0);
  const Table t = fixtures::real_sample(scm, 8000, 91);
  const SfmSpec& s = scm.roles();

  PredictorModel baseline;
  baseline.kind = "baseline";
  baseline.spec = s;
  baseline.forest = train_baseline(t, s, small_forest(17));

  PredictorModel fair;
  fair.kind = "fair";
  fair.spec = s;
  fair.plan = fit_adaptation(t, s, 18);
  fair.forest = train_fair(t, s, fair.plan, small_forest(19)).first;

  EstimatorConfig cfg;
  cfg.nuisance_model = NuisanceModel::logistic;
  cfg.cross_fit_folds = 1;
  cfg.seed = 9;
  const FairnessDecomposition d_base = evaluate_model(baseline, t, cfg, false);
  const FairnessDecomposition d_fair = evaluate_model(fair, t, cfg, false);
  CHECK(std::fabs(d_base.de.est) > 0.15);
  CHECK(std::fabs(d_fair.de.est) < 0.03);
  CHECK(std::fabs(d_fair.ie.est) < 0.05);
}

TEST_CASE("fairness costs little accuracy when the signal is not the bias", "[predictors]") {
  const DiscreteScm scm = biased_benchmark_scm(0.0);
  const Table train = fixtures::real_sample(scm, 4000, 5);
  const Table eval = fixtures::real_sample(scm, 4000, 6);
  const SfmSpec& s = scm.roles();

  const ForestModel baseline = train_baseline(train, s, small_forest(11));
  const AdaptationPlan plan = fit_adaptation(train, s, 12);
  const auto [fair, adapted] = train_fair(train, s, plan, small_forest(13));

  auto accuracy = [&](const std::vector<int>& yhat) {
    const auto& y = eval.column(eval.column_index(s.y));
    double hits = 0;
    for (std::size_t r = 0; r < eval.row_count(); ++r) {
      hits += yhat[r] == static_cast<int>(y[r]);
    }
    return hits / static_cast<double>(eval.row_count());
  };
  const double acc_base = accuracy(predict(baseline, eval));
  const double acc_fair = accuracy(predict(fair, eval, &plan));
  CHECK(std::fabs(acc_base - acc_fair) < 0.03);
}

TEST_CASE("predictor bundles survive a JSON round trip", "[predictors]") {
  const DiscreteScm scm = biased_benchmark_scm(1.0);
  const Table t = fixtures::real_sample(scm, 1500, 9);
  const SfmSpec& s = scm.roles();

  PredictorModel base;
  base.kind = "baseline";
  base.spec = s;
  base.forest = train_baseline(t, s, small_forest(41));
  const PredictorModel base_back = PredictorModel::from_json(base.to_json());
  CHECK(base_back.to_json() == base.to_json());
  CHECK(base_back.predict(t) == base.predict(t));

  PredictorModel fair;
  fair.kind = "fair";
  fair.spec = s;
  fair.plan = fit_adaptation(t, s, 42);
  fair.forest = train_fair(t, s, fair.plan, small_forest(43)).first;
  const PredictorModel fair_back = PredictorModel::from_json(fair.to_json());
  CHECK(fair_back.to_json() == fair.to_json());
  CHECK(fair_back.predict(t) == fair.predict(t));
}

TEST_CASE("training validates labels and roles", "[predictors]") {
  const DiscreteScm scm = fixtures::hf_like_scm();
  Table t = fixtures::real_sample(scm, 200, 3);
  SfmSpec s = scm.roles();

  SfmSpec overlap = s;
  overlap.z.push_back(s.y);
  CHECK_THROWS_AS(train_baseline(t, overlap, small_forest(1)), ConfigError);

  SfmSpec bare = s;
  bare.w.clear();
  bare.z.clear();
  const AdaptationPlan plan = fit_adaptation(t, s, 1);
  CHECK_THROWS_AS(train_fair(t, bare, plan, small_forest(1)), ConfigError);

  auto& ycol = t.column(t.column_index(s.y));
  std::fill(ycol.begin(), ycol.end(), 1.0);
  CHECK_THROWS_AS(train_baseline(t, s, small_forest(1)), SingleClassLabelError);
}
