#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "common/fixtures.hpp"
#include "fairsyn/metrics.hpp"
#include "fairsyn/scm.hpp"

using namespace fairsyn;

namespace {

EstimatorConfig logistic_cfg(std::uint64_t seed, std::size_t reps = 16) {
  EstimatorConfig cfg;
  cfg.nuisance_model = NuisanceModel::logistic;
  cfg.bootstrap_reps = reps;
  cfg.seed = seed;
  return cfg;
}

std::vector<int> outcome_codes(const Table& t, const std::string& y) {
  const auto& col = t.column(t.column_index(y));
  std::vector<int> out(col.size());
  for (std::size_t r = 0; r < col.size(); ++r) out[r] = static_cast<int>(col[r]);
  return out;
}

}  // namespace

TEST_CASE("constant outcome yields a null decomposition", "[metrics]") {
  const DiscreteScm scm = fixtures::no_confounder_scm();
  Table t = fixtures::real_sample(scm, 400, 5);
  std::fill(t.column(t.column_index("Y")).begin(), t.column(t.column_index("Y")).end(), 0.0);

  const FairnessDecomposition d = decompose_point(t, scm.roles(), logistic_cfg(1));
  CHECK(d.p_y_x0 == 0.0);
  CHECK(d.p_y_x1 == 0.0);
  CHECK(d.tv.est == 0.0);
  CHECK(std::fabs(d.de.est) < 1e-3);
  CHECK(std::fabs(d.ie.est) < 1e-3);
  CHECK(std::fabs(d.se.est) < 1e-3);
  CHECK(d.nuisance.model == "logistic");
}

TEST_CASE("small protected groups are rejected", "[metrics]") {
  const DiscreteScm scm = fixtures::no_confounder_scm();
  const Table t = fixtures::real_sample(scm, 15, 3);
  CHECK_THROWS_AS(decompose_point(t, scm.roles(), logistic_cfg(1)), DegenerateGroupError);
}

TEST_CASE("missing analysis cells are rejected before estimation", "[metrics]") {
  const DiscreteScm scm = fixtures::no_confounder_scm();
  Table t = fixtures::real_sample(scm, 100, 3);
  t.set_missing(4, t.column_index("Y"), true);
  CHECK_THROWS_AS(decompose_point(t, scm.roles(), logistic_cfg(1)), ConfigError);
}

TEST_CASE("scoring the recorded outcome reproduces the data decomposition", "[metrics]") {
  const DiscreteScm scm = fixtures::hf_like_scm();
  const Table t = fixtures::real_sample(scm, 800, 21);
  const EstimatorConfig cfg = logistic_cfg(42, 8);
  const FairnessDecomposition data = decompose(t, scm.roles(), cfg);
  const FairnessDecomposition pred =
      evaluate_predictions(t, scm.roles(), outcome_codes(t, "Y"), cfg);
  CHECK(pred.to_json() == data.to_json());
}

TEST_CASE("constant predictions decompose to zero", "[metrics]") {
  const DiscreteScm scm = fixtures::hf_like_scm();
  const Table t = fixtures::real_sample(scm, 500, 17);
  const std::vector<int> zeros(t.row_count(), 0);
  const FairnessDecomposition d =
      evaluate_predictions_point(t, scm.roles(), zeros, logistic_cfg(1));
  CHECK(d.tv.est == 0.0);
  CHECK(std::fabs(d.de.est) < 1e-3);
  CHECK(std::fabs(d.ie.est) < 1e-3);
  CHECK(std::fabs(d.se.est) < 1e-3);
}

TEST_CASE("prediction scoring validates its inputs", "[metrics]") {
  const DiscreteScm scm = fixtures::no_confounder_scm();
  const Table t = fixtures::real_sample(scm, 120, 9);
  std::vector<int> bad_len(t.row_count() - 1, 0);
  CHECK_THROWS_AS(evaluate_predictions_point(t, scm.roles(), bad_len, logistic_cfg(1)),
                  LengthMismatchError);
  std::vector<int> bad_code(t.row_count(), 0);
  bad_code[7] = 2;
  CHECK_THROWS_AS(evaluate_predictions_point(t, scm.roles(), bad_code, logistic_cfg(1)),
                  TypeMismatchError);
}

TEST_CASE("bootstrap is bit-deterministic in the seed", "[metrics][property]") {
  const DiscreteScm scm = fixtures::pure_confounding_scm();
  const Table t = fixtures::real_sample(scm, 600, 33);
  const FairnessDecomposition a = decompose(t, scm.roles(), logistic_cfg(123));
  const FairnessDecomposition b = decompose(t, scm.roles(), logistic_cfg(123));
  CHECK(a.to_json().dump() == b.to_json().dump());

  const FairnessDecomposition c = decompose(t, scm.roles(), logistic_cfg(124));
  CHECK(c.tv.est == a.tv.est);
  CHECK(a.to_json().dump() != c.to_json().dump());
}

TEST_CASE("swapping the group labels mirrors the decomposition", "[metrics][property]") {
  const DiscreteScm scm = fixtures::hf_like_scm();
  const Table t = fixtures::real_sample(scm, 1200, 7);
  SfmSpec fwd = scm.roles();
  SfmSpec rev = fwd;
  std::swap(rev.x0, rev.x1);

  const EstimatorConfig cfg = logistic_cfg(55, 8);
  const FairnessDecomposition a = decompose(t, fwd, cfg);
  const FairnessDecomposition b = decompose(t, rev, cfg);

  CHECK(b.tv.est == -a.tv.est);
  CHECK(b.p_y_x0 == a.p_y_x1);
  CHECK(b.p_y_x1 == a.p_y_x0);
  CHECK(b.se.est == Catch::Approx(a.se_reversed.est).margin(1e-6));
  CHECK(b.se_reversed.est == Catch::Approx(a.se.est).margin(1e-6));
  CHECK(b.x0_level == a.x1_level);
}

TEST_CASE("estimates track the exact effects on a large sample", "[metrics]") {
  const DiscreteScm scm = fixtures::hf_like_scm();
  const ExactEffects fx = scm.exact_effects();
  const Table t = fixtures::real_sample(scm, 20000, 101);
  EstimatorConfig cfg;
  cfg.nuisance_model = NuisanceModel::random_forest;
  cfg.forest.n_trees = 60;
  cfg.seed = 9;
  const FairnessDecomposition d = decompose_point(t, scm.roles(), cfg);
  CHECK(d.tv.est == Catch::Approx(fx.tv).margin(0.03));
  CHECK(d.de.est == Catch::Approx(fx.de).margin(0.03));
  CHECK(d.ie.est == Catch::Approx(fx.ie).margin(0.03));
  CHECK(d.se.est == Catch::Approx(fx.se).margin(0.03));
  CHECK(d.p_y_x1 == Catch::Approx(fx.p_y_x1).margin(0.02));
  CHECK(d.nuisance.model == "random_forest");
  CHECK(d.nuisance.accuracy > 0.5);
}

TEST_CASE("indirect and spurious effects carry their direction", "[metrics]") {
  const DiscreteScm scm = fixtures::no_confounder_scm();
  const Table t = fixtures::real_sample(scm, 3000, 13);
  const EstimatorConfig cfg = logistic_cfg(2, 8);
  const EffectStat fwd = estimate_ie(t, scm.roles(), {"1", "0"}, cfg);
  const EffectStat rev = estimate_ie(t, scm.roles(), {"0", "1"}, cfg);
  CHECK(fwd.est < -0.15);
  CHECK(rev.est > 0.15);
  CHECK_THROWS_AS(estimate_ie(t, scm.roles(), {"1", "1"}, cfg), ConfigError);
  CHECK_THROWS_AS(estimate_se(t, scm.roles(), {"0", "2"}, cfg), ConfigError);

  const DiscreteScm conf = fixtures::pure_confounding_scm();
  const Table tc = fixtures::real_sample(conf, 4000, 29);
  const EffectStat se_fwd = estimate_se(tc, conf.roles(), cfg);
  const EffectStat se_rev = estimate_se(tc, conf.roles(), {"0", "1"}, cfg);
  CHECK(se_fwd.est < -0.08);
  CHECK(se_rev.est > 0.08);
}

TEST_CASE("reported effects satisfy the decomposition identity", "[metrics]") {
  const DiscreteScm scm = fixtures::hf_like_scm();
  const Table t = fixtures::real_sample(scm, 4000, 61);
  const FairnessDecomposition d = decompose(t, scm.roles(), logistic_cfg(3, 12));
  CHECK(d.tv.est - (d.de.est - d.ie.est - d.se.est) ==
        Catch::Approx(d.residual).margin(1e-12));
  CHECK(std::fabs(d.residual) < 0.02);
  CHECK(d.replicate_residual_max < 0.06);
  CHECK(d.tv.sd > 0.0);
}

TEST_CASE("decomposition and estimator config survive JSON round trips", "[metrics]") {
  const DiscreteScm scm = fixtures::direct_only_scm();
  const Table t = fixtures::real_sample(scm, 300, 77);
  const FairnessDecomposition d = decompose(t, scm.roles(), logistic_cfg(8, 6));
  const FairnessDecomposition back = FairnessDecomposition::from_json(d.to_json());
  CHECK(back.to_json() == d.to_json());

  EstimatorConfig cfg;
  cfg.nuisance_model = NuisanceModel::random_forest;
  cfg.bootstrap_reps = 31;
  cfg.seed = 404;
  cfg.cross_fit_folds = 3;
  cfg.z_bins = 5;
  cfg.forest.n_trees = 12;
  cfg.forest.max_depth = 3;
  const EstimatorConfig cback = EstimatorConfig::from_json(cfg.to_json());
  CHECK(cback.to_json() == cfg.to_json());
  CHECK(cback.nuisance_model == NuisanceModel::random_forest);
  CHECK(cback.forest.n_trees == 12);
}

TEST_CASE("estimator config validation rejects bad knobs", "[metrics]") {
  EstimatorConfig cfg;
  cfg.bootstrap_reps = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = EstimatorConfig{};
  cfg.z_bins = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(nuisance_from_string("svm"), ConfigError);
}
