#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "common/fixtures.hpp"
#include "fairsyn/forest.hpp"
#include "fairsyn/logistic.hpp"
#include "fairsyn/rng.hpp"

using namespace fairsyn;

namespace {

struct Xy {
  FeatureMatrix x;
  std::vector<int> y;
};

// Two binary features; the label copies the first one with a small flip rate.
Xy near_separable(std::size_t n, std::uint64_t seed, double flip = 0.0) {
  Xy d;
  d.x.names = {"a", "b"};
  d.x.kinds = {ColumnKind::binary, ColumnKind::binary};
  d.x.cols.assign(2, {});
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const double b = rng.uniform() < 0.5 ? 1.0 : 0.0;
    int label = static_cast<int>(a);
    if (rng.uniform() < flip) label = 1 - label;
    d.x.cols[0].push_back(a);
    d.x.cols[1].push_back(b);
    d.y.push_back(label);
  }
  return d;
}

std::vector<std::vector<double>> as_rows(const FeatureMatrix& x) {
  std::vector<std::vector<double>> rows(x.rows(), std::vector<double>(x.features()));
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.features(); ++j) rows[i][j] = x.cols[j][i];
  }
  return rows;
}

}  // namespace

TEST_CASE("logistic fit separates a clean signal", "[logistic]") {
  const Xy d = near_separable(400, 7);
  const LogisticModel m = fit_logistic(as_rows(d.x), d.y);
  CHECK(m.predict({1.0, 0.0}) > 0.95);
  CHECK(m.predict({0.0, 1.0}) < 0.05);
  CHECK(m.beta[1] > 2.0);
  CHECK(std::fabs(m.beta[2]) < std::fabs(m.beta[1]) / 4.0);
  CHECK(std::isfinite(m.deviance));
}

TEST_CASE("logistic fit is deterministic for fixed data", "[logistic]") {
  const Xy d = near_separable(300, 11, 0.1);
  const LogisticModel a = fit_logistic(as_rows(d.x), d.y);
  const LogisticModel b = fit_logistic(as_rows(d.x), d.y);
  REQUIRE(a.beta.size() == b.beta.size());
  for (std::size_t j = 0; j < a.beta.size(); ++j) CHECK(a.beta[j] == b.beta[j]);
}

TEST_CASE("logistic recovers known log-odds", "[logistic]") {
  // P(y=1|a) = sigmoid(-1 + 2a) sampled on a dense grid of repeats.
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  Rng rng(3);
  for (std::size_t i = 0; i < 4000; ++i) {
    const double a = i % 2 ? 1.0 : 0.0;
    rows.push_back({a});
    y.push_back(rng.uniform() < sigmoid(-1.0 + 2.0 * a) ? 1 : 0);
  }
  const LogisticModel m = fit_logistic(rows, y);
  CHECK(m.converged);
  CHECK(m.beta[0] == Catch::Approx(-1.0).margin(0.25));
  CHECK(m.beta[1] == Catch::Approx(2.0).margin(0.35));
}

TEST_CASE("logistic rejects empty input", "[logistic]") {
  CHECK_THROWS_AS(fit_logistic({}, {}), NuisanceFitError);
}

TEST_CASE("sigmoid is stable at extreme arguments", "[logistic]") {
  CHECK(sigmoid(0.0) == Catch::Approx(0.5));
  CHECK(sigmoid(800.0) == Catch::Approx(1.0));
  CHECK(sigmoid(-800.0) == Catch::Approx(0.0));
  CHECK(sigmoid(2.0) + sigmoid(-2.0) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("forest training is seed-deterministic", "[forest]") {
  const Xy d = near_separable(250, 19, 0.15);
  ForestConfig cfg;
  cfg.n_trees = 25;
  cfg.seed = 77;
  const ForestModel a = ForestModel::train(d.x, d.y, cfg);
  const ForestModel b = ForestModel::train(d.x, d.y, cfg);
  CHECK(a.to_json() == b.to_json());
  for (double v : {0.0, 1.0}) {
    CHECK(a.predict_p1({v, 1.0 - v}) == b.predict_p1({v, 1.0 - v}));
  }
}

TEST_CASE("forest learns a separable rule", "[forest]") {
  const Xy d = near_separable(400, 23);
  ForestConfig cfg;
  cfg.n_trees = 30;
  cfg.seed = 5;
  cfg.feature_subsample = 2;
  const ForestModel m = ForestModel::train(d.x, d.y, cfg);
  CHECK(m.predict_p1({1.0, 0.0}) > 0.9);
  CHECK(m.predict_p1({0.0, 0.0}) < 0.1);
  CHECK(m.predict_label({1.0, 1.0}) == 1);
  CHECK(m.predict_label({0.0, 1.0}) == 0);
  CHECK(m.oob_accuracy() > 0.95);
  CHECK(m.tree_count() == 30);
}

TEST_CASE("forest groups categorical levels by outcome rate", "[forest]") {
  // Levels 0 and 2 are negative, level 1 positive; a threshold split on the
  // raw code cannot isolate level 1 but a level-set split can.
  FeatureMatrix x;
  x.names = {"c"};
  x.kinds = {ColumnKind::categorical};
  x.cols.assign(1, {});
  std::vector<int> y;
  Rng rng(31);
  for (std::size_t i = 0; i < 600; ++i) {
    const double code = static_cast<double>(i % 3);
    x.cols[0].push_back(code);
    const double p = code == 1.0 ? 0.95 : 0.05;
    y.push_back(rng.uniform() < p ? 1 : 0);
  }
  ForestConfig cfg;
  cfg.n_trees = 20;
  cfg.seed = 8;
  cfg.feature_subsample = 1;
  const ForestModel m = ForestModel::train(x, y, cfg);
  CHECK(m.predict_p1({1.0}) > 0.8);
  CHECK(m.predict_p1({0.0}) < 0.2);
  CHECK(m.predict_p1({2.0}) < 0.2);
}

TEST_CASE("forest splits continuous features at midpoints", "[forest]") {
  FeatureMatrix x;
  x.names = {"v"};
  x.kinds = {ColumnKind::continuous};
  x.cols.assign(1, {});
  std::vector<int> y;
  for (std::size_t i = 0; i < 200; ++i) {
    const double v = static_cast<double>(i) / 199.0;
    x.cols[0].push_back(v);
    y.push_back(v > 0.6 ? 1 : 0);
  }
  ForestConfig cfg;
  cfg.n_trees = 15;
  cfg.seed = 2;
  const ForestModel m = ForestModel::train(x, y, cfg);
  CHECK(m.predict_p1({0.9}) > 0.9);
  CHECK(m.predict_p1({0.1}) < 0.1);
}

TEST_CASE("forest survives a constant label", "[forest]") {
  const Xy base = near_separable(60, 41);
  std::vector<int> ones(base.y.size(), 1);
  ForestConfig cfg;
  cfg.n_trees = 5;
  cfg.seed = 1;
  const ForestModel m = ForestModel::train(base.x, ones, cfg);
  CHECK(m.predict_p1({1.0, 0.0}) == Catch::Approx(1.0));
  CHECK(m.predict_p1({0.0, 1.0}) == Catch::Approx(1.0));
}

TEST_CASE("forest JSON round trip preserves predictions", "[forest]") {
  const Xy d = near_separable(300, 53, 0.2);
  ForestConfig cfg;
  cfg.n_trees = 12;
  cfg.seed = 99;
  cfg.max_depth = 4;
  const ForestModel m = ForestModel::train(d.x, d.y, cfg);
  const ForestModel back = ForestModel::from_json(m.to_json());
  CHECK(back.to_json() == m.to_json());
  CHECK(back.config().n_trees == 12);
  CHECK(back.config().max_depth == 4);
  CHECK(back.feature_names() == m.feature_names());
  for (double a : {0.0, 1.0}) {
    for (double b : {0.0, 1.0}) {
      CHECK(back.predict_p1({a, b}) == m.predict_p1({a, b}));
    }
  }
}

TEST_CASE("forest rejects mismatched labels", "[forest]") {
  const Xy d = near_separable(50, 61);
  std::vector<int> short_y(d.y.begin(), d.y.end() - 1);
  CHECK_THROWS_AS(ForestModel::train(d.x, short_y, ForestConfig{}), LengthMismatchError);
}
