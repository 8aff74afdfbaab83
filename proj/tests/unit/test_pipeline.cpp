#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "common/fixtures.hpp"
#include "fairsyn/pipeline.hpp"

using namespace fairsyn;

namespace {

std::vector<ColumnSchema> benchmark_schema() {
  return {{"Z", ColumnKind::binary, {}, {}, {}, {}},
          {"X", ColumnKind::binary, {}, {}, {}, {}},
          {"W", ColumnKind::binary, {}, {}, {}, {}},
          {"Y", ColumnKind::binary, {}, {}, {}, {}}};
}

std::string write_benchmark_csv(const fixtures::TempDir& dir, std::size_t n,
                                std::uint64_t seed) {
  const Table t = fixtures::real_sample(biased_benchmark_scm(1.0), n, seed);
  const std::string path = (dir.path() / "real.csv").string();
  write_csv_file(t, path);
  return path;
}

RunConfig demo_config(const std::string& csv_path, const std::string& out_dir) {
  RunConfig cfg;
  cfg.csv_path = csv_path;
  cfg.schema = benchmark_schema();
  cfg.sfm = biased_benchmark_scm(1.0).roles();
  cfg.estimator.nuisance_model = NuisanceModel::logistic;
  cfg.estimator.bootstrap_reps = 10;
  cfg.generation.backend = Backend::statistical;
  cfg.generation.target_rows = 300;
  cfg.generation.batch_size = 300;
  cfg.generation.max_iterations = 4;
  cfg.generation.fairness_tolerance = 0.5;
  cfg.generation.fidelity_tolerance = 0.5;
  cfg.predictors.forest.n_trees = 15;
  cfg.predictors.forest.max_depth = 6;
  cfg.predictors.full_data_eval = true;
  cfg.output_dir = out_dir;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("run config round-trips and reports load errors", "[pipeline]") {
  RunConfig cfg = demo_config("data.csv", "out");
  cfg.schema[0].role_hint = RoleHint::confounder;
  cfg.schema[1].min = 0.0;
  cfg.schema[1].max = 1.0;
  cfg.missing_tokens = {"", "NA", "?"};
  const nlohmann::json j = cfg.to_json();
  CHECK(RunConfig::from_json(j).to_json() == j);

  fixtures::TempDir dir("cfg");
  fixtures::write_file(dir.file("run.json"), j.dump(2));
  CHECK(RunConfig::load(dir.file("run.json")).to_json() == j);
  CHECK_THROWS_AS(RunConfig::load(dir.file("absent.json")), ConfigError);
  fixtures::write_file(dir.file("broken.json"), "{not json");
  CHECK_THROWS_AS(RunConfig::load(dir.file("broken.json")), ConfigError);

  RunConfig bad = cfg;
  bad.csv_path.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.schema.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.output_dir.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("master seed derives every stage seed", "[pipeline]") {
  RunConfig cfg = demo_config("data.csv", "out");
  cfg.seed = 5;
  const EstimatorConfig est = cfg.resolved_estimator();
  CHECK(est.seed == mix_seed(5, 0xE571ULL));
  CHECK(est.forest.seed == mix_seed(est.seed, 0xF03EULL));
  CHECK(cfg.resolved_generation().seed == mix_seed(5, 0x9E4EULL));

  cfg.estimator.seed = 77;
  CHECK(cfg.resolved_estimator().seed == 77);
  cfg.generation.seed = 78;
  CHECK(cfg.resolved_generation().seed == 78);

  CHECK(cfg.split_seed(0) != cfg.split_seed(1));
  CHECK(cfg.adaptation_seed(0) != cfg.split_seed(0));
  CHECK(cfg.forest_for(0).seed != cfg.forest_for(1).seed);
  cfg.predictors.forest.seed = 9;
  CHECK(cfg.forest_for(3).seed == mix_seed(9, 3));

  const std::string h = config_hash(cfg);
  CHECK(h.size() == 16);
  CHECK(h == config_hash(cfg));
  RunConfig other = cfg;
  other.seed = 6;
  CHECK(config_hash(other) != h);
}

TEST_CASE("stratified split keeps every outcome cell on both sides", "[pipeline]") {
  const Table t = fixtures::real_sample(biased_benchmark_scm(1.0), 500, 3);
  const SfmSpec s = biased_benchmark_scm(1.0).roles();
  const auto [train, test] = stratified_split(t, s, 0.2, 99);

  CHECK(train.size() + test.size() == 500);
  std::vector<std::size_t> merged(train);
  merged.insert(merged.end(), test.begin(), test.end());
  std::sort(merged.begin(), merged.end());
  CHECK(std::adjacent_find(merged.begin(), merged.end()) == merged.end());
  CHECK(static_cast<double>(test.size()) / 500.0 == Catch::Approx(0.2).margin(0.05));

  const std::size_t cx = t.column_index(s.x);
  const std::size_t cy = t.column_index(s.y);
  auto cells_of = [&](const std::vector<std::size_t>& idx) {
    std::set<std::pair<int, int>> out;
    for (std::size_t r : idx) {
      out.insert({static_cast<int>(t.cell(r, cx)), static_cast<int>(t.cell(r, cy))});
    }
    return out;
  };
  CHECK(cells_of(train).size() == 4);
  CHECK(cells_of(test).size() == 4);

  const auto [train2, test2] = stratified_split(t, s, 0.2, 99);
  CHECK(train2 == train);
  CHECK(test2 == test);
  const auto [train3, test3] = stratified_split(t, s, 0.2, 100);
  CHECK(train3 != train);

  Table tiny(benchmark_schema(), 0, Provenance::real);
  tiny.append_row({0, 0, 0, 0});
  tiny.append_row({0, 1, 0, 1});
  tiny.append_row({0, 1, 0, 1});
  const auto [tr, te] = stratified_split(tiny, s, 0.5, 1);
  CHECK(std::find(tr.begin(), tr.end(), 0u) != tr.end());  // singleton cell stays in train
  CHECK(te.size() == 1);
}

TEST_CASE("table artifact json preserves codes, codecs and missing masks", "[pipeline]") {
  std::istringstream csv(
      "X,A,Y\n"
      "0,1.25,1\n"
      "1,NA,0\n"
      "1,3.5,1\n"
      "0,2.125,0\n"
      "1,0.75,1\n"
      "0,1.5,0\n");
  std::vector<ColumnSchema> schema = {{"X", ColumnKind::binary, {}, {}, {}, {}},
                                      {"A", ColumnKind::continuous, {}, {}, {}, {}},
                                      {"Y", ColumnKind::binary, {}, {}, {}, {}}};
  const Table raw = ingest_csv(csv, schema);
  REQUIRE(raw.any_missing());
  const nlohmann::json j_raw = table_to_json(raw);
  const Table back = table_from_json(j_raw);
  CHECK(table_to_json(back) == j_raw);
  CHECK(back.missing(1) == raw.missing(1));
  CHECK(back.provenance() == Provenance::real);

  const Table clean = preprocess(raw);
  CHECK(clean.codec(1).imputed);
  CHECK(clean.codec(1).scaled);
  const nlohmann::json j_clean = table_to_json(clean);
  const Table clean_back = table_from_json(j_clean);
  CHECK(table_to_json(clean_back) == j_clean);
  for (std::size_t c = 0; c < clean.column_count(); ++c) {
    CHECK(clean_back.column(c) == clean.column(c));
  }
}

TEST_CASE("full run populates the grid and writes every artifact", "[pipeline]") {
  namespace fs = std::filesystem;
  fixtures::TempDir dir("pipe");
  const std::string csv = write_benchmark_csv(dir, 400, 21);
  const RunConfig cfg = demo_config(csv, (dir.path() / "out").string());

  const PipelineOutcome out = run_all(cfg);
  CHECK(out.grid.present_count() == 6);
  CHECK(out.generation_ran);
  CHECK(out.synthetic_table.row_count() == 300);
  CHECK(out.real_table.row_count() == 400);
  CHECK(out.models.size() == 4);
  CHECK_FALSE(out.durations_ms.empty());

  for (const char* name :
       {"grid.json", "table.csv", "table.md", "chart.svg", "synthetic.csv",
        "synthetic_table.json", "generation_report.json", "manifest.json",
        "models/baseline_real.json", "models/fair_real.json", "models/baseline_synthetic.json",
        "models/fair_synthetic.json"}) {
    CHECK(fs::exists(dir.path() / "out" / name));
  }

  const nlohmann::json manifest =
      nlohmann::json::parse(fixtures::read_file(dir.path() / "out" / "manifest.json"));
  CHECK(manifest.at("command") == "run");
  CHECK(manifest.at("config_hash") == config_hash(cfg));
  CHECK(manifest.at("seed") == cfg.seed);
  CHECK(manifest.at("outputs").size() == out.outputs.size());

  const nlohmann::json grid =
      nlohmann::json::parse(fixtures::read_file(dir.path() / "out" / "grid.json"));
  CHECK(grid == out.grid.to_json());
  CHECK_FALSE(grid.at("cells").at("prediction_fair").at("synthetic").is_null());
}

TEST_CASE("zero generation target skips the synthetic column", "[pipeline]") {
  namespace fs = std::filesystem;
  fixtures::TempDir dir("pipe");
  const std::string csv = write_benchmark_csv(dir, 300, 22);
  RunConfig cfg = demo_config(csv, (dir.path() / "out").string());
  cfg.generation.target_rows = 0;

  const PipelineOutcome out = run_all(cfg);
  CHECK_FALSE(out.generation_ran);
  CHECK(out.grid.present_count() == 3);
  CHECK_FALSE(out.grid.cell(0, 1).present);
  CHECK_FALSE(out.grid.cell(1, 1).present);
  CHECK(out.models.size() == 2);
  CHECK_FALSE(fs::exists(dir.path() / "out" / "synthetic.csv"));
  CHECK(fs::exists(dir.path() / "out" / "models" / "baseline_real.json"));
  CHECK_FALSE(fs::exists(dir.path() / "out" / "models" / "baseline_synthetic.json"));
}

TEST_CASE("identical configs reproduce artifacts byte for byte", "[pipeline]") {
  fixtures::TempDir dir("pipe");
  const std::string csv = write_benchmark_csv(dir, 400, 23);
  const RunConfig a = demo_config(csv, (dir.path() / "a").string());
  const RunConfig b = demo_config(csv, (dir.path() / "b").string());
  run_all(a);
  run_all(b);
  for (const char* name : {"grid.json", "chart.svg", "synthetic_table.json", "synthetic.csv"}) {
    CHECK(fixtures::read_file(dir.path() / "a" / name) ==
          fixtures::read_file(dir.path() / "b" / name));
  }
}

TEST_CASE("staged runs reproduce the monolithic grid", "[pipeline]") {
  fixtures::TempDir dir("pipe");
  const std::string csv = write_benchmark_csv(dir, 400, 24);
  const RunConfig mono = demo_config(csv, (dir.path() / "mono").string());
  const RunConfig staged = demo_config(csv, (dir.path() / "staged").string());

  const PipelineOutcome out = run_all(mono);
  const GenerationReport gen = pipeline_generate(staged);
  CHECK(gen.constraint_satisfied);
  const auto names = pipeline_train(staged);
  REQUIRE(names.size() == 4);
  const EvaluationGrid grid = pipeline_evaluate(staged);
  CHECK(grid.to_json() == out.grid.to_json());
}

TEST_CASE("stage failures carry the stage label", "[pipeline]") {
  fixtures::TempDir dir("pipe");
  RunConfig cfg = demo_config((dir.path() / "absent.csv").string(),
                              (dir.path() / "out").string());
  try {
    run_all(cfg);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage == "ingest");
    CHECK(std::string(e.what()).find("ingest") != std::string::npos);
  }
}

TEST_CASE("data audit measures without writing", "[pipeline]") {
  namespace fs = std::filesystem;
  fixtures::TempDir dir("pipe");
  const std::string csv = write_benchmark_csv(dir, 500, 25);
  RunConfig cfg = demo_config(csv, (dir.path() / "out").string());

  const FairnessDecomposition fx = audit_data(cfg);
  CHECK(fx.tv.est > 0.2);
  CHECK(fx.tv.sd > 0.0);
  CHECK_FALSE(fs::exists(dir.path() / "out"));

  cfg.sfm.w = {};  // leaves W unassigned
  CHECK_THROWS_AS(audit_data(cfg), ConfigError);
}
