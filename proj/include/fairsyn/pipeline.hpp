#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairsyn/adaptation.hpp"
#include "fairsyn/csv.hpp"
#include "fairsyn/error.hpp"
#include "fairsyn/generation.hpp"
#include "fairsyn/metrics.hpp"
#include "fairsyn/predictors.hpp"
#include "fairsyn/preprocess.hpp"
#include "fairsyn/report.hpp"
#include "fairsyn/rng.hpp"
#include "fairsyn/sfm.hpp"
#include "fairsyn/table.hpp"
#include "fairsyn/transport.hpp"
#include "fairsyn/version.hpp"

namespace fairsyn {

struct StageError : Error {
  StageError(std::string stage_name, const std::string& what)
      : Error("StageError", "stage '" + stage_name + "': " + what),
        stage(std::move(stage_name)) {}
  std::string stage;
};

struct PredictorsConfig {
  ForestConfig forest;
  double test_fraction = 0.2;
  bool full_data_eval = false;  // train and evaluate on the whole table
  std::size_t adaptation_bins = kAdaptBins;

  void validate() const {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
      throw ConfigError("test_fraction must be in (0, 1)");
    }
    if (adaptation_bins < 2) throw ConfigError("adaptation_bins must be >= 2");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"forest",
                           {{"n_trees", forest.n_trees},
                            {"max_depth", forest.max_depth},
                            {"min_leaf", forest.min_leaf},
                            {"seed", forest.seed},
                            {"feature_subsample", forest.feature_subsample}}},
                          {"test_fraction", test_fraction},
                          {"full_data_eval", full_data_eval},
                          {"adaptation_bins", adaptation_bins}};
  }

  static PredictorsConfig from_json(const nlohmann::json& j) {
    PredictorsConfig c;
    if (j.contains("forest")) {
      const auto& f = j["forest"];
      c.forest.n_trees = f.value("n_trees", c.forest.n_trees);
      c.forest.max_depth = f.value("max_depth", c.forest.max_depth);
      c.forest.min_leaf = f.value("min_leaf", c.forest.min_leaf);
      c.forest.seed = f.value("seed", c.forest.seed);
      c.forest.feature_subsample = f.value("feature_subsample", c.forest.feature_subsample);
    }
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.full_data_eval = j.value("full_data_eval", c.full_data_eval);
    c.adaptation_bins = j.value("adaptation_bins", c.adaptation_bins);
    return c;
  }
};

namespace detail {

inline constexpr std::uint64_t kSeedEstimator = 0xE571;
inline constexpr std::uint64_t kSeedGeneration = 0x9E4E;
inline constexpr std::uint64_t kSeedSplit = 0x5917;
inline constexpr std::uint64_t kSeedAdaptation = 0xADA7;
inline constexpr std::uint64_t kSeedForest = 0xF03E;

inline nlohmann::json column_schema_to_json(const ColumnSchema& c) {
  nlohmann::json j{{"name", c.name}, {"kind", to_string(c.kind)}};
  if (!c.levels.empty()) j["levels"] = c.levels;
  if (c.min) j["min"] = *c.min;
  if (c.max) j["max"] = *c.max;
  if (c.role_hint) j["role_hint"] = to_string(*c.role_hint);
  return j;
}

inline ColumnSchema column_schema_from_json(const nlohmann::json& j) {
  ColumnSchema c;
  c.name = j.at("name").get<std::string>();
  c.kind = column_kind_from_string(j.value("kind", std::string("continuous")));
  if (j.contains("levels")) c.levels = j["levels"].get<std::vector<std::string>>();
  if (j.contains("min")) c.min = j["min"].get<double>();
  if (j.contains("max")) c.max = j["max"].get<double>();
  if (j.contains("role_hint")) c.role_hint = role_hint_from_string(j["role_hint"]);
  return c;
}

}  // namespace detail

// One JSON document holding every knob of a full run. Nested seeds left at 0
// are derived from the master seed, so a single --seed reproduces everything.
struct RunConfig {
  std::string csv_path;
  std::vector<ColumnSchema> schema;
  std::vector<std::string> missing_tokens = {"", "NA"};
  PreprocessPolicy preprocess_policy;
  SfmSpec sfm;
  EstimatorConfig estimator;
  GenerationConfig generation;
  PredictorsConfig predictors;
  std::string output_dir = "out";
  std::uint64_t seed = 0;

  void validate() const {
    if (csv_path.empty()) throw ConfigError("data.csv_path is required");
    if (schema.empty()) throw ConfigError("data.schema must list at least one column");
    if (output_dir.empty()) throw ConfigError("output_dir is required");
    estimator.validate();
    generation.validate();
    predictors.validate();
  }

  EstimatorConfig resolved_estimator() const {
    EstimatorConfig e = estimator;
    if (e.seed == 0) e.seed = mix_seed(seed, detail::kSeedEstimator);
    if (e.forest.seed == 0) e.forest.seed = mix_seed(e.seed, detail::kSeedForest);
    return e;
  }

  GenerationConfig resolved_generation() const {
    GenerationConfig g = generation;
    if (g.seed == 0) g.seed = mix_seed(seed, detail::kSeedGeneration);
    return g;
  }

  std::uint64_t split_seed(std::size_t source) const {
    return mix_seed(mix_seed(seed, detail::kSeedSplit), source);
  }

  std::uint64_t adaptation_seed(std::size_t source) const {
    return mix_seed(mix_seed(seed, detail::kSeedAdaptation), source);
  }

  ForestConfig forest_for(std::size_t slot) const {
    ForestConfig f = predictors.forest;
    const std::uint64_t base =
        f.seed != 0 ? f.seed : mix_seed(seed, detail::kSeedForest);
    f.seed = mix_seed(base, slot);
    return f;
  }

  nlohmann::json to_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : schema) cols.push_back(detail::column_schema_to_json(c));
    return nlohmann::json{
        {"data",
         {{"csv_path", csv_path},
          {"schema", std::move(cols)},
          {"missing_tokens", missing_tokens},
          {"preprocess",
           {{"impute", preprocess_policy.impute},
            {"scale_continuous", preprocess_policy.scale_continuous}}}}},
        {"sfm", sfm.to_json()},
        {"estimator", estimator.to_json()},
        {"generation", generation.to_json()},
        {"predictors", predictors.to_json()},
        {"output_dir", output_dir},
        {"seed", seed}};
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    const auto& d = j.at("data");
    c.csv_path = d.value("csv_path", std::string());
    if (d.contains("schema")) {
      for (const auto& col : d["schema"]) {
        c.schema.push_back(detail::column_schema_from_json(col));
      }
    }
    if (d.contains("missing_tokens")) {
      c.missing_tokens = d["missing_tokens"].get<std::vector<std::string>>();
    }
    if (d.contains("preprocess")) {
      c.preprocess_policy.impute = d["preprocess"].value("impute", true);
      c.preprocess_policy.scale_continuous = d["preprocess"].value("scale_continuous", true);
    }
    if (j.contains("sfm")) c.sfm = SfmSpec::from_json(j["sfm"]);
    if (j.contains("estimator")) c.estimator = EstimatorConfig::from_json(j["estimator"]);
    if (j.contains("generation")) c.generation = GenerationConfig::from_json(j["generation"]);
    if (j.contains("predictors")) c.predictors = PredictorsConfig::from_json(j["predictors"]);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.seed = j.value("seed", c.seed);
    return c;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    try {
      return from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file '" + path + "' is malformed: " + e.what());
    }
  }
};

inline std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.to_json().dump())));
  return buf;
}

// Exact internal representation of a table, for artifact handoff between
// pipeline stages. CSV exports decode values for human use; this round-trips
// codes, codecs, and missing masks bit for bit.
inline nlohmann::json table_to_json(const Table& t) {
  nlohmann::json schema = nlohmann::json::array();
  nlohmann::json codecs = nlohmann::json::array();
  nlohmann::json columns = nlohmann::json::array();
  nlohmann::json missing = nlohmann::json::array();
  for (std::size_t c = 0; c < t.column_count(); ++c) {
    schema.push_back(detail::column_schema_to_json(t.schema()[c]));
    const auto& cd = t.codec(c);
    codecs.push_back(nlohmann::json{{"encoded", cd.encoded},
                                    {"scaled", cd.scaled},
                                    {"scale_min", cd.scale_min},
                                    {"scale_max", cd.scale_max},
                                    {"imputed", cd.imputed},
                                    {"impute_value", cd.impute_value}});
    columns.push_back(t.column(c));
    missing.push_back(t.missing(c));
  }
  return nlohmann::json{
      {"provenance", t.provenance() == Provenance::synthetic ? "synthetic" : "real"},
      {"schema", std::move(schema)},
      {"codecs", std::move(codecs)},
      {"columns", std::move(columns)},
      {"missing", std::move(missing)}};
}

inline Table table_from_json(const nlohmann::json& j) {
  std::vector<ColumnSchema> schema;
  for (const auto& col : j.at("schema")) schema.push_back(detail::column_schema_from_json(col));
  const auto& columns = j.at("columns");
  const std::size_t rows = columns.empty() ? 0 : columns[0].size();
  const Provenance prov = j.value("provenance", std::string("real")) == "synthetic"
                              ? Provenance::synthetic
                              : Provenance::real;
  Table t(schema, rows, prov);
  const auto& codecs = j.at("codecs");
  const auto& missing = j.at("missing");
  for (std::size_t c = 0; c < schema.size(); ++c) {
    t.column(c) = columns[c].get<std::vector<double>>();
    t.missing(c) = missing[c].get<std::vector<std::uint8_t>>();
    auto& cd = t.codec(c);
    cd.encoded = codecs[c].value("encoded", false);
    cd.scaled = codecs[c].value("scaled", false);
    cd.scale_min = codecs[c].value("scale_min", 0.0);
    cd.scale_max = codecs[c].value("scale_max", 1.0);
    cd.imputed = codecs[c].value("imputed", false);
    cd.impute_value = codecs[c].value("impute_value", 0.0);
  }
  return t;
}

inline Table load_real_table(const RunConfig& cfg) {
  Table t = ingest_csv_file(cfg.csv_path, cfg.schema, CsvOptions{cfg.missing_tokens});
  return preprocess(std::move(t), cfg.preprocess_policy);
}

// Deterministic stratified split on (X code, Y code) cells. Every cell with
// at least two rows contributes at least one row to each side.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    const Table& t, const SfmSpec& s, double test_fraction, std::uint64_t seed) {
  const auto& x = t.column(t.column_index(s.x));
  const auto& y = t.column(t.column_index(s.y));
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    cells[{static_cast<int>(std::llround(x[r])), static_cast<int>(std::llround(y[r]))}]
        .push_back(r);
  }
  std::vector<std::size_t> train, test;
  std::size_t ci = 0;
  for (auto& [key, idx] : cells) {
    (void)key;
    Rng rng(mix_seed(seed, ci++));
    rng.shuffle(idx);
    std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * idx.size()));
    if (idx.size() >= 2) {
      n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
    } else {
      n_test = 0;
    }
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < n_test ? test : train).push_back(idx[i]);
    }
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

namespace detail {

struct SourceSlices {
  Table train;
  Table eval;
};

inline SourceSlices slices_for_source(const Table& full, const RunConfig& cfg,
                                      std::size_t source) {
  if (cfg.predictors.full_data_eval) {
    std::vector<std::size_t> all(full.row_count());
    for (std::size_t r = 0; r < all.size(); ++r) all[r] = r;
    Table copy = full.select_rows(all);
    return {copy, copy};
  }
  auto [train_idx, test_idx] =
      stratified_split(full, cfg.sfm, cfg.predictors.test_fraction, cfg.split_seed(source));
  return {full.select_rows(train_idx), full.select_rows(test_idx)};
}

}  // namespace detail

// Trains the unconstrained and fair classifiers for one data source
// (0 = real, 1 = synthetic) on its training slice.
inline std::pair<PredictorModel, PredictorModel> train_models_for(const Table& train_t,
                                                                  const RunConfig& cfg,
                                                                  std::size_t source) {
  PredictorModel baseline;
  baseline.kind = "baseline";
  baseline.spec = cfg.sfm;
  baseline.forest = train_baseline(train_t, cfg.sfm, cfg.forest_for(source * 2));

  PredictorModel fair;
  fair.kind = "fair";
  fair.spec = cfg.sfm;
  fair.plan = fit_adaptation(train_t, cfg.sfm, cfg.adaptation_seed(source),
                             cfg.predictors.adaptation_bins);
  fair.forest = train_fair(train_t, cfg.sfm, fair.plan, cfg.forest_for(source * 2 + 1)).first;
  return {std::move(baseline), std::move(fair)};
}

struct PipelineOutcome {
  EvaluationGrid grid;
  GenerationReport generation_report;
  bool generation_ran = false;
  Table real_table;
  Table synthetic_table;
  std::vector<std::pair<std::string, PredictorModel>> models;
  std::vector<std::pair<std::string, double>> durations_ms;
  std::vector<std::string> outputs;
};

namespace detail {

class StageTimer {
 public:
  explicit StageTimer(std::vector<std::pair<std::string, double>>& sink) : sink_(sink) {}

  template <typename Fn>
  void run(const std::string& stage, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const Error& e) {
      throw StageError(stage, e.what());
    }
    const auto t1 = std::chrono::steady_clock::now();
    sink_.emplace_back(stage,
                       std::chrono::duration<double, std::milli>(t1 - t0).count());
  }

 private:
  std::vector<std::pair<std::string, double>>& sink_;
};

}  // namespace detail

inline void write_manifest(const RunConfig& cfg, const std::string& command,
                           const std::vector<std::pair<std::string, double>>& durations,
                           const std::vector<std::string>& outputs) {
  nlohmann::json d = nlohmann::json::object();
  for (const auto& [stage, ms] : durations) d[stage] = ms;
  nlohmann::json m{{"command", command},        {"config_hash", config_hash(cfg)},
                   {"seed", cfg.seed},          {"version", kVersion},
                   {"durations_ms", std::move(d)}, {"outputs", outputs}};
  write_text_file(cfg.output_dir + "/manifest.json", m.dump(2) + "\n");
}

namespace detail {

inline void ensure_output_dirs(const RunConfig& cfg, bool with_models) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (with_models) std::filesystem::create_directories(cfg.output_dir + "/models", ec);
  if (ec) throw UnwritableOutputError("cannot create output directory '" + cfg.output_dir + "'");
}

inline void write_pipeline_artifacts(const RunConfig& cfg, PipelineOutcome& out) {
  ensure_output_dirs(cfg, !out.models.empty());
  if (out.generation_ran) {
    const std::string csv_path = cfg.output_dir + "/synthetic.csv";
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw UnwritableOutputError("cannot open '" + csv_path + "' for writing");
    write_csv(out.synthetic_table, f);
    out.outputs.push_back(csv_path);
    write_text_file(cfg.output_dir + "/synthetic_table.json",
                    table_to_json(out.synthetic_table).dump() + "\n");
    out.outputs.push_back(cfg.output_dir + "/synthetic_table.json");
    write_text_file(cfg.output_dir + "/generation_report.json",
                    out.generation_report.to_json().dump(2) + "\n");
    out.outputs.push_back(cfg.output_dir + "/generation_report.json");
  }
  for (const auto& [name, model] : out.models) {
    const std::string path = cfg.output_dir + "/models/" + name + ".json";
    write_text_file(path, model.to_json().dump() + "\n");
    out.outputs.push_back(path);
  }
  if (out.grid.any_present()) {
    auto written = render_report(out.grid,
                                 {ReportFormat::json, ReportFormat::csv, ReportFormat::markdown,
                                  ReportFormat::svg},
                                 cfg.output_dir);
    out.outputs.insert(out.outputs.end(), written.begin(), written.end());
  }
}

}  // namespace detail

// Full workflow: ingest, measure the real data, synthesize, measure the
// synthetic data, train and score both classifiers on both tables, write all
// artifacts. On a stage failure the partial grid and manifest are flushed
// before the error is rethrown with its stage label.
inline PipelineOutcome run_all(const RunConfig& cfg, CompletionTransport* transport = nullptr) {
  cfg.validate();
  PipelineOutcome out;
  out.grid.seed = cfg.seed;
  const EstimatorConfig est = cfg.resolved_estimator();
  const GenerationConfig gen = cfg.resolved_generation();
  detail::StageTimer timer(out.durations_ms);

  const auto flush_and_rethrow = [&](const StageError& e) {
    try {
      detail::write_pipeline_artifacts(cfg, out);
      write_manifest(cfg, "run", out.durations_ms, out.outputs);
    } catch (const Error&) {
      // artifact flush is best-effort on the failure path
    }
    throw e;
  };

  try {
    timer.run("ingest", [&] { out.real_table = load_real_table(cfg); });
    timer.run("decompose_real",
              [&] { out.grid.set(0, 0, decompose(out.real_table, cfg.sfm, est)); });

    const bool want_synthetic = gen.target_rows > 0;
    if (want_synthetic) {
      timer.run("generate", [&] {
        auto [syn, report] = run_generation(out.real_table, cfg.sfm, gen, transport, est);
        out.synthetic_table = std::move(syn);
        out.generation_report = std::move(report);
        out.generation_ran = true;
      });
      timer.run("decompose_synthetic",
                [&] { out.grid.set(0, 1, decompose(out.synthetic_table, cfg.sfm, est)); });
    }

    for (std::size_t source = 0; source < (want_synthetic ? 2u : 1u); ++source) {
      const Table& full = source == 0 ? out.real_table : out.synthetic_table;
      const std::string tag = EvaluationGrid::source_key(source);
      detail::SourceSlices slices;
      timer.run("split_" + tag, [&] { slices = detail::slices_for_source(full, cfg, source); });
      timer.run("train_" + tag, [&] {
        auto [baseline, fair] = train_models_for(slices.train, cfg, source);
        out.models.emplace_back("baseline_" + tag, std::move(baseline));
        out.models.emplace_back("fair_" + tag, std::move(fair));
      });
      timer.run("evaluate_" + tag, [&] {
        const PredictorModel& baseline = out.models[out.models.size() - 2].second;
        const PredictorModel& fair = out.models.back().second;
        out.grid.set(1, source, evaluate_model(baseline, slices.eval, est, true));
        out.grid.set(2, source, evaluate_model(fair, slices.eval, est, true));
      });
    }
  } catch (const StageError& e) {
    flush_and_rethrow(e);
  }

  detail::write_pipeline_artifacts(cfg, out);
  write_manifest(cfg, "run", out.durations_ms, out.outputs);
  return out;
}

// Ingest and measure only; nothing is written.
inline FairnessDecomposition audit_data(const RunConfig& cfg) {
  cfg.validate();
  Table t = load_real_table(cfg);
  const auto violations = validate_sfm(t, cfg.sfm);
  if (!violations.empty()) {
    std::string msg = "role assignment rejected:";
    for (const auto& v : violations) {
      msg += "\n  [";
      msg += to_string(v.kind);
      msg += "] ";
      if (!v.column.empty()) msg += v.column + ": ";
      msg += v.message;
    }
    throw ConfigError(msg);
  }
  return decompose(t, cfg.sfm, cfg.resolved_estimator());
}

// Synthesis stage: writes synthetic.csv, the exact table artifact, and the
// generation report. Returns the report so callers can map the constraint
// flag onto an exit code.
inline GenerationReport pipeline_generate(const RunConfig& cfg,
                                          CompletionTransport* transport = nullptr) {
  cfg.validate();
  PipelineOutcome out;
  detail::StageTimer timer(out.durations_ms);
  timer.run("ingest", [&] { out.real_table = load_real_table(cfg); });
  timer.run("generate", [&] {
    auto [syn, report] =
        run_generation(out.real_table, cfg.sfm, cfg.resolved_generation(), transport,
                       cfg.resolved_estimator());
    out.synthetic_table = std::move(syn);
    out.generation_report = std::move(report);
    out.generation_ran = true;
  });
  detail::ensure_output_dirs(cfg, false);
  detail::write_pipeline_artifacts(cfg, out);
  write_manifest(cfg, "generate", out.durations_ms, out.outputs);
  return out.generation_report;
}

// Training stage: fits both classifiers on the real table and, when a
// synthetic table artifact exists in the output directory, on that too.
inline std::vector<std::string> pipeline_train(const RunConfig& cfg) {
  cfg.validate();
  PipelineOutcome out;
  detail::StageTimer timer(out.durations_ms);
  timer.run("ingest", [&] { out.real_table = load_real_table(cfg); });

  std::vector<std::pair<std::size_t, const Table*>> sources{{0, &out.real_table}};
  const std::string syn_path = cfg.output_dir + "/synthetic_table.json";
  if (std::filesystem::exists(syn_path)) {
    timer.run("load_synthetic", [&] {
      std::ifstream in(syn_path);
      nlohmann::json j;
      in >> j;
      out.synthetic_table = table_from_json(j);
    });
    if (out.synthetic_table.row_count() > 0) sources.emplace_back(1, &out.synthetic_table);
  }

  for (const auto& [source, table] : sources) {
    const std::string tag = EvaluationGrid::source_key(source);
    timer.run("train_" + tag, [&, source = source, table = table] {
      const auto slices = detail::slices_for_source(*table, cfg, source);
      auto [baseline, fair] = train_models_for(slices.train, cfg, source);
      out.models.emplace_back("baseline_" + tag, std::move(baseline));
      out.models.emplace_back("fair_" + tag, std::move(fair));
    });
  }
  detail::ensure_output_dirs(cfg, true);
  detail::write_pipeline_artifacts(cfg, out);
  write_manifest(cfg, "train", out.durations_ms, out.outputs);
  std::vector<std::string> names;
  for (const auto& [name, model] : out.models) names.push_back(name);
  return names;
}

// Evaluation stage: rebuilds every grid cell for which artifacts exist.
// With artifacts from `generate` and `train` under the same config and seed
// this reproduces the corresponding cells of a monolithic run exactly.
inline EvaluationGrid pipeline_evaluate(const RunConfig& cfg) {
  cfg.validate();
  PipelineOutcome out;
  out.grid.seed = cfg.seed;
  const EstimatorConfig est = cfg.resolved_estimator();
  detail::StageTimer timer(out.durations_ms);
  timer.run("ingest", [&] { out.real_table = load_real_table(cfg); });
  timer.run("decompose_real",
            [&] { out.grid.set(0, 0, decompose(out.real_table, cfg.sfm, est)); });

  bool have_synthetic = false;
  const std::string syn_path = cfg.output_dir + "/synthetic_table.json";
  if (std::filesystem::exists(syn_path)) {
    timer.run("load_synthetic", [&] {
      std::ifstream in(syn_path);
      nlohmann::json j;
      in >> j;
      out.synthetic_table = table_from_json(j);
    });
    if (out.synthetic_table.row_count() > 0) {
      have_synthetic = true;
      timer.run("decompose_synthetic",
                [&] { out.grid.set(0, 1, decompose(out.synthetic_table, cfg.sfm, est)); });
    }
  }

  for (std::size_t source = 0; source < (have_synthetic ? 2u : 1u); ++source) {
    const Table& full = source == 0 ? out.real_table : out.synthetic_table;
    const std::string tag = EvaluationGrid::source_key(source);
    PredictorModel baseline, fair;
    bool have_models = false;
    timer.run("load_models_" + tag, [&] {
      const std::string base_path = cfg.output_dir + "/models/baseline_" + tag + ".json";
      const std::string fair_path = cfg.output_dir + "/models/fair_" + tag + ".json";
      if (!std::filesystem::exists(base_path) || !std::filesystem::exists(fair_path)) return;
      nlohmann::json jb, jf;
      std::ifstream(base_path) >> jb;
      std::ifstream(fair_path) >> jf;
      baseline = PredictorModel::from_json(jb);
      fair = PredictorModel::from_json(jf);
      have_models = true;
    });
    if (!have_models) continue;
    timer.run("evaluate_" + tag, [&] {
      const auto slices = detail::slices_for_source(full, cfg, source);
      out.grid.set(1, source, evaluate_model(baseline, slices.eval, est, true));
      out.grid.set(2, source, evaluate_model(fair, slices.eval, est, true));
    });
  }

  detail::ensure_output_dirs(cfg, false);
  if (out.grid.any_present()) {
    auto written = render_report(out.grid,
                                 {ReportFormat::json, ReportFormat::csv, ReportFormat::markdown,
                                  ReportFormat::svg},
                                 cfg.output_dir);
    out.outputs.insert(out.outputs.end(), written.begin(), written.end());
  }
  write_manifest(cfg, "evaluate", out.durations_ms, out.outputs);
  return out.grid;
}

}  // namespace fairsyn
