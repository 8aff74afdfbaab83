#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fairsyn/pipeline.hpp"

namespace {

struct GlobalOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string backend;
  std::string output;
  bool quiet = false;
};

fairsyn::RunConfig load_config(const GlobalOpts& g) {
  auto cfg = fairsyn::RunConfig::load(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.backend.empty()) {
    cfg.generation.backend = fairsyn::backend_from_string(g.backend);
  }
  if (!g.output.empty()) cfg.output_dir = g.output;
  return cfg;
}

// llm backend talks to the endpoint named in the config; a mock:// url reads
// canned completions from a directory instead, for offline and test use.
std::unique_ptr<fairsyn::CompletionTransport> make_transport(const fairsyn::RunConfig& cfg) {
  if (cfg.generation.backend != fairsyn::Backend::llm) return nullptr;
  const auto& llm = cfg.generation.llm;
  if (llm.endpoint_url.empty()) {
    throw fairsyn::ConfigError("llm backend requires generation.llm.endpoint_url");
  }
  const std::string mock_scheme = "mock://";
  if (llm.endpoint_url.rfind(mock_scheme, 0) == 0) {
    return std::make_unique<fairsyn::MockTransport>(llm.endpoint_url.substr(mock_scheme.size()));
  }
  return std::make_unique<fairsyn::HttpTransport>(llm.endpoint_url, llm.api_key_env_name);
}

int do_audit(const GlobalOpts& g) {
  const auto cfg = load_config(g);
  const auto d = fairsyn::audit_data(cfg);
  if (!g.quiet) std::cout << d.to_json().dump(2) << "\n";
  return 0;
}

int do_generate(const GlobalOpts& g) {
  const auto cfg = load_config(g);
  const auto transport = make_transport(cfg);
  const auto report = fairsyn::pipeline_generate(cfg, transport.get());
  if (!g.quiet) {
    std::cout << "synthetic rows: " << report.final_row_count
              << ", iterations: " << report.iterations.size()
              << ", constraint_satisfied: " << (report.constraint_satisfied ? "true" : "false")
              << "\n";
  }
  return report.constraint_satisfied ? 0 : 3;
}

int do_train(const GlobalOpts& g) {
  const auto cfg = load_config(g);
  const auto names = fairsyn::pipeline_train(cfg);
  if (!g.quiet) {
    for (const auto& n : names) std::cout << "trained " << n << "\n";
  }
  return 0;
}

int do_evaluate(const GlobalOpts& g) {
  const auto cfg = load_config(g);
  const auto grid = fairsyn::pipeline_evaluate(cfg);
  if (!g.quiet) std::cout << fairsyn::render_markdown(grid);
  return 0;
}

int do_run(const GlobalOpts& g) {
  const auto cfg = load_config(g);
  const auto transport = make_transport(cfg);
  const auto outcome = fairsyn::run_all(cfg, transport.get());
  if (!g.quiet) {
    std::cout << fairsyn::render_markdown(outcome.grid);
    std::cout << "artifacts written to " << cfg.output_dir << "\n";
  }
  const bool unsatisfied = outcome.generation_ran && !outcome.generation_report.constraint_satisfied;
  return unsatisfied ? 3 : 0;
}

int do_report(const GlobalOpts& g) {
  const auto cfg = load_config(g);
  const std::string grid_path = cfg.output_dir + "/grid.json";
  std::ifstream in(grid_path);
  if (!in) {
    throw fairsyn::ConfigError("no grid at '" + grid_path + "'; run `evaluate` or `run` first");
  }
  nlohmann::json j;
  in >> j;
  const auto grid = fairsyn::EvaluationGrid::from_json(j);
  const auto written = fairsyn::render_report(
      grid,
      {fairsyn::ReportFormat::csv, fairsyn::ReportFormat::markdown, fairsyn::ReportFormat::svg},
      cfg.output_dir);
  fairsyn::write_manifest(cfg, "report", {}, written);
  if (!g.quiet) {
    for (const auto& p : written) std::cout << "wrote " << p << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal fairness measurement and fair synthetic data generation"};
  app.require_subcommand(1);

  GlobalOpts g;
  int exit_code = 0;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", g.config_path, "path to the JSON run configuration")->required();
    sub->add_option("--seed", g.seed, "master seed (overrides the config)");
    sub->add_option("--backend", g.backend, "generation backend")
        ->check(CLI::IsMember({"statistical", "llm"}));
    sub->add_option("--output", g.output, "output directory (overrides the config)");
    sub->add_flag("--quiet", g.quiet, "suppress informational output");
  };

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const GlobalOpts&);
  };
  const Sub subs[] = {
      {"audit", "ingest the data and print its fairness decomposition", do_audit},
      {"generate", "synthesize constraint-checked data", do_generate},
      {"train", "train unconstrained and fair classifiers", do_train},
      {"evaluate", "build the evaluation grid from existing artifacts", do_evaluate},
      {"run", "full pipeline: measure, synthesize, train, evaluate, report", do_run},
      {"report", "re-render tables and chart from a saved grid", do_report},
  };
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    add_common(sub);
    sub->callback([&g, &exit_code, fn = s.fn] { exit_code = fn(g); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const fairsyn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const fairsyn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return exit_code;
}
