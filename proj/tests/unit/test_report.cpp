#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>
#include <string>

#include "common/fixtures.hpp"
#include "fairsyn/report.hpp"

using namespace fairsyn;

namespace {

FairnessDecomposition fake_fx(double base) {
  FairnessDecomposition d;
  d.tv = {base, 0.01};
  d.de = {base * 0.6, 0.012};
  d.ie = {-base * 0.3, 0.008};
  d.ie_reversed = {base * 0.3, 0.008};
  d.se = {base * 0.1, 0.005};
  d.se_reversed = {-base * 0.1, 0.005};
  d.p_y_x0 = 0.4;
  d.p_y_x1 = 0.4 + base;
  d.x0_level = "0";
  d.x1_level = "1";
  d.nuisance.model = "logistic";
  d.nuisance.accuracy = 0.8;
  return d;
}

EvaluationGrid full_grid() {
  EvaluationGrid g;
  g.seed = 7;
  for (std::size_t r = 0; r < EvaluationGrid::kConditionCount; ++r) {
    for (std::size_t c = 0; c < EvaluationGrid::kSourceCount; ++c) {
      g.set(r, c, fake_fx(0.1 + 0.05 * static_cast<double>(r * 2 + c)));
    }
  }
  return g;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) {
    if (c == '\n') ++n;
  }
  return n;
}

std::size_t count_substring(const std::string& s, const std::string& sub) {
  std::size_t n = 0;
  for (std::size_t at = s.find(sub); at != std::string::npos; at = s.find(sub, at + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("markdown table lays out six rows with four metrics each", "[report]") {
  const EvaluationGrid g = full_grid();
  const std::string md = render_markdown(g);
  CHECK(count_lines(md) == 8);  // header + separator + 3 conditions x 2 sources
  CHECK(count_substring(md, "\xC2\xB1") == 24);
  CHECK(md.find("| Data fairness | Real |") != std::string::npos);
  CHECK(md.find("| Prediction (fair) | Synthetic |") != std::string::npos);
  CHECK(md.find("n/a") == std::string::npos);

  EvaluationGrid partial;
  partial.set(0, 0, fake_fx(0.2));
  const std::string pmd = render_markdown(partial);
  CHECK(count_lines(pmd) == 8);
  CHECK(count_substring(pmd, "n/a") == 20);  // 5 absent cells x 4 metrics
  CHECK(pmd.find("0.2000") != std::string::npos);
}

TEST_CASE("csv table emits one row per grid cell", "[report]") {
  const std::string csv = render_csv_table(full_grid());
  CHECK(count_lines(csv) == 7);
  CHECK(csv.rfind("condition,data,tv_est,tv_sd,de_est,de_sd,ie_est,ie_sd,se_est,se_sd\n", 0) ==
        0);
  CHECK(csv.find("data_fairness,real,0.1,") != std::string::npos);
  CHECK(csv.find("prediction_fair,synthetic,") != std::string::npos);

  EvaluationGrid partial;
  partial.set(2, 1, fake_fx(0.3));
  const std::string pcsv = render_csv_table(partial);
  CHECK(pcsv.find("data_fairness,real,,,,,,,,\n") != std::string::npos);
}

TEST_CASE("svg chart renders identically for identical grids", "[report]") {
  const EvaluationGrid g = full_grid();
  const std::string svg = render_svg(g);
  CHECK(svg.rfind("<svg xmlns=", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  for (const char* label : {">TV<", ">DE<", ">IE<", ">SE<"}) {
    CHECK(svg.find(label) != std::string::npos);
  }
  CHECK(svg.find("Data fairness / Real") != std::string::npos);
  CHECK(svg.find("Prediction (fair) / Synthetic") != std::string::npos);

  const EvaluationGrid copy = EvaluationGrid::from_json(g.to_json());
  CHECK(render_svg(copy) == svg);
}

TEST_CASE("svg chart survives an all-zero grid", "[report]") {
  EvaluationGrid g;
  FairnessDecomposition zero;
  g.set(0, 0, zero);
  g.set(0, 1, zero);
  const std::string svg = render_svg(g);
  CHECK(svg.find("width=\"18\"") == std::string::npos);  // zero-height bars are skipped
  CHECK(svg.find("stroke=\"#333333\"") != std::string::npos);  // error bars still drawn
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("evaluation grid round-trips through json", "[report]") {
  EvaluationGrid g;
  g.seed = 42;
  g.set(0, 0, fake_fx(0.15));
  g.set(1, 1, fake_fx(0.25));
  g.set(2, 0, fake_fx(0.05));
  CHECK(g.present_count() == 3);

  const nlohmann::json j = g.to_json();
  CHECK(j.at("seed") == 42);
  CHECK(j.at("cells").at("data_fairness").at("synthetic").is_null());

  const EvaluationGrid back = EvaluationGrid::from_json(j);
  CHECK(back.present_count() == 3);
  CHECK(back.to_json() == j);
  CHECK(back.cell(1, 1).value.tv.est == g.cell(1, 1).value.tv.est);
  CHECK_FALSE(back.cell(0, 1).present);
}

TEST_CASE("report writer emits the requested formats", "[report]") {
  namespace fs = std::filesystem;
  const EvaluationGrid g = full_grid();
  fixtures::TempDir dir("report");

  const auto written =
      render_report(g, {ReportFormat::json, ReportFormat::svg}, dir.str());
  REQUIRE(written.size() == 2);
  CHECK(fs::exists(dir.file("grid.json")));
  CHECK(fs::exists(dir.file("chart.svg")));
  CHECK_FALSE(fs::exists(dir.file("table.csv")));
  CHECK_FALSE(fs::exists(dir.file("table.md")));

  const std::string payload = fixtures::read_file(dir.file("grid.json"));
  CHECK(nlohmann::json::parse(payload) == g.to_json());
  CHECK(fixtures::read_file(dir.file("chart.svg")) == render_svg(g));

  const auto all = render_report(
      g, {ReportFormat::json, ReportFormat::csv, ReportFormat::markdown, ReportFormat::svg},
      dir.str());
  CHECK(all.size() == 4);
  CHECK(fixtures::read_file(dir.file("table.md")) == render_markdown(g));

  CHECK_THROWS_AS(render_report(EvaluationGrid{}, {ReportFormat::json}, dir.str()),
                  ConfigError);
  CHECK_THROWS_AS(
      render_report(g, {ReportFormat::json}, dir.str() + "/missing/nested"),
      UnwritableOutputError);
}
