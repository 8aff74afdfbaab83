#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairsyn/csv.hpp"
#include "fairsyn/error.hpp"
#include "fairsyn/metrics.hpp"
#include "fairsyn/version.hpp"

namespace fairsyn {

struct GridCell {
  bool present = false;
  FairnessDecomposition value;
};

// 3x2 evaluation matrix: {data fairness, unconstrained predictions, fair
// predictions} x {real data, synthetic data}. Absent cells stay null through
// serialization so partial runs remain inspectable.
struct EvaluationGrid {
  static constexpr std::size_t kConditionCount = 3;
  static constexpr std::size_t kSourceCount = 2;

  std::array<std::array<GridCell, kSourceCount>, kConditionCount> cells{};
  std::uint64_t seed = 0;
  std::string version = kVersion;

  static const char* condition_key(std::size_t r) {
    static constexpr const char* k[] = {"data_fairness", "prediction_unconstrained",
                                        "prediction_fair"};
    return k[r];
  }
  static const char* condition_label(std::size_t r) {
    static constexpr const char* k[] = {"Data fairness", "Prediction (unconstrained)",
                                        "Prediction (fair)"};
    return k[r];
  }
  static const char* source_key(std::size_t c) {
    static constexpr const char* k[] = {"real", "synthetic"};
    return k[c];
  }
  static const char* source_label(std::size_t c) {
    static constexpr const char* k[] = {"Real", "Synthetic"};
    return k[c];
  }

  GridCell& cell(std::size_t r, std::size_t c) { return cells.at(r).at(c); }
  const GridCell& cell(std::size_t r, std::size_t c) const { return cells.at(r).at(c); }

  void set(std::size_t r, std::size_t c, FairnessDecomposition d) {
    cells.at(r).at(c) = GridCell{true, std::move(d)};
  }

  std::size_t present_count() const {
    std::size_t n = 0;
    for (const auto& row : cells) {
      for (const auto& cell : row) n += cell.present ? 1 : 0;
    }
    return n;
  }
  bool any_present() const { return present_count() > 0; }

  nlohmann::json to_json() const {
    nlohmann::json body;
    for (std::size_t r = 0; r < kConditionCount; ++r) {
      nlohmann::json row;
      for (std::size_t c = 0; c < kSourceCount; ++c) {
        row[source_key(c)] =
            cells[r][c].present ? cells[r][c].value.to_json() : nlohmann::json(nullptr);
      }
      body[condition_key(r)] = std::move(row);
    }
    return nlohmann::json{{"version", version}, {"seed", seed}, {"cells", std::move(body)}};
  }

  static EvaluationGrid from_json(const nlohmann::json& j) {
    EvaluationGrid g;
    g.version = j.value("version", std::string(kVersion));
    g.seed = j.value("seed", std::uint64_t{0});
    const auto& body = j.at("cells");
    for (std::size_t r = 0; r < kConditionCount; ++r) {
      if (!body.contains(condition_key(r))) continue;
      const auto& row = body[condition_key(r)];
      for (std::size_t c = 0; c < kSourceCount; ++c) {
        if (!row.contains(source_key(c)) || row[source_key(c)].is_null()) continue;
        g.set(r, c, FairnessDecomposition::from_json(row[source_key(c)]));
      }
    }
    return g;
  }
};

enum class ReportFormat { json, csv, markdown, svg };

namespace detail {

inline std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string svg_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  std::string s(buf);
  // trim trailing zeros for stable, compact coordinates
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

inline const EffectStat* grid_effect(const GridCell& cell, std::size_t metric) {
  if (!cell.present) return nullptr;
  switch (metric) {
    case 0: return &cell.value.tv;
    case 1: return &cell.value.de;
    case 2: return &cell.value.ie;
    default: return &cell.value.se;
  }
}

inline constexpr const char* kMetricNames[] = {"TV", "DE", "IE", "SE"};

}  // namespace detail

inline std::string render_markdown(const EvaluationGrid& g) {
  std::string out;
  out += "| Condition | Data | TV | DE | IE | SE |\n";
  out += "| --- | --- | ---: | ---: | ---: | ---: |\n";
  for (std::size_t r = 0; r < EvaluationGrid::kConditionCount; ++r) {
    for (std::size_t c = 0; c < EvaluationGrid::kSourceCount; ++c) {
      out += "| ";
      out += EvaluationGrid::condition_label(r);
      out += " | ";
      out += EvaluationGrid::source_label(c);
      for (std::size_t m = 0; m < 4; ++m) {
        const EffectStat* e = detail::grid_effect(g.cell(r, c), m);
        out += " | ";
        out += e == nullptr ? "n/a"
                            : detail::fixed4(e->est) + " \xC2\xB1 " + detail::fixed4(e->sd);
      }
      out += " |\n";
    }
  }
  return out;
}

inline std::string render_csv_table(const EvaluationGrid& g) {
  std::string out = "condition,data,tv_est,tv_sd,de_est,de_sd,ie_est,ie_sd,se_est,se_sd\n";
  for (std::size_t r = 0; r < EvaluationGrid::kConditionCount; ++r) {
    for (std::size_t c = 0; c < EvaluationGrid::kSourceCount; ++c) {
      out += EvaluationGrid::condition_key(r);
      out += ',';
      out += EvaluationGrid::source_key(c);
      for (std::size_t m = 0; m < 4; ++m) {
        const EffectStat* e = detail::grid_effect(g.cell(r, c), m);
        if (e == nullptr) {
          out += ",,";
        } else {
          out += ',' + detail::format_double(e->est) + ',' + detail::format_double(e->sd);
        }
      }
      out += '\n';
    }
  }
  return out;
}

// Grouped bar chart: one group per metric, one bar per grid cell, error bars
// spanning est +- sd. Layout and palette are fixed so identical grids render
// byte-identically.
inline std::string render_svg(const EvaluationGrid& g) {
  constexpr double kWidth = 960.0, kHeight = 480.0;
  constexpr double kLeft = 72.0, kRight = 700.0, kTop = 48.0, kBottom = 420.0;
  static constexpr const char* kPalette[] = {"#3a6ea5", "#9ec1e0", "#d1662c",
                                             "#f2b27e", "#4d8f52", "#a8d5ab"};

  double lo = 0.0, hi = 0.0;
  for (std::size_t r = 0; r < EvaluationGrid::kConditionCount; ++r) {
    for (std::size_t c = 0; c < EvaluationGrid::kSourceCount; ++c) {
      for (std::size_t m = 0; m < 4; ++m) {
        const EffectStat* e = detail::grid_effect(g.cell(r, c), m);
        if (e == nullptr) continue;
        lo = std::min(lo, e->est - e->sd);
        hi = std::max(hi, e->est + e->sd);
      }
    }
  }
  if (hi - lo < 1e-12) {
    lo = -0.05;
    hi = 0.05;
  }
  const double pad = 0.08 * (hi - lo);
  lo -= pad;
  hi += pad;
  const auto y_of = [&](double v) {
    return kBottom - (v - lo) / (hi - lo) * (kBottom - kTop);
  };

  std::string s;
  const auto num = detail::svg_num;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
       num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  s += "<rect width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"#ffffff\"/>\n";
  s += "<text x=\"" + num(kLeft) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" "
       "fill=\"#222\">Causal fairness decomposition (mean with sd error bars)</text>\n";

  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    const double y = y_of(v);
    s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kRight) +
         "\" y2=\"" + num(y) + "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    s += "<text x=\"" + num(kLeft - 8.0) + "\" y=\"" + num(y + 4.0) +
         "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#555\" "
         "text-anchor=\"end\">" +
         detail::fixed3(v) + "</text>\n";
  }
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(y_of(0.0)) + "\" x2=\"" + num(kRight) +
       "\" y2=\"" + num(y_of(0.0)) + "\" stroke=\"#444444\" stroke-width=\"1\"/>\n";

  const double group_w = (kRight - kLeft) / 4.0;
  constexpr double kBarW = 18.0, kBarGap = 3.0;
  const double cluster_w = 6.0 * kBarW + 5.0 * kBarGap;
  for (std::size_t m = 0; m < 4; ++m) {
    const double gx = kLeft + group_w * static_cast<double>(m);
    const double start = gx + (group_w - cluster_w) / 2.0;
    for (std::size_t r = 0; r < EvaluationGrid::kConditionCount; ++r) {
      for (std::size_t c = 0; c < EvaluationGrid::kSourceCount; ++c) {
        const std::size_t slot = r * 2 + c;
        const EffectStat* e = detail::grid_effect(g.cell(r, c), m);
        if (e == nullptr) continue;
        const double x = start + static_cast<double>(slot) * (kBarW + kBarGap);
        const double y0 = y_of(0.0), y1 = y_of(e->est);
        const double top = std::min(y0, y1);
        const double h = std::fabs(y1 - y0);
        if (h > 0.0) {
          s += "<rect x=\"" + num(x) + "\" y=\"" + num(top) + "\" width=\"" + num(kBarW) +
               "\" height=\"" + num(h) + "\" fill=\"" + kPalette[slot] + "\"/>\n";
        }
        const double cx = x + kBarW / 2.0;
        const double ey0 = y_of(e->est - e->sd), ey1 = y_of(e->est + e->sd);
        s += "<line x1=\"" + num(cx) + "\" y1=\"" + num(ey0) + "\" x2=\"" + num(cx) +
             "\" y2=\"" + num(ey1) + "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
        for (double ey : {ey0, ey1}) {
          s += "<line x1=\"" + num(cx - 4.0) + "\" y1=\"" + num(ey) + "\" x2=\"" +
               num(cx + 4.0) + "\" y2=\"" + num(ey) +
               "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
        }
      }
    }
    s += "<text x=\"" + num(gx + group_w / 2.0) + "\" y=\"" + num(kBottom + 24.0) +
         "\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#222\" "
         "text-anchor=\"middle\">" +
         detail::kMetricNames[m] + "</text>\n";
  }

  for (std::size_t r = 0; r < EvaluationGrid::kConditionCount; ++r) {
    for (std::size_t c = 0; c < EvaluationGrid::kSourceCount; ++c) {
      const std::size_t slot = r * 2 + c;
      const double ly = kTop + 14.0 + static_cast<double>(slot) * 22.0;
      s += "<rect x=\"" + num(kRight + 16.0) + "\" y=\"" + num(ly - 10.0) +
           "\" width=\"14\" height=\"14\" fill=\"" + kPalette[slot] + "\"/>\n";
      s += "<text x=\"" + num(kRight + 36.0) + "\" y=\"" + num(ly + 1.0) +
           "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222\">" +
           std::string(EvaluationGrid::condition_label(r)) + " / " +
           EvaluationGrid::source_label(c) + "</text>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UnwritableOutputError("cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  if (!out.good()) throw UnwritableOutputError("write to '" + path + "' failed");
}

// Writes the requested renderings into `dir` (grid.json, table.csv, table.md,
// chart.svg) and returns the paths written.
inline std::vector<std::string> render_report(const EvaluationGrid& g,
                                              const std::set<ReportFormat>& formats,
                                              const std::string& dir) {
  if (!g.any_present()) throw ConfigError("report requires at least one populated grid cell");
  std::vector<std::string> written;
  const std::string base = dir.empty() ? std::string(".") : dir;
  const auto emit = [&](ReportFormat f, const char* name, const std::string& content) {
    if (formats.count(f) == 0) return;
    const std::string path = base + "/" + name;
    write_text_file(path, content);
    written.push_back(path);
  };
  emit(ReportFormat::json, "grid.json", g.to_json().dump(2) + "\n");
  emit(ReportFormat::csv, "table.csv", render_csv_table(g));
  emit(ReportFormat::markdown, "table.md", render_markdown(g));
  emit(ReportFormat::svg, "chart.svg", render_svg(g));
  return written;
}

}  // namespace fairsyn
