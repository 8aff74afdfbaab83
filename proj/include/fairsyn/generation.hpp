#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairsyn/csv.hpp"
#include "fairsyn/error.hpp"
#include "fairsyn/logistic.hpp"
#include "fairsyn/metrics.hpp"
#include "fairsyn/rng.hpp"
#include "fairsyn/sfm.hpp"
#include "fairsyn/table.hpp"
#include "fairsyn/transport.hpp"

namespace fairsyn {

enum class Backend { statistical, llm };

inline const char* to_string(Backend b) {
  return b == Backend::statistical ? "statistical" : "llm";
}

inline Backend backend_from_string(const std::string& s) {
  if (s == "statistical") return Backend::statistical;
  if (s == "llm") return Backend::llm;
  throw ConfigError("unknown backend '" + s + "'");
}

struct LlmConfig {
  std::string endpoint_url;
  std::string model_id = "local-model";
  double temperature = 0.7;
  std::size_t max_tokens = 2048;
  std::string api_key_env_name;
};

struct GenerationConfig {
  Backend backend = Backend::statistical;
  std::size_t target_rows = 1000;
  std::size_t batch_size = 1000;
  std::size_t max_iterations = 10;
  double fairness_tolerance = 0.10;
  double fidelity_tolerance = 0.10;
  std::size_t self_consistency_k = 3;
  std::size_t exemplars_per_prompt = 10;
  std::uint64_t seed = 0;
  LlmConfig llm;

  void validate() const {
    if (fairness_tolerance <= 0.0 || fairness_tolerance > 1.0) {
      throw ConfigError("fairness_tolerance must be in (0, 1]");
    }
    if (fidelity_tolerance <= 0.0 || fidelity_tolerance > 1.0) {
      throw ConfigError("fidelity_tolerance must be in (0, 1]");
    }
    if (target_rows > 0 && (batch_size == 0 || batch_size > target_rows)) {
      throw ConfigError("batch_size must be in [1, target_rows]");
    }
    if (self_consistency_k < 1) throw ConfigError("self_consistency_k must be >= 1");
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"backend", to_string(backend)},
                          {"target_rows", target_rows},
                          {"batch_size", batch_size},
                          {"max_iterations", max_iterations},
                          {"fairness_tolerance", fairness_tolerance},
                          {"fidelity_tolerance", fidelity_tolerance},
                          {"self_consistency_k", self_consistency_k},
                          {"exemplars_per_prompt", exemplars_per_prompt},
                          {"seed", seed},
                          {"llm",
                           {{"endpoint_url", llm.endpoint_url},
                            {"model_id", llm.model_id},
                            {"temperature", llm.temperature},
                            {"max_tokens", llm.max_tokens},
                            {"api_key_env_name", llm.api_key_env_name}}}};
  }

  static GenerationConfig from_json(const nlohmann::json& j) {
    GenerationConfig c;
    c.backend = backend_from_string(j.value("backend", std::string("statistical")));
    c.target_rows = j.value("target_rows", c.target_rows);
    c.batch_size = j.value("batch_size", std::min(c.batch_size, std::max<std::size_t>(c.target_rows, 1)));
    if (j.contains("target_rows") && !j.contains("batch_size")) c.batch_size = std::max<std::size_t>(c.target_rows, 1);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.fairness_tolerance = j.value("fairness_tolerance", c.fairness_tolerance);
    c.fidelity_tolerance = j.value("fidelity_tolerance", c.fidelity_tolerance);
    c.self_consistency_k = j.value("self_consistency_k", c.self_consistency_k);
    c.exemplars_per_prompt = j.value("exemplars_per_prompt", c.exemplars_per_prompt);
    c.seed = j.value("seed", c.seed);
    if (j.contains("llm")) {
      const auto& l = j.at("llm");
      c.llm.endpoint_url = l.value("endpoint_url", std::string());
      c.llm.model_id = l.value("model_id", c.llm.model_id);
      c.llm.temperature = l.value("temperature", c.llm.temperature);
      c.llm.max_tokens = l.value("max_tokens", c.llm.max_tokens);
      c.llm.api_key_env_name = l.value("api_key_env_name", std::string());
    }
    return c;
  }
};

struct FidelityCheck {
  std::string column;
  std::string kind;  // "mean" | "frequency"
  double real = 0.0;
  double syn = 0.0;
  double deviation = 0.0;
  bool pass = true;

  nlohmann::json to_json() const {
    return nlohmann::json{{"column", column}, {"kind", kind},         {"real", real},
                          {"syn", syn},       {"deviation", deviation}, {"pass", pass}};
  }
};

struct EffectCheck {
  std::string name;  // "tv" | "de" | "ie" | "se"
  double real = 0.0;
  double syn = 0.0;
  double deviation = 0.0;
  bool pass = true;
  bool advisory = false;

  nlohmann::json to_json() const {
    return nlohmann::json{{"name", name},           {"real", real}, {"syn", syn},
                          {"deviation", deviation}, {"pass", pass}, {"advisory", advisory}};
  }
};

struct ConstraintVerdict {
  bool pass = false;
  std::vector<FidelityCheck> fidelity;
  std::vector<EffectCheck> fairness;

  std::size_t violation_count() const {
    std::size_t n = 0;
    for (const auto& f : fidelity) {
      if (!f.pass) ++n;
    }
    for (const auto& e : fairness) {
      if (!e.pass && !e.advisory) ++n;
    }
    return n;
  }
};

struct RefinementHints {
  bool has_targets = false;
  double target_tv = 0.0;
  double target_de = 0.0;
  double target_ie = 0.0;
  std::vector<FidelityCheck> fidelity_violations;
  std::vector<EffectCheck> fairness_violations;
};

struct PromptBundle {
  std::string system_text;
  std::vector<std::string> exemplars;
  std::string constraint_text;
  std::size_t k = 3;
  Table prototype;  // empty table carrying schema + codecs for reply parsing
  std::size_t dup_cap = 1;
  std::size_t batch_rows = 0;
};

struct FairnessTilt {
  double target_de = 0.0;
};

namespace detail {

inline std::string decode_cell(const Table& t, std::size_t r, std::size_t c) {
  const auto& sch = t.schema()[c];
  if (sch.kind == ColumnKind::continuous) {
    double v = t.cell(r, c);
    const auto& cd = t.codec(c);
    if (cd.scaled) v = cd.scale_min + v * (cd.scale_max - cd.scale_min);
    return detail::format_double(v);
  }
  return t.level_label(c, t.cell(r, c));
}

inline bool column_ignored(const SfmSpec& s, const std::string& name) {
  for (const auto& n : s.ignore) {
    if (n == name) return true;
  }
  return false;
}

// Row signature with continuous values rounded to `decimals`; the unit of
// self-consistency voting and deduplication.
inline std::string row_signature(const Table& t, std::size_t r, int decimals) {
  std::string sig;
  const double scale = std::pow(10.0, decimals);
  for (std::size_t c = 0; c < t.column_count(); ++c) {
    if (c) sig += '|';
    if (t.schema()[c].kind == ColumnKind::continuous) {
      sig += detail::format_double(std::round(t.cell(r, c) * scale) / scale);
    } else {
      sig += std::to_string(static_cast<long long>(std::llround(t.cell(r, c))));
    }
  }
  return sig;
}

inline std::size_t max_row_multiplicity(const Table& t) {
  std::map<std::string, std::size_t> counts;
  std::size_t mx = t.row_count() > 0 ? 1 : 0;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    const std::size_t c = ++counts[row_signature(t, r, 6)];
    mx = std::max(mx, c);
  }
  return mx;
}

inline std::size_t scaled_dup_cap(const Table& t_real, std::size_t syn_rows) {
  if (t_real.row_count() == 0) return 1;
  const double scale =
      static_cast<double>(std::max<std::size_t>(syn_rows, 1)) / static_cast<double>(t_real.row_count());
  const double cap = std::ceil(static_cast<double>(max_row_multiplicity(t_real)) * std::max(scale, 1.0));
  return std::max<std::size_t>(1, static_cast<std::size_t>(cap));
}

}  // namespace detail

// k rows balancing the four (X, Y) cells as evenly as availability allows;
// within-cell picks are a seeded shuffle, so the result is deterministic. A
// cell with no rows sets the warning flag and its share spills to the others.
inline Table curate(const Table& t, const SfmSpec& s, std::size_t k, std::uint64_t seed,
                    bool* degenerate_warning = nullptr) {
  for (const auto& v : validate_sfm(t, s)) {
    if (v.kind != ViolationKind::unassigned_column) {
      throw ConfigError(std::string(to_string(v.kind)) + ": " + v.message);
    }
  }
  if (k > t.row_count()) throw ConfigError("curate: k exceeds the row count");
  const std::size_t cx = t.column_index(s.x);
  const std::size_t cy = t.column_index(s.y);
  const double x1c = t.level_code(cx, s.x1);
  const double ypc = t.level_code(cy, s.y_positive);
  std::vector<std::vector<std::size_t>> cells(4);
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    const int xi = t.cell(r, cx) == x1c ? 1 : 0;
    const int yi = t.cell(r, cy) == ypc ? 1 : 0;
    cells[static_cast<std::size_t>(xi * 2 + yi)].push_back(r);
  }
  bool warn = false;
  for (const auto& c : cells) {
    if (c.empty()) warn = true;
  }
  if (degenerate_warning) *degenerate_warning = warn;

  std::size_t alloc[4] = {0, 0, 0, 0};
  std::size_t rem = k;
  while (rem > 0) {
    bool progressed = false;
    for (std::size_t c = 0; c < 4 && rem > 0; ++c) {
      if (alloc[c] < cells[c].size()) {
        ++alloc[c];
        --rem;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  std::vector<std::size_t> pick;
  pick.reserve(k);
  for (std::size_t c = 0; c < 4; ++c) {
    Rng rng(mix_seed(seed, 0xCE55ULL, c));
    auto idx = cells[c];
    rng.shuffle(idx);
    pick.insert(pick.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(alloc[c]));
  }
  return t.select_rows(pick);
}

namespace detail {

// curate() with cell quotas weighted toward under-represented (X, Y) cells;
// the adapt_data refinement step.
inline Table curate_weighted(const Table& t, const SfmSpec& s, std::size_t k,
                             std::uint64_t seed, const double deficits[4]) {
  const std::size_t cx = t.column_index(s.x);
  const std::size_t cy = t.column_index(s.y);
  const double x1c = t.level_code(cx, s.x1);
  const double ypc = t.level_code(cy, s.y_positive);
  std::vector<std::vector<std::size_t>> cells(4);
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    const int xi = t.cell(r, cx) == x1c ? 1 : 0;
    const int yi = t.cell(r, cy) == ypc ? 1 : 0;
    cells[static_cast<std::size_t>(xi * 2 + yi)].push_back(r);
  }
  double wsum = 0.0;
  double w[4];
  for (std::size_t c = 0; c < 4; ++c) {
    w[c] = std::max(deficits[c], 0.0) + 0.05;
    wsum += w[c];
  }
  std::size_t alloc[4];
  double frac[4];
  std::size_t used = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    const double want = static_cast<double>(k) * w[c] / wsum;
    alloc[c] = std::min(cells[c].size(), static_cast<std::size_t>(want));
    frac[c] = want - std::floor(want);
    used += alloc[c];
  }
  // Largest-remainder top-up, then spill whatever capacity allows.
  std::vector<std::size_t> order{0, 1, 2, 3};
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (frac[a] != frac[b]) return frac[a] > frac[b];
    return a < b;
  });
  for (std::size_t c : order) {
    if (used >= k) break;
    if (alloc[c] < cells[c].size()) {
      ++alloc[c];
      ++used;
    }
  }
  while (used < k) {
    bool progressed = false;
    for (std::size_t c = 0; c < 4 && used < k; ++c) {
      if (alloc[c] < cells[c].size()) {
        ++alloc[c];
        ++used;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  std::vector<std::size_t> pick;
  for (std::size_t c = 0; c < 4; ++c) {
    Rng rng(mix_seed(seed, 0xCE55ULL, c));
    auto idx = cells[c];
    rng.shuffle(idx);
    pick.insert(pick.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(alloc[c]));
  }
  return t.select_rows(pick);
}

}  // namespace detail

// Deterministic prompt assembly: schema block, exemplar block, constraint
// block, output-format block, plus one corrective clause per violation when
// feedback is present.
inline PromptBundle build_prompt(const Table& curated, const SfmSpec& s,
                                 const GenerationConfig& cfg,
                                 const RefinementHints* feedback = nullptr) {
  if (curated.row_count() == 0) throw ConfigError("build_prompt: curated table is empty");
  PromptBundle p;
  p.k = cfg.self_consistency_k;
  p.batch_rows = cfg.batch_size;
  p.prototype = curated.select_rows({});
  p.dup_cap = detail::scaled_dup_cap(curated, cfg.batch_size);

  std::string schema_block = "You produce synthetic tabular data rows. Columns:\n";
  for (std::size_t c = 0; c < curated.column_count(); ++c) {
    const auto& sch = curated.schema()[c];
    if (detail::column_ignored(s, sch.name)) continue;
    schema_block += "- " + sch.name;
    if (sch.kind == ColumnKind::continuous) {
      const auto& cd = curated.codec(c);
      double lo = cd.scale_min, hi = cd.scale_max;
      if (!cd.scaled && curated.row_count() > 0) {
        lo = *std::min_element(curated.column(c).begin(), curated.column(c).end());
        hi = *std::max_element(curated.column(c).begin(), curated.column(c).end());
      }
      schema_block += " (continuous; range [" + detail::format_double(lo) + ", " + detail::format_double(hi) + "])";
    } else if (sch.kind == ColumnKind::binary) {
      schema_block += " (binary; levels 0|1)";
    } else {
      schema_block += " (categorical; levels ";
      for (std::size_t l = 0; l < sch.levels.size(); ++l) {
        if (l) schema_block += '|';
        schema_block += sch.levels[l];
      }
      schema_block += ")";
    }
    schema_block += '\n';
  }
  schema_block +=
      "Output format: one JSON object per line, keys exactly the column names, "
      "no prose, no markdown.";
  p.system_text = schema_block;

  const std::size_t n_ex = std::min(cfg.exemplars_per_prompt, curated.row_count());
  for (std::size_t r = 0; r < n_ex; ++r) {
    std::string line;
    for (std::size_t c = 0; c < curated.column_count(); ++c) {
      if (detail::column_ignored(s, curated.schema()[c].name)) continue;
      if (!line.empty()) line += ", ";
      line += curated.schema()[c].name + "=" + detail::decode_cell(curated, r, c);
    }
    p.exemplars.push_back(line);
  }

  std::string ct = "Constraints: protected attribute '" + s.x + "' (comparing " + s.x0 +
                   " vs " + s.x1 + "), outcome '" + s.y + "' (positive level " + s.y_positive +
                   ").";
  if (feedback && feedback->has_targets) {
    ct += " Target causal effects measured on the real data: tv=" +
          detail::format_double(feedback->target_tv) + ", de=" + detail::format_double(feedback->target_de) +
          ", ie=" + detail::format_double(feedback->target_ie) + ".";
  }
  ct += " Keep every effect and every column distribution within " +
        detail::format_double(cfg.fairness_tolerance * 100.0) + "% relative deviation of the real data.";
  if (feedback) {
    for (const auto& f : feedback->fidelity_violations) {
      ct += "\nAdjust column '" + f.column + "': bring its " + f.kind + " toward " +
            detail::format_double(f.real) + " (currently " + detail::format_double(f.syn) + ").";
    }
    for (const auto& e : feedback->fairness_violations) {
      ct += "\nBring the effect '" + e.name + "' toward " + detail::format_double(e.real) +
            " (currently " + detail::format_double(e.syn) + ").";
    }
  }
  p.constraint_text = ct;
  return p;
}

// Parses k sampled completions as JSON-lines rows, keeps a row only when it
// is schema-valid and its discretized signature shows up in a majority of
// completions, and caps duplicate multiplicity at the real-data-derived cap.
// rejects counts distinct discarded candidates (invalid line texts plus
// majority-failed signatures).
inline std::pair<Table, std::size_t> generate_batch_llm(const PromptBundle& p,
                                                        const GenerationConfig& cfg,
                                                        CompletionTransport& transport) {
  CompletionRequest req;
  req.model = cfg.llm.model_id;
  req.temperature = cfg.llm.temperature;
  req.max_tokens = cfg.llm.max_tokens;
  req.n = p.k;
  std::string user = "Exemplar rows:\n";
  for (const auto& e : p.exemplars) user += e + '\n';
  user += '\n' + p.constraint_text + '\n';
  user += "Generate " + std::to_string(p.batch_rows) +
          " new rows now, one JSON object per line.";
  req.messages = {{"system", p.system_text}, {"user", user}};

  const CompletionResponse resp = transport.complete(req);
  const std::size_t k = resp.contents.size();

  const Table& proto = p.prototype;
  struct Candidate {
    std::vector<double> values;
    std::vector<std::size_t> per_completion;
    std::size_t first_seen = 0;  // insertion order for deterministic output
  };
  std::map<std::string, Candidate> candidates;
  std::set<std::string> invalid_lines;
  std::size_t order_counter = 0;
  bool any_parseable = false;

  for (std::size_t ci = 0; ci < k; ++ci) {
    std::istringstream lines(resp.contents[ci]);
    std::string line;
    while (std::getline(lines, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      std::size_t start = 0;
      while (start < line.size() && line[start] == ' ') ++start;
      line = line.substr(start);
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) {
        invalid_lines.insert(line);
        continue;
      }
      any_parseable = true;
      std::vector<double> values(proto.column_count(), 0.0);
      bool valid = true;
      for (std::size_t c = 0; c < proto.column_count() && valid; ++c) {
        const auto& sch = proto.schema()[c];
        if (!j.contains(sch.name)) {
          valid = false;
          break;
        }
        const auto& v = j.at(sch.name);
        if (sch.kind == ColumnKind::continuous) {
          double num;
          if (v.is_number()) {
            num = v.get<double>();
          } else if (v.is_string()) {
            if (!detail::parse_double(v.get<std::string>(), num)) {
              valid = false;
              break;
            }
          } else {
            valid = false;
            break;
          }
          const auto& cd = proto.codec(c);
          if (cd.scaled && cd.scale_max > cd.scale_min) {
            num = (num - cd.scale_min) / (cd.scale_max - cd.scale_min);
          }
          values[c] = num;
        } else {
          std::string label;
          if (v.is_string()) {
            label = v.get<std::string>();
          } else if (v.is_number_integer()) {
            label = std::to_string(v.get<long long>());
          } else if (v.is_boolean()) {
            label = v.get<bool>() ? "1" : "0";
          } else {
            valid = false;
            break;
          }
          try {
            values[c] = proto.level_code(c, label);
          } catch (const Error&) {
            valid = false;
          }
        }
      }
      if (!valid) {
        invalid_lines.insert(line);
        continue;
      }
      // Signature over the encoded values, continuous rounded to 3 decimals.
      std::string sig;
      for (std::size_t c = 0; c < proto.column_count(); ++c) {
        if (c) sig += '|';
        if (proto.schema()[c].kind == ColumnKind::continuous) {
          sig += detail::format_double(std::round(values[c] * 1000.0) / 1000.0);
        } else {
          sig += std::to_string(static_cast<long long>(std::llround(values[c])));
        }
      }
      auto [it, inserted] = candidates.try_emplace(sig);
      if (inserted) {
        it->second.values = values;
        it->second.per_completion.assign(k, 0);
        it->second.first_seen = order_counter++;
      }
      ++it->second.per_completion[ci];
    }
  }
  if (!any_parseable) {
    throw MalformedResponseError("no completion line parsed as a JSON object");
  }

  const std::size_t majority = (k + 1) / 2;
  std::vector<const Candidate*> kept;
  std::size_t rejects = invalid_lines.size();
  for (const auto& [sig, cand] : candidates) {
    std::size_t present = 0;
    for (std::size_t c : cand.per_completion) {
      if (c > 0) ++present;
    }
    if (present >= majority) {
      kept.push_back(&cand);
    } else {
      ++rejects;
    }
  }
  std::sort(kept.begin(), kept.end(),
            [](const Candidate* a, const Candidate* b) { return a->first_seen < b->first_seen; });

  Table out = proto;
  out.set_provenance(Provenance::synthetic);
  for (const Candidate* cand : kept) {
    std::size_t mult = 0;
    for (std::size_t c : cand->per_completion) mult = std::max(mult, c);
    mult = std::min(mult, p.dup_cap);
    for (std::size_t i = 0; i < mult; ++i) out.append_row(cand->values);
  }
  return {std::move(out), rejects};
}

// Chain-rule generator fitted once on the real table: confounders (plus any
// unassigned columns) are resampled jointly from a donor row, X follows its
// confounder-stratum frequency, mediators are copied as a block from a
// same-(X, stratum) donor with jitter on continuous columns, and the outcome
// follows a logistic model whose X coefficient can be exponentially tilted to
// hit a target direct effect. Sampling enforces largest-remainder (X, Y) cell
// quotas matching the real shares.
class ChainModel {
 public:
  static ChainModel fit(const Table& t_real, const SfmSpec& s, std::size_t z_bins = 4) {
    ChainModel m;
    m.real_ = t_real;
    m.n_real_ = t_real.row_count();
    if (m.n_real_ == 0) throw ConfigError("generator needs a nonempty real table");
    const detail::Frame frame = detail::build_frame(t_real, s);

    const std::size_t cx = t_real.column_index(s.x);
    const std::size_t cy = t_real.column_index(s.y);
    m.cx_ = cx;
    m.cy_ = cy;
    m.x0_code_ = t_real.level_code(cx, s.x0);
    m.x1_code_ = t_real.level_code(cx, s.x1);
    m.y_pos_code_ = t_real.level_code(cy, s.y_positive);
    m.y_neg_code_ = m.y_pos_code_ == 0.0 ? 1.0 : 0.0;
    for (const auto& n : s.w) m.w_cols_.push_back(t_real.column_index(n));
    for (const auto& n : s.z) m.z_cols_.push_back(t_real.column_index(n));

    // Confounder bin edges; the same binning is used for fitting pools and
    // for stratifying sampled rows.
    for (std::size_t zc : m.z_cols_) {
      if (t_real.schema()[zc].kind == ColumnKind::continuous) {
        std::vector<double> sorted = t_real.column(zc);
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> edges;
        for (std::size_t k = 1; k < z_bins; ++k) {
          edges.push_back(sorted[sorted.size() * k / z_bins]);
        }
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        m.z_cards_.push_back(edges.size() + 1);
        m.z_edges_.push_back(std::move(edges));
      } else {
        m.z_edges_.push_back({});
        m.z_cards_.push_back(t_real.level_count(zc));
      }
    }
    m.n_strata_ = 1;
    for (std::size_t card : m.z_cards_) m.n_strata_ *= card;

    std::vector<std::size_t> stratum(m.n_real_);
    std::vector<double> row(t_real.column_count());
    for (std::size_t r = 0; r < m.n_real_; ++r) {
      for (std::size_t c = 0; c < row.size(); ++c) row[c] = t_real.cell(r, c);
      stratum[r] = m.stratum_of_row(row);
    }

    m.x1_share_.assign(m.n_strata_, -1.0);
    std::vector<std::size_t> cnt(m.n_strata_, 0), cnt1(m.n_strata_, 0);
    double g1 = 0.0;
    for (std::size_t r = 0; r < m.n_real_; ++r) {
      ++cnt[stratum[r]];
      if (frame.x[r]) {
        ++cnt1[stratum[r]];
        g1 += 1.0;
      }
    }
    m.global_x1_share_ = g1 / static_cast<double>(m.n_real_);
    for (std::size_t st = 0; st < m.n_strata_; ++st) {
      if (cnt[st] > 0) {
        m.x1_share_[st] = static_cast<double>(cnt1[st]) / static_cast<double>(cnt[st]);
      }
    }

    m.rows_by_cell_.assign(m.n_strata_ * 2, {});
    for (std::size_t r = 0; r < m.n_real_; ++r) {
      const std::size_t g = static_cast<std::size_t>(frame.x[r]);
      m.rows_by_cell_[stratum[r] * 2 + g].push_back(r);
      m.rows_by_x_[g].push_back(r);
    }

    m.lm_ = fit_logistic(frame.logit_rows, frame.y);

    // Base linear predictors at x = 0 for the real x0 rows; the tilt solver
    // evaluates the model-implied direct effect against these.
    for (std::size_t r = 0; r < m.n_real_; ++r) {
      if (frame.x[r] != 0) continue;
      double z = m.lm_.beta[0];
      const auto& lrow = frame.logit_rows[r];
      for (std::size_t j = 0; j < lrow.size(); ++j) z += m.lm_.beta[j + 1] * lrow[j];
      m.base0_.push_back(z - m.lm_.beta[1] * lrow[0]);
    }
    if (m.base0_.empty()) throw DegenerateGroupError("no rows at the x0 level");

    // Column stats for jitter and clipping.
    m.col_min_.resize(t_real.column_count());
    m.col_max_.resize(t_real.column_count());
    m.jitter_sd_.assign(t_real.column_count(), 0.0);
    for (std::size_t c = 0; c < t_real.column_count(); ++c) {
      const auto& col = t_real.column(c);
      m.col_min_[c] = *std::min_element(col.begin(), col.end());
      m.col_max_[c] = *std::max_element(col.begin(), col.end());
      if (t_real.schema()[c].kind == ColumnKind::continuous) {
        double mean = 0.0;
        for (double v : col) mean += v;
        mean /= static_cast<double>(col.size());
        double ss = 0.0;
        for (double v : col) ss += (v - mean) * (v - mean);
        const double sd = std::sqrt(ss / static_cast<double>(std::max<std::size_t>(col.size() - 1, 1)));
        m.jitter_sd_[c] = 0.9 * sd * std::pow(static_cast<double>(col.size()), -0.2);
      }
    }

    double cellcnt[4] = {0, 0, 0, 0};
    for (std::size_t r = 0; r < m.n_real_; ++r) {
      cellcnt[static_cast<std::size_t>(frame.x[r] * 2 + frame.y[r])] += 1.0;
    }
    for (std::size_t c = 0; c < 4; ++c) {
      m.cell_share_[c] = cellcnt[c] / static_cast<double>(m.n_real_);
    }
    return m;
  }

  // Strata seen at sampling time with no same-X donor rows (served from the
  // X-marginal pool instead).
  std::size_t fallback_cells() const { return fallbacks_; }

  double model_direct_effect(double tau) const { return model_de(tau); }

  Table sample(std::size_t n, std::uint64_t seed,
               const std::optional<FairnessTilt>& tilt = std::nullopt) const {
    Table out = real_.select_rows({});
    out.set_provenance(Provenance::synthetic);
    if (n == 0) return out;

    const double tau = tilt ? solve_tilt(tilt->target_de) : 0.0;

    // (X, Y) cell shares: real counts, or the tilted model's implied joint
    // when a tilt is active. Logistic calibration makes the two agree at a
    // zero tilt; quotas from the real counts would cancel the tilt.
    double share[4];
    if (tilt) {
      double acc[4] = {0.0, 0.0, 0.0, 0.0};
      std::vector<double> rrow(real_.column_count());
      for (std::size_t r = 0; r < n_real_; ++r) {
        for (std::size_t c = 0; c < rrow.size(); ++c) rrow[c] = real_.cell(r, c);
        const int xi = rrow[cx_] == x1_code_ ? 1 : 0;
        const double p = sigmoid(linear_predictor(rrow, xi) + tau * xi);
        acc[xi * 2 + 1] += p;
        acc[xi * 2] += 1.0 - p;
      }
      for (std::size_t c = 0; c < 4; ++c) share[c] = acc[c] / static_cast<double>(n_real_);
    } else {
      for (std::size_t c = 0; c < 4; ++c) share[c] = cell_share_[c];
    }

    // Largest-remainder cell quotas.
    std::size_t quota[4];
    double frac[4];
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      const double want = static_cast<double>(n) * share[c];
      quota[c] = static_cast<std::size_t>(want);
      frac[c] = want - static_cast<double>(quota[c]);
      assigned += quota[c];
    }
    std::vector<std::size_t> order{0, 1, 2, 3};
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (frac[a] != frac[b]) return frac[a] > frac[b];
      return a < b;
    });
    for (std::size_t i = 0; assigned < n; ++i) {
      ++quota[order[i % 4]];
      ++assigned;
    }

    Rng rng(mix_seed(seed, 0x5EEDULL));
    std::size_t filled[4] = {0, 0, 0, 0};
    std::size_t accepted = 0;
    std::size_t attempts = 0;
    const std::size_t max_attempts = 200 * n + 1000;
    std::vector<double> row(real_.column_count());
    while (accepted < n && attempts < max_attempts) {
      ++attempts;
      draw_row(rng, row, tau, -1, -1);
      const int xi = row[cx_] == x1_code_ ? 1 : 0;
      const int yi = row[cy_] == y_pos_code_ ? 1 : 0;
      const auto cell = static_cast<std::size_t>(xi * 2 + yi);
      if (filled[cell] >= quota[cell]) continue;
      out.append_row(row);
      ++filled[cell];
      ++accepted;
    }
    // Guaranteed fill for starved cells: force X and Y to the needed values.
    for (std::size_t cell = 0; cell < 4 && accepted < n; ++cell) {
      while (filled[cell] < quota[cell] && accepted < n) {
        draw_row(rng, row, tau, static_cast<int>(cell / 2), static_cast<int>(cell % 2));
        out.append_row(row);
        ++filled[cell];
        ++accepted;
      }
    }
    return out;
  }

 private:
  void draw_row(Rng& rng, std::vector<double>& row, double tau, int force_x,
                int force_y) const {
    // Confounder block (and any unassigned columns) from one donor row.
    const std::size_t zd = rng.index(n_real_);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = real_.cell(zd, c);
    for (std::size_t zc : z_cols_) {
      if (real_.schema()[zc].kind == ColumnKind::continuous && jitter_sd_[zc] > 0.0) {
        row[zc] = std::clamp(row[zc] + rng.normal() * jitter_sd_[zc], col_min_[zc], col_max_[zc]);
      }
    }
    const std::size_t st = stratum_of_row(row);

    int xi;
    if (force_x >= 0) {
      xi = force_x;
      rng.uniform();  // keep the stream aligned with the unforced path
    } else {
      const double p1 = x1_share_[st] >= 0.0 ? x1_share_[st] : global_x1_share_;
      xi = rng.uniform() < p1 ? 1 : 0;
    }
    row[cx_] = xi ? x1_code_ : x0_code_;

    const auto& pool = rows_by_cell_[st * 2 + static_cast<std::size_t>(xi)];
    const auto& donors = pool.empty() ? rows_by_x_[xi] : pool;
    if (pool.empty()) ++fallbacks_;
    const std::size_t wd = donors[rng.index(donors.size())];
    for (std::size_t wc : w_cols_) {
      row[wc] = real_.cell(wd, wc);
      if (real_.schema()[wc].kind == ColumnKind::continuous && jitter_sd_[wc] > 0.0) {
        row[wc] = std::clamp(row[wc] + rng.normal() * jitter_sd_[wc], col_min_[wc], col_max_[wc]);
      }
    }

    int yi;
    if (force_y >= 0) {
      yi = force_y;
      rng.uniform();
    } else {
      const double p = sigmoid(linear_predictor(row, xi) + tau * xi);
      yi = rng.uniform() < p ? 1 : 0;
    }
    row[cy_] = yi ? y_pos_code_ : y_neg_code_;
  }

  std::size_t stratum_of_row(const std::vector<double>& row) const {
    std::size_t id = 0;
    for (std::size_t i = 0; i < z_cols_.size(); ++i) {
      const double v = row[z_cols_[i]];
      std::size_t b;
      const std::size_t card = z_cards_[i];
      if (!z_edges_[i].empty() || real_.schema()[z_cols_[i]].kind == ColumnKind::continuous) {
        b = 0;
        for (double e : z_edges_[i]) {
          if (v > e) ++b;
        }
      } else {
        b = static_cast<std::size_t>(std::llround(v));
        if (b >= card) b = card - 1;
      }
      id = id * card + b;
    }
    return id;
  }

  // Mirrors the logistic design-row layout: x, then mediators, then
  // confounders, categoricals one-hot with the first level as baseline.
  double linear_predictor(const std::vector<double>& row, int xi) const {
    double z = lm_.beta[0] + lm_.beta[1] * xi;
    std::size_t j = 2;
    auto push = [&](std::size_t col) {
      if (real_.schema()[col].kind == ColumnKind::categorical) {
        const std::size_t levels = real_.level_count(col);
        const auto code = static_cast<std::size_t>(std::llround(row[col]));
        for (std::size_t l = 1; l < levels; ++l) {
          z += lm_.beta[j++] * (code == l ? 1.0 : 0.0);
        }
      } else {
        z += lm_.beta[j++] * row[col];
      }
    };
    for (std::size_t wc : w_cols_) push(wc);
    for (std::size_t zc : z_cols_) push(zc);
    return z;
  }

  double model_de(double tau) const {
    double acc = 0.0;
    for (double b : base0_) {
      acc += sigmoid(b + lm_.beta[1] + tau) - sigmoid(b);
    }
    return acc / static_cast<double>(base0_.size());
  }

  double solve_tilt(double target) const {
    double lo = -30.0, hi = 30.0;
    if (model_de(lo) >= target) return lo;
    if (model_de(hi) <= target) return hi;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (model_de(mid) < target) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  }

  Table real_;
  std::size_t n_real_ = 0;
  std::size_t n_strata_ = 1;
  std::vector<double> x1_share_;
  double global_x1_share_ = 0.5;
  std::vector<std::vector<std::size_t>> rows_by_cell_;
  std::vector<std::size_t> rows_by_x_[2];
  LogisticModel lm_;
  std::vector<double> base0_;
  std::vector<double> col_min_, col_max_, jitter_sd_;
  std::vector<std::vector<double>> z_edges_;
  std::vector<std::size_t> z_cards_;
  std::size_t cx_ = 0, cy_ = 0;
  double x0_code_ = 0.0, x1_code_ = 1.0, y_pos_code_ = 1.0, y_neg_code_ = 0.0;
  std::vector<std::size_t> w_cols_, z_cols_;
  double cell_share_[4] = {0.25, 0.25, 0.25, 0.25};
  mutable std::size_t fallbacks_ = 0;
};

inline Table generate_batch_statistical(const Table& t_real, const SfmSpec& s, std::size_t n,
                                        std::uint64_t seed,
                                        const std::optional<FairnessTilt>& tilt = std::nullopt) {
  return ChainModel::fit(t_real, s).sample(n, seed, tilt);
}

// Fidelity: per-column mean (continuous) or per-level frequency (discrete)
// relative deviation, 0.05 denominator floor. Fairness: relative deviation of
// tv/de/ie point estimates against the real table with the same floor; se is
// reported but advisory. Verdict passes iff every mandatory check passes.
inline ConstraintVerdict check_constraints(const Table& t_syn, const Table& t_real,
                                           const SfmSpec& s, const GenerationConfig& cfg,
                                           const EstimatorConfig& est = {}) {
  if (t_syn.column_count() != t_real.column_count()) {
    throw SchemaMismatchError("tables have different column counts");
  }
  for (std::size_t c = 0; c < t_real.column_count(); ++c) {
    if (t_syn.schema()[c].name != t_real.schema()[c].name ||
        t_syn.schema()[c].kind != t_real.schema()[c].kind) {
      throw SchemaMismatchError("column " + std::to_string(c) + " differs between tables");
    }
  }
  ConstraintVerdict v;
  const double n_syn = static_cast<double>(t_syn.row_count());
  const double n_real = static_cast<double>(t_real.row_count());
  for (std::size_t c = 0; c < t_real.column_count(); ++c) {
    const auto& sch = t_real.schema()[c];
    if (detail::column_ignored(s, sch.name)) continue;
    FidelityCheck fc;
    fc.column = sch.name;
    if (sch.kind == ColumnKind::continuous) {
      fc.kind = "mean";
      double mr = 0.0, ms = 0.0;
      for (double x : t_real.column(c)) mr += x;
      for (double x : t_syn.column(c)) ms += x;
      mr = n_real > 0 ? mr / n_real : 0.0;
      ms = n_syn > 0 ? ms / n_syn : 0.0;
      fc.real = mr;
      fc.syn = ms;
      fc.deviation = std::abs(ms - mr) / std::max(std::abs(mr), 0.05);
    } else {
      fc.kind = "frequency";
      const std::size_t levels = t_real.level_count(c);
      double worst = 0.0, worst_real = 0.0, worst_syn = 0.0;
      for (std::size_t l = 0; l < levels; ++l) {
        double fr = 0.0, fs = 0.0;
        for (double x : t_real.column(c)) {
          if (std::llround(x) == static_cast<long long>(l)) fr += 1.0;
        }
        for (double x : t_syn.column(c)) {
          if (std::llround(x) == static_cast<long long>(l)) fs += 1.0;
        }
        fr = n_real > 0 ? fr / n_real : 0.0;
        fs = n_syn > 0 ? fs / n_syn : 0.0;
        const double dev = std::abs(fs - fr) / std::max(fr, 0.05);
        if (dev >= worst) {
          worst = dev;
          worst_real = fr;
          worst_syn = fs;
        }
      }
      fc.real = worst_real;
      fc.syn = worst_syn;
      fc.deviation = worst;
    }
    fc.pass = fc.deviation <= cfg.fidelity_tolerance;
    v.fidelity.push_back(fc);
  }

  auto effect_check = [&](const char* name, double real, double syn, bool advisory) {
    EffectCheck e;
    e.name = name;
    e.real = real;
    e.syn = syn;
    e.deviation = std::abs(syn - real) / std::max(std::abs(real), 0.05);
    e.advisory = advisory;
    e.pass = e.deviation <= cfg.fairness_tolerance;
    v.fairness.push_back(e);
  };
  try {
    const FairnessDecomposition fr = decompose_point(t_real, s, est);
    const FairnessDecomposition fs = decompose_point(t_syn, s, est);
    effect_check("tv", fr.tv.est, fs.tv.est, false);
    effect_check("de", fr.de.est, fs.de.est, false);
    effect_check("ie", fr.ie.est, fs.ie.est, false);
    effect_check("se", fr.se.est, fs.se.est, true);
  } catch (const Error&) {
    // A synthetic table too degenerate to decompose fails the fairness gate.
    effect_check("tv", 0.0, 0.0, false);
    effect_check("de", 0.0, 0.0, false);
    effect_check("ie", 0.0, 0.0, false);
    for (auto& e : v.fairness) {
      e.deviation = 1e3;
      e.pass = false;
    }
  }
  v.pass = true;
  for (const auto& f : v.fidelity) {
    if (!f.pass) v.pass = false;
  }
  for (const auto& e : v.fairness) {
    if (!e.pass && !e.advisory) v.pass = false;
  }
  return v;
}

enum class LoopAction { accept, refine_prompt, adapt_data, abort };

inline const char* to_string(LoopAction a) {
  switch (a) {
    case LoopAction::accept: return "accept";
    case LoopAction::refine_prompt: return "refine_prompt";
    case LoopAction::adapt_data: return "adapt_data";
    case LoopAction::abort: return "abort";
  }
  return "?";
}

struct IterationRecord {
  std::size_t batch_id = 0;
  std::size_t rows_requested = 0;
  std::size_t rows_valid = 0;
  std::size_t rows_rejected_schema = 0;
  std::size_t accumulated_rows = 0;
  bool evaluated = false;  // constraint check ran (accumulated >= target)
  std::vector<FidelityCheck> fidelity_checks;
  std::vector<EffectCheck> fairness_check;
  LoopAction action_taken = LoopAction::refine_prompt;

  nlohmann::json to_json() const {
    nlohmann::json fid = nlohmann::json::array();
    for (const auto& f : fidelity_checks) fid.push_back(f.to_json());
    nlohmann::json fair = nlohmann::json::array();
    for (const auto& e : fairness_check) fair.push_back(e.to_json());
    return nlohmann::json{{"batch_id", batch_id},
                          {"rows_requested", rows_requested},
                          {"rows_valid", rows_valid},
                          {"rows_rejected_schema", rows_rejected_schema},
                          {"accumulated_rows", accumulated_rows},
                          {"evaluated", evaluated},
                          {"fidelity_checks", fid},
                          {"fairness_check", fair},
                          {"action_taken", to_string(action_taken)}};
  }
};

struct GenerationReport {
  std::string backend;
  std::vector<IterationRecord> iterations;
  std::size_t final_row_count = 0;
  bool constraint_satisfied = false;

  nlohmann::json to_json() const {
    nlohmann::json its = nlohmann::json::array();
    for (const auto& it : iterations) its.push_back(it.to_json());
    return nlohmann::json{{"backend", backend},
                          {"iterations", its},
                          {"final_row_count", final_row_count},
                          {"constraint_satisfied", constraint_satisfied}};
  }
};

namespace detail {

// Range-clips continuous cells, snaps discrete cells onto valid codes, and
// drops duplicate rows beyond the scaled real-data multiplicity cap.
inline Table post_process(const Table& t, const Table& t_real) {
  Table out = t;
  for (std::size_t c = 0; c < out.column_count(); ++c) {
    const auto& sch = out.schema()[c];
    const auto& col = t_real.column(c);
    if (sch.kind == ColumnKind::continuous) {
      if (col.empty()) continue;
      const double lo = *std::min_element(col.begin(), col.end());
      const double hi = *std::max_element(col.begin(), col.end());
      for (std::size_t r = 0; r < out.row_count(); ++r) {
        out.set_cell(r, c, std::clamp(out.cell(r, c), lo, hi));
      }
    } else {
      const double max_code = static_cast<double>(t_real.level_count(c) - 1);
      for (std::size_t r = 0; r < out.row_count(); ++r) {
        out.set_cell(r, c, std::clamp(std::round(out.cell(r, c)), 0.0, max_code));
      }
    }
  }
  const std::size_t cap = scaled_dup_cap(t_real, out.row_count());
  std::map<std::string, std::size_t> seen;
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < out.row_count(); ++r) {
    if (++seen[row_signature(out, r, 6)] <= cap) keep.push_back(r);
  }
  if (keep.size() == out.row_count()) return out;
  return out.select_rows(keep);
}

// Evicts half the accumulated rows. Survivor counts per (X, Y) cell follow
// the real shares, so the eviction repairs the joint rather than distorting
// it; within a cell the rows pushing violated fidelity columns outward go
// first, with a seeded shuffle breaking ties.
inline std::vector<std::size_t> worst_half(const Table& accum, const Table& t_real,
                                           const SfmSpec& s, const ConstraintVerdict& v,
                                           std::uint64_t seed) {
  const std::size_t n = accum.row_count();
  std::vector<double> score(n, 0.0);
  for (const auto& f : v.fidelity) {
    if (f.pass) continue;
    const std::size_t c = accum.column_index(f.column);
    if (accum.schema()[c].kind == ColumnKind::continuous) {
      double mr = 0.0, sr = 0.0;
      for (double x : t_real.column(c)) mr += x;
      mr /= static_cast<double>(std::max<std::size_t>(t_real.row_count(), 1));
      for (double x : t_real.column(c)) sr += (x - mr) * (x - mr);
      sr = std::sqrt(sr / static_cast<double>(std::max<std::size_t>(t_real.row_count() - 1, 1)));
      const double dir = f.syn >= f.real ? 1.0 : -1.0;
      for (std::size_t r = 0; r < n; ++r) {
        score[r] += dir * (accum.cell(r, c) - mr) / std::max(sr, 1e-9);
      }
    } else {
      const std::size_t levels = accum.level_count(c);
      std::vector<double> freal(levels, 0.0), fsyn(levels, 0.0);
      for (double x : t_real.column(c)) freal[static_cast<std::size_t>(std::llround(x))] += 1.0;
      for (double x : accum.column(c)) fsyn[static_cast<std::size_t>(std::llround(x))] += 1.0;
      for (auto& x : freal) x /= static_cast<double>(std::max<std::size_t>(t_real.row_count(), 1));
      for (auto& x : fsyn) x /= static_cast<double>(std::max<std::size_t>(n, 1));
      for (std::size_t r = 0; r < n; ++r) {
        const auto l = static_cast<std::size_t>(std::llround(accum.cell(r, c)));
        score[r] += fsyn[l] - freal[l];
      }
    }
  }
  const std::size_t cx = accum.column_index(s.x);
  const std::size_t cy = accum.column_index(s.y);
  const double x1c = accum.level_code(cx, s.x1);
  const double ypc = accum.level_code(cy, s.y_positive);
  double sreal[4] = {0, 0, 0, 0};
  for (std::size_t r = 0; r < t_real.row_count(); ++r) {
    const int xi = t_real.cell(r, cx) == x1c ? 1 : 0;
    const int yi = t_real.cell(r, cy) == ypc ? 1 : 0;
    sreal[xi * 2 + yi] += 1.0;
  }
  for (auto& x : sreal) x /= static_cast<double>(std::max<std::size_t>(t_real.row_count(), 1));

  std::vector<std::size_t> cells[4];
  for (std::size_t r = 0; r < n; ++r) {
    const int xi = accum.cell(r, cx) == x1c ? 1 : 0;
    const int yi = accum.cell(r, cy) == ypc ? 1 : 0;
    cells[xi * 2 + yi].push_back(r);
  }

  // Largest-remainder budgets capped by each cell's pool; shortfall spills to
  // the cell furthest below its target that still has spare rows.
  const std::size_t surv_total = n / 2;
  double want[4];
  std::size_t budget[4];
  std::size_t used = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    want[c] = static_cast<double>(surv_total) * sreal[c];
    budget[c] = std::min(static_cast<std::size_t>(want[c]), cells[c].size());
    used += budget[c];
  }
  while (used < surv_total) {
    std::size_t pick = 4;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < 4; ++c) {
      if (budget[c] >= cells[c].size()) continue;
      const double deficit = want[c] - static_cast<double>(budget[c]);
      if (deficit > best) {
        best = deficit;
        pick = c;
      }
    }
    if (pick == 4) break;
    ++budget[pick];
    ++used;
  }

  const auto tie_hash = [seed](std::size_t r) {
    return mix_seed(seed, static_cast<std::uint64_t>(r) + 1);
  };
  std::vector<std::size_t> idx;
  idx.reserve(surv_total);
  for (std::size_t c = 0; c < 4; ++c) {
    auto& rows = cells[c];
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      if (score[a] != score[b]) return score[a] < score[b];
      return tie_hash(a) < tie_hash(b);
    });
    idx.insert(idx.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(budget[c]));
  }
  std::sort(idx.begin(), idx.end());  // survivors in original order
  return idx;
}

}  // namespace detail

// The constraint-satisfaction loop. Each iteration requests one batch from
// the configured backend, accumulates valid rows, and once the target count
// is reached evaluates constraints against the real table; failures
// alternate prompt refinement and exemplar re-curation and evict the
// worst-violating half before the next batch. Returns the accepted table, or
// the best table seen with constraint_satisfied=false after max_iterations.
inline std::pair<Table, GenerationReport> run_generation(const Table& t_real, const SfmSpec& s,
                                                         const GenerationConfig& cfg,
                                                         CompletionTransport* transport = nullptr,
                                                         const EstimatorConfig& est = {}) {
  cfg.validate();
  GenerationReport report;
  report.backend = to_string(cfg.backend);
  Table accum = t_real.select_rows({});
  accum.set_provenance(Provenance::synthetic);
  if (cfg.target_rows == 0) {
    report.constraint_satisfied = true;
    return {accum, report};
  }
  if (cfg.backend == Backend::llm && transport == nullptr) {
    throw ConfigError("llm backend requires a transport");
  }

  const FairnessDecomposition real_fx = decompose_point(t_real, s, est);
  std::optional<ChainModel> chain;
  if (cfg.backend == Backend::statistical) chain.emplace(ChainModel::fit(t_real, s, est.z_bins));

  const std::size_t pool_k =
      std::min(t_real.row_count(), std::max<std::size_t>(4 * cfg.exemplars_per_prompt, 8));
  Table curated = curate(t_real, s, pool_k, mix_seed(cfg.seed, 0xC0DEULL));

  RefinementHints hints;
  hints.has_targets = true;
  hints.target_tv = real_fx.tv.est;
  hints.target_de = real_fx.de.est;
  hints.target_ie = real_fx.ie.est;

  Table best = accum;
  std::size_t best_violations = std::numeric_limits<std::size_t>::max();
  std::size_t transport_failures = 0;
  std::size_t failures = 0;

  for (std::size_t iter = 1; iter <= cfg.max_iterations; ++iter) {
    IterationRecord rec;
    rec.batch_id = iter;
    const std::size_t have = accum.row_count();
    const std::size_t need = cfg.target_rows > have ? cfg.target_rows - have : 0;
    const std::size_t request = std::min(cfg.batch_size, std::max<std::size_t>(need, 1));
    rec.rows_requested = request;

    bool batch_ok = true;
    if (cfg.backend == Backend::statistical) {
      const Table batch =
          chain->sample(request, mix_seed(cfg.seed, 0xBA7CULL, iter), FairnessTilt{real_fx.de.est});
      rec.rows_valid = batch.row_count();
      accum.append_rows(batch);
    } else {
      PromptBundle p = build_prompt(curated, s, cfg, &hints);
      p.batch_rows = request;
      try {
        auto [batch, rejects] = generate_batch_llm(p, cfg, *transport);
        rec.rows_valid = batch.row_count();
        rec.rows_rejected_schema = rejects;
        accum.append_rows(batch);
        transport_failures = 0;
      } catch (const TransportError&) {
        batch_ok = false;
      } catch (const MalformedResponseError&) {
        batch_ok = false;
      }
      if (!batch_ok && ++transport_failures >= 3) {
        throw AbortedByTransportError("3 consecutive transport failures");
      }
    }
    rec.accumulated_rows = accum.row_count();

    if (accum.row_count() >= cfg.target_rows) {
      Table trial = accum;
      trial.truncate(cfg.target_rows);
      rec.evaluated = true;
      const ConstraintVerdict v = check_constraints(trial, t_real, s, cfg, est);
      rec.fidelity_checks = v.fidelity;
      rec.fairness_check = v.fairness;
      if (v.pass) {
        rec.action_taken = LoopAction::accept;
        report.iterations.push_back(rec);
        Table out = detail::post_process(trial, t_real);
        report.final_row_count = out.row_count();
        report.constraint_satisfied = true;
        return {out, report};
      }
      if (v.violation_count() < best_violations) {
        best_violations = v.violation_count();
        best = trial;
      }
      ++failures;
      rec.action_taken = failures % 2 == 1 ? LoopAction::refine_prompt : LoopAction::adapt_data;
      hints.fidelity_violations.clear();
      hints.fairness_violations.clear();
      for (const auto& f : v.fidelity) {
        if (!f.pass) hints.fidelity_violations.push_back(f);
      }
      for (const auto& e : v.fairness) {
        if (!e.pass && !e.advisory) hints.fairness_violations.push_back(e);
      }
      if (rec.action_taken == LoopAction::adapt_data) {
        // Re-curate exemplars toward the under-represented (X, Y) cells.
        const std::size_t cx = t_real.column_index(s.x);
        const std::size_t cy = t_real.column_index(s.y);
        const double x1c = t_real.level_code(cx, s.x1);
        const double ypc = t_real.level_code(cy, s.y_positive);
        double sreal[4] = {0, 0, 0, 0}, ssyn[4] = {0, 0, 0, 0};
        for (std::size_t r = 0; r < t_real.row_count(); ++r) {
          sreal[(t_real.cell(r, cx) == x1c ? 2 : 0) + (t_real.cell(r, cy) == ypc ? 1 : 0)] += 1.0;
        }
        for (std::size_t r = 0; r < trial.row_count(); ++r) {
          ssyn[(trial.cell(r, cx) == x1c ? 2 : 0) + (trial.cell(r, cy) == ypc ? 1 : 0)] += 1.0;
        }
        double deficits[4];
        for (std::size_t c = 0; c < 4; ++c) {
          deficits[c] = sreal[c] / static_cast<double>(t_real.row_count()) -
                        ssyn[c] / static_cast<double>(std::max<std::size_t>(trial.row_count(), 1));
        }
        curated = detail::curate_weighted(t_real, s, pool_k, mix_seed(cfg.seed, 0xADA0ULL, iter),
                                          deficits);
      }
      const auto survivors =
          detail::worst_half(accum, t_real, s, v, mix_seed(cfg.seed, 0xE71CULL, iter));
      accum = accum.select_rows(survivors);
    } else {
      rec.evaluated = false;
      ++failures;
      rec.action_taken = failures % 2 == 1 ? LoopAction::refine_prompt : LoopAction::adapt_data;
    }
    report.iterations.push_back(rec);
  }

  Table out = detail::post_process(best_violations != std::numeric_limits<std::size_t>::max() ? best : accum,
                                   t_real);
  report.final_row_count = out.row_count();
  report.constraint_satisfied = false;
  return {out, report};
}

}  // namespace fairsyn
