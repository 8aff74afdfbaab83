#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fairsyn/scm.hpp"
#include "fairsyn/table.hpp"

namespace fixtures {

inline std::vector<double> bern(double p1) { return {1.0 - p1, p1}; }

inline fairsyn::SfmSpec roles_xwy() {
  fairsyn::SfmSpec s;
  s.x = "X";
  s.w = {"W"};
  s.y = "Y";
  s.x0 = "0";
  s.x1 = "1";
  s.y_positive = "1";
  return s;
}

// X -> W -> Y with a direct X -> Y edge and no confounding.
// Exact: tv=0.54, de=0.30, ie=-0.24 (reported direction), se=0.
inline fairsyn::DiscreteScm no_confounder_scm() {
  std::vector<fairsyn::ScmVariable> vars = {{"X", 2}, {"W", 2}, {"Y", 2}};
  std::map<std::string, std::vector<std::string>> parents = {
      {"X", {}}, {"W", {"X"}}, {"Y", {"X", "W"}}};
  std::map<std::string, std::vector<std::vector<double>>> cpts;
  cpts["X"] = {bern(0.5)};
  cpts["W"] = {bern(0.2), bern(0.8)};
  cpts["Y"] = {bern(0.1), bern(0.5), bern(0.4), bern(0.8)};
  return fairsyn::DiscreteScm::from_named(std::move(vars), parents, cpts, roles_xwy());
}

// Z -> X and Z -> Y only; W is independent noise. All disparity is spurious.
inline fairsyn::DiscreteScm pure_confounding_scm() {
  std::vector<fairsyn::ScmVariable> vars = {{"Z", 2}, {"X", 2}, {"W", 2}, {"Y", 2}};
  std::map<std::string, std::vector<std::string>> parents = {
      {"Z", {}}, {"X", {"Z"}}, {"W", {}}, {"Y", {"Z"}}};
  std::map<std::string, std::vector<std::vector<double>>> cpts;
  cpts["Z"] = {bern(0.5)};
  cpts["X"] = {bern(0.3), bern(0.7)};
  cpts["W"] = {bern(0.5)};
  cpts["Y"] = {bern(0.2), bern(0.6)};
  auto roles = roles_xwy();
  roles.z = {"Z"};
  return fairsyn::DiscreteScm::from_named(std::move(vars), parents, cpts, roles);
}

// X -> W -> Y with no direct edge. Exact: de=0, ie=-0.30, tv=0.30.
inline fairsyn::DiscreteScm mediated_only_scm() {
  std::vector<fairsyn::ScmVariable> vars = {{"X", 2}, {"W", 2}, {"Y", 2}};
  std::map<std::string, std::vector<std::string>> parents = {
      {"X", {}}, {"W", {"X"}}, {"Y", {"W"}}};
  std::map<std::string, std::vector<std::vector<double>>> cpts;
  cpts["X"] = {bern(0.5)};
  cpts["W"] = {bern(0.2), bern(0.8)};
  cpts["Y"] = {bern(0.2), bern(0.7)};
  return fairsyn::DiscreteScm::from_named(std::move(vars), parents, cpts, roles_xwy());
}

// X -> Y only; W is independent noise. Exact: de=tv=0.40, ie=se=0.
inline fairsyn::DiscreteScm direct_only_scm() {
  std::vector<fairsyn::ScmVariable> vars = {{"X", 2}, {"W", 2}, {"Y", 2}};
  std::map<std::string, std::vector<std::string>> parents = {
      {"X", {}}, {"W", {}}, {"Y", {"X"}}};
  std::map<std::string, std::vector<std::vector<double>>> cpts;
  cpts["X"] = {bern(0.5)};
  cpts["W"] = {bern(0.5)};
  cpts["Y"] = {bern(0.25), bern(0.65)};
  return fairsyn::DiscreteScm::from_named(std::move(vars), parents, cpts, roles_xwy());
}

// Y ignores every parent; every effect is exactly zero.
inline fairsyn::DiscreteScm null_outcome_scm() {
  std::vector<fairsyn::ScmVariable> vars = {{"Z", 2}, {"X", 2}, {"W", 2}, {"Y", 2}};
  std::map<std::string, std::vector<std::string>> parents = {
      {"Z", {}}, {"X", {"Z"}}, {"W", {"X"}}, {"Y", {}}};
  std::map<std::string, std::vector<std::vector<double>>> cpts;
  cpts["Z"] = {bern(0.5)};
  cpts["X"] = {bern(0.4), bern(0.6)};
  cpts["W"] = {bern(0.3), bern(0.7)};
  cpts["Y"] = {bern(0.3)};
  auto roles = roles_xwy();
  roles.z = {"Z"};
  return fairsyn::DiscreteScm::from_named(std::move(vars), parents, cpts, roles);
}

// Two mediators pulling in opposite directions plus a direct edge.
// Exact: de=0.15, ie=-0.04 (reported), tv=0.19.
inline fairsyn::DiscreteScm two_mediators_scm() {
  std::vector<fairsyn::ScmVariable> vars = {{"X", 2}, {"W1", 2}, {"W2", 2}, {"Y", 2}};
  std::map<std::string, std::vector<std::string>> parents = {
      {"X", {}}, {"W1", {"X"}}, {"W2", {"X"}}, {"Y", {"X", "W1", "W2"}}};
  std::map<std::string, std::vector<std::vector<double>>> cpts;
  cpts["X"] = {bern(0.5)};
  cpts["W1"] = {bern(0.3), bern(0.7)};
  cpts["W2"] = {bern(0.6), bern(0.2)};
  std::vector<std::vector<double>> y_rows;
  for (std::size_t x = 0; x < 2; ++x) {
    for (std::size_t w1 = 0; w1 < 2; ++w1) {
      for (std::size_t w2 = 0; w2 < 2; ++w2) {
        y_rows.push_back(bern(0.1 + 0.15 * static_cast<double>(x) +
                              0.3 * static_cast<double>(w1) + 0.2 * static_cast<double>(w2)));
      }
    }
  }
  cpts["Y"] = y_rows;
  fairsyn::SfmSpec roles;
  roles.x = "X";
  roles.w = {"W1", "W2"};
  roles.y = "Y";
  roles.x0 = "0";
  roles.x1 = "1";
  roles.y_positive = "1";
  return fairsyn::DiscreteScm::from_named(std::move(vars), parents, cpts, roles);
}

// Clinical-records stand-in: a small negative direct effect on survival with
// mild mediation and confounding, shaped like the public heart-failure data.
// Additive outcome CPT makes the exact direct effect -0.05.
inline fairsyn::DiscreteScm hf_like_scm() {
  std::vector<fairsyn::ScmVariable> vars = {{"Z", 2}, {"X", 2}, {"W1", 2}, {"W2", 2}, {"Y", 2}};
  std::map<std::string, std::vector<std::string>> parents = {
      {"Z", {}}, {"X", {"Z"}}, {"W1", {"X", "Z"}}, {"W2", {"X", "Z"}}, {"Y", {"X", "W1", "W2", "Z"}}};
  std::map<std::string, std::vector<std::vector<double>>> cpts;
  cpts["Z"] = {bern(0.45)};
  cpts["X"] = {bern(0.60), bern(0.70)};
  cpts["W1"] = {bern(0.30), bern(0.55), bern(0.40), bern(0.65)};
  cpts["W2"] = {bern(0.40), bern(0.50), bern(0.48), bern(0.58)};
  std::vector<std::vector<double>> y_rows;
  for (std::size_t x = 0; x < 2; ++x) {
    for (std::size_t w1 = 0; w1 < 2; ++w1) {
      for (std::size_t w2 = 0; w2 < 2; ++w2) {
        for (std::size_t z = 0; z < 2; ++z) {
          y_rows.push_back(bern(0.28 - 0.05 * static_cast<double>(x) +
                                0.18 * static_cast<double>(w1) +
                                0.10 * static_cast<double>(w2) +
                                0.12 * static_cast<double>(z)));
        }
      }
    }
  }
  cpts["Y"] = y_rows;
  fairsyn::SfmSpec roles;
  roles.x = "X";
  roles.z = {"Z"};
  roles.w = {"W1", "W2"};
  roles.y = "Y";
  roles.x0 = "0";
  roles.x1 = "1";
  roles.y_positive = "1";
  return fairsyn::DiscreteScm::from_named(std::move(vars), parents, cpts, roles);
}

// The oracle-equivalence suite: name, model, and a seed offset.
inline std::vector<std::pair<std::string, fairsyn::DiscreteScm>> oracle_suite() {
  std::vector<std::pair<std::string, fairsyn::DiscreteScm>> out;
  out.emplace_back("no_confounder", no_confounder_scm());
  out.emplace_back("pure_confounding", pure_confounding_scm());
  out.emplace_back("mediated_only", mediated_only_scm());
  out.emplace_back("direct_only", direct_only_scm());
  out.emplace_back("two_mediators", two_mediators_scm());
  out.emplace_back("hf_like", hf_like_scm());
  out.emplace_back("biased_benchmark", fairsyn::biased_benchmark_scm(1.0));
  return out;
}

inline fairsyn::Table real_sample(const fairsyn::DiscreteScm& scm, std::size_t n,
                                  std::uint64_t seed) {
  fairsyn::Table t = scm.sample(n, seed);
  t.set_provenance(fairsyn::Provenance::real);
  return t;
}

// Self-cleaning scratch directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& hint) {
    namespace fs = std::filesystem;
    static std::mt19937_64 gen{std::random_device{}()};
    for (int i = 0; i < 64; ++i) {
      fs::path p = fs::temp_directory_path() / (hint + "_" + std::to_string(gen()));
      std::error_code ec;
      if (fs::create_directory(p, ec)) {
        path_ = p;
        return;
      }
    }
    throw std::runtime_error("could not create temp directory");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace fixtures
