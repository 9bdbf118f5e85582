#include "fairaudit/synth.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>

#include "fairaudit/error.hpp"
#include "fairaudit/stats.hpp"

namespace fairaudit::synth {

namespace {

Binormal binormal_from_json(const nlohmann::json& j, const std::string& at) {
  if (!j.is_object()) throw ConfigError(at, "expected an object");
  Binormal b;
  auto num = [&](const char* key, double& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ConfigError(at + "/" + key, "expected a number");
    dst = j[key].get<double>();
  };
  num("mu0", b.mu0);
  num("sigma0", b.sigma0);
  num("mu1", b.mu1);
  num("sigma1", b.sigma1);
  return b;
}

nlohmann::json binormal_to_json(const Binormal& b) {
  return {{"mu0", b.mu0}, {"sigma0", b.sigma0}, {"mu1", b.mu1}, {"sigma1", b.sigma1}};
}

const GroupSpec& find_group(const ScenarioSpec& spec, std::string_view label) {
  for (const auto& g : spec.groups)
    if (g.label == label) return g;
  throw ValidationError(fmt::format("scenario '{}' has no group '{}'", spec.name, label));
}

// Unit-variance binormal separations giving AUROC 0.99, 0.90, 0.80 and 0.70.
constexpr double kMu99 = 3.2900;
constexpr double kMu90 = 1.8124;
constexpr double kMu80 = 1.1902;
constexpr double kMu70 = 0.7416;

}  // namespace

double binormal_auroc(const Binormal& b) {
  return normal_cdf((b.mu1 - b.mu0) / std::sqrt(b.sigma0 * b.sigma0 + b.sigma1 * b.sigma1));
}

void ScenarioSpec::validate() const {
  if (groups.empty()) throw ConfigError("/groups", "at least one group is required");
  if (score_factor && std::find(factors.begin(), factors.end(), *score_factor) == factors.end())
    throw ConfigError("/score_factor", "score factor '" + *score_factor + "' is not in /factors");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& g = groups[i];
    const std::string at = fmt::format("/groups/{}", i);
    if (g.label.empty()) throw ConfigError(at + "/label", "empty group label");
    for (std::size_t j = 0; j < i; ++j)
      if (groups[j].label == g.label) throw ConfigError(at + "/label", "duplicate group label");
    if (g.n < 0) throw ConfigError(at + "/n", "group size must be non-negative");
    if (!(g.prevalence >= 0.0 && g.prevalence <= 1.0))
      throw ConfigError(at + "/prevalence", "prevalence must lie in [0,1]");
    for (const auto& [f, p] : g.factor_prevalence) {
      if (std::find(factors.begin(), factors.end(), f) == factors.end())
        throw ConfigError(at + "/factor_prevalence/" + f, "factor not declared in /factors");
      if (!(p >= 0.0 && p <= 1.0))
        throw ConfigError(at + "/factor_prevalence/" + f, "prevalence must lie in [0,1]");
    }
    auto check_binormal = [&](const Binormal& b, const std::string& where) {
      if (!(b.sigma0 > 0.0)) throw ConfigError(where + "/sigma0", "sigma must be positive");
      if (!(b.sigma1 > 0.0)) throw ConfigError(where + "/sigma1", "sigma must be positive");
      if (!std::isfinite(b.mu0)) throw ConfigError(where + "/mu0", "mu must be finite");
      if (!std::isfinite(b.mu1)) throw ConfigError(where + "/mu1", "mu must be finite");
    };
    check_binormal(g.absent, at + "/score/absent");
    if (g.present) check_binormal(*g.present, at + "/score/present");
  }
}

ScenarioSpec ScenarioSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("", "scenario must be a JSON object");
  if (j.contains("format_version") && j["format_version"] != 1)
    throw ConfigError("/format_version", "unsupported version");
  ScenarioSpec s;
  auto str = [&](const char* key, std::string& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_string()) throw ConfigError(std::string("/") + key, "expected a string");
    dst = j[key].get<std::string>();
  };
  str("name", s.name);
  str("model", s.model);
  str("attribute", s.attribute);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("/seed", "expected a non-negative integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("factors")) {
    if (!j["factors"].is_array()) throw ConfigError("/factors", "expected an array");
    for (std::size_t i = 0; i < j["factors"].size(); ++i) {
      if (!j["factors"][i].is_string()) throw ConfigError(fmt::format("/factors/{}", i), "expected a string");
      s.factors.push_back(j["factors"][i].get<std::string>());
    }
  }
  if (j.contains("score_factor") && !j["score_factor"].is_null()) {
    if (!j["score_factor"].is_string()) throw ConfigError("/score_factor", "expected a string");
    s.score_factor = j["score_factor"].get<std::string>();
  }
  if (!j.contains("groups") || !j["groups"].is_array()) throw ConfigError("/groups", "expected an array");
  for (std::size_t i = 0; i < j["groups"].size(); ++i) {
    const auto& gj = j["groups"][i];
    const std::string at = fmt::format("/groups/{}", i);
    if (!gj.is_object()) throw ConfigError(at, "expected an object");
    GroupSpec g;
    if (!gj.contains("label") || !gj["label"].is_string()) throw ConfigError(at + "/label", "expected a string");
    g.label = gj["label"].get<std::string>();
    if (!gj.contains("n") || !gj["n"].is_number_integer()) throw ConfigError(at + "/n", "expected an integer");
    g.n = gj["n"].get<int>();
    if (!gj.contains("prevalence") || !gj["prevalence"].is_number())
      throw ConfigError(at + "/prevalence", "expected a number");
    g.prevalence = gj["prevalence"].get<double>();
    if (gj.contains("factor_prevalence")) {
      if (!gj["factor_prevalence"].is_object()) throw ConfigError(at + "/factor_prevalence", "expected an object");
      for (const auto& [f, p] : gj["factor_prevalence"].items()) {
        if (!p.is_number()) throw ConfigError(at + "/factor_prevalence/" + f, "expected a number");
        g.factor_prevalence[f] = p.get<double>();
      }
    }
    if (!gj.contains("score") || !gj["score"].is_object()) throw ConfigError(at + "/score", "expected an object");
    const auto& sj = gj["score"];
    if (!sj.contains("absent")) throw ConfigError(at + "/score/absent", "missing binormal parameters");
    g.absent = binormal_from_json(sj["absent"], at + "/score/absent");
    if (sj.contains("present")) g.present = binormal_from_json(sj["present"], at + "/score/present");
    s.groups.push_back(std::move(g));
  }
  s.validate();
  return s;
}

ScenarioSpec ScenarioSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return from_json(j);
}

nlohmann::json ScenarioSpec::to_json() const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["name"] = name;
  j["seed"] = seed;
  j["model"] = model;
  j["attribute"] = attribute;
  j["factors"] = factors;
  j["score_factor"] = score_factor ? nlohmann::json(*score_factor) : nlohmann::json(nullptr);
  j["groups"] = nlohmann::json::array();
  for (const auto& g : groups) {
    nlohmann::json gj;
    gj["label"] = g.label;
    gj["n"] = g.n;
    gj["prevalence"] = g.prevalence;
    gj["factor_prevalence"] = g.factor_prevalence;
    gj["score"]["absent"] = binormal_to_json(g.absent);
    if (g.present) gj["score"]["present"] = binormal_to_json(*g.present);
    j["groups"].push_back(std::move(gj));
  }
  return j;
}

Cohort generate(const ScenarioSpec& spec) {
  spec.validate();
  std::mt19937_64 engine(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Cohort::Columns columns;
  columns.models = {spec.model};
  columns.attributes = {spec.attribute};
  columns.risk_factors = spec.factors;

  std::vector<ScanRecord> records;
  std::size_t index = 0;
  for (const auto& g : spec.groups) {
    for (int i = 0; i < g.n; ++i, ++index) {
      ScanRecord r;
      r.scan_id = fmt::format("s{:06}", index);
      r.participant_id = fmt::format("p{:06}", index);
      r.label = unit(engine) < g.prevalence ? 1 : 0;
      r.attributes[spec.attribute] = g.label;
      bool stratum_present = false;
      for (const auto& f : spec.factors) {
        auto it = g.factor_prevalence.find(f);
        const double p = it == g.factor_prevalence.end() ? 0.0 : it->second;
        const bool present = unit(engine) < p;
        r.risk_factors[f] = present;
        if (spec.score_factor && f == *spec.score_factor) stratum_present = present;
      }
      const Binormal& b = stratum_present && g.present ? *g.present : g.absent;
      const double latent = r.label ? b.mu1 + b.sigma1 * normal(engine) : b.mu0 + b.sigma0 * normal(engine);
      r.scores[spec.model] = normal_cdf(latent);
      records.push_back(std::move(r));
    }
  }
  return Cohort(std::move(records), std::move(columns), Provenance{"synth:" + spec.name, 1});
}

double expected_auroc(const ScenarioSpec& spec, std::string_view group, Stratum stratum) {
  const GroupSpec& g = find_group(spec, group);
  if (stratum == Stratum::Present && g.present) return binormal_auroc(*g.present);
  return binormal_auroc(g.absent);
}

const std::vector<std::string>& golden_scenario_names() {
  static const std::vector<std::string> names = {"null", "direct_bias", "confounded"};
  return names;
}

ScenarioSpec golden_scenario(std::string_view name) {
  ScenarioSpec s;
  s.name = std::string(name);
  s.seed = 20240101;
  s.factors = {"emphysema",    "pipe_smoker",    "hypertension", "diabetes",     "pneumonia",
               "work_no_mask", "family_history", "copd",         "cigar_smoker", "lives_with_smoker"};
  GroupSpec a;
  a.label = "A";
  a.n = 3000;
  a.prevalence = 0.25;
  a.factor_prevalence = {{"emphysema", 0.30},    {"pipe_smoker", 0.20},    {"hypertension", 0.30},
                         {"diabetes", 0.10},     {"pneumonia", 0.20},      {"work_no_mask", 0.35},
                         {"family_history", 0.25}, {"copd", 0.08},         {"cigar_smoker", 0.15},
                         {"lives_with_smoker", 0.40}};
  GroupSpec b = a;
  b.label = "B";
  b.factor_prevalence = {{"emphysema", 0.40},    {"pipe_smoker", 0.35},    {"hypertension", 0.50},
                         {"diabetes", 0.15},     {"pneumonia", 0.30},      {"work_no_mask", 0.12},
                         {"family_history", 0.20}, {"copd", 0.14},         {"cigar_smoker", 0.06},
                         {"lives_with_smoker", 0.55}};
  if (name == "null") {
    a.absent = b.absent = Binormal{0.0, 1.0, kMu80, 1.0};
  } else if (name == "direct_bias") {
    a.absent = Binormal{0.0, 1.0, kMu90, 1.0};
    b.absent = Binormal{0.0, 1.0, kMu70, 1.0};
  } else if (name == "confounded") {
    // Emphysema degrades discrimination identically in both groups; only its
    // prevalence differs between them.
    s.score_factor = "emphysema";
    a.factor_prevalence["emphysema"] = 0.20;
    b.factor_prevalence["emphysema"] = 0.80;
    a.absent = b.absent = Binormal{0.0, 1.0, kMu99, 1.0};
    a.present = b.present = Binormal{0.0, 1.0, kMu90, 1.0};
  } else {
    throw ValidationError(fmt::format("unknown golden scenario '{}'", name));
  }
  s.groups = {a, b};
  return s;
}

}  // namespace fairaudit::synth
