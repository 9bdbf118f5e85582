#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fairaudit/cohort.hpp"

namespace fairaudit::synth {

// Latent score ~ N(mu0, sigma0) for benign and N(mu1, sigma1) for malignant.
struct Binormal {
  double mu0 = 0.0;
  double sigma0 = 1.0;
  double mu1 = 1.0;
  double sigma1 = 1.0;
};

// Closed form Phi((mu1 - mu0) / sqrt(sigma0^2 + sigma1^2)).
double binormal_auroc(const Binormal& b);

struct GroupSpec {
  std::string label;
  int n = 0;
  double prevalence = 0.1;
  std::map<std::string, double> factor_prevalence;
  Binormal absent;
  // Score model where the score factor is present; defaults to `absent`.
  std::optional<Binormal> present;
};

/// Two-or-more-group synthetic cohort. Each record draws its label, then
/// every factor independently, then a latent binormal score whose parameters
/// depend on the group and (optionally) on whether `score_factor` is
/// present. The exported score is Phi(latent), which is monotone and
/// therefore leaves every rank statistic unchanged.
struct ScenarioSpec {
  std::string name;
  std::uint64_t seed = 0;
  std::string model = "synthetic";
  std::string attribute = "group";
  std::vector<std::string> factors;
  std::optional<std::string> score_factor;
  std::vector<GroupSpec> groups;

  // Throws ConfigError with a JSON pointer to the offending field.
  void validate() const;

  static ScenarioSpec from_json(const nlohmann::json& j);
  static ScenarioSpec load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

enum class Stratum { Absent, Present };

Cohort generate(const ScenarioSpec& spec);
double expected_auroc(const ScenarioSpec& spec, std::string_view group, Stratum stratum);

// "null", "direct_bias", "confounded".
ScenarioSpec golden_scenario(std::string_view name);
const std::vector<std::string>& golden_scenario_names();

}  // namespace fairaudit::synth
