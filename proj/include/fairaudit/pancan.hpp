#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace fairaudit::pancan {

enum class NoduleType { Solid, PartSolid, GroundGlass };
enum class Sex { Female, Male };

NoduleType parse_nodule_type(std::string_view text);
Sex parse_sex(std::string_view text);

struct NoduleInput {
  double size_mm = 0.0;
  NoduleType type = NoduleType::Solid;
  bool upper_lobe = false;
  bool spiculation = false;
  int count_in_scan = 1;
};

struct ParticipantInput {
  Sex sex = Sex::Male;
  double age = 0.0;
  bool family_history = false;
  bool emphysema = false;
};

enum class Transform { Identity, Indicator, Centered, Power, Log };

// transform(x):
//   identity  x
//   indicator x (must be 0 or 1)
//   centered  x - center
//   power     (x / scale)^exponent - center
//   log       log(x / scale) - center
struct Term {
  std::string variable;
  Transform transform = Transform::Identity;
  double beta = 0.0;
  double center = 0.0;
  double scale = 1.0;
  double exponent = 1.0;
  // Placeholder value; replace before clinical use.
  bool placeholder = false;

  double apply(double x) const;
};

/// Logistic model: risk = sigmoid(intercept + sum(beta * transform(x))).
///
/// Variables: female, age, family_history, emphysema, nodule_size,
/// part_solid, ground_glass, upper_lobe, spiculation, nodule_count. Solid
/// nodules are the reference type. A definition must carry exactly one term
/// per variable.
struct ModelDefinition {
  double intercept = 0.0;
  bool intercept_placeholder = false;
  std::vector<Term> terms;
  std::string provenance;

  // Throws ConfigError naming the missing, duplicate or unknown variable.
  void validate() const;

  static ModelDefinition from_json(const nlohmann::json& j);
  static ModelDefinition load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  // Sex and age coefficients as quoted for the full model with spiculation;
  // every other coefficient is a marked placeholder.
  static ModelDefinition default_pancan2b();
};

const std::vector<std::string>& model_variables();

double sigmoid(double x);
double logit(double p);

double pancan2b_logit(const NoduleInput& nodule, const ParticipantInput& participant,
                      const ModelDefinition& model);
double pancan2b_risk(const NoduleInput& nodule, const ParticipantInput& participant,
                     const ModelDefinition& model);

// Scan-level score: the most suspicious nodule. Throws on an empty list.
double scan_score(std::span<const double> nodule_risks);

enum class IlstBand { BelowModerate, ModerateOrAbove };

inline constexpr double kIlstModerateThreshold = 0.06;

// Moderate-or-above iff score >= 0.06.
IlstBand classify_ilst(double score);
std::string_view band_name(IlstBand band);

}  // namespace fairaudit::pancan
