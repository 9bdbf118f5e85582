#include "fairaudit/pancan.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "fairaudit/error.hpp"

namespace fairaudit::pancan {

namespace {

std::string normalise(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    if (c == '_' || c == ' ') c = '-';
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

constexpr std::pair<Transform, std::string_view> kTransformNames[] = {
    {Transform::Identity, "identity"}, {Transform::Indicator, "indicator"},
    {Transform::Centered, "centered"}, {Transform::Power, "power"},
    {Transform::Log, "log"}};

}  // namespace

NoduleType parse_nodule_type(std::string_view text) {
  const std::string t = normalise(text);
  if (t == "solid") return NoduleType::Solid;
  if (t == "part-solid" || t == "partsolid") return NoduleType::PartSolid;
  if (t == "ground-glass" || t == "groundglass" || t == "non-solid" || t == "ggo")
    return NoduleType::GroundGlass;
  throw ValidationError(fmt::format("unknown nodule type '{}'", text));
}

Sex parse_sex(std::string_view text) {
  const std::string t = normalise(text);
  if (t == "female" || t == "f") return Sex::Female;
  if (t == "male" || t == "m") return Sex::Male;
  throw ValidationError(fmt::format("unknown sex '{}'", text));
}

double Term::apply(double x) const {
  switch (transform) {
    case Transform::Identity:
      return x;
    case Transform::Indicator:
      if (x != 0.0 && x != 1.0)
        throw ValidationError(fmt::format("indicator '{}' received {}", variable, x));
      return x;
    case Transform::Centered:
      return x - center;
    case Transform::Power:
      return std::pow(x / scale, exponent) - center;
    case Transform::Log:
      return std::log(x / scale) - center;
  }
  return x;
}

const std::vector<std::string>& model_variables() {
  static const std::vector<std::string> vars = {
      "female",      "age",          "family_history", "emphysema",   "nodule_size",
      "part_solid",  "ground_glass", "upper_lobe",     "spiculation", "nodule_count"};
  return vars;
}

void ModelDefinition::validate() const {
  const auto& vars = model_variables();
  std::map<std::string, int> seen;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const auto& t = terms[i];
    if (std::find(vars.begin(), vars.end(), t.variable) == vars.end())
      throw ConfigError(fmt::format("/terms/{}/variable", i), "unknown variable '" + t.variable + "'");
    if (seen[t.variable]++)
      throw ConfigError(fmt::format("/terms/{}/variable", i), "duplicate variable '" + t.variable + "'");
    if (!std::isfinite(t.beta)) throw ConfigError(fmt::format("/terms/{}/beta", i), "beta must be finite");
    if ((t.transform == Transform::Power || t.transform == Transform::Log) && !(t.scale > 0.0))
      throw ConfigError(fmt::format("/terms/{}/scale", i), "scale must be positive");
  }
  for (const auto& v : vars)
    if (!seen.count(v)) throw ConfigError("/terms", "model does not define variable '" + v + "'");
  if (!std::isfinite(intercept)) throw ConfigError("/intercept", "intercept must be finite");
}

ModelDefinition ModelDefinition::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("", "model definition must be a JSON object");
  ModelDefinition m;
  if (!j.contains("intercept") || !j["intercept"].is_number())
    throw ConfigError("/intercept", "expected a number");
  m.intercept = j["intercept"].get<double>();
  m.intercept_placeholder = j.value("intercept_placeholder", false);
  m.provenance = j.value("provenance", "");
  if (!j.contains("terms") || !j["terms"].is_array()) throw ConfigError("/terms", "expected an array");
  for (std::size_t i = 0; i < j["terms"].size(); ++i) {
    const auto& tj = j["terms"][i];
    const std::string at = fmt::format("/terms/{}", i);
    if (!tj.is_object()) throw ConfigError(at, "expected an object");
    Term t;
    if (!tj.contains("variable") || !tj["variable"].is_string())
      throw ConfigError(at + "/variable", "expected a string");
    t.variable = tj["variable"].get<std::string>();
    const std::string tr = tj.value("transform", "identity");
    auto it = std::find_if(std::begin(kTransformNames), std::end(kTransformNames),
                           [&](const auto& p) { return p.second == tr; });
    if (it == std::end(kTransformNames)) throw ConfigError(at + "/transform", "unknown transform '" + tr + "'");
    t.transform = it->first;
    if (!tj.contains("beta") || !tj["beta"].is_number()) throw ConfigError(at + "/beta", "expected a number");
    t.beta = tj["beta"].get<double>();
    t.center = tj.value("center", 0.0);
    t.scale = tj.value("scale", 1.0);
    t.exponent = tj.value("exponent", 1.0);
    t.placeholder = tj.value("placeholder", false);
    m.terms.push_back(std::move(t));
  }
  m.validate();
  return m;
}

ModelDefinition ModelDefinition::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model definition " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return from_json(j);
}

nlohmann::json ModelDefinition::to_json() const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["intercept"] = intercept;
  if (intercept_placeholder) j["intercept_placeholder"] = true;
  j["provenance"] = provenance;
  j["terms"] = nlohmann::json::array();
  for (const auto& t : terms) {
    nlohmann::json tj;
    tj["variable"] = t.variable;
    for (const auto& [tr, name] : kTransformNames)
      if (tr == t.transform) tj["transform"] = name;
    tj["beta"] = t.beta;
    if (t.transform == Transform::Centered || t.transform == Transform::Power || t.transform == Transform::Log)
      tj["center"] = t.center;
    if (t.transform == Transform::Power || t.transform == Transform::Log) tj["scale"] = t.scale;
    if (t.transform == Transform::Power) tj["exponent"] = t.exponent;
    if (t.placeholder) tj["placeholder"] = true;
    j["terms"].push_back(std::move(tj));
  }
  return j;
}

ModelDefinition ModelDefinition::default_pancan2b() {
  ModelDefinition m;
  m.intercept = -6.0;
  m.intercept_placeholder = true;
  m.provenance =
      "PanCan2b (Brock full model with spiculation). Only the female-sex "
      "(0.6011) and age (0.0287 per year) coefficients are pinned; terms marked placeholder must "
      "be replaced with the model's supplement values.";
  auto add = [&](std::string var, Transform tr, double beta, bool placeholder) {
    Term t;
    t.variable = std::move(var);
    t.transform = tr;
    t.beta = beta;
    t.placeholder = placeholder;
    m.terms.push_back(std::move(t));
    return &m.terms.back();
  };
  add("female", Transform::Indicator, 0.6011, false);
  add("age", Transform::Identity, 0.0287, false);
  add("family_history", Transform::Indicator, 0.0, true);
  add("emphysema", Transform::Indicator, 0.0, true);
  Term* size = add("nodule_size", Transform::Power, 1.0, true);
  size->scale = 10.0;
  size->exponent = 0.5;
  add("part_solid", Transform::Indicator, 0.0, true);
  add("ground_glass", Transform::Indicator, 0.0, true);
  add("upper_lobe", Transform::Indicator, 0.0, true);
  add("spiculation", Transform::Indicator, 1.0, true);
  add("nodule_count", Transform::Identity, 0.0, true);
  return m;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double pancan2b_logit(const NoduleInput& nodule, const ParticipantInput& participant,
                      const ModelDefinition& model) {
  if (!(nodule.size_mm > 0.0)) throw ValidationError(fmt::format("nodule size {} must be positive", nodule.size_mm));
  if (nodule.count_in_scan < 1) throw ValidationError("nodule count must be at least 1");
  if (!(participant.age > 0.0)) throw ValidationError(fmt::format("age {} must be positive", participant.age));
  model.validate();
  auto value_of = [&](const std::string& var) -> double {
    if (var == "female") return participant.sex == Sex::Female ? 1.0 : 0.0;
    if (var == "age") return participant.age;
    if (var == "family_history") return participant.family_history ? 1.0 : 0.0;
    if (var == "emphysema") return participant.emphysema ? 1.0 : 0.0;
    if (var == "nodule_size") return nodule.size_mm;
    if (var == "part_solid") return nodule.type == NoduleType::PartSolid ? 1.0 : 0.0;
    if (var == "ground_glass") return nodule.type == NoduleType::GroundGlass ? 1.0 : 0.0;
    if (var == "upper_lobe") return nodule.upper_lobe ? 1.0 : 0.0;
    if (var == "spiculation") return nodule.spiculation ? 1.0 : 0.0;
    return static_cast<double>(nodule.count_in_scan);
  };
  double z = model.intercept;
  for (const auto& t : model.terms) z += t.beta * t.apply(value_of(t.variable));
  return z;
}

double pancan2b_risk(const NoduleInput& nodule, const ParticipantInput& participant,
                     const ModelDefinition& model) {
  return sigmoid(pancan2b_logit(nodule, participant, model));
}

double scan_score(std::span<const double> nodule_risks) {
  if (nodule_risks.empty()) throw ValidationError("scan score needs at least one nodule");
  return *std::max_element(nodule_risks.begin(), nodule_risks.end());
}

IlstBand classify_ilst(double score) {
  if (!(score >= 0.0 && score <= 1.0)) throw ValidationError(fmt::format("score {} outside [0,1]", score));
  return score >= kIlstModerateThreshold ? IlstBand::ModerateOrAbove : IlstBand::BelowModerate;
}

std::string_view band_name(IlstBand band) {
  return band == IlstBand::ModerateOrAbove ? "moderate-or-above" : "below-moderate";
}

}  // namespace fairaudit::pancan
