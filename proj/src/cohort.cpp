#include "fairaudit/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_set>

#include <fmt/format.h>

#include "fairaudit/csv.hpp"
#include "fairaudit/error.hpp"

namespace fairaudit {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool contains(const std::vector<std::string>& v, std::string_view s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::string format_threshold(double t) { return fmt::format("{:g}", t); }

}  // namespace

bool is_missing(const Value& v) noexcept { return std::holds_alternative<std::monostate>(v); }

std::optional<double> as_number(const Value& v) noexcept {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* b = std::get_if<bool>(&v)) return *b ? 1.0 : 0.0;
  return std::nullopt;
}

std::optional<bool> as_bool(const Value& v) noexcept {
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  if (const auto* d = std::get_if<double>(&v)) {
    if (*d == 0.0) return false;
    if (*d == 1.0) return true;
  }
  return std::nullopt;
}

std::string to_string(const Value& v) {
  struct Visitor {
    std::string operator()(std::monostate) const { return {}; }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(double d) const { return csv::format_double(d); }
    std::string operator()(const std::string& s) const { return s; }
  };
  return std::visit(Visitor{}, v);
}

Value parse_value(std::string_view cell) {
  while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.front()))) cell.remove_prefix(1);
  while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.back()))) cell.remove_suffix(1);
  if (cell.empty()) return std::monostate{};
  const std::string l = lower(cell);
  if (l == "true" || l == "yes") return true;
  if (l == "false" || l == "no") return false;
  if (auto d = csv::parse_double(cell); d && std::isfinite(*d)) return *d;
  return std::string(cell);
}

const Value* ScanRecord::lookup(std::string_view name) const {
  if (auto it = attributes.find(std::string(name)); it != attributes.end()) return &it->second;
  if (auto it = risk_factors.find(std::string(name)); it != risk_factors.end()) return &it->second;
  return nullptr;
}

std::optional<double> ScanRecord::score(std::string_view model) const {
  if (auto it = scores.find(std::string(model)); it != scores.end()) return it->second;
  return std::nullopt;
}

Cohort::Cohort(std::vector<ScanRecord> records, Columns columns, Provenance provenance)
    : records_(std::move(records)), columns_(std::move(columns)), provenance_(std::move(provenance)) {
  std::unordered_set<std::string> seen;
  seen.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.label != 0 && r.label != 1)
      throw ValidationError(fmt::format("record {} ({}): label must be 0 or 1", i, r.scan_id));
    for (const auto& [model, s] : r.scores) {
      if (!(s >= 0.0 && s <= 1.0))
        throw ValidationError(fmt::format("record {} ({}): score '{}' = {} outside [0,1]", i,
                                          r.scan_id, model, s));
    }
    if (!seen.insert(r.scan_id).second)
      throw ValidationError(fmt::format("record {}: duplicate scan_id '{}'", i, r.scan_id));
  }
}

bool Cohort::has_model(std::string_view model) const { return contains(columns_.models, model); }

bool Cohort::has_column(std::string_view name) const {
  return contains(columns_.attributes, name) || contains(columns_.risk_factors, name);
}

Cohort::Summary Cohort::summary() const {
  Summary s;
  s.scans = records_.size();
  std::unordered_set<std::string> participants;
  for (const auto& r : records_) {
    participants.insert(r.participant_id);
    (r.label == 1 ? s.malignant : s.benign)++;
  }
  s.participants = participants.size();
  return s;
}

Cohort Cohort::filter(const std::function<bool(const ScanRecord&)>& keep) const {
  Cohort out;
  out.columns_ = columns_;
  out.provenance_ = provenance_;
  for (const auto& r : records_)
    if (keep(r)) out.records_.push_back(r);
  return out;
}

Cohort Cohort::with_attribute(const std::string& name,
                              const std::function<Value(const ScanRecord&)>& compute) const {
  Cohort out = *this;
  if (!contains(out.columns_.attributes, name)) out.columns_.attributes.push_back(name);
  for (auto& r : out.records_) {
    Value v = compute(r);
    if (is_missing(v)) r.attributes.erase(name);
    else r.attributes[name] = std::move(v);
  }
  return out;
}

std::pair<std::vector<double>, std::vector<int>> Cohort::scores_and_labels(
    std::string_view model) const {
  std::pair<std::vector<double>, std::vector<int>> out;
  out.first.reserve(records_.size());
  out.second.reserve(records_.size());
  for (const auto& r : records_) {
    if (auto s = r.score(model)) {
      out.first.push_back(*s);
      out.second.push_back(r.label);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Schema and CSV ingestion

Schema Schema::from_json(const nlohmann::json& j) {
  Schema s;
  if (!j.is_object()) throw ConfigError("", "schema must be a JSON object");
  auto get_string = [&](const char* key, std::string& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_string()) throw ConfigError(std::string("/") + key, "expected a string");
    dst = j[key].get<std::string>();
  };
  auto get_map = [&](const char* key, std::vector<std::pair<std::string, std::string>>& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_object()) throw ConfigError(std::string("/") + key, "expected an object");
    for (const auto& [role, header] : j[key].items()) {
      if (!header.is_string())
        throw ConfigError(fmt::format("/{}/{}", key, role), "expected a header name");
      dst.emplace_back(role, header.get<std::string>());
    }
  };
  if (j.contains("format_version")) {
    if (!j["format_version"].is_number_integer() || j["format_version"].get<int>() != 1)
      throw ConfigError("/format_version", "unsupported schema version");
  }
  get_string("scan_id", s.scan_id);
  get_string("participant_id", s.participant_id);
  get_string("label", s.label);
  get_map("scores", s.scores);
  get_map("attributes", s.attributes);
  get_map("risk_factors", s.risk_factors);
  if (j.contains("use_prefixes")) {
    if (!j["use_prefixes"].is_boolean()) throw ConfigError("/use_prefixes", "expected a boolean");
    s.use_prefixes = j["use_prefixes"].get<bool>();
  }
  return s;
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open schema file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return from_json(j);
}

namespace {

enum class Role { ScanId, ParticipantId, Label, Score, Attribute, RiskFactor, Ignored };

struct ColumnBinding {
  Role role = Role::Ignored;
  std::string name;
};

}  // namespace

Cohort parse_cohort(std::istream& in, const Schema& schema, const std::string& source) {
  csv::Reader reader(in);
  std::vector<std::string> header;
  try {
    if (!reader.next(header)) throw ValidationError(source + ": empty file");
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: line {}: {}", source, reader.line_number(), e.what()));
  }

  std::vector<ColumnBinding> bindings(header.size());
  Cohort::Columns columns;
  auto bind = [&](const std::string& h, Role role, const std::string& name) {
    auto it = std::find(header.begin(), header.end(), h);
    if (it == header.end())
      throw ValidationError(fmt::format("{}: missing column '{}'", source, h));
    bindings[static_cast<std::size_t>(it - header.begin())] = {role, name};
  };
  bind(schema.scan_id, Role::ScanId, "");
  bind(schema.participant_id, Role::ParticipantId, "");
  bind(schema.label, Role::Label, "");
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (bindings[i].role != Role::Ignored || !schema.use_prefixes) continue;
    const std::string& h = header[i];
    if (h.rfind("score:", 0) == 0) bindings[i] = {Role::Score, h.substr(6)};
    else if (h.rfind("attr:", 0) == 0) bindings[i] = {Role::Attribute, h.substr(5)};
    else if (h.rfind("rf:", 0) == 0) bindings[i] = {Role::RiskFactor, h.substr(3)};
  }
  for (const auto& [name, h] : schema.scores) bind(h, Role::Score, name);
  for (const auto& [name, h] : schema.attributes) bind(h, Role::Attribute, name);
  for (const auto& [name, h] : schema.risk_factors) bind(h, Role::RiskFactor, name);
  for (const auto& b : bindings) {
    if (b.role == Role::Score) columns.models.push_back(b.name);
    if (b.role == Role::Attribute) columns.attributes.push_back(b.name);
    if (b.role == Role::RiskFactor) columns.risk_factors.push_back(b.name);
  }
  if (columns.models.empty())
    throw ValidationError(fmt::format("{}: no score columns", source));

  std::vector<ScanRecord> records;
  std::unordered_set<std::string> seen;
  std::vector<std::string> row;
  while (true) {
    try {
      if (!reader.next(row)) break;
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("{}: line {}: {}", source, reader.line_number(), e.what()));
    }
    const auto line = reader.line_number();
    auto fail = [&](const std::string& what) {
      return ValidationError(fmt::format("{}: line {}: {}", source, line, what));
    };
    if (row.size() != header.size())
      throw fail(fmt::format("expected {} fields, found {}", header.size(), row.size()));
    ScanRecord r;
    for (std::size_t i = 0; i < row.size(); ++i) {
      const auto& b = bindings[i];
      const std::string& cell = row[i];
      switch (b.role) {
        case Role::ScanId:
          if (cell.empty()) throw fail("empty scan_id");
          r.scan_id = cell;
          break;
        case Role::ParticipantId:
          r.participant_id = cell;
          break;
        case Role::Label: {
          auto v = csv::parse_double(cell);
          if (!v || (*v != 0.0 && *v != 1.0)) throw fail(fmt::format("label '{}' is not 0 or 1", cell));
          r.label = static_cast<int>(*v);
          break;
        }
        case Role::Score: {
          if (cell.empty()) break;
          auto v = csv::parse_double(cell);
          if (!v) throw fail(fmt::format("score '{}' = '{}' is not numeric", b.name, cell));
          if (!(*v >= 0.0 && *v <= 1.0))
            throw fail(fmt::format("score '{}' = {} outside [0,1]", b.name, cell));
          r.scores[b.name] = *v;
          break;
        }
        case Role::Attribute:
        case Role::RiskFactor: {
          // Empty cells stay absent so missing reads the same before and after a round trip.
          Value v = parse_value(cell);
          if (!is_missing(v)) (b.role == Role::Attribute ? r.attributes : r.risk_factors)[b.name] = std::move(v);
          break;
        }
        case Role::Ignored:
          break;
      }
    }
    if (!seen.insert(r.scan_id).second) throw fail(fmt::format("duplicate scan_id '{}'", r.scan_id));
    records.push_back(std::move(r));
  }
  return Cohort(std::move(records), std::move(columns), Provenance{source, schema.version});
}

Cohort load_cohort(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open cohort file " + path.string());
  return parse_cohort(in, schema, path.string());
}

void write_cohort(const Cohort& cohort, std::ostream& out) {
  const auto& cols = cohort.columns();
  std::vector<std::string> header = {"scan_id", "participant_id", "label"};
  for (const auto& m : cols.models) header.push_back("score:" + m);
  for (const auto& a : cols.attributes) header.push_back("attr:" + a);
  for (const auto& f : cols.risk_factors) header.push_back("rf:" + f);
  out << csv::join_row(header) << '\n';
  std::vector<std::string> row;
  for (const auto& r : cohort.records()) {
    row.clear();
    row.push_back(r.scan_id);
    row.push_back(r.participant_id);
    row.push_back(r.label ? "1" : "0");
    for (const auto& m : cols.models) {
      auto s = r.score(m);
      row.push_back(s ? csv::format_double(*s) : "");
    }
    for (const auto& a : cols.attributes) {
      auto it = r.attributes.find(a);
      row.push_back(it == r.attributes.end() ? "" : to_string(it->second));
    }
    for (const auto& f : cols.risk_factors) {
      auto it = r.risk_factors.find(f);
      row.push_back(it == r.risk_factors.end() ? "" : to_string(it->second));
    }
    out << csv::join_row(row) << '\n';
  }
}

// ---------------------------------------------------------------------------
// BMI

double derive_bmi(double weight_lb, double height_in) {
  if (!(weight_lb > 0.0) || !(height_in > 0.0))
    throw ValidationError(
        fmt::format("BMI needs positive weight and height (got {} lb, {} in)", weight_lb, height_in));
  return 703.0 * weight_lb / (height_in * height_in);
}

Cohort with_bmi(const Cohort& cohort, const std::string& weight, const std::string& height,
                const std::string& out) {
  return cohort.with_attribute(out, [&](const ScanRecord& r) -> Value {
    const Value* w = r.lookup(weight);
    const Value* h = r.lookup(height);
    if (!w || !h) return std::monostate{};
    auto wv = as_number(*w);
    auto hv = as_number(*h);
    if (!wv || !hv || *wv <= 0.0 || *hv <= 0.0) return std::monostate{};
    return derive_bmi(*wv, *hv);
  });
}

// ---------------------------------------------------------------------------
// Split rules

const std::string& SplitRule::attribute() const {
  return std::visit([](const auto& k) -> const std::string& { return k.attribute; }, kind);
}

Side assign(const SplitRule& rule, const ScanRecord& record) {
  const Value* v = record.lookup(rule.attribute());
  if (!v || is_missing(*v)) return Side::Excluded;
  if (const auto* cat = std::get_if<CategoricalPair>(&rule.kind)) {
    const std::string s = to_string(*v);
    if (contains(cat->values_a, s)) return Side::A;
    if (contains(cat->values_b, s)) return Side::B;
    return Side::Excluded;
  }
  if (const auto* num = std::get_if<NumericThreshold>(&rule.kind)) {
    auto x = as_number(*v);
    if (!x)
      throw ValidationError(fmt::format("scan '{}': attribute '{}' = '{}' is not numeric",
                                        record.scan_id, num->attribute, to_string(*v)));
    const bool low = num->boundary == Boundary::LowInclusive ? *x <= num->threshold
                                                             : *x < num->threshold;
    return low == num->a_is_low ? Side::A : Side::B;
  }
  throw ComputeError("split rule '" + rule.name + "' must be resolved against a cohort first");
}

double median(std::vector<double> values) {
  if (values.empty()) throw ComputeError("median of an empty set");
  const auto n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

SplitRule median_split(const Cohort& cohort, const std::string& attribute, bool a_is_low) {
  if (!cohort.has_column(attribute))
    throw ValidationError("unknown attribute '" + attribute + "'");
  std::vector<double> values;
  for (const auto& r : cohort.records()) {
    const Value* v = r.lookup(attribute);
    if (!v || is_missing(*v)) continue;
    auto x = as_number(*v);
    if (!x)
      throw ValidationError(fmt::format("scan '{}': attribute '{}' = '{}' is not numeric",
                                        r.scan_id, attribute, to_string(*v)));
    values.push_back(*x);
  }
  if (values.empty())
    throw ComputeError("attribute '" + attribute + "' has no non-missing values");
  const double m = median(std::move(values));
  SplitRule rule;
  rule.name = attribute;
  rule.kind = NumericThreshold{attribute, m, Boundary::LowInclusive, a_is_low};
  const std::string low = "≤ " + format_threshold(m);
  const std::string high = "> " + format_threshold(m);
  rule.label_a = a_is_low ? low : high;
  rule.label_b = a_is_low ? high : low;
  return rule;
}

SplitRule resolve(const SplitRule& rule, const Cohort& cohort) {
  if (const auto* med = std::get_if<MedianSplit>(&rule.kind)) {
    SplitRule out = median_split(cohort, med->attribute, med->a_is_low);
    out.name = rule.name;
    return out;
  }
  return rule;
}

Partition partition(const Cohort& cohort, const SplitRule& rule) {
  if (!cohort.has_column(rule.attribute()))
    throw ValidationError("unknown attribute '" + rule.attribute() + "' in split '" + rule.name + "'");
  const SplitRule resolved = resolve(rule, cohort);
  Partition p;
  std::vector<Side> sides;
  sides.reserve(cohort.size());
  for (const auto& r : cohort.records()) sides.push_back(assign(resolved, r));
  std::size_t i = 0;
  p.a = cohort.filter([&](const ScanRecord&) { return sides[i++] == Side::A; });
  i = 0;
  p.b = cohort.filter([&](const ScanRecord&) { return sides[i++] == Side::B; });
  p.excluded = static_cast<std::size_t>(std::count(sides.begin(), sides.end(), Side::Excluded));
  return p;
}

std::vector<SplitRule> builtin_rules() {
  std::vector<SplitRule> rules;
  rules.push_back({"sex", CategoricalPair{"sex", {"Male"}, {"Female"}}, "Male", "Female"});
  rules.push_back({"race", CategoricalPair{"race", {"White"}, {"Black"}}, "White", "Black"});
  rules.push_back({"age", MedianSplit{"age", false}, "", ""});
  rules.push_back({"height", MedianSplit{"height", true}, "", ""});
  rules.push_back({"weight", MedianSplit{"weight", true}, "", ""});
  rules.push_back({"bmi", NumericThreshold{"bmi", 25.0, Boundary::HighInclusive, false}, "≥ 25", "< 25"});
  rules.push_back({"education",
                   CategoricalPair{"education",
                                   {"HS Graduate / GED", "Post-HS training", "Associate Degree",
                                    "Bachelors Degree", "Graduate School"},
                                   {"8th grade or less", "9th-11th grade"}},
                   "≥ HS", "< HS"});
  rules.push_back({"nodule_count", NumericThreshold{"nodule_count", 1.0, Boundary::LowInclusive, true},
                   "1", ">1"});
  return rules;
}

std::optional<SplitRule> find_builtin_rule(std::string_view name) {
  for (auto& r : builtin_rules())
    if (r.name == name) return r;
  return std::nullopt;
}

}  // namespace fairaudit
