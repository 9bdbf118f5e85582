#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

namespace fairaudit {

// A cell value: missing, boolean, numeric or categorical.
using Value = std::variant<std::monostate, bool, double, std::string>;

bool is_missing(const Value& v) noexcept;
// Numeric view; booleans map to 0/1, strings and missing to nullopt.
std::optional<double> as_number(const Value& v) noexcept;
// Boolean view; numbers 0/1 are accepted, anything else is nullopt.
std::optional<bool> as_bool(const Value& v) noexcept;
std::string to_string(const Value& v);
// Empty -> missing; true/false/yes/no -> bool; numeric -> double; else string.
Value parse_value(std::string_view cell);

struct ScanRecord {
  std::string scan_id;
  std::string participant_id;
  int label = 0;  // 1 = malignant, 0 = benign
  std::map<std::string, double> scores;
  std::map<std::string, Value> attributes;
  std::map<std::string, Value> risk_factors;

  // Attribute first, then risk factor; nullptr when the record has neither.
  const Value* lookup(std::string_view name) const;
  std::optional<double> score(std::string_view model) const;

  bool operator==(const ScanRecord&) const = default;
};

struct Provenance {
  std::string source;
  int schema_version = 1;

  bool operator==(const Provenance&) const = default;
};

/// An ordered, validated collection of scans. Immutable once built: every
/// operation that narrows a cohort returns a new one that keeps the column
/// declarations of its parent, so "column absent" and "all cells empty"
/// stay distinguishable in subsets.
class Cohort {
 public:
  struct Columns {
    std::vector<std::string> models;
    std::vector<std::string> attributes;
    std::vector<std::string> risk_factors;

    bool operator==(const Columns&) const = default;
  };

  struct Summary {
    std::size_t scans = 0;
    std::size_t participants = 0;
    std::size_t malignant = 0;
    std::size_t benign = 0;
  };

  Cohort() = default;
  // Validates labels, score ranges and scan_id uniqueness.
  Cohort(std::vector<ScanRecord> records, Columns columns, Provenance provenance = {});

  const std::vector<ScanRecord>& records() const noexcept { return records_; }
  const Columns& columns() const noexcept { return columns_; }
  const Provenance& provenance() const noexcept { return provenance_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  bool has_model(std::string_view model) const;
  // True when `name` is a declared attribute or risk-factor column.
  bool has_column(std::string_view name) const;

  Summary summary() const;

  Cohort filter(const std::function<bool(const ScanRecord&)>& keep) const;
  Cohort with_attribute(const std::string& name,
                        const std::function<Value(const ScanRecord&)>& compute) const;

  // (scores, labels) for every record carrying a score for `model`.
  std::pair<std::vector<double>, std::vector<int>> scores_and_labels(std::string_view model) const;

  bool operator==(const Cohort&) const = default;

 private:
  std::vector<ScanRecord> records_;
  Columns columns_;
  Provenance provenance_;
};

/// Maps CSV headers onto record roles. With `use_prefixes`, any header of the
/// form `score:<model>`, `attr:<name>` or `rf:<name>` is picked up
/// automatically; explicit mappings (role name -> header) are added on top.
struct Schema {
  std::string scan_id = "scan_id";
  std::string participant_id = "participant_id";
  std::string label = "label";
  std::vector<std::pair<std::string, std::string>> scores;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<std::pair<std::string, std::string>> risk_factors;
  bool use_prefixes = true;
  int version = 1;

  static Schema from_json(const nlohmann::json& j);
  static Schema load(const std::filesystem::path& path);
};

Cohort load_cohort(const std::filesystem::path& path, const Schema& schema = {});
Cohort parse_cohort(std::istream& in, const Schema& schema, const std::string& source);
// Canonical prefixed CSV; load_cohort(write_cohort(c)) == c up to provenance.
void write_cohort(const Cohort& cohort, std::ostream& out);

// BMI in kg/m^2 from pounds and inches.
double derive_bmi(double weight_lb, double height_in);
// Adds a `bmi` attribute wherever weight and height are both present.
Cohort with_bmi(const Cohort& cohort, const std::string& weight = "weight",
                const std::string& height = "height", const std::string& out = "bmi");

// Which side of the threshold takes values equal to it.
enum class Boundary { LowInclusive, HighInclusive };

struct CategoricalPair {
  std::string attribute;
  std::vector<std::string> values_a;
  std::vector<std::string> values_b;
};

struct NumericThreshold {
  std::string attribute;
  double threshold = 0.0;
  Boundary boundary = Boundary::LowInclusive;
  bool a_is_low = true;
};

// Resolved against a cohort into a NumericThreshold at its median.
struct MedianSplit {
  std::string attribute;
  bool a_is_low = true;
};

struct SplitRule {
  std::string name;
  std::variant<CategoricalPair, NumericThreshold, MedianSplit> kind;
  std::string label_a;
  std::string label_b;

  const std::string& attribute() const;
  bool resolved() const noexcept { return !std::holds_alternative<MedianSplit>(kind); }
};

enum class Side { A, B, Excluded };

// Requires a resolved rule. Missing values are Excluded.
Side assign(const SplitRule& rule, const ScanRecord& record);

double median(std::vector<double> values);
SplitRule median_split(const Cohort& cohort, const std::string& attribute, bool a_is_low = true);
// MedianSplit -> NumericThreshold at the cohort median; other kinds unchanged.
SplitRule resolve(const SplitRule& rule, const Cohort& cohort);

struct Partition {
  Cohort a;
  Cohort b;
  std::size_t excluded = 0;
};

Partition partition(const Cohort& cohort, const SplitRule& rule);

// sex, race, age, height, weight, bmi, education, nodule_count.
std::vector<SplitRule> builtin_rules();
std::optional<SplitRule> find_builtin_rule(std::string_view name);

}  // namespace fairaudit
