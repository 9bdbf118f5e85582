#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fairaudit/cohort.hpp"
#include "fairaudit/metrics.hpp"
#include "fairaudit/stats.hpp"

namespace fairaudit {

struct AuditOptions {
  double alpha = 0.05;
  BootstrapOptions bootstrap;
  OverlapConvention convention = OverlapConvention::Reference;
  // Stage-2 subsets need at least this many positives and negatives per group.
  std::size_t min_class_count = 2;
  // A subset gap counts as reduced when |gap| < |stage-1 gap| - margin.
  double reduction_margin = 0.0;
  std::size_t top_k = 10;
};

struct GroupCounts {
  std::size_t records = 0;
  std::size_t n_pos = 0;  // scored positives
  std::size_t n_neg = 0;  // scored negatives
};

struct DisparitySignal {
  std::string model;
  SplitRule split;  // resolved
  MetricKind metric = MetricKind::Auroc;
  std::optional<OperatingPoint> operating_point;  // none for AUROC
  IntervalEstimate value_a;
  IntervalEstimate value_b;
  GroupCounts counts_a;
  GroupCounts counts_b;
  std::optional<AurocComparison> comparison;  // AUROC evidence
  std::optional<OverlapClass> overlap;        // sensitivity / specificity evidence
  bool disparity_found = false;

  double gap() const noexcept { return value_a.point - value_b.point; }
  // "model=X/split=Y/metric=Z[/policy=P]"
  std::string context() const;
};

// The signal rule as a pure function of the serialized evidence.
bool signal_fires(MetricKind metric, const std::optional<AurocComparison>& comparison,
                  const std::optional<OverlapClass>& overlap, double alpha);

std::vector<OperatingPoint> resolve_operating_points(const Cohort& cohort, const std::string& model,
                                                     std::span<const Policy> policies);

/// One AUROC signal followed by a sensitivity and a specificity signal per
/// operating point, in that order. Thresholds must already be resolved on
/// the overall cohort. Throws ComputeError naming the group when either
/// subgroup is empty or single-class.
std::vector<DisparitySignal> stage1(const Cohort& cohort, const std::string& model, const SplitRule& split,
                                    std::span<const OperatingPoint> operating_points,
                                    const AuditOptions& options);

enum class FactorBinning { Auto, Boolean, Median, Threshold };

struct FactorSpec {
  std::string name;
  FactorBinning binning = FactorBinning::Auto;
  double threshold = 0.0;  // Threshold binning only
};

/// A factor reduced to present/absent/missing. Numeric factors are present
/// when the value exceeds `threshold`.
struct BinnedFactor {
  std::string name;
  bool numeric = false;
  double threshold = 0.0;

  std::optional<bool> present(const ScanRecord& record) const;
  // "present" or "> 68".
  std::string present_label() const;
};

/// Auto binning: boolean (or 0/1) columns as-is, nodule_count at "> 1",
/// other numeric columns at the overall median.
BinnedFactor bin_factor(const Cohort& overall, const FactorSpec& spec);

struct PrevalenceDisparity {
  std::string factor;
  std::string present_label;
  double pct_a = 0.0;
  double pct_b = 0.0;
  double gap = 0.0;
  std::size_t n_a = 0;  // non-missing records
  std::size_t n_b = 0;
};

struct PrevalenceResult {
  std::vector<PrevalenceDisparity> ranking;
  std::vector<std::string> warnings;
};

// Sorted by gap descending, then factor name. Factors missing for an entire
// subgroup are dropped with a warning.
PrevalenceResult prevalence_disparities(const Cohort& cohort, const SplitRule& split,
                                        std::span<const BinnedFactor> factors);

enum class Verdict { NotConfounded, PotentialConfounder, Indeterminate };

std::string_view verdict_name(Verdict v);

struct SubsetEvaluation {
  GroupCounts counts_a;
  GroupCounts counts_b;
  // Absent when either group is below the minimum class count.
  std::optional<DisparitySignal> signal;
};

struct ConfounderAssessment {
  BinnedFactor factor;
  SubsetEvaluation present;
  SubsetEvaluation absent;
  std::size_t missing_a = 0;
  std::size_t missing_b = 0;
  Verdict verdict = Verdict::Indeterminate;
  // "insufficient-data", "not-reduced" or "reversed" when Indeterminate.
  std::string reason;
};

/// Persisted: significant in the stage-1 direction. NotConfounded when the
/// disparity persists in either subset; PotentialConfounder when neither
/// subset is significant and both gaps are reduced.
void assign_verdict(ConfounderAssessment& assessment, const DisparitySignal& stage1_signal,
                    const AuditOptions& options);

std::vector<ConfounderAssessment> stage2(const Cohort& cohort, const DisparitySignal& signal,
                                         std::span<const BinnedFactor> factors, const AuditOptions& options);

enum class Outcome { NoDisparity, UnexplainedDisparity, ConfoundedBy, Inconclusive };

std::string_view outcome_name(Outcome o);

struct AuditFinding {
  DisparitySignal signal;
  std::vector<ConfounderAssessment> assessments;
  Outcome outcome = Outcome::NoDisparity;
  std::vector<std::string> confounders;
  // Left blank for the reviewer's fairness judgment.
  std::string human_annotation;
};

Outcome classify_outcome(const DisparitySignal& signal, std::span<const ConfounderAssessment> assessments);

struct AuditConfig {
  std::filesystem::path cohort_path;
  // Set instead of cohort_path when the config names a synthetic scenario.
  std::optional<std::filesystem::path> scenario_path;
  std::optional<Schema> schema;
  std::vector<std::string> models;
  std::vector<SplitRule> splits;
  std::vector<Policy> policies;
  std::vector<FactorSpec> factors;
  AuditOptions options;
  // Add a bmi attribute from weight and height when the cohort lacks one.
  bool derive_bmi = true;

  // Relative cohort/schema paths resolve against `base_dir`. Throws
  // ConfigError with a JSON pointer.
  static AuditConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static AuditConfig load(const std::filesystem::path& path);
};

struct SplitSummary {
  SplitRule rule;  // resolved
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  std::size_t excluded = 0;
  std::vector<PrevalenceDisparity> prevalence;
};

struct AuditReport {
  static constexpr int kFormatVersion = 1;

  std::string cohort_source;
  Cohort::Summary cohort;
  AuditOptions options;
  std::vector<std::string> models;
  std::vector<Policy> policies;
  std::map<std::string, std::vector<OperatingPoint>> operating_points;
  std::vector<SplitSummary> splits;
  std::vector<AuditFinding> findings;
  std::vector<std::string> warnings;
};

AuditReport run_audit(const AuditConfig& config, const Cohort& cohort);
// Loads (or generates) the cohort named in the config.
AuditReport run_audit(const AuditConfig& config);

// Reference-group first reading of a split, e.g. "Male vs Female".
std::string split_title(const SplitRule& rule);

}  // namespace fairaudit
