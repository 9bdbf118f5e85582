#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fairaudit {

// Mann-Whitney AUROC with half credit for ties. Throws ComputeError when
// either class is absent.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Points are ordered by ascending threshold: the lowest observed score gives
/// (1, 1) and the +inf sentinel gives (0, 0).
struct RocCurve {
  std::vector<RocPoint> points;
  double auroc = 0.0;

  double trapezoid_area() const;
};

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);
// `threshold,fpr,tpr` with a format_version preamble.
void write_roc_csv(const RocCurve& curve, std::ostream& out);

// Absent when the corresponding class is empty.
struct SensSpec {
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

// Positive iff score >= threshold. Throws when both classes are empty.
SensSpec sens_spec_at(std::span<const double> scores, std::span<const int> labels, double threshold);

enum class PolicyKind { TargetSensitivity, TargetSpecificity, FixedThreshold };

struct Policy {
  PolicyKind kind = PolicyKind::FixedThreshold;
  double value = 0.0;

  static Policy target_sensitivity(double level) { return {PolicyKind::TargetSensitivity, level}; }
  static Policy target_specificity(double level) { return {PolicyKind::TargetSpecificity, level}; }
  static Policy fixed(double threshold) { return {PolicyKind::FixedThreshold, threshold}; }

  // "sensitivity:0.9", "specificity:0.9", "fixed:0.06".
  static Policy parse(std::string_view text);
  std::string key() const;
  // Human-readable column label, e.g. "90% Overall Sensitivity".
  std::string label() const;

  bool operator==(const Policy&) const = default;
};

struct OperatingPoint {
  Policy policy;
  double threshold = 0.0;
};

/// Candidates are the observed scores. A sensitivity target picks the
/// largest candidate that still reaches it (maximising specificity); a
/// specificity target picks the smallest (maximising sensitivity).
OperatingPoint resolve_threshold(std::span<const double> scores, std::span<const int> labels,
                                 const Policy& policy);

enum class MetricKind { Auroc, Sensitivity, Specificity };

struct Metric {
  MetricKind kind = MetricKind::Auroc;
  double threshold = 0.0;  // unused for AUROC

  static Metric auroc() { return {MetricKind::Auroc, 0.0}; }
  static Metric sensitivity(double t) { return {MetricKind::Sensitivity, t}; }
  static Metric specificity(double t) { return {MetricKind::Specificity, t}; }
};

std::string_view metric_name(MetricKind kind);

// nullopt when the metric is undefined on the sample.
std::optional<double> evaluate(const Metric& metric, std::span<const double> scores,
                               std::span<const int> labels);

struct BootstrapOptions {
  int n_resamples = 1000;
  std::uint64_t seed = 0;
  double level = 0.95;
  // Resample positives and negatives separately, preserving class counts.
  bool stratified = true;
  // Worker threads; the result does not depend on this.
  unsigned workers = 1;
};

struct IntervalEstimate {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  int n_resamples = 0;
  int n_defined = 0;
  std::uint64_t seed = 0;

  bool operator==(const IntervalEstimate&) const = default;
};

/// Percentile bootstrap interval. Resample i draws from an engine seeded by
/// derive_seed(seed, i), so the output is independent of scheduling. Throws
/// ComputeError when the metric is undefined on the full sample or on more
/// than half of the resamples.
IntervalEstimate bootstrap_ci(const Metric& metric, std::span<const double> scores,
                              std::span<const int> labels, const BootstrapOptions& options);

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);
std::uint64_t derive_seed(std::uint64_t master, std::string_view context);

// Linear-interpolation quantile (R type 7) of an ascending-sorted sample.
double quantile_sorted(std::span<const double> sorted, double q);

}  // namespace fairaudit
