#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "fairaudit/metrics.hpp"

namespace fairaudit {

// Standard normal CDF via std::erfc.
double normal_cdf(double x);
// P(|Z| >= |z|), computed without cancellation in the tails.
double two_tailed_p(double z);

// Hanley & McNeil (1982) standard error of an AUROC estimate from class counts.
double hanley_mcneil_se(double auc, std::size_t n_pos, std::size_t n_neg);

struct AurocGroup {
  double auc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

struct AurocComparison {
  double auroc_a = 0.0;
  double auroc_b = 0.0;
  double se_a = 0.0;
  double se_b = 0.0;
  double z = 0.0;
  double p = 1.0;
  double alpha = 0.05;
  // Both SEs are zero while the AUROCs differ; p is set to 0.
  bool degenerate = false;

  bool significant() const noexcept { return p < alpha; }
};

// Two-tailed z-test for AUROCs of two independent samples.
AurocComparison compare_auroc(const AurocGroup& a, const AurocGroup& b, double alpha = 0.05);

enum class OverlapClass { Overlapping, OneOutside, Disjoint };

/// How the single-asterisk case is decided once the intervals intersect.
///   Reference: the first interval's point estimate lies outside the second
///              interval, so the comparison group is judged against the
///              reference group listed first.
///   Symmetric: either point estimate lies outside the other interval.
enum class OverlapConvention { Reference, Symmetric };

// Disjoint iff a.hi < b.lo or b.hi < a.lo, under either convention.
OverlapClass classify_overlap(const IntervalEstimate& a, const IntervalEstimate& b,
                              OverlapConvention convention = OverlapConvention::Reference);

std::string_view overlap_name(OverlapClass c);
// "**" for Disjoint, "*" for OneOutside, "" otherwise.
std::string_view asterisks(OverlapClass c);

// Two significant figures without the leading zero (".14", ".0013"),
// floored to "< .001".
std::string format_p(double p);

}  // namespace fairaudit
